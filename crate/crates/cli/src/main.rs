fn main() -> std::process::ExitCode {
    stem_twin_cli::entry()
}
