//! One function per subcommand.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stem_twin::design::{
    self, grid_sweep, linspace, refine, write_sweep_csv, DesignContext, DesignPoint, SweepRanges,
};
use stem_twin::electromech::{
    current_response, freq_sweep, frequency_response, simulate_with, step_metrics, thermal_sim,
    CalibrationTargets, DriveSignal, Mode, SimOptions, SweepOptions, MAX_DRIVE_VOLTAGE,
    MOVING_MASS_BOUNDS,
};
use stem_twin::magnetics::coil_field;
use stem_twin::pipeline_io::{
    decode_stream, encode_frame, frames_from_volts, parse_pose_stream, simulated_device,
    write_trace_file, DeviceConfig, DeviceFrame,
};
use stem_twin::renderer::{RendererConfig, Scene};
use stem_twin::replay::{pose_ticks, replay as run_replay};

use crate::config::{at_least, pick, pick_opt, positive, usage, CliError, KvFile, Result};
use crate::params::ParamSet;
use crate::plot::{line_chart, Series};
use crate::table::Table;
use crate::{
    CalibrateArgs, EchoArgs, FieldArgs, FreqArgs, GridArgs, OptimizeArgs, ReplayArgs,
    SimulateArgs, SweepArgs, ThermalArgs,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Waveform {
    Step,
    Sine,
    Ramp,
    Impulse,
    Zero,
}

impl FromStr for Waveform {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "step" => Waveform::Step,
            "sine" => Waveform::Sine,
            "ramp" => Waveform::Ramp,
            "impulse" => Waveform::Impulse,
            "zero" => Waveform::Zero,
            other => {
                return Err(format!(
                    "unknown waveform `{other}` (expected step|sine|ramp|impulse|zero)"
                ))
            }
        })
    }
}

fn drive_volts(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v.abs() <= MAX_DRIVE_VOLTAGE {
        Ok(v)
    } else {
        usage(format!("invalid {name} {v}: must be within ±{MAX_DRIVE_VOLTAGE} V"))
    }
}

fn required(flag: Option<PathBuf>, cfg: &KvFile, key: &str) -> Result<PathBuf> {
    pick_opt(flag, cfg, key)?.ok_or_else(|| CliError::Usage(format!("--{key} is required")))
}

fn maybe_plot(path: Option<&Path>, title: &str, x: &str, y: &str, series: &[Series]) -> Result<()> {
    if let Some(p) = path {
        line_chart(p, title, x, y, series)?;
        println!("plot: {}", p.display());
    }
    Ok(())
}

pub fn field(a: FieldArgs, cfg: &KvFile) -> Result<()> {
    cfg.reject_unknown(&["current", "r-max", "z-half", "nr", "nz", "out", "plot"])?;
    let current = pick(a.current, cfg, "current", 0.35)?;
    let r_max = positive("r-max", pick(a.r_max, cfg, "r-max", 8e-3)?)?;
    let z_half = positive("z-half", pick(a.z_half, cfg, "z-half", 6e-3)?)?;
    let nr = at_least("nr", pick(a.nr, cfg, "nr", 33)?, 2)?;
    let nz = at_least("nz", pick(a.nz, cfg, "nz", 49)?, 2)?;
    let out = pick(a.out, cfg, "out", PathBuf::from("field.csv"))?;
    let plot = pick_opt(a.plot, cfg, "plot")?;
    if !current.is_finite() {
        return usage("current must be finite");
    }

    let (coil, _) = DesignContext::default().build(&DesignPoint::reference())?;
    let mut t = Table::new(&["r_m", "z_m", "B_r_T", "B_z_T"]);
    let mut axis = Vec::new();
    for r in linspace(0.0, r_max, nr) {
        for z in linspace(-z_half, z_half, nz) {
            let b = coil_field(&coil, current, r, z)?;
            if r == 0.0 {
                axis.push((z * 1e3, b.b_z * 1e3));
            }
            t.push(vec![r, z, b.b_r, b.b_z]);
        }
    }
    t.write(&out)?;
    println!(
        "coil: r_in {:.2} mm, width {:.2} mm, {} turns; {} points -> {}",
        coil.inner_radius * 1e3,
        coil.width * 1e3,
        coil.turns,
        t.rows.len(),
        out.display()
    );
    maybe_plot(
        plot.as_deref(),
        "On-axis field",
        "z (mm)",
        "B_z (mT)",
        &[Series::new("B_z", axis)],
    )
}

const GRID_KEYS: [&str; 7] = ["h-min", "h-max", "w-min", "w-max", "h-steps", "w-steps", "volts"];

fn grid_setup(g: &GridArgs, cfg: &KvFile) -> Result<(SweepRanges, (usize, usize), DesignContext)> {
    let def = SweepRanges::default();
    let h0 = positive("h-min", pick(g.h_min, cfg, "h-min", def.h_mag.0 * 1e3)?)?;
    let h1 = positive("h-max", pick(g.h_max, cfg, "h-max", def.h_mag.1 * 1e3)?)?;
    let w0 = positive("w-min", pick(g.w_min, cfg, "w-min", def.w_coil.0 * 1e3)?)?;
    let w1 = positive("w-max", pick(g.w_max, cfg, "w-max", def.w_coil.1 * 1e3)?)?;
    if h1 <= h0 || w1 <= w0 {
        return usage("sweep ranges need min < max");
    }
    let steps = (
        at_least("h-steps", pick(g.h_steps, cfg, "h-steps", design::DEFAULT_STEPS.0)?, 2)?,
        at_least("w-steps", pick(g.w_steps, cfg, "w-steps", design::DEFAULT_STEPS.1)?, 2)?,
    );
    let volts = positive("volts", pick(g.volts, cfg, "volts", design::DEFAULT_DRIVE_VOLTAGE)?)?;
    let ranges = SweepRanges {
        h_mag: (h0 * 1e-3, h1 * 1e-3),
        w_coil: (w0 * 1e-3, w1 * 1e-3),
    };
    let ctx = DesignContext {
        drive_voltage: volts,
        ..DesignContext::default()
    };
    Ok((ranges, steps, ctx))
}

pub fn sweep(a: SweepArgs, cfg: &KvFile) -> Result<()> {
    let keys: Vec<&str> = GRID_KEYS.iter().copied().chain(["out", "plot"]).collect();
    cfg.reject_unknown(&keys)?;
    let (ranges, steps, ctx) = grid_setup(&a.grid, cfg)?;
    let out = pick(a.out, cfg, "out", PathBuf::from("sweep.csv"))?;
    let plot = pick_opt(a.plot, cfg, "plot")?;

    let res = grid_sweep(&ranges, steps, &ctx)?;
    write_sweep_csv(fs::File::create(&out)?, &res.rows)?;
    let b = &res.best;
    println!(
        "{} feasible of {} cells -> {}",
        res.rows.len(),
        steps.0 * steps.1,
        out.display()
    );
    println!(
        "best: h_mag {:.3} mm, w_coil {:.3} mm, F {:.4} N, P {:.4} W, m {:.3e} kg, objective {:.4}",
        b.point.h_mag * 1e3,
        b.point.w_coil * 1e3,
        b.force,
        b.power,
        b.magnet_mass,
        b.objective
    );

    let mut series: Vec<Series> = Vec::new();
    for e in &res.rows {
        let name = format!("h = {:.2} mm", e.point.h_mag * 1e3);
        match series.last_mut() {
            Some(s) if s.name == name => s.points.push((e.point.w_coil * 1e3, e.objective)),
            _ => series.push(Series::new(name, vec![(e.point.w_coil * 1e3, e.objective)])),
        }
    }
    maybe_plot(
        plot.as_deref(),
        "Design objective F / sqrt(P m)",
        "coil width (mm)",
        "objective",
        &series,
    )
}

pub fn optimize(a: OptimizeArgs, cfg: &KvFile) -> Result<()> {
    let keys: Vec<&str> = GRID_KEYS.iter().copied().chain(["out"]).collect();
    cfg.reject_unknown(&keys)?;
    let (ranges, steps, ctx) = grid_setup(&a.grid, cfg)?;
    let out = pick(a.out, cfg, "out", PathBuf::from("optimize.txt"))?;

    let res = grid_sweep(&ranges, steps, &ctx)?;
    let point = refine(&res.best.point, &ctx)?;
    let e = design::evaluate_objective(&point, &ctx)?;
    let text = format!(
        "# grid argmax and its simplex refinement\n\
         grid_h_mag_mm = {:?}\ngrid_w_coil_mm = {:?}\ngrid_objective = {:?}\n\
         h_mag_mm = {:?}\nw_coil_mm = {:?}\nforce_n = {:?}\npower_w = {:?}\n\
         magnet_mass_kg = {:?}\nobjective = {:?}\n",
        res.best.point.h_mag * 1e3,
        res.best.point.w_coil * 1e3,
        res.best.objective,
        point.h_mag * 1e3,
        point.w_coil * 1e3,
        e.force,
        e.power,
        e.magnet_mass,
        e.objective
    );
    fs::write(&out, text)?;
    println!(
        "grid best h_mag {:.3} mm, w_coil {:.3} mm, objective {:.4}",
        res.best.point.h_mag * 1e3,
        res.best.point.w_coil * 1e3,
        res.best.objective
    );
    println!(
        "refined  h_mag {:.3} mm, w_coil {:.3} mm, objective {:.4} -> {}",
        point.h_mag * 1e3,
        point.w_coil * 1e3,
        e.objective,
        out.display()
    );
    Ok(())
}

pub fn calibrate(a: CalibrateArgs, cfg: &KvFile) -> Result<()> {
    cfg.reject_unknown(&["no-t90", "moving-mass", "out"])?;
    let no_t90 = a.no_t90 || cfg.get::<bool>("no-t90")?.unwrap_or(false);
    let mut targets = if no_t90 {
        CalibrationTargets::bench_without_t90()
    } else {
        CalibrationTargets::bench()
    };
    if let Some(m) = pick_opt(a.moving_mass, cfg, "moving-mass")? {
        let (lo, hi) = MOVING_MASS_BOUNDS;
        if !(lo..=hi).contains(&m) {
            return usage(format!("invalid moving-mass {m}: must be within [{lo}, {hi}] kg"));
        }
        targets.moving_mass = m;
    }
    let out = pick(a.out, cfg, "out", PathBuf::from("params.txt"))?;

    let (set, report) = ParamSet::calibrated(&targets)?;
    fs::write(&out, set.to_text())?;
    println!("{:<20} {:>12} {:>12} {:>9}", "residual", "target", "achieved", "rel");
    for r in &report.residuals {
        println!(
            "{:<20} {:>12.5e} {:>12.5e} {:>+9.3}%",
            r.name,
            r.target,
            r.achieved,
            100.0 * r.relative()
        );
    }
    let p = &set.lumped;
    println!(
        "R {:.4} ohm, L {:.4e} H, Km {:.4} N/A (blocked {:.4} N/A), k {:.1} N/m, c {:.4e} N s/m, k_contact {:.1} N/m",
        p.r_ohm, p.l_h, p.km, report.blocked_force_constant, p.k, p.c, p.k_contact
    );
    println!(
        "R_th {:.1} K/W, C_th {:.4e} J/K -> {}",
        set.thermal.r_th,
        set.thermal.c_th,
        out.display()
    );
    Ok(())
}

pub fn simulate(a: SimulateArgs, cfg: &KvFile) -> Result<()> {
    cfg.reject_unknown(&[
        "params", "mode", "waveform", "volts", "freq", "width", "duration", "dt", "stride", "out",
        "plot",
    ])?;
    let mode = pick(a.mode, cfg, "mode", Mode::Blocked)?;
    let waveform = pick(a.waveform, cfg, "waveform", Waveform::Step)?;
    let volts = drive_volts("volts", pick(a.volts, cfg, "volts", 7.0)?)?;
    let freq = positive("freq", pick(a.freq, cfg, "freq", 100.0)?)?;
    let width = positive("width", pick(a.width, cfg, "width", 10e-3)?)?;
    let duration = positive("duration", pick(a.duration, cfg, "duration", 0.3)?)?;
    let dt = pick_opt(a.dt, cfg, "dt")?.map(|v| positive("dt", v)).transpose()?;
    let stride = at_least("stride", pick(a.stride, cfg, "stride", 1)?, 1)?;
    let out = pick(a.out, cfg, "out", PathBuf::from("trace.csv"))?;
    let plot = pick_opt(a.plot, cfg, "plot")?;
    let params_path = pick_opt(a.params, cfg, "params")?;

    let set = ParamSet::resolve(params_path.as_deref())?;
    let p = &set.lumped;
    let dt = dt.unwrap_or_else(|| p.auto_dt(mode));
    let fs = 1.0 / (10.0 * dt);
    let sig = match waveform {
        Waveform::Step => DriveSignal::step(volts, fs, duration)?,
        Waveform::Sine => DriveSignal::sine(volts, freq, fs, duration)?,
        Waveform::Ramp => DriveSignal::ramp(volts, width, fs, duration)?,
        Waveform::Impulse => DriveSignal::impulse(volts, width, fs, duration)?,
        Waveform::Zero => DriveSignal::zero(fs, duration)?,
    };
    let trace = simulate_with(
        p,
        &sig,
        mode,
        SimOptions {
            record_stride: stride,
            ..SimOptions::new(dt)
        },
    )?;
    write_trace_file(&trace, &out)?;
    println!("{} rows, dt {dt:.3e} s -> {}", trace.len(), out.display());
    if mode == Mode::Blocked && waveform == Waveform::Step {
        match step_metrics(&trace) {
            Ok(m) => println!("t90 {:.2} ms, F_ss {:.4} N", m.t90 * 1e3, m.f_ss),
            Err(e) => println!("no step metrics: {e}"),
        }
    }
    let (label, unit) = match mode {
        Mode::Blocked => ("contact force", "F (N)"),
        Mode::Free => ("acceleration", "a (G)"),
    };
    let pts = trace
        .time
        .iter()
        .zip(trace.response())
        .map(|(&t, &y)| (t * 1e3, y))
        .collect();
    maybe_plot(plot.as_deref(), label, "t (ms)", unit, &[Series::new(label, pts)])
}

fn parse_amps(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            let a: f64 = v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("bad amplitude `{v}`")))?;
            positive("amplitude", drive_volts("amplitude", a)?)
        })
        .collect()
}

pub fn freq(a: FreqArgs, cfg: &KvFile) -> Result<()> {
    cfg.reject_unknown(&["params", "mode", "amps", "f-min", "f-max", "steps", "dt", "out", "plot"])?;
    let mode = pick(a.mode, cfg, "mode", Mode::Free)?;
    let amps = parse_amps(&pick(a.amps, cfg, "amps", "3".to_string())?)?;
    let f0 = positive("f-min", pick(a.f_min, cfg, "f-min", 20.0)?)?;
    let f1 = positive("f-max", pick(a.f_max, cfg, "f-max", 400.0)?)?;
    if f1 < f0 {
        return usage("f-max must not be below f-min");
    }
    let steps = at_least("steps", pick(a.steps, cfg, "steps", 39)?, 1)?;
    let dt = pick_opt(a.dt, cfg, "dt")?.map(|v| positive("dt", v)).transpose()?;
    let out = pick(a.out, cfg, "out", PathBuf::from("freq.csv"))?;
    let plot = pick_opt(a.plot, cfg, "plot")?;
    let params_path = pick_opt(a.params, cfg, "params")?;

    let set = ParamSet::resolve(params_path.as_deref())?;
    let p = &set.lumped;
    let freqs = linspace(f0, f1, steps);
    let opts = SweepOptions {
        dt,
        ..SweepOptions::default()
    };
    let pts = freq_sweep(p, &amps, &freqs, mode, opts)?;
    let mut t = Table::new(&["freq_Hz", "amplitude_V", "response", "model_response"]);
    for pt in &pts {
        let model = frequency_response(p, mode, pt.freq).norm() * pt.amplitude_v;
        t.push(vec![pt.freq, pt.amplitude_v, pt.response, model]);
    }
    t.write(&out)?;
    let unit = match mode {
        Mode::Blocked => "N",
        Mode::Free => "G",
    };
    println!("{} points ({unit}) -> {}", pts.len(), out.display());
    for &amp in &amps {
        let best = pts
            .iter()
            .filter(|q| q.amplitude_v == amp)
            .max_by(|x, y| x.response.total_cmp(&y.response));
        if let Some(b) = best {
            println!("{amp} V: peak {:.3} {unit} at {:.1} Hz", b.response, b.freq);
        }
    }
    let series: Vec<Series> = amps
        .iter()
        .map(|&amp| {
            Series::new(
                format!("{amp} V"),
                pts.iter()
                    .filter(|q| q.amplitude_v == amp)
                    .map(|q| (q.freq, q.response))
                    .collect(),
            )
        })
        .collect();
    maybe_plot(plot.as_deref(), "Frequency response", "f (Hz)", unit, &series)
}

pub fn thermal(a: ThermalArgs, cfg: &KvFile) -> Result<()> {
    cfg.reject_unknown(&["params", "volts", "freq", "duration", "cooldown", "every", "out", "plot"])?;
    let volts = drive_volts("volts", pick(a.volts, cfg, "volts", 3.0)?)?;
    let freq = positive("freq", pick(a.freq, cfg, "freq", 100.0)?)?;
    let duration = positive("duration", pick(a.duration, cfg, "duration", 100.0)?)?;
    let cooldown = pick(a.cooldown, cfg, "cooldown", 300.0)?;
    if !(cooldown >= 0.0) {
        return usage(format!("invalid cooldown {cooldown}: must be >= 0"));
    }
    let every = positive("every", pick(a.every, cfg, "every", 0.5)?)?;
    let out = pick(a.out, cfg, "out", PathBuf::from("thermal.csv"))?;
    let plot = pick_opt(a.plot, cfg, "plot")?;
    let params_path = pick_opt(a.params, cfg, "params")?;

    let set = ParamSet::resolve(params_path.as_deref())?;
    let p = &set.lumped;
    let h = current_response(p, Mode::Free, freq) * volts;
    let (amp, phase) = (h.norm(), h.arg());
    let dt = 1.0 / (20.0 * freq);
    let n_heat = (duration / dt).round() as usize;
    let n_total = n_heat + (cooldown / dt).round() as usize + 1;
    let w = 2.0 * std::f64::consts::PI * freq;
    let current: Vec<f64> = (0..n_total)
        .map(|k| {
            if k < n_heat {
                amp * (w * k as f64 * dt + phase).sin()
            } else {
                0.0
            }
        })
        .collect();
    let temps = thermal_sim(&set.thermal, p.r_ohm, &current, dt);
    let stride = ((every / dt).round() as usize).max(1);
    let mut t = Table::new(&["t_s", "temp_C", "current_A"]);
    for k in (0..n_total).step_by(stride) {
        t.push(vec![k as f64 * dt, temps[k], current[k]]);
    }
    t.write(&out)?;
    println!(
        "current amplitude {:.4} A; T({duration} s) = {:.2} C, T(end) = {:.2} C -> {}",
        amp,
        temps[n_heat.min(n_total - 1)],
        temps[n_total - 1],
        out.display()
    );
    let pts = t.rows.iter().map(|r| (r[0], r[1])).collect();
    maybe_plot(
        plot.as_deref(),
        "Coil temperature",
        "t (s)",
        "T (C)",
        &[Series::new("T", pts)],
    )
}

pub fn replay(a: ReplayArgs, cfg: &KvFile) -> Result<()> {
    cfg.reject_unknown(&[
        "params", "scene", "poses", "finger", "stiffness", "tick-rate", "out", "device-out",
        "telemetry", "plot",
    ])?;
    let scene_path = required(a.scene, cfg, "scene")?;
    let poses_path = required(a.poses, cfg, "poses")?;
    let finger = pick(a.finger, cfg, "finger", "index".to_string())?;
    let stiffness = pick_opt(a.stiffness, cfg, "stiffness")?
        .map(|k| positive("stiffness", k))
        .transpose()?;
    let tick_rate = positive("tick-rate", pick(a.tick_rate, cfg, "tick-rate", 1000.0)?)?;
    let out = pick(a.out, cfg, "out", PathBuf::from("replay.csv"))?;
    let device_out = pick_opt(a.device_out, cfg, "device-out")?;
    let telemetry = pick_opt(a.telemetry, cfg, "telemetry")?;
    let plot = pick_opt(a.plot, cfg, "plot")?;
    let params_path = pick_opt(a.params, cfg, "params")?;

    let mut scene = Scene::parse(&fs::read_to_string(&scene_path)?)?;
    if let Some(k) = stiffness {
        scene = scene.with_stiffness(k);
    }
    let poses = parse_pose_stream(BufReader::new(fs::File::open(&poses_path)?))?;
    let ticks = pose_ticks(&poses, &finger, tick_rate);
    if ticks.is_empty() {
        return Err(CliError::Domain(format!(
            "finger `{finger}` does not appear in {}",
            poses_path.display()
        )));
    }
    let set = ParamSet::resolve(params_path.as_deref())?;
    let render_cfg = RendererConfig {
        tick_rate,
        ..RendererConfig::default()
    };
    let device_cfg = DeviceConfig {
        tick_rate,
        ..DeviceConfig::default()
    };
    let r = run_replay(&ticks, &scene, &set.lumped, &set.thermal, render_cfg, device_cfg)?;

    let mut t = Table::new(&[
        "tick", "t_s", "x_m", "y_m", "z_m", "voltage_V", "spring_V", "pre_clamp_V", "saturated",
        "gain", "penetration_m",
    ]);
    for (c, pos) in r.commands.iter().zip(&ticks) {
        t.push(vec![
            c.tick as f64,
            c.tick as f64 / tick_rate,
            pos[0],
            pos[1],
            pos[2],
            c.voltage,
            c.spring_voltage,
            c.pre_clamp,
            f64::from(u8::from(c.saturated)),
            c.governor_gain,
            c.contact.penetration,
        ]);
    }
    t.write(&out)?;
    if let Some(path) = &device_out {
        let mut d = Table::new(&["t_s", "force_N", "temp_C", "x_m", "current_A"]);
        for s in &r.samples {
            d.push(vec![s.t, s.force, s.temperature, s.state.x, s.state.i]);
        }
        d.write(path)?;
    }
    if let Some(path) = &telemetry {
        fs::write(path, &r.telemetry)?;
    }
    let saturated = r.commands.iter().filter(|c| c.saturated).count();
    let in_contact = r.commands.iter().filter(|c| c.contact.object.is_some()).count();
    let peak = r.commands.iter().fold(0.0f64, |m, c| m.max(c.voltage.abs()));
    println!(
        "{} ticks ({in_contact} in contact, {saturated} saturated), peak |V| {peak:.3} V -> {}",
        r.commands.len(),
        out.display()
    );
    let pts = r
        .commands
        .iter()
        .map(|c| (c.tick as f64 / tick_rate, c.voltage))
        .collect();
    maybe_plot(
        plot.as_deref(),
        "Drive voltage",
        "t (s)",
        "V",
        &[Series::new("voltage", pts)],
    )
}

fn read_volts_csv(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut volts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        match l.split(',').next().unwrap_or("").trim().parse::<f64>() {
            Ok(v) => volts.push(v),
            // a single header line is allowed
            Err(_) if i == 0 => {}
            Err(_) => {
                return Err(CliError::Domain(format!(
                    "{}:{}: not a voltage: `{l}`",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(volts)
}

pub fn protocol_echo(a: EchoArgs, cfg: &KvFile) -> Result<()> {
    cfg.reject_unknown(&["params", "input", "format", "corrupt", "seed", "out", "drive-out"])?;
    let input = required(a.input, cfg, "input")?;
    let format = match pick_opt(a.format, cfg, "format")? {
        Some(f) => f,
        None if input.extension().is_some_and(|e| e == "csv") => "csv".into(),
        None => "bin".into(),
    };
    let corrupt = pick(a.corrupt, cfg, "corrupt", 0.0)?;
    if !(0.0..=1.0).contains(&corrupt) {
        return usage(format!("invalid corrupt {corrupt}: must be within [0, 1]"));
    }
    let seed = pick(a.seed, cfg, "seed", 0)?;
    let out = pick(a.out, cfg, "out", PathBuf::from("telemetry.bin"))?;
    let drive_out = pick_opt(a.drive_out, cfg, "drive-out")?;
    let params_path = pick_opt(a.params, cfg, "params")?;

    let frames: Vec<Vec<u8>> = match format.as_str() {
        "csv" => frames_from_volts(&read_volts_csv(&input)?)?
            .iter()
            .map(encode_frame)
            .collect::<std::result::Result<_, _>>()?,
        "bin" => vec![fs::read(&input)?],
        other => return usage(format!("unknown format `{other}` (expected bin|csv)")),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drive = Vec::new();
    for mut f in frames {
        if corrupt > 0.0 && !f.is_empty() && rng.gen_bool(corrupt) {
            let i = rng.gen_range(0..f.len());
            f[i] ^= rng.gen_range(1..=255u8);
        }
        drive.extend(f);
    }
    if let Some(p) = &drive_out {
        fs::write(p, &drive)?;
    }

    let decoded = decode_stream::<DeviceFrame>(&drive);
    let good = decoded.iter().filter(|r| r.is_ok()).count();
    let set = ParamSet::resolve(params_path.as_deref())?;
    let telemetry = simulated_device(&drive, &set.lumped, &set.thermal, DeviceConfig::default())?;
    fs::write(&out, &telemetry)?;
    let returned = decode_stream::<stem_twin::pipeline_io::TelemetryFrame>(&telemetry).len();
    println!(
        "{} drive bytes: {good} frames accepted, {} rejected candidates; {returned} telemetry frames -> {}",
        drive.len(),
        decoded.len() - good,
        out.display()
    );
    Ok(())
}
