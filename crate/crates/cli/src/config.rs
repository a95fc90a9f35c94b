//! Flat `key = value` files: run configuration, parameter sets, optimizer
//! results.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Exit-code class of a failure.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config keys or override values (exit 2).
    Usage(String),
    /// A module refused the work (exit 1); the message is passed through.
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Domain(m) => f.write_str(m),
        }
    }
}

macro_rules! domain_errors {
    ($($t:ty),* $(,)?) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Domain(e.to_string())
            }
        })*
    };
}

domain_errors!(
    std::io::Error,
    stem_twin::design::DesignError,
    stem_twin::magnetics::MagneticsError,
    stem_twin::electromech::SimError,
    stem_twin::electromech::CalibrationError,
    stem_twin::pipeline_io::FrameError,
    stem_twin::pipeline_io::DeviceError,
    stem_twin::pipeline_io::PoseError,
    stem_twin::renderer::SceneError,
);

pub type Result<T> = std::result::Result<T, CliError>;

pub fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Usage(msg.into()))
}

/// Parsed `key = value` file. Blank lines and `#` comments are ignored.
#[derive(Debug, Clone, Default)]
pub struct KvFile {
    origin: String,
    entries: BTreeMap<String, (String, usize)>,
}

impl KvFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return usage(format!("{origin}:{}: expected key = value", idx + 1));
            };
            let key = k.trim().to_string();
            if entries.insert(key.clone(), (v.trim().to_string(), idx + 1)).is_some() {
                return usage(format!("{origin}:{}: duplicate key `{key}`", idx + 1));
            }
        }
        Ok(Self {
            origin: origin.to_string(),
            entries,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        for (k, (_, line)) in &self.entries {
            if !allowed.contains(&k.as_str()) {
                return usage(format!("{}:{line}: unknown key `{k}`", self.origin));
            }
        }
        Ok(())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|_| {
                CliError::Usage(format!("{}:{line}: bad value `{v}` for `{key}`", self.origin))
            }),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| CliError::Usage(format!("{}: missing key `{key}`", self.origin)))
    }
}

/// Flag if given, else config entry, else `default`.
pub fn pick<T: FromStr>(flag: Option<T>, cfg: &KvFile, key: &str, default: T) -> Result<T> {
    match flag {
        Some(v) => Ok(v),
        None => Ok(cfg.get(key)?.unwrap_or(default)),
    }
}

/// Like [`pick`] without a default.
pub fn pick_opt<T: FromStr>(flag: Option<T>, cfg: &KvFile, key: &str) -> Result<Option<T>> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => cfg.get(key),
    }
}

pub fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        usage(format!("invalid {name} {v}: must be > 0"))
    }
}

pub fn at_least(name: &str, v: usize, min: usize) -> Result<usize> {
    if v >= min {
        Ok(v)
    } else {
        usage(format!("invalid {name} {v}: must be >= {min}"))
    }
}
