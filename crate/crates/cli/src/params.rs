//! Calibrated parameter files (`key = value`, SI units).

use std::fmt::Write as _;
use std::path::Path;

use stem_twin::electromech::{
    calibrate, sine_drive_power, thermal_fit, CalibrationReport, CalibrationTargets, LumpedParams,
    ThermalParams, ThermalTargets,
};

use crate::config::{CliError, KvFile, Result};

pub const KEYS: [&str; 12] = [
    "r_ohm", "l_h", "km", "m_mov", "k", "c", "preload", "k_contact", "v_max", "r_th", "c_th",
    "t_amb",
];

#[derive(Debug, Clone)]
pub struct ParamSet {
    pub lumped: LumpedParams,
    pub thermal: ThermalParams,
}

impl ParamSet {
    /// Calibrate against the bench targets and fit the thermal model on the
    /// model's own 3 V / 100 Hz dissipation.
    pub fn calibrated(targets: &CalibrationTargets) -> Result<(Self, CalibrationReport)> {
        let report = calibrate(targets)?;
        let tt = ThermalTargets::default();
        let power = sine_drive_power(&report.params, tt.drive_v, tt.freq);
        let set = Self {
            lumped: report.params.clone(),
            thermal: thermal_fit(power, &tt),
        };
        Ok((set, report))
    }

    pub fn to_text(&self) -> String {
        let p = &self.lumped;
        let t = &self.thermal;
        let vals = [
            p.r_ohm, p.l_h, p.km, p.m_mov, p.k, p.c, p.preload, p.k_contact, p.v_max, t.r_th,
            t.c_th, t.t_amb,
        ];
        let mut out = String::from("# lumped actuator and thermal parameters, SI units\n");
        for (k, v) in KEYS.iter().zip(vals) {
            // shortest representation that parses back to the same f64
            let _ = writeln!(out, "{k} = {v:?}");
        }
        out
    }

    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        kv.reject_unknown(&KEYS)?;
        let lumped = LumpedParams {
            r_ohm: kv.require("r_ohm")?,
            l_h: kv.require("l_h")?,
            km: kv.require("km")?,
            m_mov: kv.require("m_mov")?,
            k: kv.require("k")?,
            c: kv.require("c")?,
            preload: kv.require("preload")?,
            k_contact: kv.require("k_contact")?,
            v_max: kv.require("v_max")?,
            km_table: None,
        };
        lumped
            .validate()
            .map_err(|e| CliError::Usage(format!("invalid parameter file: {e}")))?;
        let thermal = ThermalParams {
            r_th: kv.require("r_th")?,
            c_th: kv.require("c_th")?,
            t_amb: kv.require("t_amb")?,
        };
        if !(thermal.r_th > 0.0 && thermal.c_th > 0.0 && thermal.t_amb.is_finite()) {
            return Err(CliError::Usage(
                "invalid parameter file: r_th and c_th must be positive".into(),
            ));
        }
        Ok(Self { lumped, thermal })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv(&KvFile::load(path)?)
    }

    /// From `path` if given, otherwise calibrated on the spot.
    pub fn resolve(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => {
                eprintln!("no --params given; calibrating against the bench targets");
                Ok(Self::calibrated(&CalibrationTargets::bench())?.0)
            }
        }
    }
}
