//! Coil/magnet sizing against the force-per-root-power-mass figure of merit
//! `f = F / sqrt(P m)`.
//!
//! The two free variables are the magnet height and the radial coil width;
//! everything else (magnet radius, coil thickness, wire) is held fixed.

use std::f64::consts::PI;
use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::magnetics::{
    self, axial_force_with, CoilSpec, ForceResolution, MagnetSpec, MagneticsError, MreSpec,
};
use crate::simplex::{self, SimplexOptions};

pub const COPPER_RESISTIVITY: f64 = 1.68e-8;
pub const DEFAULT_FILL_FACTOR: f64 = 0.7;
/// Puts the 4 mm / 2 mm design at 292 turns, 8.575 Ohm (3 V -> 0.35 A).
pub const DEFAULT_WIRE_DIAMETER: f64 = 0.1353e-3;
pub const DEFAULT_DRIVE_VOLTAGE: f64 = 3.0;

/// Geometric slack for the envelope test (metres).
const FEASIBILITY_TOL: f64 = 1e-12;

pub const SWEEP_CSV_HEADER: &str = "h_mag_mm,w_coil_mm,force_N,power_W,mass_kg,objective";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("wire of diameter {diameter:.3e} m does not fit a {width:.3e} x {thickness:.3e} m winding window")]
    ZeroTurns {
        diameter: f64,
        width: f64,
        thickness: f64,
    },
    #[error("design h_mag={h_mag:.3e} m, w_coil={w_coil:.3e} m violates the envelope")]
    Infeasible { h_mag: f64, w_coil: f64 },
    #[error("no feasible cell in the sweep grid")]
    EmptyFeasibleSet,
    #[error("sweep needs at least 2 steps per axis, got {0} x {1}")]
    TooFewSteps(usize, usize),
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error(transparent)]
    Magnetics(#[from] MagneticsError),
}

pub type Result<T> = std::result::Result<T, DesignError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignPoint {
    pub h_mag: f64,
    pub w_coil: f64,
}

impl DesignPoint {
    pub fn new(h_mag: f64, w_coil: f64) -> Result<Self> {
        if !(h_mag > 0.0) || !(w_coil > 0.0) {
            return Err(DesignError::Invalid(format!(
                "design dimensions must be positive, got h_mag={h_mag}, w_coil={w_coil}"
            )));
        }
        Ok(Self { h_mag, w_coil })
    }

    /// The built prototype: 4 mm magnet, 2 mm coil width.
    pub fn reference() -> Self {
        Self {
            h_mag: 4e-3,
            w_coil: 2e-3,
        }
    }
}

/// Outer size limits of the finger-worn package plus the fixed parts of the
/// geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignEnvelope {
    pub max_diameter: f64,
    pub max_thickness: f64,
    pub magnet_radius: f64,
    pub coil_thickness: f64,
    pub coil_inner_radius: f64,
    /// Pole piece on top of the magnet; its face sits flush with the coil top.
    pub pole_piece_thickness: f64,
}

impl Default for DesignEnvelope {
    fn default() -> Self {
        Self {
            max_diameter: 11e-3,
            max_thickness: 6e-3,
            magnet_radius: 2e-3,
            coil_thickness: 3e-3,
            coil_inner_radius: 3e-3,
            pole_piece_thickness: 1.5e-3,
        }
    }
}

impl DesignEnvelope {
    pub fn outer_diameter(&self, dp: &DesignPoint) -> f64 {
        2.0 * (self.coil_inner_radius + dp.w_coil)
    }

    pub fn stack_height(&self, dp: &DesignPoint) -> f64 {
        self.coil_thickness
            .max(self.pole_piece_thickness + dp.h_mag)
    }

    pub fn is_feasible(&self, dp: &DesignPoint) -> bool {
        dp.h_mag > 0.0
            && dp.w_coil > 0.0
            && self.outer_diameter(dp) <= self.max_diameter + FEASIBILITY_TOL
            && self.stack_height(dp) <= self.max_thickness + FEASIBILITY_TOL
    }

    /// Magnet centre relative to coil centre at the seated rest position.
    pub fn operating_offset(&self, dp: &DesignPoint) -> f64 {
        0.5 * self.coil_thickness - self.pole_piece_thickness - 0.5 * dp.h_mag
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WireSpec {
    pub wire_diameter: f64,
    pub resistivity: f64,
    pub fill_factor: f64,
}

impl Default for WireSpec {
    fn default() -> Self {
        Self {
            wire_diameter: DEFAULT_WIRE_DIAMETER,
            resistivity: COPPER_RESISTIVITY,
            fill_factor: DEFAULT_FILL_FACTOR,
        }
    }
}

impl WireSpec {
    pub fn new(wire_diameter: f64, resistivity: f64, fill_factor: f64) -> Result<Self> {
        if !(wire_diameter > 0.0) || !(resistivity > 0.0) {
            return Err(DesignError::Invalid(
                "wire diameter and resistivity must be positive".into(),
            ));
        }
        if !(fill_factor > 0.0 && fill_factor <= 1.0) {
            return Err(DesignError::Invalid(format!(
                "fill factor {fill_factor} outside (0, 1]"
            )));
        }
        Ok(Self {
            wire_diameter,
            resistivity,
            fill_factor,
        })
    }

    pub fn area(&self) -> f64 {
        0.25 * PI * self.wire_diameter * self.wire_diameter
    }

    pub fn turns(&self, width: f64, thickness: f64) -> Result<u32> {
        let n = (self.fill_factor * width * thickness / self.area()).floor();
        if n < 1.0 {
            return Err(DesignError::ZeroTurns {
                diameter: self.wire_diameter,
                width,
                thickness,
            });
        }
        Ok(n as u32)
    }
}

/// DC resistance of a coil wound to fill its window with `wire`.
///
/// The turn count is recomputed from the wire; `coil.turns` is ignored.
pub fn coil_resistance(coil: &CoilSpec, wire: &WireSpec) -> Result<f64> {
    let turns = wire.turns(coil.width, coil.thickness)?;
    let length = turns as f64 * 2.0 * PI * coil.mean_radius();
    Ok(wire.resistivity * length / wire.area())
}

pub fn magnet_mass(magnet: &MagnetSpec) -> f64 {
    magnet.density * PI * magnet.radius * magnet.radius * magnet.height
}

/// Fixed inputs for evaluating a design point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignContext {
    pub wire: WireSpec,
    pub mre: MreSpec,
    pub envelope: DesignEnvelope,
    pub drive_voltage: f64,
    pub magnetization: f64,
    pub magnet_density: f64,
    pub resolution: ForceResolution,
}

impl Default for DesignContext {
    fn default() -> Self {
        Self {
            wire: WireSpec::default(),
            mre: MreSpec::default(),
            envelope: DesignEnvelope::default(),
            drive_voltage: DEFAULT_DRIVE_VOLTAGE,
            magnetization: magnetics::DEFAULT_MAGNETIZATION,
            magnet_density: magnetics::DEFAULT_MAGNET_DENSITY,
            resolution: ForceResolution::default(),
        }
    }
}

impl DesignContext {
    /// Coil (wound with `self.wire`) and magnet realizing `dp`.
    pub fn build(&self, dp: &DesignPoint) -> Result<(CoilSpec, MagnetSpec)> {
        let env = &self.envelope;
        let turns = self.wire.turns(dp.w_coil, env.coil_thickness)?;
        let coil = CoilSpec::new(env.coil_inner_radius, dp.w_coil, env.coil_thickness, turns, 0.0)?;
        let magnet = MagnetSpec::new(
            env.magnet_radius,
            dp.h_mag,
            self.magnetization,
            self.magnet_density,
        )?;
        Ok((coil, magnet))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignEvaluation {
    pub point: DesignPoint,
    pub force: f64,
    pub power: f64,
    pub magnet_mass: f64,
    pub objective: f64,
}

/// `F / sqrt(P m)`.
pub fn objective(force: f64, power: f64, mass: f64) -> f64 {
    force / (power * mass).sqrt()
}

impl DesignEvaluation {
    pub fn from_parts(point: DesignPoint, force: f64, power: f64, magnet_mass: f64) -> Result<Self> {
        if !(power > 0.0) || !(magnet_mass > 0.0) {
            return Err(DesignError::Invalid(format!(
                "power and mass must be positive, got P={power}, m={magnet_mass}"
            )));
        }
        Ok(Self {
            point,
            force,
            power,
            magnet_mass,
            objective: objective(force, power, magnet_mass),
        })
    }
}

pub fn evaluate_objective(dp: &DesignPoint, ctx: &DesignContext) -> Result<DesignEvaluation> {
    if !ctx.envelope.is_feasible(dp) {
        return Err(DesignError::Infeasible {
            h_mag: dp.h_mag,
            w_coil: dp.w_coil,
        });
    }
    let (coil, magnet) = ctx.build(dp)?;
    let r = coil_resistance(&coil, &ctx.wire)?;
    let current = ctx.drive_voltage / r;
    let offset = ctx.envelope.operating_offset(dp);
    let force = axial_force_with(&coil, current, &magnet, offset, &ctx.mre, ctx.resolution)?;
    DesignEvaluation::from_parts(*dp, force, current * current * r, magnet_mass(&magnet))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRanges {
    pub h_mag: (f64, f64),
    pub w_coil: (f64, f64),
}

impl Default for SweepRanges {
    fn default() -> Self {
        Self {
            h_mag: (1e-3, 6e-3),
            w_coil: (0.5e-3, 3.5e-3),
        }
    }
}

pub const DEFAULT_STEPS: (usize, usize) = (21, 21);

/// `n` evenly spaced values including both ends.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Feasible cells, row-major (h_mag outer, w_coil inner).
    pub rows: Vec<DesignEvaluation>,
    pub best: DesignEvaluation,
}

pub fn grid_sweep(
    ranges: &SweepRanges,
    steps: (usize, usize),
    ctx: &DesignContext,
) -> Result<SweepResult> {
    grid_sweep_with(ranges, steps, &ctx.envelope, |dp| evaluate_objective(dp, ctx))
}

/// Grid sweep over an arbitrary evaluator. Cells run in parallel; the result
/// order and the argmax do not depend on scheduling.
pub fn grid_sweep_with<F>(
    ranges: &SweepRanges,
    steps: (usize, usize),
    envelope: &DesignEnvelope,
    eval: F,
) -> Result<SweepResult>
where
    F: Fn(&DesignPoint) -> Result<DesignEvaluation> + Sync,
{
    let (n_h, n_w) = steps;
    if n_h < 2 || n_w < 2 {
        return Err(DesignError::TooFewSteps(n_h, n_w));
    }
    let hs = linspace(ranges.h_mag.0, ranges.h_mag.1, n_h);
    let ws = linspace(ranges.w_coil.0, ranges.w_coil.1, n_w);
    let cells: Vec<DesignPoint> = hs
        .iter()
        .flat_map(|&h_mag| ws.iter().map(move |&w_coil| DesignPoint { h_mag, w_coil }))
        .filter(|dp| envelope.is_feasible(dp))
        .collect();

    let rows = cells
        .par_iter()
        .map(|dp| eval(dp))
        .collect::<Result<Vec<_>>>()?;

    // Strict improvement keeps the first (lexicographically smallest) cell on ties.
    let best = rows
        .iter()
        .fold(None::<&DesignEvaluation>, |acc, e| match acc {
            Some(b) if e.objective <= b.objective => Some(b),
            _ => Some(e),
        })
        .copied()
        .ok_or(DesignError::EmptyFeasibleSet)?;
    Ok(SweepResult { rows, best })
}

/// Simplex polish of `start` on the design objective.
pub fn refine(start: &DesignPoint, ctx: &DesignContext) -> Result<DesignPoint> {
    if !ctx.envelope.is_feasible(start) {
        return Err(DesignError::Infeasible {
            h_mag: start.h_mag,
            w_coil: start.w_coil,
        });
    }
    Ok(refine_with(start, &|dp| ctx.envelope.is_feasible(dp), &|dp| {
        evaluate_objective(dp, ctx).ok().map(|e| e.objective)
    }))
}

/// Maximize `objective` from `start`. Infeasible points, and points where the
/// objective is undefined, are rejected. Never returns a point scoring below
/// `start`.
pub fn refine_with(
    start: &DesignPoint,
    feasible: &dyn Fn(&DesignPoint) -> bool,
    objective: &dyn Fn(&DesignPoint) -> Option<f64>,
) -> DesignPoint {
    let Some(f_start) = objective(start) else {
        return *start;
    };
    // Work in millimetres so the simplex tolerances are well scaled.
    let cost = |x: &[f64]| {
        let dp = DesignPoint {
            h_mag: x[0] * 1e-3,
            w_coil: x[1] * 1e-3,
        };
        if !feasible(&dp) {
            return f64::INFINITY;
        }
        objective(&dp).map_or(f64::INFINITY, |f| -f)
    };
    let x0 = [start.h_mag * 1e3, start.w_coil * 1e3];
    let step = [0.1 * x0[0].max(0.1), 0.1 * x0[1].max(0.1)];
    let res = simplex::minimize(
        &x0,
        &step,
        SimplexOptions {
            max_evals: 600,
            f_tol: 1e-12,
            x_tol: 1e-7,
        },
        cost,
    );
    let cand = DesignPoint {
        h_mag: res.x[0] * 1e-3,
        w_coil: res.x[1] * 1e-3,
    };
    if res.cost.is_finite() && -res.cost > f_start {
        cand
    } else {
        *start
    }
}

pub fn write_sweep_csv<W: Write>(mut out: W, rows: &[DesignEvaluation]) -> io::Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for e in rows {
        writeln!(
            out,
            "{:.6},{:.6},{:.9e},{:.9e},{:.9e},{:.9e}",
            e.point.h_mag * 1e3,
            e.point.w_coil * 1e3,
            e.force,
            e.power,
            e.magnet_mass,
            e.objective
        )?;
    }
    Ok(())
}

/// Parses a sweep CSV back into evaluations.
pub fn read_sweep_csv(text: &str) -> std::result::Result<Vec<DesignEvaluation>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == SWEEP_CSV_HEADER => {}
        other => return Err(format!("bad sweep header: {other:?}")),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let v: Vec<f64> = l
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| format!("line {}: {e}", i + 2))?;
            if v.len() != 6 {
                return Err(format!("line {}: expected 6 fields, got {}", i + 2, v.len()));
            }
            Ok(DesignEvaluation {
                point: DesignPoint {
                    h_mag: v[0] * 1e-3,
                    w_coil: v[1] * 1e-3,
                },
                force: v[2],
                power: v[3],
                magnet_mass: v[4],
                objective: v[5],
            })
        })
        .collect()
}
