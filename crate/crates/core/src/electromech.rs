//! Lumped electromechanical and thermal model of the actuator.
//!
//! State is `(x, v, I)`: magnet displacement (positive toward the skin),
//! velocity and coil current. The coupled equations are
//!
//! ```text
//! L dI/dt   = V(t) - R I - Km v
//! m dv/dt   = Km I - k x - c v - F_lc(x) + preload      (blocked)
//! m dv/dt   = Km I - k x - c v                          (free)
//! ```
//!
//! In blocked mode the magnet presses on a load cell that is pre-compressed
//! by the 50 mN preload: `F_lc = k_contact * max(x + preload / k_contact, 0)`.
//! The reported contact force is `F_lc - preload`, i.e. force above the
//! preload baseline. Integration is fixed-step classical RK4 with the drive
//! held constant over each step.

use std::f64::consts::{LN_10, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::magnetics::KmSample;
use crate::simplex::{self, SimplexOptions};

/// Standard gravity as used for the acceleration figures (m/s^2).
pub const G: f64 = 9.8;
/// Model validity limit on magnet travel (m).
pub const MAX_DISPLACEMENT: f64 = 5e-3;
/// Hard bound on any drive sample (V).
pub const MAX_DRIVE_VOLTAGE: f64 = 10.0;
pub const DEFAULT_PRELOAD: f64 = 0.050;
pub const DEFAULT_V_MAX: f64 = 7.0;
/// Magnet (0.377 g) plus an estimated pole piece.
pub const DEFAULT_MOVING_MASS: f64 = 0.45e-3;
pub const MOVING_MASS_BOUNDS: (f64, f64) = (0.38e-3, 1.5e-3);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("magnet displacement {x:.3e} m at t={t:.4} s left the model validity range")]
    Unstable { t: f64, x: f64 },
    #[error("time step {dt:.3e} s exceeds the limit {limit:.3e} s ({reason})")]
    StepTooLarge { dt: f64, limit: f64, reason: &'static str },
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("drive sample {value} V exceeds the {MAX_DRIVE_VOLTAGE} V bound")]
    DriveOutOfRange { value: f64 },
    #[error("step metrics need a blocked-mode trace")]
    NotBlocked,
    #[error("trace never reaches 90% of its settled value")]
    NoCrossing,
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Pressed against a load cell; reports contact force.
    Blocked,
    /// Unloaded; reports acceleration.
    Free,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "blocked" => Ok(Mode::Blocked),
            "free" => Ok(Mode::Free),
            other => Err(format!("unknown mode `{other}` (expected blocked|free)")),
        }
    }
}

/// Piecewise-linear `Km(x) / Km(0)` lookup, built from a magnetics profile.
#[derive(Debug, Clone, PartialEq)]
pub struct KmTable {
    points: Vec<(f64, f64)>,
}

impl KmTable {
    /// `profile` offsets are absolute; `rest_offset` is where `x = 0`.
    pub fn from_profile(profile: &[KmSample], rest_offset: f64) -> Result<Self> {
        if profile.len() < 2 {
            return Err(SimError::Invalid("Km profile needs at least two samples".into()));
        }
        let mut pts: Vec<(f64, f64)> = profile
            .iter()
            .map(|s| (s.offset - rest_offset, s.km))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let table = KmTable { points: pts };
        let at_rest = table.raw(0.0);
        if at_rest == 0.0 || !at_rest.is_finite() {
            return Err(SimError::Invalid("Km vanishes at the rest position".into()));
        }
        Ok(KmTable {
            points: table.points.iter().map(|&(x, k)| (x, k / at_rest)).collect(),
        })
    }

    fn raw(&self, x: f64) -> f64 {
        let p = &self.points;
        if x <= p[0].0 {
            return p[0].1;
        }
        if x >= p[p.len() - 1].0 {
            return p[p.len() - 1].1;
        }
        let i = p.partition_point(|q| q.0 <= x);
        let (x0, y0) = p[i - 1];
        let (x1, y1) = p[i];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Relative force constant at displacement `x`; 1 at rest.
    pub fn scale_at(&self, x: f64) -> f64 {
        self.raw(x)
    }
}

/// Calibrated lumped constants.
#[derive(Debug, Clone, PartialEq)]
pub struct LumpedParams {
    pub r_ohm: f64,
    pub l_h: f64,
    /// Force constant (N/A), equal to the back-EMF constant (V s/m).
    pub km: f64,
    pub m_mov: f64,
    pub k: f64,
    pub c: f64,
    pub preload: f64,
    pub k_contact: f64,
    pub v_max: f64,
    /// Optional stroke dependence of `km`.
    pub km_table: Option<KmTable>,
}

impl LumpedParams {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("R", self.r_ohm),
            ("L", self.l_h),
            ("Km", self.km),
            ("m_mov", self.m_mov),
            ("k", self.k),
            ("c", self.c),
            ("preload", self.preload),
            ("k_contact", self.k_contact),
            ("V_max", self.v_max),
        ];
        for (name, v) in named {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SimError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn km_at(&self, x: f64) -> f64 {
        match &self.km_table {
            Some(t) => self.km * t.scale_at(x),
            None => self.km,
        }
    }

    /// Static contact force per ampere in blocked mode.
    pub fn blocked_force_constant(&self) -> f64 {
        self.km * self.k_contact / (self.k + self.k_contact)
    }

    /// Undamped natural frequency of the free suspension (Hz).
    pub fn natural_frequency(&self) -> f64 {
        (self.k / self.m_mov).sqrt() / (2.0 * PI)
    }

    pub fn effective_stiffness(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Blocked => self.k + self.k_contact,
            Mode::Free => self.k,
        }
    }

    /// Largest step the integrator accepts in `mode`.
    pub fn max_dt(&self, mode: Mode) -> f64 {
        (self.m_mov / self.effective_stiffness(mode)).sqrt() / 50.0
    }

    /// A round (1-2-5 series) step below [`max_dt`](Self::max_dt).
    pub fn auto_dt(&self, mode: Mode) -> f64 {
        nice_step_below(self.max_dt(mode))
    }

    pub fn electrical_time_constant(&self) -> f64 {
        self.l_h / self.r_ohm
    }
}

pub(crate) fn nice_step_below(limit: f64) -> f64 {
    let decade = 10f64.powf(limit.log10().floor());
    [5.0, 2.0, 1.0]
        .iter()
        .map(|m| m * decade)
        .find(|&s| s <= limit)
        .unwrap_or(decade)
}

/// Uniformly sampled drive voltage, held between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveSignal {
    pub sample_rate: f64,
    pub samples: Vec<f64>,
}

impl DriveSignal {
    pub fn arbitrary(sample_rate: f64, samples: Vec<f64>) -> Result<Self> {
        if !(sample_rate > 0.0) {
            return Err(SimError::Invalid(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if let Some(&bad) = samples
            .iter()
            .find(|v| !(v.abs() <= MAX_DRIVE_VOLTAGE))
        {
            return Err(SimError::DriveOutOfRange { value: bad });
        }
        Ok(Self {
            sample_rate,
            samples,
        })
    }

    fn count(sample_rate: f64, duration: f64) -> usize {
        (duration * sample_rate).round().max(1.0) as usize
    }

    pub fn zero(sample_rate: f64, duration: f64) -> Result<Self> {
        Self::arbitrary(sample_rate, vec![0.0; Self::count(sample_rate, duration)])
    }

    pub fn step(volts: f64, sample_rate: f64, duration: f64) -> Result<Self> {
        Self::arbitrary(sample_rate, vec![volts; Self::count(sample_rate, duration)])
    }

    pub fn sine(amplitude: f64, freq: f64, sample_rate: f64, duration: f64) -> Result<Self> {
        if sample_rate < 10.0 * freq {
            return Err(SimError::Invalid(format!(
                "sample rate {sample_rate} Hz is below 10x the {freq} Hz tone"
            )));
        }
        let n = Self::count(sample_rate, duration);
        Self::arbitrary(
            sample_rate,
            (0..n)
                .map(|i| amplitude * (2.0 * PI * freq * i as f64 / sample_rate).sin())
                .collect(),
        )
    }

    /// Linear rise from 0 to `volts` over `rise`, then hold.
    pub fn ramp(volts: f64, rise: f64, sample_rate: f64, duration: f64) -> Result<Self> {
        let n = Self::count(sample_rate, duration);
        Self::arbitrary(
            sample_rate,
            (0..n)
                .map(|i| {
                    let t = i as f64 / sample_rate;
                    volts * (t / rise).min(1.0)
                })
                .collect(),
        )
    }

    /// Rectangular pulse of `width` seconds at the start, zero after.
    pub fn impulse(volts: f64, width: f64, sample_rate: f64, duration: f64) -> Result<Self> {
        let n = Self::count(sample_rate, duration);
        let on = (width * sample_rate).round().max(1.0) as usize;
        Self::arbitrary(
            sample_rate,
            (0..n).map(|i| if i < on { volts } else { 0.0 }).collect(),
        )
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Held sample at time `t` (the last sample past the end).
    pub fn value_at(&self, t: f64) -> f64 {
        let idx = (t * self.sample_rate + 1e-9).floor().max(0.0) as usize;
        self.samples
            .get(idx)
            .or(self.samples.last())
            .copied()
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State {
    pub x: f64,
    pub v: f64,
    pub i: f64,
}

impl State {
    fn axpy(self, h: f64, d: State) -> State {
        State {
            x: self.x + h * d.x,
            v: self.v + h * d.v,
            i: self.i + h * d.i,
        }
    }
}

/// Fixed-step RK4 integrator that can be advanced one step at a time.
#[derive(Debug, Clone)]
pub struct Integrator {
    params: LumpedParams,
    mode: Mode,
    dt: f64,
    state: State,
    steps: u64,
}

impl Integrator {
    pub fn new(params: &LumpedParams, mode: Mode, dt: f64, initial: State) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(SimError::Invalid(format!("dt must be positive, got {dt}")));
        }
        let limit = params.max_dt(mode);
        if dt > limit {
            return Err(SimError::StepTooLarge {
                dt,
                limit,
                reason: "mechanical period / 50",
            });
        }
        Ok(Self {
            params: params.clone(),
            mode,
            dt,
            state: initial,
            steps: 0,
        })
    }

    pub fn state(&self) -> State {
        self.state
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    fn load_cell(&self, x: f64) -> f64 {
        let p = &self.params;
        (p.k_contact * x + p.preload).max(0.0)
    }

    /// Contact force above the preload baseline (0 in free mode).
    pub fn contact_force(&self, s: &State) -> f64 {
        match self.mode {
            Mode::Blocked => self.load_cell(s.x) - self.params.preload,
            Mode::Free => 0.0,
        }
    }

    pub fn derivative(&self, s: &State, volts: f64) -> State {
        let p = &self.params;
        let km = p.km_at(s.x);
        let di = (volts - p.r_ohm * s.i - km * s.v) / p.l_h;
        let mut f = km * s.i - p.k * s.x - p.c * s.v;
        if self.mode == Mode::Blocked {
            f -= self.contact_force(s);
        }
        State {
            x: s.v,
            v: f / p.m_mov,
            i: di,
        }
    }

    /// Advance one step with the drive held at `volts`.
    pub fn step(&mut self, volts: f64) -> Result<State> {
        let h = self.dt;
        let s = self.state;
        let k1 = self.derivative(&s, volts);
        let k2 = self.derivative(&s.axpy(0.5 * h, k1), volts);
        let k3 = self.derivative(&s.axpy(0.5 * h, k2), volts);
        let k4 = self.derivative(&s.axpy(h, k3), volts);
        let next = State {
            x: s.x + h / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
            v: s.v + h / 6.0 * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v),
            i: s.i + h / 6.0 * (k1.i + 2.0 * k2.i + 2.0 * k3.i + k4.i),
        };
        self.steps += 1;
        if !(next.x.abs() <= MAX_DISPLACEMENT) {
            return Err(SimError::Unstable {
                t: self.time(),
                x: next.x,
            });
        }
        self.state = next;
        Ok(next)
    }
}

/// Simulated time series. All columns have equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub mode: Mode,
    pub time: Vec<f64>,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub current: Vec<f64>,
    /// Contact force above preload (N); zero in free mode.
    pub force: Vec<f64>,
    /// Magnet acceleration in multiples of [`G`].
    pub accel: Vec<f64>,
}

impl SimTrace {
    pub fn with_capacity(mode: Mode, n: usize) -> Self {
        Self {
            mode,
            time: Vec::with_capacity(n),
            x: Vec::with_capacity(n),
            v: Vec::with_capacity(n),
            current: Vec::with_capacity(n),
            force: Vec::with_capacity(n),
            accel: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    fn push(&mut self, t: f64, s: &State, force: f64, accel: f64) {
        self.time.push(t);
        self.x.push(s.x);
        self.v.push(s.v);
        self.current.push(s.i);
        self.force.push(force);
        self.accel.push(accel);
    }

    /// The response column for this mode: force (blocked) or accel (free).
    pub fn response(&self) -> &[f64] {
        match self.mode {
            Mode::Blocked => &self.force,
            Mode::Free => &self.accel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub dt: f64,
    /// Record every n-th step.
    pub record_stride: usize,
    pub initial: State,
}

impl SimOptions {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            record_stride: 1,
            initial: State::default(),
        }
    }
}

/// Run `signal` through the model with step `dt`, recording every step.
pub fn simulate(p: &LumpedParams, signal: &DriveSignal, mode: Mode, dt: f64) -> Result<SimTrace> {
    simulate_with(p, signal, mode, SimOptions::new(dt))
}

pub fn simulate_with(
    p: &LumpedParams,
    signal: &DriveSignal,
    mode: Mode,
    opts: SimOptions,
) -> Result<SimTrace> {
    let dt = opts.dt;
    if !(dt > 0.0) {
        return Err(SimError::Invalid(format!("dt must be positive, got {dt}")));
    }
    let sample_limit = 1.0 / (10.0 * signal.sample_rate);
    if dt > sample_limit * (1.0 + 1e-12) {
        return Err(SimError::StepTooLarge {
            dt,
            limit: sample_limit,
            reason: "drive Nyquist / 20",
        });
    }
    let mut integ = Integrator::new(p, mode, dt, opts.initial)?;
    let n_steps = (signal.duration() / dt).round() as usize;
    let stride = opts.record_stride.max(1);
    let mut trace = SimTrace::with_capacity(mode, n_steps / stride + 1);

    let record = |trace: &mut SimTrace, integ: &Integrator, t: f64, s: &State, volts: f64| {
        let a = integ.derivative(s, volts).v / G;
        trace.push(t, s, integ.contact_force(s), a);
    };

    let mut s = integ.state();
    record(&mut trace, &integ, 0.0, &s, signal.value_at(0.0));
    for n in 0..n_steps {
        let volts = signal.value_at(n as f64 * dt);
        s = integ.step(volts)?;
        if (n + 1) % stride == 0 {
            let t = (n + 1) as f64 * dt;
            record(&mut trace, &integ, t, &s, signal.value_at(t));
        }
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    /// Time of first crossing of 90% of the settled value (s).
    pub t90: f64,
    /// Mean over the final 10% of the trace.
    pub f_ss: f64,
}

pub fn step_metrics(trace: &SimTrace) -> Result<StepMetrics> {
    if trace.mode != Mode::Blocked {
        return Err(SimError::NotBlocked);
    }
    step_metrics_of(&trace.time, &trace.force)
}

/// Step metrics of an arbitrary sampled response, interpolating the crossing.
pub fn step_metrics_of(time: &[f64], values: &[f64]) -> Result<StepMetrics> {
    let n = values.len();
    if n < 2 || time.len() != n {
        return Err(SimError::NoCrossing);
    }
    let window = (n / 10).max(1);
    let f_ss = values[n - window..].iter().sum::<f64>() / window as f64;
    if !(f_ss > 0.0) {
        return Err(SimError::NoCrossing);
    }
    let level = 0.9 * f_ss;
    if values[0] >= level {
        return Ok(StepMetrics { t90: time[0], f_ss });
    }
    for i in 1..n {
        if values[i] >= level {
            let frac = (level - values[i - 1]) / (values[i] - values[i - 1]);
            let t90 = time[i - 1] + frac * (time[i] - time[i - 1]);
            return Ok(StepMetrics { t90, f_ss });
        }
    }
    Err(SimError::NoCrossing)
}

/// Blocked-mode step: `volts` from t=0, metrics of the contact force.
pub fn blocked_step_response(p: &LumpedParams, volts: f64, duration: f64) -> Result<StepMetrics> {
    let dt = p.auto_dt(Mode::Blocked);
    let fs = 1.0 / (10.0 * dt);
    let sig = DriveSignal::step(volts, fs, duration)?;
    let trace = simulate(p, &sig, Mode::Blocked, dt)?;
    step_metrics(&trace)
}

/// Settling horizon for a step or sweep: ten of the slowest time constants.
pub fn settle_time(p: &LumpedParams) -> f64 {
    10.0 * p.electrical_time_constant().max(2.0 * p.m_mov / p.c)
}

/// Steady-state transfer from drive voltage to the mode's response, per volt:
/// contact force (N/V) in blocked mode, acceleration (G/V) in free mode.
///
/// Linear model about rest; in blocked mode valid while contact holds.
pub fn frequency_response(p: &LumpedParams, mode: Mode, freq: f64) -> Complex64 {
    let w = 2.0 * PI * freq;
    let jw = Complex64::new(0.0, w);
    let km = p.km_at(0.0);
    let z_e = p.r_ohm + jw * p.l_h;
    let z_m = jw * p.m_mov + p.c + p.effective_stiffness(mode) / jw;
    let vel = km / (z_e * z_m + km * km);
    match mode {
        Mode::Blocked => vel * p.k_contact / jw,
        Mode::Free => vel * jw / G,
    }
}

/// Coil current per volt in steady state.
pub fn current_response(p: &LumpedParams, mode: Mode, freq: f64) -> Complex64 {
    let w = 2.0 * PI * freq;
    let jw = Complex64::new(0.0, w);
    let km = p.km_at(0.0);
    let z_e = p.r_ohm + jw * p.l_h;
    let z_m = jw * p.m_mov + p.c + p.effective_stiffness(mode) / jw;
    z_m / (z_e * z_m + km * km)
}

/// Frequency and magnitude of the largest free-mode acceleration per volt in
/// `[lo, hi]` Hz.
pub fn accel_peak(p: &LumpedParams, lo: f64, hi: f64) -> (f64, f64) {
    let mag = |f: f64| frequency_response(p, Mode::Free, f).norm();
    let n = 400;
    let (llo, lhi) = (lo.ln(), hi.ln());
    let grid: Vec<f64> = (0..=n)
        .map(|i| (llo + (lhi - llo) * i as f64 / n as f64).exp())
        .collect();
    let best = (0..=n)
        .max_by(|&a, &b| mag(grid[a]).total_cmp(&mag(grid[b])))
        .unwrap_or(0);
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(n)];
    // golden section on the bracketing cells
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    for _ in 0..80 {
        if mag(c) > mag(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    let f = 0.5 * (a + b);
    (f, mag(f))
}

/// -3 dB bandwidth of the blocked contact-force response (Hz).
pub fn force_bandwidth(p: &LumpedParams) -> Option<f64> {
    let h0 = frequency_response(p, Mode::Blocked, 1e-4).norm();
    let target = h0 / 2f64.sqrt();
    let mag = |f: f64| frequency_response(p, Mode::Blocked, f).norm();
    let mut lo = 1e-3;
    let mut hi = lo;
    while mag(hi) >= target {
        lo = hi;
        hi *= 1.05;
        if hi > 1e5 {
            return None;
        }
    }
    for _ in 0..100 {
        let mid = (lo * hi).sqrt();
        if mag(mid) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some((lo * hi).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    /// Integration step; `None` picks [`LumpedParams::auto_dt`].
    pub dt: Option<f64>,
    /// Minimum number of discarded periods.
    pub settle_periods: usize,
    pub measure_periods: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            dt: None,
            settle_periods: 5,
            measure_periods: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub freq: f64,
    pub amplitude_v: f64,
    /// Steady amplitude: contact force (N) or acceleration (G).
    pub response: f64,
}

/// Steady-state amplitude at every (amplitude, frequency) pair.
///
/// Each run discards `max(settle_periods, settle_time)` of transient, then
/// takes half the peak-to-peak response over `measure_periods` periods.
/// Points run in parallel; output order is amplitude-major.
pub fn freq_sweep(
    p: &LumpedParams,
    amplitudes: &[f64],
    freqs: &[f64],
    mode: Mode,
    opts: SweepOptions,
) -> Result<Vec<SweepPoint>> {
    let jobs: Vec<(f64, f64)> = amplitudes
        .iter()
        .flat_map(|&a| freqs.iter().map(move |&f| (a, f)))
        .collect();
    jobs.par_iter()
        .map(|&(a, f)| sweep_point(p, a, f, mode, &opts))
        .collect()
}

fn sweep_point(
    p: &LumpedParams,
    amplitude: f64,
    freq: f64,
    mode: Mode,
    opts: &SweepOptions,
) -> Result<SweepPoint> {
    if !(freq > 0.0) {
        return Err(SimError::Invalid(format!("frequency must be positive, got {freq}")));
    }
    if !(amplitude.abs() <= MAX_DRIVE_VOLTAGE) {
        return Err(SimError::DriveOutOfRange { value: amplitude });
    }
    let dt = opts.dt.unwrap_or_else(|| p.auto_dt(mode));
    let fs = 1.0 / (10.0 * dt);
    if fs < 10.0 * freq {
        return Err(SimError::StepTooLarge {
            dt,
            limit: 1.0 / (100.0 * freq),
            reason: "drive Nyquist / 20",
        });
    }
    let period = 1.0 / freq;
    let settle = (opts.settle_periods as f64 * period).max(settle_time(p));
    let settle = (settle / period).ceil() * period;
    let total = settle + opts.measure_periods.max(1) as f64 * period;

    let mut integ = Integrator::new(p, mode, dt, State::default())?;
    let n_steps = (total / dt).round() as usize;
    let n_settle = (settle / dt).round() as usize;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for n in 0..n_steps {
        // sample-and-hold at fs, as a DriveSignal would
        let t_sample = ((n as f64 * dt) * fs + 1e-9).floor() / fs;
        let volts = amplitude * (2.0 * PI * freq * t_sample).sin();
        let s = integ.step(volts)?;
        if n + 1 >= n_settle {
            let y = match mode {
                Mode::Blocked => integ.contact_force(&s),
                Mode::Free => {
                    let t_next = (((n + 1) as f64 * dt) * fs + 1e-9).floor() / fs;
                    let v_next = amplitude * (2.0 * PI * freq * t_next).sin();
                    integ.derivative(&s, v_next).v / G
                }
            };
            lo = lo.min(y);
            hi = hi.max(y);
        }
    }
    Ok(SweepPoint {
        freq,
        amplitude_v: amplitude,
        response: 0.5 * (hi - lo),
    })
}

/// 1 G crossing reported as "exceeds 1 G starting from" a frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelOnset {
    pub freq: f64,
    pub level_g: f64,
    /// Fractional headroom above `level_g` demanded at `freq`.
    pub margin: f64,
}

impl AccelOnset {
    pub fn target(&self) -> f64 {
        self.level_g * (1.0 + self.margin)
    }
}

/// Measured characteristics the lumped model is fitted to.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTargets {
    /// Voltage/current pair that defines R.
    pub ref_voltage: f64,
    pub ref_current: f64,
    /// Blocked steady force `f_max` at `v_max`.
    pub v_max: f64,
    pub f_max: f64,
    /// Free-mode resonance (Hz).
    pub f_res: Option<f64>,
    /// Peak free-mode acceleration (G) at `accel_drive` volts amplitude.
    pub peak_accel_g: Option<f64>,
    pub accel_drive: f64,
    pub accel_onset: Option<AccelOnset>,
    /// Blocked step rise time to 90% at `v_max` (s).
    pub t90: Option<f64>,
    /// Blocked-force -3 dB bandwidth (Hz).
    pub force_bandwidth: Option<f64>,
    /// Declared moving mass (kg); not identifiable from the other targets.
    pub moving_mass: f64,
    pub preload: f64,
}

impl CalibrationTargets {
    /// Bench measurements of the prototype.
    pub fn bench() -> Self {
        Self {
            ref_voltage: 3.0,
            ref_current: 0.35,
            v_max: DEFAULT_V_MAX,
            f_max: 0.4,
            f_res: Some(210.0),
            peak_accel_g: Some(58.0),
            accel_drive: 3.0,
            accel_onset: Some(AccelOnset {
                freq: 40.0,
                level_g: 1.0,
                margin: 0.1,
            }),
            t90: Some(44.6e-3),
            force_bandwidth: None,
            moving_mass: DEFAULT_MOVING_MASS,
            preload: DEFAULT_PRELOAD,
        }
    }

    /// Same, but with the step timing replaced by the ~10 Hz blocked-force
    /// band, so t90 can be predicted rather than fitted.
    pub fn bench_without_t90() -> Self {
        Self {
            t90: None,
            force_bandwidth: Some(10.0),
            ..Self::bench()
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("calibration precondition failed: {0}")]
    Precondition(String),
    #[error("calibration did not converge after {evals} evaluations (worst residual {worst:.3e})")]
    NonConvergence {
        evals: usize,
        worst: f64,
        best: Box<CalibrationReport>,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub name: &'static str,
    pub target: f64,
    pub achieved: f64,
}

impl Residual {
    pub fn relative(&self) -> f64 {
        (self.achieved - self.target) / self.target
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub params: LumpedParams,
    pub residuals: Vec<Residual>,
    /// `Km k_c / (k + k_c)`, the static force per ampere at the load cell.
    pub blocked_force_constant: f64,
    pub evals: usize,
}

impl CalibrationReport {
    pub fn worst_residual(&self) -> f64 {
        self.residuals
            .iter()
            .map(|r| r.relative().abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy)]
enum Free {
    Inductance,
    Damping,
    Contact,
}

const L_BOUNDS: (f64, f64) = (1e-5, 1.0);
const C_BOUNDS: (f64, f64) = (1e-4, 10.0);
const KC_BOUNDS: (f64, f64) = (1.0, 1e7);

/// Fit the lumped constants to `targets`.
///
/// `R`, `k` and `Km` follow in closed form from the reference current, the
/// resonance and the blocked force. The remaining `L`, `c`, `k_contact` are
/// fitted by bounded least squares on log residuals of whichever of peak
/// acceleration, onset acceleration, t90 and force bandwidth are present.
pub fn calibrate(targets: &CalibrationTargets) -> std::result::Result<CalibrationReport, CalibrationError> {
    let t = targets;
    let pre = |msg: &str| Err(CalibrationError::Precondition(msg.into()));
    if !(t.ref_voltage > 0.0 && t.ref_current > 0.0) {
        return pre("missing R-defining (V, I) pair");
    }
    if !(t.v_max > 0.0 && t.f_max > 0.0) {
        return pre("missing blocked force at V_max");
    }
    let Some(f_res) = t.f_res.filter(|f| *f > 0.0) else {
        return pre("missing resonance frequency target");
    };
    let (m_lo, m_hi) = MOVING_MASS_BOUNDS;
    if !(t.moving_mass >= m_lo && t.moving_mass <= m_hi) {
        return Err(CalibrationError::Precondition(format!(
            "moving mass {:.3e} kg outside [{m_lo:.2e}, {m_hi:.2e}]",
            t.moving_mass
        )));
    }

    let r = t.ref_voltage / t.ref_current;
    let m = t.moving_mass;
    let k = m * (2.0 * PI * f_res).powi(2);
    let build = |l: f64, c: f64, kc: f64| LumpedParams {
        r_ohm: r,
        l_h: l,
        km: t.f_max * r / t.v_max * (k + kc) / kc,
        m_mov: m,
        k,
        c,
        preload: t.preload,
        k_contact: kc,
        v_max: t.v_max,
        km_table: None,
    };

    // Starting guesses.
    let l0 = match (t.t90, t.force_bandwidth) {
        (Some(t90), _) => r * t90 / LN_10,
        (None, Some(bw)) => r / (2.0 * PI * bw),
        _ => 1e-3,
    };
    let kc0 = if t.accel_onset.is_some() { k } else { 100.0 * k };
    let c0 = match t.peak_accel_g {
        Some(a) => {
            let p = build(l0, 1.0, kc0);
            let w = 2.0 * PI * f_res;
            let i = t.accel_drive / (r * r + (w * l0).powi(2)).sqrt();
            (w * p.km * i / (a * G)).clamp(C_BOUNDS.0, C_BOUNDS.1)
        }
        None => 2.0 * m * 2.0 * PI * f_res / 10.0,
    };

    let mut free = Vec::new();
    if t.t90.is_some() || t.force_bandwidth.is_some() {
        free.push(Free::Inductance);
    }
    if t.peak_accel_g.is_some() {
        free.push(Free::Damping);
    }
    if t.accel_onset.is_some() {
        free.push(Free::Contact);
    }

    let unpack = |x: &[f64]| -> (f64, f64, f64) {
        let (mut l, mut c, mut kc) = (l0, c0, kc0);
        for (v, which) in x.iter().zip(&free) {
            match which {
                Free::Inductance => l = v.exp(),
                Free::Damping => c = v.exp(),
                Free::Contact => kc = v.exp(),
            }
        }
        (l, c, kc)
    };
    let in_bounds = |l: f64, c: f64, kc: f64| {
        (L_BOUNDS.0..=L_BOUNDS.1).contains(&l)
            && (C_BOUNDS.0..=C_BOUNDS.1).contains(&c)
            && (KC_BOUNDS.0..=KC_BOUNDS.1).contains(&kc)
    };

    let residuals = |p: &LumpedParams| -> Result<Vec<Residual>> {
        let mut out = Vec::new();
        if let Some(a) = t.peak_accel_g {
            let (_, per_volt) = accel_peak(p, 0.5 * f_res, 2.0 * f_res);
            out.push(Residual {
                name: "peak_accel_G",
                target: a,
                achieved: per_volt * t.accel_drive,
            });
        }
        if let Some(on) = t.accel_onset {
            out.push(Residual {
                name: "onset_accel_G",
                target: on.target(),
                achieved: frequency_response(p, Mode::Free, on.freq).norm() * t.accel_drive,
            });
        }
        if let Some(t90) = t.t90 {
            let dur = 0.3_f64.max(15.0 * p.electrical_time_constant());
            let sm = blocked_step_response(p, t.v_max, dur)?;
            out.push(Residual {
                name: "t90_s",
                target: t90,
                achieved: sm.t90,
            });
        }
        if let Some(bw) = t.force_bandwidth {
            out.push(Residual {
                name: "force_bandwidth_Hz",
                target: bw,
                achieved: force_bandwidth(p).unwrap_or(f64::INFINITY),
            });
        }
        Ok(out)
    };

    let cost = |x: &[f64]| -> f64 {
        let (l, c, kc) = unpack(x);
        if !in_bounds(l, c, kc) {
            return f64::INFINITY;
        }
        match residuals(&build(l, c, kc)) {
            Ok(rs) => rs
                .iter()
                .map(|r| (r.achieved / r.target).ln().powi(2))
                .sum(),
            Err(_) => f64::INFINITY,
        }
    };

    let x0: Vec<f64> = free
        .iter()
        .map(|w| match w {
            Free::Inductance => l0.ln(),
            Free::Damping => c0.ln(),
            Free::Contact => kc0.ln(),
        })
        .collect();
    let (x, evals, converged) = if free.is_empty() {
        (x0, 0, true)
    } else {
        let opts = SimplexOptions {
            max_evals: 3000,
            f_tol: 1e-20,
            x_tol: 1e-9,
        };
        // Two passes: a restart shakes off a collapsed initial simplex.
        let first = simplex::minimize(&x0, &vec![0.3; x0.len()], opts, cost);
        let second = simplex::minimize(&first.x, &vec![0.05; x0.len()], opts, cost);
        (second.x, first.evals + second.evals, second.converged)
    };

    let (l, c, kc) = unpack(&x);
    let params = build(l, c, kc);
    let mut report_residuals = vec![Residual {
        name: "blocked_force_N",
        target: t.f_max,
        achieved: params.blocked_force_constant() * t.v_max / r,
    }];
    report_residuals.extend(residuals(&params)?);
    let report = CalibrationReport {
        blocked_force_constant: params.blocked_force_constant(),
        params,
        residuals: report_residuals,
        evals,
    };
    if !converged {
        return Err(CalibrationError::NonConvergence {
            evals,
            worst: report.worst_residual(),
            best: Box::new(report),
        });
    }
    Ok(report)
}

/// Lumped coil thermal model `C dT/dt = I^2 R - (T - T_amb) / R_th`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalParams {
    pub r_th: f64,
    pub c_th: f64,
    pub t_amb: f64,
}

impl ThermalParams {
    pub fn tau(&self) -> f64 {
        self.r_th * self.c_th
    }
}

/// Temperatures at each sample instant of `current` (same length), starting
/// from `t_amb`. Power is held per sample, and each interval is integrated
/// exactly.
pub fn thermal_sim(tp: &ThermalParams, r_ohm: f64, current: &[f64], dt: f64) -> Vec<f64> {
    thermal_sim_from(tp, r_ohm, current, dt, tp.t_amb)
}

pub fn thermal_sim_from(
    tp: &ThermalParams,
    r_ohm: f64,
    current: &[f64],
    dt: f64,
    t_start: f64,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(current.len());
    if current.is_empty() {
        return out;
    }
    let mut temp = t_start;
    out.push(temp);
    for &i in &current[..current.len() - 1] {
        temp = thermal_step(tp, temp, i * i * r_ohm, dt);
        out.push(temp);
    }
    out
}

/// One exact thermal step under constant power `power` for `dt`.
pub fn thermal_step(tp: &ThermalParams, temp: f64, power: f64, dt: f64) -> f64 {
    let decay = (-dt / tp.tau()).exp();
    tp.t_amb + (temp - tp.t_amb) * decay + power * tp.r_th * (1.0 - decay)
}

/// Heating observation: sinusoidal drive for a fixed time, final temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalTargets {
    pub drive_v: f64,
    pub freq: f64,
    pub duration: f64,
    pub t_final: f64,
    pub t_amb: f64,
    /// Declared thermal time constant `R_th C_th` (s).
    pub tau: f64,
    /// Peak coil current read during the test (A).
    pub measured_current: f64,
}

impl Default for ThermalTargets {
    fn default() -> Self {
        Self {
            drive_v: 3.0,
            freq: 100.0,
            duration: 100.0,
            t_final: 40.0,
            t_amb: 25.0,
            tau: 40.0,
            measured_current: 0.35,
        }
    }
}

impl ThermalTargets {
    /// Mean power from the measured peak current, `(I/sqrt 2)^2 R`.
    pub fn measured_power(&self, r_ohm: f64) -> f64 {
        (self.measured_current / 2f64.sqrt()).powi(2) * r_ohm
    }
}

/// Solve `R_th` so that `p_rms` heats from `t_amb` to `t_final` in
/// `duration`, with `tau` fixed.
pub fn thermal_fit(p_rms: f64, targets: &ThermalTargets) -> ThermalParams {
    let rise = targets.t_final - targets.t_amb;
    let r_th = rise / (p_rms * (1.0 - (-targets.duration / targets.tau).exp()));
    ThermalParams {
        r_th,
        c_th: targets.tau / r_th,
        t_amb: targets.t_amb,
    }
}

/// Steady-state mean coil power under a free-mode sine drive.
pub fn sine_drive_power(p: &LumpedParams, amplitude: f64, freq: f64) -> f64 {
    let i = current_response(p, Mode::Free, freq).norm() * amplitude;
    0.5 * i * i * p.r_ohm
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_params() -> LumpedParams {
        LumpedParams {
            r_ohm: 8.571,
            l_h: 2e-3,
            km: 0.5,
            m_mov: 0.45e-3,
            k: 783.0,
            c: 0.06,
            preload: DEFAULT_PRELOAD,
            k_contact: 1e5,
            v_max: 7.0,
            km_table: None,
        }
    }

    #[test]
    fn zero_drive_stays_at_rest() {
        let p = sample_params();
        let sig = DriveSignal::zero(10_000.0, 0.05).unwrap();
        for mode in [Mode::Blocked, Mode::Free] {
            let dt = p.auto_dt(mode);
            let tr = simulate(&p, &sig, mode, dt).unwrap();
            assert!(tr.x.iter().chain(&tr.force).chain(&tr.accel).all(|&y| y == 0.0));
        }
    }

    #[test]
    fn step_size_guards() {
        let p = sample_params();
        let sig = DriveSignal::zero(1000.0, 0.01).unwrap();
        assert!(matches!(
            simulate(&p, &sig, Mode::Free, 1e-3),
            Err(SimError::StepTooLarge { .. })
        ));
        assert!(matches!(
            simulate(&p, &sig, Mode::Free, 0.0),
            Err(SimError::Invalid(_))
        ));
    }

    #[test]
    fn runaway_is_reported() {
        let mut p = sample_params();
        p.k = 1.0;
        p.m_mov = 1e-3;
        p.c = 1e-4;
        let sig = DriveSignal::step(10.0, 1000.0, 2.0).unwrap();
        let err = simulate(&p, &sig, Mode::Free, 1e-4).unwrap_err();
        assert!(matches!(err, SimError::Unstable { .. }));
    }

    #[test]
    fn drive_bounds() {
        assert!(matches!(
            DriveSignal::step(11.0, 1000.0, 0.1),
            Err(SimError::DriveOutOfRange { .. })
        ));
        assert!(DriveSignal::sine(3.0, 200.0, 1000.0, 0.1).is_err());
        let imp = DriveSignal::impulse(5.0, 2e-3, 1000.0, 0.01).unwrap();
        assert_eq!(imp.samples, vec![5.0, 5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let ramp = DriveSignal::ramp(4.0, 4e-3, 1000.0, 0.006).unwrap();
        assert_eq!(ramp.samples, vec![0.0, 1.0, 2.0, 3.0, 4.0, 4.0]);
    }

    #[test]
    fn first_order_t90() {
        // tau ln 10 = 44.6 ms
        let tau = 19.37e-3;
        let dt = 1e-4;
        let time: Vec<f64> = (0..3000).map(|i| i as f64 * dt).collect();
        let y: Vec<f64> = time.iter().map(|t| 1.0 - (-t / tau).exp()).collect();
        let m = step_metrics_of(&time, &y).unwrap();
        assert!((m.t90 - 44.6e-3).abs() <= dt, "{}", m.t90);
    }

    #[test]
    fn step_metrics_rejects_free_and_flat() {
        let tr = SimTrace::with_capacity(Mode::Free, 0);
        assert_eq!(step_metrics(&tr), Err(SimError::NotBlocked));
        assert_eq!(
            step_metrics_of(&[0.0, 1.0, 2.0], &[0.0, 0.0, 0.0]),
            Err(SimError::NoCrossing)
        );
    }

    #[test]
    fn nice_steps() {
        assert_eq!(nice_step_below(1.5e-5), 1e-5);
        assert_eq!(nice_step_below(2.7e-6), 2e-6);
        assert_eq!(nice_step_below(6e-4), 5e-4);
    }

    #[test]
    fn km_table_interpolates() {
        let prof = [
            KmSample { offset: -1e-3, km: 0.4 },
            KmSample { offset: 0.0, km: 0.5 },
            KmSample { offset: 1e-3, km: 0.3 },
        ];
        let t = KmTable::from_profile(&prof, 0.0).unwrap();
        assert_eq!(t.scale_at(0.0), 1.0);
        assert!((t.scale_at(0.5e-3) - 0.8).abs() < 1e-12);
        assert!((t.scale_at(-5e-3) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn thermal_fit_with_measured_current() {
        let tt = ThermalTargets::default();
        let p = tt.measured_power(8.57);
        assert!((p - 0.525).abs() < 1e-3);
        let tp = thermal_fit(p, &tt);
        assert!((tp.r_th - 31.0).abs() < 0.5, "{}", tp.r_th);
        assert!((tp.tau() - 40.0).abs() < 1e-12);
        let doubled = thermal_fit(2.0 * p, &tt);
        assert!((2.0 * p * doubled.r_th - p * tp.r_th).abs() < 1e-9);
    }

    #[test]
    fn thermal_steady_state_and_rest() {
        let tp = ThermalParams {
            r_th: 30.0,
            c_th: 1.0,
            t_amb: 25.0,
        };
        assert!(thermal_sim(&tp, 8.57, &vec![0.0; 100], 0.1)
            .iter()
            .all(|&t| t == 25.0));
        let i = (0.5_f64 / 8.57).sqrt(); // 0.5 W
        let temps = thermal_sim(&tp, 8.57, &vec![i; 20_001], 0.05);
        assert!((temps.last().unwrap() - (25.0 + 0.5 * 30.0)).abs() < 1e-6);
    }
}
