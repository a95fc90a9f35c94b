//! Axisymmetric magnetostatics for the coil/magnet pair.
//!
//! Everything is built from one kernel: the closed-form field of a circular
//! current filament. The coil is a rectangular grid of filaments, the magnet
//! is its equivalent lateral sheet current split into loops, and the axial
//! force is the Lorentz force `I dl x B` summed over the magnet loops.
//!
//! Coordinates are cylindrical `(r, z)` in metres, `z` along the common axis.
//! Positive current circulates counter-clockwise seen from `+z`, so it makes
//! `B_z > 0` at the loop centre.

use std::f64::consts::PI;

use thiserror::Error;

use crate::elliptic::ellip_k_kme;

/// Vacuum permeability (H/m).
pub const MU_0: f64 = 4.0e-7 * PI;

/// Observation points closer than this to a filament are rejected.
pub const SINGULAR_GUARD: f64 = 1e-9;

/// N42-grade NdFeB: remanence ~1.1 T over mu_0.
pub const DEFAULT_MAGNETIZATION: f64 = 8.75e5;
pub const DEFAULT_MAGNET_DENSITY: f64 = 7500.0;
pub const DEFAULT_FLUX_ALPHA: f64 = 2.0;

pub const DEFAULT_COIL_GRID: FilamentGrid = FilamentGrid { n_r: 8, n_z: 8 };
pub const DEFAULT_MAGNET_LOOPS: usize = 32;

/// CIP volume fractions of the four prototype diaphragms.
pub const CIP_DESIGNS: [f64; 4] = [0.0, 0.1, 0.2, 0.3];
pub const MAX_CIP_FRACTION: f64 = 0.4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MagneticsError {
    #[error("observation point (r={r:.3e} m, z={z:.3e} m) lies on a filament")]
    SingularPoint { r: f64, z: f64 },
    #[error("CIP volume fraction {0} outside [0, {MAX_CIP_FRACTION}]")]
    FractionOutOfRange(f64),
    #[error("offset {offset:.3e} m outside +/-{limit:.3e} m (coil thickness)")]
    OffsetOutOfRange { offset: f64, limit: f64 },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
}

pub type Result<T> = std::result::Result<T, MagneticsError>;

/// A single circular current filament coaxial with `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopSpec {
    pub radius: f64,
    pub axial_pos: f64,
    pub current: f64,
}

impl LoopSpec {
    pub fn new(radius: f64, axial_pos: f64, current: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(MagneticsError::InvalidGeometry(format!(
                "loop radius must be positive, got {radius}"
            )));
        }
        if !axial_pos.is_finite() || !current.is_finite() {
            return Err(MagneticsError::InvalidGeometry("non-finite loop field".into()));
        }
        Ok(Self {
            radius,
            axial_pos,
            current,
        })
    }

    pub fn shifted(self, dz: f64) -> Self {
        Self {
            axial_pos: self.axial_pos + dz,
            ..self
        }
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self {
            current: self.current * factor,
            ..self
        }
    }
}

/// Magnetic flux density at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldVector {
    pub b_r: f64,
    pub b_z: f64,
    pub r: f64,
    pub z: f64,
}

impl std::ops::Add for FieldVector {
    type Output = FieldVector;
    fn add(self, rhs: FieldVector) -> FieldVector {
        FieldVector {
            b_r: self.b_r + rhs.b_r,
            b_z: self.b_z + rhs.b_z,
            r: self.r,
            z: self.z,
        }
    }
}

/// Field of one filament at `(r, z)`, closed form in complete elliptic
/// integrals (Simpson et al.).
pub fn loop_field(lp: &LoopSpec, r: f64, z: f64) -> Result<FieldVector> {
    let a = lp.radius;
    let dz = z - lp.axial_pos;
    let r = r.abs();
    let dist = ((r - a).powi(2) + dz * dz).sqrt();
    if dist <= SINGULAR_GUARD {
        return Err(MagneticsError::SingularPoint { r, z });
    }

    let rho2 = a * a + r * r + dz * dz;
    let alpha2 = (r - a).powi(2) + dz * dz;
    let beta2 = rho2 + 2.0 * a * r;
    let beta = beta2.sqrt();
    let k2 = 4.0 * a * r / beta2;
    let (kk, kme) = ellip_k_kme(k2);
    let ee = kk - kme;
    let c = MU_0 * lp.current / PI;

    let b_z = c / (2.0 * alpha2 * beta) * ((a * a - r * r - dz * dz) * ee + alpha2 * kk);
    let b_r = if r == 0.0 {
        0.0
    } else if k2 < 1e-8 {
        // near-axis series; the closed form cancels catastrophically here
        let s = a * a + dz * dz;
        3.0 * MU_0 * lp.current * a * a * dz * r / (4.0 * s.powf(2.5))
    } else {
        // rho2 E - alpha2 K, regrouped so the O(1) parts cancel analytically
        c * dz / (2.0 * alpha2 * beta * r) * (2.0 * a * r * kk - rho2 * kme)
    };
    Ok(FieldVector { b_r, b_z, r, z })
}

/// Superposed field of a filament set.
pub fn filaments_field(loops: &[LoopSpec], r: f64, z: f64) -> Result<FieldVector> {
    let mut acc = FieldVector {
        r: r.abs(),
        z,
        ..Default::default()
    };
    for lp in loops {
        acc = acc + loop_field(lp, r, z)?;
    }
    Ok(acc)
}

/// Axial force on `targets` due to the field of `sources`.
///
/// `F_z = sum_j -2 pi r_j I_j B_r(r_j, z_j)`; the azimuthal current in a radial
/// field gives `phi x r = -z`.
pub fn filament_set_force(sources: &[LoopSpec], targets: &[LoopSpec]) -> Result<f64> {
    let mut fz = 0.0;
    for t in targets {
        let b = filaments_field(sources, t.radius, t.axial_pos)?;
        fz -= 2.0 * PI * t.radius * t.current * b.b_r;
    }
    Ok(fz)
}

/// Number of filaments along each axis of a coil cross-section.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilamentGrid {
    pub n_r: usize,
    pub n_z: usize,
}

impl FilamentGrid {
    pub fn square(n: usize) -> Self {
        Self { n_r: n, n_z: n }
    }
}

/// Multi-turn solenoid coil with a rectangular winding cross-section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoilSpec {
    pub inner_radius: f64,
    pub width: f64,
    pub thickness: f64,
    pub turns: u32,
    pub axial_center: f64,
}

impl CoilSpec {
    pub fn new(
        inner_radius: f64,
        width: f64,
        thickness: f64,
        turns: u32,
        axial_center: f64,
    ) -> Result<Self> {
        if !(inner_radius > 0.0) {
            return Err(MagneticsError::InvalidGeometry(format!(
                "coil inner radius must be positive, got {inner_radius}"
            )));
        }
        if !(width > 0.0) || !(thickness > 0.0) {
            return Err(MagneticsError::InvalidGeometry(format!(
                "coil width and thickness must be positive, got {width} x {thickness}"
            )));
        }
        if turns == 0 {
            return Err(MagneticsError::InvalidGeometry("coil needs at least one turn".into()));
        }
        Ok(Self {
            inner_radius,
            width,
            thickness,
            turns,
            axial_center,
        })
    }

    /// Zero-section coil: all turns on one circle. Degenerate on purpose.
    pub fn thin(radius: f64, turns: u32, axial_center: f64) -> Self {
        Self {
            inner_radius: radius,
            width: 0.0,
            thickness: 0.0,
            turns,
            axial_center,
        }
    }

    pub fn outer_radius(&self) -> f64 {
        self.inner_radius + self.width
    }

    pub fn mean_radius(&self) -> f64 {
        self.inner_radius + 0.5 * self.width
    }

    /// Cell-centred filaments carrying `turns * drive_current` in total.
    pub fn filaments(&self, drive_current: f64, grid: FilamentGrid) -> Vec<LoopSpec> {
        let (nr, nz) = (grid.n_r.max(1), grid.n_z.max(1));
        let per = self.turns as f64 * drive_current / (nr * nz) as f64;
        let z0 = self.axial_center - 0.5 * self.thickness;
        let mut out = Vec::with_capacity(nr * nz);
        for iz in 0..nz {
            let z = z0 + (iz as f64 + 0.5) * self.thickness / nz as f64;
            for ir in 0..nr {
                let r = self.inner_radius + (ir as f64 + 0.5) * self.width / nr as f64;
                out.push(LoopSpec {
                    radius: r,
                    axial_pos: z,
                    current: per,
                });
            }
        }
        out
    }
}

/// Uniformly axially magnetized cylinder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnetSpec {
    pub radius: f64,
    pub height: f64,
    pub magnetization: f64,
    pub density: f64,
}

impl MagnetSpec {
    pub fn new(radius: f64, height: f64, magnetization: f64, density: f64) -> Result<Self> {
        if !(radius > 0.0) || !(height > 0.0) {
            return Err(MagneticsError::InvalidGeometry(format!(
                "magnet radius and height must be positive, got {radius} x {height}"
            )));
        }
        if !(magnetization > 0.0) || !(density > 0.0) {
            return Err(MagneticsError::InvalidGeometry(
                "magnetization and density must be positive".into(),
            ));
        }
        Ok(Self {
            radius,
            height,
            magnetization,
            density,
        })
    }

    /// NdFeB cylinder with default magnetization and density.
    pub fn ndfeb(radius: f64, height: f64) -> Result<Self> {
        Self::new(radius, height, DEFAULT_MAGNETIZATION, DEFAULT_MAGNET_DENSITY)
    }

    pub fn dipole_moment(&self) -> f64 {
        self.magnetization * PI * self.radius * self.radius * self.height
    }
}

/// Equivalent surface-current loops of `magnet`, centred on `z = 0`.
///
/// The lateral sheet current density is `M` (A/m); it is split into `n`
/// equal loops at the cell midpoints, so the currents sum to `M * h`.
pub fn magnet_filaments(magnet: &MagnetSpec, n: usize) -> Vec<LoopSpec> {
    let n = n.max(1);
    let per = magnet.magnetization * magnet.height / n as f64;
    (0..n)
        .map(|i| LoopSpec {
            radius: magnet.radius,
            axial_pos: -0.5 * magnet.height + (i as f64 + 0.5) * magnet.height / n as f64,
            current: per,
        })
        .collect()
}

/// Magnetorheological-elastomer diaphragm, reduced to a flux gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MreSpec {
    pub cip_vol_fraction: f64,
    pub alpha: f64,
}

impl MreSpec {
    pub fn new(cip_vol_fraction: f64, alpha: f64) -> Result<Self> {
        if !(0.0..=MAX_CIP_FRACTION).contains(&cip_vol_fraction) {
            return Err(MagneticsError::FractionOutOfRange(cip_vol_fraction));
        }
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(MagneticsError::InvalidGeometry(format!(
                "flux alpha must be >= 0, got {alpha}"
            )));
        }
        Ok(Self {
            cip_vol_fraction,
            alpha,
        })
    }

    /// One of the four prototype diaphragms, 1-based as in the test series.
    pub fn design(index: usize) -> Option<Self> {
        CIP_DESIGNS
            .get(index.checked_sub(1)?)
            .map(|&f| Self {
                cip_vol_fraction: f,
                alpha: DEFAULT_FLUX_ALPHA,
            })
    }

    /// Bare silicone, no flux concentration.
    pub fn none() -> Self {
        Self {
            cip_vol_fraction: 0.0,
            alpha: DEFAULT_FLUX_ALPHA,
        }
    }
}

impl Default for MreSpec {
    fn default() -> Self {
        Self {
            cip_vol_fraction: 0.3,
            alpha: DEFAULT_FLUX_ALPHA,
        }
    }
}

/// `eta = 1 + alpha * fraction`.
pub fn flux_factor(mre: &MreSpec) -> Result<f64> {
    if !(0.0..=MAX_CIP_FRACTION).contains(&mre.cip_vol_fraction) {
        return Err(MagneticsError::FractionOutOfRange(mre.cip_vol_fraction));
    }
    Ok(1.0 + mre.alpha * mre.cip_vol_fraction)
}

pub fn coil_field(coil: &CoilSpec, drive_current: f64, r: f64, z: f64) -> Result<FieldVector> {
    coil_field_with_grid(coil, drive_current, r, z, DEFAULT_COIL_GRID)
}

pub fn coil_field_with_grid(
    coil: &CoilSpec,
    drive_current: f64,
    r: f64,
    z: f64,
    grid: FilamentGrid,
) -> Result<FieldVector> {
    filaments_field(&coil.filaments(drive_current, grid), r, z)
}

/// Filament resolution used by [`axial_force_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForceResolution {
    pub coil: FilamentGrid,
    pub magnet_loops: usize,
}

impl Default for ForceResolution {
    fn default() -> Self {
        Self {
            coil: DEFAULT_COIL_GRID,
            magnet_loops: DEFAULT_MAGNET_LOOPS,
        }
    }
}

/// Axial force on the magnet (N), positive pushing it toward `+z` (the skin).
///
/// `axial_offset` is the magnet centre minus the coil centre.
pub fn axial_force(
    coil: &CoilSpec,
    drive_current: f64,
    magnet: &MagnetSpec,
    axial_offset: f64,
    mre: &MreSpec,
) -> Result<f64> {
    axial_force_with(
        coil,
        drive_current,
        magnet,
        axial_offset,
        mre,
        ForceResolution::default(),
    )
}

pub fn axial_force_with(
    coil: &CoilSpec,
    drive_current: f64,
    magnet: &MagnetSpec,
    axial_offset: f64,
    mre: &MreSpec,
    res: ForceResolution,
) -> Result<f64> {
    let eta = flux_factor(mre)?;
    if drive_current == 0.0 {
        return Ok(0.0);
    }
    let sources = coil.filaments(drive_current, res.coil);
    let targets: Vec<LoopSpec> = magnet_filaments(magnet, res.magnet_loops)
        .into_iter()
        .map(|l| l.shifted(coil.axial_center + axial_offset))
        .collect();
    Ok(filament_set_force(&sources, &targets)? * eta)
}

/// One row of a force-constant table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmSample {
    pub offset: f64,
    pub km: f64,
}

/// `Km(z)`: axial force per ampere at each magnet offset.
pub fn force_constant_profile(
    coil: &CoilSpec,
    magnet: &MagnetSpec,
    mre: &MreSpec,
    offsets: &[f64],
) -> Result<Vec<KmSample>> {
    offsets
        .iter()
        .map(|&offset| {
            if offset.abs() > coil.thickness {
                return Err(MagneticsError::OffsetOutOfRange {
                    offset,
                    limit: coil.thickness,
                });
            }
            let km = axial_force(coil, 1.0, magnet, offset, mre)?;
            Ok(KmSample { offset, km })
        })
        .collect()
}
