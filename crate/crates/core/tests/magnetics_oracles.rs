mod common;

use common::{biot_savart_loop, ellip_carlson, mutual_inductance, rel, MU_0};
use proptest::prelude::*;
use std::f64::consts::PI;
use stem_twin::elliptic::ellip_ke;
use stem_twin::magnetics::*;

#[test]
fn agm_agrees_with_carlson() {
    for i in 0..200 {
        let m = i as f64 / 200.0 * 0.999;
        let (k, e) = ellip_ke(m);
        let (kc, ec) = ellip_carlson(m);
        assert!(rel(k, kc) < 1e-13, "K({m})");
        assert!(rel(e, ec) < 1e-13, "E({m})");
    }
}

#[test]
fn mutual_inductance_reciprocal_and_far_limit() {
    let (a, b) = (3e-3, 2e-3);
    assert!(rel(mutual_inductance(a, b, 1e-3), mutual_inductance(b, a, 1e-3)) < 1e-14);
    // far apart: M -> mu0 pi a^2 b^2 / (2 d^3)
    let d: f64 = 0.5;
    let far = MU_0 * PI * a * a * b * b / (2.0 * d.powi(3));
    assert!(rel(mutual_inductance(a, b, d), far) < 1e-4);
}

fn sample_pair() -> (CoilSpec, MagnetSpec) {
    (
        CoilSpec::new(3e-3, 2e-3, 3e-3, 292, 0.0).unwrap(),
        MagnetSpec::ndfeb(2e-3, 4e-3).unwrap(),
    )
}

#[test]
fn coil_field_richardson_convergence() {
    let (coil, _) = sample_pair();
    // bore and far-side points; next to the winding corner the midpoint grid needs more cells
    for &(r, z) in &[(1e-3, 2e-3), (0.0, 0.0), (0.0, 4e-3), (8e-3, 4e-3), (1.5e-3, -1e-3)] {
        let b = |n: usize| coil_field_with_grid(&coil, 0.35, r, z, FilamentGrid::square(n)).unwrap();
        let (b4, b8, b16) = (b(4), b(8), b(16));
        for (c4, c8, c16) in [(b4.b_z, b8.b_z, b16.b_z), (b4.b_r, b8.b_r, b16.b_r)] {
            if c16.abs() < 1e-3 * b16.b_z.hypot(b16.b_r) {
                continue;
            }
            // observed order of the midpoint rule
            let order = ((c4 - c8) / (c8 - c16)).abs().log2();
            assert!(order > 1.5, "order {order} at ({r}, {z})");
            let extrapolated = c16 + (c16 - c8) / 3.0;
            assert!(rel(c16, extrapolated) <= 1e-3, "({r}, {z}): {c16} vs {extrapolated}");
        }
    }
}

#[test]
fn force_converges_under_refinement() {
    let (coil, magnet) = sample_pair();
    let mre = MreSpec::none();
    let force = |n: usize| {
        axial_force_with(
            &coil,
            0.35,
            &magnet,
            -1.0e-3,
            &mre,
            ForceResolution {
                coil: FilamentGrid::square(n),
                magnet_loops: 4 * n,
            },
        )
        .unwrap()
    };
    let (f4, f8, f16) = (force(4), force(8), force(16));
    assert!((f16 - f8).abs() < (f8 - f4).abs());
    assert!(rel(f8, f16) <= 5e-3, "8 vs 16 grid: {f8} {f16}");
}

#[test]
fn force_decays_beyond_contact_range() {
    let (coil, magnet) = sample_pair();
    let mre = MreSpec::none();
    let start = coil.thickness + magnet.height;
    let mut last = f64::INFINITY;
    for i in 0..40 {
        let off = start + i as f64 * 0.5e-3;
        let f = axial_force(&coil, 0.35, &magnet, off, &mre).unwrap().abs();
        assert!(f < last, "not decaying at {off}");
        last = f;
    }
}

#[test]
fn force_is_linear_in_magnetization() {
    let coil = CoilSpec::new(3e-3, 2e-3, 3e-3, 292, 0.0).unwrap();
    let m1 = MagnetSpec::new(2e-3, 4e-3, 4e5, 7500.0).unwrap();
    let m2 = MagnetSpec::new(2e-3, 4e-3, 1.2e6, 7500.0).unwrap();
    let mre = MreSpec::default();
    let f1 = axial_force(&coil, 0.3, &m1, -1e-3, &mre).unwrap();
    let f2 = axial_force(&coil, 0.3, &m2, -1e-3, &mre).unwrap();
    assert!(rel(f2, 3.0 * f1) < 1e-12);
}

#[test]
fn magnet_far_field_is_a_dipole() {
    let magnet = MagnetSpec::ndfeb(2e-3, 4e-3).unwrap();
    let loops = magnet_filaments(&magnet, DEFAULT_MAGNET_LOOPS);
    let m = magnet.dipole_moment();
    for z in [0.05f64, 0.08, 0.12] {
        let b = filaments_field(&loops, 0.0, z).unwrap();
        let dipole = MU_0 * m / (2.0 * PI * z.powi(3));
        assert!(rel(b.b_z, dipole) < 0.01, "z={z}: {} vs {dipole}", b.b_z);
        // off axis, 45 degrees: B_r = 3 mu0 m sin cos / (4 pi R^3)
        let (r, zz) = (z / 2f64.sqrt(), z / 2f64.sqrt());
        let b = filaments_field(&loops, r, zz).unwrap();
        let br = 3.0 * MU_0 * m * 0.5 / (4.0 * PI * z.powi(3));
        assert!(rel(b.b_r, br) < 0.01);
    }
}

#[test]
fn force_constant_is_odd_in_offset() {
    let (coil, magnet) = sample_pair();
    let mre = MreSpec::default();
    let offs: Vec<f64> = (1..=6).map(|i| i as f64 * 0.4e-3).collect();
    let pos = force_constant_profile(&coil, &magnet, &mre, &offs).unwrap();
    let neg_offs: Vec<f64> = offs.iter().map(|o| -o).collect();
    let neg = force_constant_profile(&coil, &magnet, &mre, &neg_offs).unwrap();
    for (p, n) in pos.iter().zip(&neg) {
        assert!((p.km + n.km).abs() <= 1e-9 * p.km.abs(), "{} {}", p.km, n.km);
        // magnet above centre is pulled back down for positive current
        assert!(p.km < 0.0);
    }
    assert!(force_constant_profile(&coil, &magnet, &mre, &[4e-3]).is_err());
}

#[test]
fn mre_designs_scale_force() {
    let (coil, magnet) = sample_pair();
    let base = axial_force(&coil, 0.35, &magnet, -1e-3, &MreSpec::none()).unwrap();
    let mut last = base;
    for i in 2..=4 {
        let f = axial_force(&coil, 0.35, &magnet, -1e-3, &MreSpec::design(i).unwrap()).unwrap();
        assert!(f > last);
        last = f;
    }
    assert!(rel(last, base * (1.0 + 2.0 * 0.3)) < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loop_field_matches_quadrature(
        a in 1e-3f64..8e-3,
        r in 0.0f64..12e-3,
        z in -8e-3f64..8e-3,
        i in -3.0f64..3.0,
    ) {
        prop_assume!(((r - a).powi(2) + z * z).sqrt() > 0.3e-3);
        let b = loop_field(&LoopSpec::new(a, 0.0, i).unwrap(), r, z).unwrap();
        let (bx, bz) = biot_savart_loop(a, 0.0, i, r, z, 4096);
        let scale = bx.hypot(bz).max(1e-300);
        prop_assert!((b.b_r - bx).abs() / scale < 1e-8);
        prop_assert!((b.b_z - bz).abs() / scale < 1e-8);
    }

    #[test]
    fn field_is_mirror_symmetric(a in 1e-3f64..8e-3, r in 0.0f64..12e-3, z in 0.2e-3f64..8e-3) {
        let lp = LoopSpec::new(a, 0.0, 1.0).unwrap();
        let up = loop_field(&lp, r, z).unwrap();
        let down = loop_field(&lp, r, -z).unwrap();
        prop_assert!((up.b_z - down.b_z).abs() <= 1e-12 * up.b_z.abs().max(1e-30));
        prop_assert!((up.b_r + down.b_r).abs() <= 1e-12 * up.b_r.abs().max(1e-30));
    }

    #[test]
    fn force_is_linear_in_current(i in 0.01f64..1.0, s in 0.1f64..5.0) {
        let (coil, magnet) = sample_pair();
        let mre = MreSpec::none();
        let f1 = axial_force(&coil, i, &magnet, -0.7e-3, &mre).unwrap();
        let f2 = axial_force(&coil, s * i, &magnet, -0.7e-3, &mre).unwrap();
        prop_assert!(rel(f2, s * f1) < 1e-12);
    }
}
