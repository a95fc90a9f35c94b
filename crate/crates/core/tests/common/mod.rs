//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::f64::consts::PI;

use stem_twin::electromech::{calibrate, CalibrationTargets, LumpedParams, DEFAULT_PRELOAD};

pub const MU_0: f64 = 4.0e-7 * PI;

/// Carlson's symmetric integral R_F by duplication.
pub fn carlson_rf(mut x: f64, mut y: f64, mut z: f64) -> f64 {
    loop {
        let mu = (x + y + z) / 3.0;
        let dx = 1.0 - x / mu;
        let dy = 1.0 - y / mu;
        let dz = 1.0 - z / mu;
        if dx.abs().max(dy.abs()).max(dz.abs()) < 1e-4 {
            let e2 = dx * dy - dz * dz;
            let e3 = dx * dy * dz;
            return (1.0 - e2 / 10.0 + e3 / 14.0 + e2 * e2 / 24.0 - 3.0 * e2 * e3 / 44.0) / mu.sqrt();
        }
        let (sx, sy, sz) = (x.sqrt(), y.sqrt(), z.sqrt());
        let lambda = sx * sy + sy * sz + sz * sx;
        x = 0.25 * (x + lambda);
        y = 0.25 * (y + lambda);
        z = 0.25 * (z + lambda);
    }
}

/// Carlson's R_D by duplication.
pub fn carlson_rd(mut x: f64, mut y: f64, mut z: f64) -> f64 {
    let mut sum = 0.0;
    let mut fac = 1.0;
    loop {
        let mu = (x + y + 3.0 * z) / 5.0;
        let dx = 1.0 - x / mu;
        let dy = 1.0 - y / mu;
        let dz = 1.0 - z / mu;
        if dx.abs().max(dy.abs()).max(dz.abs()) < 1e-4 {
            let ea = dx * dy;
            let eb = dz * dz;
            let ec = ea - eb;
            let ed = ea - 6.0 * eb;
            let ee = ed + ec + ec;
            let s = ed * (-3.0 / 14.0 + 9.0 / 88.0 * ed - 4.5 / 26.0 * dz * ee)
                + dz * (ee / 6.0 + dz * (-9.0 / 22.0 * ec + dz * 3.0 / 26.0 * ea));
            return 3.0 * sum + fac * (1.0 + s) / (mu * mu.sqrt());
        }
        let (sx, sy, sz) = (x.sqrt(), y.sqrt(), z.sqrt());
        let lambda = sx * sy + sy * sz + sz * sx;
        sum += fac / (sz * (z + lambda));
        fac *= 0.25;
        x = 0.25 * (x + lambda);
        y = 0.25 * (y + lambda);
        z = 0.25 * (z + lambda);
    }
}

/// `(K(m), E(m))` from Carlson forms.
pub fn ellip_carlson(m: f64) -> (f64, f64) {
    let rf = carlson_rf(0.0, 1.0 - m, 1.0);
    let rd = carlson_rd(0.0, 1.0 - m, 1.0);
    (rf, rf - m / 3.0 * rd)
}

/// Mutual inductance of two coaxial circular filaments (Maxwell).
pub fn mutual_inductance(a: f64, b: f64, d: f64) -> f64 {
    let m = 4.0 * a * b / ((a + b).powi(2) + d * d);
    let k = m.sqrt();
    let (kk, ee) = ellip_carlson(m);
    MU_0 * (a * b).sqrt() * ((2.0 / k - k) * kk - 2.0 / k * ee)
}

/// Direct Biot–Savart integration of a loop of radius `a` at `z0` carrying
/// `current`, evaluated at `(r, 0, z)`. Periodic trapezoid rule, which
/// converges geometrically for a smooth closed loop.
pub fn biot_savart_loop(a: f64, z0: f64, current: f64, r: f64, z: f64, n: usize) -> (f64, f64) {
    let (mut bx, mut bz) = (0.0, 0.0);
    let dz = z - z0;
    for i in 0..n {
        let phi = 2.0 * PI * i as f64 / n as f64;
        let (s, c) = phi.sin_cos();
        let rx = r - a * c;
        let ry = -a * s;
        let dist3 = (rx * rx + ry * ry + dz * dz).powf(1.5);
        bx += c * dz / dist3;
        bz += (a - r * c) / dist3;
    }
    let scale = MU_0 * current * a / (4.0 * PI) * (2.0 * PI / n as f64);
    (bx * scale, bz * scale)
}

/// Bit-at-a-time CRC-16/CCITT-FALSE.
pub fn crc16_bitwise(data: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &byte in data {
        crc ^= (byte as u16) << 8;
        for _ in 0..8 {
            crc = if crc & 0x8000 != 0 {
                (crc << 1) ^ 0x1021
            } else {
                crc << 1
            };
        }
    }
    crc
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// A stiff-contact parameter set for dynamics tests.
pub fn lab_params() -> LumpedParams {
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

pub fn bench_params() -> LumpedParams {
    calibrate(&CalibrationTargets::bench())
        .expect("bench targets calibrate")
        .params
}
