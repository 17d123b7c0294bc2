//! Real spherical harmonics up to degree 2 (Condon-Shortley phase included).

use crate::geom::Vec3;

pub const MAX_DEGREE: usize = 2;

const C0: f64 = 0.282_094_791_773_878_14;
const C1: f64 = 0.488_602_511_902_919_9;
const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];

/// Number of coefficients per channel for `degree`.
pub const fn coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// The constant band's basis value.
pub const fn basis0() -> f64 {
    C0
}

/// Basis values at unit direction `d`, ordered by `(l, m)` with `m` ascending.
/// Only the first `coeff_count(degree)` entries are written.
#[inline]
pub fn basis(degree: usize, d: &Vec3, out: &mut [f64; 9]) {
    out[0] = C0;
    if degree == 0 {
        return;
    }
    let (x, y, z) = (d.x, d.y, d.z);
    out[1] = -C1 * y;
    out[2] = C1 * z;
    out[3] = -C1 * x;
    if degree == 1 {
        return;
    }
    out[4] = C2[0] * x * y;
    out[5] = C2[1] * y * z;
    out[6] = C2[2] * (2.0 * z * z - x * x - y * y);
    out[7] = C2[3] * x * z;
    out[8] = C2[4] * (x * x - y * y);
}
