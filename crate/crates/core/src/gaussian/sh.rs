//! Degree-1 real spherical harmonics color.

use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::scalar::Scalar;

/// Number of SH coefficients per channel at degree 1.
pub const SH_COEFFS: usize = 4;

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;

/// Coefficient-major SH table: `sh[k][channel]`.
pub type ShCoeffs<T> = [[T; 3]; SH_COEFFS];

/// Real SH basis values `(Y00, Y1-1, Y10, Y11)` at a unit direction, using
/// the sign convention of the reference splatting renderer.
#[inline]
pub fn basis<T: Scalar>(dir: Vec3<T>) -> [T; SH_COEFFS] {
    let c1 = T::lit(SH_C1);
    [T::lit(SH_C0), -c1 * dir[1], c1 * dir[2], -c1 * dir[0]]
}

/// Color before clamping: `0.5 + Σ_k Y_k(dir) sh_k`.
pub fn eval_sh_unclamped<T: Scalar>(sh: &ShCoeffs<T>, dir: Vec3<T>) -> [T; 3] {
    let b = basis(dir);
    let mut out = [T::lit(0.5); 3];
    for (k, bk) in b.iter().enumerate() {
        for c in 0..3 {
            out[c] += *bk * sh[k][c];
        }
    }
    out
}

/// View-dependent color clamped to `[0, 1]`.
pub fn eval_sh<T: Scalar>(sh: &ShCoeffs<T>, dir: Vec3<T>) -> Result<[T; 3]> {
    if !sh.iter().flatten().chain(dir.iter()).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("spherical harmonics"));
    }
    Ok(eval_sh_unclamped(sh, dir).map(|v| v.max(T::zero()).min(T::one())))
}

/// Which channels are strictly inside the clamp interval (gradient passes).
pub fn clamp_active<T: Scalar>(raw: &[T; 3]) -> [bool; 3] {
    raw.map(|v| v > T::zero() && v < T::one())
}

/// Gradients w.r.t. the coefficients and the (unit) direction, given the
/// gradient w.r.t. the clamped color.
pub fn eval_sh_backward<T: Scalar>(
    sh: &ShCoeffs<T>,
    dir: Vec3<T>,
    active: [bool; 3],
    d_rgb: [T; 3],
) -> (ShCoeffs<T>, Vec3<T>) {
    let b = basis(dir);
    let c1 = T::lit(SH_C1);
    let mut d_sh = [[T::zero(); 3]; SH_COEFFS];
    let mut d_dir = [T::zero(); 3];
    for c in 0..3 {
        if !active[c] {
            continue;
        }
        let g = d_rgb[c];
        for k in 0..SH_COEFFS {
            d_sh[k][c] = g * b[k];
        }
        d_dir[0] -= g * c1 * sh[3][c];
        d_dir[1] -= g * c1 * sh[1][c];
        d_dir[2] += g * c1 * sh[2][c];
    }
    (d_sh, d_dir)
}
