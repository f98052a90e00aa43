//! Quaternions in (w, x, y, z) order.

use crate::error::{Error, Result};
use crate::linalg::Mat3;
use crate::scalar::Scalar;

pub type Quat<T> = [T; 4];

#[inline]
pub fn identity<T: Scalar>() -> Quat<T> {
    [T::one(), T::zero(), T::zero(), T::zero()]
}

#[inline]
pub fn norm<T: Scalar>(q: &Quat<T>) -> T {
    (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt()
}

/// Unit quaternion in the direction of `q`.
pub fn normalize<T: Scalar>(q: &Quat<T>) -> Result<Quat<T>> {
    let n = norm(q);
    if !n.is_finite() {
        return Err(Error::NonFinite("quaternion"));
    }
    if n == T::zero() {
        return Err(Error::ZeroQuaternion);
    }
    let inv = T::one() / n;
    Ok([q[0] * inv, q[1] * inv, q[2] * inv, q[3] * inv])
}

/// Normalizes, falling back to identity for zero-norm input.
pub fn normalize_or_identity<T: Scalar>(q: &Quat<T>) -> Quat<T> {
    normalize(q).unwrap_or_else(|_| identity())
}

/// Raw Hamilton product `a ⊗ b`.
#[inline]
pub fn mul<T: Scalar>(a: &Quat<T>, b: &Quat<T>) -> Quat<T> {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

/// Gradient of a loss w.r.t. the left operand `a` of `a ⊗ b`, given the
/// gradient `d_out` w.r.t. the product.
#[inline]
pub fn mul_backward_left<T: Scalar>(b: &Quat<T>, d_out: &Quat<T>) -> Quat<T> {
    let d = d_out;
    [
        d[0] * b[0] + d[1] * b[1] + d[2] * b[2] + d[3] * b[3],
        -d[0] * b[1] + d[1] * b[0] - d[2] * b[3] + d[3] * b[2],
        -d[0] * b[2] + d[1] * b[3] + d[2] * b[0] - d[3] * b[1],
        -d[0] * b[3] - d[1] * b[2] + d[2] * b[1] + d[3] * b[0],
    ]
}

/// Hamilton product renormalized to unit length.
pub fn compose<T: Scalar>(a: &Quat<T>, b: &Quat<T>) -> Result<Quat<T>> {
    if !a.iter().chain(b.iter()).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("quaternion"));
    }
    normalize(&mul(a, b))
}

/// Gradient through `q / |q|`: maps the gradient w.r.t. the unit quaternion
/// back onto the raw quaternion `q`.
pub fn normalize_backward<T: Scalar>(q: &Quat<T>, d_unit: &Quat<T>) -> Quat<T> {
    let n = norm(q);
    if n == T::zero() {
        return [T::zero(); 4];
    }
    let inv = T::one() / n;
    let u = [q[0] * inv, q[1] * inv, q[2] * inv, q[3] * inv];
    let proj = u[0] * d_unit[0] + u[1] * d_unit[1] + u[2] * d_unit[2] + u[3] * d_unit[3];
    [
        (d_unit[0] - u[0] * proj) * inv,
        (d_unit[1] - u[1] * proj) * inv,
        (d_unit[2] - u[2] * proj) * inv,
        (d_unit[3] - u[3] * proj) * inv,
    ]
}

/// Rotation matrix of a unit quaternion.
pub fn to_matrix<T: Scalar>(q: &Quat<T>) -> Mat3<T> {
    let [w, x, y, z] = *q;
    let one = T::one();
    let two = T::lit(2.0);
    [
        [one - two * (y * y + z * z), two * (x * y - w * z), two * (x * z + w * y)],
        [two * (x * y + w * z), one - two * (x * x + z * z), two * (y * z - w * x)],
        [two * (x * z - w * y), two * (y * z + w * x), one - two * (x * x + y * y)],
    ]
}

/// Gradient of [`to_matrix`] evaluated at `q` (treated as unconstrained).
pub fn to_matrix_backward<T: Scalar>(q: &Quat<T>, d_r: &Mat3<T>) -> Quat<T> {
    let [w, x, y, z] = *q;
    let two = T::lit(2.0);
    let d = d_r;
    let dw = -z * d[0][1] + y * d[0][2] + z * d[1][0] - x * d[1][2] - y * d[2][0] + x * d[2][1];
    let dx = y * d[0][1] + z * d[0][2] + y * d[1][0] - two * x * d[1][1] - w * d[1][2] + z * d[2][0] + w * d[2][1]
        - two * x * d[2][2];
    let dy = -two * y * d[0][0] + x * d[0][1] + w * d[0][2] + x * d[1][0] + z * d[1][2] - w * d[2][0] + z * d[2][1]
        - two * y * d[2][2];
    let dz = -two * z * d[0][0] - w * d[0][1] + x * d[0][2] + w * d[1][0] - two * z * d[1][1] + y * d[1][2]
        + x * d[2][0]
        + y * d[2][1];
    [two * dw, two * dx, two * dy, two * dz]
}

/// Unit quaternion for a rotation of `angle` radians about `axis`.
pub fn from_axis_angle<T: Scalar>(axis: [T; 3], angle: T) -> Quat<T> {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let half = angle * T::lit(0.5);
    let s = half.sin() / n;
    [half.cos(), axis[0] * s, axis[1] * s, axis[2] * s]
}

/// Quaternion of a proper rotation matrix (Shepperd's method).
pub fn from_matrix<T: Scalar>(m: &Mat3<T>) -> Quat<T> {
    let one = T::one();
    let quarter = T::lit(0.25);
    let trace = m[0][0] + m[1][1] + m[2][2];
    let q = if trace > T::zero() {
        let s = (trace + one).sqrt() * T::lit(2.0);
        [quarter * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s]
    } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
        let s = (one + m[0][0] - m[1][1] - m[2][2]).sqrt() * T::lit(2.0);
        [(m[2][1] - m[1][2]) / s, quarter * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s]
    } else if m[1][1] > m[2][2] {
        let s = (one + m[1][1] - m[0][0] - m[2][2]).sqrt() * T::lit(2.0);
        [(m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, quarter * s, (m[1][2] + m[2][1]) / s]
    } else {
        let s = (one + m[2][2] - m[0][0] - m[1][1]).sqrt() * T::lit(2.0);
        [(m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, quarter * s]
    };
    normalize_or_identity(&q)
}
