//! Gaussian primitives: covariance construction, density evaluation,
//! quaternion algebra and degree-1 spherical-harmonics color.
//!
//! A [`GaussianPoint`] stores its parameters in unconstrained form (log
//! scale, logit opacity) so optimizers can update them freely; accessors
//! return the constrained values.

pub mod camera;
pub mod quat;
pub mod sh;

use crate::error::{Error, Result};
use crate::linalg::{cholesky3, diag3, inverse3, mat_mul3, quad_form3, sub3, transpose3, Mat3, Vec3};
use crate::scalar::Scalar;

pub use camera::Camera;
pub use quat::Quat;
pub use sh::{ShCoeffs, SH_COEFFS};

/// Scalars per Gaussian: position 3, rotation 4, log-scale 3, opacity 1, SH 12.
pub const PARAMS_PER_GAUSSIAN: usize = 23;

/// Offsets of each attribute inside the flat per-Gaussian parameter vector.
pub mod layout {
    pub const MU: usize = 0;
    pub const ROT: usize = 3;
    pub const LOG_SCALE: usize = 7;
    pub const OPACITY: usize = 10;
    pub const SH: usize = 11;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianPoint<T> {
    pub mu: Vec3<T>,
    /// Unit quaternion (w, x, y, z).
    pub rotation: Quat<T>,
    pub log_scale: Vec3<T>,
    pub opacity_logit: T,
    pub sh: ShCoeffs<T>,
}

impl<T: Scalar> GaussianPoint<T> {
    /// Builds a point from constrained values; `rotation` is renormalized.
    pub fn new(mu: Vec3<T>, rotation: Quat<T>, scale: Vec3<T>, opacity: T, sh: ShCoeffs<T>) -> Result<Self> {
        if scale.iter().any(|s| *s <= T::zero()) {
            return Err(Error::InvalidArgument("scale must be positive".into()));
        }
        if !(opacity > T::zero() && opacity < T::one()) {
            return Err(Error::InvalidArgument("opacity must lie in (0, 1)".into()));
        }
        let p = Self {
            mu,
            rotation: quat::normalize(&rotation)?,
            log_scale: scale.map(|s| s.ln()),
            opacity_logit: opacity.logit(),
            sh,
        };
        if !p.is_finite() {
            return Err(Error::NonFinite("gaussian attribute"));
        }
        Ok(p)
    }

    /// Isotropic point with a flat color.
    pub fn isotropic(mu: Vec3<T>, radius: T, opacity: T, rgb: [T; 3]) -> Result<Self> {
        let mut sh = [[T::zero(); 3]; SH_COEFFS];
        let c0 = T::lit(sh::SH_C0);
        for c in 0..3 {
            sh[0][c] = (rgb[c] - T::lit(0.5)) / c0;
        }
        Self::new(mu, quat::identity(), [radius; 3], opacity, sh)
    }

    #[inline]
    pub fn scale(&self) -> Vec3<T> {
        self.log_scale.map(|v| v.exp())
    }

    #[inline]
    pub fn opacity(&self) -> T {
        self.opacity_logit.sigmoid()
    }

    pub fn covariance(&self) -> Result<Mat3<T>> {
        build_covariance(&self.rotation, &self.scale())
    }

    pub fn is_finite(&self) -> bool {
        self.to_params().iter().all(|v| v.is_finite())
    }

    pub fn to_params(&self) -> [T; PARAMS_PER_GAUSSIAN] {
        let mut p = [T::zero(); PARAMS_PER_GAUSSIAN];
        p[0..3].copy_from_slice(&self.mu);
        p[3..7].copy_from_slice(&self.rotation);
        p[7..10].copy_from_slice(&self.log_scale);
        p[10] = self.opacity_logit;
        for k in 0..SH_COEFFS {
            p[11 + 3 * k..14 + 3 * k].copy_from_slice(&self.sh[k]);
        }
        p
    }

    /// Inverse of [`GaussianPoint::to_params`]; the rotation is taken verbatim.
    pub fn from_params(p: &[T]) -> Self {
        let mut sh = [[T::zero(); 3]; SH_COEFFS];
        for (k, row) in sh.iter_mut().enumerate() {
            row.copy_from_slice(&p[11 + 3 * k..14 + 3 * k]);
        }
        Self {
            mu: [p[0], p[1], p[2]],
            rotation: [p[3], p[4], p[5], p[6]],
            log_scale: [p[7], p[8], p[9]],
            opacity_logit: p[10],
            sh,
        }
    }

    pub fn cast<U: Scalar>(&self) -> GaussianPoint<U> {
        let p = self.to_params();
        let q: Vec<U> = p.iter().map(|v| U::lit(v.to_f64_lossy())).collect();
        GaussianPoint::from_params(&q)
    }
}

/// All Gaussians of one frame. Point count and order are fixed stream-wide.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SceneState<T> {
    pub points: Vec<GaussianPoint<T>>,
    pub timestep: u32,
}

impl<T: Scalar> SceneState<T> {
    pub fn new(points: Vec<GaussianPoint<T>>) -> Self {
        Self { points, timestep: 0 }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3<T>> {
        self.points.iter().map(|p| p.mu).collect()
    }

    pub fn cast<U: Scalar>(&self) -> SceneState<U> {
        SceneState { points: self.points.iter().map(|p| p.cast()).collect(), timestep: self.timestep }
    }

    /// Index of the first Gaussian with a non-finite attribute.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.points.iter().position(|p| !p.is_finite())
    }
}

/// `Σ = R S Sᵀ Rᵀ` from a rotation quaternion and per-axis scales.
pub fn build_covariance<T: Scalar>(q: &Quat<T>, s: &Vec3<T>) -> Result<Mat3<T>> {
    if !s.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("scale"));
    }
    let r = quat::to_matrix(&quat::normalize(q)?);
    Ok(covariance_from_rotation(&r, s))
}

pub(crate) fn covariance_from_rotation<T: Scalar>(r: &Mat3<T>, s: &Vec3<T>) -> Mat3<T> {
    let a = mat_mul3(r, &diag3(*s));
    mat_mul3(&a, &transpose3(&a))
}

/// Gradient of `Σ(q, exp(log_s))` w.r.t. the raw quaternion and the log-scale,
/// given the gradient `d_sigma` w.r.t. the full (not symmetrized) matrix.
pub fn covariance_backward<T: Scalar>(q_raw: &Quat<T>, log_scale: &Vec3<T>, d_sigma: &Mat3<T>) -> (Quat<T>, Vec3<T>) {
    let q = quat::normalize_or_identity(q_raw);
    let r = quat::to_matrix(&q);
    let s = log_scale.map(|v| v.exp());
    let a = mat_mul3(&r, &diag3(s));
    // Σ = A Aᵀ  =>  dA = (G + Gᵀ) A
    let mut g_sym = *d_sigma;
    for i in 0..3 {
        for j in 0..3 {
            g_sym[i][j] = d_sigma[i][j] + d_sigma[j][i];
        }
    }
    let d_a = mat_mul3(&g_sym, &a);
    let mut d_r = [[T::zero(); 3]; 3];
    let mut d_log_s = [T::zero(); 3];
    for i in 0..3 {
        for j in 0..3 {
            d_r[i][j] = d_a[i][j] * s[j];
            d_log_s[j] += d_a[i][j] * r[i][j] * s[j];
        }
    }
    let d_unit = quat::to_matrix_backward(&q, &d_r);
    (quat::normalize_backward(q_raw, &d_unit), d_log_s)
}

/// Unnormalized Gaussian density `exp(-½ (x-μ)ᵀ Σ⁻¹ (x-μ))`.
pub fn eval_gaussian<T: Scalar>(x: &Vec3<T>, mu: &Vec3<T>, sigma: &Mat3<T>) -> Result<T> {
    if !x.iter().chain(mu.iter()).chain(sigma.iter().flatten()).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("gaussian evaluation"));
    }
    cholesky3(sigma).ok_or(Error::SingularCovariance)?;
    let inv = inverse3(sigma).ok_or(Error::SingularCovariance)?;
    let d = sub3(*x, *mu);
    Ok((T::lit(-0.5) * quad_form3(&inv, d)).exp())
}
