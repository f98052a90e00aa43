//! EWA projection of 3D Gaussians onto the image plane and its adjoint.

use super::{RenderConfig, Splat2D};
use crate::gaussian::{covariance_from_rotation, quat, sh, Camera, GaussianPoint, PARAMS_PER_GAUSSIAN};
use crate::linalg::{max_eigenvalue2, mat_mul3, mat_t_vec3, norm3, sub3, transpose3, Mat3, Vec3};
use crate::scalar::Scalar;

/// Intermediate values of one projection needed by the backward pass.
#[derive(Clone, Debug)]
pub(crate) struct ProjectionCache<T> {
    pub t_cam: Vec3<T>,
    pub jacobian: [[T; 3]; 2],
    /// Covariance rotated into camera space, `W Σ Wᵀ`.
    pub cov_cam: Mat3<T>,
    pub view_dir: Vec3<T>,
    pub view_dist: T,
    pub color_active: [bool; 3],
    pub conic: [[T; 2]; 2],
}

/// Projects one Gaussian; `None` when culled (behind the near plane or the
/// 3σ footprint lies entirely outside the image).
pub fn project_gaussian<T: Scalar>(
    index: usize,
    point: &GaussianPoint<T>,
    cam: &Camera<T>,
    cfg: &RenderConfig<T>,
) -> Option<Splat2D<T>> {
    project_with_cache(index, point, cam, cfg).map(|(s, _)| s)
}

pub(crate) fn project_with_cache<T: Scalar>(
    index: usize,
    point: &GaussianPoint<T>,
    cam: &Camera<T>,
    cfg: &RenderConfig<T>,
) -> Option<(Splat2D<T>, ProjectionCache<T>)> {
    let t = cam.world_to_camera(point.mu);
    if t[2] <= cfg.near {
        return None;
    }
    let (tx, ty, tz) = (t[0], t[1], t[2]);
    let mean2d = [cam.fx * tx / tz + cam.cx, cam.fy * ty / tz + cam.cy];
    let z = T::zero();
    let jacobian = [[cam.fx / tz, z, -cam.fx * tx / (tz * tz)], [z, cam.fy / tz, -cam.fy * ty / (tz * tz)]];

    let q = quat::normalize_or_identity(&point.rotation);
    let sigma = covariance_from_rotation(&quat::to_matrix(&q), &point.scale());
    let w = &cam.rotation;
    let cov_cam = mat_mul3(&mat_mul3(w, &sigma), &transpose3(w));
    let mut cov2d = [[T::zero(); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let mut acc = T::zero();
            for i in 0..3 {
                for j in 0..3 {
                    acc += jacobian[a][i] * cov_cam[i][j] * jacobian[b][j];
                }
            }
            cov2d[a][b] = acc;
        }
    }
    cov2d[0][0] += cfg.low_pass;
    cov2d[1][1] += cfg.low_pass;

    let radius = T::lit(3.0) * max_eigenvalue2(&cov2d).sqrt();
    let w_px = T::from_usize(cam.width).unwrap();
    let h_px = T::from_usize(cam.height).unwrap();
    if mean2d[0] + radius < T::zero()
        || mean2d[0] - radius > w_px
        || mean2d[1] + radius < T::zero()
        || mean2d[1] - radius > h_px
    {
        return None;
    }
    let conic = crate::linalg::inverse2(&cov2d)?;

    let offset = sub3(point.mu, cam.center());
    let view_dist = norm3(offset);
    let view_dir = offset.map(|v| v / view_dist);
    let raw = sh::eval_sh_unclamped(&point.sh, view_dir);
    let color_active = sh::clamp_active(&raw);
    let color = raw.map(|v| v.max(T::zero()).min(T::one()));

    let splat = Splat2D { index, mean2d, cov2d, depth: tz, color, alpha_base: point.opacity() };
    let cache = ProjectionCache { t_cam: t, jacobian, cov_cam, view_dir, view_dist, color_active, conic };
    Some((splat, cache))
}

/// Chains screen-space gradients back to the stored Gaussian parameters.
pub(crate) fn project_backward<T: Scalar>(
    point: &GaussianPoint<T>,
    cam: &Camera<T>,
    cache: &ProjectionCache<T>,
    d_mean2d: [T; 2],
    d_conic: [[T; 2]; 2],
    d_color: [T; 3],
    d_alpha_base: T,
) -> [T; PARAMS_PER_GAUSSIAN] {
    let mut out = [T::zero(); PARAMS_PER_GAUSSIAN];
    let two = T::lit(2.0);

    // conic = cov⁻¹  =>  d cov = -K dK K
    let k = &cache.conic;
    let mut kd = [[T::zero(); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            kd[a][b] = k[a][0] * d_conic[0][b] + k[a][1] * d_conic[1][b];
        }
    }
    let mut d_cov = [[T::zero(); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            d_cov[a][b] = -(kd[a][0] * k[0][b] + kd[a][1] * k[1][b]);
        }
    }
    // symmetrize so the product rules below can assume symmetry
    let off = (d_cov[0][1] + d_cov[1][0]) * T::lit(0.5);
    d_cov[0][1] = off;
    d_cov[1][0] = off;

    let j = &cache.jacobian;
    let m = &cache.cov_cam;
    // cov2d = J M Jᵀ: dM = Jᵀ G J, dJ = 2 G J M
    let mut d_m = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for l in 0..3 {
            let mut acc = T::zero();
            for a in 0..2 {
                for b in 0..2 {
                    acc += j[a][i] * d_cov[a][b] * j[b][l];
                }
            }
            d_m[i][l] = acc;
        }
    }
    let mut jm = [[T::zero(); 3]; 2];
    for a in 0..2 {
        for l in 0..3 {
            jm[a][l] = j[a][0] * m[0][l] + j[a][1] * m[1][l] + j[a][2] * m[2][l];
        }
    }
    let mut d_j = [[T::zero(); 3]; 2];
    for a in 0..2 {
        for l in 0..3 {
            d_j[a][l] = two * (d_cov[a][0] * jm[0][l] + d_cov[a][1] * jm[1][l]);
        }
    }
    let w = &cam.rotation;
    let d_sigma = mat_mul3(&mat_mul3(&transpose3(w), &d_m), w);
    let (d_q, d_log_s) = crate::gaussian::covariance_backward(&point.rotation, &point.log_scale, &d_sigma);

    let [tx, ty, tz] = cache.t_cam;
    let (fx, fy) = (cam.fx, cam.fy);
    let tz2 = tz * tz;
    let tz3 = tz2 * tz;
    let d_tx = d_mean2d[0] * fx / tz - d_j[0][2] * fx / tz2;
    let d_ty = d_mean2d[1] * fy / tz - d_j[1][2] * fy / tz2;
    let d_tz = -d_mean2d[0] * fx * tx / tz2 - d_mean2d[1] * fy * ty / tz2 - d_j[0][0] * fx / tz2
        + d_j[0][2] * two * fx * tx / tz3
        - d_j[1][1] * fy / tz2
        + d_j[1][2] * two * fy * ty / tz3;
    let mut d_mu = mat_t_vec3(w, [d_tx, d_ty, d_tz]);

    let (d_sh, d_dir) = sh::eval_sh_backward(&point.sh, cache.view_dir, cache.color_active, d_color);
    let dir = cache.view_dir;
    let proj = dir[0] * d_dir[0] + dir[1] * d_dir[1] + dir[2] * d_dir[2];
    for i in 0..3 {
        d_mu[i] += (d_dir[i] - dir[i] * proj) / cache.view_dist;
    }

    let sig = point.opacity();
    out[0..3].copy_from_slice(&d_mu);
    out[3..7].copy_from_slice(&d_q);
    out[7..10].copy_from_slice(&d_log_s);
    out[10] = d_alpha_base * sig * (T::one() - sig);
    for kk in 0..sh::SH_COEFFS {
        out[11 + 3 * kk..14 + 3 * kk].copy_from_slice(&d_sh[kk]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::quat;

    fn cam() -> Camera<f64> {
        Camera::look_at([0.0, 0.0, -5.0], [0.0, 0.0, 0.0], [0.0, -1.0, 0.0], 40.0, 32, 24).unwrap()
    }

    #[test]
    fn on_axis_point_lands_on_principal_point() {
        let c = cam();
        let p = GaussianPoint::isotropic([0.0, 0.0, 1.0], 0.1, 0.5, [0.5; 3]).unwrap();
        let s = project_gaussian(0, &p, &c, &RenderConfig::default()).unwrap();
        assert!((s.mean2d[0] - c.cx).abs() < 1e-12);
        assert!((s.mean2d[1] - c.cy).abs() < 1e-12);
        assert!((s.depth - 6.0).abs() < 1e-12);
    }

    #[test]
    fn isotropic_footprint_matches_finite_difference_jacobian() {
        let c = cam();
        let r = 0.05;
        let mu = [0.3, -0.2, 1.0];
        let p = GaussianPoint::new(mu, quat::identity(), [r; 3], 0.5, [[0.0; 3]; 4]).unwrap();
        let cfg = RenderConfig::default();
        let s = project_gaussian(0, &p, &c, &cfg).unwrap();
        // finite-difference Jacobian of the pixel projection
        let proj = |x: [f64; 3]| {
            let t = c.world_to_camera(x);
            [c.fx * t[0] / t[2] + c.cx, c.fy * t[1] / t[2] + c.cy]
        };
        let h = 1e-6;
        let mut jac = [[0.0; 3]; 2];
        for k in 0..3 {
            let (mut a, mut b) = (mu, mu);
            a[k] += h;
            b[k] -= h;
            let (pa, pb) = (proj(a), proj(b));
            for row in 0..2 {
                jac[row][k] = (pa[row] - pb[row]) / (2.0 * h);
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                let expect: f64 = (0..3).map(|k| jac[a][k] * r * r * jac[b][k]).sum::<f64>()
                    + if a == b { cfg.low_pass } else { 0.0 };
                assert!((s.cov2d[a][b] - expect).abs() < 1e-8, "{a}{b}: {} vs {expect}", s.cov2d[a][b]);
            }
        }
        // on-axis closed form (f r / d)^2
        let p0 = GaussianPoint::new([0.0, 0.0, 1.0], quat::identity(), [r; 3], 0.5, [[0.0; 3]; 4]).unwrap();
        let s0 = project_gaussian(0, &p0, &c, &cfg).unwrap();
        let expect = (40.0 * r / 6.0f64).powi(2) + cfg.low_pass;
        assert!((s0.cov2d[0][0] - expect).abs() < 1e-12);
        assert!(s0.cov2d[0][1].abs() < 1e-15);
    }

    #[test]
    fn behind_camera_and_far_off_screen_are_culled() {
        let c = cam();
        let cfg = RenderConfig::default();
        let behind = GaussianPoint::isotropic([0.0, 0.0, -6.0], 0.1, 0.5, [0.5; 3]).unwrap();
        assert!(project_gaussian(0, &behind, &c, &cfg).is_none());
        let off = GaussianPoint::isotropic([30.0, 0.0, 0.0], 0.01, 0.5, [0.5; 3]).unwrap();
        assert!(project_gaussian(0, &off, &c, &cfg).is_none());
    }
}
