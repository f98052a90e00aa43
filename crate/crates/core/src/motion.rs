//! Keypoint-driven motion for non-key frames.
//!
//! Each keypoint carries a translation and rotation residual plus an
//! anisotropic influence field centered on its frame-(t−1) position. Every
//! Gaussian inside a field (weight ≥ `tau_adap`) receives the weighted sum of
//! its controllers' residuals.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{quat, Camera, Quat, SceneState, PARAMS_PER_GAUSSIAN};
use crate::keypoint::KeypointSet;
use crate::linalg::{add3, mat_t_vec3, sub3, Vec3};
use crate::optim::Adam;
use crate::render::{multiview_loss, AttributeGradients, Image, RenderConfig};
use crate::scalar::Scalar;

/// Payload scalars per keypoint: Δμ (3), Δq (4), q_adap (4), s_adap (3).
pub const KEYPOINT_PARAMS: usize = 14;
pub const DEFAULT_TAU_ADAP: f64 = 0.01;
pub const DEFAULT_ITERS: usize = 150;
pub const LR_MOTION: f64 = 0.002;
pub const LR_FIELD: f64 = 0.02;
/// Aggregated rotations shorter than this are treated as identity.
const MIN_QUAT_NORM: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct Keypoint<T> {
    pub index: usize,
    pub delta_mu: Vec3<T>,
    pub delta_q: Quat<T>,
    pub q_adap: Quat<T>,
    /// Per-axis extent of the influence field in world units.
    pub s_adap: Vec3<T>,
}

impl<T: Scalar> Keypoint<T> {
    /// Zero motion with an isotropic field of radius `extent`.
    pub fn at_rest(index: usize, extent: T) -> Self {
        Keypoint { index, delta_mu: [T::zero(); 3], delta_q: quat::identity(), q_adap: quat::identity(), s_adap: [extent; 3] }
    }

    /// Payload order: Δμ, Δq, q_adap, s_adap.
    pub fn to_payload(&self) -> [T; KEYPOINT_PARAMS] {
        let mut p = [T::zero(); KEYPOINT_PARAMS];
        p[0..3].copy_from_slice(&self.delta_mu);
        p[3..7].copy_from_slice(&self.delta_q);
        p[7..11].copy_from_slice(&self.q_adap);
        p[11..14].copy_from_slice(&self.s_adap);
        p
    }

    pub fn from_payload(index: usize, p: &[T; KEYPOINT_PARAMS]) -> Self {
        Keypoint {
            index,
            delta_mu: [p[0], p[1], p[2]],
            delta_q: [p[3], p[4], p[5], p[6]],
            q_adap: [p[7], p[8], p[9], p[10]],
            s_adap: [p[11], p[12], p[13]],
        }
    }

    pub fn cast<U: Scalar>(&self) -> Keypoint<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        Keypoint {
            index: self.index,
            delta_mu: self.delta_mu.map(c),
            delta_q: self.delta_q.map(c),
            q_adap: self.q_adap.map(c),
            s_adap: self.s_adap.map(c),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotionField<T> {
    pub keypoints: Vec<Keypoint<T>>,
    pub tau_adap: T,
}

impl<T: Scalar> MotionField<T> {
    pub fn empty(tau_adap: T) -> Self {
        MotionField { keypoints: Vec::new(), tau_adap }
    }

    /// Checks indices against a scene of `n` Gaussians and the parameter domains.
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.tau_adap > T::zero() && self.tau_adap < T::one()) {
            return Err(Error::InvalidArgument(format!("tau_adap = {} must lie in (0, 1)", self.tau_adap)));
        }
        let mut seen = std::collections::HashSet::new();
        for kp in &self.keypoints {
            if kp.index >= n {
                return Err(Error::InvalidArgument(format!("keypoint index {} out of range for {n} Gaussians", kp.index)));
            }
            if !seen.insert(kp.index) {
                return Err(Error::InvalidArgument(format!("duplicate keypoint index {}", kp.index)));
            }
            if !kp.to_payload().iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("keypoint parameter"));
            }
            if kp.s_adap.iter().any(|&s| s <= T::zero()) {
                return Err(Error::InvalidArgument(format!("keypoint {} has non-positive extent", kp.index)));
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> MotionField<U> {
        MotionField { keypoints: self.keypoints.iter().map(Keypoint::cast).collect(), tau_adap: U::lit(self.tau_adap.to_f64_lossy()) }
    }
}

/// `w = exp(-½ dᵀ Σ_adap⁻¹ d)` with `d = g_pos − kp_pos`, evaluated in the
/// field's principal frame.
pub fn influence_weight<T: Scalar>(kp: &Keypoint<T>, kp_pos: Vec3<T>, g_pos: Vec3<T>) -> T {
    let r = quat::to_matrix(&quat::normalize_or_identity(&kp.q_adap));
    let u = mat_t_vec3(&r, sub3(g_pos, kp_pos));
    let mut m = T::zero();
    for k in 0..3 {
        m += u[k] * u[k] / (kp.s_adap[k] * kp.s_adap[k]);
    }
    (T::lit(-0.5) * m).exp()
}

/// For each Gaussian, its controllers as `(keypoint slot, weight)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Membership<T> {
    pub per_gaussian: Vec<Vec<(usize, T)>>,
}

impl<T> Membership<T> {
    pub fn controlled_count(&self) -> usize {
        self.per_gaussian.iter().filter(|c| !c.is_empty()).count()
    }
}

/// Keypoint centers are the scene's own positions at the keypoint indices.
pub fn controlled_set<T: Scalar>(field: &MotionField<T>, scene: &SceneState<T>) -> Membership<T> {
    let centers: Vec<Vec3<T>> = field.keypoints.iter().map(|kp| scene.points[kp.index].mu).collect();
    let per_gaussian = scene
        .points
        .par_iter()
        .map(|p| {
            field
                .keypoints
                .iter()
                .zip(&centers)
                .enumerate()
                .filter_map(|(slot, (kp, c))| {
                    let w = influence_weight(kp, *c, p.mu);
                    (w >= field.tau_adap).then_some((slot, w))
                })
                .collect()
        })
        .collect();
    Membership { per_gaussian }
}

/// Recomputes the weights of a fixed member set from the current field.
#[cfg(test)]
fn reweigh<T: Scalar>(field: &MotionField<T>, scene: &SceneState<T>, membership: &Membership<T>) -> Membership<T> {
    let per_gaussian = membership
        .per_gaussian
        .iter()
        .enumerate()
        .map(|(j, c)| {
            c.iter()
                .map(|&(slot, _)| {
                    let kp = &field.keypoints[slot];
                    (slot, influence_weight(kp, scene.points[kp.index].mu, scene.points[j].mu))
                })
                .collect()
        })
        .collect();
    Membership { per_gaussian }
}

struct Aggregate<T> {
    delta_mu: Vec3<T>,
    /// Unnormalized weighted quaternion sum.
    q_sum: Quat<T>,
    delta_q: Quat<T>,
    degenerate: bool,
}

fn aggregate<T: Scalar>(controllers: &[(usize, T)], field: &MotionField<T>) -> Aggregate<T> {
    let mut delta_mu = [T::zero(); 3];
    let mut q_sum = [T::zero(); 4];
    for &(slot, w) in controllers {
        let kp = &field.keypoints[slot];
        let dq = quat::normalize_or_identity(&kp.delta_q);
        for k in 0..3 {
            delta_mu[k] += w * kp.delta_mu[k];
        }
        for k in 0..4 {
            q_sum[k] += w * dq[k];
        }
    }
    let n = quat::norm(&q_sum);
    // NaN counts as degenerate
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    let degenerate = !(n >= T::lit(MIN_QUAT_NORM));
    let delta_q = if degenerate { quat::identity() } else { q_sum.map(|v| v / n) };
    Aggregate { delta_mu, q_sum, delta_q, degenerate }
}

/// Weighted raw sums of the controllers' residuals; the rotation is
/// renormalized. No controllers gives zero translation and identity rotation.
pub fn aggregate_motion<T: Scalar>(j: usize, membership: &Membership<T>, field: &MotionField<T>) -> (Vec3<T>, Quat<T>) {
    let a = aggregate(&membership.per_gaussian[j], field);
    if a.degenerate && !membership.per_gaussian[j].is_empty() {
        log::warn!("aggregated rotation of Gaussian {j} vanished; using identity");
    }
    (a.delta_mu, a.delta_q)
}

/// `μ += Δμ_j`, `q = normalize(Δq_j ⊗ q)`; uncontrolled Gaussians are copied.
pub fn apply_motion<T: Scalar>(scene_prev: &SceneState<T>, field: &MotionField<T>) -> Result<SceneState<T>> {
    field.validate(scene_prev.len())?;
    let membership = controlled_set(field, scene_prev);
    Ok(apply_with(scene_prev, field, &membership))
}

fn apply_with<T: Scalar>(scene_prev: &SceneState<T>, field: &MotionField<T>, membership: &Membership<T>) -> SceneState<T> {
    let mut next = scene_prev.clone();
    next.timestep = scene_prev.timestep + 1;
    for (j, controllers) in membership.per_gaussian.iter().enumerate() {
        if controllers.is_empty() {
            continue;
        }
        let (dmu, dq) = aggregate_motion(j, membership, field);
        let p = &mut next.points[j];
        p.mu = add3(p.mu, dmu);
        p.rotation = quat::normalize_or_identity(&quat::mul(&dq, &p.rotation));
    }
    next
}

/// Internal optimization layout per keypoint: Δμ, Δq (raw), q_adap (raw), log s_adap.
fn field_from_params<T: Scalar>(indices: &[usize], params: &[T], tau_adap: T) -> MotionField<T> {
    let keypoints = indices
        .iter()
        .zip(params.chunks_exact(KEYPOINT_PARAMS))
        .map(|(&index, p)| {
            let mut payload = [T::zero(); KEYPOINT_PARAMS];
            payload.copy_from_slice(p);
            for k in 11..14 {
                payload[k] = payload[k].exp();
            }
            Keypoint::from_payload(index, &payload)
        })
        .collect();
    MotionField { keypoints, tau_adap }
}

/// Gradient of the loss w.r.t. the internal keypoint parameters, given the
/// loss gradient w.r.t. the moved scene. Membership is held fixed; the
/// threshold gate contributes nothing.
fn motion_backward<T: Scalar>(
    scene_prev: &SceneState<T>,
    field: &MotionField<T>,
    membership: &Membership<T>,
    d_scene: &[[T; PARAMS_PER_GAUSSIAN]],
) -> Vec<T> {
    let k = field.keypoints.len();
    let centers: Vec<Vec3<T>> = field.keypoints.iter().map(|kp| scene_prev.points[kp.index].mu).collect();
    let unit_dq: Vec<Quat<T>> = field.keypoints.iter().map(|kp| quat::normalize_or_identity(&kp.delta_q)).collect();

    // per-Gaussian partial sums, reduced in Gaussian order afterwards
    let partials: Vec<Vec<(usize, [T; KEYPOINT_PARAMS])>> = membership
        .per_gaussian
        .par_iter()
        .enumerate()
        .map(|(j, controllers)| {
            if controllers.is_empty() {
                return Vec::new();
            }
            let prev = &scene_prev.points[j];
            let d = &d_scene[j];
            let d_mu = [d[0], d[1], d[2]];
            let d_rot = [d[3], d[4], d[5], d[6]];
            let agg = aggregate(controllers, field);
            let moved = quat::mul(&agg.delta_q, &prev.rotation);
            let d_moved = quat::normalize_backward(&moved, &d_rot);
            let d_q_sum = if agg.degenerate {
                [T::zero(); 4]
            } else {
                quat::normalize_backward(&agg.q_sum, &quat::mul_backward_left(&prev.rotation, &d_moved))
            };
            controllers
                .iter()
                .map(|&(slot, w)| {
                    let kp = &field.keypoints[slot];
                    let mut g = [T::zero(); KEYPOINT_PARAMS];
                    for a in 0..3 {
                        g[a] = w * d_mu[a];
                    }
                    let d_unit: Quat<T> = d_q_sum.map(|v| v * w);
                    let d_raw = quat::normalize_backward(&kp.delta_q, &d_unit);
                    g[3..7].copy_from_slice(&d_raw);
                    let mut d_w = T::zero();
                    for a in 0..3 {
                        d_w += d_mu[a] * kp.delta_mu[a];
                    }
                    for a in 0..4 {
                        d_w += d_q_sum[a] * unit_dq[slot][a];
                    }
                    // w = exp(-½ Σ u²/s²), u = Rᵀ (μ_j − c)
                    let q_hat = quat::normalize_or_identity(&kp.q_adap);
                    let r = quat::to_matrix(&q_hat);
                    let off = sub3(prev.mu, centers[slot]);
                    let u = mat_t_vec3(&r, off);
                    let mut d_u = [T::zero(); 3];
                    for a in 0..3 {
                        let s2 = kp.s_adap[a] * kp.s_adap[a];
                        d_u[a] = -d_w * w * u[a] / s2;
                        g[11 + a] = d_w * w * u[a] * u[a] / s2;
                    }
                    let mut d_r = [[T::zero(); 3]; 3];
                    for m in 0..3 {
                        for a in 0..3 {
                            d_r[m][a] = off[m] * d_u[a];
                        }
                    }
                    let d_hat = quat::to_matrix_backward(&q_hat, &d_r);
                    g[7..11].copy_from_slice(&quat::normalize_backward(&kp.q_adap, &d_hat));
                    (slot, g)
                })
                .collect()
        })
        .collect();

    let mut out = vec![T::zero(); k * KEYPOINT_PARAMS];
    for per in partials {
        for (slot, g) in per {
            for a in 0..KEYPOINT_PARAMS {
                out[slot * KEYPOINT_PARAMS + a] += g[a];
            }
        }
    }
    out
}

/// Median distance from each point to its nearest neighbor; 1 when the
/// scene has fewer than two points.
pub fn median_nn_distance<T: Scalar>(positions: &[Vec3<T>]) -> T {
    if positions.len() < 2 {
        return T::one();
    }
    let mut d: Vec<T> = positions
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            positions
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| {
                    let e = sub3(*p, *q);
                    (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt()
                })
                .fold(T::infinity(), T::min)
        })
        .collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mid = d.len() / 2;
    let m = if d.len() % 2 == 1 { d[mid] } else { (d[mid - 1] + d[mid]) * T::lit(0.5) };
    if m > T::zero() {
        m
    } else {
        T::one()
    }
}

#[derive(Clone, Debug)]
pub struct MotionConfig<T> {
    pub iters: usize,
    pub tau_adap: T,
    pub lr_motion: T,
    pub lr_field: T,
}

impl<T: Scalar> Default for MotionConfig<T> {
    fn default() -> Self {
        MotionConfig { iters: DEFAULT_ITERS, tau_adap: T::lit(DEFAULT_TAU_ADAP), lr_motion: T::lit(LR_MOTION), lr_field: T::lit(LR_FIELD) }
    }
}

#[derive(Clone, Debug)]
pub struct MotionFit<T> {
    pub field: MotionField<T>,
    /// Loss before the first step.
    pub initial_loss: T,
    /// Loss at the last evaluated iterate.
    pub final_loss: T,
}

/// Fits keypoint motion and influence fields so that the moved scene
/// reproduces the frame-t views.
pub fn optimize_motion_frame<T: Scalar>(
    scene_prev: &SceneState<T>,
    kps: &KeypointSet,
    cams: &[Camera<T>],
    gts: &[Image<T>],
    cfg: &MotionConfig<T>,
    render_cfg: &RenderConfig<T>,
) -> Result<MotionFit<T>> {
    let extent = median_nn_distance(&scene_prev.positions());
    let init = MotionField { keypoints: kps.indices.iter().map(|&i| Keypoint::at_rest(i, extent)).collect(), tau_adap: cfg.tau_adap };
    init.validate(scene_prev.len())?;
    let mut params = Vec::with_capacity(kps.len() * KEYPOINT_PARAMS);
    for kp in &init.keypoints {
        let mut p = kp.to_payload();
        for k in 11..14 {
            p[k] = p[k].ln();
        }
        params.extend_from_slice(&p);
    }
    let mut opt = Adam::grouped(&[(7, cfg.lr_motion), (7, cfg.lr_field)], kps.len());
    let mut initial_loss = T::nan();
    let mut final_loss = T::nan();
    for step in 0..cfg.iters {
        let field = field_from_params(&kps.indices, &params, cfg.tau_adap);
        let membership = controlled_set(&field, scene_prev);
        let moved = apply_with(scene_prev, &field, &membership);
        let (loss, grads): (T, AttributeGradients<T>) = multiview_loss(&moved, cams, gts, render_cfg)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss: loss.to_f64_lossy() });
        }
        if step == 0 {
            initial_loss = loss;
        }
        final_loss = loss;
        let d = motion_backward(scene_prev, &field, &membership, &grads.params);
        opt.step(&mut params, &d)?;
    }
    let mut field = field_from_params(&kps.indices, &params, cfg.tau_adap);
    for kp in field.keypoints.iter_mut() {
        kp.delta_q = quat::normalize_or_identity(&kp.delta_q);
        kp.q_adap = quat::normalize_or_identity(&kp.q_adap);
    }
    if cfg.iters == 0 {
        let (loss, _) = multiview_loss(&apply_motion(scene_prev, &field)?, cams, gts, render_cfg)?;
        initial_loss = loss;
        final_loss = loss;
    }
    Ok(MotionFit { field, initial_loss, final_loss })
}
