//! Key-frame correction with learnable binary masks.
//!
//! Every Gaussian owns a mask logit and a full attribute residual. The
//! forward pass applies a residual only where the thresholded mask is on;
//! only those residuals and the mask bits are transmitted.

use crate::error::{Error, Result};
use crate::gaussian::{layout, quat, Camera, GaussianPoint, Quat, SceneState, PARAMS_PER_GAUSSIAN};
use crate::optim::Adam;
use crate::render::{multiview_loss, Image, RenderConfig};
use crate::scalar::Scalar;

pub const DEFAULT_PHI_THRES: f64 = 0.5;
pub const DEFAULT_LAMBDA_ERROR: f64 = 0.001;
pub const DEFAULT_ITERS: usize = 1000;
pub const LR_MASK: f64 = 0.01;
pub const LR_RESIDUAL: f64 = 0.002;
pub const DEFAULT_PROBE_STEPS: usize = 10;

/// A residual record in the stored-parameter layout. The rotation slot holds
/// an increment quaternion (identity means no change).
pub type Residual<T> = [T; PARAMS_PER_GAUSSIAN];

pub fn zero_residual<T: Scalar>() -> Residual<T> {
    let mut r = [T::zero(); PARAMS_PER_GAUSSIAN];
    r[layout::ROT] = T::one();
    r
}

pub fn soft_mask<T: Scalar>(m: T) -> T {
    m.sigmoid()
}

/// Forward value of the straight-through mask: `soft > phi`.
pub fn hard_mask<T: Scalar>(soft: T, phi: T) -> bool {
    soft > phi
}

/// Gradient w.r.t. the logit through the soft mask.
pub fn soft_mask_backward<T: Scalar>(m: T, d_soft: T) -> T {
    let s = m.sigmoid();
    d_soft * s * (T::one() - s)
}

/// Gradient w.r.t. the logit through the hard mask: the indicator is
/// detached, so only the soft path remains.
pub fn hard_mask_backward<T: Scalar>(m: T, d_hard: T) -> T {
    soft_mask_backward(m, d_hard)
}

/// `(1/N) Σ soft_i`
pub fn error_loss<T: Scalar>(soft: &[T]) -> Result<T> {
    if soft.is_empty() {
        return Err(Error::InvalidArgument("error loss of an empty mask".into()));
    }
    Ok(soft.iter().copied().sum::<T>() / T::from_usize(soft.len()).unwrap())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskState<T> {
    pub logits: Vec<T>,
    pub phi_thres: T,
}

impl<T: Scalar> MaskState<T> {
    pub fn zeros(n: usize, phi_thres: T) -> Self {
        MaskState { logits: vec![T::zero(); n], phi_thres }
    }

    pub fn soft(&self) -> Vec<T> {
        self.logits.iter().map(|&m| soft_mask(m)).collect()
    }

    pub fn hard(&self) -> Vec<bool> {
        self.logits.iter().map(|&m| hard_mask(soft_mask(m), self.phi_thres)).collect()
    }
}

/// Residuals for exactly the masked Gaussians, in ascending index order.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedResiduals<T> {
    pub hard_mask: Vec<bool>,
    pub residuals: Vec<Residual<T>>,
}

impl<T: Scalar> MaskedResiduals<T> {
    pub fn empty(n: usize) -> Self {
        MaskedResiduals { hard_mask: vec![false; n], residuals: Vec::new() }
    }

    pub fn popcount(&self) -> usize {
        self.hard_mask.iter().filter(|&&b| b).count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.residuals.len() != self.popcount() {
            return Err(Error::ShapeMismatch(format!(
                "{} residual records for {} masked Gaussians",
                self.residuals.len(),
                self.popcount()
            )));
        }
        if !self.residuals.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("residual"));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> MaskedResiduals<U> {
        MaskedResiduals {
            hard_mask: self.hard_mask.clone(),
            residuals: self.residuals.iter().map(|r| r.map(|v| U::lit(v.to_f64_lossy()))).collect(),
        }
    }
}

fn rotated<T: Scalar>(delta: &Residual<T>, q_prev: &Quat<T>) -> Quat<T> {
    let dq = quat::normalize_or_identity(&[delta[3], delta[4], delta[5], delta[6]]);
    quat::normalize_or_identity(&quat::mul(&dq, q_prev))
}

/// `θ ⊕ Δθ`: additive for position, log-scale, opacity logit and SH;
/// left-multiplied increment for the rotation. `hard = false` is the identity.
pub fn apply_residuals<T: Scalar>(theta_prev: &GaussianPoint<T>, delta: &Residual<T>, hard: bool) -> GaussianPoint<T> {
    if !hard {
        return *theta_prev;
    }
    let mut p = theta_prev.to_params();
    for k in 0..PARAMS_PER_GAUSSIAN {
        if !(layout::ROT..layout::LOG_SCALE).contains(&k) {
            p[k] += delta[k];
        }
    }
    p[3..7].copy_from_slice(&rotated(delta, &theta_prev.rotation));
    GaussianPoint::from_params(&p)
}

/// Applies decoded residuals to every masked Gaussian.
pub fn apply_masked<T: Scalar>(scene_prev: &SceneState<T>, masked: &MaskedResiduals<T>) -> Result<SceneState<T>> {
    if masked.hard_mask.len() != scene_prev.len() {
        return Err(Error::ShapeMismatch(format!("mask of {} for {} Gaussians", masked.hard_mask.len(), scene_prev.len())));
    }
    masked.validate()?;
    let mut next = scene_prev.clone();
    next.timestep = scene_prev.timestep + 1;
    let on = masked.hard_mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i);
    for (i, r) in on.zip(&masked.residuals) {
        next.points[i] = apply_residuals(&scene_prev.points[i], r, true);
    }
    Ok(next)
}

/// Backward of one Gaussian's update given `g = ∂L/∂θ` at the current iterate.
///
/// Returns `(∂L/∂Δθ as if the mask were on, ∂L/∂h)`. The hard value gates
/// the first at the call site. `∂L/∂h` is taken along the finite update
/// `θ(1) − θ(0)` with the residual advanced by one tentative optimizer step
/// of size `lookahead` per slot (Adam moves each slot by about its
/// learning rate per step); without that term a zero residual and a zero
/// mask would never receive gradient.
fn residual_backward<T: Scalar>(prev: &GaussianPoint<T>, delta: &Residual<T>, g: &Residual<T>, lookahead: T) -> (Residual<T>, T) {
    let mut d_delta = [T::zero(); PARAMS_PER_GAUSSIAN];
    let mut d_h = T::zero();
    for k in 0..PARAMS_PER_GAUSSIAN {
        if !(layout::ROT..layout::LOG_SCALE).contains(&k) {
            d_delta[k] = g[k];
            d_h += g[k] * delta[k];
        }
    }
    let raw_dq: Quat<T> = [delta[3], delta[4], delta[5], delta[6]];
    let unit_dq = quat::normalize_or_identity(&raw_dq);
    let moved = quat::mul(&unit_dq, &prev.rotation);
    let g_q: Quat<T> = [g[3], g[4], g[5], g[6]];
    let d_unit = quat::mul_backward_left(&prev.rotation, &quat::normalize_backward(&moved, &g_q));
    d_delta[3..7].copy_from_slice(&quat::normalize_backward(&raw_dq, &d_unit));
    let q1 = rotated(delta, &prev.rotation);
    for k in 0..4 {
        d_h += g_q[k] * (q1[k] - prev.rotation[k]);
    }
    d_h -= lookahead * d_delta.iter().map(|v| v.abs()).sum::<T>();
    (d_delta, d_h)
}

#[derive(Clone, Debug)]
pub struct CorrectorConfig<T> {
    pub iters: usize,
    pub phi_thres: T,
    pub lambda_error: T,
    pub lr_mask: T,
    pub lr_residual: T,
    /// Optimizer steps a never-trained residual is credited with when its
    /// mask gradient is formed.
    pub probe_steps: usize,
}

impl<T: Scalar> Default for CorrectorConfig<T> {
    fn default() -> Self {
        CorrectorConfig {
            iters: DEFAULT_ITERS,
            phi_thres: T::lit(DEFAULT_PHI_THRES),
            lambda_error: T::lit(DEFAULT_LAMBDA_ERROR),
            lr_mask: T::lit(LR_MASK),
            lr_residual: T::lit(LR_RESIDUAL),
            probe_steps: DEFAULT_PROBE_STEPS,
        }
    }
}

#[derive(Clone, Debug)]
pub struct KeyframeFit<T> {
    pub residuals: MaskedResiduals<T>,
    pub mask: MaskState<T>,
    /// Reconstruction loss of the unchanged previous scene.
    pub initial_loss: T,
    /// Total loss at the last evaluated iterate.
    pub final_loss: T,
}

fn current_scene<T: Scalar>(scene_prev: &SceneState<T>, deltas: &[T], hard: &[bool]) -> SceneState<T> {
    let mut s = scene_prev.clone();
    for (i, p) in s.points.iter_mut().enumerate() {
        if hard[i] {
            let d: &Residual<T> = deltas[i * PARAMS_PER_GAUSSIAN..(i + 1) * PARAMS_PER_GAUSSIAN].try_into().unwrap();
            *p = apply_residuals(&scene_prev.points[i], d, true);
        }
    }
    s
}

/// Minimizes `L_recon + λ_error · L_error` over masks and residuals, all
/// starting at zero so the first iterate renders `scene_prev` unchanged.
pub fn optimize_keyframe<T: Scalar>(
    scene_prev: &SceneState<T>,
    cams: &[Camera<T>],
    gts: &[Image<T>],
    cfg: &CorrectorConfig<T>,
    render_cfg: &RenderConfig<T>,
) -> Result<KeyframeFit<T>> {
    let n = scene_prev.len();
    if n == 0 {
        return Err(Error::InvalidArgument("key-frame correction of an empty scene".into()));
    }
    let mut mask = MaskState::zeros(n, cfg.phi_thres);
    let mut deltas: Vec<T> = (0..n).flat_map(|_| zero_residual::<T>()).collect();
    let mut opt_delta = Adam::new(vec![cfg.lr_residual; deltas.len()]);
    let mut opt_mask = Adam::new(vec![cfg.lr_mask; n]);
    let inv_n = T::one() / T::from_usize(n).unwrap();
    let mut initial_loss = T::nan();
    let mut final_loss = T::nan();
    // Gaussians whose residual has been optimized at least once; the rest
    // are judged by a one-step look-ahead.
    let mut trained = vec![false; n];
    let probe = cfg.lr_residual * T::from_usize(cfg.probe_steps).unwrap();

    for step in 0..cfg.iters {
        let soft = mask.soft();
        let hard = mask.hard();
        let scene = current_scene(scene_prev, &deltas, &hard);
        let (recon, grads) = multiview_loss(&scene, cams, gts, render_cfg)?;
        let loss = recon + cfg.lambda_error * error_loss(&soft)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss: loss.to_f64_lossy() });
        }
        if step == 0 {
            initial_loss = recon;
        }
        final_loss = loss;
        if step % 50 == 0 {
            log::debug!("key frame step {step}: loss {loss}, recon {recon}, {} masked", hard.iter().filter(|&&b| b).count());
        }

        let mut d_deltas = vec![T::zero(); deltas.len()];
        let mut d_logits = vec![T::zero(); n];
        for i in 0..n {
            let range = i * PARAMS_PER_GAUSSIAN..(i + 1) * PARAMS_PER_GAUSSIAN;
            let d: &Residual<T> = deltas[range.clone()].try_into().unwrap();
            let lookahead = if trained[i] { T::zero() } else { probe };
            let (dd, d_h) = residual_backward(&scene_prev.points[i], d, &grads.params[i], lookahead);
            if hard[i] {
                d_deltas[range].copy_from_slice(&dd);
                trained[i] = true;
            }
            d_logits[i] = hard_mask_backward(mask.logits[i], d_h) + soft_mask_backward(mask.logits[i], cfg.lambda_error * inv_n);
        }
        opt_delta.step(&mut deltas, &d_deltas)?;
        opt_mask.step(&mut mask.logits, &d_logits)?;
    }
    if cfg.iters == 0 {
        initial_loss = multiview_loss(scene_prev, cams, gts, render_cfg)?.0;
        final_loss = initial_loss + cfg.lambda_error * T::lit(0.5);
    }

    let hard = mask.hard();
    let residuals = (0..n)
        .filter(|&i| hard[i])
        .map(|i| {
            let mut r: Residual<T> = deltas[i * PARAMS_PER_GAUSSIAN..(i + 1) * PARAMS_PER_GAUSSIAN].try_into().unwrap();
            let q = quat::normalize_or_identity(&[r[3], r[4], r[5], r[6]]);
            r[3..7].copy_from_slice(&q);
            r
        })
        .collect();
    Ok(KeyframeFit { residuals: MaskedResiduals { hard_mask: hard, residuals }, mask, initial_loss, final_loss })
}
