//! Motion-sensitive keypoint selection.
//!
//! The previous frame's scene is rendered once per training view and the
//! reconstruction loss is differentiated against both the previous and the
//! current ground-truth image. Gaussians whose screen-space position
//! gradient changes the most between the two targets sit in moving regions.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{Camera, SceneState};
use crate::linalg::Vec2;
use crate::render::{backward, recon_loss_weighted, render_view, Image, RenderConfig};
use crate::scalar::Scalar;

/// Per-view screen-space gradients at the previous and current frame.
type GradPair<T> = (Vec<Vec2<T>>, Vec<Vec2<T>>);

/// Paper-scale keypoint budget.
pub const DEFAULT_K: usize = 200;

/// Per-view screen-space position gradients, `[view][gaussian]`.
pub type ViewspaceField<T> = Vec<Vec<Vec2<T>>>;

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicScores<T> {
    pub scores: Vec<T>,
}

/// Selected Gaussian indices, ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeypointSet {
    pub indices: Vec<usize>,
}

impl KeypointSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Returns `(g_prev, g_t)`: the viewspace gradients of the loss against the
/// previous and the current ground truth, both at the previous positions.
pub fn viewspace_gradients<T: Scalar>(
    scene_prev: &SceneState<T>,
    cams: &[Camera<T>],
    gts_prev: &[Image<T>],
    gts_t: &[Image<T>],
    cfg: &RenderConfig<T>,
) -> Result<(ViewspaceField<T>, ViewspaceField<T>)> {
    if gts_prev.len() != cams.len() || gts_t.len() != cams.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} cameras, {} previous and {} current images",
            cams.len(),
            gts_prev.len(),
            gts_t.len()
        )));
    }
    let per_view: Vec<Result<GradPair<T>>> = cams
        .par_iter()
        .zip(gts_prev.par_iter().zip(gts_t.par_iter()))
        .map(|(cam, (gp, gt))| {
            let out = render_view(scene_prev, cam, cfg)?;
            let (_, d_prev) = recon_loss_weighted(&out.image, gp, cfg.lambda_dssim)?;
            let (_, d_cur) = recon_loss_weighted(&out.image, gt, cfg.lambda_dssim)?;
            let a = backward(scene_prev, cam, &out, &d_prev)?;
            let b = backward(scene_prev, cam, &out, &d_cur)?;
            Ok((a.viewspace, b.viewspace))
        })
        .collect();
    let mut g_prev = Vec::with_capacity(cams.len());
    let mut g_t = Vec::with_capacity(cams.len());
    for r in per_view {
        let (a, b) = r?;
        g_prev.push(a);
        g_t.push(b);
    }
    Ok((g_prev, g_t))
}

/// `score_i = (1/V) Σ_v ‖g_t[v][i] − g_prev[v][i]‖₂`
pub fn dynamic_scores<T: Scalar>(g_t: &ViewspaceField<T>, g_prev: &ViewspaceField<T>) -> Result<DynamicScores<T>> {
    let views = g_t.len();
    if views == 0 {
        return Err(Error::InvalidArgument("dynamic scores need at least one view".into()));
    }
    if g_prev.len() != views {
        return Err(Error::ShapeMismatch(format!("{} vs {} views", views, g_prev.len())));
    }
    let n = g_t[0].len();
    if g_t.iter().chain(g_prev.iter()).any(|v| v.len() != n) {
        return Err(Error::ShapeMismatch("gradient fields differ in length".into()));
    }
    let mut scores = vec![T::zero(); n];
    for (a, b) in g_t.iter().zip(g_prev) {
        for (s, (ga, gb)) in scores.iter_mut().zip(a.iter().zip(b)) {
            let dx = ga[0] - gb[0];
            let dy = ga[1] - gb[1];
            *s += (dx * dx + dy * dy).sqrt();
        }
    }
    let inv = T::one() / T::from_usize(views).unwrap();
    for s in scores.iter_mut() {
        *s *= inv;
    }
    Ok(DynamicScores { scores })
}

/// Top-`k` scores, ties broken by ascending index; output sorted ascending.
pub fn select_keypoints<T: Scalar>(scores: &DynamicScores<T>, k: usize) -> Result<KeypointSet> {
    let n = scores.scores.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in 1..={n}")));
    }
    if scores.scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("dynamic score"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let s = &scores.scores;
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap().then(a.cmp(&b)));
    let mut indices = order[..k].to_vec();
    indices.sort_unstable();
    Ok(KeypointSet { indices })
}
