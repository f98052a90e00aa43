//! Differentiable Gaussian splatting at desk scale.
//!
//! [`render_view`] projects every Gaussian, depth-sorts globally and
//! alpha-composites front to back. [`backward`] takes the gradient of a loss
//! w.r.t. the rendered image and returns gradients for every stored
//! Gaussian parameter plus the screen-space (viewspace) position gradient.

pub mod loss;
pub mod project;
pub mod raster;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{Camera, SceneState, PARAMS_PER_GAUSSIAN};
use crate::linalg::{Mat2, Vec2};
use crate::scalar::Scalar;

pub use loss::{l1, recon_loss, recon_loss_weighted, ssim};
pub use project::project_gaussian;
pub use raster::{rasterize, rasterize_backward, SplatGrad};

/// Row-major RGB image, three interleaved channels per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![T::zero(); width * height * 3] }
    }

    pub fn filled(width: usize, height: usize, rgb: [T; 3]) -> Self {
        let mut img = Self::new(width, height);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [T; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [T; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image { width: self.width, height: self.height, data: self.data.iter().map(|v| U::lit(v.to_f64_lossy())).collect() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderConfig<T> {
    pub background: [T; 3],
    /// Contributions with alpha below this are skipped; 0 disables the cutoff.
    pub min_alpha: T,
    /// Stop compositing once transmittance falls below 1e-4.
    pub early_stop: bool,
    /// Added to the diagonal of every 2D covariance, in pixel².
    pub low_pass: T,
    pub near: T,
    /// Weight of the D-SSIM term in the reconstruction loss.
    pub lambda_dssim: T,
}

impl<T: Scalar> Default for RenderConfig<T> {
    fn default() -> Self {
        Self {
            background: [T::zero(); 3],
            min_alpha: T::lit(1e-5),
            early_stop: true,
            low_pass: T::lit(0.3),
            near: T::lit(0.2),
            lambda_dssim: T::lit(loss::LAMBDA_DSSIM),
        }
    }
}

impl<T: Scalar> RenderConfig<T> {
    /// Smooth reference configuration: no alpha cutoff, no early termination.
    pub fn exact() -> Self {
        Self { min_alpha: T::zero(), early_stop: false, ..Self::default() }
    }
}

/// One Gaussian projected into a view.
#[derive(Clone, Debug, PartialEq)]
pub struct Splat2D<T> {
    /// Index of the source Gaussian in the scene.
    pub index: usize,
    pub mean2d: Vec2<T>,
    /// Screen covariance including the low-pass floor.
    pub cov2d: Mat2<T>,
    pub depth: T,
    pub color: [T; 3],
    pub alpha_base: T,
}

/// Result of a forward render; also the handle for [`backward`].
pub struct RenderOutput<T> {
    pub image: Image<T>,
    pub splats: Vec<Splat2D<T>>,
    caches: Vec<project::ProjectionCache<T>>,
    bins: raster::Binning<T>,
    camera: Camera<T>,
    config: RenderConfig<T>,
    scene_len: usize,
}

impl<T> RenderOutput<T> {
    pub fn scene_len(&self) -> usize {
        self.scene_len
    }
}

/// Per-Gaussian gradients. `params[i]` follows [`crate::gaussian::layout`].
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeGradients<T> {
    pub params: Vec<[T; PARAMS_PER_GAUSSIAN]>,
    /// ∂L/∂(projected 2D mean) for the view this was computed in.
    pub viewspace: Vec<Vec2<T>>,
}

impl<T: Scalar> AttributeGradients<T> {
    pub fn zeros(n: usize) -> Self {
        Self { params: vec![[T::zero(); PARAMS_PER_GAUSSIAN]; n], viewspace: vec![[T::zero(); 2]; n] }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Adds `scale · other` in place.
    pub fn accumulate(&mut self, other: &Self, scale: T) {
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            for k in 0..PARAMS_PER_GAUSSIAN {
                a[k] += b[k] * scale;
            }
        }
        for (a, b) in self.viewspace.iter_mut().zip(&other.viewspace) {
            a[0] += b[0] * scale;
            a[1] += b[1] * scale;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.params.iter().flatten().chain(self.viewspace.iter().flatten()).all(|v| *v == T::zero())
    }
}

pub fn render_view<T: Scalar>(scene: &SceneState<T>, cam: &Camera<T>, cfg: &RenderConfig<T>) -> Result<RenderOutput<T>> {
    if let Some(index) = scene.first_non_finite() {
        return Err(Error::NonFiniteGaussian { index });
    }
    let projected: Vec<_> = scene
        .points
        .par_iter()
        .enumerate()
        .map(|(i, p)| project::project_with_cache(i, p, cam, cfg))
        .collect();
    let mut splats = Vec::new();
    let mut caches = Vec::new();
    for (s, c) in projected.into_iter().flatten() {
        splats.push(s);
        caches.push(c);
    }
    let bins = raster::bin(&splats, cam.width, cam.height, cfg);
    let image = raster::rasterize_binned(&bins, cfg);
    Ok(RenderOutput {
        image,
        splats,
        caches,
        bins,
        camera: cam.clone(),
        config: cfg.clone(),
        scene_len: scene.len(),
    })
}

/// Gradients of a loss w.r.t. the scene, given `d_image = ∂L/∂image` of the
/// forward pass `out` that was rendered from this `scene` and `cam`.
pub fn backward<T: Scalar>(
    scene: &SceneState<T>,
    cam: &Camera<T>,
    out: &RenderOutput<T>,
    d_image: &Image<T>,
) -> Result<AttributeGradients<T>> {
    if out.scene_len != scene.len() || out.camera != *cam {
        return Err(Error::StaleForward);
    }
    if d_image.width != cam.width || d_image.height != cam.height {
        return Err(Error::ShapeMismatch("image gradient does not match the camera".into()));
    }
    let mut grads = AttributeGradients::zeros(scene.len());
    if d_image.data.iter().all(|v| *v == T::zero()) {
        return Ok(grads);
    }
    let splat_grads = raster::rasterize_backward_binned(&out.bins, &out.config, d_image);
    let per_point: Vec<_> = out
        .splats
        .par_iter()
        .zip(out.caches.par_iter())
        .zip(splat_grads.par_iter())
        .map(|((s, c), g)| {
            let p = &scene.points[s.index];
            let params = project::project_backward(p, cam, c, g.mean2d, g.conic, g.color, g.alpha_base);
            (s.index, params, g.mean2d)
        })
        .collect();
    for (i, params, vs) in per_point {
        grads.params[i] = params;
        grads.viewspace[i] = vs;
    }
    Ok(grads)
}

/// Mean reconstruction loss over several views and its scene gradient.
/// Views are processed in parallel and reduced in view order.
pub fn multiview_loss<T: Scalar>(
    scene: &SceneState<T>,
    cams: &[Camera<T>],
    targets: &[Image<T>],
    cfg: &RenderConfig<T>,
) -> Result<(T, AttributeGradients<T>)> {
    if cams.len() != targets.len() || cams.is_empty() {
        return Err(Error::ShapeMismatch(format!("{} cameras vs {} images", cams.len(), targets.len())));
    }
    let per_view: Vec<Result<(T, AttributeGradients<T>)>> = cams
        .par_iter()
        .zip(targets.par_iter())
        .map(|(cam, gt)| {
            let out = render_view(scene, cam, cfg)?;
            let (l, d_img) = recon_loss_weighted(&out.image, gt, cfg.lambda_dssim)?;
            let g = backward(scene, cam, &out, &d_img)?;
            Ok((l, g))
        })
        .collect();
    let inv = T::one() / T::from_usize(cams.len()).unwrap();
    let mut total = T::zero();
    let mut grads = AttributeGradients::zeros(scene.len());
    for r in per_view {
        let (l, g) = r?;
        total += l * inv;
        grads.accumulate(&g, inv);
    }
    Ok((total, grads))
}

/// Renders one image per camera.
pub fn render_all<T: Scalar>(scene: &SceneState<T>, cams: &[Camera<T>], cfg: &RenderConfig<T>) -> Result<Vec<Image<T>>> {
    cams.par_iter().map(|c| render_view(scene, c, cfg).map(|o| o.image)).collect()
}
