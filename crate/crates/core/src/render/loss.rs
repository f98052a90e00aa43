//! Reconstruction loss `0.8·L1 + 0.2·D-SSIM` with `D-SSIM = (1 - SSIM) / 2`.

use super::Image;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const LAMBDA_DSSIM: f64 = 0.2;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Normalized 1D Gaussian window; the 2D window is its outer product.
pub fn gaussian_window<T: Scalar>() -> [T; SSIM_WINDOW] {
    let mut w = [0.0f64; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| T::lit(v / s))
}

/// Zero-padded "same" separable filtering of one channel plane. The window
/// is symmetric, so this operator is also its own adjoint.
fn blur<T: Scalar>(src: &[T], width: usize, height: usize, win: &[T; SSIM_WINDOW]) -> Vec<T> {
    let r = SSIM_WINDOW / 2;
    // taps k cover source offsets i + k - r that stay inside [0, len)
    let taps = |i: usize, len: usize| (r.saturating_sub(i), SSIM_WINDOW.min(len + r - i));
    let mut tmp = vec![T::zero(); src.len()];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for x in 0..width {
            let (k0, k1) = taps(x, width);
            let mut acc = T::zero();
            for k in k0..k1 {
                acc += win[k] * row[x + k - r];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![T::zero(); src.len()];
    for y in 0..height {
        let (k0, k1) = taps(y, height);
        for k in k0..k1 {
            let wk = win[k];
            let src_row = &tmp[(y + k - r) * width..(y + k - r + 1) * width];
            let dst = &mut out[y * width..(y + 1) * width];
            for (d, v) in dst.iter_mut().zip(src_row) {
                *d += wk * *v;
            }
        }
    }
    out
}

fn channel<T: Scalar>(img: &Image<T>, c: usize) -> Vec<T> {
    img.data.iter().skip(c).step_by(3).copied().collect()
}

/// Mean SSIM over all pixels and channels, plus its gradient w.r.t. `x`.
pub fn ssim<T: Scalar>(x: &Image<T>, y: &Image<T>) -> Result<(T, Image<T>)> {
    check_shapes(x, y)?;
    let (w, h) = (x.width, x.height);
    let win = gaussian_window::<T>();
    let (c1, c2) = (T::lit(C1), T::lit(C2));
    let two = T::lit(2.0);
    let count = T::from_usize(w * h * 3).unwrap();
    let mut total = T::zero();
    let mut grad = Image::new(w, h);
    for c in 0..3 {
        let xc = channel(x, c);
        let yc = channel(y, c);
        let xx: Vec<T> = xc.iter().map(|v| *v * *v).collect();
        let yy: Vec<T> = yc.iter().map(|v| *v * *v).collect();
        let xy: Vec<T> = xc.iter().zip(&yc).map(|(a, b)| *a * *b).collect();
        let mu_x = blur(&xc, w, h, &win);
        let mu_y = blur(&yc, w, h, &win);
        let e_xx = blur(&xx, w, h, &win);
        let e_yy = blur(&yy, w, h, &win);
        let e_xy = blur(&xy, w, h, &win);
        let n = xc.len();
        let mut g_mu = vec![T::zero(); n];
        let mut g_exx = vec![T::zero(); n];
        let mut g_exy = vec![T::zero(); n];
        for i in 0..n {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let a1 = two * mx * my + c1;
            let a2 = two * (e_xy[i] - mx * my) + c2;
            let b1 = mx * mx + my * my + c1;
            let b2 = (e_xx[i] - mx * mx) + (e_yy[i] - my * my) + c2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            let inv = T::one() / (b1 * b2);
            g_mu[i] = (two * my * a2 - two * my * a1) * inv - s * (two * mx / b1 - two * mx / b2);
            g_exx[i] = -s / b2;
            g_exy[i] = two * a1 * inv;
        }
        let b_mu = blur(&g_mu, w, h, &win);
        let b_exx = blur(&g_exx, w, h, &win);
        let b_exy = blur(&g_exy, w, h, &win);
        for i in 0..n {
            let d = (b_mu[i] + two * xc[i] * b_exx[i] + yc[i] * b_exy[i]) / count;
            grad.data[i * 3 + c] = d;
        }
    }
    Ok((total / count, grad))
}

fn check_shapes<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<()> {
    if a.width != b.width || a.height != b.height || a.data.len() != b.data.len() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// Mean absolute error and its (sub)gradient; zero where the images agree.
pub fn l1<T: Scalar>(rendered: &Image<T>, gt: &Image<T>) -> Result<(T, Image<T>)> {
    check_shapes(rendered, gt)?;
    let count = T::from_usize(rendered.data.len()).unwrap();
    let mut grad = Image::new(rendered.width, rendered.height);
    let mut total = T::zero();
    for (i, (r, g)) in rendered.data.iter().zip(&gt.data).enumerate() {
        let d = *r - *g;
        total += d.abs();
        grad.data[i] = if d > T::zero() {
            T::one() / count
        } else if d < T::zero() {
            -T::one() / count
        } else {
            T::zero()
        };
    }
    Ok((total / count, grad))
}

/// Reconstruction loss and its gradient w.r.t. the rendered image.
pub fn recon_loss<T: Scalar>(rendered: &Image<T>, gt: &Image<T>) -> Result<(T, Image<T>)> {
    recon_loss_weighted(rendered, gt, T::lit(LAMBDA_DSSIM))
}

pub fn recon_loss_weighted<T: Scalar>(rendered: &Image<T>, gt: &Image<T>, lambda_dssim: T) -> Result<(T, Image<T>)> {
    let (l1_val, l1_grad) = l1(rendered, gt)?;
    let w1 = T::one() - lambda_dssim;
    if lambda_dssim == T::zero() {
        return Ok((l1_val, l1_grad));
    }
    let (s, s_grad) = ssim(rendered, gt)?;
    let half = T::lit(0.5);
    let loss = w1 * l1_val + lambda_dssim * (T::one() - s) * half;
    let mut grad = l1_grad;
    for (g, sg) in grad.data.iter_mut().zip(&s_grad.data) {
        *g = w1 * *g - lambda_dssim * half * *sg;
    }
    Ok((loss, grad))
}
