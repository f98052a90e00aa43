//! Analytic render gradients against central finite differences in f64.

use gstream_core::gaussian::{Camera, GaussianPoint, SceneState, PARAMS_PER_GAUSSIAN};
use gstream_core::render::raster::rasterize;
use gstream_core::render::{backward, render_view, Image, RenderConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const W: usize = 16;
pub const H: usize = 16;

/// Smooth scalar objective: a fixed random linear functional of each view.
fn objective(scene: &SceneState<f64>, cams: &[Camera<f64>], weights: &[Image<f64>], cfg: &RenderConfig<f64>) -> f64 {
    cams.iter()
        .zip(weights)
        .map(|(c, w)| {
            let img = render_view(scene, c, cfg).unwrap().image;
            img.data.iter().zip(&w.data).map(|(a, b)| a * b).sum::<f64>()
        })
        .sum()
}

fn close(analytic: f64, fd: f64) -> bool {
    let err = (analytic - fd).abs();
    err <= 1e-6 || err <= 1e-3 * analytic.abs().max(fd.abs())
}

/// Checks every attribute and viewspace gradient of one random scene
/// (1..=20 Gaussians, two 16×16 views); returns the number of comparisons.
pub fn check_scene(seed: u64) -> Result<usize, String> {
    let cfg = RenderConfig::exact();
    let cams = super::two_cameras(W, H);
    let h = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let n = rng.random_range(1..=20);
    let scene = super::random_scene(&mut rng, n, 0.1..0.9);
    let weights: Vec<Image<f64>> = cams
        .iter()
        .map(|_| {
            let mut w = Image::new(W, H);
            w.data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            w
        })
        .collect();
    let mut checked = 0;

    let mut analytic = vec![[0.0; PARAMS_PER_GAUSSIAN]; n];
    for (cam, w) in cams.iter().zip(&weights) {
        let out = render_view(&scene, cam, &cfg).unwrap();
        if out.splats.len() != n {
            return Err(format!("seed {seed}: every Gaussian should be in view"));
        }
        let g = backward(&scene, cam, &out, w).unwrap();
        for (a, p) in analytic.iter_mut().zip(&g.params) {
            for k in 0..PARAMS_PER_GAUSSIAN {
                a[k] += p[k];
            }
        }

        // viewspace: perturb projected means directly
        for (slot, splat) in out.splats.iter().enumerate() {
            for d in 0..2 {
                let mut plus = out.splats.clone();
                plus[slot].mean2d[d] += h;
                let mut minus = out.splats.clone();
                minus[slot].mean2d[d] -= h;
                let f = |s: &[_]| -> f64 {
                    let img = rasterize(s, W, H, &cfg);
                    img.data.iter().zip(&w.data).map(|(a, b)| a * b).sum()
                };
                let fd = (f(&plus) - f(&minus)) / (2.0 * h);
                let a = g.viewspace[splat.index][d];
                if !close(a, fd) {
                    return Err(format!("seed {seed} gaussian {} viewspace {d}: {a} vs {fd}", splat.index));
                }
                checked += 1;
            }
        }
    }

    for i in 0..n {
        let base = scene.points[i].to_params();
        for k in 0..PARAMS_PER_GAUSSIAN {
            let eval = |v: f64| {
                let mut s = scene.clone();
                let mut p = base;
                p[k] = v;
                s.points[i] = GaussianPoint::from_params(&p);
                objective(&s, &cams, &weights, &cfg)
            };
            let fd = (eval(base[k] + h) - eval(base[k] - h)) / (2.0 * h);
            if !close(analytic[i][k], fd) {
                return Err(format!("seed {seed} gaussian {i} param {k}: {} vs {fd}", analytic[i][k]));
            }
            checked += 1;
        }
    }
    Ok(checked)
}
