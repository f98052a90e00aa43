//! Brute-force per-pixel compositing oracle.

use gstream_core::gaussian::{sh, Camera, GaussianPoint, SceneState};
use gstream_core::render::Image;

pub fn pinhole(cam: &Camera<f64>, x: [f64; 3]) -> [f64; 2] {
    let t = cam.world_to_camera(x);
    [cam.fx * t[0] / t[2] + cam.cx, cam.fy * t[1] / t[2] + cam.cy]
}

/// Sorts every Gaussian by depth and composites all of them at every pixel,
/// with no skipping and no early termination. The projection Jacobian comes
/// from finite differences of the pinhole map.
pub fn oracle(scene: &SceneState<f64>, cam: &Camera<f64>, bg: [f64; 3]) -> Image<f64> {
    struct Flat {
        depth: f64,
        index: usize,
        mean: [f64; 2],
        inv: [[f64; 2]; 2],
        opacity: f64,
        color: [f64; 3],
    }
    let mut flat: Vec<Flat> = scene
        .points
        .iter()
        .enumerate()
        .map(|(index, p): (usize, &GaussianPoint<f64>)| {
            let h = 1e-6;
            let mut jac = [[0.0; 3]; 2];
            for k in 0..3 {
                let (mut a, mut b) = (p.mu, p.mu);
                a[k] += h;
                b[k] -= h;
                let (pa, pb) = (pinhole(cam, a), pinhole(cam, b));
                for r in 0..2 {
                    jac[r][k] = (pa[r] - pb[r]) / (2.0 * h);
                }
            }
            let sigma = p.covariance().unwrap();
            let mut cov = [[0.0; 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    for i in 0..3 {
                        for j in 0..3 {
                            cov[a][b] += jac[a][i] * sigma[i][j] * jac[b][j];
                        }
                    }
                }
            }
            cov[0][0] += 0.3;
            cov[1][1] += 0.3;
            let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
            let inv = [[cov[1][1] / det, -cov[0][1] / det], [-cov[1][0] / det, cov[0][0] / det]];
            let eye = cam.center();
            let d = [p.mu[0] - eye[0], p.mu[1] - eye[1], p.mu[2] - eye[2]];
            let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            let color = sh::eval_sh(&p.sh, [d[0] / n, d[1] / n, d[2] / n]).unwrap();
            Flat { depth: cam.world_to_camera(p.mu)[2], index, mean: pinhole(cam, p.mu), inv, opacity: p.opacity(), color }
        })
        .collect();
    flat.sort_by(|a, b| a.depth.partial_cmp(&b.depth).unwrap().then(a.index.cmp(&b.index)));

    let mut img = Image::new(cam.width, cam.height);
    for y in 0..cam.height {
        for x in 0..cam.width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut c = [0.0; 3];
            let mut t = 1.0;
            for f in &flat {
                let (dx, dy) = (px - f.mean[0], py - f.mean[1]);
                let m = f.inv[0][0] * dx * dx + (f.inv[0][1] + f.inv[1][0]) * dx * dy + f.inv[1][1] * dy * dy;
                let alpha = (f.opacity * (-0.5 * m).exp()).clamp(0.0, 0.99);
                for ch in 0..3 {
                    c[ch] += f.color[ch] * alpha * t;
                }
                t *= 1.0 - alpha;
            }
            for ch in 0..3 {
                c[ch] += t * bg[ch];
            }
            img.set(x, y, c);
        }
    }
    img
}

pub fn max_diff(a: &Image<f64>, b: &Image<f64>) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
