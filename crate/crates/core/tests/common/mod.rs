#![allow(dead_code)]

pub mod codec_checks;
pub mod fixture;
pub mod fuzz;
pub mod gradcheck;
pub mod oracle;

use gstream_core::gaussian::{quat, sh, Camera, GaussianPoint, SceneState};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random scene near the origin with colors away from the clamp limits.
pub fn random_scene(rng: &mut ChaCha8Rng, n: usize, opacity: std::ops::Range<f64>) -> SceneState<f64> {
    let points = (0..n)
        .map(|_| {
            let mu = [rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6)];
            let q = quat::normalize(&[
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ])
            .unwrap_or(quat::identity());
            let s = [rng.random_range(0.05..0.3), rng.random_range(0.05..0.3), rng.random_range(0.05..0.3)];
            let o = rng.random_range(opacity.clone());
            let mut coeffs = [[0.0; 3]; 4];
            for c in 0..3 {
                coeffs[0][c] = (rng.random_range(0.35..0.65) - 0.5) / sh::SH_C0;
                for row in coeffs.iter_mut().skip(1) {
                    row[c] = rng.random_range(-0.15..0.15);
                }
            }
            GaussianPoint::new(mu, q, s, o, coeffs).unwrap()
        })
        .collect();
    SceneState::new(points)
}

pub fn two_cameras(w: usize, h: usize) -> Vec<Camera<f64>> {
    vec![
        Camera::look_at([0.0, 0.0, -4.0], [0.0; 3], [0.0, -1.0, 0.0], 14.0, w, h).unwrap(),
        Camera::look_at([3.0, -1.0, -2.5], [0.0; 3], [0.0, -1.0, 0.0], 14.0, w, h).unwrap(),
    ]
}

pub fn random_camera(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Camera<f64> {
    let az = rng.random_range(0.0..std::f64::consts::TAU);
    let el: f64 = rng.random_range(-0.5..0.5);
    let r: f64 = rng.random_range(3.0..5.0);
    let eye = [r * el.cos() * az.sin(), r * el.sin(), -r * el.cos() * az.cos()];
    Camera::look_at(eye, [0.0; 3], [0.0, -1.0, 0.0], rng.random_range(10.0..20.0), w, h).unwrap()
}
