//! A small stream built only from seeded random values, with no
//! transcendental math, so its bytes are the same on every platform.

use gstream_core::codec::{encode_payload, Container, FramePayload, Record, StreamHeader};
use gstream_core::corrector::MaskedResiduals;
use gstream_core::gaussian::{GaussianPoint, SceneState, PARAMS_PER_GAUSSIAN};
use gstream_core::motion::{Keypoint, MotionField, KEYPOINT_PARAMS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GOLDEN_PATH: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/golden.cgs");

pub fn golden_header() -> StreamHeader {
    StreamHeader::new(64, 3, 4, 0.01, 0.5, 5).unwrap()
}

fn scene(rng: &mut ChaCha8Rng, n: usize) -> SceneState<f32> {
    let points = (0..n)
        .map(|_| {
            let mut p = [0.0f32; PARAMS_PER_GAUSSIAN];
            for (k, v) in p.iter_mut().enumerate() {
                *v = match k {
                    0..=2 => rng.random_range(-1.0..1.0),
                    3 => 1.0,
                    4..=6 => rng.random_range(-0.25..0.25),
                    7..=9 => rng.random_range(-4.0..-2.0),
                    10 => rng.random_range(-2.0..2.0),
                    _ => rng.random_range(-0.5..0.5),
                };
            }
            GaussianPoint::from_params(&p)
        })
        .collect();
    SceneState::new(points)
}

fn motion(rng: &mut ChaCha8Rng, h: &StreamHeader) -> MotionField<f32> {
    let mut indices: Vec<usize> = (0..h.n as usize).collect();
    for i in 0..h.k as usize {
        let j = rng.random_range(i..indices.len());
        indices.swap(i, j);
    }
    let mut chosen = indices[..h.k as usize].to_vec();
    chosen.sort_unstable();
    let keypoints = chosen
        .into_iter()
        .map(|index| {
            let mut p = [0.0f32; KEYPOINT_PARAMS];
            for v in p.iter_mut() {
                *v = rng.random_range(-0.1..0.1);
            }
            p[3] = 1.0;
            p[7] = 1.0;
            for v in &mut p[11..14] {
                *v = rng.random_range(0.05..0.5);
            }
            Keypoint::from_payload(index, &p)
        })
        .collect();
    MotionField { keypoints, tau_adap: h.tau_adap }
}

fn keycorr(rng: &mut ChaCha8Rng, n: usize) -> MaskedResiduals<f32> {
    let mut m = MaskedResiduals::empty(n);
    for i in 0..n {
        if rng.random_bool(0.2) {
            m.hard_mask[i] = true;
            let mut r = [0.0f32; PARAMS_PER_GAUSSIAN];
            for v in r.iter_mut() {
                *v = rng.random_range(-0.05..0.05);
            }
            m.residuals.push(r);
        }
    }
    m
}

/// INIT, MOTION, MOTION, KEYCORR, MOTION with GoF 3.
pub fn golden_container() -> Container {
    let h = golden_header();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6753);
    let payloads = [FramePayload::Init(scene(&mut rng, h.n as usize)),
        FramePayload::Motion(motion(&mut rng, &h)),
        FramePayload::Motion(motion(&mut rng, &h)),
        FramePayload::Keycorr(keycorr(&mut rng, h.n as usize)),
        FramePayload::Motion(motion(&mut rng, &h))];
    let records = payloads.iter().map(|p| Record { tag: p.tag(), body: encode_payload(p, &h).unwrap() }).collect();
    Container { header: h, records }
}
