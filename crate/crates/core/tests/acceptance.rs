//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs under `cargo test` as a plain binary. It always exits 0 unless
//! `ACCEPTANCE_STRICT=1` is set, in which case any FAIL exits 1.
//! `ACCEPTANCE_ONLY=<substring>` restricts the run to matching criteria.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use common::fixture::{golden_container, GOLDEN_PATH};
use gstream_core::codec::{decode_payload, encode_payload, read_container, write_container, FramePayload, PayloadTag, StreamHeader};
use gstream_core::corrector::{hard_mask_backward, optimize_keyframe, soft_mask_backward, zero_residual, CorrectorConfig, MaskedResiduals};
use gstream_core::gaussian::{sh, Camera, GaussianPoint, SceneState};
use gstream_core::keypoint::{dynamic_scores, select_keypoints, viewspace_gradients, KeypointSet};
use gstream_core::motion::{apply_motion, optimize_motion_frame, Keypoint, MotionConfig, MotionField};
use gstream_core::pipeline::*;
use gstream_core::render::{render_all, RenderConfig};
use gstream_core::stream::{Role, Session};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradient_correctness() -> Outcome {
    let mut checked = 0;
    for seed in 0..20u64 {
        checked += common::gradcheck::check_scene(seed).map_err(|e| format!("seed {seed}: {e}"))?;
    }
    Ok(format!("20 scenes, {checked} gradient entries within 1e-3 rel / 1e-6 abs"))
}

fn compositing_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(0..=32);
        let scene = common::random_scene(&mut rng, n, 0.05..0.99);
        let cam = common::random_camera(&mut rng, 16, 16);
        let bg = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let cfg = RenderConfig { background: bg, ..RenderConfig::default() };
        let out = gstream_core::render::render_view(&scene, &cam, &cfg).map_err(|e| e.to_string())?;
        worst = worst.max(common::oracle::max_diff(&out.image, &common::oracle::oracle(&scene, &cam, bg)));
    }
    ensure(worst < 1e-4, format!("100 scenes, worst channel difference {worst:.2e} (< 1e-4)"))
}

fn keypoint_localization() -> Outcome {
    let spec = SynthSpec::named("rigid-50-of-500", 2, 0).map_err(|e| e.to_string())?;
    let s = synth_scene(&spec).map_err(|e| e.to_string())?;
    let d = &s.dataset;
    let (g_prev, g_t) = viewspace_gradients(&s.scenes[0], d.cameras(), d.images(0), d.images(1), &RenderConfig::default()).map_err(|e| e.to_string())?;
    let kps = select_keypoints(&dynamic_scores(&g_t, &g_prev).map_err(|e| e.to_string())?, 16).map_err(|e| e.to_string())?;
    let hits = kps.indices.iter().filter(|&&i| s.moving[i]).count();
    let frac = hits as f64 / kps.len() as f64;
    ensure(frac >= 0.8, format!("{hits}/{} keypoints in the moving subset ({:.0}%, need >= 80%)", kps.len(), 100.0 * frac))
}

fn motion_recovery() -> Outcome {
    const R: f32 = 0.15;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pts = (0..50)
        .map(|_| {
            let mu = [rng.random_range(-R..R), rng.random_range(-R..R), rng.random_range(-R..R)];
            let rgb = [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)];
            GaussianPoint::isotropic(mu, R * 0.2, 0.8, rgb)
        })
        .collect::<gstream_core::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    let prev = SceneState::new(pts);
    let mut target = prev.clone();
    target.points.iter_mut().for_each(|p| p.mu[0] += 0.1);
    let cams: Vec<Camera<f32>> = (0..4)
        .map(|v| {
            let a = v as f32 * 1.3;
            Camera::look_at([3.0 * a.sin(), -0.5, -3.0 * a.cos()], [0.0; 3], [0.0, -1.0, 0.0], 40.0, 48, 48).unwrap()
        })
        .collect();
    let rcfg = RenderConfig::default();
    let gts = render_all(&target, &cams, &rcfg).map_err(|e| e.to_string())?;
    let norm = |i: usize| prev.points[i].mu.iter().map(|v| v * v).sum::<f32>();
    let center = (0..prev.len()).min_by(|&a, &b| norm(a).total_cmp(&norm(b))).unwrap();
    let mcfg = MotionConfig { iters: 150, ..MotionConfig::default() };
    let fit = optimize_motion_frame(&prev, &KeypointSet { indices: vec![center] }, &cams, &gts, &mcfg, &rcfg).map_err(|e| e.to_string())?;

    // through the wire format, as a receiver would apply it
    let header = StreamHeader::new(50, 10, 1, mcfg.tau_adap, 0.5, 2).map_err(|e| e.to_string())?;
    let body = encode_payload(&FramePayload::Motion(fit.field), &header).map_err(|e| e.to_string())?;
    let FramePayload::Motion(field) = decode_payload(PayloadTag::Motion as u8, &body, &header).map_err(|e| e.to_string())? else {
        return Err("decoded a non-MOTION payload".into());
    };
    let moved = apply_motion(&prev, &field).map_err(|e| e.to_string())?;
    let mut mean = [0.0f32; 3];
    for (a, b) in moved.points.iter().zip(&prev.points) {
        for k in 0..3 {
            mean[k] += (a.mu[k] - b.mu[k]) / prev.len() as f32;
        }
    }
    let err = (mean[0] - 0.1).abs().max(mean[1].abs()).max(mean[2].abs());
    let views_psnr = |s: &SceneState<f32>| -> Result<f64, String> {
        let imgs = render_all(s, &cams, &rcfg).map_err(|e| e.to_string())?;
        let mut flat_a = Vec::new();
        let mut flat_b = Vec::new();
        for (a, b) in imgs.iter().zip(&gts) {
            flat_a.extend_from_slice(&a.data);
            flat_b.extend_from_slice(&b.data);
        }
        let img = |d: Vec<f32>| gstream_core::Image { width: d.len() / 3, height: 1, data: d };
        psnr(&img(flat_a), &img(flat_b)).map_err(|e| e.to_string())
    };
    let (ours, still) = (views_psnr(&moved)?, views_psnr(&prev)?);
    ensure(
        err <= 0.01 && ours >= still + 3.0,
        format!("mean applied translation {mean:.4?} (error {err:.4}, need <= 0.01); PSNR {ours:.2} dB vs no-update {still:.2} dB (need +3)"),
    )
}

fn payload_arithmetic() -> Outcome {
    let header = |k: u16| StreamHeader::new(500, 10, k, 0.01, 0.5, 11).unwrap();
    let field = |k: usize| MotionField { keypoints: (0..k).map(|i| Keypoint::at_rest(i, 0.05f32)).collect(), tau_adap: 0.01 };
    let at_200 = encode_payload(&FramePayload::Motion(field(200)), &header(200)).map_err(|e| e.to_string())?.len();
    if at_200 != 12_002 {
        return Err(format!("MOTION body at k = 200 is {at_200} bytes"));
    }
    for k in [1usize, 2, 16, 100, 500] {
        let len = encode_payload(&FramePayload::Motion(field(k)), &header(k as u16)).map_err(|e| e.to_string())?.len();
        if len != 2 + 60 * k {
            return Err(format!("MOTION body at k = {k} is {len} bytes"));
        }
    }
    // KEYCORR grows as Gaussians are added to the mask one at a time
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut order: Vec<usize> = (0..500).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let all: Vec<[f32; 23]> = (0..500)
        .map(|_| {
            let mut r = zero_residual::<f32>();
            r.iter_mut().for_each(|v| *v += rng.random_range(-0.05..0.05));
            r
        })
        .collect();
    let mut mask = vec![false; 500];
    let mut sizes = Vec::with_capacity(500);
    for &i in &order {
        mask[i] = true;
        let residuals = (0..500).filter(|&j| mask[j]).map(|j| all[j]).collect();
        let len = encode_payload(&FramePayload::Keycorr(MaskedResiduals { hard_mask: mask.clone(), residuals }), &header(16)).map_err(|e| e.to_string())?.len();
        if let Some(&last) = sizes.last() {
            if len < last {
                return Err(format!("KEYCORR size {len} at popcount {} below {last}", sizes.len() + 1));
            }
        }
        sizes.push(len);
    }
    let ties = sizes.windows(2).filter(|w| w[0] == w[1]).count();
    let golden = std::fs::read(GOLDEN_PATH).map_err(|e| format!("{GOLDEN_PATH}: {e}"))?;
    ensure(
        write_container(&golden_container()) == golden,
        format!("MOTION = 2 + 60k (12,002 at k = 200); KEYCORR non-decreasing over popcount 1..500 ({} to {} bytes, {ties} equal steps from byte padding); golden file {} bytes", sizes[0], sizes[499], golden.len()),
    )
}

fn codec() -> Outcome {
    let inputs = common::codec_checks::huffman_roundtrips(1000, 3)?;
    let worst = common::codec_checks::worst_quantization_error(400, 5)?;
    let report = common::fuzz::run(&write_container(&golden_container()), 100_000, 17);
    ensure(
        report.panics == 0 && worst <= 0.5 + 1e-9,
        format!("{inputs} Huffman roundtrips lossless; worst quantization error {worst:.4} steps; fuzz {report:?}"),
    )
}

fn ste_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1_000_000 {
        let m: f64 = rng.random_range(-30.0..30.0);
        let up: f64 = rng.random_range(-10.0..10.0);
        if hard_mask_backward(m, up).to_bits() != soft_mask_backward(m, up).to_bits() {
            return Err(format!("f64 mismatch at logit {m}, upstream {up}"));
        }
        let (m, up) = (m as f32, up as f32);
        if hard_mask_backward(m, up).to_bits() != soft_mask_backward(m, up).to_bits() {
            return Err(format!("f32 mismatch at logit {m}, upstream {up}"));
        }
    }
    Ok("10^6 random (logit, upstream) pairs bit-identical in f32 and f64".into())
}

/// Uniform cloud in `[-1, 1]^3` seen by the synthetic camera ring.
fn cloud(rng: &mut ChaCha8Rng, n: usize, radius: f32) -> SceneState<f32> {
    SceneState::new(
        (0..n)
            .map(|_| {
                let mu = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let rgb = [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)];
                GaussianPoint::isotropic(mu, radius, 0.7, rgb).unwrap()
            })
            .collect(),
    )
}

fn lambda_trend() -> Outcome {
    let lambdas = [0.0f32, 1e-4, 1e-3, 1e-2];
    let mut frac = [0.0f64; 4];
    let rcfg = RenderConfig::default();
    let cams = ring_cameras(8, 32).map_err(|e| e.to_string())?;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clean = cloud(&mut rng, 200, 0.07);
        let gts = render_all(&clean, &cams, &rcfg).map_err(|e| e.to_string())?;
        // small diagonal drift of varying size on every Gaussian
        let mut prev = clean.clone();
        for p in prev.points.iter_mut() {
            let m = rng.random_range(0.0f32..1.0).powi(3) * 0.05;
            p.mu[0] += m;
            p.mu[1] -= m;
        }
        for (j, &l) in lambdas.iter().enumerate() {
            let ccfg = CorrectorConfig { lambda_error: l, ..CorrectorConfig::default() };
            let fit = optimize_keyframe(&prev, &cams, &gts, &ccfg, &rcfg).map_err(|e| e.to_string())?;
            frac[j] += fit.residuals.popcount() as f64 / prev.len() as f64 / 5.0;
        }
    }
    let decreasing = frac.windows(2).all(|w| w[1] < w[0]);

    // 20 of 500 Gaussians displaced and recolored; the rest are exact
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let clean = cloud(&mut rng, 500, 0.05);
    let cams = ring_cameras(8, 64).map_err(|e| e.to_string())?;
    let gts = render_all(&clean, &cams, &rcfg).map_err(|e| e.to_string())?;
    let mut prev = clean.clone();
    let mut corrupted = Vec::new();
    while corrupted.len() < 20 {
        let i = rng.random_range(0..500);
        if !corrupted.contains(&i) {
            corrupted.push(i);
        }
    }
    let shift = 0.2 / sh::SH_C0 as f32;
    for &i in &corrupted {
        let p = &mut prev.points[i];
        p.mu[0] += 0.08;
        for c in 0..3 {
            p.sh[0][c] += if p.sh[0][c] < 0.0 { shift } else { -shift };
        }
    }
    let fit = optimize_keyframe(&prev, &cams, &gts, &CorrectorConfig::default(), &rcfg).map_err(|e| e.to_string())?;
    let on: Vec<usize> = (0..500).filter(|&i| fit.residuals.hard_mask[i]).collect();
    let hits = on.iter().filter(|i| corrupted.contains(i)).count();
    let precision = hits as f64 / on.len().max(1) as f64;
    ensure(
        decreasing && !on.is_empty() && precision >= 0.9,
        format!(
            "masked fraction over lambda {lambdas:?}: {:?} (strictly decreasing: {decreasing}); corrupted set: {hits}/{} mask-on indices ({:.0}%, need >= 90%)",
            frac.map(|f| (f * 1e4).round() / 1e4),
            on.len(),
            100.0 * precision
        ),
    )
}

fn gof_trend() -> Outcome {
    let spec = SynthSpec { n: 200, views: 5, size: 32, ..SynthSpec::named("scatter-20-of-200", 20, 0).map_err(|e| e.to_string())? };
    let s = synth_scene(&spec).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for gof in [2usize, 5, 10] {
        let cfg = EncodeConfig { k: 8, gof, ..EncodeConfig::default() };
        let e = encode_sequence(&s.dataset, &s.scenes[0], &cfg).map_err(|e| e.to_string())?;
        rows.push((gof, e.container.total_bytes(), mean_psnr(&e.stats[1..], 99.0)));
    }
    let bytes_ok = rows.windows(2).all(|w| w[0].1 > w[1].1);
    let psnr_ok = rows.windows(2).all(|w| w[1].2 <= w[0].2 + 0.1);
    let table: Vec<String> = rows.iter().map(|(g, b, p)| format!("s={g}: {b} B, {p:.2} dB")).collect();
    ensure(bytes_ok && psnr_ok, format!("{} (bytes decreasing: {bytes_ok}, PSNR non-increasing within 0.1 dB: {psnr_ok})", table.join("; ")))
}

/// The 11-frame rigid-motion session shared by the last two criteria.
struct Session11 {
    scene: SynthScene,
    cfg: EncodeConfig,
    encoded: Encoded,
}

fn session11() -> &'static Result<Session11, String> {
    static CELL: OnceLock<Result<Session11, String>> = OnceLock::new();
    CELL.get_or_init(|| {
        let scene = synth_scene(&SynthSpec::named("rigid-50-of-500", 11, 0).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let cfg = EncodeConfig { k: 6, gof: 10, ..EncodeConfig::default() };
        let encoded = encode_sequence(&scene.dataset, &scene.scenes[0], &cfg).map_err(|e| e.to_string())?;
        Ok(Session11 { scene, cfg, encoded })
    })
}

fn lockstep() -> Outcome {
    let s = session11().as_ref().map_err(Clone::clone)?;
    let c = read_container(&write_container(&s.encoded.container)).map_err(|e| e.to_string())?;
    let tags: Vec<PayloadTag> = c.records.iter().map(|r| r.tag).collect();
    let mut want = vec![PayloadTag::Init];
    want.extend([PayloadTag::Motion; 9]);
    want.push(PayloadTag::Keycorr);
    if tags != want {
        return Err(format!("frame tags {tags:?}"));
    }
    let bits = |s: &SceneState<f32>| s.points.iter().flat_map(|p| p.to_params()).map(f32::to_bits).collect::<Vec<u32>>();
    let mut rx = Session::new(c.header, Role::Receiver);
    for (t, r) in c.records.iter().enumerate() {
        let got = rx.apply_bytes(t as u32, r.tag as u8, &r.body).map_err(|e| format!("frame {t}: {e}"))?;
        if bits(got) != bits(&s.encoded.decoded[t]) {
            return Err(format!("frame {t}: receiver scene differs from the encoder's"));
        }
    }
    Ok("INIT + 9 MOTION + 1 KEYCORR; receiver bit-identical to the encoder at all 11 frames".into())
}

fn rate_quality() -> Outcome {
    let s = session11().as_ref().map_err(Clone::clone)?;
    let base = full_refit_baseline(&s.scene.dataset, &s.scene.scenes[0], &s.cfg, s.cfg.iters_nonkey).map_err(|e| e.to_string())?;
    let post_init = |st: &[FrameStats]| st[1..].iter().map(|x| x.bytes).sum::<usize>();
    let (ours, theirs) = (post_init(&s.encoded.stats), post_init(&base.stats));
    let (q_ours, q_base) = (mean_psnr(&s.encoded.stats[1..], 99.0), mean_psnr(&base.stats[1..], 99.0));
    let ratio = ours as f64 / theirs as f64;
    ensure(
        q_ours >= q_base - 1.0 && ratio < 0.05,
        format!("frames 1-10: {ours} B vs baseline {theirs} B ({:.2}%, need < 5%); PSNR {q_ours:.2} dB vs {q_base:.2} dB (need within 1 dB)", 100.0 * ratio),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("gradient correctness", gradient_correctness),
        ("compositing oracle", compositing_oracle),
        ("keypoint localization", keypoint_localization),
        ("motion recovery", motion_recovery),
        ("payload arithmetic", payload_arithmetic),
        ("codec", codec),
        ("STE contract", ste_contract),
        ("lambda_error trend", lambda_trend),
        ("GoF trend", gof_trend),
        ("end-to-end lockstep", lockstep),
        ("end-to-end rate/quality", rate_quality),
    ];
    let only = std::env::var("ACCEPTANCE_ONLY").ok();
    let start = Instant::now();
    let mut failed = 0;
    for (name, check) in criteria {
        if only.as_deref().is_some_and(|o| !name.contains(o)) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("[PRIMARY] PASS {name} ({secs:.1} s): {d}"),
            Err(d) => {
                failed += 1;
                println!("[PRIMARY] FAIL {name} ({secs:.1} s): {d}");
            }
        }
    }
    println!("acceptance: {failed} failed, total {:.1} s", start.elapsed().as_secs_f64());
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
