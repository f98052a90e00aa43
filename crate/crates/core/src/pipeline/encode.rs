//! First-frame fitting, the GoF encoder loop and the full-refit baseline.

use crate::codec::{encode_payload, decode_payload, Container, FramePayload, PayloadTag, Record};
use crate::corrector::optimize_keyframe;
use crate::error::{Error, Result};
use crate::gaussian::{quat, SceneState, PARAMS_PER_GAUSSIAN};
use crate::keypoint::{dynamic_scores, select_keypoints, viewspace_gradients};
use crate::motion::optimize_motion_frame;
use crate::optim::Adam;
use crate::render::{multiview_loss, render_view, RenderConfig};
use crate::stream::{Role, Session};

use super::dataset::MultiViewDataset;
use super::{psnr, EncodeConfig, FrameStats};

#[derive(Clone, Debug)]
pub struct FirstFrameFit {
    pub scene: SceneState<f32>,
    pub initial_loss: f32,
    pub final_loss: f32,
}

/// Optimizes every attribute of `init` against timestep `t` for `iters`
/// full-batch Adam steps. N never changes.
fn refit(init: &SceneState<f32>, dataset: &MultiViewDataset, t: usize, iters: usize, cfg: &EncodeConfig) -> Result<FirstFrameFit> {
    if init.is_empty() {
        return Err(Error::InvalidArgument("empty initial point set".into()));
    }
    let cams = dataset.train_cameras();
    let gts = dataset.train_images(t);
    let rcfg = cfg.render();
    let r = &cfg.init_rates;
    let mut opt = Adam::grouped(&[(3, r.position), (4, r.rotation), (3, r.scale), (1, r.opacity), (3, r.sh_dc), (9, r.sh_rest)], init.len());
    let mut params: Vec<f32> = init.points.iter().flat_map(|p| p.to_params()).collect();
    let mut scene = init.clone();
    let mut initial_loss = f32::NAN;
    let mut final_loss = f32::NAN;
    for step in 0..=iters {
        for (p, chunk) in scene.points.iter_mut().zip(params.chunks_exact(PARAMS_PER_GAUSSIAN)) {
            *p = crate::gaussian::GaussianPoint::from_params(chunk);
        }
        let (loss, grads) = multiview_loss(&scene, &cams, &gts, &rcfg)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss: f64::from(loss) });
        }
        if step == 0 {
            initial_loss = loss;
        }
        final_loss = loss;
        if step == iters {
            break;
        }
        let flat: Vec<f32> = grads.params.iter().flatten().copied().collect();
        opt.step(&mut params, &flat)?;
        if step % 100 == 0 {
            log::debug!("fit frame {t} step {step}: loss {loss:.5}");
        }
    }
    for p in scene.points.iter_mut() {
        p.rotation = quat::normalize_or_identity(&p.rotation);
    }
    Ok(FirstFrameFit { scene, initial_loss, final_loss })
}

/// Fits the frame-0 scene from an initial point set (synthetic ground truth
/// plus noise, or a supplied point file) over the training views.
pub fn fit_first_frame(dataset: &MultiViewDataset, init: &SceneState<f32>, cfg: &EncodeConfig) -> Result<FirstFrameFit> {
    let mut fit = refit(init, dataset, 0, cfg.iters_init, cfg)?;
    fit.scene.timestep = 0;
    Ok(fit)
}

/// Renders the held-out view of `scene` and scores it against timestep `t`.
pub fn test_view_psnr(scene: &SceneState<f32>, dataset: &MultiViewDataset, t: usize, rcfg: &RenderConfig<f32>) -> Result<f64> {
    let out = render_view(scene, dataset.test_camera(), rcfg)?;
    psnr(&out.image, dataset.test_image(t))
}

#[derive(Clone, Debug)]
pub struct Encoded {
    pub container: Container,
    /// Decoder-side scene after each frame.
    pub decoded: Vec<SceneState<f32>>,
    pub stats: Vec<FrameStats>,
}

/// INIT at frame 0, then KEYCORR on every `gof`-th frame and MOTION on the
/// rest. Each frame is fitted against the scene the receiver will hold,
/// obtained by decoding the previous payloads.
pub fn encode_sequence(dataset: &MultiViewDataset, first: &SceneState<f32>, cfg: &EncodeConfig) -> Result<Encoded> {
    let frames = dataset.frame_count();
    let header = cfg.header(first.len(), frames)?;
    let rcfg = cfg.render();
    let cams = dataset.train_cameras();
    let mut session = Session::new(header, Role::Sender);
    let mut records = Vec::with_capacity(frames);
    let mut decoded = Vec::with_capacity(frames);
    let mut stats: Vec<FrameStats> = Vec::with_capacity(frames);

    for t in 0..frames {
        let payload = if t == 0 {
            FramePayload::Init(first.clone())
        } else {
            let prev = session.scene().expect("INIT applied").clone();
            let gts = dataset.train_images(t);
            if header.is_key_frame(t as u32) {
                let fit = optimize_keyframe(&prev, &cams, &gts, &cfg.corrector(), &rcfg)?;
                log::info!("frame {t}: key frame, {} residuals, loss {:.5} -> {:.5}", fit.residuals.popcount(), fit.initial_loss, fit.final_loss);
                FramePayload::Keycorr(fit.residuals)
            } else {
                let (g_prev, g_t) = viewspace_gradients(&prev, &cams, &dataset.train_images(t - 1), &gts, &rcfg)?;
                let kps = select_keypoints(&dynamic_scores(&g_t, &g_prev)?, cfg.k)?;
                let fit = optimize_motion_frame(&prev, &kps, &cams, &gts, &cfg.motion(), &rcfg)?;
                log::info!("frame {t}: motion, loss {:.5} -> {:.5}", fit.initial_loss, fit.final_loss);
                FramePayload::Motion(fit.field)
            }
        };
        let body = session.encode_and_apply(t as u32, &payload)?;
        let scene = session.scene().expect("frame applied").clone();
        stats.push(FrameStats::next(&stats, t as u32, payload.tag(), body.len(), test_view_psnr(&scene, dataset, t, &rcfg)?));
        records.push(Record { tag: payload.tag(), body });
        decoded.push(scene);
    }
    Ok(Encoded { container: Container { header, records }, decoded, stats })
}

/// Replays a container through a receiver session.
pub fn decode_sequence(c: &Container) -> Result<Vec<SceneState<f32>>> {
    let mut session = Session::new(c.header, Role::Receiver);
    let mut out = Vec::with_capacity(c.records.len());
    for (t, r) in c.records.iter().enumerate() {
        out.push(session.apply_bytes(t as u32, r.tag as u8, &r.body)?.clone());
    }
    Ok(out)
}

/// Per-frame stats of a decoded stream on the held-out view.
pub fn stream_stats(c: &Container, dataset: &MultiViewDataset, rcfg: &RenderConfig<f32>) -> Result<Vec<FrameStats>> {
    if c.records.len() > dataset.frame_count() {
        return Err(Error::Dataset(format!("stream has {} frames, dataset {}", c.records.len(), dataset.frame_count())));
    }
    let scenes = decode_sequence(c)?;
    let mut stats: Vec<FrameStats> = Vec::with_capacity(scenes.len());
    for (t, (scene, r)) in scenes.iter().zip(&c.records).enumerate() {
        stats.push(FrameStats::next(&stats, t as u32, r.tag, r.body.len(), test_view_psnr(scene, dataset, t, rcfg)?));
    }
    Ok(stats)
}

#[derive(Clone, Debug)]
pub struct Baseline {
    pub decoded: Vec<SceneState<f32>>,
    pub stats: Vec<FrameStats>,
}

/// Full-update reference: every frame re-optimizes all attributes, warm
/// started from the previous decoded frame, for `iters` steps, and is sent
/// as a complete INIT payload.
pub fn full_refit_baseline(dataset: &MultiViewDataset, first: &SceneState<f32>, cfg: &EncodeConfig, iters: usize) -> Result<Baseline> {
    let header = cfg.header(first.len(), dataset.frame_count())?;
    let rcfg = cfg.render();
    let mut decoded: Vec<SceneState<f32>> = Vec::with_capacity(dataset.frame_count());
    let mut stats: Vec<FrameStats> = Vec::with_capacity(dataset.frame_count());
    for t in 0..dataset.frame_count() {
        let scene = match decoded.last() {
            None => first.clone(),
            Some(prev) => refit(prev, dataset, t, iters, cfg)?.scene,
        };
        let body = encode_payload(&FramePayload::Init(scene), &header)?;
        let FramePayload::Init(mut scene) = decode_payload(PayloadTag::Init as u8, &body, &header)? else { unreachable!() };
        scene.timestep = t as u32;
        stats.push(FrameStats::next(&stats, t as u32, PayloadTag::Init, body.len(), test_view_psnr(&scene, dataset, t, &rcfg)?));
        decoded.push(scene);
    }
    Ok(Baseline { decoded, stats })
}
