//! Orchestration: configs, datasets, synthetic scenes, the encoder loop and
//! metrics.

pub mod config;
pub mod dataset;
pub mod encode;
pub mod synth;

use std::fmt::Write as _;

pub use config::{EncodeConfig, InitRates};
pub use dataset::{MultiViewDataset, Rig, RigCamera};
pub use encode::{
    decode_sequence, encode_sequence, fit_first_frame, full_refit_baseline, stream_stats, test_view_psnr, Baseline, Encoded, FirstFrameFit,
};
pub use synth::{perturb_positions, ring_cameras, synth_scene, MotionProgram, SynthScene, SynthSpec};

use crate::codec::PayloadTag;
use crate::error::{Error, Result};
use crate::render::Image;

/// `10·log10(1/MSE)` over all channels; identical images give `+∞`.
pub fn psnr(rendered: &Image<f32>, gt: &Image<f32>) -> Result<f64> {
    if (rendered.width, rendered.height) != (gt.width, gt.height) || rendered.data.len() != gt.data.len() || gt.data.is_empty() {
        return Err(Error::ShapeMismatch(format!("{}x{} vs {}x{}", rendered.width, rendered.height, gt.width, gt.height)));
    }
    let sum: f64 = rendered.data.iter().zip(&gt.data).map(|(a, b)| (f64::from(*a) - f64::from(*b)).powi(2)).sum();
    let mse = sum / gt.data.len() as f64;
    if !mse.is_finite() {
        return Err(Error::NonFinite("image"));
    }
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

/// One row of the `stats` CSV. `bytes` is the payload body size.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameStats {
    pub frame: u32,
    pub tag: PayloadTag,
    pub bytes: usize,
    pub cumulative_bytes: usize,
    pub psnr_db: f64,
}

impl FrameStats {
    pub(crate) fn next(prev: &[FrameStats], frame: u32, tag: PayloadTag, bytes: usize, psnr_db: f64) -> Self {
        let cumulative_bytes = prev.last().map_or(0, |s| s.cumulative_bytes) + bytes;
        FrameStats { frame, tag, bytes, cumulative_bytes, psnr_db }
    }
}

pub fn tag_name(tag: PayloadTag) -> &'static str {
    match tag {
        PayloadTag::Init => "init",
        PayloadTag::Motion => "motion",
        PayloadTag::Keycorr => "keycorr",
        PayloadTag::Snapshot => "snapshot",
    }
}

pub const STATS_HEADER: &str = "frame,tag,bytes,cumulative_bytes,psnr_db";

/// CSV with [`STATS_HEADER`]; PSNR has four decimals, `inf` when exact.
pub fn stats_csv(stats: &[FrameStats]) -> String {
    let mut out = format!("{STATS_HEADER}\n");
    for s in stats {
        let p = if s.psnr_db.is_infinite() { "inf".to_string() } else { format!("{:.4}", s.psnr_db) };
        writeln!(out, "{},{},{},{},{}", s.frame, tag_name(s.tag), s.bytes, s.cumulative_bytes, p).unwrap();
    }
    out
}

/// Mean PSNR over frames, with exact frames counted at `cap` dB.
pub fn mean_psnr(stats: &[FrameStats], cap: f64) -> f64 {
    stats.iter().map(|s| s.psnr_db.min(cap)).sum::<f64>() / stats.len().max(1) as f64
}
