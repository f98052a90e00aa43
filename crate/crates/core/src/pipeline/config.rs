//! Encoder settings, read from and written to TOML.

use serde::{Deserialize, Serialize};

use crate::codec::StreamHeader;
use crate::corrector::{self, CorrectorConfig};
use crate::error::{Error, Result};
use crate::motion::{self, MotionConfig};
use crate::render::{loss::LAMBDA_DSSIM, RenderConfig};

/// Learning rates of the first-frame fit, per attribute group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitRates {
    pub position: f32,
    pub rotation: f32,
    pub scale: f32,
    pub opacity: f32,
    pub sh_dc: f32,
    pub sh_rest: f32,
}

impl Default for InitRates {
    fn default() -> Self {
        InitRates { position: 0.002, rotation: 0.001, scale: 0.005, opacity: 0.05, sh_dc: 0.0025, sh_rest: 0.000125 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeConfig {
    /// Keypoints per non-key frame.
    pub k: usize,
    /// Key-frame interval `s`.
    pub gof: usize,
    pub tau_adap: f32,
    pub phi_thres: f32,
    pub lambda_dssim: f32,
    pub lambda_error: f32,
    pub iters_nonkey: usize,
    pub iters_key: usize,
    pub iters_init: usize,
    /// Keypoint motion and key-frame residuals.
    pub lr_attributes: f32,
    pub lr_influence: f32,
    pub lr_mask: f32,
    pub probe_steps: usize,
    pub init_rates: InitRates,
    pub seed: u64,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        EncodeConfig {
            k: crate::keypoint::DEFAULT_K,
            gof: 10,
            tau_adap: motion::DEFAULT_TAU_ADAP as f32,
            phi_thres: corrector::DEFAULT_PHI_THRES as f32,
            lambda_dssim: LAMBDA_DSSIM as f32,
            lambda_error: corrector::DEFAULT_LAMBDA_ERROR as f32,
            iters_nonkey: motion::DEFAULT_ITERS,
            iters_key: corrector::DEFAULT_ITERS,
            iters_init: 500,
            lr_attributes: motion::LR_MOTION as f32,
            lr_influence: motion::LR_FIELD as f32,
            lr_mask: corrector::LR_MASK as f32,
            probe_steps: corrector::DEFAULT_PROBE_STEPS,
            init_rates: InitRates::default(),
            seed: 0,
        }
    }
}

impl EncodeConfig {
    /// The "large" preset: a key frame every second frame.
    pub fn large() -> Self {
        EncodeConfig { gof: 2, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("config: {what}")));
        if self.k == 0 {
            return bad("k must be positive");
        }
        if self.gof == 0 || self.gof > u16::MAX as usize || self.k > u16::MAX as usize {
            return bad("gof and k must fit in 1..=65535");
        }
        if !(self.phi_thres > 0.0 && self.phi_thres < 1.0) {
            return bad("phi_thres must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.lambda_dssim) {
            return bad("lambda_dssim must lie in [0, 1]");
        }
        let r = &self.init_rates;
        let positive = [self.tau_adap, self.lr_attributes, self.lr_influence, self.lr_mask, r.position, r.rotation, r.scale, r.opacity, r.sh_dc, r.sh_rest];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("thresholds and learning rates must be positive");
        }
        if !(self.lambda_error.is_finite() && self.lambda_error >= 0.0) {
            return bad("lambda_error must be non-negative");
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn render(&self) -> RenderConfig<f32> {
        RenderConfig { lambda_dssim: self.lambda_dssim, ..RenderConfig::default() }
    }

    pub fn motion(&self) -> MotionConfig<f32> {
        MotionConfig { iters: self.iters_nonkey, tau_adap: self.tau_adap, lr_motion: self.lr_attributes, lr_field: self.lr_influence }
    }

    pub fn corrector(&self) -> CorrectorConfig<f32> {
        CorrectorConfig {
            iters: self.iters_key,
            phi_thres: self.phi_thres,
            lambda_error: self.lambda_error,
            lr_mask: self.lr_mask,
            lr_residual: self.lr_attributes,
            probe_steps: self.probe_steps,
        }
    }

    pub fn header(&self, n: usize, frames: usize) -> Result<StreamHeader> {
        self.validate()?;
        if self.k > n {
            return Err(Error::InvalidArgument(format!("k = {} exceeds the {n} Gaussians of the scene", self.k)));
        }
        let frames = u32::try_from(frames).map_err(|_| Error::InvalidArgument("too many frames".into()))?;
        Ok(StreamHeader::new(n as u32, self.gof as u16, self.k as u16, self.tau_adap, self.phi_thres, frames)?)
    }
}
