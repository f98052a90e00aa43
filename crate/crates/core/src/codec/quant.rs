//! Uniform min-max quantization of float planes.

use super::CodecError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantSpec {
    pub bits: u8,
    pub min: f32,
    pub max: f32,
}

impl QuantSpec {
    /// Range spanning `values`; an empty plane gets `[0, 0]`.
    pub fn fit(bits: u8, values: &[f32]) -> Result<Self, CodecError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CodecError::NonFinite("quantized plane"));
        }
        let min = values.iter().copied().fold(f32::INFINITY, f32::min);
        let max = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let spec = if values.is_empty() { QuantSpec { bits, min: 0.0, max: 0.0 } } else { QuantSpec { bits, min, max } };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        if self.bits != 8 && self.bits != 16 {
            return Err(CodecError::InvalidPayload(format!("{}-bit quantization", self.bits)));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.max >= self.min) {
            return Err(CodecError::InvalidRange { min: self.min, max: self.max });
        }
        Ok(())
    }

    pub fn levels(&self) -> u32 {
        (1u32 << self.bits) - 1
    }

    /// `(max − min) / (2^bits − 1)`; zero for a degenerate range.
    pub fn step(&self) -> f64 {
        (f64::from(self.max) - f64::from(self.min)) / f64::from(self.levels())
    }

    pub fn code(&self, v: f32) -> u16 {
        let span = f64::from(self.max) - f64::from(self.min);
        if span == 0.0 {
            return 0;
        }
        // f64::round is half-away-from-zero
        let x = (f64::from(v) - f64::from(self.min)) * f64::from(self.levels()) / span;
        x.round().clamp(0.0, f64::from(self.levels())) as u16
    }

    pub fn value(&self, code: u16) -> f64 {
        f64::from(self.min) + f64::from(code) * self.step()
    }
}

pub fn quantize(values: &[f32], spec: &QuantSpec) -> Result<Vec<u16>, CodecError> {
    spec.validate()?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CodecError::NonFinite("quantized plane"));
    }
    Ok(values.iter().map(|&v| spec.code(v)).collect())
}

pub fn dequantize(codes: &[u16], spec: &QuantSpec) -> Vec<f32> {
    codes.iter().map(|&c| spec.value(c) as f32).collect()
}
