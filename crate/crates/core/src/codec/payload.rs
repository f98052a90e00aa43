//! INIT / MOTION / KEYCORR / snapshot bodies.

use super::huffman::{entropy_decode, entropy_encode};
use super::quant::QuantSpec;
use super::{put_chunk, CodecError, PayloadTag, Reader, StreamHeader};
use crate::corrector::{MaskedResiduals, Residual};
use crate::gaussian::{quat, GaussianPoint, SceneState, PARAMS_PER_GAUSSIAN};
use crate::motion::{Keypoint, MotionField, KEYPOINT_PARAMS};

/// Bytes per MOTION keypoint record: u32 index + 14 f32.
pub const KEYPOINT_RECORD: usize = 4 + 4 * KEYPOINT_PARAMS;

#[derive(Clone, Debug, PartialEq)]
pub enum FramePayload {
    Init(SceneState<f32>),
    Motion(MotionField<f32>),
    Keycorr(MaskedResiduals<f32>),
    Snapshot(SceneState<f32>),
}

impl FramePayload {
    pub fn tag(&self) -> PayloadTag {
        match self {
            FramePayload::Init(_) => PayloadTag::Init,
            FramePayload::Motion(_) => PayloadTag::Motion,
            FramePayload::Keycorr(_) => PayloadTag::Keycorr,
            FramePayload::Snapshot(_) => PayloadTag::Snapshot,
        }
    }
}

/// INIT bit depth per parameter slot: positions 16-bit, the rest 8-bit.
fn init_bits(slot: usize) -> u8 {
    if slot < 3 {
        16
    } else {
        8
    }
}

fn planes(rows: impl Iterator<Item = [f32; PARAMS_PER_GAUSSIAN]>) -> Vec<Vec<f32>> {
    let mut out = vec![Vec::new(); PARAMS_PER_GAUSSIAN];
    for row in rows {
        for (plane, v) in out.iter_mut().zip(row) {
            plane.push(v);
        }
    }
    out
}

/// Range, then one entropy-coded byte plane per 8 bits, most significant first.
fn put_plane(out: &mut Vec<u8>, values: &[f32], bits: u8) -> Result<(), CodecError> {
    let spec = QuantSpec::fit(bits, values)?;
    out.extend_from_slice(&spec.min.to_le_bytes());
    out.extend_from_slice(&spec.max.to_le_bytes());
    let codes: Vec<u16> = values.iter().map(|&v| spec.code(v)).collect();
    for shift in (0..bits / 8).rev() {
        let bytes: Vec<u8> = codes.iter().map(|&c| (c >> (8 * shift)) as u8).collect();
        put_chunk(out, &entropy_encode(&bytes));
    }
    Ok(())
}

fn get_plane(r: &mut Reader, count: usize, bits: u8) -> Result<Vec<f32>, CodecError> {
    let spec = QuantSpec { bits, min: r.f32()?, max: r.f32()? };
    spec.validate()?;
    let mut codes = vec![0u16; count];
    for _ in 0..bits / 8 {
        let bytes = entropy_decode(r.chunk()?, count)?;
        for (c, b) in codes.iter_mut().zip(bytes) {
            *c = *c << 8 | u16::from(b);
        }
    }
    if codes.iter().any(|&c| u32::from(c) > spec.levels()) {
        return Err(CodecError::InvalidPayload("code above the quantizer range".into()));
    }
    Ok(codes.iter().map(|&c| spec.value(c) as f32).collect())
}

fn check_count(what: &str, actual: usize, header: &StreamHeader) -> Result<(), CodecError> {
    if actual != header.n as usize {
        return Err(CodecError::InvalidPayload(format!("{what} has {actual} Gaussians, header says {}", header.n)));
    }
    Ok(())
}

fn scene_from_planes(planes: &[Vec<f32>], n: usize) -> SceneState<f32> {
    let points = (0..n)
        .map(|i| {
            let row: Vec<f32> = planes.iter().map(|p| p[i]).collect();
            let mut g = GaussianPoint::from_params(&row);
            g.rotation = quat::normalize_or_identity(&g.rotation);
            g
        })
        .collect();
    SceneState::new(points)
}

pub fn encode_payload(p: &FramePayload, header: &StreamHeader) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::new();
    match p {
        FramePayload::Init(scene) => {
            check_count("INIT", scene.len(), header)?;
            for (slot, plane) in planes(scene.points.iter().map(|g| g.to_params())).iter().enumerate() {
                put_plane(&mut out, plane, init_bits(slot))?;
            }
        }
        FramePayload::Motion(field) => {
            if field.keypoints.len() != header.k as usize {
                return Err(CodecError::InvalidPayload(format!("{} keypoints, header says {}", field.keypoints.len(), header.k)));
            }
            if field.tau_adap != header.tau_adap {
                return Err(CodecError::InvalidPayload("tau_adap differs from the header".into()));
            }
            field.validate(header.n as usize).map_err(|e| CodecError::InvalidPayload(e.to_string()))?;
            out.extend_from_slice(&(field.keypoints.len() as u16).to_le_bytes());
            for kp in &field.keypoints {
                out.extend_from_slice(&(kp.index as u32).to_le_bytes());
                for v in kp.to_payload() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        FramePayload::Keycorr(masked) => {
            check_count("KEYCORR mask", masked.hard_mask.len(), header)?;
            masked.validate().map_err(|e| CodecError::InvalidPayload(e.to_string()))?;
            let mut packed = vec![0u8; masked.hard_mask.len().div_ceil(8)];
            for (i, _) in masked.hard_mask.iter().enumerate().filter(|(_, &b)| b) {
                packed[i / 8] |= 1 << (i % 8);
            }
            put_chunk(&mut out, &entropy_encode(&packed));
            out.extend_from_slice(&(masked.residuals.len() as u32).to_le_bytes());
            if !masked.residuals.is_empty() {
                for plane in planes(masked.residuals.iter().copied()) {
                    put_plane(&mut out, &plane, 8)?;
                }
            }
        }
        FramePayload::Snapshot(scene) => {
            check_count("snapshot", scene.len(), header)?;
            out = write_snapshot(scene);
        }
    }
    Ok(out)
}

pub fn decode_payload(tag: u8, body: &[u8], header: &StreamHeader) -> Result<FramePayload, CodecError> {
    let n = header.n as usize;
    let mut r = Reader::new(body);
    let p = match PayloadTag::try_from(tag)? {
        PayloadTag::Init => {
            let planes = (0..PARAMS_PER_GAUSSIAN).map(|slot| get_plane(&mut r, n, init_bits(slot))).collect::<Result<Vec<_>, _>>()?;
            FramePayload::Init(scene_from_planes(&planes, n))
        }
        PayloadTag::Motion => {
            let k = r.u16()? as usize;
            let expected = 2 + k * KEYPOINT_RECORD;
            if k != header.k as usize || body.len() != expected {
                return Err(CodecError::LengthMismatch { expected: 2 + header.k as usize * KEYPOINT_RECORD, actual: body.len() });
            }
            let mut keypoints = Vec::with_capacity(k);
            for _ in 0..k {
                let index = r.u32()? as usize;
                let mut v = [0f32; KEYPOINT_PARAMS];
                for x in v.iter_mut() {
                    *x = r.f32()?;
                }
                keypoints.push(Keypoint::from_payload(index, &v));
            }
            let field = MotionField { keypoints, tau_adap: header.tau_adap };
            field.validate(n).map_err(|e| CodecError::InvalidPayload(e.to_string()))?;
            FramePayload::Motion(field)
        }
        PayloadTag::Keycorr => {
            let packed = entropy_decode(r.chunk()?, n.div_ceil(8))?;
            if !n.is_multiple_of(8) && packed[n / 8] >> (n % 8) != 0 {
                return Err(CodecError::InvalidPayload("mask bits set past the last Gaussian".into()));
            }
            let hard_mask: Vec<bool> = (0..n).map(|i| packed[i / 8] >> (i % 8) & 1 == 1).collect();
            let popcount = hard_mask.iter().filter(|&&b| b).count();
            let m = r.u32()? as usize;
            if m != popcount {
                return Err(CodecError::MaskPopcount { m, popcount });
            }
            let mut residuals: Vec<Residual<f32>> = vec![[0.0; PARAMS_PER_GAUSSIAN]; m];
            if m > 0 {
                for slot in 0..PARAMS_PER_GAUSSIAN {
                    for (res, v) in residuals.iter_mut().zip(get_plane(&mut r, m, 8)?) {
                        res[slot] = v;
                    }
                }
            }
            FramePayload::Keycorr(MaskedResiduals { hard_mask, residuals })
        }
        PayloadTag::Snapshot => {
            let scene = read_snapshot(body)?;
            check_count("snapshot", scene.len(), header)?;
            return Ok(FramePayload::Snapshot(scene));
        }
    };
    r.finish()?;
    Ok(p)
}

/// Lossless layout: u32 N, then 23 planes of N little-endian f32 in
/// parameter order.
pub fn write_snapshot(scene: &SceneState<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * PARAMS_PER_GAUSSIAN * scene.len());
    out.extend_from_slice(&(scene.len() as u32).to_le_bytes());
    for plane in planes(scene.points.iter().map(|g| g.to_params())) {
        for v in plane {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_snapshot(body: &[u8]) -> Result<SceneState<f32>, CodecError> {
    let mut r = Reader::new(body);
    let n = r.u32()? as usize;
    let expected = n.checked_mul(4 * PARAMS_PER_GAUSSIAN).and_then(|b| b.checked_add(4));
    if expected != Some(body.len()) {
        return Err(CodecError::LengthMismatch { expected: expected.unwrap_or(usize::MAX), actual: body.len() });
    }
    let mut planes: Vec<Vec<f32>> = (0..PARAMS_PER_GAUSSIAN).map(|_| Vec::with_capacity(n)).collect();
    for plane in planes.iter_mut() {
        for _ in 0..n {
            plane.push(r.f32()?);
        }
    }
    let points: Vec<GaussianPoint<f32>> = (0..n)
        .map(|i| GaussianPoint::from_params(&planes.iter().map(|p| p[i]).collect::<Vec<_>>()))
        .collect();
    let scene = SceneState::new(points);
    if scene.first_non_finite().is_some() {
        return Err(CodecError::NonFinite("snapshot"));
    }
    Ok(scene)
}
