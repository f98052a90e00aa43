//! Deterministic synthetic sequences rendered by this crate's own renderer.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::MultiViewDataset;
use crate::error::{Error, Result};
use crate::gaussian::{quat, Camera, GaussianPoint, SceneState};
use crate::render::{render_all, RenderConfig};

/// Opacity logit of a Gaussian that has not appeared yet; its alpha falls
/// below the renderer's skip threshold everywhere.
const HIDDEN_LOGIT: f32 = -20.0;

#[derive(Clone, Debug, PartialEq)]
pub enum MotionProgram {
    Static,
    /// A spatial cluster of `moving` Gaussians translating at `velocity` per frame.
    Rigid { moving: usize },
    /// A cluster spinning about the vertical axis through its centroid.
    Rotation { moving: usize },
    /// `objects` clusters of `per_object` Gaussians, each with its own velocity.
    MultiObject { objects: usize, per_object: usize },
    /// Non-rigid: every Gaussian of a cluster drifts with its own velocity,
    /// of the same speed as `velocity` in a random direction.
    Scatter { moving: usize },
    /// A cluster of `count` Gaussians that is invisible before `frame`.
    Appear { frame: usize, count: usize },
}

/// Program names: `static`, `rigid-M-of-N`, `rotation-M-of-N`,
/// `scatter-M-of-N`, `multi-object-OxP`, `appear-at-frame-F`. The `-of-N` forms also fix the
/// scene size.
impl FromStr for MotionProgram {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_program(s).map(|(p, _)| p)
    }
}

fn parse_program(s: &str) -> Result<(MotionProgram, Option<usize>)> {
    let bad = || Error::InvalidArgument(format!("unknown motion program {s:?}"));
    let num = |x: &str| x.parse::<usize>().map_err(|_| bad());
    let m_of_n = |rest: &str| -> Result<(usize, usize)> {
        let (m, n) = rest.split_once("-of-").ok_or_else(bad)?;
        Ok((num(m)?, num(n)?))
    };
    if s == "static" {
        Ok((MotionProgram::Static, None))
    } else if let Some(rest) = s.strip_prefix("rigid-") {
        let (m, n) = m_of_n(rest)?;
        Ok((MotionProgram::Rigid { moving: m }, Some(n)))
    } else if let Some(rest) = s.strip_prefix("rotation-") {
        let (m, n) = m_of_n(rest)?;
        Ok((MotionProgram::Rotation { moving: m }, Some(n)))
    } else if let Some(rest) = s.strip_prefix("scatter-") {
        let (m, n) = m_of_n(rest)?;
        Ok((MotionProgram::Scatter { moving: m }, Some(n)))
    } else if s == "multi-object" {
        Ok((MotionProgram::MultiObject { objects: 3, per_object: 30 }, None))
    } else if let Some(rest) = s.strip_prefix("multi-object-") {
        let (o, p) = rest.split_once('x').ok_or_else(bad)?;
        Ok((MotionProgram::MultiObject { objects: num(o)?, per_object: num(p)? }, None))
    } else if let Some(rest) = s.strip_prefix("appear-at-frame-") {
        Ok((MotionProgram::Appear { frame: num(rest)?, count: 30 }, None))
    } else {
        Err(bad())
    }
}

#[derive(Clone, Debug)]
pub struct SynthSpec {
    pub program: MotionProgram,
    pub n: usize,
    pub views: usize,
    /// Square image side in pixels.
    pub size: usize,
    pub frames: usize,
    /// Per-frame translation of the rigid cluster.
    pub velocity: [f32; 3],
    /// Per-frame spin of the rotation program, in degrees.
    pub spin_deg: f32,
    /// Radius of each Gaussian.
    pub radius: f32,
    /// Radius of the ball holding a moving object.
    pub object_radius: f32,
    /// Empty margin between an object and the static Gaussians.
    pub object_gap: f32,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            program: MotionProgram::Rigid { moving: 50 },
            n: 500,
            views: 8,
            size: 64,
            frames: 11,
            velocity: [0.02, 0.0, 0.0],
            spin_deg: 3.0,
            radius: 0.06,
            object_radius: 0.3,
            object_gap: 0.15,
            seed: 0,
        }
    }
}

impl SynthSpec {
    /// Spec for a named program; `rigid-50-of-500` sets `n = 500`.
    pub fn named(name: &str, frames: usize, seed: u64) -> Result<Self> {
        let (program, n) = parse_program(name)?;
        let d = SynthSpec::default();
        Ok(SynthSpec { program, n: n.unwrap_or(d.n), frames, seed, ..d })
    }
}

#[derive(Clone, Debug)]
pub struct SynthScene {
    /// Ground-truth Gaussians per frame.
    pub scenes: Vec<SceneState<f32>>,
    /// Gaussians touched by the motion program.
    pub moving: Vec<bool>,
    pub dataset: MultiViewDataset,
}

impl SynthScene {
    pub fn moving_indices(&self) -> Vec<usize> {
        self.moving.iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| i).collect()
    }
}

/// `views` cameras on a ring of radius 4 around the origin, slightly above
/// it; view 0 is the held-out test view.
pub fn ring_cameras(views: usize, size: usize) -> Result<Vec<Camera<f32>>> {
    (0..views)
        .map(|v| {
            let a = v as f32 * std::f32::consts::TAU / views as f32;
            let focal = 50.0 * size as f32 / 64.0;
            Camera::look_at([4.0 * a.sin(), -0.8, -4.0 * a.cos()], [0.0; 3], [0.0, -1.0, 0.0], focal, size, size)
        })
        .collect()
}

fn centroid(scene: &SceneState<f32>, idx: &[usize]) -> [f32; 3] {
    let mut c = [0.0; 3];
    for &i in idx {
        for k in 0..3 {
            c[k] += scene.points[i].mu[k] / idx.len() as f32;
        }
    }
    c
}

fn random_point(rng: &mut ChaCha8Rng, mu: [f32; 3], radius: f32) -> Result<GaussianPoint<f32>> {
    let rgb = [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)];
    GaussianPoint::isotropic(mu, radius, 0.7, rgb)
}

fn in_ball(rng: &mut ChaCha8Rng, centre: [f32; 3], r: f32) -> [f32; 3] {
    loop {
        let p: [f32; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        if p.iter().map(|v| v * v).sum::<f32>() <= 1.0 {
            return [centre[0] + r * p[0], centre[1] + r * p[1], centre[2] + r * p[2]];
        }
    }
}

fn dist(a: [f32; 3], b: [f32; 3]) -> f32 {
    a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f32>().sqrt()
}

/// Distance from `p` to the segment `a`-`b`.
fn dist_to_segment(p: [f32; 3], a: [f32; 3], b: [f32; 3]) -> f32 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let len2 = ab.iter().map(|v| v * v).sum::<f32>();
    let t = if len2 > 0.0 { (ab.iter().zip(&ap).map(|(x, y)| x * y).sum::<f32>() / len2).clamp(0.0, 1.0) } else { 0.0 };
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]])
}

/// Moving subsets are compact objects: each is a ball of `object_radius`
/// whose surroundings, out to `object_gap`, hold no static Gaussian, and
/// which every camera sees unobstructed. Static Gaussians fill the rest of
/// the cube [-1, 1]³. Indices are shuffled so labelled Gaussians are spread
/// over the index range.
pub fn synth_scene(spec: &SynthSpec) -> Result<SynthScene> {
    if spec.n == 0 || spec.frames == 0 || spec.views < 2 || spec.size == 0 {
        return Err(Error::InvalidArgument("synthetic scene needs points, frames, two views and a size".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sizes: Vec<usize> = match spec.program {
        MotionProgram::Static => vec![],
        MotionProgram::Rigid { moving } | MotionProgram::Rotation { moving } | MotionProgram::Scatter { moving } => vec![moving],
        MotionProgram::MultiObject { objects, per_object } => vec![per_object; objects],
        MotionProgram::Appear { count, .. } => vec![count],
    };
    let need: usize = sizes.iter().sum();
    if need > spec.n {
        return Err(Error::InvalidArgument(format!("program needs {need} of {} Gaussians", spec.n)));
    }
    let reach = spec.object_radius + spec.object_gap;
    let mut centres: Vec<[f32; 3]> = Vec::new();
    for _ in &sizes {
        let mut tries = 0;
        let c = loop {
            let c: [f32; 3] = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
            tries += 1;
            if centres.iter().all(|o| dist(*o, c) > 2.0 * reach) || tries > 1000 {
                break c;
            }
        };
        centres.push(c);
    }
    // (group, point) pairs; group usize::MAX is static
    let mut pts: Vec<(usize, GaussianPoint<f32>)> = Vec::with_capacity(spec.n);
    for (g, (&m, &c)) in sizes.iter().zip(&centres).enumerate() {
        for _ in 0..m {
            let mu = in_ball(&mut rng, c, spec.object_radius);
            pts.push((g, random_point(&mut rng, mu, spec.radius)?));
        }
    }
    let cameras = ring_cameras(spec.views, spec.size)?;
    let eyes: Vec<[f32; 3]> = cameras.iter().map(Camera::center).collect();
    let mut tries = 0usize;
    while pts.len() < spec.n {
        tries += 1;
        if tries > 1000 * spec.n {
            return Err(Error::InvalidArgument("no room for the static Gaussians around the objects".into()));
        }
        let mu: [f32; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        if centres.iter().all(|c| eyes.iter().all(|e| dist_to_segment(mu, *e, *c) > reach)) {
            pts.push((usize::MAX, random_point(&mut rng, mu, spec.radius)?));
        }
    }
    pts.shuffle(&mut rng);
    let moving: Vec<bool> = pts.iter().map(|(g, _)| *g != usize::MAX).collect();
    let mut groups: Vec<(Vec<usize>, [f32; 3])> = sizes.iter().map(|_| (Vec::new(), spec.velocity)).collect();
    for (i, (g, _)) in pts.iter().enumerate() {
        if *g != usize::MAX {
            groups[*g].0.push(i);
        }
    }
    let speed = spec.velocity.iter().map(|v| v * v).sum::<f32>().sqrt();
    if let MotionProgram::MultiObject { objects, .. } = spec.program {
        for (o, (_, v)) in groups.iter_mut().enumerate() {
            let a = o as f32 * std::f32::consts::TAU / objects as f32;
            *v = [speed * a.cos(), 0.0, speed * a.sin()];
        }
    }
    let base = SceneState::new(pts.into_iter().map(|(_, p)| p).collect());
    let drift: Vec<[f32; 3]> = (0..spec.n)
        .map(|_| {
            let d = in_ball(&mut rng, [0.0; 3], 1.0);
            let len = dist(d, [0.0; 3]).max(1e-6);
            [speed * d[0] / len, speed * d[1] / len, speed * d[2] / len]
        })
        .collect();

    let mut scenes = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let mut s = base.clone();
        s.timestep = t as u32;
        let tf = t as f32;
        match spec.program {
            MotionProgram::Static => {}
            MotionProgram::Rigid { .. } | MotionProgram::MultiObject { .. } => {
                for (idx, v) in &groups {
                    for &i in idx {
                        for k in 0..3 {
                            s.points[i].mu[k] += v[k] * tf;
                        }
                    }
                }
            }
            MotionProgram::Scatter { .. } => {
                for &i in &groups[0].0 {
                    for k in 0..3 {
                        s.points[i].mu[k] += drift[i][k] * tf;
                    }
                }
            }
            MotionProgram::Rotation { .. } => {
                let (idx, _) = &groups[0];
                let c = centroid(&base, idx);
                let angle = (spec.spin_deg * tf).to_radians();
                let q = quat::from_axis_angle([0.0, 1.0, 0.0], angle);
                let (sin, cos) = angle.sin_cos();
                for &i in idx {
                    let p = &mut s.points[i];
                    let (dx, dz) = (p.mu[0] - c[0], p.mu[2] - c[2]);
                    p.mu[0] = c[0] + cos * dx + sin * dz;
                    p.mu[2] = c[2] - sin * dx + cos * dz;
                    p.rotation = quat::compose(&q, &p.rotation)?;
                }
            }
            MotionProgram::Appear { frame, .. } => {
                if t < frame {
                    for &i in &groups[0].0 {
                        s.points[i].opacity_logit = HIDDEN_LOGIT;
                    }
                }
            }
        }
        scenes.push(s);
    }

    let cfg = RenderConfig::default();
    let frames = scenes.iter().map(|s| render_all(s, &cameras, &cfg)).collect::<Result<Vec<_>>>()?;
    let dataset = MultiViewDataset::new(cameras, frames, 0)?;
    Ok(SynthScene { scenes, moving, dataset })
}

/// Copy of `scene` with Gaussian positions jittered by N(0, sigma²).
pub fn perturb_positions(scene: &SceneState<f32>, sigma: f32, seed: u64) -> SceneState<f32> {
    use rand_distr::{Distribution, Normal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f32, sigma.max(0.0)).expect("finite sigma");
    let mut out = scene.clone();
    for p in out.points.iter_mut() {
        for v in p.mu.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    out
}
