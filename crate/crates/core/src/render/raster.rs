//! Front-to-back alpha compositing of projected splats and its adjoint.
//!
//! Splats are sorted globally by depth (ties by Gaussian index) and binned
//! into 16×16 pixel tiles purely as a culling structure: every tile keeps the
//! global order, so the result equals compositing the full sorted list at
//! each pixel while skipping contributions below `min_alpha`.

use rayon::prelude::*;

use super::{Image, RenderConfig, Splat2D};
use crate::scalar::Scalar;

pub const TILE: usize = 8;

/// Largest per-splat alpha; keeps transmittance strictly positive.
pub const ALPHA_MAX: f64 = 0.99;
/// Compositing stops once transmittance drops below this value.
pub const T_MIN: f64 = 1e-4;

/// Gradient of a loss w.r.t. one splat's screen-space quantities.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SplatGrad<T> {
    pub mean2d: [T; 2],
    /// Gradient w.r.t. the full (symmetric) conic matrix.
    pub conic: [[T; 2]; 2],
    pub color: [T; 3],
    pub alpha_base: T,
}

impl<T: Scalar> SplatGrad<T> {
    fn zero() -> Self {
        Self {
            mean2d: [T::zero(); 2],
            conic: [[T::zero(); 2]; 2],
            color: [T::zero(); 3],
            alpha_base: T::zero(),
        }
    }

    fn add(&mut self, o: &Self) {
        for k in 0..2 {
            self.mean2d[k] += o.mean2d[k];
            for l in 0..2 {
                self.conic[k][l] += o.conic[k][l];
            }
        }
        for k in 0..3 {
            self.color[k] += o.color[k];
        }
        self.alpha_base += o.alpha_base;
    }
}

struct Prepared<T> {
    mean: [T; 2],
    conic: [[T; 2]; 2],
    color: [T; 3],
    alpha_base: T,
    /// Exponents below this give `alpha < min_alpha`.
    power_floor: T,
}

/// Sorted splats plus per-tile lists of indices into the sorted order.
pub(crate) struct Binning<T> {
    order: Vec<usize>,
    prepared: Vec<Prepared<T>>,
    tiles: Vec<Vec<u32>>,
    tiles_x: usize,
    width: usize,
    height: usize,
}

/// Depth order with ascending index as tie-break.
pub fn depth_order<T: Scalar>(splats: &[Splat2D<T>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..splats.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (&splats[a], &splats[b]);
        sa.depth
            .partial_cmp(&sb.depth)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(sa.index.cmp(&sb.index))
    });
    order
}

pub(crate) fn bin<T: Scalar>(splats: &[Splat2D<T>], width: usize, height: usize, cfg: &RenderConfig<T>) -> Binning<T> {
    let order = depth_order(splats);
    let tiles_x = width.div_ceil(TILE);
    let tiles_y = height.div_ceil(TILE);
    let mut tiles: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    let mut prepared = Vec::with_capacity(order.len());
    for (rank, &si) in order.iter().enumerate() {
        let s = &splats[si];
        let conic = crate::linalg::inverse2(&s.cov2d).unwrap_or([[T::zero(); 2]; 2]);
        let power_floor = if cfg.min_alpha > T::zero() && s.alpha_base > T::zero() {
            (cfg.min_alpha / s.alpha_base).ln()
        } else {
            T::neg_infinity()
        };
        prepared.push(Prepared { mean: s.mean2d, conic, color: s.color, alpha_base: s.alpha_base, power_floor });
        let (tx0, tx1, ty0, ty1) = if cfg.min_alpha > T::zero() {
            if s.alpha_base < cfg.min_alpha {
                continue;
            }
            let m2 = T::lit(2.0) * (s.alpha_base / cfg.min_alpha).ln();
            let r = (crate::linalg::max_eigenvalue2(&s.cov2d) * m2).sqrt();
            let x0 = s.mean2d[0] - r - T::lit(0.5);
            let x1 = s.mean2d[0] + r - T::lit(0.5);
            let y0 = s.mean2d[1] - r - T::lit(0.5);
            let y1 = s.mean2d[1] + r - T::lit(0.5);
            let w = T::from_usize(width).unwrap();
            let h = T::from_usize(height).unwrap();
            if x1 < T::zero() || y1 < T::zero() || x0 > w || y0 > h {
                continue;
            }
            // pixel index range whose centers can be reached
            let px0 = x0.max(T::zero()).ceil().to_usize().unwrap_or(0);
            let px1 = x1.min(w - T::one()).floor().to_usize().unwrap_or(0);
            let py0 = y0.max(T::zero()).ceil().to_usize().unwrap_or(0);
            let py1 = y1.min(h - T::one()).floor().to_usize().unwrap_or(0);
            if px0 > px1 || py0 > py1 || px0 >= width || py0 >= height {
                continue;
            }
            (px0 / TILE, px1 / TILE, py0 / TILE, py1 / TILE)
        } else {
            (0, tiles_x - 1, 0, tiles_y - 1)
        };
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                tiles[ty * tiles_x + tx].push(rank as u32);
            }
        }
    }
    Binning { order, prepared, tiles, tiles_x, width, height }
}

struct Contribution<T> {
    slot: usize,
    alpha: T,
    g: T,
    clamped: bool,
    transmittance: T,
}

#[inline]
fn pixel_contributions<T: Scalar>(
    bins: &Binning<T>,
    list: &[u32],
    px: T,
    py: T,
    cfg: &RenderConfig<T>,
    out: &mut Vec<Contribution<T>>,
) -> T {
    out.clear();
    let alpha_max = T::lit(ALPHA_MAX);
    let t_min = T::lit(T_MIN);
    let half = T::lit(0.5);
    let mut trans = T::one();
    for (slot, &rank) in list.iter().enumerate() {
        let s = &bins.prepared[rank as usize];
        let dx = px - s.mean[0];
        let dy = py - s.mean[1];
        let k = &s.conic;
        let power = -half * (k[0][0] * dx * dx + (k[0][1] + k[1][0]) * dx * dy + k[1][1] * dy * dy);
        if power > T::zero() || power < s.power_floor {
            continue;
        }
        let g = power.exp();
        let raw = s.alpha_base * g;
        let clamped = raw > alpha_max;
        let alpha = if clamped { alpha_max } else { raw };
        if alpha < cfg.min_alpha || alpha <= T::zero() {
            continue;
        }
        out.push(Contribution { slot, alpha, g, clamped, transmittance: trans });
        trans *= T::one() - alpha;
        if cfg.early_stop && trans < t_min {
            break;
        }
    }
    trans
}

/// Composites sorted splats into an image.
pub fn rasterize<T: Scalar>(splats: &[Splat2D<T>], width: usize, height: usize, cfg: &RenderConfig<T>) -> Image<T> {
    let bins = bin(splats, width, height, cfg);
    rasterize_binned(&bins, cfg)
}

pub(crate) fn rasterize_binned<T: Scalar>(bins: &Binning<T>, cfg: &RenderConfig<T>) -> Image<T> {
    let (width, height) = (bins.width, bins.height);
    let blocks: Vec<(usize, Vec<[T; 3]>)> = bins
        .tiles
        .par_iter()
        .enumerate()
        .map(|(tile_id, list)| {
            let (x0, y0) = ((tile_id % bins.tiles_x) * TILE, (tile_id / bins.tiles_x) * TILE);
            let mut contrib = Vec::new();
            let mut pixels = Vec::with_capacity(TILE * TILE);
            for y in y0..(y0 + TILE).min(height) {
                for x in x0..(x0 + TILE).min(width) {
                    let px = T::from_usize(x).unwrap() + T::lit(0.5);
                    let py = T::from_usize(y).unwrap() + T::lit(0.5);
                    let trans = pixel_contributions(bins, list, px, py, cfg, &mut contrib);
                    let mut c = [T::zero(); 3];
                    for ct in &contrib {
                        let s = &bins.prepared[list[ct.slot] as usize];
                        let w = ct.alpha * ct.transmittance;
                        for ch in 0..3 {
                            c[ch] += s.color[ch] * w;
                        }
                    }
                    for ch in 0..3 {
                        c[ch] += cfg.background[ch] * trans;
                    }
                    pixels.push(c);
                }
            }
            (tile_id, pixels)
        })
        .collect();
    let mut img = Image::new(width, height);
    for (tile_id, pixels) in blocks {
        let (x0, y0) = ((tile_id % bins.tiles_x) * TILE, (tile_id / bins.tiles_x) * TILE);
        let tw = (x0 + TILE).min(width) - x0;
        for (i, c) in pixels.into_iter().enumerate() {
            img.set(x0 + i % tw, y0 + i / tw, c);
        }
    }
    img
}

/// Adjoint of [`rasterize`]: gradient per input splat (same order as `splats`).
pub fn rasterize_backward<T: Scalar>(
    splats: &[Splat2D<T>],
    width: usize,
    height: usize,
    cfg: &RenderConfig<T>,
    d_image: &Image<T>,
) -> Vec<SplatGrad<T>> {
    let bins = bin(splats, width, height, cfg);
    rasterize_backward_binned(&bins, cfg, d_image)
}

pub(crate) fn rasterize_backward_binned<T: Scalar>(
    bins: &Binning<T>,
    cfg: &RenderConfig<T>,
    d_image: &Image<T>,
) -> Vec<SplatGrad<T>> {
    let (width, height) = (bins.width, bins.height);
    let half = T::lit(0.5);
    let per_tile: Vec<Vec<SplatGrad<T>>> = bins
        .tiles
        .par_iter()
        .enumerate()
        .map(|(tile_id, list)| {
            let mut acc = vec![SplatGrad::zero(); list.len()];
            if list.is_empty() {
                return acc;
            }
            let (x0, y0) = ((tile_id % bins.tiles_x) * TILE, (tile_id / bins.tiles_x) * TILE);
            let mut contrib = Vec::new();
            for y in y0..(y0 + TILE).min(height) {
                for x in x0..(x0 + TILE).min(width) {
                    let dc = d_image.get(x, y);
                    if dc.iter().all(|v| *v == T::zero()) {
                        continue;
                    }
                    let px = T::from_usize(x).unwrap() + half;
                    let py = T::from_usize(y).unwrap() + half;
                    let trans_final = pixel_contributions(bins, list, px, py, cfg, &mut contrib);
                    // color of everything behind the current splat, background included
                    let mut behind = [T::zero(); 3];
                    for ch in 0..3 {
                        behind[ch] = cfg.background[ch] * trans_final;
                    }
                    for ct in contrib.iter().rev() {
                        let s = &bins.prepared[list[ct.slot] as usize];
                        let g = &mut acc[ct.slot];
                        let w = ct.alpha * ct.transmittance;
                        let mut d_alpha = T::zero();
                        let one_minus = T::one() - ct.alpha;
                        for ch in 0..3 {
                            g.color[ch] += dc[ch] * w;
                            d_alpha += dc[ch] * (s.color[ch] * ct.transmittance - behind[ch] / one_minus);
                            behind[ch] += s.color[ch] * w;
                        }
                        if ct.clamped {
                            continue;
                        }
                        g.alpha_base += d_alpha * ct.g;
                        let d_power = d_alpha * s.alpha_base * ct.g;
                        let dx = px - s.mean[0];
                        let dy = py - s.mean[1];
                        let k = &s.conic;
                        g.conic[0][0] += -half * dx * dx * d_power;
                        g.conic[0][1] += -half * dx * dy * d_power;
                        g.conic[1][0] += -half * dx * dy * d_power;
                        g.conic[1][1] += -half * dy * dy * d_power;
                        // d power / d mean = K d (for symmetric K)
                        let kdx = half * ((k[0][0] + k[0][0]) * dx + (k[0][1] + k[1][0]) * dy);
                        let kdy = half * ((k[0][1] + k[1][0]) * dx + (k[1][1] + k[1][1]) * dy);
                        g.mean2d[0] += kdx * d_power;
                        g.mean2d[1] += kdy * d_power;
                    }
                }
            }
            acc
        })
        .collect();
    let mut by_rank = vec![SplatGrad::zero(); bins.order.len()];
    for (list, acc) in bins.tiles.iter().zip(per_tile.iter()) {
        for (slot, &rank) in list.iter().enumerate() {
            by_rank[rank as usize].add(&acc[slot]);
        }
    }
    let mut out = vec![SplatGrad::zero(); bins.order.len()];
    for (rank, &si) in bins.order.iter().enumerate() {
        out[si] = by_rank[rank];
    }
    out
}
