//! Landmark heatmaps: target rendering, spatial softmax, soft-argmax decoding
//! and the L1 heatmap loss, each with its analytic backward pass.
//!
//! Grids are 0-based. Heatmap cell `(cx, cy)` corresponds to input pixel
//! `(scale * cx, scale * cy)`.

use crate::error::{HgnError, Result};
use crate::geometry::{LandmarkSet, NUM_LANDMARKS};
use crate::scalar::Real;

/// Default heatmap grid (half of a 64 x 96 input).
pub const DEFAULT_HM_HEIGHT: usize = 32;
pub const DEFAULT_HM_WIDTH: usize = 48;
pub const DEFAULT_HM_SCALE: f64 = 2.0;
/// Default target Gaussian width, in heatmap cells.
pub const DEFAULT_TARGET_SIGMA: f64 = 2.0;

/// Ten-channel score grid, channel-major (`[channel][y][x]`).
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapStack<T> {
    pub height: usize,
    pub width: usize,
    /// Input pixels per heatmap cell.
    pub scale: T,
    pub data: Vec<T>,
}

impl<T: Real> HeatmapStack<T> {
    pub fn new(height: usize, width: usize, scale: T, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(HgnError::Contract("empty heatmap grid".into()));
        }
        if data.len() != NUM_LANDMARKS * height * width {
            return Err(HgnError::Contract(format!(
                "heatmap data length {} != 10 x {height} x {width}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(HgnError::NonFinite {
                term: "heatmap".into(),
                detail: format!("element {i}"),
            });
        }
        Ok(Self { height, width, scale, data })
    }

    pub fn zeros(height: usize, width: usize, scale: T) -> Self {
        Self { height, width, scale, data: vec![T::zero(); NUM_LANDMARKS * height * width] }
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, i: usize) -> &[T] {
        let n = self.cells();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn channel_mut(&mut self, i: usize) -> &mut [T] {
        let n = self.cells();
        &mut self.data[i * n..(i + 1) * n]
    }

    fn same_grid(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width
    }
}

/// Ten decoded landmark positions in input pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedLandmarks<T> {
    pub points: [[T; 2]; NUM_LANDMARKS],
}

impl<T: Real> DecodedLandmarks<T> {
    pub fn to_landmarks(&self) -> LandmarkSet<T> {
        LandmarkSet { points: self.points }
    }
}

/// Numerically stable softmax of one channel, written into `out`.
pub fn softmax_channel<T: Real>(logits: &[T], out: &mut [T]) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    let inv = T::one() / sum;
    for o in out.iter_mut() {
        *o *= inv;
    }
}

/// Per-channel softmax over the spatial grid.
pub fn spatial_softmax<T: Real>(logits: &HeatmapStack<T>) -> HeatmapStack<T> {
    let mut out = HeatmapStack::zeros(logits.height, logits.width, logits.scale);
    let n = logits.cells();
    for (src, dst) in logits.data.chunks_exact(n).zip(out.data.chunks_exact_mut(n)) {
        softmax_channel(src, dst);
    }
    out
}

/// Backward of [`spatial_softmax`]: `dl/dh = p * (g - sum(p * g))` per channel.
pub fn spatial_softmax_backward<T: Real>(probs: &[T], grad_probs: &[T], cells: usize) -> Vec<T> {
    let mut out = vec![T::zero(); probs.len()];
    for ((p, g), o) in probs
        .chunks_exact(cells)
        .zip(grad_probs.chunks_exact(cells))
        .zip(out.chunks_exact_mut(cells))
    {
        let dot: T = p.iter().zip(g).map(|(&a, &b)| a * b).sum();
        for ((o, &pi), &gi) in o.iter_mut().zip(p).zip(g) {
            *o = pi * (gi - dot);
        }
    }
    out
}

/// Expected grid coordinate of each normalized channel, in input pixels.
pub fn soft_argmax<T: Real>(normalized: &HeatmapStack<T>) -> DecodedLandmarks<T> {
    let (h, w) = (normalized.height, normalized.width);
    let mut points = [[T::zero(); 2]; NUM_LANDMARKS];
    for (i, p) in points.iter_mut().enumerate() {
        let ch = normalized.channel(i);
        let (mut sx, mut sy) = (T::zero(), T::zero());
        for y in 0..h {
            let row = &ch[y * w..(y + 1) * w];
            let mut row_mass = T::zero();
            for (x, &v) in row.iter().enumerate() {
                sx += T::lit(x as f64) * v;
                row_mass += v;
            }
            sy += T::lit(y as f64) * row_mass;
        }
        *p = [sx * normalized.scale, sy * normalized.scale];
    }
    DecodedLandmarks { points }
}

/// Backward of [`soft_argmax`]: gradient with respect to the normalized maps.
pub fn soft_argmax_backward<T: Real>(
    height: usize,
    width: usize,
    scale: T,
    grad_points: &[[T; 2]; NUM_LANDMARKS],
) -> Vec<T> {
    let cells = height * width;
    let mut out = vec![T::zero(); NUM_LANDMARKS * cells];
    for (i, g) in grad_points.iter().enumerate() {
        let ch = &mut out[i * cells..(i + 1) * cells];
        for y in 0..height {
            let gy = g[1] * scale * T::lit(y as f64);
            for x in 0..width {
                ch[y * width + x] = g[0] * scale * T::lit(x as f64) + gy;
            }
        }
    }
    out
}

/// Target stack plus a flag telling whether any channel fell back to a
/// border delta because the Gaussian missed the grid entirely.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedTarget<T> {
    pub stack: HeatmapStack<T>,
    pub degraded: bool,
}

/// Renders each landmark as an isotropic Gaussian (width `sigma` cells),
/// truncated to the grid and normalized to unit mass.
pub fn render_target<T: Real>(
    landmarks: &LandmarkSet<T>,
    height: usize,
    width: usize,
    scale: T,
    sigma: T,
) -> RenderedTarget<T> {
    let mut stack = HeatmapStack::zeros(height, width, scale);
    let mut degraded = false;
    let inv_two_var = T::one() / (T::lit(2.0) * sigma * sigma);
    for (i, p) in landmarks.points.iter().enumerate() {
        let cx = p[0] / scale;
        let cy = p[1] / scale;
        // separable: exp(-(dx^2 + dy^2)/2s^2) = gx * gy
        let gx: Vec<T> =
            (0..width).map(|x| (-(T::lit(x as f64) - cx).powi(2) * inv_two_var).exp()).collect();
        let gy: Vec<T> =
            (0..height).map(|y| (-(T::lit(y as f64) - cy).powi(2) * inv_two_var).exp()).collect();
        let ch = stack.channel_mut(i);
        let mut sum = T::zero();
        for (y, &vy) in gy.iter().enumerate() {
            for (x, &vx) in gx.iter().enumerate() {
                let v = vy * vx;
                ch[y * width + x] = v;
                sum += v;
            }
        }
        if !(sum >= T::lit(1e-12)) {
            degraded = true;
            ch.iter_mut().for_each(|v| *v = T::zero());
            let nearest = |c: T, n: usize| -> usize {
                let r = c.round();
                if r < T::zero() {
                    0
                } else {
                    r.to_usize().unwrap_or(usize::MAX).min(n - 1)
                }
            };
            ch[nearest(cy, height) * width + nearest(cx, width)] = T::one();
        } else {
            let inv = T::one() / sum;
            ch.iter_mut().for_each(|v| *v *= inv);
        }
    }
    RenderedTarget { stack, degraded }
}

/// L1 distance between two normalized stacks with its gradient with respect
/// to `pred` (subgradient 0 where the two agree exactly).
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapLoss<T> {
    pub value: T,
    pub grad_pred: Vec<T>,
}

pub fn heatmap_loss<T: Real>(
    pred: &HeatmapStack<T>,
    target: &HeatmapStack<T>,
) -> Result<HeatmapLoss<T>> {
    if !pred.same_grid(target) {
        return Err(HgnError::Contract(format!(
            "heatmap resolution mismatch: {}x{} vs {}x{}",
            pred.height, pred.width, target.height, target.width
        )));
    }
    Ok(l1_with_grad(&pred.data, &target.data))
}

pub(crate) fn l1_with_grad<T: Real>(pred: &[T], target: &[T]) -> HeatmapLoss<T> {
    let mut value = T::zero();
    let grad_pred = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = p - t;
            value += d.abs();
            sign(d)
        })
        .collect();
    HeatmapLoss { value, grad_pred }
}

/// Heatmap loss evaluated from prediction logits; the gradient is taken with
/// respect to the logits through the spatial softmax.
pub fn heatmap_loss_from_logits<T: Real>(
    pred_logits: &HeatmapStack<T>,
    target: &HeatmapStack<T>,
) -> Result<HeatmapLoss<T>> {
    let probs = spatial_softmax(pred_logits);
    let HeatmapLoss { value, grad_pred } = heatmap_loss(&probs, target)?;
    let grad_logits = spatial_softmax_backward(&probs.data, &grad_pred, probs.cells());
    Ok(HeatmapLoss { value, grad_pred: grad_logits })
}

#[inline]
pub(crate) fn sign<T: Real>(d: T) -> T {
    if d > T::zero() {
        T::one()
    } else if d < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}
