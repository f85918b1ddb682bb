//! Label-preserving image augmentations and filters on row-major `[0, 1]` images.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Per-augmentation probabilities and magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentPolicy {
    pub p_blur: f64,
    pub p_downscale: f64,
    pub p_brightness: f64,
    pub p_contrast: f64,
    pub p_occlusion: f64,
    /// Gaussian blur sigma is drawn uniformly from this range (pixels).
    pub blur_sigma: [f64; 2],
    /// Brightness offset is drawn from `[-max, max]`.
    pub brightness_max: f64,
    /// Contrast gain range around the image mean.
    pub contrast: [f64; 2],
    /// Maximum number of occlusion lines.
    pub max_lines: usize,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            p_blur: 0.5,
            p_downscale: 0.5,
            p_brightness: 0.5,
            p_contrast: 0.5,
            p_occlusion: 0.5,
            blur_sigma: [0.4, 1.0],
            brightness_max: 0.15,
            contrast: [0.7, 1.3],
            max_lines: 2,
        }
    }
}

impl AugmentPolicy {
    pub fn disabled() -> Self {
        Self { p_blur: 0.0, p_downscale: 0.0, p_brightness: 0.0, p_contrast: 0.0, p_occlusion: 0.0, ..Self::default() }
    }
}

fn clamp_unit(img: &mut [f64]) {
    img.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(img: &[f64], height: usize, width: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return img.to_vec();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; img.len()];
    for y in 0..height {
        for x in 0..width {
            tmp[y * width + x] = k
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    let xx = (x as isize + i as isize - r).clamp(0, width as isize - 1) as usize;
                    w * img[y * width + xx]
                })
                .sum();
        }
    }
    let mut out = vec![0.0; img.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = k
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    let yy = (y as isize + i as isize - r).clamp(0, height as isize - 1) as usize;
                    w * tmp[yy * width + x]
                })
                .sum();
        }
    }
    out
}

/// 2x2 box-average downscale followed by pixel replication back to full size.
/// Odd trailing rows/columns average over the pixels that exist.
pub fn downscale_upscale(img: &[f64], height: usize, width: usize) -> Vec<f64> {
    let (hh, hw) = (height.div_ceil(2), width.div_ceil(2));
    let mut small = vec![0.0; hh * hw];
    for by in 0..hh {
        for bx in 0..hw {
            let mut acc = 0.0;
            let mut n = 0.0;
            for y in 2 * by..(2 * by + 2).min(height) {
                for x in 2 * bx..(2 * bx + 2).min(width) {
                    acc += img[y * width + x];
                    n += 1.0;
                }
            }
            small[by * hw + bx] = acc / n;
        }
    }
    let mut out = vec![0.0; img.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = small[(y / 2) * hw + x / 2];
        }
    }
    out
}

pub fn adjust_brightness(img: &mut [f64], offset: f64) {
    img.iter_mut().for_each(|v| *v += offset);
    clamp_unit(img);
}

pub fn adjust_contrast(img: &mut [f64], gain: f64) {
    let mean = img.iter().sum::<f64>() / img.len().max(1) as f64;
    img.iter_mut().for_each(|v| *v = mean + (*v - mean) * gain);
    clamp_unit(img);
}

/// Draws a straight line of the given thickness and intensity across the image.
pub fn draw_line(img: &mut [f64], height: usize, width: usize, from: [f64; 2], to: [f64; 2], thickness: f64, value: f64) {
    let (dx, dy) = (to[0] - from[0], to[1] - from[1]);
    let len2 = (dx * dx + dy * dy).max(1e-12);
    for y in 0..height {
        for x in 0..width {
            let (px, py) = (x as f64 - from[0], y as f64 - from[1]);
            let t = ((px * dx + py * dy) / len2).clamp(0.0, 1.0);
            let (ex, ey) = (px - t * dx, py - t * dy);
            if (ex * ex + ey * ey).sqrt() <= thickness / 2.0 {
                img[y * width + x] = value;
            }
        }
    }
}

/// Applies each augmentation independently with its configured probability,
/// in a fixed order: blur, downscale-upscale, brightness, contrast, occlusion lines.
pub fn augment<R: Rng>(img: &[f64], height: usize, width: usize, rng: &mut R, policy: &AugmentPolicy) -> Vec<f64> {
    let mut out = img.to_vec();
    if rng.gen::<f64>() < policy.p_blur {
        let sigma = rng.gen_range(policy.blur_sigma[0]..=policy.blur_sigma[1]);
        out = gaussian_blur(&out, height, width, sigma);
    }
    if rng.gen::<f64>() < policy.p_downscale {
        out = downscale_upscale(&out, height, width);
    }
    if rng.gen::<f64>() < policy.p_brightness {
        let b = rng.gen_range(-policy.brightness_max..=policy.brightness_max);
        adjust_brightness(&mut out, b);
    }
    if rng.gen::<f64>() < policy.p_contrast {
        let c = rng.gen_range(policy.contrast[0]..=policy.contrast[1]);
        adjust_contrast(&mut out, c);
    }
    if rng.gen::<f64>() < policy.p_occlusion && policy.max_lines > 0 {
        let lines = rng.gen_range(1..=policy.max_lines);
        for _ in 0..lines {
            let from = [rng.gen_range(0.0..width as f64), rng.gen_range(0.0..height as f64)];
            let to = [rng.gen_range(0.0..width as f64), rng.gen_range(0.0..height as f64)];
            let thickness = rng.gen_range(1.0..2.5);
            let value = rng.gen_range(0.0..1.0);
            draw_line(&mut out, height, width, from, to, thickness, value);
        }
    }
    clamp_unit(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rngs::{purpose, stream};

    fn ramp(h: usize, w: usize) -> Vec<f64> {
        (0..h * w).map(|i| ((i * 37) % 101) as f64 / 100.0).collect()
    }

    #[test]
    fn zero_probabilities_are_identity() {
        let img = ramp(7, 9);
        let mut rng = stream(0, purpose::AUGMENT, 0);
        assert_eq!(augment(&img, 7, 9, &mut rng, &AugmentPolicy::disabled()), img);
    }

    #[test]
    fn brightness_on_constant_image() {
        let mut img = vec![0.4; 12];
        adjust_brightness(&mut img, 0.25);
        assert!(img.iter().all(|&v| (v - 0.65).abs() < 1e-15));
        adjust_brightness(&mut img, 0.9);
        assert!(img.iter().all(|&v| v == 1.0));
    }

    /// Independent reference: explicit 2x2 box filter evaluated per output pixel.
    fn box_oracle(img: &[f64], h: usize, w: usize) -> Vec<f64> {
        let mut out = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let (y0, x0) = (y - y % 2, x - x % 2);
                let cells: Vec<f64> = [(0, 0), (0, 1), (1, 0), (1, 1)]
                    .iter()
                    .filter(|(a, b)| y0 + a < h && x0 + b < w)
                    .map(|(a, b)| img[(y0 + a) * w + x0 + b])
                    .collect();
                out[y * w + x] = cells.iter().sum::<f64>() / cells.len() as f64;
            }
        }
        out
    }

    #[test]
    fn downscale_matches_box_filter_and_kills_nyquist() {
        for (h, w) in [(6, 8), (5, 7)] {
            let img = ramp(h, w);
            let got = downscale_upscale(&img, h, w);
            for (a, b) in got.iter().zip(box_oracle(&img, h, w)) {
                assert!((a - b).abs() < 1e-15);
            }
        }
        // checkerboard sits at Nyquist and collapses to its mean
        let cb: Vec<f64> = (0..8 * 8).map(|i| ((i / 8 + i % 8) % 2) as f64).collect();
        assert!(downscale_upscale(&cb, 8, 8).iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn blur_preserves_constant_and_mean_roughly() {
        let img = vec![0.3; 30];
        assert!(gaussian_blur(&img, 5, 6, 1.2).iter().all(|&v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn augment_output_in_range_and_deterministic() {
        let img = ramp(16, 20);
        let p = AugmentPolicy { p_blur: 1.0, p_downscale: 1.0, p_brightness: 1.0, p_contrast: 1.0, p_occlusion: 1.0, ..Default::default() };
        let a = augment(&img, 16, 20, &mut stream(3, purpose::AUGMENT, 1), &p);
        let b = augment(&img, 16, 20, &mut stream(3, purpose::AUGMENT, 1), &p);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_ne!(a, img);
    }
}
