//! Static overlay: eye image, predicted landmarks and both gaze arrows.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::geometry::{in_plane_direction, GazeAngles, LandmarkSet};
use crate::synthgen::Sample;
use crate::{HgnError, Result};

/// Output pixels per input pixel.
pub const OVERLAY_SCALE: u32 = 4;
/// Arrow length for a gaze vector lying in the image plane, in input pixels.
pub const ARROW_LENGTH: f64 = 30.0;
/// Arrows shorter than this (input pixels) are drawn as a dot marker.
const MIN_ARROW: f64 = 0.5;

/// Landmark dots green, predicted gaze red, ground truth blue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverlayColors {
    pub landmarks: [u8; 3],
    pub predicted: [u8; 3],
    pub truth: [u8; 3],
}

impl Default for OverlayColors {
    fn default() -> Self {
        Self { landmarks: [0, 220, 0], predicted: [230, 0, 0], truth: [0, 0, 255] }
    }
}

/// In-plane arrow (x right, y down) for gaze `g`: `(sin(phi)cos(theta),
/// sin(theta))` times `length`.
pub fn arrow_vector(g: GazeAngles<f64>, length: f64) -> [f64; 2] {
    let d = in_plane_direction(g);
    [d[0] * length, d[1] * length]
}

struct Canvas {
    img: RgbImage,
}

impl Canvas {
    fn put(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as u32) < self.img.width() && (y as u32) < self.img.height() {
            self.img.put_pixel(x as u32, y as u32, Rgb(c));
        }
    }

    fn disk(&mut self, cx: f64, cy: f64, r: f64, c: [u8; 3]) {
        let ri = r.ceil() as i64;
        let (x0, y0) = (cx.round() as i64, cy.round() as i64);
        for dy in -ri..=ri {
            for dx in -ri..=ri {
                if ((dx * dx + dy * dy) as f64) <= r * r {
                    self.put(x0 + dx, y0 + dy, c);
                }
            }
        }
    }

    fn line(&mut self, a: [f64; 2], b: [f64; 2], c: [u8; 3]) {
        let steps = ((b[0] - a[0]).abs().max((b[1] - a[1]).abs()).ceil() as usize).max(1);
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            let (x, y) = (a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t);
            self.disk(x, y, 1.0, c);
        }
    }

    /// Arrow from `origin` along `v` (both in output pixels).
    fn arrow(&mut self, origin: [f64; 2], v: [f64; 2], c: [u8; 3]) {
        let len = v[0].hypot(v[1]);
        if len < MIN_ARROW * OVERLAY_SCALE as f64 {
            self.disk(origin[0], origin[1], 4.0, c);
            return;
        }
        let tip = [origin[0] + v[0], origin[1] + v[1]];
        self.line(origin, tip, c);
        let (ux, uy) = (v[0] / len, v[1] / len);
        let head = (0.25 * len).min(12.0);
        for side in [-1.0, 1.0] {
            // barbs at +-30 degrees off the reversed shaft
            let (cs, sn) = (0.866_025_403_784_438_6, 0.5 * side);
            let bx = -(ux * cs - uy * sn);
            let by = -(ux * sn + uy * cs);
            self.line(tip, [tip[0] + bx * head, tip[1] + by * head], c);
        }
    }
}

/// Renders the overlay in memory. Arrows start at the eyeball center: the
/// predicted one when landmarks are available, the labelled one otherwise.
pub fn render_overlay(
    sample: &Sample,
    landmarks: Option<&LandmarkSet<f64>>,
    predicted: GazeAngles<f64>,
    colors: &OverlayColors,
) -> Result<RgbImage> {
    if sample.image.len() != sample.height * sample.width || sample.height == 0 || sample.width == 0 {
        return Err(HgnError::Contract("sample image does not match its size".into()));
    }
    let s = OVERLAY_SCALE;
    let (w, h) = (sample.width as u32 * s, sample.height as u32 * s);
    let img = RgbImage::from_fn(w, h, |x, y| {
        let v = sample.image[(y / s) as usize * sample.width + (x / s) as usize];
        Rgb([v, v, v])
    });
    let mut canvas = Canvas { img };
    // pixel centers: input coordinate u maps to output (u + 0.5) * s
    let to_out = |p: [f64; 2]| [(p[0] + 0.5) * s as f64, (p[1] + 0.5) * s as f64];
    let scale = |v: [f64; 2]| [v[0] * s as f64, v[1] * s as f64];

    let truth_origin = to_out(sample.landmarks.eyeball_center());
    canvas.arrow(truth_origin, scale(arrow_vector(sample.gaze, ARROW_LENGTH)), colors.truth);
    let pred_origin = landmarks.map(|l| to_out(l.eyeball_center())).unwrap_or(truth_origin);
    canvas.arrow(pred_origin, scale(arrow_vector(predicted, ARROW_LENGTH)), colors.predicted);
    if let Some(l) = landmarks {
        for p in &l.points {
            let q = to_out(*p);
            canvas.disk(q[0], q[1], 2.0, colors.landmarks);
        }
    }
    Ok(canvas.img)
}

/// Writes the overlay as PNG and decodes it again to confirm the file is a
/// valid image of the expected size.
pub fn visualize(
    sample: &Sample,
    landmarks: Option<&LandmarkSet<f64>>,
    predicted: GazeAngles<f64>,
    path: &Path,
) -> Result<()> {
    let img = render_overlay(sample, landmarks, predicted, &OverlayColors::default())?;
    img.save_with_format(path, image::ImageFormat::Png).map_err(image_err)?;
    let back = image::open(path).map_err(image_err)?;
    if back.width() != img.width() || back.height() != img.height() {
        return Err(HgnError::Io(std::io::Error::other(format!("{} did not decode to the written size", path.display()))));
    }
    Ok(())
}

fn image_err(e: image::ImageError) -> HgnError {
    match e {
        image::ImageError::IoError(io) => HgnError::Io(io),
        other => HgnError::Io(std::io::Error::other(other.to_string())),
    }
}
