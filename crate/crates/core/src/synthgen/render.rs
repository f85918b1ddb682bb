//! Procedural grayscale eye renderer.
//!
//! The eye opening is an almond shape centred on the eyeball centre. Inside
//! it, each pixel is back-projected onto the visible hemisphere of the
//! eyeball; the angle between that surface normal and the gaze axis decides
//! pupil, iris or sclera, so the iris boundary coincides with the projected
//! rim landmarks.

use crate::geometry::{angles_to_vector, EyeballState, GazeAngles};

const SKIN_TOP: f64 = 0.62;
const SKIN_BOTTOM: f64 = 0.50;
const SCLERA: f64 = 0.88;
const IRIS: f64 = 0.38;
const LIMBUS: f64 = 0.22;
const PUPIL: f64 = 0.06;
const LID_LINE: f64 = 0.18;
/// Pupil angular radius as a fraction of the iris angular radius.
const PUPIL_FRACTION: f64 = 0.45;
/// Supersampling grid per axis; offsets are symmetric around the pixel centre.
const SUPERSAMPLE: usize = 3;

fn smoothstep(edge0: f64, edge1: f64, x: f64) -> f64 {
    let t = ((x - edge0) / (edge1 - edge0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Intensity at continuous image position `(x, y)`.
fn shade(eye: &EyeballState<f64>, gaze: [f64; 3], height: usize, x: f64, y: f64) -> f64 {
    let r = eye.radius;
    let skin = SKIN_TOP + (SKIN_BOTTOM - SKIN_TOP) * (y / height.max(1) as f64);
    let dx = x - eye.center_x;
    let dy = y - eye.center_y;

    // almond-shaped opening: half-width 1.1 R, lids as parabolas in dx
    let half_w = 1.1 * r;
    let t = 1.0 - (dx / half_w).powi(2);
    if t <= 0.0 {
        return skin;
    }
    let upper = eye.center_y - 0.62 * r * t;
    let lower = eye.center_y + 0.48 * r * t;
    // signed distance (pixels, positive inside) to the nearest lid
    let inside = (y - upper).min(lower - y);
    if inside <= -1.0 {
        return skin;
    }

    let (nx, ny) = (dx / r, dy / r);
    let rho2 = nx * nx + ny * ny;
    let eyeball = if rho2 < 1.0 {
        let nz = -(1.0 - rho2).sqrt();
        let cos_a = nx * gaze[0] + ny * gaze[1] + nz * gaze[2];
        let angle = cos_a.clamp(-1.0, 1.0).acos();
        let psi = eye.iris_angular_radius;
        let pupil = psi * PUPIL_FRACTION;
        // limb darkening toward the sphere's silhouette
        let sclera = SCLERA - 0.18 * rho2;
        let iris_tone = IRIS + (LIMBUS - IRIS) * smoothstep(0.6 * psi, psi, angle);
        let iris_mix = 1.0 - smoothstep(psi - 0.02, psi + 0.02, angle);
        let pupil_mix = 1.0 - smoothstep(pupil - 0.02, pupil + 0.02, angle);
        let v = sclera + (iris_tone - sclera) * iris_mix;
        v + (PUPIL - v) * pupil_mix
    } else {
        SCLERA - 0.25
    };

    // dark lid margin, fading into skin outside the opening
    let lid = smoothstep(-1.0, 1.0, inside);
    let margin = smoothstep(0.0, 1.5, inside);
    let opened = LID_LINE + (eyeball - LID_LINE) * margin;
    skin + (opened - skin) * lid
}

/// Renders an `height x width` image with intensities in `[0, 1]`.
pub fn rasterize_eye(eye: &EyeballState<f64>, g: GazeAngles<f64>, height: usize, width: usize) -> Vec<f64> {
    let v = angles_to_vector(g);
    let gaze = [v.x, v.y, v.z];
    let n = SUPERSAMPLE as f64;
    let offsets: Vec<f64> = (0..SUPERSAMPLE).map(|i| (i as f64 + 0.5) / n - 0.5).collect();
    let mut img = Vec::with_capacity(height * width);
    for py in 0..height {
        for px in 0..width {
            let mut acc = 0.0;
            for &oy in &offsets {
                for &ox in &offsets {
                    acc += shade(eye, gaze, height, px as f64 + ox, py as f64 + oy);
                }
            }
            img.push((acc / (n * n)).clamp(0.0, 1.0));
        }
    }
    img
}
