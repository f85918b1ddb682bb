//! Synthetic eye dataset generation: geometry sampling, rendering,
//! augmentation, real-like degradation and the on-disk dataset format.

pub mod augment;
pub mod io;
pub mod render;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HgnError, Result};
use crate::geometry::{project_landmarks, EyeballState, GazeAngles, LandmarkSet};
use crate::rngs::{purpose, stream};

pub use augment::{augment, AugmentPolicy};
pub use io::{read_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION};
pub use render::rasterize_eye;

/// Widest gaze range any profile may request, per axis, in degrees.
pub const MAX_GAZE_DEG: f64 = 80.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DegradeSpec {
    /// Standard deviation of the Gaussian noise added to each gaze label component (radians).
    pub sigma_inj: f64,
    pub occlusion_prob: f64,
    pub blur_prob: f64,
    /// Blur strength applied when blur is drawn (pixels).
    pub blur_sigma: f64,
}

impl Default for DegradeSpec {
    fn default() -> Self {
        Self { sigma_inj: 0.15, occlusion_prob: 0.5, blur_prob: 1.0, blur_sigma: 1.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub theta_range_deg: [f64; 2],
    pub phi_range_deg: [f64; 2],
    pub radius_range: [f64; 2],
    /// Eyeball centre offset from the image centre, uniform in `[-j, j]` per axis (pixels).
    pub center_jitter: f64,
    /// Iris angular radius range (radians).
    pub iris_radius_range: [f64; 2],
    pub seed: u64,
    pub count: usize,
    /// Replace every radius label by the dataset mean radius.
    pub mean_radius_labels: bool,
    /// Fraction of samples turned into real-like samples.
    pub reallike_fraction: f64,
    pub degrade: DegradeSpec,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 96,
            theta_range_deg: [-30.0, 30.0],
            phi_range_deg: [-40.0, 40.0],
            radius_range: [14.0, 26.0],
            center_jitter: 6.0,
            iris_radius_range: [0.30, 0.40],
            seed: 0,
            count: 2000,
            mean_radius_labels: false,
            reallike_fraction: 0.0,
            degrade: DegradeSpec::default(),
        }
    }
}

fn ordered(r: [f64; 2]) -> bool {
    r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HgnError::Config(m));
        if self.count == 0 {
            return bad("sample count must be >= 1".into());
        }
        if self.height < 8 || self.width < 8 || self.height > u16::MAX as usize || self.width > u16::MAX as usize {
            return bad(format!("image size {}x{} out of range", self.height, self.width));
        }
        for (name, r) in [("theta", self.theta_range_deg), ("phi", self.phi_range_deg)] {
            if !ordered(r) || r[0] <= -MAX_GAZE_DEG || r[1] >= MAX_GAZE_DEG {
                return bad(format!("{name} range {r:?} must be ordered and inside (-80, 80) degrees"));
            }
        }
        if !ordered(self.radius_range) || self.radius_range[0] <= 0.0 {
            return bad(format!("radius range {:?} invalid", self.radius_range));
        }
        let psi = self.iris_radius_range;
        if !ordered(psi) || psi[0] <= 0.0 || psi[1] >= std::f64::consts::FRAC_PI_2 {
            return bad(format!("iris angular radius range {psi:?} invalid"));
        }
        if !(self.center_jitter >= 0.0) {
            return bad("center jitter must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.reallike_fraction) {
            return bad("reallike_fraction must lie in [0, 1]".into());
        }
        let d = &self.degrade;
        if !(d.sigma_inj >= 0.0 && d.blur_sigma >= 0.0)
            || !(0.0..=1.0).contains(&d.occlusion_prob)
            || !(0.0..=1.0).contains(&d.blur_prob)
        {
            return bad("degradation spec out of range".into());
        }
        Ok(())
    }

    /// Canonical text form stored in dataset headers.
    pub fn canonical_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    Synthetic,
    RealLike,
}

impl Domain {
    pub fn tag(self) -> u8 {
        match self {
            Domain::Synthetic => 0,
            Domain::RealLike => 1,
        }
    }

    pub fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(Domain::Synthetic),
            1 => Some(Domain::RealLike),
            _ => None,
        }
    }
}

/// What was done to a sample when it was degraded.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DegradationRecord {
    pub sigma_inj: f64,
    /// Noise actually added to the gaze label.
    pub noise_theta: f64,
    pub noise_phi: f64,
    pub occluded: bool,
    pub blurred: bool,
}

impl DegradationRecord {
    pub fn is_degraded(&self) -> bool {
        self.sigma_inj > 0.0 || self.occluded || self.blurred
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub height: usize,
    pub width: usize,
    /// Row-major 8-bit grayscale.
    pub image: Vec<u8>,
    pub landmarks: LandmarkSet<f64>,
    pub radius: f64,
    pub gaze: GazeAngles<f64>,
    pub domain: Domain,
    pub degradation: DegradationRecord,
}

impl Sample {
    /// Image as intensities in `[0, 1]`.
    pub fn image_unit(&self) -> Vec<f64> {
        self.image.iter().map(|&v| v as f64 / 255.0).collect()
    }
}

pub fn quantize(img: &[f64]) -> Vec<u8> {
    img.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
}

/// Global histogram equalization of an 8-bit image.
pub fn histogram_equalize(img: &[u8]) -> Vec<u8> {
    let mut hist = [0usize; 256];
    img.iter().for_each(|&v| hist[v as usize] += 1);
    let mut cdf = [0usize; 256];
    let mut acc = 0;
    for (c, h) in cdf.iter_mut().zip(hist) {
        acc += h;
        *c = acc;
    }
    let n = img.len();
    let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
    if n == cdf_min {
        return img.to_vec();
    }
    let denom = (n - cdf_min) as f64;
    img.iter()
        .map(|&v| (((cdf[v as usize] - cdf_min) as f64 / denom) * 255.0).round() as u8)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub version: u32,
    pub config_echo: String,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn indices_of(&self, domain: Domain) -> Vec<usize> {
        (0..self.samples.len()).filter(|&i| self.samples[i].domain == domain).collect()
    }
}

/// Draws geometry from `rng` and renders one synthetic sample.
pub fn generate_sample_with<R: Rng>(config: &SynthConfig, rng: &mut R) -> Result<Sample> {
    let deg = std::f64::consts::PI / 180.0;
    let uniform = |rng: &mut R, r: [f64; 2]| if r[0] == r[1] { r[0] } else { rng.gen_range(r[0]..r[1]) };
    let theta = uniform(rng, config.theta_range_deg) * deg;
    let phi = uniform(rng, config.phi_range_deg) * deg;
    let radius = uniform(rng, config.radius_range);
    let j = config.center_jitter;
    let cx = (config.width as f64 - 1.0) / 2.0 + uniform(rng, [-j, j]);
    let cy = (config.height as f64 - 1.0) / 2.0 + uniform(rng, [-j, j]);
    let psi = uniform(rng, config.iris_radius_range);
    let eye = EyeballState::new(cx, cy, radius, psi)?;
    let gaze = GazeAngles::new(theta, phi)?;
    let image = rasterize_eye(&eye, gaze, config.height, config.width);
    Ok(Sample {
        height: config.height,
        width: config.width,
        image: quantize(&image),
        landmarks: project_landmarks(&eye, gaze),
        radius,
        gaze,
        domain: Domain::Synthetic,
        degradation: DegradationRecord::default(),
    })
}

/// Sample `index` of the dataset described by `config`.
pub fn generate_sample(config: &SynthConfig, index: u64) -> Result<Sample> {
    generate_sample_with(config, &mut stream(config.seed, purpose::GENERATE, index))
}

/// Turns a synthetic sample into a real-like one: Gaussian gaze-label noise,
/// optional eyelid-closure occlusion and blur. Landmark and radius labels are
/// kept but are not supervised for this domain.
pub fn degrade_to_reallike<R: Rng>(sample: &Sample, rng: &mut R, spec: &DegradeSpec) -> Sample {
    let (h, w) = (sample.height, sample.width);
    let mut img = sample.image_unit();
    let blurred = rng.gen::<f64>() < spec.blur_prob;
    let occluded = rng.gen::<f64>() < spec.occlusion_prob;
    let closure = rng.gen_range(0.35..0.7);
    let (noise_theta, noise_phi) = if spec.sigma_inj > 0.0 {
        let n = Normal::new(0.0, spec.sigma_inj).expect("finite sigma");
        (n.sample(rng), n.sample(rng))
    } else {
        (0.0, 0.0)
    };

    if occluded {
        let [cx, cy] = sample.landmarks.eyeball_center();
        let r = sample.radius;
        let edge = cy - 0.62 * r + closure * 1.1 * r;
        for y in 0..h {
            for x in 0..w {
                let dx = (x as f64 - cx) / (1.2 * r);
                if dx.abs() < 1.0 && (y as f64) < edge && (y as f64) > cy - 0.9 * r {
                    img[y * w + x] = 0.55 + 0.05 * (1.0 - dx * dx);
                }
            }
        }
        // lid margin along the closure edge
        augment::draw_line(&mut img, h, w, [cx - 1.1 * r, edge], [cx + 1.1 * r, edge], 1.5, 0.2);
    }
    if blurred {
        img = augment::gaussian_blur(&img, h, w, spec.blur_sigma);
    }

    let limit = std::f64::consts::FRAC_PI_2 - 1e-6;
    let gaze = GazeAngles {
        theta: (sample.gaze.theta + noise_theta).clamp(-limit, limit),
        phi: (sample.gaze.phi + noise_phi).clamp(-limit, limit),
    };
    Sample {
        image: quantize(&img),
        gaze,
        domain: Domain::RealLike,
        degradation: DegradationRecord { sigma_inj: spec.sigma_inj, noise_theta, noise_phi, occluded, blurred },
        ..sample.clone()
    }
}

/// Generates the full dataset. Sample `i` depends only on `(seed, i)`, so
/// the result does not depend on the worker-thread count.
pub fn generate_dataset(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let n = config.count;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(config.seed, purpose::SPLIT, 0));
    let degraded_count = (config.reallike_fraction * n as f64).round() as usize;
    let mut degraded = vec![false; n];
    order[..degraded_count].iter().for_each(|&i| degraded[i] = true);

    let mut samples = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = generate_sample(config, i as u64)?;
            Ok(if degraded[i] {
                degrade_to_reallike(&s, &mut stream(config.seed, purpose::DEGRADE, i as u64), &config.degrade)
            } else {
                s
            })
        })
        .collect::<Result<Vec<_>>>()?;

    if config.mean_radius_labels {
        let mean = samples.iter().map(|s| s.radius).sum::<f64>() / n as f64;
        samples.iter_mut().for_each(|s| s.radius = mean);
    }
    Ok(Dataset { version: DATASET_VERSION, config_echo: config.canonical_text(), samples })
}
