//! Evaluation: angular-error reports, quality histograms and overlays.

mod viz;

use std::fmt::Write as _;

use crate::geometry::angular_error;
use crate::netcore::{Checkpoint, Network, ParamSet};
use crate::synthgen::io::encode_dataset;
use crate::synthgen::{Dataset, Domain};
use crate::trainer::{predict_dataset, Mode, Prediction};
use crate::{HgnError, Real, Result};

pub use viz::{arrow_vector, render_overlay, visualize, OverlayColors, ARROW_LENGTH, OVERLAY_SCALE};

/// A network, its parameters and the mode it was trained in.
#[derive(Debug, Clone)]
pub struct Model<T> {
    pub net: Network<T>,
    pub mode: Mode,
    pub params: ParamSet<T>,
}

impl<T: Real> Model<T> {
    pub fn new(net: Network<T>, mode: Mode, params: ParamSet<T>) -> Result<Self> {
        if net.config().heads != mode.heads() {
            return Err(HgnError::Config(format!("network heads do not match mode {mode}")));
        }
        net.check_params(&params)?;
        Ok(Self { net, mode, params })
    }

    pub fn from_checkpoint(ckpt: Checkpoint<T>) -> Result<Self> {
        let mode: Mode = ckpt.mode.parse()?;
        let net = Network::new(ckpt.network)?;
        Self::new(net, mode, ckpt.params)
    }

    /// Rejects datasets whose images do not fit the network input.
    pub fn check_dataset(&self, data: &Dataset) -> Result<()> {
        if data.is_empty() {
            return Err(HgnError::Config("dataset has no samples".into()));
        }
        let (h, w) = (self.net.config().input_height, self.net.config().input_width);
        match data.samples.iter().find(|s| s.height != h || s.width != w) {
            Some(s) => Err(HgnError::Config(format!(
                "dataset image {}x{} does not match network input {h}x{w}",
                s.height, s.width
            ))),
            None => Ok(()),
        }
    }

    pub fn predict_all(&self, data: &Dataset) -> Result<Vec<Prediction<T>>> {
        self.check_dataset(data)?;
        predict_dataset(&self.net, self.mode, &self.params, data)
    }
}

/// 64-bit FNV-1a digest of the dataset's serialized form.
pub fn dataset_digest(data: &Dataset) -> Result<String> {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in encode_dataset(data)? {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    Ok(format!("{h:016x}"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mode: Mode,
    /// Caller-supplied dataset name; `digest` identifies the content.
    pub dataset: String,
    pub digest: String,
    pub count: usize,
    pub mean_deg: f64,
    pub median_deg: f64,
    /// Per-sample angular errors in dataset order.
    pub errors_deg: Vec<f64>,
}

impl EvalReport {
    /// Builds the statistics from per-sample errors. The mean is summed in
    /// sorted order so it does not depend on dataset order.
    pub fn from_errors(mode: Mode, dataset: &str, digest: &str, errors_deg: Vec<f64>) -> Result<Self> {
        if errors_deg.is_empty() {
            return Err(HgnError::Config("cannot evaluate an empty dataset".into()));
        }
        let sorted = sorted(&errors_deg);
        let n = sorted.len();
        let mean_deg = sorted.iter().sum::<f64>() / n as f64;
        let median_deg = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
        Ok(Self { mode, dataset: dataset.to_string(), digest: digest.to_string(), count: n, mean_deg, median_deg, errors_deg })
    }

    /// `key=value` summary lines.
    pub fn to_text(&self) -> String {
        format!(
            "mode={}\ndataset={}\ndigest={}\ncount={}\nmean_angular_deg={:.6}\nmedian_angular_deg={:.6}\n",
            self.mode.tag(),
            self.dataset,
            self.digest,
            self.count,
            self.mean_deg,
            self.median_deg
        )
    }

    /// Tab-separated per-sample dump with a header row.
    pub fn per_sample_tsv(&self) -> String {
        let mut s = String::from("index\terror_deg\n");
        for (i, e) in self.errors_deg.iter().enumerate() {
            let _ = writeln!(s, "{i}\t{e:.9}");
        }
        s
    }
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Angular error of the model's predictions against the dataset labels.
pub fn evaluate<T: Real>(model: &Model<T>, data: &Dataset, name: &str) -> Result<EvalReport> {
    let preds = model.predict_all(data)?;
    let errors = preds
        .iter()
        .zip(&data.samples)
        .map(|(p, s)| angular_error(p.gaze.cast::<f64>(), s.gaze))
        .collect();
    EvalReport::from_errors(model.mode, name, &dataset_digest(data)?, errors)
}

/// Evaluates one model on several named datasets, e.g. the training profile
/// and a shifted one.
pub fn evaluate_profiles<T: Real>(model: &Model<T>, profiles: &[(&str, &Dataset)]) -> Result<Vec<EvalReport>> {
    profiles.iter().map(|(name, d)| evaluate(model, d, name)).collect()
}

/// Count, mean, sample standard deviation and standard error of a group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub stderr: f64,
}

impl GroupStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        let std = var.sqrt();
        Some(Self { count: n, mean, std, stderr: std / (n as f64).sqrt() })
    }
}

/// Difference of two group means and the standard error of that difference
/// (`sqrt(se_a^2 + se_b^2)`).
pub fn mean_gap(a: &GroupStats, b: &GroupStats) -> (f64, f64) {
    (a.mean - b.mean, (a.stderr.powi(2) + b.stderr.powi(2)).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantilePick {
    pub quantile: f64,
    pub index: usize,
    pub quality: f64,
}

/// Distribution of the per-sample quality `e^{-alpha}`.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityHistogram {
    /// Mean of the two per-component values, in dataset order.
    pub qualities: Vec<f64>,
    pub domains: Vec<Domain>,
    /// `bins + 1` edges spanning the observed range.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub synthetic: Option<GroupStats>,
    pub reallike: Option<GroupStats>,
    /// Same split by whether the sample was degraded at generation time.
    pub clean: Option<GroupStats>,
    pub degraded: Option<GroupStats>,
    pub picks: Vec<QuantilePick>,
}

impl QualityHistogram {
    pub fn build(qualities: Vec<f64>, domains: Vec<Domain>, degraded: &[bool], bins: usize, quantiles: &[f64]) -> Result<Self> {
        if qualities.is_empty() {
            return Err(HgnError::Config("cannot build a quality histogram from no samples".into()));
        }
        if bins == 0 {
            return Err(HgnError::Config("histogram needs at least one bin".into()));
        }
        if let Some(q) = quantiles.iter().find(|q| !(0.0..=1.0).contains(*q)) {
            return Err(HgnError::Config(format!("quantile {q} outside [0, 1]")));
        }
        if let Some(q) = qualities.iter().find(|q| !(**q > 0.0 && q.is_finite())) {
            return Err(HgnError::NonFinite { term: "quality".into(), detail: format!("value {q}") });
        }
        let lo = qualities.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = qualities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0usize; bins];
        for &q in &qualities {
            let b = (((q - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }

        // stable sort keeps ties in index order
        let mut order: Vec<usize> = (0..qualities.len()).collect();
        order.sort_by(|&a, &b| qualities[a].total_cmp(&qualities[b]));
        let last = (order.len() - 1) as f64;
        let picks = quantiles
            .iter()
            .map(|&q| {
                let index = order[(q * last).round() as usize];
                QuantilePick { quantile: q, index, quality: qualities[index] }
            })
            .collect();

        let group = |keep: &dyn Fn(usize) -> bool| {
            let v: Vec<f64> = (0..qualities.len()).filter(|&i| keep(i)).map(|i| qualities[i]).collect();
            GroupStats::of(&v)
        };
        Ok(Self {
            synthetic: group(&|i| domains[i] == Domain::Synthetic),
            reallike: group(&|i| domains[i] == Domain::RealLike),
            clean: group(&|i| !degraded[i]),
            degraded: group(&|i| degraded[i]),
            qualities,
            domains,
            edges,
            counts,
            picks,
        })
    }

    /// Tab-separated histogram rows followed by `key=value` group summaries.
    pub fn to_text(&self) -> String {
        let mut s = String::from("bin_lo\tbin_hi\tcount\n");
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(s, "{:.9}\t{:.9}\t{c}", self.edges[i], self.edges[i + 1]);
        }
        s.push('\n');
        for (name, g) in [("synthetic", &self.synthetic), ("reallike", &self.reallike), ("clean", &self.clean), ("degraded", &self.degraded)] {
            match g {
                Some(g) => {
                    let _ = writeln!(
                        s,
                        "{name}.count={}\n{name}.mean={:.9}\n{name}.std={:.9}\n{name}.stderr={:.9}",
                        g.count, g.mean, g.std, g.stderr
                    );
                }
                None => {
                    let _ = writeln!(s, "{name}.count=0");
                }
            }
        }
        s
    }

    /// One line per requested quantile, with the image file it is rendered to.
    pub fn manifest(&self, image_name: impl Fn(&QuantilePick) -> String) -> String {
        let mut s = String::new();
        for p in &self.picks {
            let _ = writeln!(s, "quantile={} index={} quality={:.9} image={}", p.quantile, p.index, p.quality, image_name(p));
        }
        s
    }
}

pub const DEFAULT_BINS: usize = 20;

/// Quality histogram of a model with an uncertainty head.
pub fn quality_report<T: Real>(model: &Model<T>, data: &Dataset, quantiles: &[f64], bins: usize) -> Result<QualityHistogram> {
    if !model.mode.has_uncertainty() {
        return Err(HgnError::Config(format!("mode {} has no uncertainty head", model.mode)));
    }
    let preds = model.predict_all(data)?;
    let qualities = preds
        .iter()
        .map(|p| p.quality().ok_or_else(|| HgnError::Config("checkpoint lacks an uncertainty head".into())))
        .collect::<Result<Vec<_>>>()?;
    let domains = data.samples.iter().map(|s| s.domain).collect();
    let degraded: Vec<bool> = data.samples.iter().map(|s| s.degradation.is_degraded()).collect();
    QualityHistogram::build(qualities, domains, &degraded, bins, quantiles)
}
