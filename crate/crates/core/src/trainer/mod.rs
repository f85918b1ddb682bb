//! Hybrid training: batch mixing across domains, supervision masking, the
//! learning-rate schedule, ADAM updates and per-epoch metrics.

pub mod objective;
pub mod optim;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HgnError, Result};
use crate::geometry::angular_error;
use crate::losses::{total_loss, LossBreakdown, LossParts, LossWeights};
use crate::netcore::{grad_check, GradCheckConfig, GradCheckReport, Heads, Network, NetworkConfig, ParamSet};
use crate::rngs::{purpose, stream};
use crate::scalar::Real;
use crate::synthgen::{augment, AugmentPolicy, Dataset, Domain, Sample};

pub use objective::{predict, BatchMask, GazeUnit, ObjectiveSettings, Prediction, SampleTerms, TermScales};
pub use optim::{AdamConfig, OptimizerState};

/// Training configuration: which heads exist and which losses are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Direct gaze regression.
    #[serde(rename = "B")]
    B,
    /// Direct gaze regression with the uncertainty head.
    #[serde(rename = "B+U")]
    BU,
    /// Landmarks and radius, gaze through the reconstruction.
    #[serde(rename = "HGN")]
    Hgn,
    #[serde(rename = "HGN+UM")]
    HgnUm,
    /// Landmark, radius and gaze heads trained side by side, no reconstruction.
    #[serde(rename = "MTL")]
    Mtl,
    #[serde(rename = "MTL-wo-radius")]
    MtlWoRadius,
    #[serde(rename = "MTL-wo-lmks")]
    MtlWoLmks,
}

impl Mode {
    pub const ALL: [Mode; 7] = [Mode::B, Mode::BU, Mode::Hgn, Mode::HgnUm, Mode::Mtl, Mode::MtlWoRadius, Mode::MtlWoLmks];

    pub fn tag(self) -> &'static str {
        match self {
            Mode::B => "B",
            Mode::BU => "B+U",
            Mode::Hgn => "HGN",
            Mode::HgnUm => "HGN+UM",
            Mode::Mtl => "MTL",
            Mode::MtlWoRadius => "MTL-wo-radius",
            Mode::MtlWoLmks => "MTL-wo-lmks",
        }
    }

    pub fn heads(self) -> Heads {
        let h = |landmarks, radius, uncertainty, direct_gaze| Heads { landmarks, radius, uncertainty, direct_gaze };
        match self {
            Mode::B => h(false, false, false, true),
            Mode::BU => h(false, false, true, true),
            Mode::Hgn => h(true, true, false, false),
            Mode::HgnUm => h(true, true, true, false),
            Mode::Mtl => h(true, true, false, true),
            Mode::MtlWoRadius => h(true, false, false, true),
            Mode::MtlWoLmks => h(false, true, false, true),
        }
    }

    pub fn uses_reconstruction(self) -> bool {
        matches!(self, Mode::Hgn | Mode::HgnUm)
    }

    pub fn has_uncertainty(self) -> bool {
        self.heads().uncertainty
    }

    /// Modes whose losses need synthetic (geometrically labelled) samples.
    pub fn needs_synthetic(self) -> bool {
        let h = self.heads();
        h.landmarks || h.radius
    }

    /// `config` with the heads this mode needs.
    pub fn network_config(self, config: &NetworkConfig) -> NetworkConfig {
        NetworkConfig { heads: self.heads(), ..config.clone() }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Mode {
    type Err = HgnError;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .iter()
            .copied()
            .find(|m| m.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| HgnError::Config(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: Mode,
    pub epochs: usize,
    pub lr: f64,
    /// Epochs from which the learning rate is multiplied by `decay_factor`.
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Synthetic share of each batch.
    pub mix_ratio: f64,
    /// Synthetic-only epochs run before the main phase at the initial rate.
    pub pretrain_epochs: usize,
    pub seed: u64,
    pub gaze_unit: GazeUnit,
    /// Width of the target heatmap Gaussians, in heatmap cells.
    pub heatmap_sigma: f64,
    pub loss: LossWeights,
    pub augment: AugmentPolicy,
    /// Write a checkpoint every this many epochs (0 = only at the end).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::HgnUm,
            epochs: 100,
            lr: 1e-4,
            decay_epochs: vec![20, 60],
            decay_factor: 0.1,
            batch_size: 64,
            weight_decay: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            mix_ratio: 0.5,
            pretrain_epochs: 10,
            seed: 0,
            gaze_unit: GazeUnit::Degrees,
            heatmap_sigma: crate::heatmap::DEFAULT_TARGET_SIGMA,
            loss: LossWeights::default(),
            augment: AugmentPolicy::default(),
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("lr", self.lr), ("decay_factor", self.decay_factor), ("eps", self.eps)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HgnError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.batch_size == 0 {
            return Err(HgnError::Config("batch_size must be >= 1".into()));
        }
        if !(self.weight_decay >= 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(HgnError::Config("invalid optimizer coefficients".into()));
        }
        if !(0.0..=1.0).contains(&self.mix_ratio) {
            return Err(HgnError::Config("mix_ratio must lie in [0, 1]".into()));
        }
        if !(self.heatmap_sigma > 0.0) {
            return Err(HgnError::Config("heatmap_sigma must be positive".into()));
        }
        self.loss.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { beta1: self.beta1, beta2: self.beta2, eps: self.eps, weight_decay: self.weight_decay }
    }

    pub fn objective(&self) -> ObjectiveSettings {
        ObjectiveSettings { weights: self.loss, heatmap_sigma: self.heatmap_sigma, gaze_unit: self.gaze_unit }
    }
}

/// Piecewise-constant schedule; the decay applies from the named epoch on.
pub fn lr_at_epoch(config: &TrainConfig, epoch: usize) -> Result<f64> {
    if epoch >= config.epochs {
        return Err(HgnError::Contract(format!("epoch {epoch} outside 0..{}", config.epochs)));
    }
    let k = config.decay_epochs.iter().filter(|&&e| e <= epoch).count() as i32;
    // dividing by an integral 10^k keeps 1e-4 -> 1e-5 -> 1e-6 correctly rounded
    let inv = 1.0 / config.decay_factor;
    if (inv - inv.round()).abs() < 1e-9 {
        Ok(config.lr / inv.round().powi(k))
    } else {
        Ok(config.lr * config.decay_factor.powi(k))
    }
}

/// One epoch of batches as dataset indices. Each batch holds
/// `ceil(ratio * B)` synthetic and `B - ceil(ratio * B)` real-like samples;
/// every sample is used at most once and the epoch ends when a set is exhausted
/// (the last batch may be short).
pub fn mix_batches<R: Rng>(
    synthetic: &[usize],
    reallike: &[usize],
    ratio: f64,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(HgnError::Config("batch_size must be >= 1".into()));
    }
    let ks = ((ratio * batch_size as f64).ceil() as usize).min(batch_size);
    let kr = batch_size - ks;
    if ks > 0 && synthetic.is_empty() {
        return Err(HgnError::Config("batch mix needs synthetic samples but none are available".into()));
    }
    if kr > 0 && reallike.is_empty() {
        return Err(HgnError::Config("batch mix needs real-like samples but none are available".into()));
    }
    let mut s = synthetic.to_vec();
    let mut r = reallike.to_vec();
    s.shuffle(rng);
    r.shuffle(rng);
    let count = |n: usize, k: usize| if k == 0 { usize::MAX } else { n.div_ceil(k) };
    let batches = count(s.len(), ks).min(count(r.len(), kr));
    Ok((0..batches)
        .map(|b| {
            let mut batch: Vec<usize> = s.iter().skip(b * ks).take(ks).copied().collect();
            batch.extend(r.iter().skip(b * kr).take(kr));
            batch
        })
        .collect())
}

/// Loss and summed parameter gradient of one batch, without an update.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradient<T> {
    pub total: f64,
    pub grads: ParamSet<T>,
    pub breakdown: LossBreakdown<f64>,
}

/// Evaluates the batch objective. Per-sample gradients may be computed in
/// parallel; they are summed in batch order so the result does not depend
/// on the thread count.
pub fn batch_gradient<T: Real>(
    net: &Network<T>,
    config: &TrainConfig,
    params: &ParamSet<T>,
    batch: &[(Vec<T>, &Sample)],
) -> Result<BatchGradient<T>> {
    let mode = config.mode;
    let settings = config.objective();
    let masks: Vec<BatchMask> = batch.iter().map(|(_, s)| BatchMask::for_sample(mode, s.domain)).collect();
    let scales = TermScales::for_batch(&config.loss, &masks);

    let per_sample: Vec<(ParamSet<T>, SampleTerms, f64)> = batch
        .par_iter()
        .zip(masks.par_iter())
        .map(|((input, sample), &mask)| {
            objective::sample_gradient(net, mode, params, input, sample, mask, &scales, &settings)
        })
        .collect::<Result<_>>()?;

    let mut grads = params.zeros_like();
    let mut total = 0.0;
    let mut sums = [0.0f64; 3];
    let mut counts = [0usize; 3];
    let mut residuals = Vec::with_capacity(batch.len());
    for (g, terms, value) in &per_sample {
        grads.add_scaled(g, T::one())?;
        total += value;
        for (k, v) in [terms.heatmap, terms.radius, terms.gaze].into_iter().enumerate() {
            if let Some(v) = v {
                sums[k] += v;
                counts[k] += 1;
            }
        }
        if let Some(r) = terms.residual {
            residuals.push(r);
        }
    }
    for p in &grads.params {
        if let Some(v) = p.data.iter().find(|v| !v.is_finite()) {
            return Err(HgnError::NonFinite { term: "gradient".into(), detail: format!("{} has {v}", p.name) });
        }
    }
    let mean = |k: usize| if counts[k] == 0 { None } else { Some(sums[k] / counts[k] as f64) };
    let parts = LossParts { heatmap: mean(0), radius: mean(1), gaze: mean(2) };
    let mut breakdown = total_loss(parts, &config.loss, mode.has_uncertainty());
    breakdown.gaze_residuals = residuals;
    Ok(BatchGradient { total, grads, breakdown })
}

/// One ADAM step on `batch` (network inputs paired with their samples).
pub fn train_step<T: Real>(
    net: &Network<T>,
    config: &TrainConfig,
    params: &mut ParamSet<T>,
    opt: &mut OptimizerState<T>,
    batch: &[(Vec<T>, &Sample)],
    lr: f64,
) -> Result<LossBreakdown<f64>> {
    let bg = batch_gradient(net, config, params, batch)?;
    opt.update(params, &bg.grads, lr, &config.adam())?;
    Ok(bg.breakdown)
}

/// Finite-difference check of the full batch objective of `config.mode`
/// on `samples` (unaugmented inputs), in `f64`.
pub fn gradcheck_objective(
    net_config: &NetworkConfig,
    config: &TrainConfig,
    samples: &[Sample],
    check: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let net = Network::<f64>::new(config.mode.network_config(net_config))?;
    let params = net.init_params(config.seed);
    let batch: Vec<(Vec<f64>, &Sample)> =
        samples.iter().map(|s| (net.config().prepare_input::<f64>(&s.image), s)).collect();
    grad_check(
        &params,
        |p| {
            let bg = batch_gradient(&net, config, p, &batch)?;
            Ok((bg.total, bg.grads))
        },
        check,
    )
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub heatmap: f64,
    pub radius: f64,
    /// `L_gaze`, or `L_UM` when the uncertainty head is trained.
    pub gaze: f64,
    pub total: f64,
    pub val_angular_deg: Option<f64>,
    pub mean_quality_synth: Option<f64>,
    pub mean_quality_reallike: Option<f64>,
}

fn opt_field(v: Option<f64>) -> String {
    v.map_or_else(|| "na".to_string(), |v| format!("{v:.6}"))
}

impl fmt::Display for EpochMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} lr={:e} L_h={:.6} L_r={:.6} L_gaze={:.6} L_total={:.6} val_angular_deg={} mean_quality_synth={} mean_quality_reallike={}",
            self.epoch,
            self.lr,
            self.heatmap,
            self.radius,
            self.gaze,
            self.total,
            opt_field(self.val_angular_deg),
            opt_field(self.mean_quality_synth),
            opt_field(self.mean_quality_reallike),
        )
    }
}

/// Gaze error and quality statistics of a parameter set on a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub errors_deg: Vec<f64>,
    pub qualities: Vec<Option<f64>>,
    pub mean_angular_deg: f64,
    pub mean_quality_synth: Option<f64>,
    pub mean_quality_reallike: Option<f64>,
}

/// Runs inference on every sample, in parallel, results in dataset order.
pub fn predict_dataset<T: Real>(
    net: &Network<T>,
    mode: Mode,
    params: &ParamSet<T>,
    data: &Dataset,
) -> Result<Vec<Prediction<T>>> {
    data.samples
        .par_iter()
        .map(|s| predict(net, mode, params, &net.config().prepare_input::<T>(&s.image)))
        .collect()
}

pub fn validate<T: Real>(net: &Network<T>, mode: Mode, params: &ParamSet<T>, data: &Dataset) -> Result<Validation> {
    if data.is_empty() {
        return Err(HgnError::Config("validation dataset is empty".into()));
    }
    let preds = predict_dataset(net, mode, params, data)?;
    let errors_deg: Vec<f64> = preds
        .iter()
        .zip(&data.samples)
        .map(|(p, s)| angular_error(p.gaze.cast::<f64>(), s.gaze))
        .collect();
    let qualities: Vec<Option<f64>> = preds.iter().map(|p| p.quality()).collect();
    let domain_mean = |d: Domain| {
        let v: Vec<f64> = qualities
            .iter()
            .zip(&data.samples)
            .filter(|(_, s)| s.domain == d)
            .filter_map(|(q, _)| *q)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    Ok(Validation {
        mean_angular_deg: errors_deg.iter().sum::<f64>() / errors_deg.len() as f64,
        mean_quality_synth: domain_mean(Domain::Synthetic),
        mean_quality_reallike: domain_mean(Domain::RealLike),
        errors_deg,
        qualities,
    })
}

/// Network input for sample `index` in global epoch `epoch`, augmented
/// with a stream that depends only on `(seed, epoch, index)`.
pub fn training_input<T: Real>(
    net: &Network<T>,
    config: &TrainConfig,
    sample: &Sample,
    epoch: usize,
    index: usize,
) -> Vec<T> {
    let mut rng = stream(config.seed, purpose::AUGMENT, ((epoch as u64) << 32) | index as u64);
    let img = augment(&sample.image_unit(), sample.height, sample.width, &mut rng, &config.augment);
    net.config().prepare_unit_input(&img)
}

/// Progress callback payload.
pub struct EpochEvent<'a, T> {
    pub pretraining: bool,
    pub metrics: &'a EpochMetrics,
    pub params: &'a ParamSet<T>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: ParamSet<T>,
    pub metrics: Vec<EpochMetrics>,
    pub pretrain_metrics: Vec<EpochMetrics>,
    pub optimizer: OptimizerState<T>,
}

/// Full training run: optional synthetic-only pretraining, then the hybrid
/// phase. `on_epoch` sees every finished epoch (both phases).
pub fn train<T: Real>(
    net: &Network<T>,
    config: &TrainConfig,
    train_set: &Dataset,
    val_set: Option<&Dataset>,
    mut on_epoch: impl FnMut(&EpochEvent<T>) -> Result<()>,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let mode = config.mode;
    if net.config().heads != mode.heads() {
        return Err(HgnError::Config(format!("network heads do not match mode {mode}")));
    }
    let synthetic = train_set.indices_of(Domain::Synthetic);
    let reallike = train_set.indices_of(Domain::RealLike);
    if train_set.is_empty() {
        return Err(HgnError::Config("training dataset is empty".into()));
    }
    if mode.needs_synthetic() && synthetic.is_empty() {
        return Err(HgnError::Config(format!("mode {mode} needs synthetic samples")));
    }
    if config.pretrain_epochs > 0 && synthetic.is_empty() {
        return Err(HgnError::Config("pretraining needs synthetic samples".into()));
    }
    let (h, w) = (net.config().input_height, net.config().input_width);
    if let Some(s) = train_set.samples.iter().chain(val_set.iter().flat_map(|v| v.samples.iter())).find(|s| s.height != h || s.width != w) {
        return Err(HgnError::Config(format!("dataset image {}x{} does not match network input {h}x{w}", s.height, s.width)));
    }
    // a pure-synthetic or pure-real-like set falls back to whatever is present
    let ratio = if reallike.is_empty() {
        1.0
    } else if synthetic.is_empty() {
        0.0
    } else {
        config.mix_ratio
    };

    let mut params = net.init_params(config.seed);
    let mut opt = OptimizerState::new(&params);
    let mut pretrain_metrics = Vec::new();
    let mut metrics = Vec::new();
    let total_epochs = config.pretrain_epochs + config.epochs;
    for global in 0..total_epochs {
        let pretraining = global < config.pretrain_epochs;
        let (epoch, lr, mix) = if pretraining {
            (global, config.lr, 1.0)
        } else {
            let e = global - config.pretrain_epochs;
            (e, lr_at_epoch(config, e)?, ratio)
        };
        let mut shuffle = stream(config.seed, purpose::SHUFFLE, global as u64);
        let batches = mix_batches(&synthetic, &reallike, mix, config.batch_size, &mut shuffle)?;

        let mut sums = [0.0f64; 4];
        let mut n_batches = 0usize;
        for batch in &batches {
            let inputs: Vec<(Vec<T>, &Sample)> = batch
                .par_iter()
                .map(|&i| {
                    let s = &train_set.samples[i];
                    (training_input(net, config, s, global, i), s)
                })
                .collect();
            let b = train_step(net, config, &mut params, &mut opt, &inputs, lr)?;
            for (acc, v) in sums.iter_mut().zip([b.heatmap_term, b.radius_term, b.gaze_term, b.total]) {
                *acc += v;
            }
            n_batches += 1;
        }
        let avg = |k: usize| if n_batches == 0 { 0.0 } else { sums[k] / n_batches as f64 };
        let val = match val_set {
            Some(v) => Some(validate(net, mode, &params, v)?),
            None => None,
        };
        let m = EpochMetrics {
            epoch: epoch + 1,
            lr,
            heatmap: avg(0),
            radius: avg(1),
            gaze: avg(2),
            total: avg(3),
            val_angular_deg: val.as_ref().map(|v| v.mean_angular_deg),
            mean_quality_synth: val.as_ref().and_then(|v| v.mean_quality_synth),
            mean_quality_reallike: val.as_ref().and_then(|v| v.mean_quality_reallike),
        };
        on_epoch(&EpochEvent { pretraining, metrics: &m, params: &params })?;
        if pretraining {
            pretrain_metrics.push(m);
        } else {
            metrics.push(m);
        }
    }
    Ok(TrainOutcome { params, metrics, pretrain_metrics, optimizer: opt })
}
