//! Per-sample loss graph for every training mode, and inference-time gaze
//! prediction.

use serde::{Deserialize, Serialize};

use super::Mode;
use crate::error::{HgnError, Result};
use crate::geometry::{reconstruct_gaze, GazeAngles, LandmarkSet, NUM_LANDMARKS};
use crate::heatmap::{render_target, soft_argmax, spatial_softmax};
use crate::losses::LossWeights;
use crate::netcore::{Network, OutputVars, ParamSet, Tape, Var};
use crate::scalar::Real;
use crate::synthgen::{Domain, Sample};

/// Which loss terms a sample is supervised with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchMask {
    pub heatmaps: bool,
    pub radius: bool,
    pub gaze: bool,
}

impl BatchMask {
    /// Synthetic samples carry full geometric supervision; real-like ones gaze only.
    pub fn for_domain(domain: Domain) -> Self {
        match domain {
            Domain::Synthetic => Self { heatmaps: true, radius: true, gaze: true },
            Domain::RealLike => Self { heatmaps: false, radius: false, gaze: true },
        }
    }

    /// Restricts the mask to the terms a mode actually trains.
    pub fn for_sample(mode: Mode, domain: Domain) -> Self {
        let m = Self::for_domain(domain);
        let heads = mode.heads();
        Self { heatmaps: m.heatmaps && heads.landmarks, radius: m.radius && heads.radius, gaze: m.gaze }
    }
}

/// Unit in which gaze residuals enter the gaze and uncertainty losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GazeUnit {
    Radians,
    Degrees,
}

impl GazeUnit {
    pub fn scale(self) -> f64 {
        match self {
            GazeUnit::Radians => 1.0,
            GazeUnit::Degrees => 180.0 / std::f64::consts::PI,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveSettings {
    pub weights: LossWeights,
    pub heatmap_sigma: f64,
    pub gaze_unit: GazeUnit,
}

/// Multipliers applied to each term of one sample: `beta_k / N_k`, where
/// `N_k` counts the samples of the batch supervised with term `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermScales {
    pub heatmap: f64,
    pub radius: f64,
    pub gaze: f64,
}

impl TermScales {
    pub fn for_batch(weights: &LossWeights, masks: &[BatchMask]) -> Self {
        let per = |beta: f64, n: usize| if n == 0 { 0.0 } else { beta / n as f64 };
        Self {
            heatmap: per(weights.beta1, masks.iter().filter(|m| m.heatmaps).count()),
            radius: per(weights.beta2, masks.iter().filter(|m| m.radius).count()),
            gaze: per(weights.beta3, masks.iter().filter(|m| m.gaze).count()),
        }
    }
}

/// Unweighted per-sample term values (`None` when masked out).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SampleTerms {
    pub heatmap: Option<f64>,
    pub radius: Option<f64>,
    /// `L_gaze`, or `L_UM` when the mode has an uncertainty head.
    pub gaze: Option<f64>,
    /// Absolute gaze residuals in the loss unit.
    pub residual: Option<[f64; 2]>,
}

fn landmarks_as<T: Real>(lm: &LandmarkSet<f64>) -> LandmarkSet<T> {
    let mut points = [[T::zero(); 2]; NUM_LANDMARKS];
    for (d, s) in points.iter_mut().zip(&lm.points) {
        *d = [T::lit(s[0]), T::lit(s[1])];
    }
    LandmarkSet { points }
}

fn named<T>(r: Result<T>, term: &str) -> Result<T> {
    r.map_err(|e| match e {
        HgnError::NonFinite { detail, .. } => HgnError::NonFinite { term: term.into(), detail },
        other => other,
    })
}

fn check_finite(term: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(HgnError::NonFinite { term: term.into(), detail: format!("value {v}") })
    }
}

/// Attaches the loss of one sample to `tape` and returns the scalar to
/// differentiate together with the unweighted term values.
#[allow(clippy::too_many_arguments)]
pub fn sample_objective<T: Real>(
    net: &Network<T>,
    mode: Mode,
    tape: &mut Tape<T>,
    out: &OutputVars,
    sample: &Sample,
    mask: BatchMask,
    scales: &TermScales,
    settings: &ObjectiveSettings,
) -> Result<(Option<Var>, SampleTerms)> {
    let cfg = net.config();
    let mut terms = SampleTerms::default();
    let mut weighted: Vec<(Var, T)> = Vec::new();

    let probs = match out.heatmap_logits {
        Some(logits) if mask.heatmaps || mode.uses_reconstruction() => Some(named(tape.spatial_softmax(logits), "L_h")?),
        _ => None,
    };

    if mask.heatmaps {
        let probs = probs.ok_or_else(|| HgnError::Contract("heatmap supervision without a landmark head".into()))?;
        let (hh, hw) = cfg.heatmap_resolution();
        let target = render_target(
            &landmarks_as::<T>(&sample.landmarks),
            hh,
            hw,
            T::lit(cfg.heatmap_scale()),
            T::lit(settings.heatmap_sigma),
        );
        let l = named(tape.l1(probs, &target.stack.data), "L_h")?;
        terms.heatmap = Some(check_finite("L_h", tape.scalar(l)?.as_f64())?);
        weighted.push((l, T::lit(scales.heatmap)));
    }

    if mask.radius {
        let r = out.radius.ok_or_else(|| HgnError::Contract("radius supervision without a radius head".into()))?;
        let l = named(tape.l1(r, &[T::lit(sample.radius)]), "L_r")?;
        terms.radius = Some(check_finite("L_r", tape.scalar(l)?.as_f64())?);
        weighted.push((l, T::lit(scales.radius)));
    }

    if mask.gaze {
        let gaze_term = if mode.has_uncertainty() { "L_UM" } else { "L_gaze" };
        let pred = if mode.uses_reconstruction() {
            let probs = probs.ok_or_else(|| HgnError::Contract("reconstruction needs a landmark head".into()))?;
            let r = out.radius.ok_or_else(|| HgnError::Contract("reconstruction needs a radius head".into()))?;
            let pts = named(tape.soft_argmax(probs, T::lit(cfg.heatmap_scale())), gaze_term)?;
            named(tape.reconstruct(pts, r), gaze_term)?
        } else {
            out.gaze.ok_or_else(|| HgnError::Contract("mode needs a direct gaze head".into()))?
        };
        let unit = settings.gaze_unit.scale();
        let scaled = tape.scale(pred, T::lit(unit))?;
        let gt = [T::lit(sample.gaze.theta * unit), T::lit(sample.gaze.phi * unit)];
        let resid = named(tape.abs_diff(scaled, &gt), gaze_term)?;
        let rv = &tape.value(resid)?.data;
        terms.residual = Some([rv[0].as_f64(), rv[1].as_f64()]);
        let l = if mode.has_uncertainty() {
            let alpha = out.alpha.ok_or_else(|| HgnError::Contract("mode needs an uncertainty head".into()))?;
            named(tape.uncertainty_loss(resid, alpha), gaze_term)?
        } else {
            tape.sum(resid)?
        };
        terms.gaze = Some(check_finite(gaze_term, tape.scalar(l)?.as_f64())?);
        weighted.push((l, T::lit(scales.gaze)));
    }

    if weighted.is_empty() {
        return Ok((None, terms));
    }
    Ok((Some(named(tape.weighted_sum(&weighted), "L_total")?), terms))
}

/// Forward + backward of one sample; returns its parameter gradient.
#[allow(clippy::too_many_arguments)]
pub fn sample_gradient<T: Real>(
    net: &Network<T>,
    mode: Mode,
    params: &ParamSet<T>,
    input: &[T],
    sample: &Sample,
    mask: BatchMask,
    scales: &TermScales,
    settings: &ObjectiveSettings,
) -> Result<(ParamSet<T>, SampleTerms, f64)> {
    let mut tape = Tape::new();
    let out = net.forward(params, &mut tape, input)?;
    let (total, terms) = sample_objective(net, mode, &mut tape, &out, sample, mask, scales, settings)?;
    let mut grads = params.zeros_like();
    let Some(total) = total else {
        return Ok((grads, terms, 0.0));
    };
    let value = tape.scalar(total)?.as_f64();
    let g = named(tape.backward(total), "backward")?;
    net.accumulate_grads(&tape, &g, &mut grads)?;
    Ok((grads, terms, value))
}

/// Inference result for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub gaze: GazeAngles<T>,
    pub alpha: Option<[T; 2]>,
    pub landmarks: Option<LandmarkSet<T>>,
    pub radius: Option<T>,
}

impl<T: Real> Prediction<T> {
    /// Mean of the two per-component `e^{-alpha}` values.
    pub fn quality(&self) -> Option<f64> {
        self.alpha.map(|a| crate::losses::UncertaintyOutput { alpha: a }.mean_quality().as_f64())
    }
}

/// Predicts gaze the way `mode` is trained: through landmarks and the
/// reconstruction in HGN modes, from the direct head otherwise.
pub fn predict<T: Real>(net: &Network<T>, mode: Mode, params: &ParamSet<T>, input: &[T]) -> Result<Prediction<T>> {
    let out = net.predict(params, input)?;
    let landmarks = out.heatmap_logits.as_ref().map(|logits| {
        let d = soft_argmax(&spatial_softmax(logits));
        LandmarkSet { points: d.points }
    });
    let gaze = if mode.uses_reconstruction() {
        let lm = landmarks.ok_or_else(|| HgnError::Config("checkpoint lacks a landmark head".into()))?;
        let r = out.radius.ok_or_else(|| HgnError::Config("checkpoint lacks a radius head".into()))?;
        reconstruct_gaze(lm.iris_center(), lm.eyeball_center(), r)?.angles
    } else {
        out.gaze.ok_or_else(|| HgnError::Config("checkpoint lacks a direct gaze head".into()))?
    };
    Ok(Prediction { gaze, alpha: out.alpha, landmarks, radius: out.radius })
}
