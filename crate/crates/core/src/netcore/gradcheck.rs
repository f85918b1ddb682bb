//! Central finite-difference check of analytic parameter gradients.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradCheckConfig {
    /// Number of scalar parameters probed (all of them if the set is smaller).
    pub samples: usize,
    pub step: f64,
    pub rel_tol: f64,
    /// Absolute differences below this pass regardless of the relative test.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { samples: 200, step: 1e-6, rel_tol: 1e-3, abs_floor: 1e-6, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Largest deviations first.
    pub worst: Vec<GradCheckEntry>,
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "status={}", if self.passed { "pass" } else { "fail" })?;
        writeln!(f, "checked={}", self.checked)?;
        writeln!(f, "max_deviation={:.3e}", self.max_deviation)?;
        writeln!(f, "tolerance={:.3e}", self.tolerance)?;
        for e in &self.worst {
            writeln!(
                f,
                "worst param={} index={} analytic={:.6e} numeric={:.6e} deviation={:.3e}",
                e.param, e.index, e.analytic, e.numeric, e.deviation
            )?;
        }
        Ok(())
    }
}

/// Relative deviation with an absolute floor: differences at or below
/// `abs_floor` count as zero.
pub fn deviation(analytic: f64, numeric: f64, abs_floor: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= abs_floor {
        0.0
    } else {
        diff / analytic.abs().max(numeric.abs())
    }
}

/// Compares the gradient returned by `eval` against central differences of
/// the loss it returns. `eval` maps a parameter set to `(loss, gradient)`.
pub fn grad_check<F>(params: &ParamSet<f64>, mut eval: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: FnMut(&ParamSet<f64>) -> Result<(f64, ParamSet<f64>)>,
{
    let (_, grad) = eval(params)?;
    let mut coords: Vec<(usize, usize)> = params
        .params
        .iter()
        .enumerate()
        .flat_map(|(s, p)| (0..p.data.len()).map(move |i| (s, i)))
        .collect();
    if coords.len() > cfg.samples {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        coords.shuffle(&mut rng);
        coords.truncate(cfg.samples);
        coords.sort_unstable();
    }

    let mut probe = params.clone();
    let mut entries = Vec::with_capacity(coords.len());
    for &(slot, i) in &coords {
        let orig = probe.params[slot].data[i];
        probe.params[slot].data[i] = orig + cfg.step;
        let (up, _) = eval(&probe)?;
        probe.params[slot].data[i] = orig - cfg.step;
        let (down, _) = eval(&probe)?;
        probe.params[slot].data[i] = orig;
        let numeric = (up - down) / (2.0 * cfg.step);
        let analytic = grad.params[slot].data[i];
        entries.push(GradCheckEntry {
            param: params.params[slot].name.clone(),
            index: i,
            analytic,
            numeric,
            deviation: deviation(analytic, numeric, cfg.abs_floor),
        });
    }
    entries.sort_by(|a, b| b.deviation.total_cmp(&a.deviation));
    let max_deviation = entries.first().map_or(0.0, |e| e.deviation);
    let checked = entries.len();
    entries.truncate(10);
    Ok(GradCheckReport {
        checked,
        max_deviation,
        tolerance: cfg.rel_tol,
        passed: max_deviation <= cfg.rel_tol,
        worst: entries,
    })
}
