//! Loss terms and their composition.
//!
//! Every function returns its value together with the gradient the network
//! needs; batch reduction (mean over supervised samples) happens in the
//! trainer.

use serde::{Deserialize, Serialize};

use crate::geometry::GazeAngles;
use crate::heatmap::sign;
use crate::scalar::Real;

/// Log-variance predictions are clamped to this range before exponentiation.
pub const ALPHA_CLAMP: f64 = 10.0;

/// Weights of the heatmap, radius and gaze terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { beta1: 5.0, beta2: 1.0, beta3: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> crate::Result<()> {
        let all = [self.beta1, self.beta2, self.beta3];
        if all.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(crate::HgnError::Config(format!("loss weights must be >= 0: {all:?}")));
        }
        Ok(())
    }
}

/// A scalar loss and its derivative with respect to the prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarLoss<T> {
    pub value: T,
    pub grad: T,
}

/// `|r_pred - r_gt|`.
pub fn radius_loss<T: Real>(r_pred: T, r_gt: T) -> ScalarLoss<T> {
    let d = r_pred - r_gt;
    ScalarLoss { value: d.abs(), grad: sign(d) }
}

/// Per-component absolute gaze residuals and the L1 sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeResidual<T> {
    /// `|d theta|`, `|d phi|`.
    pub residuals: [T; 2],
    /// Derivative of each residual with respect to the predicted angle.
    pub grad_pred: [T; 2],
    pub value: T,
}

pub fn gaze_loss<T: Real>(gt: GazeAngles<T>, pred: GazeAngles<T>) -> GazeResidual<T> {
    let d = [pred.theta - gt.theta, pred.phi - gt.phi];
    let residuals = [d[0].abs(), d[1].abs()];
    GazeResidual {
        residuals,
        grad_pred: [sign(d[0]), sign(d[1])],
        value: residuals[0] + residuals[1],
    }
}

/// Predicted log-variances with the derived per-component quality `e^-alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyOutput<T> {
    pub alpha: [T; 2],
}

impl<T: Real> UncertaintyOutput<T> {
    pub fn quality(&self) -> [T; 2] {
        let lim = T::lit(ALPHA_CLAMP);
        self.alpha.map(|a| (-a.max(-lim).min(lim)).exp())
    }

    /// Single per-sample quality scalar: mean of the two components.
    pub fn mean_quality(&self) -> T {
        let q = self.quality();
        (q[0] + q[1]) / T::lit(2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyLoss<T> {
    pub value: T,
    pub grad_residual: [T; 2],
    pub grad_alpha: [T; 2],
}

/// `mean_k [ e^{-alpha_k} (l_k - 1/2) + alpha_k / 2 ]` with alpha clamped to
/// `[-10, 10]`; the clamp passes zero gradient to alpha.
pub fn uncertainty_gaze_loss<T: Real>(residual: [T; 2], alpha: [T; 2]) -> UncertaintyLoss<T> {
    let half = T::lit(0.5);
    let lim = T::lit(ALPHA_CLAMP);
    let mut value = T::zero();
    let mut grad_residual = [T::zero(); 2];
    let mut grad_alpha = [T::zero(); 2];
    for k in 0..2 {
        let inside = alpha[k] >= -lim && alpha[k] <= lim;
        let a = alpha[k].max(-lim).min(lim);
        let w = (-a).exp();
        value += w * (residual[k] - half) + a * half;
        grad_residual[k] = w * half;
        grad_alpha[k] = if inside { (-w * (residual[k] - half) + half) * half } else { T::zero() };
    }
    UncertaintyLoss { value: value * half, grad_residual, grad_alpha }
}

/// Gaussian negative log-likelihood with `alpha = log sigma^2`, the
/// regression form from which the uncertainty loss is motivated. Kept for
/// comparing minimizer structure in tests.
pub fn gaussian_nll_reference<T: Real>(residual: T, alpha: T) -> T {
    let half = T::lit(0.5);
    residual * residual * (-alpha).exp() * half + alpha * half + (T::TAU()).ln() * half
}

/// Per-term batch values before weighting. `None` means no supervised
/// sample contributed to that term.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts<T> {
    pub heatmap: Option<T>,
    pub radius: Option<T>,
    /// Plain L1 gaze term, or the uncertainty term when it is active.
    pub gaze: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossBreakdown<T> {
    pub heatmap_term: T,
    pub radius_term: T,
    /// Holds the uncertainty loss when `uncertainty_active` is set.
    pub gaze_term: T,
    pub uncertainty_active: bool,
    pub total: T,
    pub gaze_residuals: Vec<[T; 2]>,
}

/// `beta1 L_h + beta2 L_r + beta3 L_gaze`; with the uncertainty module on,
/// its loss takes the place of `L_gaze` under `beta3`. Masked-out terms
/// contribute 0.
pub fn total_loss<T: Real>(
    parts: LossParts<T>,
    weights: &LossWeights,
    uncertainty_active: bool,
) -> LossBreakdown<T> {
    let h = parts.heatmap.unwrap_or_else(T::zero);
    let r = parts.radius.unwrap_or_else(T::zero);
    let g = parts.gaze.unwrap_or_else(T::zero);
    let total = T::lit(weights.beta1) * h + T::lit(weights.beta2) * r + T::lit(weights.beta3) * g;
    LossBreakdown {
        heatmap_term: h,
        radius_term: r,
        gaze_term: g,
        uncertainty_active,
        total,
        gaze_residuals: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    /// Golden-section search on a unimodal function over `[lo, hi]`.
    fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = hi - r * (hi - lo);
        let mut d = lo + r * (hi - lo);
        while hi - lo > 1e-12 {
            if f(c) < f(d) {
                hi = d;
            } else {
                lo = c;
            }
            c = hi - r * (hi - lo);
            d = lo + r * (hi - lo);
        }
        0.5 * (lo + hi)
    }

    /// Coarse grid scan followed by golden-section refinement in the best cell.
    fn grid_golden_min(f: impl Fn(f64) -> f64 + Copy, lo: f64, hi: f64) -> f64 {
        let n = 2000;
        let step = (hi - lo) / n as f64;
        let best = (0..=n)
            .map(|i| lo + step * i as f64)
            .min_by(|a, b| f(*a).partial_cmp(&f(*b)).unwrap())
            .unwrap();
        golden_min(f, (best - step).max(lo), (best + step).min(hi))
    }

    #[test]
    fn radius_loss_examples() {
        assert_eq!(radius_loss(10.0, 10.0), ScalarLoss { value: 0.0, grad: 0.0 });
        assert_eq!(radius_loss(12.0, 10.0), ScalarLoss { value: 2.0, grad: 1.0 });
        assert_eq!(radius_loss(3.5, 7.0f64).value, radius_loss(7.0, 3.5f64).value);
    }

    #[test]
    fn gaze_loss_examples() {
        let a = GazeAngles { theta: 0.2, phi: -0.1 };
        assert_eq!(gaze_loss(a, a).value, 0.0);
        let b = GazeAngles { theta: 0.3, phi: -0.3 };
        let l = gaze_loss(a, b);
        assert_abs_diff_eq!(l.value, 0.3, epsilon = 1e-15);
        assert_eq!(l.grad_pred, [1.0, -1.0]);
    }

    #[test]
    fn total_loss_examples() {
        let w = LossWeights::default();
        let parts = LossParts { heatmap: Some(1.0), radius: Some(1.0), gaze: Some(1.0) };
        assert_eq!(total_loss(parts, &w, false).total, 7.0);
        assert_eq!(total_loss(LossParts::<f64>::default(), &w, false).total, 0.0);
        let real_like = LossParts { heatmap: None, radius: None, gaze: Some(0.4) };
        let b = total_loss(real_like, &w, false);
        assert_eq!(b.total, w.beta3 * 0.4);
        assert_eq!((b.heatmap_term, b.radius_term), (0.0, 0.0));
    }

    #[test]
    fn uncertainty_loss_examples() {
        let l = uncertainty_gaze_loss([1.0, 1.0], [0.0, 0.0]);
        assert_abs_diff_eq!(l.value, 0.5, epsilon = 1e-15);

        let f = |a: f64| uncertainty_gaze_loss([1.5, 1.5], [a, a]).value;
        let a_star = grid_golden_min(f, -10.0, 10.0);
        assert_abs_diff_eq!(a_star, 2f64.ln(), epsilon = 1e-6);

        // l = 1/2: the loss is alpha/2 and decreases toward the lower clamp
        let at = |a: f64| uncertainty_gaze_loss([0.5, 0.5], [a, a]).value;
        assert_abs_diff_eq!(at(3.0), 1.5, epsilon = 1e-15);
        assert!(grid_golden_min(at, -10.0, 10.0) < -10.0 + 1e-6);
    }

    #[test]
    fn uncertainty_clamp_zeroes_alpha_gradient() {
        let l = uncertainty_gaze_loss::<f64>([2.0, 2.0], [-12.0, 11.0]);
        assert_eq!(l.grad_alpha, [0.0, 0.0]);
        let clamped = uncertainty_gaze_loss([2.0, 2.0], [-10.0, 10.0]);
        assert_eq!(l.value, clamped.value);
        assert!(l.value.is_finite());
    }

    #[test]
    fn gaussian_nll_examples() {
        assert_abs_diff_eq!(gaussian_nll_reference(0.0, 0.0), 0.918_938_533_204_672_7, epsilon = 1e-15);
        for r in [0.3f64, 1.0, 2.5] {
            let a = grid_golden_min(|a| gaussian_nll_reference(r, a), -10.0, 10.0);
            assert_abs_diff_eq!(a, (r * r).ln(), epsilon = 1e-6);
        }
        assert!(gaussian_nll_reference(0.5, 0.3) < gaussian_nll_reference(0.7, 0.3));
    }

    proptest! {
        #[test]
        fn alpha_gradient_matches_finite_differences(
            l0 in 0.0f64..5.0, l1 in 0.0f64..5.0, a0 in -5.0f64..5.0, a1 in -5.0f64..5.0,
        ) {
            let g = uncertainty_gaze_loss([l0, l1], [a0, a1]);
            let h = 1e-6;
            let f = |a: [f64; 2]| uncertainty_gaze_loss([l0, l1], a).value;
            let fd0 = (f([a0 + h, a1]) - f([a0 - h, a1])) / (2.0 * h);
            let fd1 = (f([a0, a1 + h]) - f([a0, a1 - h])) / (2.0 * h);
            prop_assert!((fd0 - g.grad_alpha[0]).abs() < 1e-6);
            prop_assert!((fd1 - g.grad_alpha[1]).abs() < 1e-6);
            let fr = |l: [f64; 2]| uncertainty_gaze_loss(l, [a0, a1]).value;
            let fdr = (fr([l0 + h, l1]) - fr([l0 - h, l1])) / (2.0 * h);
            prop_assert!((fdr - g.grad_residual[0]).abs() < 1e-6);
        }

        #[test]
        fn residual_sensitivity_equals_quality(l in 0.6f64..5.0, a in -5.0f64..5.0) {
            // per component d/dl = e^{-alpha} (halved by the two-component mean)
            let g = uncertainty_gaze_loss([l, l], [a, a]);
            prop_assert!((2.0 * g.grad_residual[0] - (-a).exp()).abs() < 1e-12);
        }

        #[test]
        fn interior_minimizer(l in 0.55f64..6.0) {
            let a_star = grid_golden_min(|a| uncertainty_gaze_loss([l, l], [a, a]).value, -10.0, 10.0);
            prop_assert!((a_star - (2.0 * l - 1.0).ln()).abs() < 1e-6);
        }

        #[test]
        fn total_is_exact_weighted_sum(h in 0.0f64..20.0, r in 0.0f64..10.0, g in 0.0f64..3.0) {
            let w = LossWeights::default();
            let b = total_loss(LossParts { heatmap: Some(h), radius: Some(r), gaze: Some(g) }, &w, false);
            prop_assert!((b.total - (5.0 * h + r + g)).abs() <= 1e-12);
        }
    }
}
