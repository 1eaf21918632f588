//! Central finite-difference check of `∇θ log π(a | x; θ)`.

use super::mlp::MlpParams;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Partials failing both the relative and the absolute tolerance.
    pub failures: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn merge(&mut self, other: &GradCheckReport) {
        self.checked += other.checked;
        self.failures += other.failures;
        self.max_abs_error = self.max_abs_error.max(other.max_abs_error);
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
    }
}

fn log_prob(params: &MlpParams, x: &[f64], action: usize) -> Result<f64> {
    Ok(params.forward(x)?[action].ln())
}

/// Compares every analytic partial with `(f(θ+h) - f(θ-h)) / 2h`. A partial
/// passes if it is within `rel_tol` relative or `abs_tol` absolute error.
pub fn check_grad_log_prob(
    params: &MlpParams,
    x: &[f64],
    action: usize,
    step: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<GradCheckReport> {
    let analytic: Vec<f64> = params.grad_log_prob(x, action)?.iter().copied().collect();
    let mut probe = params.clone();
    let mut report = GradCheckReport::default();
    for (i, &g) in analytic.iter().enumerate() {
        let orig = *probe.param_mut(i).unwrap();
        *probe.param_mut(i).unwrap() = orig + step;
        let up = log_prob(&probe, x, action)?;
        *probe.param_mut(i).unwrap() = orig - step;
        let down = log_prob(&probe, x, action)?;
        *probe.param_mut(i).unwrap() = orig;
        let numeric = (up - down) / (2.0 * step);
        let abs = (g - numeric).abs();
        let rel = abs / g.abs().max(numeric.abs()).max(f64::MIN_POSITIVE);
        report.checked += 1;
        report.max_abs_error = report.max_abs_error.max(abs);
        report.max_rel_error = report.max_rel_error.max(if abs == 0.0 { 0.0 } else { rel });
        if rel > rel_tol && abs > abs_tol {
            report.failures += 1;
        }
    }
    Ok(report)
}

/// `Σ_a π(a|x) ∇ log π(a|x)`, which is zero for any softmax policy.
pub fn expected_score(params: &MlpParams, x: &[f64]) -> Result<MlpParams> {
    let probs = params.forward(x)?;
    let mut sum = params.zeros_like();
    for (a, &p) in probs.iter().enumerate() {
        let mut g = params.grad_log_prob(x, a)?;
        g.scale(p);
        sum.add_assign(&g);
    }
    Ok(sum)
}
