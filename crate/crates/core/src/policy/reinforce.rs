//! REINFORCE estimator: the episode return times the summed score function.

use super::mlp::{ForwardCache, MlpParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub observation: Vec<f64>,
    pub action: usize,
    pub reward: f64,
}

/// One agent's `(observation, action, reward)` sequence for an episode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn push(&mut self, observation: Vec<f64>, action: usize, reward: f64) {
        self.steps.push(Step {
            observation,
            action,
            reward,
        });
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Undiscounted return `Σ_t R_t`.
    pub fn episode_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Accumulates `Σ_t ∇ log π(a_t | z_t)` step by step so that the forward pass
/// used for sampling is reused for the gradient.
#[derive(Debug, Clone)]
pub struct ScoreAccumulator {
    sum: MlpParams,
}

impl ScoreAccumulator {
    pub fn new(params: &MlpParams) -> Self {
        Self {
            sum: params.zeros_like(),
        }
    }

    pub fn add(&mut self, params: &MlpParams, cache: &ForwardCache, action: usize) -> Result<()> {
        params.accumulate_grad_log_prob(cache, action, 1.0, &mut self.sum)
    }

    /// `weight * Σ_t ∇ log π`, where `weight` is the return (minus a baseline).
    pub fn finish(mut self, weight: f64) -> MlpParams {
        self.sum.scale(weight);
        self.sum
    }
}

/// Single-sample policy gradient `R(τ) Σ_t ∇θ log π(a_t | z_t; θ)`, with an
/// optional baseline subtracted from `R(τ)`.
pub fn policy_gradient(
    params: &MlpParams,
    trajectory: &Trajectory,
    baseline: f64,
) -> Result<MlpParams> {
    if trajectory.is_empty() {
        return Err(Error::Shape("policy gradient of an empty trajectory".into()));
    }
    let mut acc = ScoreAccumulator::new(params);
    let mut cache = ForwardCache::default();
    for step in &trajectory.steps {
        params.forward_cached(&step.observation, &mut cache)?;
        acc.add(params, &cache, step.action)?;
    }
    Ok(acc.finish(trajectory.episode_return() - baseline))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::mlp::Activation;

    fn net() -> MlpParams {
        MlpParams::init(&[3, 5, 4], Activation::Relu, 4).unwrap()
    }

    #[test]
    fn zero_return_gives_zero_gradient() {
        let p = net();
        let mut t = Trajectory::default();
        t.push(vec![0.1, 0.2, 0.3], 1, 1.0);
        t.push(vec![0.3, -0.2, 0.3], 2, -1.0);
        let g = policy_gradient(&p, &t, 0.0).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_is_scaled_score() {
        let p = net();
        let x = vec![0.5, -0.7, 0.9];
        let mut t = Trajectory::default();
        t.push(x.clone(), 3, 2.5);
        let g = policy_gradient(&p, &t, 0.0).unwrap();
        let mut s = p.grad_log_prob(&x, 3).unwrap();
        s.scale(2.5);
        assert!(g.max_abs_diff(&s) < 1e-15);
    }

    #[test]
    fn empty_trajectory_is_rejected() {
        assert!(policy_gradient(&net(), &Trajectory::default(), 0.0).is_err());
    }

    #[test]
    fn baseline_shifts_weight() {
        let p = net();
        let mut t = Trajectory::default();
        t.push(vec![0.1, 0.2, 0.3], 1, 3.0);
        let g = policy_gradient(&p, &t, 3.0).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }
}
