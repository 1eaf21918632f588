//! RMSprop with a per-parameter squared-gradient average.

use super::mlp::MlpParams;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub decay: f64,
    pub eps: f64,
    /// Running average of squared gradients, shaped like the parameters.
    pub sq_avg: MlpParams,
}

impl RmsProp {
    pub fn new(params: &MlpParams, learning_rate: f64, decay: f64, eps: f64) -> Self {
        Self {
            learning_rate,
            decay,
            eps,
            sq_avg: params.zeros_like(),
        }
    }

    pub fn reset(&mut self) {
        for v in self.sq_avg.iter_mut() {
            *v = 0.0;
        }
    }

    /// `v <- ρ v + (1 - ρ) g²`, then `θ <- θ ± η g / (√v + ε)`; `+` when `ascent`.
    pub fn step(&mut self, params: &mut MlpParams, grad: &MlpParams, ascent: bool) -> Result<()> {
        params.check_shape(grad)?;
        params.check_shape(&self.sq_avg)?;
        let sign = if ascent { 1.0 } else { -1.0 };
        let (rho, eps, lr) = (self.decay, self.eps, self.learning_rate);
        for ((p, v), g) in params
            .iter_mut()
            .zip(self.sq_avg.iter_mut())
            .zip(grad.iter())
        {
            *v = rho * *v + (1.0 - rho) * g * g;
            *p += sign * lr * g / (v.sqrt() + eps);
        }
        Ok(())
    }
}
