//! Backward rescale-invariant operation (BRIO).
//!
//! For a network `x^{l+1} = σ(W^l x^l + b^l)` with positively homogeneous
//! hidden activations σ, any positive diagonal `D^l` gives an equivalent
//! network `W̃^l = D^{l+1} W^l (D^l)^{-1}`, `b̃^l = D^{l+1} b^l` as long as the
//! input and output scalings `D^1`, `D^{L+1}` are the identity. BRIO picks
//! `D^l` from the output layer backwards so that every column of
//! `D^{l+1} W^l` for `l = L..2` is normalised to unit Euclidean length.
//!
//! A column whose norm is zero gets the floor [`SCALE_FLOOR`]; it remains a
//! zero column after rescaling and the matching row of the previous layer is
//! multiplied by the floor.

use crate::error::{Error, Result};
use crate::policy::MlpParams;

pub const SCALE_FLOOR: f64 = 1e-12;

/// Diagonals `D^1 ..= D^{L+1}`; `scales[l]` has the input width of layer `l`
/// and the last entry has the output width.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSet {
    pub scales: Vec<Vec<f64>>,
}

fn check_homogeneous(params: &MlpParams) -> Result<()> {
    params.validate()?;
    let hidden = &params.layers[..params.layers.len() - 1];
    if let Some(layer) = hidden
        .iter()
        .find(|l| !l.activation.is_positively_homogeneous())
    {
        return Err(Error::UnsupportedActivation(layer.activation.name().into()));
    }
    Ok(())
}

pub fn compute_scales(params: &MlpParams) -> Result<ScaleSet> {
    check_homogeneous(params)?;
    let layers = &params.layers;
    let depth = layers.len();
    let mut scales: Vec<Vec<f64>> = layers.iter().map(|l| vec![1.0; l.inputs]).collect();
    scales.push(vec![1.0; layers[depth - 1].outputs]);

    for l in (1..depth).rev() {
        let layer = &layers[l];
        let mut sq = vec![0.0; layer.inputs];
        for (r, &d) in scales[l + 1].iter().enumerate() {
            for (acc, &w) in sq.iter_mut().zip(layer.row(r)) {
                let v = d * w;
                *acc += v * v;
            }
        }
        scales[l] = sq.into_iter().map(|s| s.sqrt().max(SCALE_FLOOR)).collect();
    }
    Ok(ScaleSet { scales })
}

/// Applies `W̃^l = D^{l+1} W^l (D^l)^{-1}` and `b̃^l = D^{l+1} b^l`.
pub fn apply_scales(params: &MlpParams, scales: &ScaleSet) -> Result<MlpParams> {
    let mut out = params.clone();
    if scales.scales.len() != params.layers.len() + 1 {
        return Err(Error::Shape("scale set does not match network depth".into()));
    }
    for (l, layer) in out.layers.iter_mut().enumerate() {
        let d_in = &scales.scales[l];
        let d_out = &scales.scales[l + 1];
        if d_in.len() != layer.inputs || d_out.len() != layer.outputs {
            return Err(Error::Shape(format!("scale widths do not match layer {l}")));
        }
        for (r, &row_scale) in d_out.iter().enumerate() {
            let row = &mut layer.weights[r * layer.inputs..(r + 1) * layer.inputs];
            for (w, &col_scale) in row.iter_mut().zip(d_in) {
                *w = row_scale * *w / col_scale;
            }
            layer.bias[r] *= row_scale;
        }
    }
    Ok(out)
}

/// Returns the BRIO-rescaled copy of `params`; the input is left untouched.
pub fn rescale(params: &MlpParams) -> Result<MlpParams> {
    let scales = compute_scales(params)?;
    apply_scales(params, &scales)
}

/// Measured properties of one BRIO application.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrioReport {
    /// Largest `|f(x) - f̃(x)|_∞ / |f(x)|_∞` over the inputs.
    pub max_relative_error: f64,
    /// Largest `| ‖column‖ - 1 |` over the normalised, non-floored columns.
    pub max_column_deviation: f64,
    /// Largest entry change when BRIO is applied a second time.
    pub max_idempotence_change: f64,
}

/// Rescales `params` and measures function equivalence on `inputs`, unit
/// column norms of layers `2..=L`, and idempotence.
pub fn check(params: &MlpParams, inputs: &[Vec<f64>]) -> Result<BrioReport> {
    let scales = compute_scales(params)?;
    let rescaled = apply_scales(params, &scales)?;
    let mut max_relative_error = 0.0f64;
    for x in inputs {
        let a = params.logits(x)?;
        let b = rescaled.logits(x)?;
        let scale = a.iter().fold(f64::MIN_POSITIVE, |m, u| m.max(u.abs()));
        let diff = a.iter().zip(&b).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
        max_relative_error = max_relative_error.max(diff / scale);
    }
    let mut max_column_deviation = 0.0f64;
    for l in 1..rescaled.layers.len() {
        let layer = &rescaled.layers[l];
        for c in 0..layer.inputs {
            if scales.scales[l][c] == SCALE_FLOOR {
                continue;
            }
            let norm = (0..layer.outputs).map(|r| layer.w(r, c).powi(2)).sum::<f64>().sqrt();
            max_column_deviation = max_column_deviation.max((norm - 1.0).abs());
        }
    }
    let twice = rescale(&rescaled)?;
    Ok(BrioReport {
        max_relative_error,
        max_column_deviation,
        max_idempotence_change: twice.max_abs_diff(&rescaled),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{Activation, DenseLayer};

    fn tiny() -> MlpParams {
        MlpParams {
            layers: vec![
                DenseLayer {
                    inputs: 1,
                    outputs: 2,
                    weights: vec![3.0, 4.0],
                    bias: vec![0.0, 0.0],
                    activation: Activation::Relu,
                },
                DenseLayer {
                    inputs: 2,
                    outputs: 1,
                    weights: vec![1.0, 2.0],
                    bias: vec![0.0],
                    activation: Activation::Identity,
                },
            ],
        }
    }

    #[test]
    fn hand_computed_scales() {
        let s = compute_scales(&tiny()).unwrap();
        assert_eq!(s.scales, vec![vec![1.0], vec![1.0, 2.0], vec![1.0]]);
    }

    #[test]
    fn hand_computed_rescale() {
        let p = tiny();
        let r = rescale(&p).unwrap();
        assert_eq!(r.layers[0].weights, vec![3.0, 8.0]);
        assert_eq!(r.layers[1].weights, vec![1.0, 1.0]);
        assert_eq!(r.layers[0].bias, vec![0.0, 0.0]);
        assert_eq!(r.layers[1].bias, vec![0.0]);
        for x in [0.5, 1.0, 2.0, 7.25] {
            assert_eq!(p.logits(&[x]).unwrap(), vec![11.0 * x]);
            assert_eq!(r.logits(&[x]).unwrap(), vec![11.0 * x]);
        }
        for x in [-0.5, -3.0] {
            assert_eq!(p.logits(&[x]).unwrap(), vec![0.0]);
            assert_eq!(r.logits(&[x]).unwrap(), vec![0.0]);
        }
        // input untouched
        assert_eq!(p, tiny());
    }

    #[test]
    fn normalised_net_is_fixed_point() {
        let r = rescale(&tiny()).unwrap();
        let s = compute_scales(&r).unwrap();
        assert!(s.scales.iter().flatten().all(|&d| d == 1.0));
        assert_eq!(rescale(&r).unwrap(), r);
    }

    #[test]
    fn zero_column_uses_floor() {
        let mut p = tiny();
        p.layers[1].weights = vec![0.0, 2.0];
        let s = compute_scales(&p).unwrap();
        assert_eq!(s.scales[1], vec![SCALE_FLOOR, 2.0]);
        let r = rescale(&p).unwrap();
        assert_eq!(r.layers[1].weights, vec![0.0, 1.0]);
        assert_eq!(r.layers[0].weights, vec![3.0 * SCALE_FLOOR, 8.0]);
        assert!(r.is_finite());
    }

    #[test]
    fn rejects_tanh() {
        let mut p = tiny();
        p.layers[0].activation = Activation::Tanh;
        assert!(matches!(compute_scales(&p), Err(Error::UnsupportedActivation(_))));
        assert!(rescale(&p).is_err());
    }

    #[test]
    fn leaky_relu_equivalence() {
        let p = MlpParams::init(&[5, 7, 6, 3], Activation::LeakyRelu { slope: 0.01 }, 8).unwrap();
        let r = rescale(&p).unwrap();
        for i in 0..20 {
            let x: Vec<f64> = (0..5).map(|j| ((i * 5 + j) as f64 * 0.37).sin()).collect();
            let a = p.logits(&x).unwrap();
            let b = r.logits(&x).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }
}
