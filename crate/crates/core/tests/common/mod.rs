//! Reference implementations used as oracles by the integration tests.
//!
//! Nothing here calls the code it is compared against: the forward pass,
//! SINR sums and gradients are recomputed from the definitions.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use rifrl::env::channel::ChannelState;
use rifrl::policy::{Activation, DenseLayer, MlpParams};
use rifrl::ScenarioConfig;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Random network with `layers` weight layers, hidden widths in `1..=max_width`,
/// Gaussian weights and biases, and every hidden node rescaled by a
/// log-normal factor so that BRIO has non-trivial work to do.
pub fn random_net(rng: &mut ChaCha8Rng, layers: usize, max_width: usize, leaky: bool) -> MlpParams {
    let hidden = if leaky {
        Activation::LeakyRelu {
            slope: rng.random_range(0.01..0.3),
        }
    } else {
        Activation::Relu
    };
    let sizes: Vec<usize> = (0..=layers).map(|_| rng.random_range(1..=max_width)).collect();
    let mut net = MlpParams {
        layers: (0..layers)
            .map(|l| {
                let (i, o) = (sizes[l], sizes[l + 1]);
                let std = (2.0 / i as f64).sqrt();
                DenseLayer {
                    inputs: i,
                    outputs: o,
                    weights: (0..i * o).map(|_| std * normal(rng)).collect(),
                    bias: (0..o).map(|_| 0.1 * normal(rng)).collect(),
                    activation: if l + 1 == layers { Activation::Identity } else { hidden },
                }
            })
            .collect(),
    };
    for l in 0..layers - 1 {
        for node in 0..sizes[l + 1] {
            let alpha = normal(rng).exp();
            let (a, b) = net.layers.split_at_mut(l + 1);
            let cur = &mut a[l];
            for c in 0..cur.inputs {
                cur.weights[node * cur.inputs + c] *= alpha;
            }
            cur.bias[node] *= alpha;
            let next = &mut b[0];
            for r in 0..next.outputs {
                next.weights[r * next.inputs + node] /= alpha;
            }
        }
    }
    net
}

fn act(a: Activation, z: f64) -> f64 {
    match a {
        Activation::Identity => z,
        Activation::Relu => {
            if z > 0.0 {
                z
            } else {
                0.0
            }
        }
        Activation::LeakyRelu { slope } => {
            if z > 0.0 {
                z
            } else {
                slope * z
            }
        }
        Activation::Tanh => z.tanh(),
    }
}

/// Straightforward nested-loop forward pass returning the logits.
pub fn reference_logits(net: &MlpParams, x: &[f64]) -> Vec<f64> {
    let mut cur = x.to_vec();
    for layer in &net.layers {
        let mut next = vec![0.0; layer.outputs];
        for (r, out) in next.iter_mut().enumerate() {
            let mut z = layer.bias[r];
            for (c, &v) in cur.iter().enumerate() {
                z += layer.weights[r * layer.inputs + c] * v;
            }
            *out = act(layer.activation, z);
        }
        cur = next;
    }
    cur
}

pub fn reference_log_prob(net: &MlpParams, x: &[f64], action: usize) -> f64 {
    let z = reference_logits(net, x);
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z[action] - lse
}

fn entry(p: &mut MlpParams, layer: usize, i: usize) -> &mut f64 {
    let l = &mut p.layers[layer];
    let nw = l.weights.len();
    if i < nw {
        &mut l.weights[i]
    } else {
        &mut l.bias[i - nw]
    }
}

/// Central differences of `log π(action | x)` for every parameter, in
/// `MlpParams::iter` order.
pub fn finite_difference_grad(net: &MlpParams, x: &[f64], action: usize, h: f64) -> Vec<f64> {
    let mut probe = net.clone();
    let mut out = Vec::with_capacity(net.n_params());
    for l in 0..net.layers.len() {
        let count = net.layers[l].weights.len() + net.layers[l].bias.len();
        for i in 0..count {
            let orig = *entry(&mut probe, l, i);
            *entry(&mut probe, l, i) = orig + h;
            let up = reference_log_prob(&probe, x, action);
            *entry(&mut probe, l, i) = orig - h;
            let down = reference_log_prob(&probe, x, action);
            *entry(&mut probe, l, i) = orig;
            out.push((up - down) / (2.0 * h));
        }
    }
    out
}

/// A random channel with gains log-uniform over `[1e-13, 1e-5]`.
pub fn random_channel(rng: &mut ChaCha8Rng, n: usize, k: usize) -> ChannelState {
    let mut g = || 10f64.powf(rng.random_range(-13.0..-5.0));
    let mut ch = ChannelState::zeros(n, k);
    ch.h_v2i.iter_mut().for_each(|v| *v = g());
    ch.h_v2v_to_bs.iter_mut().for_each(|v| *v = g());
    ch.g_v2v.iter_mut().for_each(|v| *v = g());
    ch.h_v2i_to_v2v.iter_mut().for_each(|v| *v = g());
    ch
}

/// `ρ[k][n]` indicator matrix, V2V powers in W and the other inputs of the
/// SINR definitions, kept separate from the library's action types.
pub struct Allocation {
    pub rho: Vec<Vec<f64>>,
    pub power_w: Vec<f64>,
}

pub fn allocation(cfg: &ScenarioConfig, channels: &[usize], powers: &[usize], active: &[bool]) -> Allocation {
    let n = cfg.n_v2i;
    let rho = channels
        .iter()
        .zip(active)
        .map(|(&c, &on)| (0..n).map(|m| if on && m == c { 1.0 } else { 0.0 }).collect())
        .collect();
    let power_w = powers
        .iter()
        .map(|&p| 10f64.powf((cfg.v2v_power_levels_dbm[p] - 30.0) / 10.0))
        .collect();
    Allocation { rho, power_w }
}

fn noise_w(cfg: &ScenarioConfig) -> f64 {
    10f64.powf((cfg.noise_power_dbm - 30.0) / 10.0)
}

fn v2i_w(cfg: &ScenarioConfig) -> f64 {
    10f64.powf((cfg.v2i_tx_power_dbm - 30.0) / 10.0)
}

/// `γ^i_n = h_n P^i / (σ² + Σ_k ρ_k[n] h̃_k[n] P_k)`.
pub fn brute_sinr_v2i(cfg: &ScenarioConfig, ch: &ChannelState, a: &Allocation) -> Vec<f64> {
    let n_ch = cfg.n_v2i;
    let k_n = cfg.n_v2v;
    (0..n_ch)
        .map(|n| {
            let mut interference = 0.0;
            for k in 0..k_n {
                interference += a.rho[k][n] * ch.h_v2v_to_bs[k * n_ch + n] * a.power_w[k];
            }
            ch.h_v2i[n] * v2i_w(cfg) / (noise_w(cfg) + interference)
        })
        .collect()
}

/// `γ_k[n] = ρ_k[n] g_kk P_k / (σ² + ĥ_k[n] P^i + Σ_{j≠k} ρ_j[n] g_kj P_j)`.
pub fn brute_sinr_v2v(cfg: &ScenarioConfig, ch: &ChannelState, a: &Allocation) -> Vec<Vec<f64>> {
    let n_ch = cfg.n_v2i;
    let k_n = cfg.n_v2v;
    let g = |rx: usize, tx: usize, n: usize| ch.g_v2v[(rx * k_n + tx) * n_ch + n];
    (0..k_n)
        .map(|k| {
            (0..n_ch)
                .map(|n| {
                    let mut denom = noise_w(cfg) + ch.h_v2i_to_v2v[k * n_ch + n] * v2i_w(cfg);
                    for j in 0..k_n {
                        if j != k {
                            denom += a.rho[j][n] * g(k, j, n) * a.power_w[j];
                        }
                    }
                    a.rho[k][n] * g(k, k, n) * a.power_w[k] / denom
                })
                .collect()
        })
        .collect()
}

pub fn shannon(bandwidth: f64, sinr: f64) -> f64 {
    bandwidth * (1.0 + sinr).ln() / std::f64::consts::LN_2
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
