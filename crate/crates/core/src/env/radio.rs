//! Per-slot SINR, rate and interference evaluation.
//!
//! These are pure functions of the channel realisation and the joint action.
//! A V2V link occupies sub-channel `n` only when it is active and chose `n`;
//! inactive links are silent everywhere.

use super::channel::ChannelState;
use super::Action;
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};

/// Transmit power (W) and sub-channel for each V2V link, `None` when silent.
pub(crate) fn transmissions(
    actions: &[Action],
    active: &[bool],
    config: &ScenarioConfig,
) -> Result<Vec<Option<(usize, f64)>>> {
    if actions.len() != config.n_v2v || active.len() != config.n_v2v {
        return Err(Error::Shape(format!(
            "expected {} actions and activity flags, got {} and {}",
            config.n_v2v,
            actions.len(),
            active.len()
        )));
    }
    actions
        .iter()
        .zip(active)
        .map(|(a, &on)| {
            a.validate(config)?;
            Ok(on.then(|| (a.channel_index, config.v2v_power_w(a.power_index))))
        })
        .collect()
}

/// V2I SINR on each sub-channel (linear).
pub fn sinr_v2i(
    ch: &ChannelState,
    actions: &[Action],
    active: &[bool],
    config: &ScenarioConfig,
) -> Result<Vec<f64>> {
    let tx = transmissions(actions, active, config)?;
    let noise = config.noise_power_w();
    let p_i = config.v2i_power_w();
    let mut interference = vec![0.0; config.n_channels()];
    for (k, t) in tx.iter().enumerate() {
        if let Some((n, p)) = *t {
            interference[n] += ch.v2v_to_bs(k, n) * p;
        }
    }
    Ok(ch
        .h_v2i
        .iter()
        .zip(&interference)
        .map(|(&h, &i)| h * p_i / (noise + i))
        .collect())
}

/// V2V SINR per link and sub-channel (linear), flat `[k * N + n]`. Entries for
/// sub-channels a link did not select are zero.
pub fn sinr_v2v(
    ch: &ChannelState,
    actions: &[Action],
    active: &[bool],
    config: &ScenarioConfig,
) -> Result<Vec<f64>> {
    let tx = transmissions(actions, active, config)?;
    let n_ch = config.n_channels();
    let noise = config.noise_power_w();
    let p_i = config.v2i_power_w();
    let mut out = vec![0.0; config.n_v2v * n_ch];
    for (k, t) in tx.iter().enumerate() {
        let Some((n, p)) = *t else { continue };
        let mut denom = noise + ch.v2i_to_v2v(k, n) * p_i;
        for (j, other) in tx.iter().enumerate() {
            if j == k {
                continue;
            }
            if let Some((m, q)) = *other {
                if m == n {
                    denom += ch.v2v(k, j, n) * q;
                }
            }
        }
        out[k * n_ch + n] = ch.v2v(k, k, n) * p / denom;
    }
    Ok(out)
}

/// Shannon rates in bit/s: one entry per V2I link, and per V2V link summed
/// over sub-channels.
pub fn rates(sinr_v2i: &[f64], sinr_v2v: &[f64], config: &ScenarioConfig) -> (Vec<f64>, Vec<f64>) {
    let w = config.bandwidth_hz;
    let n_ch = config.n_channels();
    let v2i = sinr_v2i.iter().map(|&g| w * (1.0 + g).log2()).collect();
    let v2v = sinr_v2v
        .chunks(n_ch)
        .map(|row| row.iter().map(|&g| w * (1.0 + g).log2()).sum())
        .collect();
    (v2i, v2v)
}

/// Interference power (W) that each V2V receiver sees on every sub-channel:
/// the V2I transmitter of that sub-channel plus every other active V2V link
/// on it. Flat `[k * N + n]`.
pub fn received_interference(
    ch: &ChannelState,
    actions: &[Action],
    active: &[bool],
    config: &ScenarioConfig,
) -> Result<Vec<f64>> {
    let tx = transmissions(actions, active, config)?;
    let n_ch = config.n_channels();
    let p_i = config.v2i_power_w();
    let mut out = vec![0.0; config.n_v2v * n_ch];
    for k in 0..config.n_v2v {
        for n in 0..n_ch {
            out[k * n_ch + n] = ch.v2i_to_v2v(k, n) * p_i;
        }
        for (j, t) in tx.iter().enumerate() {
            if j == k {
                continue;
            }
            if let Some((n, q)) = *t {
                out[k * n_ch + n] += ch.v2v(k, j, n) * q;
            }
        }
    }
    Ok(out)
}
