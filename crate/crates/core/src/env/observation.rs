//! Per-agent observation vectors.
//!
//! Layout for agent `k` with `N` sub-channels and `K` agents:
//!
//! | block                               | length      |
//! |-------------------------------------|-------------|
//! | V2I gains on own sub-channel        | N           |
//! | V2I transmitters -> own receiver    | N           |
//! | own direct V2V gain                 | N           |
//! | other V2V transmitters -> own rx    | (K - 1) * N |
//! | previous-slot interference          | N           |
//! | tx -> rx offset (x, y)              | 2           |
//! | remaining slots, remaining bytes    | 2           |
//! | agent index                         | 1           |
//!
//! Gains enter in dB, centred and scaled to roughly [-1, 1]. Interference is
//! encoded as interference-to-noise ratio in dB, so an empty history is 0.
//! Time is normalised by the episode length, payload by its size, offsets by
//! the area diagonal and the index by `K`. The cross-gain block is omitted when
//! `observe_cross_gains` is off.

use super::V2xEnv;

const GAIN_DB_CENTER: f64 = -100.0;
const GAIN_DB_SCALE: f64 = 40.0;
const INR_DB_SCALE: f64 = 60.0;
const CLAMP: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Deref for Observation {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub fn encode_gain(g: f64) -> f64 {
    let db = 10.0 * g.max(1e-300).log10();
    ((db - GAIN_DB_CENTER) / GAIN_DB_SCALE).clamp(-CLAMP, CLAMP)
}

pub fn encode_interference(power_w: f64, noise_w: f64) -> f64 {
    let inr_db = 10.0 * (1.0 + power_w / noise_w).log10();
    (inr_db / INR_DB_SCALE).clamp(-CLAMP, CLAMP)
}

pub(super) fn build(env: &V2xEnv, k: usize) -> Observation {
    let cfg = env.config();
    let ch = env.channel();
    let n_ch = cfg.n_channels();
    let n_v2v = cfg.n_v2v;
    let mut z = Vec::with_capacity(cfg.obs_dim());

    z.extend(ch.h_v2i.iter().map(|&g| encode_gain(g)));
    z.extend((0..n_ch).map(|n| encode_gain(ch.v2i_to_v2v(k, n))));
    z.extend((0..n_ch).map(|n| encode_gain(ch.v2v(k, k, n))));
    if cfg.observe_cross_gains {
        for j in (0..n_v2v).filter(|&j| j != k) {
            z.extend((0..n_ch).map(|n| encode_gain(ch.v2v(k, j, n))));
        }
    }
    let noise = cfg.noise_power_w();
    let prev = &env.previous_interference()[k * n_ch..(k + 1) * n_ch];
    z.extend(prev.iter().map(|&i| encode_interference(i, noise)));

    let link = env.links()[k];
    let tx = env.vehicles()[link.tx].position;
    let rx = env.vehicles()[link.rx].position;
    let diag = cfg.area_diagonal();
    z.push((rx[0] - tx[0]) / diag);
    z.push((rx[1] - tx[1]) / diag);

    let book = env.bookkeeping();
    z.push(book.remaining_slots[k] as f64 / cfg.slots_per_episode as f64);
    z.push(if cfg.payload_bytes > 0.0 {
        book.remaining_bytes[k] / cfg.payload_bytes
    } else {
        0.0
    });
    z.push(k as f64 / n_v2v as f64);

    debug_assert_eq!(z.len(), cfg.obs_dim());
    Observation(z)
}
