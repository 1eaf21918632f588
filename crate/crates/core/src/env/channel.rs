//! Channel gains: geometry-driven large-scale fading plus per-slot Rayleigh
//! fast fading on every sub-channel.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use super::mobility::VehicleState;
use crate::config::{db_to_linear, ChannelParams, ScenarioConfig};

/// All link power gains (linear) for one slot.
///
/// Flat layouts, with `n` the sub-channel, `k` a V2V receiver and `j` a V2V
/// transmitter:
/// * `h_v2i[n]`: V2I link `n` to the base station on sub-channel `n`.
/// * `h_v2v_to_bs[k * N + n]`: V2V transmitter `k` to the base station.
/// * `g_v2v[(k * K + j) * N + n]`: V2V transmitter `j` to V2V receiver `k`;
///   `j == k` is the direct link gain.
/// * `h_v2i_to_v2v[k * N + n]`: V2I transmitter `n` to V2V receiver `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub n_channels: usize,
    pub n_v2v: usize,
    pub h_v2i: Vec<f64>,
    pub h_v2v_to_bs: Vec<f64>,
    pub g_v2v: Vec<f64>,
    pub h_v2i_to_v2v: Vec<f64>,
}

impl ChannelState {
    pub fn zeros(n_channels: usize, n_v2v: usize) -> Self {
        Self {
            n_channels,
            n_v2v,
            h_v2i: vec![0.0; n_channels],
            h_v2v_to_bs: vec![0.0; n_v2v * n_channels],
            g_v2v: vec![0.0; n_v2v * n_v2v * n_channels],
            h_v2i_to_v2v: vec![0.0; n_v2v * n_channels],
        }
    }

    #[inline]
    pub fn v2v_to_bs(&self, k: usize, n: usize) -> f64 {
        self.h_v2v_to_bs[k * self.n_channels + n]
    }

    #[inline]
    pub fn v2v(&self, rx: usize, tx: usize, n: usize) -> f64 {
        self.g_v2v[(rx * self.n_v2v + tx) * self.n_channels + n]
    }

    #[inline]
    pub fn v2i_to_v2v(&self, k: usize, n: usize) -> f64 {
        self.h_v2i_to_v2v[k * self.n_channels + n]
    }

    pub fn set_v2v_to_bs(&mut self, k: usize, n: usize, g: f64) {
        self.h_v2v_to_bs[k * self.n_channels + n] = g;
    }

    pub fn set_v2v(&mut self, rx: usize, tx: usize, n: usize, g: f64) {
        self.g_v2v[(rx * self.n_v2v + tx) * self.n_channels + n] = g;
    }

    pub fn set_v2i_to_v2v(&mut self, k: usize, n: usize, g: f64) {
        self.h_v2i_to_v2v[k * self.n_channels + n] = g;
    }

    pub fn all_finite_nonneg(&self) -> bool {
        [&self.h_v2i, &self.h_v2v_to_bs, &self.g_v2v, &self.h_v2i_to_v2v]
            .iter()
            .all(|v| v.iter().all(|g| g.is_finite() && *g >= 0.0))
    }
}

/// Transmitter and receiver vehicle of a V2V link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct V2vLink {
    pub tx: usize,
    pub rx: usize,
}

/// Pairs V2V links with vehicles: transmitters cycle through the vehicle list
/// and each transmitter serves its 1st, 2nd, ... nearest neighbour. Once every
/// neighbour of a vehicle is taken the assignment wraps around.
pub fn assign_links(vehicles: &[VehicleState], n_v2v: usize) -> Vec<V2vLink> {
    let v = vehicles.len();
    assert!(v >= 2, "V2V links need at least two vehicles");
    let neighbours: Vec<Vec<usize>> = (0..v)
        .map(|i| {
            let mut others: Vec<usize> = (0..v).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| {
                let da = distance2d(vehicles[i].position, vehicles[a].position);
                let db = distance2d(vehicles[i].position, vehicles[b].position);
                da.total_cmp(&db).then(a.cmp(&b))
            });
            others
        })
        .collect();
    (0..n_v2v)
        .map(|k| {
            let tx = k % v;
            let rank = (k / v) % (v - 1);
            V2vLink {
                tx,
                rx: neighbours[tx][rank],
            }
        })
        .collect()
}

fn distance2d(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Vehicle-to-base-station path loss in dB (no shadowing).
pub fn v2i_pathloss_db(p: &ChannelParams, vehicle: [f64; 2], bs: [f64; 2]) -> f64 {
    let dh = p.bs_height_m - p.vehicle_height_m;
    let d = (distance2d(vehicle, bs).powi(2) + dh * dh)
        .sqrt()
        .max(p.min_distance_m);
    p.v2i_pathloss_intercept_db + p.v2i_pathloss_slope_db * (d / 1000.0).log10()
}

fn v2v_los_db(p: &ChannelParams, d: f64) -> f64 {
    let d = d.max(p.min_distance_m);
    p.v2v_los_intercept_db + p.v2v_los_slope_db * d.log10() + 20.0 * (p.carrier_ghz / 5.0).log10()
}

/// Vehicle-to-vehicle path loss in dB (no shadowing).
///
/// Vehicles on the same street are in line of sight. Otherwise the signal
/// turns one corner; the loss is the better of the two leg orderings.
pub fn v2v_pathloss_db(p: &ChannelParams, a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = (a[0] - b[0]).abs();
    let dy = (a[1] - b[1]).abs();
    if dx < p.los_street_tolerance_m || dy < p.los_street_tolerance_m {
        return v2v_los_db(p, dx.hypot(dy));
    }
    let corner = |d1: f64, d2: f64| {
        let nj = (2.8 - 0.0024 * d1).max(1.84);
        v2v_los_db(p, d1) + p.v2v_nlos_corner_db - 12.5 * nj
            + 10.0 * nj * d2.max(p.min_distance_m).log10()
            + 3.0 * (p.carrier_ghz / 5.0).log10()
    };
    corner(dx, dy).min(corner(dy, dx))
}

/// Large-scale linear gains, fixed for one episode. Antenna gains and noise
/// figures are folded in so that SINR is formed directly against the noise
/// power.
#[derive(Debug, Clone, PartialEq)]
pub struct LargeScale {
    pub v2i: Vec<f64>,
    pub v2v_to_bs: Vec<f64>,
    /// `[rx * K + tx]`
    pub v2v: Vec<f64>,
    /// `[k * N + n]`
    pub v2i_to_v2v: Vec<f64>,
}

impl LargeScale {
    pub fn compute<R: Rng + ?Sized>(
        config: &ScenarioConfig,
        vehicles: &[VehicleState],
        links: &[V2vLink],
        rng: &mut R,
    ) -> Self {
        let p = &config.channel;
        let n = config.n_channels();
        let k = links.len();
        let v = vehicles.len();
        let bs = [config.area_width_m / 2.0, config.area_height_m / 2.0];

        let mut normal = |std: f64| -> f64 {
            let z: f64 = StandardNormal.sample(rng);
            z * std
        };

        let bs_extra = p.bs_antenna_gain_db + p.vehicle_antenna_gain_db - p.bs_noise_figure_db;
        let veh_extra = 2.0 * p.vehicle_antenna_gain_db - p.vehicle_noise_figure_db;

        let to_bs: Vec<f64> = vehicles
            .iter()
            .map(|veh| {
                let loss = v2i_pathloss_db(p, veh.position, bs) + normal(p.v2i_shadowing_std_db);
                db_to_linear(bs_extra - loss)
            })
            .collect();

        // Symmetric vehicle-pair gains with one shadowing draw per pair.
        let mut pair = vec![0.0; v * v];
        for a in 0..v {
            for b in a..v {
                let loss = v2v_pathloss_db(p, vehicles[a].position, vehicles[b].position)
                    + normal(p.v2v_shadowing_std_db);
                let g = db_to_linear(veh_extra - loss);
                pair[a * v + b] = g;
                pair[b * v + a] = g;
            }
        }

        let v2i = (0..n).map(|i| to_bs[i]).collect();
        let v2v_to_bs = links.iter().map(|l| to_bs[l.tx]).collect();
        let mut v2v = vec![0.0; k * k];
        for (rx, lr) in links.iter().enumerate() {
            for (tx, lt) in links.iter().enumerate() {
                v2v[rx * k + tx] = pair[lr.rx * v + lt.tx];
            }
        }
        let mut v2i_to_v2v = vec![0.0; k * n];
        for (rx, lr) in links.iter().enumerate() {
            for i in 0..n {
                v2i_to_v2v[rx * n + i] = pair[lr.rx * v + i];
            }
        }
        Self {
            v2i,
            v2v_to_bs,
            v2v,
            v2i_to_v2v,
        }
    }

    /// Applies independent per-sub-channel Rayleigh power fading.
    pub fn realise<R: Rng + ?Sized>(
        &self,
        n_channels: usize,
        fast_fading: bool,
        rng: &mut R,
    ) -> ChannelState {
        let k = self.v2v_to_bs.len();
        let n = n_channels;
        let mut fade = |g: f64| -> f64 {
            if fast_fading {
                let e: f64 = Exp1.sample(rng);
                g * e
            } else {
                g
            }
        };
        let mut ch = ChannelState::zeros(n, k);
        for i in 0..n {
            ch.h_v2i[i] = fade(self.v2i[i]);
        }
        for kk in 0..k {
            for i in 0..n {
                ch.h_v2v_to_bs[kk * n + i] = fade(self.v2v_to_bs[kk]);
            }
        }
        for pair in 0..k * k {
            for i in 0..n {
                ch.g_v2v[pair * n + i] = fade(self.v2v[pair]);
            }
        }
        for kk in 0..k {
            for i in 0..n {
                ch.h_v2i_to_v2v[kk * n + i] = fade(self.v2i_to_v2v[kk * n + i]);
            }
        }
        ch
    }
}
