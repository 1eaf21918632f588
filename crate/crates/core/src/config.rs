//! Run configuration: scenario physics, learning hyperparameters, federation
//! schedule and experiment bookkeeping.
//!
//! Configurations are read from TOML. Every section rejects unknown keys and
//! missing keys fall back to the desk-scale defaults, so a file only needs to
//! list what it changes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Propagation constants. Path loss follows the urban-micro forms commonly
/// used for the 3GPP Manhattan layout; every coefficient is exposed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    pub carrier_ghz: f64,
    pub bs_height_m: f64,
    pub vehicle_height_m: f64,
    pub bs_antenna_gain_db: f64,
    pub vehicle_antenna_gain_db: f64,
    pub bs_noise_figure_db: f64,
    pub vehicle_noise_figure_db: f64,
    /// V2I: `intercept + slope * log10(d_km)`.
    pub v2i_pathloss_intercept_db: f64,
    pub v2i_pathloss_slope_db: f64,
    /// V2V line of sight: `intercept + slope * log10(d_m) + 20 log10(fc / 5)`.
    pub v2v_los_intercept_db: f64,
    pub v2v_los_slope_db: f64,
    /// Extra loss turning a street corner, before the distance-dependent term.
    pub v2v_nlos_corner_db: f64,
    /// Two vehicles whose x or y coordinates differ by less than this share a street.
    pub los_street_tolerance_m: f64,
    pub v2i_shadowing_std_db: f64,
    pub v2v_shadowing_std_db: f64,
    pub fast_fading: bool,
    pub min_distance_m: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            carrier_ghz: 2.0,
            bs_height_m: 25.0,
            vehicle_height_m: 1.5,
            bs_antenna_gain_db: 8.0,
            vehicle_antenna_gain_db: 3.0,
            bs_noise_figure_db: 5.0,
            vehicle_noise_figure_db: 9.0,
            v2i_pathloss_intercept_db: 128.1,
            v2i_pathloss_slope_db: 37.6,
            v2v_los_intercept_db: 41.0,
            v2v_los_slope_db: 22.7,
            v2v_nlos_corner_db: 20.0,
            los_street_tolerance_m: 7.0,
            v2i_shadowing_std_db: 8.0,
            v2v_shadowing_std_db: 3.0,
            fast_fading: true,
            min_distance_m: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Number of V2I links, which is also the number of sub-channels.
    pub n_v2i: usize,
    /// Number of V2V links (agents).
    pub n_v2v: usize,
    /// Vehicle population. Defaults to `max(n_v2i, 2)`.
    pub n_vehicles: Option<usize>,
    pub bandwidth_hz: f64,
    pub noise_power_dbm: f64,
    pub v2i_tx_power_dbm: f64,
    pub v2v_power_levels_dbm: Vec<f64>,
    /// Payload per V2V link per episode. Zero means every link starts delivered.
    pub payload_bytes: f64,
    pub slot_duration_s: f64,
    pub slots_per_episode: usize,
    pub area_width_m: f64,
    pub area_height_m: f64,
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub speed_mps: f64,
    pub turn_probability: f64,
    /// Include the pairwise cross-gain block in observations. When false the
    /// observation only carries aggregate previous-slot interference.
    pub observe_cross_gains: bool,
    pub channel: ChannelParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_v2i: 4,
            n_v2v: 8,
            n_vehicles: None,
            bandwidth_hz: 1e6,
            noise_power_dbm: -114.0,
            v2i_tx_power_dbm: 23.0,
            v2v_power_levels_dbm: vec![23.0, 15.0, 5.0, -100.0],
            payload_bytes: 2120.0,
            slot_duration_s: 1e-3,
            slots_per_episode: 100,
            area_width_m: 1299.0,
            area_height_m: 750.0,
            blocks_x: 3,
            blocks_y: 3,
            speed_mps: 10.0,
            turn_probability: 0.4,
            observe_cross_gains: true,
            channel: ChannelParams::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn n_channels(&self) -> usize {
        self.n_v2i
    }

    pub fn n_vehicles(&self) -> usize {
        self.n_vehicles.unwrap_or(self.n_v2i.max(2))
    }

    pub fn noise_power_w(&self) -> f64 {
        dbm_to_watts(self.noise_power_dbm)
    }

    pub fn v2i_power_w(&self) -> f64 {
        dbm_to_watts(self.v2i_tx_power_dbm)
    }

    pub fn v2v_power_w(&self, level: usize) -> f64 {
        dbm_to_watts(self.v2v_power_levels_dbm[level])
    }

    pub fn n_power_levels(&self) -> usize {
        self.v2v_power_levels_dbm.len()
    }

    /// Size of the joint (power, sub-channel) action space.
    pub fn n_actions(&self) -> usize {
        self.n_power_levels() * self.n_channels()
    }

    pub fn obs_dim(&self) -> usize {
        let n = self.n_v2i;
        if self.observe_cross_gains {
            n * (self.n_v2v + 3) + 5
        } else {
            4 * n + 5
        }
    }

    pub fn area_diagonal(&self) -> f64 {
        self.area_width_m.hypot(self.area_height_m)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.n_v2i == 0 {
            return fail("n_v2i must be at least 1");
        }
        if self.n_v2v == 0 {
            return fail("n_v2v must be at least 1");
        }
        if self.slots_per_episode == 0 {
            return fail("slots_per_episode must be at least 1");
        }
        if let Some(v) = self.n_vehicles {
            if v < self.n_v2i.max(2) {
                return fail("n_vehicles must be at least max(n_v2i, 2)");
            }
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return fail("bandwidth_hz must be positive");
        }
        if !self.noise_power_dbm.is_finite() || !self.v2i_tx_power_dbm.is_finite() {
            return fail("noise and V2I powers must be finite");
        }
        if !(self.slot_duration_s > 0.0 && self.slot_duration_s.is_finite()) {
            return fail("slot_duration_s must be positive");
        }
        if !(self.payload_bytes >= 0.0 && self.payload_bytes.is_finite()) {
            return fail("payload_bytes must be non-negative");
        }
        let levels = &self.v2v_power_levels_dbm;
        if levels.is_empty() {
            return fail("v2v_power_levels_dbm must be non-empty");
        }
        if levels.iter().any(|p| !p.is_finite()) || levels.windows(2).any(|w| w[1] >= w[0]) {
            return fail("v2v_power_levels_dbm must be finite and strictly decreasing");
        }
        if !(self.area_width_m > 0.0 && self.area_height_m > 0.0) {
            return fail("area dimensions must be positive");
        }
        if self.blocks_x == 0 || self.blocks_y == 0 {
            return fail("street grid needs at least one block per axis");
        }
        if !(self.speed_mps >= 0.0 && self.speed_mps.is_finite()) {
            return fail("speed_mps must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.turn_probability) {
            return fail("turn_probability must lie in [0, 1]");
        }
        let ch = &self.channel;
        if !(ch.min_distance_m > 0.0) {
            return fail("channel.min_distance_m must be positive");
        }
        if ch.v2i_shadowing_std_db < 0.0 || ch.v2v_shadowing_std_db < 0.0 {
            return fail("shadowing standard deviations must be non-negative");
        }
        if !(ch.carrier_ghz > 0.0) {
            return fail("channel.carrier_ghz must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    Relu,
    LeakyRelu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningConfig {
    pub hidden_sizes: Vec<usize>,
    pub activation: HiddenActivation,
    pub leaky_slope: f64,
    /// Learning rate for FRL and RIFRL agents.
    pub lr_federated: f64,
    /// Learning rate for independent policy-gradient agents.
    pub lr_independent: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_eps: f64,
    /// Subtract a running mean of past returns from the episode return.
    pub reward_baseline: bool,
    /// Zero the RMSprop accumulators whenever a global model is broadcast.
    pub reset_optimizer_on_broadcast: bool,
    /// All agents start from the same initial model.
    pub shared_init: bool,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![128, 64, 32],
            activation: HiddenActivation::Relu,
            leaky_slope: 0.01,
            lr_federated: 1e-3,
            lr_independent: 1e-4,
            rmsprop_decay: 0.99,
            rmsprop_eps: 1e-8,
            reward_baseline: false,
            reset_optimizer_on_broadcast: false,
            shared_init: true,
        }
    }
}

impl LearningConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return fail("hidden_sizes must be a non-empty list of positive widths");
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope.is_finite()) {
            return fail("leaky_slope must be non-negative");
        }
        for lr in [self.lr_federated, self.lr_independent] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return fail("learning rates must be non-negative");
            }
        }
        if !(0.0..1.0).contains(&self.rmsprop_decay) {
            return fail("rmsprop_decay must lie in [0, 1)");
        }
        if !(self.rmsprop_eps > 0.0) {
            return fail("rmsprop_eps must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationConfig {
    /// Last episode index; episodes `0..=episodes` are run.
    pub episodes: usize,
    pub aggregation_interval: usize,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            episodes: 2000,
            aggregation_interval: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub moving_average_window: usize,
    pub eval_episodes: usize,
    /// Save checkpoints every this many episodes; 0 disables periodic saves.
    pub checkpoint_interval: usize,
    pub run_id: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            moving_average_window: 100,
            eval_episodes: 200,
            checkpoint_interval: 0,
            run_id: "run".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub learning: LearningConfig,
    pub federation: FederationConfig,
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    /// Desk-scale profile: small enough that a full method comparison
    /// finishes in minutes on one core.
    pub fn desk() -> Self {
        let mut cfg = Self::default();
        cfg.scenario.n_v2i = 4;
        cfg.scenario.n_v2v = 8;
        cfg
    }

    /// Full-size profile with 8 V2I links, 24 V2V links and a 500-250-120 network.
    pub fn paper() -> Self {
        let mut cfg = Self::default();
        cfg.scenario.n_v2i = 8;
        cfg.scenario.n_v2v = 24;
        cfg.learning.hidden_sizes = vec![500, 250, 120];
        cfg.federation.episodes = 10_000;
        cfg
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(Error::Config(format!("unknown profile `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.learning.validate()?;
        let fed = &self.federation;
        if fed.aggregation_interval == 0 {
            return Err(Error::Config("aggregation_interval must be at least 1".into()));
        }
        if self.experiment.moving_average_window == 0 {
            return Err(Error::Config("moving_average_window must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config is always serialisable")
    }

    /// Stable 64-bit digest of the canonical TOML form, stored in checkpoints.
    pub fn hash(&self) -> u64 {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }

    /// Layer widths from observation to action logits.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.scenario.obs_dim()];
        sizes.extend_from_slice(&self.learning.hidden_sizes);
        sizes.push(self.scenario.n_actions());
        sizes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        RunConfig::desk().validate().unwrap();
        RunConfig::paper().validate().unwrap();
        assert_eq!(RunConfig::default(), RunConfig::desk());
    }

    #[test]
    fn paper_power_levels() {
        let s = ScenarioConfig::default();
        assert_eq!(s.v2v_power_levels_dbm, vec![23.0, 15.0, 5.0, -100.0]);
        assert_eq!(s.payload_bytes, 2120.0);
        assert_eq!(s.n_actions(), 16);
        assert_eq!(s.n_channels(), s.n_v2i);
    }

    #[test]
    fn rejects_bad_scenarios() {
        let mut s = ScenarioConfig::default();
        s.n_v2v = 0;
        assert!(s.validate().is_err());

        let mut s = ScenarioConfig::default();
        s.v2v_power_levels_dbm = vec![5.0, 15.0];
        assert!(s.validate().is_err());

        let mut s = ScenarioConfig::default();
        s.v2v_power_levels_dbm.clear();
        assert!(s.validate().is_err());

        let mut s = ScenarioConfig::default();
        s.bandwidth_hz = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let cfg = RunConfig::desk();
        let text = cfg.to_toml_string();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);

        let err = RunConfig::from_toml_str("[scenario]\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");

        let partial = RunConfig::from_toml_str("[federation]\nepisodes = 7\n").unwrap();
        assert_eq!(partial.federation.episodes, 7);
        assert_eq!(partial.scenario, ScenarioConfig::default());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::desk();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.experiment.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn obs_dim_layout() {
        let mut s = ScenarioConfig::default();
        assert_eq!(s.obs_dim(), 4 * 11 + 5);
        s.observe_cross_gains = false;
        assert_eq!(s.obs_dim(), 21);
    }
}
