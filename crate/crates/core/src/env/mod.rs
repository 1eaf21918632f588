//! Urban V2X environment.
//!
//! One [`V2xEnv`] is one episode: `reset` places vehicles, pairs V2V links and
//! draws large-scale gains; every `step` applies the joint action of all V2V
//! agents, drains payloads, returns the shared reward and redraws fast fading.

pub mod channel;
pub mod mobility;
pub mod observation;
pub mod radio;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use channel::{ChannelState, LargeScale, V2vLink};
pub use mobility::{update_mobility, Heading, StreetGrid, VehicleState};
pub use observation::Observation;
pub use radio::{rates, received_interference, sinr_v2i, sinr_v2v};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};

/// Bonus credited to the shared reward for each payload completed in a slot.
pub const DELIVERY_BONUS: f64 = 0.5;
/// Weight of the summed V2I spectral efficiency in the shared reward.
pub const V2I_RATE_WEIGHT: f64 = 0.1;

/// One V2V agent's choice for a slot: a power level and a single sub-channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action {
    pub power_index: usize,
    pub channel_index: usize,
}

impl Action {
    /// Decodes a joint action index (`power_index * N + channel_index`).
    pub fn from_index(index: usize, config: &ScenarioConfig) -> Self {
        let n = config.n_channels();
        Self {
            power_index: index / n,
            channel_index: index % n,
        }
    }

    pub fn index(&self, config: &ScenarioConfig) -> usize {
        self.power_index * config.n_channels() + self.channel_index
    }

    pub fn validate(&self, config: &ScenarioConfig) -> Result<()> {
        if self.power_index >= config.n_power_levels() || self.channel_index >= config.n_channels()
        {
            return Err(Error::Action(format!(
                "{self:?} with {} power levels and {} sub-channels",
                config.n_power_levels(),
                config.n_channels()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkBookkeeping {
    pub remaining_bytes: Vec<f64>,
    pub remaining_slots: Vec<usize>,
    pub active: Vec<bool>,
}

impl LinkBookkeeping {
    fn new(config: &ScenarioConfig) -> Self {
        let k = config.n_v2v;
        Self {
            remaining_bytes: vec![config.payload_bytes; k],
            remaining_slots: vec![config.slots_per_episode; k],
            active: vec![config.payload_bytes > 0.0; k],
        }
    }

    pub fn delivered(&self) -> usize {
        self.active.iter().filter(|a| !**a).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Shared reward, identical for every agent.
    pub reward: f64,
    /// Links whose payload completed in this slot.
    pub deliveries: usize,
    pub v2i_rates: Vec<f64>,
    pub v2v_rates: Vec<f64>,
    /// Bytes removed from each link's payload in this slot.
    pub drained_bytes: Vec<f64>,
    /// Observations for the next slot, one per agent.
    pub observations: Vec<Observation>,
    pub done: bool,
}

impl StepOutcome {
    /// Per-agent rewards; the reward is shared so every entry is equal.
    pub fn agent_rewards(&self) -> Vec<f64> {
        vec![self.reward; self.drained_bytes.len()]
    }
}

#[derive(Debug, Clone)]
pub struct V2xEnv {
    config: ScenarioConfig,
    grid: StreetGrid,
    rng: ChaCha8Rng,
    vehicles: Vec<VehicleState>,
    links: Vec<V2vLink>,
    large_scale: LargeScale,
    channel: ChannelState,
    book: LinkBookkeeping,
    /// Interference seen by each V2V receiver in the previous slot, `[k * N + n]`.
    prev_interference: Vec<f64>,
    slot: usize,
}

impl V2xEnv {
    pub fn reset(config: &ScenarioConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = StreetGrid::new(config);
        let vehicles: Vec<VehicleState> = (0..config.n_vehicles())
            .map(|_| grid.place(config.speed_mps, &mut rng))
            .collect();
        let links = channel::assign_links(&vehicles, config.n_v2v);
        let large_scale = LargeScale::compute(config, &vehicles, &links, &mut rng);
        let channel = large_scale.realise(config.n_channels(), config.channel.fast_fading, &mut rng);
        Ok(Self {
            config: config.clone(),
            grid,
            rng,
            vehicles,
            links,
            large_scale,
            channel,
            book: LinkBookkeeping::new(config),
            prev_interference: vec![0.0; config.n_v2v * config.n_channels()],
            slot: 0,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn vehicles(&self) -> &[VehicleState] {
        &self.vehicles
    }

    pub fn links(&self) -> &[V2vLink] {
        &self.links
    }

    pub fn channel(&self) -> &ChannelState {
        &self.channel
    }

    pub fn bookkeeping(&self) -> &LinkBookkeeping {
        &self.book
    }

    pub fn previous_interference(&self) -> &[f64] {
        &self.prev_interference
    }

    /// Slots already played in this episode.
    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn is_done(&self) -> bool {
        self.slot >= self.config.slots_per_episode
    }

    pub fn observe(&self, agent: usize) -> Result<Observation> {
        if agent >= self.config.n_v2v {
            return Err(Error::AgentIndex {
                index: agent,
                agents: self.config.n_v2v,
            });
        }
        Ok(observation::build(self, agent))
    }

    pub fn observe_all(&self) -> Vec<Observation> {
        (0..self.config.n_v2v)
            .map(|k| observation::build(self, k))
            .collect()
    }

    pub fn step(&mut self, actions: &[Action]) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::EpisodeFinished { slots: self.slot });
        }
        let cfg = &self.config;
        let active = &self.book.active;
        let g_i = sinr_v2i(&self.channel, actions, active, cfg)?;
        let g_v = sinr_v2v(&self.channel, actions, active, cfg)?;
        let interference = received_interference(&self.channel, actions, active, cfg)?;
        let (v2i_rates, v2v_rates) = rates(&g_i, &g_v, cfg);

        let mut deliveries = 0;
        let mut drained_bytes = vec![0.0; cfg.n_v2v];
        for k in 0..cfg.n_v2v {
            if !self.book.active[k] {
                continue;
            }
            let sent = cfg.slot_duration_s * v2v_rates[k] / 8.0;
            let before = self.book.remaining_bytes[k];
            let drained = sent.min(before);
            let after = before - drained;
            drained_bytes[k] = drained;
            self.book.remaining_bytes[k] = after;
            if after <= 0.0 {
                self.book.active[k] = false;
                deliveries += 1;
            }
        }

        let spectral_efficiency: f64 = g_i.iter().map(|&g| (1.0 + g).log2()).sum();
        let reward = DELIVERY_BONUS * deliveries as f64 + V2I_RATE_WEIGHT * spectral_efficiency;

        self.prev_interference = interference;
        for s in &mut self.book.remaining_slots {
            *s = s.saturating_sub(1);
        }
        self.slot += 1;
        let dt = cfg.slot_duration_s;
        update_mobility(&mut self.vehicles, &self.config, &self.grid, dt, &mut self.rng);
        let done = self.is_done();
        if !done {
            self.channel = self.large_scale.realise(
                self.config.n_channels(),
                self.config.channel.fast_fading,
                &mut self.rng,
            );
        }

        Ok(StepOutcome {
            reward,
            deliveries,
            v2i_rates,
            v2v_rates,
            drained_bytes,
            observations: self.observe_all(),
            done,
        })
    }
}
