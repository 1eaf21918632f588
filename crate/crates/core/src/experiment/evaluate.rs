//! Greedy evaluation of trained policies and the payload / link-count sweeps.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{binomial_half_width, SweepRow};
use crate::config::{RunConfig, ScenarioConfig};
use crate::error::{Error, Result};
use crate::federation::{play_episode, run_training, ActionSource, Method, TrainedPolicy};
use crate::policy::MlpParams;
use crate::seed::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub delivered: usize,
    pub link_episodes: usize,
    pub episodes: usize,
}

impl Evaluation {
    pub fn probability(&self) -> f64 {
        if self.link_episodes == 0 {
            return 0.0;
        }
        self.delivered as f64 / self.link_episodes as f64
    }

    pub fn half_width(&self) -> f64 {
        binomial_half_width(self.probability(), self.link_episodes)
    }
}

fn agent_models<'a>(policy: &'a TrainedPolicy, n_agents: usize) -> Result<Option<Vec<&'a MlpParams>>> {
    match policy {
        TrainedPolicy::Random => Ok(None),
        TrainedPolicy::Shared(p) => Ok(Some(vec![p; n_agents])),
        TrainedPolicy::PerAgent(ps) if ps.len() == n_agents => Ok(Some(ps.iter().collect())),
        TrainedPolicy::PerAgent(ps) => Err(Error::Shape(format!(
            "{} per-agent models for {} links",
            ps.len(),
            n_agents
        ))),
    }
}

/// Runs `episodes` fresh episodes with greedy actions (uniform for
/// [`TrainedPolicy::Random`]) and counts the links that delivered their payload.
///
/// Environment draws come from the evaluation streams of `seed`, so they never
/// coincide with a training episode of the same seed.
pub fn evaluate_delivery(
    policy: &TrainedPolicy,
    scenario: &ScenarioConfig,
    episodes: usize,
    seed: u64,
) -> Result<Evaluation> {
    scenario.validate()?;
    let models = agent_models(policy, scenario.n_v2v)?;
    let delivered = (0..episodes)
        .into_par_iter()
        .map(|e| {
            let env_seed = seed::derive(seed, Stream::EvalEnv, &[e as u64]);
            let policy_seed = seed::derive(seed, Stream::EvalPolicy, &[e as u64]);
            let source = match &models {
                Some(m) => ActionSource::Greedy(m),
                None => ActionSource::Uniform,
            };
            play_episode(scenario, source, env_seed, policy_seed, false).map(|r| r.delivered)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(Evaluation {
        delivered,
        link_episodes: episodes * scenario.n_v2v,
        episodes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Payload size in bytes; one trained model per method is evaluated at
    /// every value.
    Payload,
    /// Number of V2V links; the observation width depends on it, so every
    /// value is trained separately.
    Agents,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Payload => "payload_bytes",
            SweepAxis::Agents => "n_v2v",
        }
    }

    fn apply(self, scenario: &mut ScenarioConfig, value: f64) -> Result<()> {
        match self {
            SweepAxis::Payload => scenario.payload_bytes = value,
            SweepAxis::Agents => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::Config(format!("link count must be a positive integer, got {value}")));
                }
                scenario.n_v2v = value as usize;
            }
        }
        scenario.validate()
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "payload" | "payload_bytes" => Ok(SweepAxis::Payload),
            "agents" | "n_agents" | "n_v2v" | "links" => Ok(SweepAxis::Agents),
            other => Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

/// A trained policy together with the configuration it was trained under.
#[derive(Debug, Clone)]
pub struct TrainedCell {
    pub method: Method,
    pub seed: u64,
    pub config: RunConfig,
    pub policy: TrainedPolicy,
    pub returns: Vec<f64>,
}

pub fn train_cell(config: &RunConfig, method: Method, seed: u64) -> Result<TrainedCell> {
    let mut cfg = config.clone();
    cfg.experiment.seed = seed;
    let out = run_training(&cfg, method)?;
    Ok(TrainedCell {
        method,
        seed,
        returns: out.returns(),
        policy: out.policy,
        config: cfg,
    })
}

/// Evaluates `cell` on a copy of its scenario with `axis` set to `value`.
pub fn evaluate_cell(cell: &TrainedCell, axis: SweepAxis, value: f64, episodes: usize) -> Result<SweepRow> {
    let mut scenario = cell.config.scenario.clone();
    axis.apply(&mut scenario, value)?;
    let eval = evaluate_delivery(&cell.policy, &scenario, episodes, cell.seed)?;
    Ok(SweepRow {
        method: cell.method.label().into(),
        seed: cell.seed,
        axis_name: axis.name().into(),
        axis_value: value,
        delivery_prob: eval.probability(),
        ci_half_width: eval.half_width(),
        episodes,
    })
}

/// Trains and evaluates every (method, seed, value) cell of a sweep.
///
/// Rows come back ordered by method, seed, then value regardless of how the
/// cells were scheduled.
pub fn sweep(
    config: &RunConfig,
    axis: SweepAxis,
    values: &[f64],
    methods: &[Method],
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let episodes = config.experiment.eval_episodes;
    let pairs: Vec<(Method, u64)> = methods
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    let rows: Vec<Vec<SweepRow>> = match axis {
        SweepAxis::Payload => pairs
            .par_iter()
            .map(|&(m, s)| {
                let cell = train_cell(config, m, s)?;
                values
                    .iter()
                    .map(|&v| evaluate_cell(&cell, axis, v, episodes))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?,
        SweepAxis::Agents => pairs
            .par_iter()
            .map(|&(m, s)| {
                values
                    .iter()
                    .map(|&v| {
                        let mut cfg = config.clone();
                        axis.apply(&mut cfg.scenario, v)?;
                        let cell = train_cell(&cfg, m, s)?;
                        evaluate_cell(&cell, axis, v, episodes)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?,
    };
    Ok(rows.into_iter().flatten().collect())
}
