//! Federated policy-gradient training.
//!
//! Every episode all `K` agents act together in one shared environment and
//! receive the same reward. Each agent then takes one RMSprop ascent step on
//! its own REINFORCE estimate. On episodes `j` with `j % G == 0` the
//! federated methods upload their local models, the server averages them and
//! broadcasts the result. RIFRL applies BRIO to every upload and to the
//! average before broadcasting; FRL is the same loop without rescaling.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brio;
use crate::config::{HiddenActivation, RunConfig, ScenarioConfig};
use crate::env::{Action, V2xEnv};
use crate::error::{Error, Result};
use crate::policy::{sample_action, Activation, ForwardCache, MlpParams, RmsProp, ScoreAccumulator, Trajectory};
use crate::seed::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rifrl,
    Frl,
    IndependentPg,
    Random,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Rifrl, Method::Frl, Method::IndependentPg, Method::Random];

    pub fn label(self) -> &'static str {
        match self {
            Method::Rifrl => "rifrl",
            Method::Frl => "frl",
            Method::IndependentPg => "independent_pg",
            Method::Random => "random",
        }
    }

    pub fn aggregates(self) -> bool {
        matches!(self, Method::Rifrl | Method::Frl)
    }

    pub fn learns(self) -> bool {
        self != Method::Random
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "rifrl" => Ok(Method::Rifrl),
            "frl" | "fedavg" => Ok(Method::Frl),
            "independent_pg" | "independent" | "pg" => Ok(Method::IndependentPg),
            "random" => Ok(Method::Random),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Entrywise mean of the models, summed in index order.
pub fn aggregate(models: &[MlpParams]) -> Result<MlpParams> {
    let first = models
        .first()
        .ok_or_else(|| Error::Shape("cannot aggregate zero models".into()))?;
    let mut sum = first.zeros_like();
    for m in models {
        first.check_shape(m)?;
        sum.add_assign(m);
    }
    sum.scale(1.0 / models.len() as f64);
    Ok(sum)
}

/// How agents pick actions during an episode.
#[derive(Debug, Clone, Copy)]
pub enum ActionSource<'a> {
    /// Sample from each agent's softmax policy.
    Sample(&'a [&'a MlpParams]),
    /// Take each agent's most probable action.
    Greedy(&'a [&'a MlpParams]),
    /// Uniformly random joint action index.
    Uniform,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub trajectories: Vec<Trajectory>,
    /// `Σ_t ∇ log π(a_t | z_t)` per agent, only for sampled episodes.
    pub scores: Vec<ScoreAccumulator>,
    pub episode_return: f64,
    /// Links whose payload was fully delivered by the end of the episode.
    pub delivered: usize,
}

/// Plays one episode with all agents acting jointly in the same environment.
///
/// Agent `k` draws its actions from the stream `(policy_seed, k)`.
pub fn play_episode(
    scenario: &ScenarioConfig,
    source: ActionSource<'_>,
    env_seed: u64,
    policy_seed: u64,
    record: bool,
) -> Result<EpisodeResult> {
    let n_agents = scenario.n_v2v;
    let n_actions = scenario.n_actions();
    let models: Option<&[&MlpParams]> = match source {
        ActionSource::Sample(m) | ActionSource::Greedy(m) => Some(m),
        ActionSource::Uniform => None,
    };
    if let Some(m) = models {
        if m.len() != n_agents {
            return Err(Error::Shape(format!(
                "{} models for {} agents",
                m.len(),
                n_agents
            )));
        }
        if let Some(bad) = m
            .iter()
            .find(|p| p.input_dim() != scenario.obs_dim() || p.output_dim() != n_actions)
        {
            return Err(Error::Shape(format!(
                "model maps {} -> {}, scenario needs {} -> {}",
                bad.input_dim(),
                bad.output_dim(),
                scenario.obs_dim(),
                n_actions
            )));
        }
    }

    let mut env = V2xEnv::reset(scenario, env_seed)?;
    let mut rngs: Vec<_> = (0..n_agents)
        .map(|k| seed::rng(policy_seed, Stream::Policy, &[k as u64]))
        .collect();
    let sampling = matches!(source, ActionSource::Sample(_));
    let mut scores: Vec<ScoreAccumulator> = match (sampling, models) {
        (true, Some(m)) => m.iter().map(|p| ScoreAccumulator::new(p)).collect(),
        _ => Vec::new(),
    };
    let mut caches = vec![ForwardCache::default(); n_agents];
    let mut trajectories = vec![Trajectory::default(); n_agents];
    let mut observations = env.observe_all();
    let mut actions = Vec::with_capacity(n_agents);
    let mut chosen = Vec::with_capacity(n_agents);
    let mut episode_return = 0.0;

    loop {
        actions.clear();
        chosen.clear();
        for k in 0..n_agents {
            let index = match source {
                ActionSource::Uniform => rngs[k].random_range(0..n_actions),
                ActionSource::Greedy(m) => m[k].greedy_action(&observations[k])?,
                ActionSource::Sample(m) => {
                    m[k].forward_cached(&observations[k], &mut caches[k])?;
                    let a = sample_action(&caches[k].probs, &mut rngs[k]);
                    scores[k].add(m[k], &caches[k], a)?;
                    a
                }
            };
            chosen.push(index);
            actions.push(Action::from_index(index, scenario));
        }
        let out = env.step(&actions)?;
        episode_return += out.reward;
        let next = out.observations;
        if record {
            for (k, obs) in std::mem::replace(&mut observations, next).into_iter().enumerate() {
                trajectories[k].push(obs.0, chosen[k], out.reward);
            }
        } else {
            observations = next;
        }
        if out.done {
            break;
        }
    }

    Ok(EpisodeResult {
        trajectories,
        scores,
        episode_return,
        delivered: env.bookkeeping().delivered(),
    })
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub params: MlpParams,
    pub optimizer: RmsProp,
    /// Running mean of past returns, used only when the baseline is enabled.
    baseline: Option<f64>,
    seen: usize,
}

impl Agent {
    fn new(params: MlpParams, lr: f64, cfg: &RunConfig) -> Self {
        let optimizer = RmsProp::new(&params, lr, cfg.learning.rmsprop_decay, cfg.learning.rmsprop_eps);
        Self {
            params,
            optimizer,
            baseline: None,
            seen: 0,
        }
    }

    /// One ascent step on `(R(τ) - b) Σ_t ∇ log π`.
    fn learn(&mut self, score: ScoreAccumulator, episode_return: f64, use_baseline: bool) -> Result<()> {
        let b = if use_baseline {
            self.baseline.unwrap_or(episode_return)
        } else {
            0.0
        };
        let grad = score.finish(episode_return - b);
        self.optimizer.step(&mut self.params, &grad, true)?;
        self.seen += 1;
        let prev = self.baseline.unwrap_or(0.0);
        self.baseline = Some(prev + (episode_return - prev) / self.seen as f64);
        Ok(())
    }
}

/// Server and client models for one run.
#[derive(Debug, Clone)]
pub struct FedRoundState {
    pub global: MlpParams,
    pub agents: Vec<Agent>,
    /// Next episode to run.
    pub episode: usize,
    pub aggregation_interval: usize,
    pub total_episodes: usize,
}

impl FedRoundState {
    pub fn new(config: &RunConfig, method: Method) -> Result<Self> {
        config.validate()?;
        let sizes = config.layer_sizes();
        let hidden = match config.learning.activation {
            HiddenActivation::Relu => Activation::Relu,
            HiddenActivation::LeakyRelu => Activation::LeakyRelu {
                slope: config.learning.leaky_slope,
            },
        };
        let base = config.experiment.seed;
        let global = MlpParams::init(&sizes, hidden, seed::derive(base, Stream::Init, &[]))?;
        let lr = match method {
            Method::IndependentPg => config.learning.lr_independent,
            _ => config.learning.lr_federated,
        };
        let agents = (0..config.scenario.n_v2v)
            .map(|k| {
                let params = if config.learning.shared_init {
                    Ok(global.clone())
                } else {
                    MlpParams::init(&sizes, hidden, seed::derive(base, Stream::Init, &[k as u64 + 1]))
                };
                params.map(|p| Agent::new(p, lr, config))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            global,
            agents,
            episode: 0,
            aggregation_interval: config.federation.aggregation_interval,
            total_episodes: config.federation.episodes,
        })
    }

    pub fn is_aggregation_episode(&self, episode: usize) -> bool {
        episode % self.aggregation_interval == 0
    }

    /// True when every local model equals the global model entrywise.
    pub fn in_sync(&self) -> bool {
        self.agents.iter().all(|a| a.params == self.global)
    }
}

pub type Rescaler = fn(&MlpParams) -> Result<MlpParams>;

pub fn identity_rescaler(p: &MlpParams) -> Result<MlpParams> {
    Ok(p.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Upload,
    Broadcast,
}

/// Simulated server traffic, recorded when message logging is on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MessageEvent {
    pub episode: usize,
    pub kind: MessageKind,
    /// Uploading agent; `None` for broadcasts.
    pub agent: Option<usize>,
    pub bytes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub episode_return: f64,
    pub delivered: usize,
    pub aggregated: bool,
}

/// What a finished run produces.
#[derive(Debug, Clone)]
pub enum TrainedPolicy {
    /// One model used by every agent (FRL, RIFRL).
    Shared(MlpParams),
    /// One model per agent (independent learners).
    PerAgent(Vec<MlpParams>),
    Random,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub method: Method,
    pub policy: TrainedPolicy,
    pub records: Vec<EpisodeRecord>,
    pub uploads: usize,
    pub messages: Vec<MessageEvent>,
    pub state: FedRoundState,
}

impl TrainingOutcome {
    pub fn returns(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.episode_return).collect()
    }
}

pub struct TrainOptions<'a> {
    /// Overrides the rescaling applied by RIFRL; `None` uses BRIO.
    pub rescaler: Option<Rescaler>,
    pub log_messages: bool,
    /// Called after every episode with the episode index and current state.
    pub on_episode: Option<&'a mut dyn FnMut(usize, &FedRoundState) -> Result<()>>,
}

impl Default for TrainOptions<'_> {
    fn default() -> Self {
        Self {
            rescaler: None,
            log_messages: false,
            on_episode: None,
        }
    }
}

pub fn run_training(config: &RunConfig, method: Method) -> Result<TrainingOutcome> {
    run_training_with(config, method, TrainOptions::default())
}

pub fn run_training_with(
    config: &RunConfig,
    method: Method,
    mut options: TrainOptions<'_>,
) -> Result<TrainingOutcome> {
    let mut state = FedRoundState::new(config, method)?;
    let rescaler: Rescaler = match method {
        Method::Rifrl => options.rescaler.unwrap_or(brio::rescale),
        _ => identity_rescaler,
    };
    let base = config.experiment.seed;
    let use_baseline = config.learning.reward_baseline;
    let model_bytes = state.global.n_params() * 8;
    let mut records = Vec::with_capacity(config.federation.episodes + 1);
    let mut messages = Vec::new();
    let mut uploads = 0;

    for j in 0..=config.federation.episodes {
        state.episode = j;
        let env_seed = seed::derive(base, Stream::TrainEnv, &[j as u64]);
        let policy_seed = seed::derive(base, Stream::Policy, &[j as u64]);
        let result = if method.learns() {
            let models: Vec<&MlpParams> = state.agents.iter().map(|a| &a.params).collect();
            play_episode(&config.scenario, ActionSource::Sample(&models), env_seed, policy_seed, false)?
        } else {
            play_episode(&config.scenario, ActionSource::Uniform, env_seed, policy_seed, false)?
        };
        let ret = result.episode_return;

        if method.learns() {
            state
                .agents
                .par_iter_mut()
                .zip(result.scores.into_par_iter())
                .try_for_each(|(agent, score)| agent.learn(score, ret, use_baseline))?;
            if let Some(k) = state.agents.iter().position(|a| !a.params.is_finite()) {
                return Err(Error::NonFinite {
                    method: method.label().into(),
                    agent: k,
                    episode: j,
                });
            }
        }

        let aggregated = method.aggregates() && state.is_aggregation_episode(j);
        if aggregated {
            let uploaded = state
                .agents
                .par_iter()
                .map(|a| rescaler(&a.params))
                .collect::<Result<Vec<_>>>()?;
            uploads += uploaded.len();
            if options.log_messages {
                messages.extend((0..uploaded.len()).map(|k| MessageEvent {
                    episode: j,
                    kind: MessageKind::Upload,
                    agent: Some(k),
                    bytes: model_bytes,
                }));
            }
            let global = rescaler(&aggregate(&uploaded)?)?;
            if !global.is_finite() {
                return Err(Error::NonFinite {
                    method: method.label().into(),
                    agent: usize::MAX,
                    episode: j,
                });
            }
            for agent in &mut state.agents {
                agent.params = global.clone();
                if config.learning.reset_optimizer_on_broadcast {
                    agent.optimizer.reset();
                }
            }
            state.global = global;
            if options.log_messages {
                messages.push(MessageEvent {
                    episode: j,
                    kind: MessageKind::Broadcast,
                    agent: None,
                    bytes: model_bytes,
                });
            }
        }

        records.push(EpisodeRecord {
            episode: j,
            episode_return: ret,
            delivered: result.delivered,
            aggregated,
        });
        if let Some(hook) = options.on_episode.as_mut() {
            hook(j, &state)?;
        }
    }
    state.episode = config.federation.episodes + 1;

    let policy = match method {
        Method::Rifrl | Method::Frl => TrainedPolicy::Shared(state.global.clone()),
        Method::IndependentPg => {
            TrainedPolicy::PerAgent(state.agents.iter().map(|a| a.params.clone()).collect())
        }
        Method::Random => TrainedPolicy::Random,
    };
    Ok(TrainingOutcome {
        method,
        policy,
        records,
        uploads,
        messages,
        state,
    })
}
