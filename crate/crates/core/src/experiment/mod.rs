//! Training runs, evaluation sweeps and metric output.

pub mod evaluate;
pub mod metrics;

use std::path::{Path, PathBuf};

pub use evaluate::{evaluate_cell, evaluate_delivery, sweep, train_cell, Evaluation, SweepAxis, TrainedCell};
pub use metrics::{
    binomial_half_width, moving_average, normalize_curves, read_csv, read_jsonl, tail_mean, write_csv,
    write_jsonl, RunMetrics, SweepRow, TrainingRow,
};

use crate::config::RunConfig;
use crate::error::Result;
use crate::federation::{run_training_with, FedRoundState, Method, TrainOptions, TrainingOutcome};
use crate::policy::Checkpoint;

/// `{root}/{run_id}/{method}/ep{j}.ckpt`; independent learners add `.k{agent}`
/// before the extension since they have no shared model.
pub fn checkpoint_path(root: &Path, run_id: &str, method: Method, episode: usize, agent: Option<usize>) -> PathBuf {
    let name = match agent {
        Some(k) => format!("ep{episode}.k{k}.ckpt"),
        None => format!("ep{episode}.ckpt"),
    };
    root.join(run_id).join(method.label()).join(name)
}

fn write_checkpoints(
    root: &Path,
    config: &RunConfig,
    hash: u64,
    method: Method,
    episode: usize,
    state: &FedRoundState,
) -> Result<()> {
    let run_id = &config.experiment.run_id;
    let save = |params: &crate::policy::MlpParams, agent| {
        Checkpoint {
            config_hash: hash,
            episode: episode as u64,
            params: params.clone(),
        }
        .save(&checkpoint_path(root, run_id, method, episode, agent))
    };
    match method {
        Method::Rifrl | Method::Frl => save(&state.global, None),
        Method::IndependentPg => state
            .agents
            .iter()
            .enumerate()
            .try_for_each(|(k, a)| save(&a.params, Some(k))),
        Method::Random => Ok(()),
    }
}

/// Trains one method, optionally writing checkpoints under `checkpoint_root`
/// every `checkpoint_interval` episodes and after the last one.
pub fn train(
    config: &RunConfig,
    method: Method,
    checkpoint_root: Option<&Path>,
    log_messages: bool,
) -> Result<(TrainingOutcome, RunMetrics)> {
    let hash = config.hash();
    let interval = config.experiment.checkpoint_interval;
    let last = config.federation.episodes;
    let mut hook = |j: usize, state: &FedRoundState| match checkpoint_root {
        Some(root) if j == last || (interval > 0 && j % interval == 0) => {
            write_checkpoints(root, config, hash, method, j, state)
        }
        _ => Ok(()),
    };
    let outcome = run_training_with(
        config,
        method,
        TrainOptions {
            rescaler: None,
            log_messages,
            on_episode: Some(&mut hook),
        },
    )?;
    let mut metrics = RunMetrics::new(config.experiment.moving_average_window);
    metrics.push_training(method.label(), config.experiment.seed, &outcome.returns());
    Ok((outcome, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_paths() {
        let p = checkpoint_path(Path::new("out"), "r1", Method::Rifrl, 40, None);
        assert_eq!(p, Path::new("out/r1/rifrl/ep40.ckpt"));
        let p = checkpoint_path(Path::new("out"), "r1", Method::IndependentPg, 0, Some(3));
        assert_eq!(p, Path::new("out/r1/independent_pg/ep0.k3.ckpt"));
    }

    #[test]
    fn writes_periodic_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::desk();
        cfg.scenario.n_v2i = 2;
        cfg.scenario.n_v2v = 2;
        cfg.scenario.slots_per_episode = 5;
        cfg.learning.hidden_sizes = vec![4];
        cfg.federation.episodes = 7;
        cfg.experiment.checkpoint_interval = 3;
        let (out, metrics) = train(&cfg, Method::Frl, Some(dir.path()), false).unwrap();
        assert_eq!(metrics.training.len(), 8);
        for j in [0, 3, 6, 7] {
            let p = checkpoint_path(dir.path(), "run", Method::Frl, j, None);
            let ck = Checkpoint::load(&p).unwrap();
            assert_eq!(ck.episode, j as u64);
            assert_eq!(ck.config_hash, cfg.hash());
        }
        assert!(!checkpoint_path(dir.path(), "run", Method::Frl, 1, None).exists());
        let last = Checkpoint::load(&checkpoint_path(dir.path(), "run", Method::Frl, 7, None)).unwrap();
        assert_eq!(last.params, out.state.global);
    }
}
