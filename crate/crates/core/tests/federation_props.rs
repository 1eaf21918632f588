mod common;

use std::sync::Mutex;

use rifrl::brio;
use rifrl::federation::{
    aggregate, identity_rescaler, run_training, run_training_with, FedRoundState, Method, TrainOptions,
    TrainedPolicy,
};
use rifrl::policy::MlpParams;
use rifrl::RunConfig;

fn tiny() -> RunConfig {
    let mut cfg = RunConfig::desk();
    cfg.scenario.n_v2i = 2;
    cfg.scenario.n_v2v = 3;
    cfg.scenario.slots_per_episode = 12;
    cfg.learning.hidden_sizes = vec![10, 8];
    cfg.federation.episodes = 23;
    cfg.federation.aggregation_interval = 4;
    cfg
}

#[test]
fn rifrl_without_rescaling_is_frl() {
    let cfg = tiny();
    let stub = run_training_with(
        &cfg,
        Method::Rifrl,
        TrainOptions {
            rescaler: Some(identity_rescaler),
            ..TrainOptions::default()
        },
    )
    .unwrap();
    let frl = run_training(&cfg, Method::Frl).unwrap();
    assert_eq!(stub.returns(), frl.returns());
    assert_eq!(stub.state.global, frl.state.global);
    for (a, b) in stub.state.agents.iter().zip(&frl.state.agents) {
        assert_eq!(a.params, b.params);
    }
}

#[test]
fn rescaling_changes_the_run() {
    let cfg = tiny();
    let rifrl = run_training(&cfg, Method::Rifrl).unwrap();
    let frl = run_training(&cfg, Method::Frl).unwrap();
    assert_ne!(rifrl.state.global, frl.state.global);
}

#[test]
fn single_agent_frl_is_independent_pg() {
    let mut cfg = tiny();
    cfg.scenario.n_v2v = 1;
    cfg.learning.lr_independent = cfg.learning.lr_federated;
    let frl = run_training(&cfg, Method::Frl).unwrap();
    let ind = run_training(&cfg, Method::IndependentPg).unwrap();
    assert_eq!(frl.returns(), ind.returns());
    assert_eq!(frl.state.agents[0].params, ind.state.agents[0].params);
}

#[test]
fn upload_count_follows_schedule() {
    for (episodes, interval) in [(23, 4), (20, 5), (3, 1), (7, 10)] {
        let mut cfg = tiny();
        cfg.federation.episodes = episodes;
        cfg.federation.aggregation_interval = interval;
        let out = run_training(&cfg, Method::Rifrl).unwrap();
        assert_eq!(out.uploads, cfg.scenario.n_v2v * (episodes / interval + 1));
        let rounds: Vec<usize> = out.records.iter().filter(|r| r.aggregated).map(|r| r.episode).collect();
        let expected: Vec<usize> = (0..=episodes).step_by(interval).collect();
        assert_eq!(rounds, expected);
    }
}

#[test]
fn rescaled_uploads_keep_each_local_policy() {
    let cfg = tiny();
    let mut checked = 0;
    let mut hook = |j: usize, s: &FedRoundState| {
        // just before a round, compare local models with their uploads
        if (j + 1) % s.aggregation_interval == 0 {
            let mut rng = common::rng(j as u64);
            for a in &s.agents {
                let up = brio::rescale(&a.params)?;
                for _ in 0..10 {
                    let x: Vec<f64> = (0..a.params.input_dim()).map(|_| common::normal(&mut rng)).collect();
                    let p = a.params.forward(&x)?;
                    let q = up.forward(&x)?;
                    assert!(p.iter().zip(&q).all(|(u, v)| (u - v).abs() <= 1e-6));
                }
            }
            checked += 1;
        }
        Ok(())
    };
    run_training_with(
        &cfg,
        Method::Rifrl,
        TrainOptions {
            on_episode: Some(&mut hook),
            ..TrainOptions::default()
        },
    )
    .unwrap();
    assert!(checked >= 5);
}

static SEEN: Mutex<Vec<MlpParams>> = Mutex::new(Vec::new());

fn recording_rescaler(p: &MlpParams) -> rifrl::Result<MlpParams> {
    SEEN.lock().unwrap().push(p.clone());
    brio::rescale(p)
}

#[test]
fn broadcast_model_is_rescaled_mean_of_rescaled_uploads() {
    let mut cfg = tiny();
    cfg.federation.episodes = 4;
    let out = run_training_with(
        &cfg,
        Method::Rifrl,
        TrainOptions {
            rescaler: Some(recording_rescaler),
            ..TrainOptions::default()
        },
    )
    .unwrap();
    let seen = SEEN.lock().unwrap().clone();
    let k = cfg.scenario.n_v2v;
    // two rounds, each with K uploads followed by the server-side call
    assert_eq!(seen.len(), 2 * (k + 1));
    let locals = &seen[k + 1..2 * k + 1];
    let rescaled: Vec<MlpParams> = locals.iter().map(|p| brio::rescale(p).unwrap()).collect();
    let mut mean = rescaled[0].zeros_like();
    for (i, v) in mean.iter_mut().enumerate() {
        *v = rescaled.iter().map(|m| *m.iter().nth(i).unwrap()).sum::<f64>() / k as f64;
    }
    let expected = brio::rescale(&mean).unwrap();
    assert!(out.state.global.max_abs_diff(&expected) <= 1e-12);
    assert!(out.state.in_sync());
    let again = brio::rescale(&out.state.global).unwrap();
    assert!(again.max_abs_diff(&out.state.global) <= 1e-12);
}

#[test]
fn aggregate_is_entrywise_mean() {
    let nets: Vec<_> = (0..5)
        .map(|s| MlpParams::init(&[3, 4, 2], rifrl::policy::Activation::Relu, s).unwrap())
        .collect();
    let mean = aggregate(&nets).unwrap();
    for (i, v) in mean.iter().enumerate() {
        let expected = nets.iter().map(|n| *n.iter().nth(i).unwrap()).sum::<f64>() / 5.0;
        assert!((v - expected).abs() <= 1e-15);
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = tiny();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_training(&cfg, Method::Rifrl).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.returns(), b.returns());
    assert_eq!(a.state.global, b.state.global);
}

#[test]
fn trained_policy_kinds() {
    let cfg = tiny();
    assert!(matches!(run_training(&cfg, Method::Frl).unwrap().policy, TrainedPolicy::Shared(_)));
    match run_training(&cfg, Method::IndependentPg).unwrap().policy {
        TrainedPolicy::PerAgent(p) => assert_eq!(p.len(), cfg.scenario.n_v2v),
        _ => panic!("independent learners keep one model per agent"),
    }
}
