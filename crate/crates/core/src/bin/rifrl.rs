use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use rifrl::brio;
use rifrl::experiment::{self, evaluate_delivery, normalize_curves, tail_mean, SweepAxis};
use rifrl::federation::{Method, TrainedPolicy};
use rifrl::policy::gradcheck::{check_grad_log_prob, expected_score, GradCheckReport};
use rifrl::policy::{Activation, Checkpoint, MlpParams};
use rifrl::seed::{self, Stream};
use rifrl::RunConfig;

#[derive(Parser)]
#[command(name = "rifrl", version, about = "Federated policy-gradient training for V2X spectrum sharing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one or more methods and write per-episode metrics.
    Train(TrainArgs),
    /// Measure the delivery probability of a checkpoint or the random policy.
    Evaluate(EvaluateArgs),
    /// Train and evaluate over payload sizes or link counts.
    Sweep(SweepArgs),
    /// Check BRIO equivalence, column norms and idempotence on a checkpoint.
    BrioCheck(BrioCheckArgs),
    /// Compare analytic policy gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Print the resolved configuration as TOML.
    ShowConfig(ConfigArgs),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML configuration file; missing keys take profile defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in profile used when no file is given: desk or paper.
    #[arg(long, default_value = "desk")]
    profile: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Training episodes J (episodes 0..=J are run).
    #[arg(long)]
    episodes: Option<usize>,
    /// Aggregation interval G.
    #[arg(long)]
    interval: Option<usize>,
    /// Number of V2V links K.
    #[arg(long)]
    n_v2v: Option<usize>,
    /// Number of V2I links / sub-channels N.
    #[arg(long)]
    n_v2i: Option<usize>,
    #[arg(long)]
    payload: Option<f64>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    lr_federated: Option<f64>,
    #[arg(long)]
    lr_independent: Option<f64>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    checkpoint_interval: Option<usize>,
    #[arg(long)]
    run_id: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path).with_context(|| format!("reading config {}", path.display()))?,
            None => RunConfig::profile(&self.profile)?,
        };
        let e = &mut cfg.experiment;
        if let Some(v) = self.seed {
            e.seed = v;
        }
        if let Some(v) = self.eval_episodes {
            e.eval_episodes = v;
        }
        if let Some(v) = self.window {
            e.moving_average_window = v;
        }
        if let Some(v) = self.checkpoint_interval {
            e.checkpoint_interval = v;
        }
        if let Some(v) = &self.run_id {
            e.run_id = v.clone();
        }
        if let Some(v) = self.episodes {
            cfg.federation.episodes = v;
        }
        if let Some(v) = self.interval {
            cfg.federation.aggregation_interval = v;
        }
        if let Some(v) = self.n_v2v {
            cfg.scenario.n_v2v = v;
        }
        if let Some(v) = self.n_v2i {
            cfg.scenario.n_v2i = v;
        }
        if let Some(v) = self.payload {
            cfg.scenario.payload_bytes = v;
        }
        if let Some(v) = &self.hidden {
            cfg.learning.hidden_sizes = v.clone();
        }
        if let Some(v) = self.lr_federated {
            cfg.learning.lr_federated = v;
        }
        if let Some(v) = self.lr_independent {
            cfg.learning.lr_independent = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Methods to train: rifrl, frl, independent_pg, random, or all.
    #[arg(long = "method", value_delimiter = ',', default_value = "rifrl")]
    methods: Vec<String>,
    /// Metrics CSV path; a `.jsonl` mirror and `.meta.json` are written next to it.
    #[arg(long, default_value = "metrics/train.csv")]
    out: PathBuf,
    /// Root directory for checkpoints.
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    /// Record simulated upload/broadcast messages in the metadata.
    #[arg(long)]
    log_messages: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Shared checkpoint, or one per link for independent learners.
    #[arg(long = "checkpoint")]
    checkpoints: Vec<PathBuf>,
    /// Evaluate the uniformly random policy instead of a checkpoint.
    #[arg(long)]
    random: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// payload or n_v2v.
    #[arg(long)]
    axis: String,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(long = "method", value_delimiter = ',', default_value = "all")]
    methods: Vec<String>,
    /// Seeds; defaults to the configured seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long, default_value = "metrics/sweep.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct BrioCheckArgs {
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 100)]
    inputs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 50)]
    nets: usize,
    /// Layer sizes of the random networks, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "4,8,6,5")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    step: f64,
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>> {
    if names.iter().any(|n| n == "all") {
        return Ok(Method::ALL.to_vec());
    }
    names.iter().map(|n| Ok(n.parse::<Method>()?)).collect()
}

fn with_extension(path: &Path, ext: &str) -> PathBuf {
    let mut p = path.to_path_buf();
    p.set_extension(ext);
    p
}

#[derive(Serialize)]
struct MethodSummary {
    method: String,
    uploads: usize,
    final_window_mean: f64,
    messages: usize,
    message_bytes: usize,
}

#[derive(Serialize)]
struct TrainMeta {
    config_hash: String,
    seed: u64,
    moving_average_window: usize,
    normalization: &'static str,
    normalization_constant: f64,
    methods: Vec<MethodSummary>,
}

fn train(args: TrainArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let methods = parse_methods(&args.methods)?;
    let ckpt = args.checkpoint_dir.as_deref();
    let runs = methods
        .par_iter()
        .map(|&m| experiment::train(&cfg, m, ckpt, args.log_messages))
        .collect::<rifrl::Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut curves = Vec::new();
    let mut summaries = Vec::new();
    for (outcome, metrics) in &runs {
        let curve = metrics.curve(outcome.method.label(), cfg.experiment.seed);
        summaries.push(MethodSummary {
            method: outcome.method.label().into(),
            uploads: outcome.uploads,
            final_window_mean: tail_mean(&curve, 0.1),
            messages: outcome.messages.len(),
            message_bytes: outcome.messages.iter().map(|m| m.bytes).sum(),
        });
        curves.push(curve);
        rows.extend(metrics.training.iter().cloned());
    }
    let constant = normalize_curves(&mut curves);
    experiment::write_csv(&args.out, &rows)?;
    experiment::write_jsonl(&with_extension(&args.out, "jsonl"), &rows)?;
    let meta = TrainMeta {
        config_hash: format!("{:016x}", cfg.hash()),
        seed: cfg.experiment.seed,
        moving_average_window: cfg.experiment.moving_average_window,
        normalization: "moving_avg divided by the largest |moving_avg| over all methods in this file",
        normalization_constant: constant,
        methods: summaries,
    };
    std::fs::write(with_extension(&args.out, "meta.json"), serde_json::to_string_pretty(&meta)?)?;
    for s in &meta.methods {
        println!(
            "{:<15} final-window moving average {:>10.4}  uploads {}",
            s.method, s.final_window_mean, s.uploads
        );
    }
    println!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let hash = cfg.hash();
    let policy = match (args.random, args.checkpoints.len()) {
        (true, 0) => TrainedPolicy::Random,
        (true, _) => bail!("--random cannot be combined with --checkpoint"),
        (false, 0) => bail!("give --checkpoint or --random"),
        (false, n) => {
            let mut params = Vec::with_capacity(n);
            for path in &args.checkpoints {
                let ck = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
                if ck.config_hash != hash {
                    eprintln!(
                        "note: {} was written under config {:016x}, evaluating under {:016x}",
                        path.display(),
                        ck.config_hash,
                        hash
                    );
                }
                params.push(ck.params);
            }
            if n == 1 {
                TrainedPolicy::Shared(params.pop().unwrap())
            } else {
                TrainedPolicy::PerAgent(params)
            }
        }
    };
    let e = evaluate_delivery(&policy, &cfg.scenario, cfg.experiment.eval_episodes, cfg.experiment.seed)?;
    println!(
        "delivery probability {:.4} ± {:.4} ({} of {} link-episodes, {} episodes)",
        e.probability(),
        e.half_width(),
        e.delivered,
        e.link_episodes,
        e.episodes
    );
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let axis: SweepAxis = args.axis.parse()?;
    let methods = parse_methods(&args.methods)?;
    let seeds = if args.seeds.is_empty() {
        vec![cfg.experiment.seed]
    } else {
        args.seeds.clone()
    };
    let rows = experiment::sweep(&cfg, axis, &args.values, &methods, &seeds)?;
    experiment::write_csv(&args.out, &rows)?;
    experiment::write_jsonl(&with_extension(&args.out, "jsonl"), &rows)?;
    for r in &rows {
        println!(
            "{:<15} seed {:<4} {} = {:<8} delivery {:.4} ± {:.4}",
            r.method, r.seed, r.axis_name, r.axis_value, r.delivery_prob, r.ci_half_width
        );
    }
    Ok(())
}

fn brio_check(args: BrioCheckArgs) -> Result<bool> {
    let ck = Checkpoint::load(&args.checkpoint).with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let mut rng = seed::rng(args.seed, Stream::EvalEnv, &[]);
    let dim = ck.params.input_dim();
    let inputs: Vec<Vec<f64>> = (0..args.inputs)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let r = brio::check(&ck.params, &inputs)?;
    println!("max equivalence error   {:.3e}", r.max_relative_error);
    println!("max column deviation    {:.3e}", r.max_column_deviation);
    println!("max idempotence change  {:.3e}", r.max_idempotence_change);
    let ok = r.max_relative_error <= args.tolerance;
    println!("{}", if ok { "pass" } else { "FAIL" });
    Ok(ok)
}

fn gradcheck(args: GradcheckArgs) -> Result<bool> {
    if args.sizes.len() < 2 {
        bail!("--sizes needs at least an input and an output width");
    }
    let mut total = GradCheckReport::default();
    let mut max_score = 0.0f64;
    for i in 0..args.nets {
        let mut rng = seed::rng(args.seed, Stream::Init, &[i as u64, 1]);
        let params = MlpParams::init(&args.sizes, Activation::Relu, seed::derive(args.seed, Stream::Init, &[i as u64]))?;
        let x: Vec<f64> = (0..args.sizes[0]).map(|_| rng.sample(StandardNormal)).collect();
        let action = rng.random_range(0..params.output_dim());
        total.merge(&check_grad_log_prob(&params, &x, action, args.step, 1e-4, 1e-6)?);
        let s = expected_score(&params, &x)?;
        max_score = s.iter().fold(max_score, |m, v| m.max(v.abs()));
    }
    println!("checked {} partials on {} nets", total.checked, args.nets);
    println!("max abs error {:.3e}, max rel error {:.3e}", total.max_abs_error, total.max_rel_error);
    println!("max |E[score]| {max_score:.3e}");
    let ok = total.failures == 0 && max_score <= 1e-8;
    println!("{}", if ok { "pass" } else { "FAIL" });
    Ok(ok)
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("RIFRL_THREADS") {
        let n: usize = v.parse().with_context(|| format!("RIFRL_THREADS={v} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    configure_threads()?;
    match cli.command {
        Command::Train(a) => train(a).map(|_| true),
        Command::Evaluate(a) => evaluate(a).map(|_| true),
        Command::Sweep(a) => sweep(a).map(|_| true),
        Command::BrioCheck(a) => brio_check(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::ShowConfig(a) => {
            print!("{}", a.resolve()?.to_toml_string());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
