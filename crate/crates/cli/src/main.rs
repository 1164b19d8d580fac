//! `riskac` command-line runner.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use riskac::harness::{
    evaluate_agent, oracle_dump, train_to_dir, visitation_for, write_eval_csv, write_oracle_csv, write_visitation_csv,
    Checkpoint, ExperimentConfig, DEFAULT_EVAL_ROLLOUTS, DEFAULT_OUT_ENV, DEFAULT_VISITATION_ROLLOUTS,
};
use riskac::oracle::SolveOptions;
use riskac::policy::SoftmaxPolicy;
use riskac::rng::rng_from_seed;

#[derive(Parser, Debug)]
#[command(name = "riskac", version, about = "Variance-penalized actor-critic experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a sweep and write runs.csv, summary.csv and timing.csv.
    Train(TrainArgs),
    /// Monte-Carlo return statistics of a checkpoint.
    Eval(EvalArgs),
    /// Per-cell visitation frequencies of a checkpoint.
    Visitation(EvalArgs),
    /// Exact Q, variance and second-moment tables for a policy.
    Oracle(OracleArgs),
    /// Parse and validate a config, then print the expanded grid.
    ValidateConfig(ConfigArgs),
}

#[derive(Args, Debug)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// `dotted.key=value`, repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Replaces `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = DEFAULT_OUT_ENV)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    rollouts: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    /// Experiment config whose `env` section is solved.
    #[arg(long, conflicts_with = "checkpoint")]
    config: Option<PathBuf>,
    /// Solve for a trained policy and its environment.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    psi: f64,
    /// Softmax temperature of the uniform policy used with `--config`.
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Visitation(a) => visitation(a),
        Command::Oracle(a) => oracle(a),
        Command::ValidateConfig(a) => validate(a),
    }
}

fn load_config(a: &ConfigArgs) -> Result<ExperimentConfig> {
    ExperimentConfig::load(&a.config, &a.overrides).with_context(|| format!("loading {}", a.config.display()))
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = load_config(&a.cfg)?;
    if let Some(seed) = a.seed {
        cfg.master_seed = seed;
    }
    let out = match (a.out, &cfg.out_dir) {
        (Some(o), _) => o,
        (None, Some(o)) => o.clone(),
        (None, None) => PathBuf::from("runs").join(if cfg.name.is_empty() { "experiment" } else { &cfg.name }),
    };
    log::info!("training into {}", out.display());
    let sweep = train_to_dir(&cfg, Path::new("."), &out, a.jobs)?;
    let failed = sweep.failed();
    println!("{} runs written to {} ({failed} failed)", sweep.results.len(), out.display());
    if failed == sweep.results.len() {
        bail!("every run failed");
    }
    Ok(())
}

fn default_out(name: &str) -> PathBuf {
    std::env::var_os(DEFAULT_OUT_ENV).map(PathBuf::from).unwrap_or_default().join(name)
}

fn eval(a: EvalArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let env = ck.env.build(Path::new("."))?;
    let mut rng = rng_from_seed(a.seed);
    let stats = evaluate_agent(&env, &ck.agent.policy, a.rollouts.unwrap_or(DEFAULT_EVAL_ROLLOUTS), &mut rng)?;
    let out = a.out.unwrap_or_else(|| default_out("eval.csv"));
    write_eval_csv(&out, &ck.run_id, &stats)?;
    println!("mean {:.6} variance {:.6} -> {}", stats.mean, stats.variance, out.display());
    Ok(())
}

fn visitation(a: EvalArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let env = ck.env.build(Path::new("."))?;
    let mut rng = rng_from_seed(a.seed);
    let n = a.rollouts.unwrap_or(DEFAULT_VISITATION_ROLLOUTS);
    let (vis, layout) = visitation_for(&env, &ck.agent.policy, n, &mut rng)?;
    let out = a.out.unwrap_or_else(|| default_out("visitation.csv"));
    write_visitation_csv(&out, &vis, layout)?;
    match vis.risky_frequency() {
        Some(f) => println!("{} visits, risky share {f:.6} -> {}", vis.total, out.display()),
        None => println!("{} visits -> {}", vis.total, out.display()),
    }
    Ok(())
}

fn oracle(a: OracleArgs) -> Result<()> {
    let (env, policy) = match (&a.config, &a.checkpoint) {
        (_, Some(path)) => {
            let ck = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
            (ck.env.build(Path::new("."))?, ck.agent.policy)
        }
        (Some(path), None) => {
            let cfg = ExperimentConfig::load(path, &[]).with_context(|| format!("loading {}", path.display()))?;
            let env = cfg.env.build(Path::new("."))?;
            let policy = SoftmaxPolicy::new(env.n_features(), env.n_actions(), a.temperature)?;
            (env, policy)
        }
        (None, None) => bail!("pass --config or --checkpoint"),
    };
    let mdp = env.tabular()?;
    let dump = oracle_dump(mdp, &policy, a.psi, &SolveOptions::default())?;
    let out = a.out.unwrap_or_else(|| default_out("oracle.csv"));
    write_oracle_csv(&out, &dump)?;
    println!("J {:.6} |grad J| {:.6e} -> {}", dump.j, dump.grad_norm, out.display());
    Ok(())
}

fn validate(a: ConfigArgs) -> Result<()> {
    let cfg = load_config(&a)?;
    let env = cfg.env.build(Path::new("."))?;
    let cells = cfg.expand(env.discount());
    println!(
        "{}: {} cells x {} seeds, {} features, {} actions",
        if cfg.name.is_empty() { "config" } else { &cfg.name },
        cells.len(),
        cfg.seeds,
        env.n_features(),
        env.n_actions()
    );
    for c in &cells {
        let s = &c.algo.step_sizes;
        println!(
            "  [{}] {} {} psi={} alpha_theta={} alpha_w={} alpha_z={} temp={} gamma={}",
            c.index,
            c.hash,
            c.algo.algo,
            c.algo.psi,
            s.alpha_theta,
            s.alpha_w,
            s.alpha_z,
            c.algo.temperature,
            c.algo.gamma
        );
    }
    Ok(())
}
