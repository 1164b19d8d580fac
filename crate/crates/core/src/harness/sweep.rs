use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{BuiltEnv, EnvSpec, EvalSpec, ExperimentConfig, GridCell};
use super::tools::{evaluate_agent, risky_visitation};
use crate::algos::{run_episode, Agent, AlgoConfig, EpisodeStats};
use crate::envs::Environment;
use crate::features::{FeatureMap, OneHot};
use crate::oracle::{sharpe, ReturnStats};
use crate::rng::{derive_seed, rng_from_seed, substream};
use crate::Result;

/// Version tag of the CSV layouts below.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const RUNS_HEADER: [&str; 16] = [
    "run_id",
    "config_hash",
    "cell",
    "algo",
    "seed_index",
    "episode",
    "phase",
    "steps",
    "online_return",
    "truncated",
    "negative_sigma_reads",
    "eval_mean",
    "eval_variance",
    "eval_sharpe",
    "eval_se_mean",
    "eval_truncated",
];

pub const SUMMARY_HEADER: [&str; 24] = [
    "run_id",
    "config_hash",
    "cell",
    "algo",
    "psi",
    "alpha_theta",
    "alpha_w",
    "alpha_z",
    "temperature",
    "gamma",
    "correction",
    "seed_index",
    "seed",
    "status",
    "error",
    "episodes_run",
    "truncated_episodes",
    "final_mean",
    "final_variance",
    "final_sharpe",
    "final_se_mean",
    "final_se_variance",
    "final_truncated",
    "risky_visit_frequency",
];

/// Full 17-significant-digit float, empty for `None`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Everything one `(cell, seed)` run produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub run_id: String,
    pub cell: usize,
    pub config_hash: String,
    pub algo: AlgoConfig,
    pub seed_index: usize,
    pub seed: u64,
    pub episodes: Vec<EpisodeStats>,
    pub evals: Vec<(usize, ReturnStats)>,
    pub final_stats: Option<ReturnStats>,
    pub risky_frequency: Option<f64>,
    pub error: Option<String>,
    pub agent: Agent,
    pub wall_seconds: f64,
}

impl RunResult {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Trains one agent and evaluates it. Training failures are recorded in
/// [`RunResult::error`]; only an invalid agent shape is returned as `Err`.
pub fn run_one(env: &BuiltEnv, cell: &GridCell, seed_index: usize, seed: u64, eval: &EvalSpec) -> Result<RunResult> {
    let start = Instant::now();
    let mut algo = cell.algo.clone();
    algo.seed = seed;
    let mut agent = Agent::new(env.n_features(), env.n_actions(), algo.temperature)?;
    agent.critic.schedule = algo.schedule;
    let mut result = RunResult {
        run_id: format!("{}-{seed_index:04}", cell.hash),
        cell: cell.index,
        config_hash: cell.hash.clone(),
        algo: algo.clone(),
        seed_index,
        seed,
        episodes: Vec::with_capacity(algo.episodes),
        evals: Vec::new(),
        final_stats: None,
        risky_frequency: None,
        error: None,
        agent,
        wall_seconds: 0.0,
    };
    let outcome = match env {
        BuiltEnv::Tabular(mdp) => {
            let feats = OneHot { n_states: mdp.n_states() };
            train(mdp, &feats, env, &algo, eval, &mut result)
        }
        BuiltEnv::Continuous { world, tiles } => train(world, tiles, env, &algo, eval, &mut result),
    };
    if let Err(e) = outcome {
        result.error = Some(e.to_string());
    }
    result.wall_seconds = start.elapsed().as_secs_f64();
    Ok(result)
}

fn train<E, F>(
    env: &E,
    feats: &F,
    built: &BuiltEnv,
    algo: &AlgoConfig,
    eval: &EvalSpec,
    out: &mut RunResult,
) -> Result<()>
where
    E: Environment,
    F: FeatureMap<E::State>,
{
    algo.validate()?;
    let mut rng = rng_from_seed(algo.seed);
    for ep in 0..algo.episodes {
        let stats = run_episode(env, feats, &mut out.agent, algo, &mut rng)?;
        out.episodes.push(stats);
        if eval.every > 0 && (ep + 1) % eval.every == 0 && ep + 1 < algo.episodes {
            let mut eval_rng = substream(algo.seed, 1 + ep as u64);
            out.evals.push((ep, evaluate_agent(built, &out.agent.policy, eval.rollouts, &mut eval_rng)?));
        }
    }
    let mut eval_rng = substream(algo.seed, u64::MAX);
    let fin = evaluate_agent(built, &out.agent.policy, eval.rollouts, &mut eval_rng)?;
    if eval.every > 0 {
        out.evals.push((algo.episodes - 1, fin));
    }
    out.final_stats = Some(fin);
    if eval.visitation_rollouts > 0 {
        if let BuiltEnv::Tabular(mdp) = built {
            let mut vis_rng = substream(algo.seed, u64::MAX - 1);
            let vis = risky_visitation(mdp, &out.agent.policy.table(), eval.visitation_rollouts, &mut vis_rng)?;
            out.risky_frequency = vis.risky_frequency();
        }
    }
    Ok(())
}

/// Outcome of a sweep.
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub out_dir: PathBuf,
    pub results: Vec<RunResult>,
}

impl SweepOutput {
    pub fn failed(&self) -> usize {
        self.results.iter().filter(|r| !r.ok()).count()
    }
}

/// Runs every `(cell, seed)` pair on a pool of `jobs` threads (0 = all
/// cores) and returns results ordered by cell then seed.
pub fn run_sweep(cfg: &ExperimentConfig, base: &Path, jobs: usize) -> Result<Vec<RunResult>> {
    let env = cfg.env.build(base)?;
    let cells = cfg.expand(env.discount());
    let tasks: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..cfg.seeds).map(move |s| (c, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| crate::Error::Undefined(format!("thread pool: {e}")))?;
    let results = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(c, s)| {
                let r = run_one(&env, &cells[c], s, derive_seed(cfg.master_seed, s as u64), &cfg.eval)?;
                if let Some(e) = &r.error {
                    log::warn!("run {} failed: {e}", r.run_id);
                }
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(results)
}

/// Runs the sweep and writes `runs.csv`, `summary.csv`, `timing.csv`,
/// `config.toml` and, if enabled, per-run checkpoints into `out_dir`.
pub fn train_to_dir(cfg: &ExperimentConfig, base: &Path, out_dir: &Path, jobs: usize) -> Result<SweepOutput> {
    std::fs::create_dir_all(out_dir)?;
    let results = run_sweep(cfg, base, jobs)?;
    write_runs(&out_dir.join("runs.csv"), &results)?;
    write_summary(&out_dir.join("summary.csv"), &results)?;
    write_timing(&out_dir.join("timing.csv"), &results)?;
    std::fs::write(out_dir.join("config.toml"), cfg.to_toml_string()?)?;
    if cfg.checkpoints {
        let dir = out_dir.join("checkpoints");
        std::fs::create_dir_all(&dir)?;
        for r in &results {
            let ck = Checkpoint {
                run_id: r.run_id.clone(),
                algo: r.algo.clone(),
                env: cfg.env.clone(),
                agent: r.agent.clone(),
            };
            ck.save(&dir.join(format!("{}.json", r.run_id)))?;
        }
    }
    Ok(SweepOutput { out_dir: out_dir.to_path_buf(), results })
}

fn stats_fields(s: Option<&ReturnStats>) -> [String; 5] {
    match s {
        Some(s) => [
            fmt_f64(s.mean),
            fmt_f64(s.variance),
            fmt_opt(sharpe(s).ok()),
            fmt_f64(s.std_error_mean),
            s.truncated.to_string(),
        ],
        None => Default::default(),
    }
}

pub fn write_runs(path: &Path, results: &[RunResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RUNS_HEADER)?;
    for r in results {
        let mut evals = r.evals.iter().peekable();
        for (ep, st) in r.episodes.iter().enumerate() {
            let head = [
                r.run_id.clone(),
                r.config_hash.clone(),
                r.cell.to_string(),
                r.algo.algo.to_string(),
                r.seed_index.to_string(),
            ];
            let train = [
                ep.to_string(),
                "train".to_string(),
                st.steps.to_string(),
                fmt_f64(st.discounted_return),
                (st.truncated as u8).to_string(),
                st.negative_sigma_reads.to_string(),
            ];
            w.write_record(head.iter().chain(&train).chain(&stats_fields(None)))?;
            while let Some((_, es)) = evals.next_if(|(e, _)| *e == ep) {
                let eval =
                    [ep.to_string(), "eval".to_string(), String::new(), String::new(), String::new(), String::new()];
                w.write_record(head.iter().chain(&eval).chain(&stats_fields(Some(es))))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, results: &[RunResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for r in results {
        let a = &r.algo;
        let fin = r.final_stats.as_ref();
        let row = [
            r.run_id.clone(),
            r.config_hash.clone(),
            r.cell.to_string(),
            a.algo.to_string(),
            fmt_f64(a.psi),
            fmt_f64(a.step_sizes.alpha_theta),
            fmt_f64(a.step_sizes.alpha_w),
            fmt_f64(a.step_sizes.alpha_z),
            fmt_f64(a.temperature),
            fmt_f64(a.gamma),
            serde_json::to_value(a.correction).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            r.seed_index.to_string(),
            r.seed.to_string(),
            if r.ok() { "ok" } else { "failed" }.to_string(),
            r.error.clone().unwrap_or_default(),
            r.episodes.len().to_string(),
            r.episodes.iter().filter(|e| e.truncated).count().to_string(),
            fin.map(|s| fmt_f64(s.mean)).unwrap_or_default(),
            fin.map(|s| fmt_f64(s.variance)).unwrap_or_default(),
            fmt_opt(fin.and_then(|s| sharpe(s).ok())),
            fin.map(|s| fmt_f64(s.std_error_mean)).unwrap_or_default(),
            fin.map(|s| fmt_f64(s.std_error_variance)).unwrap_or_default(),
            fin.map(|s| s.truncated.to_string()).unwrap_or_default(),
            fmt_opt(r.risky_frequency),
        ];
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timing(path: &Path, results: &[RunResult]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "run_id,wall_seconds")?;
    for r in results {
        writeln!(f, "{},{:.6}", r.run_id, r.wall_seconds)?;
    }
    Ok(())
}

/// Trained agent plus what is needed to rebuild its environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub run_id: String,
    pub algo: AlgoConfig,
    pub env: EnvSpec,
    pub agent: Agent,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
