//! Experiment configuration, sweeps over seeds and hyperparameters, and the
//! evaluation tools behind the command-line interface.

mod config;
mod sweep;
mod tools;

pub use config::{
    apply_override, AlgoGrid, BehaviorSpec, BuiltEnv, ContPuddleEnv, EnvSpec, EvalSpec, ExperimentConfig, GridCell,
    MdpFileEnv, OneOrMany, RandomMdpEnv,
};
pub use sweep::{
    fmt_f64, run_one, run_sweep, train_to_dir, write_runs, write_summary, write_timing, Checkpoint, RunResult,
    SweepOutput, CSV_SCHEMA_VERSION, RUNS_HEADER, SUMMARY_HEADER,
};
pub use tools::{
    check_shape, evaluate_agent, oracle_dump, risky_visitation, visitation_for, write_eval_csv, write_oracle_csv,
    write_visitation_csv, OracleDump, Visitation, DEFAULT_EVAL_ROLLOUTS, DEFAULT_VISITATION_ROLLOUTS,
};

/// Environment variable naming the default output directory.
pub const DEFAULT_OUT_ENV: &str = "RISKAC_OUT_DIR";
