use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algos::{Algo, AlgoConfig};
use crate::critic::{StepSchedule, StepSizes};
use crate::envs::{
    four_rooms, puddle_grid, random_mdp, ContPuddleWorld, FourRoomsOptions, GridSpec, MdpDef, PuddleGridOptions,
    RandomMdpSpec, TabularMdp,
};
use crate::features::TileCoder;
use crate::policy::{BehaviorPolicy, Correction};
use crate::{Error, Result};

/// A scalar or a list of values to sweep over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

fn zero() -> OneOrMany<f64> {
    OneOrMany::One(0.0)
}

fn unit() -> OneOrMany<f64> {
    OneOrMany::One(1.0)
}

/// Environment section of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    FourRooms(FourRoomsOptions),
    PuddleGrid(PuddleGridOptions),
    Grid(GridSpec),
    RandomMdp(RandomMdpEnv),
    /// Explicit MDP stored as JSON (path relative to the config file).
    MdpFile(MdpFileEnv),
    ContPuddle(ContPuddleEnv),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomMdpEnv {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub spec: RandomMdpSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFileEnv {
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContPuddleEnv {
    #[serde(default)]
    pub world: ContPuddleWorld,
    #[serde(default)]
    pub tiles: TileCoder,
}

/// An environment ready to simulate.
#[derive(Debug, Clone)]
pub enum BuiltEnv {
    Tabular(TabularMdp),
    Continuous { world: ContPuddleWorld, tiles: TileCoder },
}

impl BuiltEnv {
    pub fn n_features(&self) -> usize {
        match self {
            BuiltEnv::Tabular(m) => m.n_states(),
            BuiltEnv::Continuous { tiles, .. } => tiles.hash_size,
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            BuiltEnv::Tabular(m) => m.n_actions(),
            BuiltEnv::Continuous { .. } => 4,
        }
    }

    pub fn discount(&self) -> f64 {
        match self {
            BuiltEnv::Tabular(m) => m.discount(),
            BuiltEnv::Continuous { world, .. } => world.discount,
        }
    }

    pub fn tabular(&self) -> Result<&TabularMdp> {
        match self {
            BuiltEnv::Tabular(m) => Ok(m),
            BuiltEnv::Continuous { .. } => Err(Error::Undefined("operation needs a tabular environment".into())),
        }
    }
}

impl EnvSpec {
    /// Rewrites relative file paths as `base`-relative ones so the spec no
    /// longer depends on the working directory.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let EnvSpec::MdpFile(f) = self {
            if f.path.is_relative() {
                f.path = base.join(&f.path);
            }
        }
    }

    /// `base` resolves relative file paths.
    pub fn build(&self, base: &Path) -> Result<BuiltEnv> {
        Ok(match self {
            EnvSpec::FourRooms(o) => BuiltEnv::Tabular(four_rooms(o)?),
            EnvSpec::PuddleGrid(o) => BuiltEnv::Tabular(puddle_grid(o)?),
            EnvSpec::Grid(g) => BuiltEnv::Tabular(g.to_mdp()?),
            EnvSpec::RandomMdp(r) => BuiltEnv::Tabular(random_mdp(&r.spec, r.seed)?),
            EnvSpec::MdpFile(f) => {
                let text = std::fs::read_to_string(base.join(&f.path))?;
                let def: MdpDef = serde_json::from_str(&text)?;
                BuiltEnv::Tabular(TabularMdp::new(def)?)
            }
            EnvSpec::ContPuddle(c) => {
                c.world.validate()?;
                c.tiles.validate()?;
                BuiltEnv::Continuous { world: c.world.clone(), tiles: c.tiles }
            }
        })
    }
}

/// How behavior actions are chosen in off-policy runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorSpec {
    #[default]
    Uniform,
    Target,
}

impl BehaviorSpec {
    pub fn policy(self) -> BehaviorPolicy {
        match self {
            BehaviorSpec::Uniform => BehaviorPolicy::Uniform,
            BehaviorSpec::Target => BehaviorPolicy::Target,
        }
    }
}

/// One `[[algos]]` entry; list-valued fields are crossed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgoGrid {
    pub algo: OneOrMany<Algo>,
    #[serde(default = "zero")]
    pub psi: OneOrMany<f64>,
    pub alpha_theta: OneOrMany<f64>,
    pub alpha_w: OneOrMany<f64>,
    #[serde(default = "zero")]
    pub alpha_z: OneOrMany<f64>,
    #[serde(default = "unit")]
    pub temperature: OneOrMany<f64>,
    /// Defaults to the environment's discount.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub behavior: BehaviorSpec,
    #[serde(default)]
    pub correction: Correction,
    #[serde(default)]
    pub strict_step_sizes: bool,
    #[serde(default)]
    pub schedule: StepSchedule,
    /// Overrides the experiment-wide episode budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episodes: Option<usize>,
}

/// Evaluation protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSpec {
    /// Evaluate every `every` episodes during training (0 disables).
    pub every: usize,
    /// Rollouts per evaluation, including the final one.
    pub rollouts: usize,
    /// Rollouts for the final risky-region visitation (0 disables).
    pub visitation_rollouts: usize,
}

impl Default for EvalSpec {
    fn default() -> Self {
        EvalSpec { every: 0, rollouts: 800, visitation_rollouts: 0 }
    }
}

fn one() -> usize {
    1
}

/// A sweep: environment, algorithm grid, seeds and evaluation protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub env: EnvSpec,
    pub algos: Vec<AlgoGrid>,
    #[serde(default = "one")]
    pub seeds: usize,
    #[serde(default)]
    pub master_seed: u64,
    pub episodes: usize,
    #[serde(default)]
    pub eval: EvalSpec,
    #[serde(default)]
    pub checkpoints: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

/// One point of the expanded grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    pub index: usize,
    /// Position of the originating `[[algos]]` entry.
    pub entry: usize,
    pub algo: AlgoConfig,
    /// Hex prefix of the SHA-256 of the cell's canonical JSON.
    pub hash: String,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config { path: String::new(), message: e.to_string() })?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(table)
            .map_err(|e| Error::Config { path: e.path().to_string(), message: e.inner().to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses a config file; relative environment paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let mut cfg = Self::from_toml_str(&std::fs::read_to_string(path)?, overrides)?;
        cfg.env.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config { path: String::new(), message: e.to_string() })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |path: String, message: String| Err(Error::Config { path, message });
        if self.algos.is_empty() {
            return bad("algos".into(), "at least one algorithm entry is required".into());
        }
        if self.seeds == 0 {
            return bad("seeds".into(), "must be >= 1".into());
        }
        if self.episodes == 0 {
            return bad("episodes".into(), "must be >= 1".into());
        }
        if self.eval.rollouts < 2 {
            return bad("eval.rollouts".into(), "need at least 2 rollouts for a variance".into());
        }
        for (i, g) in self.algos.iter().enumerate() {
            let lists = [
                ("psi", g.psi.values()),
                ("alpha_theta", g.alpha_theta.values()),
                ("alpha_w", g.alpha_w.values()),
                ("alpha_z", g.alpha_z.values()),
                ("temperature", g.temperature.values()),
            ];
            for (field, values) in lists {
                if values.is_empty() {
                    return bad(format!("algos[{i}].{field}"), "empty list".into());
                }
            }
            if g.algo.values().is_empty() {
                return bad(format!("algos[{i}].algo"), "empty list".into());
            }
        }
        for cell in self.expand(0.99) {
            cell.algo
                .validate()
                .map_err(|e| Error::Config { path: format!("algos[{}]", cell.entry), message: e.to_string() })?;
        }
        Ok(())
    }

    /// Cross product of every list-valued field, in declaration order.
    /// Entries without `gamma` use `env_discount`.
    pub fn expand(&self, env_discount: f64) -> Vec<GridCell> {
        let mut cells = Vec::new();
        for (entry, g) in self.algos.iter().enumerate() {
            for algo in g.algo.values() {
                for psi in g.psi.values() {
                    for alpha_theta in g.alpha_theta.values() {
                        for alpha_w in g.alpha_w.values() {
                            for alpha_z in g.alpha_z.values() {
                                for temperature in g.temperature.values() {
                                    let mut a = AlgoConfig::new(
                                        algo,
                                        psi,
                                        g.gamma.unwrap_or(env_discount),
                                        StepSizes { alpha_theta, alpha_w, alpha_z },
                                        temperature,
                                        g.episodes.unwrap_or(self.episodes),
                                    );
                                    a.behavior = g.behavior.policy();
                                    a.correction = g.correction;
                                    a.strict_step_sizes = g.strict_step_sizes;
                                    a.schedule = g.schedule;
                                    let hash = self.cell_hash(&a);
                                    cells.push(GridCell { index: cells.len(), entry, algo: a, hash });
                                }
                            }
                        }
                    }
                }
            }
        }
        cells
    }

    fn cell_hash(&self, algo: &AlgoConfig) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            env: &'a EnvSpec,
            algo: &'a AlgoConfig,
            eval: &'a EvalSpec,
            master_seed: u64,
        }
        let key = Key { env: &self.env, algo, eval: &self.eval, master_seed: self.master_seed };
        let json = serde_json::to_vec(&key).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Applies `dotted.path=value`; `value` is parsed as a TOML value, falling
/// back to a bare string. Numeric path segments index arrays.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config { path: spec.to_string(), message: "override must look like key=value".into() })?;
    let path = path.trim();
    let raw = raw.trim();
    let value = parse_toml_value(raw);
    let parts: Vec<&str> = path.split('.').collect();
    let mut root = toml::Value::Table(std::mem::take(table));
    let result = set_path(&mut root, &parts, value).map_err(|m| Error::Config { path: path.to_string(), message: m });
    if let toml::Value::Table(t) = root {
        *table = t;
    }
    result
}

fn set_path(mut cur: &mut toml::Value, parts: &[&str], value: toml::Value) -> std::result::Result<(), String> {
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            toml::Value::Table(t) => {
                if last {
                    t.insert((*part).to_string(), value);
                    return Ok(());
                }
                t.entry((*part).to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()))
            }
            toml::Value::Array(a) => {
                let idx: usize = part.parse().map_err(|_| format!("segment {part:?} must be an array index"))?;
                let len = a.len();
                let slot = a.get_mut(idx).ok_or_else(|| format!("index {idx} out of range ({len} entries)"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(format!("segment {part:?} descends into a scalar")),
        };
    }
    Ok(())
}

fn parse_toml_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
