//! Run configuration. Every field has a default; a TOML file may set any
//! subset and command-line flags override both.

use std::path::{Path, PathBuf};

use anyhow::Context;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use tsptw::policy::{PolicyConfig, DEFAULT_EPSILON_FACTORS};
use tsptw::FeatureLevel;

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct RunConfig {
    /// Root seed; each command draws from its own substream.
    pub seed: u64,
    /// Worker threads, 0 for one per core.
    pub workers: usize,
    pub gen: GenConfig,
    pub label: LabelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GenKind {
    Medium,
    HardTrain,
    HardEval,
    WeakNoStart,
    Unconstrained,
    GroupedMedium,
    /// Medium, Hard and supplementary records mixed by `mix`.
    Mixed,
    /// Windows drawn around a nearest-neighbor route; a probe fixture.
    RouteDerived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub kind: GenKind,
    pub n: usize,
    pub count: usize,
    pub alpha: f64,
    pub beta: f64,
    pub t_n: Option<f64>,
    pub group_fraction: f64,
    pub group_count: Option<usize>,
    /// Medium : Hard : supplementary, for `kind = "mixed"`.
    pub mix: [usize; 3],
    /// Window half width for `kind = "route-derived"`.
    pub half_width: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            kind: GenKind::Medium,
            n: 20,
            count: 1000,
            alpha: 0.5,
            beta: 0.75,
            t_n: None,
            group_fraction: 0.3,
            group_count: None,
            mix: [1, 1, 3],
            half_width: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSolver {
    Dp,
    BruteForce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelConfig {
    pub solver: LabelSolver,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            solver: LabelSolver::Dp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub level: FeatureLevel,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub k: usize,
    pub m: usize,
    /// One-step look-ahead checkpoint, required for the musla level.
    pub lookahead: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let p = PolicyConfig::default();
        Self {
            level: p.level,
            hidden: p.hidden,
            learning_rate: p.learning_rate,
            weight_decay: p.weight_decay,
            batch_size: p.batch_size,
            epochs: p.epochs,
            k: p.k,
            m: p.m,
            lookahead: None,
        }
    }
}

impl TrainConfig {
    pub fn policy_config(&self, seed: u64) -> PolicyConfig {
        PolicyConfig {
            level: self.level,
            hidden: self.hidden.clone(),
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
            k: self.k,
            m: self.m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub solvers: Vec<String>,
    pub checkpoint: Option<PathBuf>,
    /// Offsets tried by `checkpoint-adapt`, as multiples of T_n.
    pub epsilon_factors: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            solvers: vec!["greedy-mt".into(), "greedy-lt".into(), "greedy-es".into()],
            checkpoint: None,
            epsilon_factors: DEFAULT_EPSILON_FACTORS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub gammas: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            gammas: (0..=20).map(|i| i as f64 / 20.0).collect(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Provenance blob stored in artifacts.
    pub fn provenance(&self, command: &str) -> anyhow::Result<serde_json::Value> {
        Ok(serde_json::json!({
            "command": command,
            "seed": self.seed,
            "config": serde_json::to_value(self).context("serialising config")?,
        }))
    }
}

/// Substreams of the root seed for the commands that draw randomness.
/// Labeling and evaluation are deterministic and take none.
#[derive(Debug, Clone, Copy)]
pub enum Stream {
    Gen = 1,
    Train = 2,
}

pub fn derive_seed(root: u64, stream: Stream) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(stream as u64);
    rng.next_u64()
}
