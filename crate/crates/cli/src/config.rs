//! `RunConfig`: every tunable of every subcommand in one TOML file.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use mmplan_core::agent::{CostBaseline, EpsilonSchedule, TrainingConfig};
use mmplan_core::harness::{BaselineOptions, EvaluationConfig, Method, StudyConfig};
use mmplan_core::{CapacitySetting, GeneratorConfig, SelectionHeuristic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Base seed for scenario generation, training and evaluation.
    pub seed: u64,
    pub generator: GeneratorConfig,
    pub training: TrainingSection,
    pub baselines: BaselineOptions,
    pub bench: BenchSection,
    pub paths: PathsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            generator: GeneratorConfig::default(),
            training: TrainingSection::default(),
            baselines: BaselineOptions::default(),
            bench: BenchSection::default(),
            paths: PathsSection::default(),
        }
    }
}

/// Learner hyperparameters. Scenario settings come from `[generator]` and the
/// seed from the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub episodes: usize,
    pub update_interval: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    pub heuristic: SelectionHeuristic,
    pub replay_capacity: usize,
    pub learning_rate: f64,
    pub final_learning_rate: Option<f64>,
    pub hidden_layers: Vec<usize>,
    pub reward_scale: f64,
    pub cost_baseline: CostBaseline,
    pub target_sync: Option<u64>,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let d = TrainingConfig::default();
        Self {
            episodes: d.episodes,
            update_interval: d.update_interval,
            batch_size: d.batch_size,
            gamma: d.gamma,
            epsilon: d.epsilon,
            heuristic: d.heuristic,
            replay_capacity: d.replay_capacity,
            learning_rate: d.learning_rate,
            final_learning_rate: d.final_learning_rate,
            hidden_layers: d.hidden_layers,
            reward_scale: d.reward_scale,
            cost_baseline: d.cost_baseline,
            target_sync: d.target_sync,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub weeks: usize,
    pub settings: Vec<CapacitySetting>,
    pub methods: Vec<Method>,
}

impl Default for BenchSection {
    fn default() -> Self {
        let d = StudyConfig::default();
        Self {
            weeks: d.evaluation.weeks,
            settings: d.settings,
            methods: d.methods,
        }
    }
}

/// Output locations of `bench`. Relative file names resolve against `output_dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub output_dir: PathBuf,
    pub report: PathBuf,
    pub raw_weeks: PathBuf,
    /// `{heuristic}` is replaced by `fifo` or `edf`.
    pub curves: String,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("bench_out"),
            report: PathBuf::from("report.csv"),
            raw_weeks: PathBuf::from("raw_weeks.jsonl"),
            curves: "curves_{heuristic}.csv".to_string(),
        }
    }
}

impl PathsSection {
    pub fn report_path(&self) -> PathBuf {
        self.output_dir.join(&self.report)
    }

    pub fn raw_path(&self) -> PathBuf {
        self.output_dir.join(&self.raw_weeks)
    }

    pub fn curves_path(&self, heuristic: SelectionHeuristic) -> PathBuf {
        self.output_dir.join(self.curves.replace("{heuristic}", heuristic.name()))
    }
}

/// Weeks and episodes used by `--quick`.
pub const QUICK_WEEKS: usize = 20;
pub const QUICK_EPISODES: usize = 400;

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn training_config(&self) -> TrainingConfig {
        let t = &self.training;
        TrainingConfig {
            episodes: t.episodes,
            update_interval: t.update_interval,
            batch_size: t.batch_size,
            gamma: t.gamma,
            epsilon: t.epsilon,
            heuristic: t.heuristic,
            generator: self.generator.clone(),
            replay_capacity: t.replay_capacity,
            learning_rate: t.learning_rate,
            final_learning_rate: t.final_learning_rate,
            hidden_layers: t.hidden_layers.clone(),
            reward_scale: t.reward_scale,
            cost_baseline: t.cost_baseline,
            target_sync: t.target_sync,
            seed: self.seed,
        }
    }

    pub fn evaluation_config(&self) -> EvaluationConfig {
        EvaluationConfig {
            weeks: self.bench.weeks,
            seed: self.seed,
            generator: self.generator.clone(),
            baselines: self.baselines.clone(),
        }
    }

    pub fn study_config(&self) -> StudyConfig {
        StudyConfig {
            settings: self.bench.settings.clone(),
            methods: self.bench.methods.clone(),
            training: self.training_config(),
            evaluation: self.evaluation_config(),
        }
    }
}
