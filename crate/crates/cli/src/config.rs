//! Run configuration: a single JSON manifest drives every subcommand.
//! Unknown keys are rejected and referenced paths must exist at validation
//! time, so a manifest that loads is a manifest that can run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use vtt_core::data::{DatasetConfig, SplitSpec};
use vtt_core::environment::EpisodeConfig;
use vtt_core::grading::AssumptionMode;
use vtt_core::learn::{PolicyConfig, TrainConfig, TrainScheme};
use vtt_core::responders::ResponderSpec;
use vtt_core::rng;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every component derives a named sub-stream from it.
    pub seed: u64,
    pub mode: AssumptionMode,
    pub output_dir: PathBuf,
    pub data: DataSection,
    #[serde(default)]
    pub environment: EnvironmentSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub responders: Vec<ResponderSpec>,
    #[serde(default)]
    pub evaluation: EvaluationSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Synthetic generation settings; mutually exclusive with `annotations`.
    #[serde(default)]
    pub generate: Option<GenerateSection>,
    /// Path to an existing annotation CSV.
    #[serde(default)]
    pub annotations: Option<PathBuf>,
    #[serde(default)]
    pub split: SplitSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    pub n_images: usize,
    pub grade_mix: [f64; 3],
    #[serde(default = "default_ex_rate")]
    pub ex_quadrant_rate: f64,
    #[serde(default = "default_od_rate")]
    pub od_two_quadrant_rate: f64,
}

fn default_ex_rate() -> f64 {
    0.4
}

fn default_od_rate() -> f64 {
    0.3
}

impl Default for GenerateSection {
    fn default() -> Self {
        Self {
            n_images: 200,
            grade_mix: [0.44, 0.06, 0.50],
            ex_quadrant_rate: default_ex_rate(),
            od_two_quadrant_rate: default_od_rate(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self { train: 0.6, validation: 0.1, test: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    pub gamma: f64,
    pub max_questions: usize,
    /// Defaults per scheme when omitted: on for q, off for mc.
    #[serde(default)]
    pub include_terminal_tuples: Option<bool>,
}

impl Default for EnvironmentSection {
    fn default() -> Self {
        Self { gamma: 0.8, max_questions: 20, include_terminal_tuples: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub scheme: TrainScheme,
    pub epochs: usize,
    pub burn_in_epochs: usize,
    pub replay_capacity: usize,
    pub minibatch_size: usize,
    pub epsilon_start: f64,
    pub epsilon_decay: f64,
    pub epsilon_floor: f64,
    pub learning_rate: f64,
    pub hidden_layers: Vec<usize>,
    pub repetitions: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            scheme: TrainScheme::Q,
            epochs: 50,
            burn_in_epochs: 15,
            replay_capacity: 500,
            minibatch_size: 8,
            epsilon_start: 1.0,
            epsilon_decay: 0.9,
            epsilon_floor: 0.1,
            learning_rate: 1e-3,
            hidden_layers: vec![64, 64],
            repetitions: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StrategySpec {
    Random,
    Textbook,
    DtRb,
    DtTb,
    Rl { checkpoint: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    #[serde(default = "default_strategies")]
    pub strategies: Vec<StrategySpec>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_unroll_depth")]
    pub unroll_depth: usize,
    #[serde(default = "default_unroll_rollouts")]
    pub unroll_rollouts: usize,
}

fn default_strategies() -> Vec<StrategySpec> {
    vec![StrategySpec::Textbook, StrategySpec::Random]
}

fn default_grid_points() -> usize {
    4096
}

fn default_unroll_depth() -> usize {
    6
}

fn default_unroll_rollouts() -> usize {
    32
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            strategies: default_strategies(),
            grid_points: default_grid_points(),
            unroll_depth: default_unroll_depth(),
            unroll_rollouts: default_unroll_rollouts(),
        }
    }
}

impl RunConfig {
    /// Parse and validate a manifest. Errors carry the offending JSON path.
    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut deserializer = serde_json::Deserializer::from_str(&text);
        let mut config: RunConfig = serde_path_to_error::deserialize(&mut deserializer)
            .map_err(|e| CliError::Config(format!("config {}: {}: {}", path.display(), e.path(), e.inner())))?;
        if let Some(seed) = seed_override {
            config.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.data.generate, &self.data.annotations) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("data: specify either generate or annotations, not both".into()))
            }
            (None, None) => return Err(CliError::Config("data: one of generate or annotations is required".into())),
            (None, Some(path)) => {
                if !path.exists() {
                    return Err(CliError::Config(format!("data.annotations: file {} does not exist", path.display())));
                }
            }
            (Some(g), None) => {
                self.dataset_config_from(g).validate().map_err(|e| CliError::Config(format!("data.generate: {e}")))?;
            }
        }
        self.split_spec().validate().map_err(|e| CliError::Config(format!("data.split: {e}")))?;
        self.env_config(false).validate().map_err(|e| CliError::Config(format!("environment: {e}")))?;
        self.train_config(0).validate().map_err(|e| CliError::Config(format!("training: {e}")))?;
        self.policy_config().validate().map_err(|e| CliError::Config(format!("training: {e}")))?;
        if self.training.repetitions == 0 {
            return Err(CliError::Config("training.repetitions: must be at least 1".into()));
        }
        if self.evaluation.strategies.is_empty() {
            return Err(CliError::Config("evaluation.strategies: must not be empty".into()));
        }
        if self.evaluation.grid_points < 64 {
            return Err(CliError::Config("evaluation.grid_points: must be at least 64".into()));
        }
        if self.evaluation.unroll_depth == 0 || self.evaluation.unroll_rollouts == 0 {
            return Err(CliError::Config("evaluation: unroll depth and rollouts must be positive".into()));
        }
        for (i, spec) in self.responders.iter().enumerate() {
            vtt_core::responders::SyntheticResponder::new(spec.clone(), self.mode)
                .map_err(|e| CliError::Config(format!("responders[{i}]: {e}")))?;
        }
        Ok(())
    }

    /// Checkpoint paths are checked only by the commands that build
    /// strategies, so a pipeline manifest can be written before training.
    pub fn validate_strategy_paths(&self) -> Result<(), CliError> {
        for (i, spec) in self.evaluation.strategies.iter().enumerate() {
            if let StrategySpec::Rl { checkpoint } = spec {
                if !checkpoint.exists() {
                    return Err(CliError::Config(format!(
                        "evaluation.strategies[{i}].checkpoint: file {} does not exist",
                        checkpoint.display()
                    )));
                }
            }
        }
        Ok(())
    }

    fn dataset_config_from(&self, g: &GenerateSection) -> DatasetConfig {
        DatasetConfig {
            n_images: g.n_images,
            grade_mix: g.grade_mix,
            ex_quadrant_rate: g.ex_quadrant_rate,
            od_two_quadrant_rate: g.od_two_quadrant_rate,
            seed: rng::derive(self.seed, "data"),
        }
    }

    pub fn dataset_config(&self) -> Option<DatasetConfig> {
        self.data.generate.as_ref().map(|g| self.dataset_config_from(g))
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec { train: self.data.split.train, validation: self.data.split.validation, test: self.data.split.test }
    }

    pub fn split_seed(&self) -> u64 {
        rng::derive(self.seed, "split")
    }

    pub fn eval_seed(&self) -> u64 {
        rng::derive(self.seed, "eval")
    }

    /// Environment settings; terminal tuples default per training scheme.
    pub fn env_config(&self, for_training: bool) -> EpisodeConfig {
        let scheme_default = self.training.scheme == TrainScheme::Q;
        let include = for_training && self.environment.include_terminal_tuples.unwrap_or(scheme_default);
        EpisodeConfig {
            gamma: self.environment.gamma,
            max_questions: self.environment.max_questions,
            mode: self.mode,
            include_terminal_tuples: include,
        }
    }

    pub fn train_config(&self, repetition: usize) -> TrainConfig {
        TrainConfig {
            epochs: self.training.epochs,
            burn_in_epochs: self.training.burn_in_epochs,
            hidden_layers: self.training.hidden_layers.clone(),
            learning_rate: self.training.learning_rate,
            replay_capacity: self.training.replay_capacity,
            minibatch_size: self.training.minibatch_size,
            seed: rng::mix(&[rng::derive(self.seed, "train"), repetition as u64]),
            ..TrainConfig::default()
        }
    }

    pub fn policy_config(&self) -> PolicyConfig {
        PolicyConfig {
            epsilon: self.training.epsilon_start,
            epsilon_decay: self.training.epsilon_decay,
            epsilon_floor: self.training.epsilon_floor,
        }
    }
}
