//! Value-function training: masked epsilon-greedy control with either
//! whole-episode return regression or per-step bootstrapped regression over
//! an experience replay buffer.

mod net;

pub use net::{batch_gradient, batch_loss, Adam, QNetwork, RegressionSample, INPUT_DIM, OUTPUT_DIM};

use std::collections::VecDeque;
use std::path::Path;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::domain::{AskedSet, Question, StateMatrix, NUM_QUESTIONS};
use crate::environment::{run_episode, EpisodeConfig, Stepper, Transition};
use crate::error::{Error, Result};
use crate::grading::GroundTruthImage;
use crate::responders::{Responder, SyntheticResponder};
use crate::rng;
use crate::strategies::QuestioningStrategy;

/// Exploration schedule: epsilon decays multiplicatively per epoch, never
/// below the floor.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub epsilon: f64,
    pub epsilon_decay: f64,
    pub epsilon_floor: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { epsilon: 1.0, epsilon_decay: 0.9, epsilon_floor: 0.1 }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("epsilon", self.epsilon), ("epsilon_floor", self.epsilon_floor)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "epsilon_decay must be in (0, 1], got {}",
                self.epsilon_decay
            )));
        }
        Ok(())
    }
}

/// Masked epsilon-greedy action selection: with probability 1-epsilon the
/// best unasked action (ties to the lowest canonical index), otherwise a
/// uniform unasked action.
pub fn greedy_masked_action(
    qvals: &[f64; NUM_QUESTIONS],
    asked: &AskedSet,
    epsilon: f64,
    rng: &mut dyn RngCore,
) -> Result<Question> {
    if asked.is_full() {
        return Err(Error::Exhausted);
    }
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        let unasked: Vec<Question> = asked.unasked().collect();
        return Ok(unasked[rng.gen_range(0..unasked.len())]);
    }
    let mut best: Option<Question> = None;
    for q in asked.unasked() {
        match best {
            None => best = Some(q),
            Some(b) if qvals[q.index()] > qvals[b.index()] => best = Some(q),
            _ => {}
        }
    }
    Ok(best.expect("asked set is not full"))
}

/// Fixed-capacity experience store; the oldest entry is evicted first.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    entries: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        Self { entries: VecDeque::with_capacity(capacity), capacity }
    }

    pub fn push(&mut self, tr: Transition) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(tr);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn oldest(&self) -> Option<&Transition> {
        self.entries.front()
    }

    /// Uniform sample without replacement; everything when fewer than `n`
    /// entries are stored.
    pub fn sample(&self, n: usize, rng: &mut dyn RngCore) -> Vec<&Transition> {
        if self.entries.len() <= n {
            return self.entries.iter().collect();
        }
        let mut indices: Vec<usize> = (0..self.entries.len()).collect();
        for k in 0..n {
            let j = k + rng.gen_range(0..indices.len() - k);
            indices.swap(k, j);
        }
        indices[..n].iter().map(|&i| &self.entries[i]).collect()
    }
}

/// Training scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainScheme {
    Mc,
    Q,
}

impl TrainScheme {
    pub fn label(self) -> &'static str {
        match self {
            TrainScheme::Mc => "mc",
            TrainScheme::Q => "q",
        }
    }
}

/// Optimization and model-selection settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// First 1-based epoch eligible for model selection.
    pub burn_in_epochs: usize,
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub replay_capacity: usize,
    pub minibatch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            burn_in_epochs: 15,
            hidden_layers: vec![64, 64],
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            replay_capacity: 500,
            minibatch_size: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidInput("epochs must be at least 1".into()));
        }
        if self.hidden_layers.is_empty() || self.hidden_layers.contains(&0) {
            return Err(Error::InvalidInput("hidden layers must be non-empty and positive".into()));
        }
        if self.replay_capacity == 0 || self.minibatch_size == 0 {
            return Err(Error::InvalidInput("replay capacity and minibatch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub epsilon: f64,
    pub validation_reward: f64,
}

/// Training outcome: the selected network plus the per-epoch log.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub network: QNetwork,
    pub scheme: TrainScheme,
    pub log: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_validation_reward: f64,
    /// True when no epoch cleared the burn-in, so selection fell back to
    /// the best epoch overall.
    pub burn_in_waived: bool,
}

/// Epsilon-greedy questioner over a value network.
struct EpsilonGreedyQs<'a> {
    net: &'a QNetwork,
    epsilon: f64,
}

impl QuestioningStrategy for EpsilonGreedyQs<'_> {
    fn name(&self) -> &str {
        "epsilon-greedy"
    }

    fn next_question(&self, state: &StateMatrix, asked: &AskedSet, rng: &mut dyn RngCore) -> Result<Question> {
        let qvals = self.net.predict(state)?;
        greedy_masked_action(&qvals, asked, self.epsilon, rng)
    }
}

/// Greedy questioning strategy backed by a trained value network.
pub struct RlQs {
    net: QNetwork,
    name: String,
}

impl RlQs {
    pub fn new(net: QNetwork, name: impl Into<String>) -> Self {
        Self { net, name: name.into() }
    }

    pub fn network(&self) -> &QNetwork {
        &self.net
    }
}

impl QuestioningStrategy for RlQs {
    fn name(&self) -> &str {
        &self.name
    }

    fn next_question(&self, state: &StateMatrix, asked: &AskedSet, rng: &mut dyn RngCore) -> Result<Question> {
        let qvals = self.net.predict(state)?;
        greedy_masked_action(&qvals, asked, 0.0, rng)
    }
}

/// Mean greedy-policy return over the validation images with truthful
/// answers.
pub fn validation_reward(net: &QNetwork, validation: &[GroundTruthImage], env_cfg: &EpisodeConfig) -> Result<f64> {
    if validation.is_empty() {
        return Ok(0.0);
    }
    let greedy = EpsilonGreedyQs { net, epsilon: 0.0 };
    let responder = SyntheticResponder::groundtruth();
    let eval_cfg = EpisodeConfig { include_terminal_tuples: false, ..*env_cfg };
    let seed = rng::derive(0, "validation");
    let mut total = 0.0;
    for (i, img) in validation.iter().enumerate() {
        total += run_episode(&greedy, &responder, img, &eval_cfg, rng::mix(&[seed, i as u64]))?.return_g;
    }
    Ok(total / validation.len() as f64)
}

struct SelectionState {
    best: Option<(f64, usize, QNetwork)>,
}

impl SelectionState {
    fn consider(&mut self, reward: f64, epoch: usize, net: &QNetwork) {
        let better = self.best.as_ref().is_none_or(|(r, _, _)| reward > *r);
        if better {
            self.best = Some((reward, epoch, net.clone()));
        }
    }
}

fn finish_training(
    scheme: TrainScheme,
    final_net: QNetwork,
    log: Vec<EpochStats>,
    eligible: SelectionState,
    fallback: SelectionState,
) -> TrainedModel {
    match eligible.best {
        Some((reward, epoch, network)) => TrainedModel {
            network,
            scheme,
            log,
            best_epoch: epoch,
            best_validation_reward: reward,
            burn_in_waived: false,
        },
        None => match fallback.best {
            Some((reward, epoch, network)) => TrainedModel {
                network,
                scheme,
                log,
                best_epoch: epoch,
                best_validation_reward: reward,
                burn_in_waived: true,
            },
            None => {
                let reward = log.last().map_or(0.0, |s| s.validation_reward);
                let epoch = log.len();
                TrainedModel { network: final_net, scheme, log, best_epoch: epoch, best_validation_reward: reward, burn_in_waived: true }
            }
        },
    }
}

/// Whole-episode training: per image, generate one epsilon-greedy episode,
/// then take one optimizer step on the squared error between predicted
/// action values and the observed returns-to-go.
pub fn train_mc(
    train: &[GroundTruthImage],
    validation: &[GroundTruthImage],
    cfg: &TrainConfig,
    pol: &PolicyConfig,
    env_cfg: &EpisodeConfig,
) -> Result<TrainedModel> {
    cfg.validate()?;
    pol.validate()?;
    env_cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidInput("training split is empty".into()));
    }
    let mut net = QNetwork::new(&cfg.hidden_layers, rng::derive(cfg.seed, "net-init"));
    let mut adam = Adam::new(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_epsilon, net.param_count());
    let responder = SyntheticResponder::groundtruth();
    let episode_seed = rng::derive(cfg.seed, "mc-episodes");
    let mut epsilon = pol.epsilon;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut eligible = SelectionState { best: None };
    let mut fallback = SelectionState { best: None };

    for epoch in 1..=cfg.epochs {
        for (i, img) in train.iter().enumerate() {
            let episode = {
                let policy = EpsilonGreedyQs { net: &net, epsilon };
                run_episode(&policy, &responder, img, env_cfg, rng::mix(&[episode_seed, epoch as u64, i as u64]))?
            };
            if episode.is_empty() {
                continue;
            }
            let mut samples = Vec::with_capacity(episode.len());
            let mut ret = 0.0;
            for tr in episode.transitions.iter().rev() {
                ret = tr.reward + env_cfg.gamma * ret;
                samples.push(RegressionSample { input: tr.state.to_vector(), action: tr.action.index(), target: ret });
            }
            let grad = batch_gradient(&net, &samples)?;
            adam.apply(&mut net, &grad)?;
        }
        let reward = validation_reward(&net, validation, env_cfg)?;
        log.push(EpochStats { epoch, epsilon, validation_reward: reward });
        if epoch >= cfg.burn_in_epochs {
            eligible.consider(reward, epoch, &net);
        }
        fallback.consider(reward, epoch, &net);
        epsilon = (epsilon * pol.epsilon_decay).max(pol.epsilon_floor);
    }
    Ok(finish_training(TrainScheme::Mc, net, log, eligible, fallback))
}

fn bootstrap_target(net: &QNetwork, tr: &Transition, gamma: f64) -> Result<f64> {
    if tr.terminal {
        return Ok(tr.reward);
    }
    let asked = tr.next_state.asked();
    if asked.is_full() {
        return Ok(tr.reward);
    }
    // bootstrap only through actions still available under the masked policy
    let qvals = net.predict(&tr.next_state)?;
    let best = asked
        .unasked()
        .map(|q| qvals[q.index()])
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(tr.reward + gamma * best)
}

/// Per-step training with experience replay: every environment step pushes
/// a transition, samples a minibatch, and takes one optimizer step on the
/// bootstrapped squared error.
pub fn train_qlearning(
    train: &[GroundTruthImage],
    validation: &[GroundTruthImage],
    cfg: &TrainConfig,
    pol: &PolicyConfig,
    env_cfg: &EpisodeConfig,
) -> Result<TrainedModel> {
    cfg.validate()?;
    pol.validate()?;
    env_cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidInput("training split is empty".into()));
    }
    let mut net = QNetwork::new(&cfg.hidden_layers, rng::derive(cfg.seed, "net-init"));
    let mut adam = Adam::new(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_epsilon, net.param_count());
    let responder = SyntheticResponder::groundtruth();
    let mut replay = ReplayMemory::new(cfg.replay_capacity);
    let mut sample_rng = rng::rng_from(rng::derive(cfg.seed, "replay-sampling"));
    let episode_seed = rng::derive(cfg.seed, "q-episodes");
    let mut epsilon = pol.epsilon;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut eligible = SelectionState { best: None };
    let mut fallback = SelectionState { best: None };

    for epoch in 1..=cfg.epochs {
        for (i, img) in train.iter().enumerate() {
            let mut episode_rng = rng::rng_from(rng::mix(&[episode_seed, epoch as u64, i as u64]));
            let mut stepper = Stepper::new();
            for _ in 0..env_cfg.max_questions {
                if stepper.asked().is_full() {
                    break;
                }
                let qvals = net.predict(stepper.state())?;
                let action = greedy_masked_action(&qvals, stepper.asked(), epsilon, &mut episode_rng)?;
                let answer = responder.answer(img, action);
                let tr = stepper.advance(action, answer, env_cfg.mode).clone();
                let terminal = tr.terminal;
                replay.push(tr);
                if terminal && env_cfg.include_terminal_tuples {
                    let s_term = *stepper.state();
                    let random_action = Question::from_index(episode_rng.gen_range(0..NUM_QUESTIONS));
                    replay.push(Transition {
                        state: s_term,
                        action: random_action,
                        reward: 0.0,
                        next_state: s_term,
                        terminal: true,
                    });
                }
                let samples: Vec<RegressionSample> = {
                    let batch = replay.sample(cfg.minibatch_size, &mut sample_rng);
                    batch
                        .into_iter()
                        .map(|t| {
                            Ok(RegressionSample {
                                input: t.state.to_vector(),
                                action: t.action.index(),
                                target: bootstrap_target(&net, t, env_cfg.gamma)?,
                            })
                        })
                        .collect::<Result<_>>()?
                };
                let grad = batch_gradient(&net, &samples)?;
                adam.apply(&mut net, &grad)?;
                if terminal {
                    break;
                }
            }
        }
        let reward = validation_reward(&net, validation, env_cfg)?;
        log.push(EpochStats { epoch, epsilon, validation_reward: reward });
        if epoch >= cfg.burn_in_epochs {
            eligible.consider(reward, epoch, &net);
        }
        fallback.consider(reward, epoch, &net);
        epsilon = (epsilon * pol.epsilon_decay).max(pol.epsilon_floor);
    }
    Ok(finish_training(TrainScheme::Q, net, log, eligible, fallback))
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Tag pinning the action-index convention a checkpoint was trained under.
pub const ACTION_ORDER_TAG: &str = "concept-major/location-minor";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    scheme: String,
    action_order: String,
    dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Write a versioned JSON checkpoint.
pub fn save_checkpoint(net: &QNetwork, scheme: TrainScheme, path: &Path) -> Result<()> {
    let arrays = net.layer_arrays();
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        scheme: scheme.label().to_string(),
        action_order: ACTION_ORDER_TAG.to_string(),
        dims: net.dims(),
        weights: arrays.iter().map(|(w, _)| w.clone()).collect(),
        biases: arrays.into_iter().map(|(_, b)| b).collect(),
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::NumericFailure(format!("checkpoint serialization failed: {e}")))?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Load and validate a checkpoint, returning the network and its scheme tag.
pub fn load_checkpoint(path: &Path) -> Result<(QNetwork, String)> {
    let text = std::fs::read_to_string(path)?;
    let file: CheckpointFile = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidInput(format!("malformed checkpoint {}: {e}", path.display())))?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::InvalidInput(format!("unsupported checkpoint version {}", file.version)));
    }
    if file.action_order != ACTION_ORDER_TAG {
        return Err(Error::InvalidInput(format!("unknown action order tag '{}'", file.action_order)));
    }
    if file.weights.len() != file.biases.len() {
        return Err(Error::InvalidInput("checkpoint weight/bias layer counts differ".into()));
    }
    let arrays: Vec<(Vec<f64>, Vec<f64>)> = file.weights.into_iter().zip(file.biases).collect();
    let net = QNetwork::from_layer_arrays(&file.dims, arrays)?;
    Ok((net, file.scheme))
}
