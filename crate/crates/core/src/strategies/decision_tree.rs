//! Classification-tree questioning strategies: a greedy Gini-impurity tree
//! trained on budgets of diagnosis-sufficient states, then traversed to pick
//! questions.

use rand::RngCore;

use crate::domain::{encode_response, AskedSet, Question, StateMatrix, NUM_QUESTIONS};
use crate::environment::{run_episode, EpisodeConfig};
use crate::error::{Error, Result};
use crate::grading::{AssumptionMode, Grade, GroundTruthImage};
use crate::responders::SyntheticResponder;
use crate::rng;
use crate::strategies::{random_unasked, QuestioningStrategy, RandomQs, TextbookQs};

/// Split thresholds for the ordered feature values {0, 0.5, 1}.
const THRESHOLDS: [f64; 2] = [0.25, 0.75];
const MIN_GAIN: f64 = 1e-12;

/// Tree hyperparameters. Defaults follow the unpruned setup: no depth
/// limit, minimum leaf size 1.
#[derive(Debug, Clone)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf_size: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: None, min_leaf_size: 1 }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Split { question: Question, threshold: f64, left: usize, right: usize },
    Leaf { grade: Grade },
}

/// A fitted binary classification tree over flattened state vectors.
#[derive(Debug, Clone)]
pub struct DecisionTreeModel {
    nodes: Vec<Node>,
}

fn gini(counts: &[usize; 3]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

fn class_counts(labels: &[Grade], ids: &[usize]) -> [usize; 3] {
    let mut counts = [0usize; 3];
    for &i in ids {
        counts[labels[i].index()] += 1;
    }
    counts
}

fn majority(counts: &[usize; 3]) -> Grade {
    let mut best = 0;
    for g in 1..3 {
        if counts[g] > counts[best] {
            best = g;
        }
    }
    Grade::ALL[best]
}

/// Fit a CART-style tree minimizing Gini impurity on a budget of
/// (state, grade) pairs. A single-class budget yields a single leaf.
pub fn train_decision_tree(budget: &[(StateMatrix, Grade)], params: &TreeParams) -> Result<DecisionTreeModel> {
    if budget.is_empty() {
        return Err(Error::InvalidInput("tree budget is empty".into()));
    }
    let features: Vec<[f64; NUM_QUESTIONS]> = budget.iter().map(|(s, _)| s.to_vector()).collect();
    let labels: Vec<Grade> = budget.iter().map(|(_, g)| *g).collect();
    let mut nodes = Vec::new();
    let ids: Vec<usize> = (0..budget.len()).collect();
    build(&features, &labels, ids, 0, params, &mut nodes);
    Ok(DecisionTreeModel { nodes })
}

fn build(
    features: &[[f64; NUM_QUESTIONS]],
    labels: &[Grade],
    ids: Vec<usize>,
    depth: usize,
    params: &TreeParams,
    nodes: &mut Vec<Node>,
) -> usize {
    let counts = class_counts(labels, &ids);
    let parent_gini = gini(&counts);
    let depth_allowed = params.max_depth.is_none_or(|d| depth < d);

    let mut best: Option<(f64, usize, f64)> = None; // (gain, feature, threshold)
    if parent_gini > 0.0 && depth_allowed {
        #[allow(clippy::needless_range_loop)]
        for feature in 0..NUM_QUESTIONS {
            for &threshold in &THRESHOLDS {
                let mut left = [0usize; 3];
                let mut right = [0usize; 3];
                for &i in &ids {
                    if features[i][feature] <= threshold {
                        left[labels[i].index()] += 1;
                    } else {
                        right[labels[i].index()] += 1;
                    }
                }
                let nl: usize = left.iter().sum();
                let nr: usize = right.iter().sum();
                if nl < params.min_leaf_size || nr < params.min_leaf_size {
                    continue;
                }
                let n = (nl + nr) as f64;
                let gain = parent_gini - (nl as f64 / n) * gini(&left) - (nr as f64 / n) * gini(&right);
                // strictly-greater keeps the lowest (feature, threshold) on ties
                if gain > MIN_GAIN && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, feature, threshold));
                }
            }
        }
    }

    let index = nodes.len();
    match best {
        None => {
            nodes.push(Node::Leaf { grade: majority(&counts) });
            index
        }
        Some((_, feature, threshold)) => {
            let (left_ids, right_ids): (Vec<usize>, Vec<usize>) =
                ids.into_iter().partition(|&i| features[i][feature] <= threshold);
            nodes.push(Node::Leaf { grade: Grade::G0 }); // placeholder
            let left = build(features, labels, left_ids, depth + 1, params, nodes);
            let right = build(features, labels, right_ids, depth + 1, params, nodes);
            nodes[index] = Node::Split { question: Question::from_index(feature), threshold, left, right };
            index
        }
    }
}

impl DecisionTreeModel {
    /// Predict a grade by following the state's feature values to a leaf.
    pub fn predict(&self, s: &StateMatrix) -> Grade {
        let features = s.to_vector();
        let mut node = 0;
        loop {
            match &self.nodes[node] {
                Node::Leaf { grade } => return *grade,
                Node::Split { question, threshold, left, right } => {
                    node = if features[question.index()] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Walk from the root along the state's values and return the first
    /// node question that has not been asked. `None` once a leaf is reached.
    pub fn next_unasked_on_path(&self, s: &StateMatrix, asked: &AskedSet) -> Option<Question> {
        let mut node = 0;
        loop {
            match &self.nodes[node] {
                Node::Leaf { .. } => return None,
                Node::Split { question, threshold, left, right } => {
                    if !asked.contains(*question) {
                        return Some(*question);
                    }
                    let value = encode_response(s.get(*question));
                    node = if value <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Question at the root split, if the tree is not a single leaf.
    pub fn root_question(&self) -> Option<Question> {
        match self.nodes.first()? {
            Node::Split { question, .. } => Some(*question),
            Node::Leaf { .. } => None,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn accuracy(&self, samples: &[(StateMatrix, Grade)]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let hits = samples.iter().filter(|(s, g)| self.predict(s) == *g).count();
        hits as f64 / samples.len() as f64
    }
}

/// Strategy that asks the questions a fitted tree splits on, falling back to
/// random unasked questions once a leaf is reached before the state is
/// decidable. The tree is never re-entered after the fallback starts.
#[derive(Debug, Clone)]
pub struct TreeQs {
    model: DecisionTreeModel,
    name: String,
}

impl TreeQs {
    pub fn new(model: DecisionTreeModel, name: impl Into<String>) -> Self {
        Self { model, name: name.into() }
    }

    pub fn model(&self) -> &DecisionTreeModel {
        &self.model
    }
}

impl QuestioningStrategy for TreeQs {
    fn name(&self) -> &str {
        &self.name
    }

    fn next_question(&self, state: &StateMatrix, asked: &AskedSet, rng: &mut dyn RngCore) -> Result<Question> {
        match self.model.next_unasked_on_path(state, asked) {
            Some(q) => Ok(q),
            None => random_unasked(asked, rng),
        }
    }
}

fn budget_from_episodes(
    strategy: &dyn QuestioningStrategy,
    images: &[GroundTruthImage],
    mode: AssumptionMode,
    seed: u64,
) -> Result<Vec<(StateMatrix, Grade)>> {
    let cfg = EpisodeConfig { gamma: 0.8, max_questions: NUM_QUESTIONS, mode, include_terminal_tuples: false };
    let responder = SyntheticResponder::groundtruth();
    let mut budget = Vec::with_capacity(images.len());
    for (i, img) in images.iter().enumerate() {
        let episode = run_episode(strategy, &responder, img, &cfg, rng::mix(&[seed, i as u64]))?;
        // only diagnosis-sufficient histories enter the budget
        if episode.reached_terminal() {
            let final_state = episode.transitions.last().expect("terminal episode has steps").next_state;
            budget.push((final_state, img.grade()));
        }
    }
    Ok(budget)
}

/// Budget of terminal histories from random-strategy episodes with truthful
/// answers, one episode per image.
pub fn random_budget(images: &[GroundTruthImage], mode: AssumptionMode, seed: u64) -> Result<Vec<(StateMatrix, Grade)>> {
    budget_from_episodes(&RandomQs, images, mode, seed)
}

/// Budget of terminal histories from textbook-strategy episodes, one episode
/// per image.
pub fn textbook_budget(images: &[GroundTruthImage], mode: AssumptionMode, seed: u64) -> Result<Vec<(StateMatrix, Grade)>> {
    budget_from_episodes(&TextbookQs { mode }, images, mode, seed)
}
