//! Unroll a questioning strategy into a binary answer tree for inspection,
//! with Graphviz DOT export.
//!
//! Each node carries the question the strategy would pose given the
//! hypothetical answers along the path; the left edge assumes "No", the
//! right edge "Yes". States that decide a diagnosis become grade leaves.

use std::collections::HashMap;

use crate::domain::{AskedSet, Question, Response, StateMatrix};
use crate::error::{Error, Result};
use crate::grading::{is_terminal, AssumptionMode, Grade, TerminalDecision};
use crate::rng;
use crate::strategies::QuestioningStrategy;

#[derive(Debug, Clone)]
pub struct UnrollParams {
    /// Number of question layers to expand.
    pub depth: usize,
    /// Rollouts per node for stochastic strategies; the modal question wins.
    pub rollouts: usize,
    pub seed: u64,
}

impl Default for UnrollParams {
    fn default() -> Self {
        Self { depth: 6, rollouts: 32, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UnrollNode {
    Question { question: Question, no: Option<usize>, yes: Option<usize> },
    /// The hypothetical answers decide the grade here.
    GradeLeaf { grade: Grade },
    /// The hypothetical answers contradict every valid image.
    DeadEnd,
    /// Questioning continues below the depth limit.
    Truncated,
}

#[derive(Debug, Clone)]
pub struct UnrolledTree {
    nodes: Vec<UnrollNode>,
}

impl UnrolledTree {
    pub fn root(&self) -> &UnrollNode {
        &self.nodes[0]
    }

    pub fn nodes(&self) -> &[UnrollNode] {
        &self.nodes
    }

    /// Every root-to-leaf question sequence (for masking checks).
    pub fn paths(&self) -> Vec<Vec<Question>> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, Vec::new())];
        while let Some((idx, path)) = stack.pop() {
            match &self.nodes[idx] {
                UnrollNode::Question { question, no, yes } => {
                    let mut next = path.clone();
                    next.push(*question);
                    match (no, yes) {
                        (None, None) => out.push(next),
                        (no, yes) => {
                            if let Some(n) = no {
                                stack.push((*n, next.clone()));
                            }
                            if let Some(y) = yes {
                                stack.push((*y, next));
                            }
                        }
                    }
                }
                UnrollNode::GradeLeaf { .. } | UnrollNode::DeadEnd | UnrollNode::Truncated => out.push(path),
            }
        }
        out
    }

    /// Graphviz DOT rendering: boxes labeled "CONCEPT\nregion", circle
    /// leaves labeled with the grade digit, left edge "No", right "Yes".
    pub fn to_dot(&self, graph_name: &str) -> String {
        let mut dot = String::new();
        dot.push_str(&format!("digraph {graph_name} {{\n"));
        dot.push_str("  node [shape=box, fontname=\"Helvetica\"];\n");
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                UnrollNode::Question { question, .. } => {
                    dot.push_str(&format!(
                        "  n{i} [label=\"{}\\n{}\"];\n",
                        question.concept.abbrev(),
                        question.location.label()
                    ));
                }
                UnrollNode::GradeLeaf { grade } => {
                    dot.push_str(&format!("  n{i} [shape=circle, label=\"{grade}\"];\n"));
                }
                UnrollNode::DeadEnd => {
                    dot.push_str(&format!("  n{i} [shape=circle, label=\"-\"];\n"));
                }
                UnrollNode::Truncated => {
                    dot.push_str(&format!("  n{i} [shape=circle, label=\"...\"];\n"));
                }
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if let UnrollNode::Question { no, yes, .. } = node {
                if let Some(n) = no {
                    dot.push_str(&format!("  n{i} -> n{n} [label=\"No\"];\n"));
                }
                if let Some(y) = yes {
                    dot.push_str(&format!("  n{i} -> n{y} [label=\"Yes\"];\n"));
                }
            }
        }
        dot.push_str("}\n");
        dot
    }
}

/// Breadth-wise expansion of a strategy into an answer tree of the given
/// depth. Stochastic strategies are summarized per node by the modal
/// question over seeded rollouts.
pub fn unroll_strategy(
    qs: &dyn QuestioningStrategy,
    mode: AssumptionMode,
    params: &UnrollParams,
) -> Result<UnrolledTree> {
    if params.depth == 0 {
        return Err(Error::InvalidInput("unroll depth must be at least 1".into()));
    }
    if params.rollouts == 0 {
        return Err(Error::InvalidInput("rollouts must be at least 1".into()));
    }
    let expansion = Expansion { qs, mode, params };
    let mut nodes = Vec::new();
    expansion.expand(StateMatrix::empty(), AskedSet::new(), 0, 1, &mut nodes)?;
    Ok(UnrolledTree { nodes })
}

struct Expansion<'a> {
    qs: &'a dyn QuestioningStrategy,
    mode: AssumptionMode,
    params: &'a UnrollParams,
}

impl Expansion<'_> {
    fn modal_question(&self, state: &StateMatrix, asked: &AskedSet, path_code: u64) -> Result<Question> {
        let mut rng = rng::rng_from(rng::mix(&[self.params.seed, path_code]));
        let mut counts: HashMap<Question, usize> = HashMap::new();
        for _ in 0..self.params.rollouts {
            let q = self.qs.next_question(state, asked, &mut rng)?;
            *counts.entry(q).or_insert(0) += 1;
        }
        let mut best: Option<(Question, usize)> = None;
        for (q, c) in counts {
            let better = match best {
                None => true,
                Some((bq, bc)) => c > bc || (c == bc && q.index() < bq.index()),
            };
            if better {
                best = Some((q, c));
            }
        }
        Ok(best.expect("at least one rollout").0)
    }

    fn expand(
        &self,
        state: StateMatrix,
        asked: AskedSet,
        level: usize,
        path_code: u64,
        nodes: &mut Vec<UnrollNode>,
    ) -> Result<usize> {
        let index = nodes.len();
        match is_terminal(&state, self.mode) {
            Ok(TerminalDecision::Terminal(grade)) => {
                nodes.push(UnrollNode::GradeLeaf { grade });
                return Ok(index);
            }
            Err(Error::InconsistentState) => {
                nodes.push(UnrollNode::DeadEnd);
                return Ok(index);
            }
            Ok(TerminalDecision::NonTerminal) => {}
            Err(e) => return Err(e),
        }
        let question = match self.modal_question(&state, &asked, path_code) {
            Ok(q) => q,
            Err(Error::Exhausted) => {
                nodes.push(UnrollNode::DeadEnd);
                return Ok(index);
            }
            Err(e) => return Err(e),
        };
        nodes.push(UnrollNode::Question { question, no: None, yes: None });
        let (no, yes) = if level + 1 < self.params.depth {
            let mut next_asked = asked;
            next_asked.insert(question);
            (
                self.expand(state.with(question, Response::No), next_asked, level + 1, path_code * 2, nodes)?,
                self.expand(state.with(question, Response::Yes), next_asked, level + 1, path_code * 2 + 1, nodes)?,
            )
        } else {
            // depth budget spent: children still show immediate grade
            // leaves, open branches become truncation stubs
            (
                self.leaf_only(state.with(question, Response::No), nodes),
                self.leaf_only(state.with(question, Response::Yes), nodes),
            )
        };
        nodes[index] = UnrollNode::Question { question, no: Some(no), yes: Some(yes) };
        Ok(index)
    }

    fn leaf_only(&self, state: StateMatrix, nodes: &mut Vec<UnrollNode>) -> usize {
        let node = match is_terminal(&state, self.mode) {
            Ok(TerminalDecision::Terminal(grade)) => UnrollNode::GradeLeaf { grade },
            Err(Error::InconsistentState) => UnrollNode::DeadEnd,
            _ => UnrollNode::Truncated,
        };
        nodes.push(node);
        nodes.len() - 1
    }
}
