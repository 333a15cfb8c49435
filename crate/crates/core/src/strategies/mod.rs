//! Questioning strategies: the shared interface, the random and textbook
//! baselines, classification-tree strategies, and unrolling a strategy into
//! an exportable decision tree.

mod decision_tree;
mod unroll;

pub use decision_tree::{
    random_budget, textbook_budget, train_decision_tree, DecisionTreeModel, TreeParams, TreeQs,
};
pub use unroll::{unroll_strategy, UnrollNode, UnrollParams, UnrolledTree};

use rand::{Rng, RngCore};

use crate::domain::{AskedSet, Concept, Location, Question, Response, StateMatrix};
use crate::error::{Error, Result};
use crate::grading::{is_terminal, AssumptionMode, GroundTruthImage, TerminalDecision};

/// A questioning strategy maps the current state (plus the asked set) to the
/// next question. Masked strategies never return an already-asked question.
pub trait QuestioningStrategy: Sync {
    /// Short identifier used in file names and reports.
    fn name(&self) -> &str;

    /// Select the next question for a non-terminal state.
    fn next_question(&self, state: &StateMatrix, asked: &AskedSet, rng: &mut dyn RngCore) -> Result<Question>;

    /// Whether the strategy honors the masking contract. All shipped
    /// strategies do; unmasked ablations may override.
    fn is_masked(&self) -> bool {
        true
    }
}

/// Uniform draw from the not-yet-asked questions.
pub fn random_unasked(asked: &AskedSet, rng: &mut dyn RngCore) -> Result<Question> {
    let unasked: Vec<Question> = asked.unasked().collect();
    if unasked.is_empty() {
        return Err(Error::Exhausted);
    }
    Ok(unasked[rng.gen_range(0..unasked.len())])
}

/// Baseline that picks uniformly among unasked questions.
#[derive(Debug, Clone, Default)]
pub struct RandomQs;

impl QuestioningStrategy for RandomQs {
    fn name(&self) -> &str {
        "random"
    }

    fn next_question(&self, _state: &StateMatrix, asked: &AskedSet, rng: &mut dyn RngCore) -> Result<Question> {
        random_unasked(asked, rng)
    }
}

fn confirmed_quadrant(s: &StateMatrix, concept: Concept) -> Option<Location> {
    Location::QUADRANTS
        .into_iter()
        .find(|&l| s.get(Question::new(concept, l)) == Response::Yes)
}

/// Next question of the clinical-reasoning procedure.
///
/// Simple assumptions: ask about exudates in the whole image; on "Yes",
/// probe fovea quadrants in fixed order until found, ask about exudates in
/// the fovea quadrant, then probe optic-disc quadrants until found; probe
/// remaining exudate quadrants if the grade is still open. Under the
/// extra-understanding assumptions the fovea and disc probes run even when
/// the whole-image exudate answer was "No".
pub fn textbook_next(s: &StateMatrix, asked: &AskedSet, mode: AssumptionMode) -> Result<Question> {
    let ex_whole = Question::new(Concept::HardExudate, Location::WholeImage);
    if !asked.contains(ex_whole) {
        return Ok(ex_whole);
    }
    let ex_present = s.get(ex_whole) == Response::Yes;
    let probe_anatomy = ex_present || mode == AssumptionMode::ExtraUA;

    if probe_anatomy && confirmed_quadrant(s, Concept::Fovea).is_none() {
        for l in Location::QUADRANTS {
            let q = Question::new(Concept::Fovea, l);
            if !asked.contains(q) {
                return Ok(q);
            }
        }
    }
    if ex_present {
        if let Some(fovea) = confirmed_quadrant(s, Concept::Fovea) {
            let q = Question::new(Concept::HardExudate, fovea);
            if !asked.contains(q) {
                return Ok(q);
            }
        }
    }
    if probe_anatomy && confirmed_quadrant(s, Concept::OpticDisc).is_none() {
        for l in Location::QUADRANTS {
            let q = Question::new(Concept::OpticDisc, l);
            if !asked.contains(q) {
                return Ok(q);
            }
        }
    }
    if ex_present {
        for l in Location::QUADRANTS {
            let q = Question::new(Concept::HardExudate, l);
            if !asked.contains(q) {
                return Ok(q);
            }
        }
    }
    // with contradictory answers the procedure can run dry; fall back to the
    // first unasked question in canonical order
    asked.unasked().next().ok_or(Error::Exhausted)
}

/// The deterministic clinical-reasoning strategy; the gold standard.
#[derive(Debug, Clone, Copy)]
pub struct TextbookQs {
    pub mode: AssumptionMode,
}

impl QuestioningStrategy for TextbookQs {
    fn name(&self) -> &str {
        "textbook"
    }

    fn next_question(&self, state: &StateMatrix, asked: &AskedSet, _rng: &mut dyn RngCore) -> Result<Question> {
        match is_terminal(state, self.mode) {
            Ok(TerminalDecision::Terminal(_)) => {
                return Err(Error::ContractViolation("textbook strategy queried on a terminal state".into()))
            }
            Ok(TerminalDecision::NonTerminal) | Err(Error::InconsistentState) => {}
            Err(e) => return Err(e),
        }
        textbook_next(state, asked, self.mode)
    }
}

/// Questions on the textbook procedure's path for a specific image when
/// every answer is truthful. This operationalizes which questions are
/// relevant for diagnosing that image.
pub fn textbook_path(img: &GroundTruthImage, mode: AssumptionMode) -> Vec<Question> {
    let mut path = Vec::new();
    let mut state = StateMatrix::empty();
    let mut asked = AskedSet::new();
    while !asked.is_full() {
        if is_terminal(&state, mode).map(TerminalDecision::is_terminal).unwrap_or(false) {
            break;
        }
        let q = match textbook_next(&state, &asked, mode) {
            Ok(q) => q,
            Err(_) => break,
        };
        let answer = img.truthful_answer(q);
        state = state.with(q, answer);
        asked.insert(q);
        path.push(q);
    }
    path
}
