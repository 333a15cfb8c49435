//! Episodic interaction loop: a strategy poses questions, a responder
//! answers, and the environment scores transitions and detects termination.

use std::io::Write;

use rand::Rng;

use crate::domain::{AskedSet, Question, Response, StateMatrix, NUM_QUESTIONS};
use crate::error::{Error, Result};
use crate::grading::{is_terminal, AssumptionMode, TerminalDecision};
use crate::responders::Responder;
use crate::rng;
use crate::strategies::QuestioningStrategy;

/// Per-episode environment settings.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeConfig {
    /// Discount factor, strictly inside (0, 1).
    pub gamma: f64,
    /// Hard cap on questions per episode; masked strategies additionally
    /// stop when the question set is exhausted.
    pub max_questions: usize,
    pub mode: AssumptionMode,
    /// Emit an extra zero-reward tuple from the terminal state for training.
    pub include_terminal_tuples: bool,
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidInput(format!("gamma must be in (0, 1), got {}", self.gamma)));
        }
        if self.max_questions == 0 {
            return Err(Error::InvalidInput("max_questions must be at least 1".into()));
        }
        Ok(())
    }
}

/// One environment step.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: StateMatrix,
    pub action: Question,
    /// -1 for a repeated question, +1 for reaching a terminal state with a
    /// fresh question, 0 otherwise.
    pub reward: f64,
    pub next_state: StateMatrix,
    /// Whether `next_state` decides the diagnosis.
    pub terminal: bool,
}

impl Transition {
    /// The answer that produced `next_state`.
    pub fn answer(&self) -> Response {
        self.next_state.get(self.action)
    }
}

/// A completed trajectory with its discounted return.
#[derive(Debug, Clone)]
pub struct Episode {
    pub image_id: String,
    pub transitions: Vec<Transition>,
    pub return_g: f64,
    /// Optional extra training tuple (terminal state, random action, zero
    /// reward); not part of the trajectory or its return.
    pub terminal_tuple: Option<Transition>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn reached_terminal(&self) -> bool {
        self.transitions.last().is_some_and(|t| t.terminal)
    }

    pub fn final_state(&self) -> StateMatrix {
        self.transitions.last().map_or_else(StateMatrix::empty, |t| t.next_state)
    }

    /// Append this episode's steps to a CSV log. Callers write the header
    /// `image_id,step,concept,location,answer,reward,terminal` once.
    pub fn write_log_rows<W: Write>(&self, w: &mut W) -> Result<()> {
        for (step, tr) in self.transitions.iter().enumerate() {
            let answer = match tr.answer() {
                Response::Yes => "yes",
                Response::No => "no",
                Response::NotAsked => unreachable!("transitions always carry an answer"),
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                self.image_id, step, tr.action.concept, tr.action.location, answer, tr.reward, tr.terminal
            )?;
        }
        Ok(())
    }
}

/// Header line matching [`Episode::write_log_rows`].
pub const EPISODE_LOG_HEADER: &str = "image_id,step,concept,location,answer,reward,terminal";

/// Apply one question-answer pair to a state.
///
/// The reward is -1 when the question was already asked, +1 when a fresh
/// question lands in a terminal state, 0 otherwise. A state contradicting
/// every valid image cannot decide a diagnosis and counts as non-terminal.
pub fn step(state: &StateMatrix, asked: &AskedSet, q: Question, answer: Response, mode: AssumptionMode) -> Transition {
    assert!(answer != Response::NotAsked, "a posed question always has an answer");
    let next_state = state.with(q, answer);
    let terminal = matches!(is_terminal(&next_state, mode), Ok(TerminalDecision::Terminal(_)));
    let reward = if asked.contains(q) {
        -1.0
    } else if terminal {
        1.0
    } else {
        0.0
    };
    Transition { state: *state, action: q, reward, next_state, terminal }
}

/// Incremental episode state shared by the episode runner and the training
/// loops that need per-step access.
#[derive(Debug, Clone, Default)]
pub struct Stepper {
    state: StateMatrix,
    asked: AskedSet,
    transitions: Vec<Transition>,
}

impl Stepper {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(&self) -> &StateMatrix {
        &self.state
    }

    pub fn asked(&self) -> &AskedSet {
        &self.asked
    }

    pub fn advance(&mut self, q: Question, answer: Response, mode: AssumptionMode) -> &Transition {
        let tr = step(&self.state, &self.asked, q, answer, mode);
        self.state = tr.next_state;
        self.asked.insert(q);
        self.transitions.push(tr);
        self.transitions.last().expect("just pushed")
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn into_episode(self, image_id: String, gamma: f64, terminal_tuple: Option<Transition>) -> Episode {
        let return_g = discounted_return(self.transitions.iter().map(|t| t.reward), gamma);
        Episode { image_id, transitions: self.transitions, return_g, terminal_tuple }
    }
}

/// Discounted sum of a reward sequence.
pub fn discounted_return(rewards: impl Iterator<Item = f64>, gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut discount = 1.0;
    for r in rewards {
        total += r * discount;
        discount *= gamma;
    }
    total
}

fn terminal_tuple(state: StateMatrix, rng: &mut impl Rng) -> Transition {
    let action = Question::from_index(rng.gen_range(0..NUM_QUESTIONS));
    Transition { state, action, reward: 0.0, next_state: state, terminal: true }
}

/// Run one episode: starting from the empty state, repeatedly query the
/// strategy, answer through the responder, and apply [`step`] until a
/// terminal state, the question cap, or (for masked strategies) exhaustion.
pub fn run_episode(
    qs: &dyn QuestioningStrategy,
    mue: &dyn Responder,
    img: &crate::grading::GroundTruthImage,
    cfg: &EpisodeConfig,
    seed: u64,
) -> Result<Episode> {
    cfg.validate()?;
    let mut episode_rng = rng::rng_from(seed);
    let mut stepper = Stepper::new();
    let mut reached_terminal = false;
    for _ in 0..cfg.max_questions {
        if qs.is_masked() && stepper.asked().is_full() {
            break;
        }
        let q = qs.next_question(stepper.state(), stepper.asked(), &mut episode_rng)?;
        if qs.is_masked() && stepper.asked().contains(q) {
            return Err(Error::ContractViolation(format!(
                "masked strategy {} repeated question {q}",
                qs.name()
            )));
        }
        let answer = mue.answer(img, q);
        let tr = stepper.advance(q, answer, cfg.mode);
        if tr.terminal {
            reached_terminal = true;
            break;
        }
    }
    let tuple = if cfg.include_terminal_tuples && reached_terminal {
        Some(terminal_tuple(*stepper.state(), &mut episode_rng))
    } else {
        None
    };
    Ok(stepper.into_episode(img.id().to_string(), cfg.gamma, tuple))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Concept, Location};
    use crate::grading::GroundTruthImage;
    use crate::responders::SyntheticResponder;
    use crate::strategies::{QuestioningStrategy, RandomQs, TextbookQs};
    use rand::RngCore;

    fn q(c: Concept, l: Location) -> Question {
        Question::new(c, l)
    }

    fn cfg(mode: AssumptionMode) -> EpisodeConfig {
        EpisodeConfig { gamma: 0.8, max_questions: 20, mode, include_terminal_tuples: false }
    }

    fn healthy() -> GroundTruthImage {
        GroundTruthImage::from_quadrants("healthy", [false; 4], [true, false, false, false], [false, false, true, false])
            .unwrap()
    }

    fn grade2() -> GroundTruthImage {
        GroundTruthImage::from_quadrants(
            "grade2",
            [false, true, false, false],
            [true, false, false, false],
            [false, true, false, false],
        )
        .unwrap()
    }

    #[test]
    fn fresh_question_nonterminal_scores_zero() {
        let tr = step(
            &StateMatrix::empty(),
            &AskedSet::new(),
            q(Concept::OpticDisc, Location::Q1),
            Response::Yes,
            AssumptionMode::SimpleA,
        );
        assert_eq!(tr.reward, 0.0);
        assert!(!tr.terminal);
    }

    #[test]
    fn fresh_question_into_terminal_scores_one() {
        let tr = step(
            &StateMatrix::empty(),
            &AskedSet::new(),
            q(Concept::HardExudate, Location::WholeImage),
            Response::No,
            AssumptionMode::SimpleA,
        );
        assert_eq!(tr.reward, 1.0);
        assert!(tr.terminal);
    }

    #[test]
    fn repeated_question_scores_minus_one() {
        let first = q(Concept::OpticDisc, Location::Q1);
        let mut asked = AskedSet::new();
        asked.insert(first);
        let state = StateMatrix::empty().with(first, Response::Yes);
        let tr = step(&state, &asked, first, Response::Yes, AssumptionMode::SimpleA);
        assert_eq!(tr.reward, -1.0);
    }

    #[test]
    fn textbook_on_healthy_image_is_one_step_with_return_one() {
        let episode = run_episode(
            &TextbookQs { mode: AssumptionMode::SimpleA },
            &SyntheticResponder::groundtruth(),
            &healthy(),
            &cfg(AssumptionMode::SimpleA),
            0,
        )
        .unwrap();
        assert_eq!(episode.len(), 1);
        assert_eq!(episode.return_g, 1.0);
        assert!(episode.reached_terminal());
    }

    #[test]
    fn terminal_at_fifth_question_discounts_to_0_4096() {
        // grade-2 textbook path: EX@whole, FOV@Q1, FOV@Q2, EX@Q2, OD@Q1
        let episode = run_episode(
            &TextbookQs { mode: AssumptionMode::SimpleA },
            &SyntheticResponder::groundtruth(),
            &grade2(),
            &cfg(AssumptionMode::SimpleA),
            0,
        )
        .unwrap();
        assert_eq!(episode.len(), 5);
        assert!((episode.return_g - 0.8f64.powi(4)).abs() < 1e-12);
        assert!((episode.return_g - 0.4096).abs() < 1e-12);
    }

    #[test]
    fn truncation_yields_zero_return_and_no_penalty() {
        let short = EpisodeConfig { max_questions: 3, ..cfg(AssumptionMode::SimpleA) };
        let episode = run_episode(
            &TextbookQs { mode: AssumptionMode::SimpleA },
            &SyntheticResponder::groundtruth(),
            &grade2(),
            &short,
            0,
        )
        .unwrap();
        assert_eq!(episode.len(), 3);
        assert!(!episode.reached_terminal());
        assert_eq!(episode.return_g, 0.0);
    }

    /// Unmasked ablation that repeats the same uninformative question.
    struct StubbornQs;

    impl QuestioningStrategy for StubbornQs {
        fn name(&self) -> &str {
            "stubborn"
        }

        fn next_question(&self, _s: &StateMatrix, _asked: &AskedSet, _rng: &mut dyn RngCore) -> Result<Question> {
            Ok(q(Concept::OpticDisc, Location::WholeImage))
        }

        fn is_masked(&self) -> bool {
            false
        }
    }

    #[test]
    fn unmasked_repeats_run_to_the_cap_and_accumulate_penalties() {
        let episode = run_episode(
            &StubbornQs,
            &SyntheticResponder::groundtruth(),
            &grade2(),
            &cfg(AssumptionMode::SimpleA),
            0,
        )
        .unwrap();
        assert_eq!(episode.len(), 20);
        assert_eq!(episode.transitions[0].reward, 0.0);
        assert!(episode.transitions[1..].iter().all(|t| t.reward == -1.0));
        assert!(episode.return_g < 0.0);
    }

    /// Masked strategy that lies about masking, for the contract check.
    struct LyingQs;

    impl QuestioningStrategy for LyingQs {
        fn name(&self) -> &str {
            "lying"
        }

        fn next_question(&self, _s: &StateMatrix, _asked: &AskedSet, _rng: &mut dyn RngCore) -> Result<Question> {
            Ok(q(Concept::OpticDisc, Location::WholeImage))
        }
    }

    #[test]
    fn masked_strategy_repeating_is_a_contract_violation() {
        let err = run_episode(
            &LyingQs,
            &SyntheticResponder::groundtruth(),
            &grade2(),
            &cfg(AssumptionMode::SimpleA),
            0,
        );
        assert!(matches!(err, Err(Error::ContractViolation(_))));
    }

    #[test]
    fn masked_episodes_never_repeat_and_rewards_stay_nonnegative() {
        for seed in 0..200 {
            let episode = run_episode(
                &RandomQs,
                &SyntheticResponder::groundtruth(),
                &grade2(),
                &cfg(AssumptionMode::ExtraUA),
                seed,
            )
            .unwrap();
            let mut seen = AskedSet::new();
            for tr in &episode.transitions {
                assert!(!seen.contains(tr.action));
                seen.insert(tr.action);
                assert!(tr.reward == 0.0 || tr.reward == 1.0);
            }
        }
    }

    #[test]
    fn identical_inputs_give_identical_episodes() {
        let a = run_episode(
            &RandomQs,
            &SyntheticResponder::groundtruth(),
            &grade2(),
            &cfg(AssumptionMode::SimpleA),
            1234,
        )
        .unwrap();
        let b = run_episode(
            &RandomQs,
            &SyntheticResponder::groundtruth(),
            &grade2(),
            &cfg(AssumptionMode::SimpleA),
            1234,
        )
        .unwrap();
        assert_eq!(a.len(), b.len());
        assert_eq!(a.return_g, b.return_g);
        for (x, y) in a.transitions.iter().zip(&b.transitions) {
            assert_eq!(x.action, y.action);
            assert_eq!(x.reward, y.reward);
        }
    }

    #[test]
    fn terminal_tuple_emitted_on_request() {
        let with_tuples = EpisodeConfig { include_terminal_tuples: true, ..cfg(AssumptionMode::SimpleA) };
        let episode = run_episode(
            &TextbookQs { mode: AssumptionMode::SimpleA },
            &SyntheticResponder::groundtruth(),
            &healthy(),
            &with_tuples,
            7,
        )
        .unwrap();
        let tuple = episode.terminal_tuple.as_ref().expect("terminal episode emits the tuple");
        assert_eq!(tuple.reward, 0.0);
        assert!(tuple.terminal);
        assert_eq!(tuple.state, episode.final_state());
        // the tuple does not change the return
        assert_eq!(episode.return_g, 1.0);
    }

    #[test]
    fn episode_log_rows_match_schema() {
        let episode = run_episode(
            &TextbookQs { mode: AssumptionMode::SimpleA },
            &SyntheticResponder::groundtruth(),
            &grade2(),
            &cfg(AssumptionMode::SimpleA),
            0,
        )
        .unwrap();
        let mut buf = Vec::new();
        episode.write_log_rows(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), episode.len());
        assert_eq!(rows[0], "grade2,0,EX,whole image,yes,0,false");
        assert!(rows.last().unwrap().ends_with(",1,true"));
    }
}
