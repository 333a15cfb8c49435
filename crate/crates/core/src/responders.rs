//! Black-box responder simulators with controlled accuracy and reasoning
//! behavior. The trait is the evaluation boundary: anything able to answer
//! closed-ended concept-location questions about an image can be plugged in.

use serde::{Deserialize, Serialize};

use crate::domain::{AskedSet, Question, Response, NUM_QUESTIONS};
use crate::error::{Error, Result};
use crate::grading::{AssumptionMode, GroundTruthImage};
use crate::rng;
use crate::strategies::textbook_path;

/// Truthfulness rate on the favored question subset of the reasonable and
/// unreasonable responders.
const RELIABLE_RATE: f64 = 0.95;

/// Anything that answers questions about an image.
pub trait Responder: Sync {
    /// Short identifier used in file names and reports.
    fn name(&self) -> String;

    /// Answer a question; never returns [`Response::NotAsked`].
    fn answer(&self, img: &GroundTruthImage, q: Question) -> Response;
}

/// Declarative responder description, as it appears in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ResponderSpec {
    Groundtruth,
    Random { accuracy: f64, seed: u64 },
    Reasonable { accuracy: f64, seed: u64 },
    Unreasonable { accuracy: f64, seed: u64 },
}

impl ResponderSpec {
    fn accuracy(&self) -> Option<f64> {
        match self {
            ResponderSpec::Groundtruth => None,
            ResponderSpec::Random { accuracy, .. }
            | ResponderSpec::Reasonable { accuracy, .. }
            | ResponderSpec::Unreasonable { accuracy, .. } => Some(*accuracy),
        }
    }

    fn seed(&self) -> u64 {
        match self {
            ResponderSpec::Groundtruth => 0,
            ResponderSpec::Random { seed, .. }
            | ResponderSpec::Reasonable { seed, .. }
            | ResponderSpec::Unreasonable { seed, .. } => *seed,
        }
    }
}

/// Questions relevant for diagnosing a specific image: the ones on the
/// textbook procedure's path for that image when every answer is truthful.
pub fn relevant_questions(img: &GroundTruthImage, mode: AssumptionMode) -> AskedSet {
    textbook_path(img, mode).into_iter().collect()
}

/// Off-path truthfulness x solving
/// `RELIABLE_RATE * |R| + x * (N - |R|) = accuracy * N`, clamped to [0, 1].
/// When clamping binds, the realized total accuracy deviates from the target.
pub(crate) fn off_path_truth_rate(accuracy: f64, relevant_count: usize) -> f64 {
    let n = NUM_QUESTIONS as f64;
    let r = relevant_count as f64;
    if relevant_count >= NUM_QUESTIONS {
        return RELIABLE_RATE;
    }
    ((accuracy * n - RELIABLE_RATE * r) / (n - r)).clamp(0.0, 1.0)
}

/// Mirror of [`off_path_truth_rate`] for the unreasonable responder, which
/// is reliable on the complement of the relevant set.
pub(crate) fn on_path_truth_rate(accuracy: f64, relevant_count: usize) -> f64 {
    let n = NUM_QUESTIONS as f64;
    let r = relevant_count as f64;
    if relevant_count == 0 {
        return RELIABLE_RATE;
    }
    ((accuracy * n - RELIABLE_RATE * (n - r)) / r).clamp(0.0, 1.0)
}

/// Simulated method under evaluation. Answers are a pure function of
/// (seed, image identity, question), so repeated queries are
/// self-consistent and concurrent use needs no shared state.
#[derive(Debug, Clone)]
pub struct SyntheticResponder {
    spec: ResponderSpec,
    /// Assumption mode under which question relevance is judged.
    mode: AssumptionMode,
}

impl SyntheticResponder {
    pub fn new(spec: ResponderSpec, mode: AssumptionMode) -> Result<Self> {
        if let Some(acc) = spec.accuracy() {
            if !(0.0..=1.0).contains(&acc) {
                return Err(Error::InvalidInput(format!("responder accuracy must be in [0, 1], got {acc}")));
            }
        }
        Ok(Self { spec, mode })
    }

    pub fn groundtruth() -> Self {
        Self { spec: ResponderSpec::Groundtruth, mode: AssumptionMode::SimpleA }
    }

    pub fn spec(&self) -> &ResponderSpec {
        &self.spec
    }

    fn truth_probability(&self, img: &GroundTruthImage, q: Question) -> f64 {
        match &self.spec {
            ResponderSpec::Groundtruth => 1.0,
            ResponderSpec::Random { accuracy, .. } => *accuracy,
            ResponderSpec::Reasonable { accuracy, .. } => {
                let relevant = relevant_questions(img, self.mode);
                if relevant.contains(q) {
                    RELIABLE_RATE
                } else {
                    off_path_truth_rate(*accuracy, relevant.len())
                }
            }
            ResponderSpec::Unreasonable { accuracy, .. } => {
                let relevant = relevant_questions(img, self.mode);
                if relevant.contains(q) {
                    on_path_truth_rate(*accuracy, relevant.len())
                } else {
                    RELIABLE_RATE
                }
            }
        }
    }
}

impl Responder for SyntheticResponder {
    fn name(&self) -> String {
        match &self.spec {
            ResponderSpec::Groundtruth => "groundtruth".into(),
            ResponderSpec::Random { accuracy, seed } => format!("random_a{:02}_s{seed}", (accuracy * 100.0).round()),
            ResponderSpec::Reasonable { accuracy, seed } => {
                format!("reasonable_a{:02}_s{seed}", (accuracy * 100.0).round())
            }
            ResponderSpec::Unreasonable { accuracy, seed } => {
                format!("unreasonable_a{:02}_s{seed}", (accuracy * 100.0).round())
            }
        }
    }

    fn answer(&self, img: &GroundTruthImage, q: Question) -> Response {
        let truthful = img.truthful_answer(q);
        let p = self.truth_probability(img, q);
        if p >= 1.0 {
            return truthful;
        }
        let draw = rng::unit_f64(rng::mix(&[self.spec.seed(), rng::hash_str(img.id()), q.index() as u64]));
        if draw < p {
            truthful
        } else if truthful == Response::Yes {
            Response::No
        } else {
            Response::Yes
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Concept, Location};

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
    fn groundtruth_is_truthful_everywhere() {
        let responder = SyntheticResponder::groundtruth();
        for img in [healthy(), grade2()] {
            for i in 0..NUM_QUESTIONS {
                let q = Question::from_index(i);
                assert_eq!(responder.answer(&img, q), img.truthful_answer(q));
            }
        }
    }

    #[test]
    fn full_accuracy_random_matches_groundtruth() {
        let responder =
            SyntheticResponder::new(ResponderSpec::Random { accuracy: 1.0, seed: 99 }, AssumptionMode::SimpleA).unwrap();
        for img in [healthy(), grade2()] {
            for i in 0..NUM_QUESTIONS {
                let q = Question::from_index(i);
                assert_eq!(responder.answer(&img, q), img.truthful_answer(q));
            }
        }
    }

    #[test]
    fn answers_are_deterministic_per_seed_image_question() {
        let spec = ResponderSpec::Random { accuracy: 0.5, seed: 7 };
        let a = SyntheticResponder::new(spec.clone(), AssumptionMode::SimpleA).unwrap();
        let b = SyntheticResponder::new(spec, AssumptionMode::SimpleA).unwrap();
        let img = grade2();
        for i in 0..NUM_QUESTIONS {
            let q = Question::from_index(i);
            assert_eq!(a.answer(&img, q), b.answer(&img, q));
            assert_eq!(a.answer(&img, q), a.answer(&img, q));
        }
    }

    #[test]
    fn relevant_set_for_healthy_image_is_the_whole_image_probe_under_simple_a() {
        let relevant = relevant_questions(&healthy(), AssumptionMode::SimpleA);
        assert_eq!(relevant.len(), 1);
        assert!(relevant.contains(Question::new(Concept::HardExudate, Location::WholeImage)));
    }

    #[test]
    fn extra_ua_relevant_set_contains_simple_a_set() {
        for img in [healthy(), grade2()] {
            let simple = relevant_questions(&img, AssumptionMode::SimpleA);
            let extra = relevant_questions(&img, AssumptionMode::ExtraUA);
            for q in simple.iter() {
                assert!(extra.contains(q), "{q} relevant under simple-a but not extra-u-a");
            }
        }
    }

    #[test]
    fn accuracy_balance_solution() {
        // 0.7 target, 3 relevant questions: x = (0.7*15 - 0.95*3) / 12
        let x = off_path_truth_rate(0.7, 3);
        assert!((x - 0.6375).abs() < 1e-12, "got {x}");
        // mirror for the unreasonable responder
        let y = on_path_truth_rate(0.7, 5);
        assert!((y - 0.2).abs() < 1e-12, "got {y}");
        // extreme targets clamp
        assert_eq!(on_path_truth_rate(0.7, 1), 0.0);
    }

    #[test]
    fn invalid_accuracy_rejected() {
        assert!(SyntheticResponder::new(ResponderSpec::Random { accuracy: 1.5, seed: 0 }, AssumptionMode::SimpleA).is_err());
        assert!(
            SyntheticResponder::new(ResponderSpec::Reasonable { accuracy: -0.1, seed: 0 }, AssumptionMode::SimpleA)
                .is_err()
        );
    }

    #[test]
    fn random_responder_accuracy_converges_to_target() {
        let responder =
            SyntheticResponder::new(ResponderSpec::Random { accuracy: 0.7, seed: 5 }, AssumptionMode::SimpleA).unwrap();
        let images = [healthy(), grade2()];
        let mut correct = 0usize;
        let mut total = 0usize;
        for trial in 0..2000u64 {
            let img = &images[(trial % 2) as usize];
            for i in 0..NUM_QUESTIONS {
                let q = Question::from_index(i);
                if responder.answer(img, q) == img.truthful_answer(q) {
                    correct += 1;
                }
                total += 1;
            }
        }
        // only 2 * 15 distinct (image, question) pairs here, so tolerance is loose
        let acc = correct as f64 / total as f64;
        assert!((acc - 0.7).abs() < 0.15, "accuracy {acc}");
    }

    #[test]
    fn reasonable_responder_is_reliable_on_relevant_questions() {
        let responder =
            SyntheticResponder::new(ResponderSpec::Reasonable { accuracy: 0.7, seed: 3 }, AssumptionMode::ExtraUA)
                .unwrap();
        let img = grade2();
        let relevant = relevant_questions(&img, AssumptionMode::ExtraUA);
        for q in relevant.iter() {
            // reliability is per-draw; with one image the draw is fixed, so
            // just confirm the probability routed to the reliable rate
            assert_eq!(responder.truth_probability(&img, q), RELIABLE_RATE);
        }
        let off = AskedSet::from_iter((0..NUM_QUESTIONS).map(Question::from_index).filter(|q| !relevant.contains(*q)));
        for q in off.iter() {
            let p = responder.truth_probability(&img, q);
            assert!(p < RELIABLE_RATE);
        }
    }
}
