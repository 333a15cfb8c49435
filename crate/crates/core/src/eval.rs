//! Evaluation metrics: reward tables over a test set, beta-posterior
//! perception of responder accuracy, and the information radius that scores
//! how well a strategy separates responders of equal overall accuracy.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::domain::Question;
use crate::environment::{run_episode, Episode, EpisodeConfig};
use crate::error::{Error, Result};
use crate::exec;
use crate::grading::GroundTruthImage;
use crate::responders::Responder;
use crate::rng;
use crate::strategies::QuestioningStrategy;

/// Mean return and question count over a bucket of episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradeStats {
    pub count: usize,
    pub mean_reward: f64,
    pub mean_questions: f64,
}

/// Per-grade and total episode statistics for one strategy-responder pair.
#[derive(Debug, Clone, Serialize)]
pub struct RewardTable {
    pub qs: String,
    pub mue: String,
    /// Indexed by grade; `None` when the test set has no such images.
    pub per_grade: [Option<GradeStats>; 3],
    pub total: GradeStats,
}

fn bucket_stats(rewards_and_lengths: &[(f64, usize)]) -> Option<GradeStats> {
    if rewards_and_lengths.is_empty() {
        return None;
    }
    let count = rewards_and_lengths.len();
    let mean_reward = rewards_and_lengths.iter().map(|(r, _)| r).sum::<f64>() / count as f64;
    let mean_questions = rewards_and_lengths.iter().map(|(_, l)| *l as f64).sum::<f64>() / count as f64;
    Some(GradeStats { count, mean_reward, mean_questions })
}

/// Run one episode per image, in parallel when enabled; per-image seeds are
/// derived from the caller's seed so results do not depend on scheduling.
pub fn run_episodes(
    qs: &dyn QuestioningStrategy,
    mue: &dyn Responder,
    images: &[GroundTruthImage],
    env_cfg: &EpisodeConfig,
    seed: u64,
) -> Result<Vec<Episode>> {
    let episodes = exec::map_indexed(images, |i, img| run_episode(qs, mue, img, env_cfg, rng::mix(&[seed, i as u64])));
    episodes.into_iter().collect()
}

/// Evaluate a strategy against a responder over a test set: one episode per
/// image, averaged per true grade and overall.
pub fn reward_table(
    qs: &dyn QuestioningStrategy,
    mue: &dyn Responder,
    images: &[GroundTruthImage],
    env_cfg: &EpisodeConfig,
    seed: u64,
) -> Result<RewardTable> {
    if images.is_empty() {
        return Err(Error::InvalidInput("reward table needs a non-empty test set".into()));
    }
    let episodes = run_episodes(qs, mue, images, env_cfg, seed)?;
    let mut buckets: [Vec<(f64, usize)>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut all = Vec::with_capacity(images.len());
    for (img, episode) in images.iter().zip(&episodes) {
        let entry = (episode.return_g, episode.len());
        buckets[img.grade().index()].push(entry);
        all.push(entry);
    }
    Ok(RewardTable {
        qs: qs.name().to_string(),
        mue: mue.name(),
        per_grade: [bucket_stats(&buckets[0]), bucket_stats(&buckets[1]), bucket_stats(&buckets[2])],
        total: bucket_stats(&all).expect("non-empty test set"),
    })
}

// ---------------------------------------------------------------------------
// Beta perception and information radius
// ---------------------------------------------------------------------------

/// Beta posterior over a responder's answer accuracy as observed through
/// one strategy's questions. Starts uninformative at (1, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaPerception {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for BetaPerception {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }
}

impl BetaPerception {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn posterior_mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    /// Observations folded in so far.
    pub fn updates(&self) -> f64 {
        self.alpha + self.beta - 2.0
    }

    pub fn log_density(&self, x: f64) -> f64 {
        let ln_b = ln_gamma(self.alpha) + ln_gamma(self.beta) - ln_gamma(self.alpha + self.beta);
        (self.alpha - 1.0) * x.ln() + (self.beta - 1.0) * (1.0 - x).ln() - ln_b
    }

    pub fn density(&self, x: f64) -> f64 {
        self.log_density(x).exp()
    }
}

/// Conjugate update after one observed question-response.
pub fn update_beta(p: BetaPerception, correct: bool) -> BetaPerception {
    if correct {
        BetaPerception { alpha: p.alpha + 1.0, ..p }
    } else {
        BetaPerception { beta: p.beta + 1.0, ..p }
    }
}

/// Integration grid is clipped away from the beta density's endpoints.
const GRID_EPS: f64 = 1e-6;

/// Mean Kullback-Leibler divergence from each distribution to their average,
/// integrated with the trapezoid rule on a uniform grid over (0, 1).
pub fn information_radius(perceptions: &[BetaPerception], grid_points: usize) -> Result<f64> {
    if perceptions.len() < 2 {
        return Err(Error::InvalidInput("information radius needs at least 2 distributions".into()));
    }
    if grid_points < 64 {
        return Err(Error::InvalidInput("information radius needs at least 64 grid points".into()));
    }
    for p in perceptions {
        if !(p.alpha > 0.0 && p.beta > 0.0 && p.alpha.is_finite() && p.beta.is_finite()) {
            return Err(Error::NumericFailure(format!("degenerate beta parameters ({}, {})", p.alpha, p.beta)));
        }
    }
    let n = perceptions.len() as f64;
    let lo = GRID_EPS;
    let hi = 1.0 - GRID_EPS;
    let h = (hi - lo) / (grid_points - 1) as f64;

    // integrand per distribution: p_i(x) * (ln p_i(x) - ln mean(x))
    let mut kl = vec![0.0; perceptions.len()];
    let mut prev: Option<Vec<f64>> = None;
    for k in 0..grid_points {
        let x = lo + h * k as f64;
        let logs: Vec<f64> = perceptions.iter().map(|p| p.log_density(x)).collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_mean = max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln() - n.ln();
        let values: Vec<f64> = logs
            .iter()
            .map(|&l| {
                let p = l.exp();
                if p < 1e-300 {
                    0.0
                } else {
                    p * (l - log_mean)
                }
            })
            .collect();
        if let Some(prev) = &prev {
            for (i, acc) in kl.iter_mut().enumerate() {
                *acc += 0.5 * h * (prev[i] + values[i]);
            }
        }
        prev = Some(values);
    }
    let radius = kl.iter().sum::<f64>() / n;
    if !radius.is_finite() {
        return Err(Error::NumericFailure(format!("information radius diverged: {radius}")));
    }
    Ok(radius)
}

/// Final beta parameters for one strategy-responder stream.
#[derive(Debug, Clone, Serialize)]
pub struct PerceptionEntry {
    pub mue: String,
    pub alpha: f64,
    pub beta: f64,
    pub posterior_mean: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StrategySeparation {
    pub qs: String,
    pub information_radius: f64,
    pub perceptions: Vec<PerceptionEntry>,
    /// Questions this strategy asked over the test set, per responder.
    pub questions_asked: Vec<usize>,
}

/// Separation analysis across strategies and responders.
#[derive(Debug, Clone, Serialize)]
pub struct SeparationReport {
    /// Update cap: the question count of the most question-efficient
    /// strategy-responder stream, applied to every stream.
    pub n_u: usize,
    pub strategies: Vec<StrategySeparation>,
}

/// A (question, was-the-answer-correct) stream in episode order.
fn correctness_stream(episodes: &[Episode], images: &[GroundTruthImage]) -> Vec<(Question, bool)> {
    let mut stream = Vec::new();
    for (img, episode) in images.iter().zip(episodes) {
        for tr in &episode.transitions {
            stream.push((tr.action, tr.answer() == img.truthful_answer(tr.action)));
        }
    }
    stream
}

/// Run every strategy against every responder over the test set, cap each
/// correctness stream at the question count of the most efficient stream,
/// and compute per-strategy beta perceptions and information radii.
pub fn separation_experiment(
    strategies: &[&dyn QuestioningStrategy],
    responders: &[&dyn Responder],
    images: &[GroundTruthImage],
    env_cfg: &EpisodeConfig,
    seed: u64,
    grid_points: usize,
) -> Result<SeparationReport> {
    if strategies.is_empty() || responders.is_empty() {
        return Err(Error::InvalidInput("separation needs at least one strategy and one responder".into()));
    }
    if images.is_empty() {
        return Err(Error::InvalidInput("separation needs a non-empty test set".into()));
    }
    let mut streams: Vec<Vec<Vec<(Question, bool)>>> = Vec::with_capacity(strategies.len());
    for (qi, qs) in strategies.iter().enumerate() {
        let mut per_responder = Vec::with_capacity(responders.len());
        for (ri, mue) in responders.iter().enumerate() {
            let episodes = run_episodes(*qs, *mue, images, env_cfg, rng::mix(&[seed, qi as u64, ri as u64]))?;
            per_responder.push(correctness_stream(&episodes, images));
        }
        streams.push(per_responder);
    }
    let n_u = streams
        .iter()
        .flat_map(|per| per.iter().map(Vec::len))
        .min()
        .expect("at least one stream");

    let mut report = SeparationReport { n_u, strategies: Vec::with_capacity(strategies.len()) };
    for (qi, qs) in strategies.iter().enumerate() {
        let mut perceptions = Vec::with_capacity(responders.len());
        let mut counts = Vec::with_capacity(responders.len());
        let mut betas = Vec::with_capacity(responders.len());
        for (ri, mue) in responders.iter().enumerate() {
            let stream = &streams[qi][ri];
            let mut beta = BetaPerception::new();
            for &(_, correct) in stream.iter().take(n_u) {
                beta = update_beta(beta, correct);
            }
            counts.push(stream.len());
            betas.push(beta);
            perceptions.push(PerceptionEntry {
                mue: mue.name(),
                alpha: beta.alpha,
                beta: beta.beta,
                posterior_mean: beta.posterior_mean(),
            });
        }
        let radius = if betas.len() < 2 { 0.0 } else { information_radius(&betas, grid_points)? };
        report.strategies.push(StrategySeparation {
            qs: qs.name().to_string(),
            information_radius: radius,
            perceptions,
            questions_asked: counts,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_dataset, DatasetConfig};
    use crate::grading::{AssumptionMode, Grade};
    use crate::responders::{ResponderSpec, SyntheticResponder};
    use crate::strategies::{RandomQs, TextbookQs};

    fn env(mode: AssumptionMode) -> EpisodeConfig {
        EpisodeConfig { gamma: 0.8, max_questions: 20, mode, include_terminal_tuples: false }
    }

    fn small_dataset(seed: u64) -> Vec<GroundTruthImage> {
        generate_dataset(&DatasetConfig {
            n_images: 60,
            grade_mix: [0.44, 0.06, 0.5],
            ex_quadrant_rate: 0.4,
            od_two_quadrant_rate: 0.3,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn textbook_on_healthy_subset_scores_exactly_one() {
        let images: Vec<GroundTruthImage> =
            small_dataset(1).into_iter().filter(|i| i.grade() == Grade::G0).collect();
        assert!(!images.is_empty());
        let table = reward_table(
            &TextbookQs { mode: AssumptionMode::SimpleA },
            &SyntheticResponder::groundtruth(),
            &images,
            &env(AssumptionMode::SimpleA),
            0,
        )
        .unwrap();
        let g0 = table.per_grade[0].unwrap();
        assert_eq!(g0.mean_reward, 1.0);
        assert_eq!(g0.mean_questions, 1.0);
        assert!(table.per_grade[1].is_none());
        assert!(table.per_grade[2].is_none());
    }

    #[test]
    fn random_strategy_scores_below_textbook() {
        let images = small_dataset(2);
        let cfg = env(AssumptionMode::SimpleA);
        let gt = SyntheticResponder::groundtruth();
        let textbook = reward_table(&TextbookQs { mode: AssumptionMode::SimpleA }, &gt, &images, &cfg, 5).unwrap();
        let random = reward_table(&RandomQs, &gt, &images, &cfg, 5).unwrap();
        assert!(
            random.total.mean_reward < textbook.total.mean_reward,
            "random {} vs textbook {}",
            random.total.mean_reward,
            textbook.total.mean_reward
        );
    }

    #[test]
    fn total_is_count_weighted_mean_of_grade_buckets() {
        let images = small_dataset(3);
        let table = reward_table(
            &TextbookQs { mode: AssumptionMode::ExtraUA },
            &SyntheticResponder::groundtruth(),
            &images,
            &env(AssumptionMode::ExtraUA),
            9,
        )
        .unwrap();
        let mut weighted = 0.0;
        let mut count = 0usize;
        for stats in table.per_grade.iter().flatten() {
            weighted += stats.mean_reward * stats.count as f64;
            count += stats.count;
        }
        assert_eq!(count, table.total.count);
        assert!((weighted / count as f64 - table.total.mean_reward).abs() < 1e-12);
    }

    #[test]
    fn beta_updates_count_successes_and_failures() {
        let mut p = BetaPerception::new();
        p = update_beta(p, true);
        assert_eq!((p.alpha, p.beta), (2.0, 1.0));
        for _ in 0..6 {
            p = update_beta(p, true);
        }
        for _ in 0..3 {
            p = update_beta(p, false);
        }
        assert_eq!((p.alpha, p.beta), (8.0, 4.0));
        assert!((p.posterior_mean() - 8.0 / 12.0).abs() < 1e-12);
        assert_eq!(p.updates(), 10.0);
    }

    #[test]
    fn all_correct_stream_posterior_mean() {
        let mut p = BetaPerception::new();
        let k = 25;
        for _ in 0..k {
            p = update_beta(p, true);
        }
        assert!((p.posterior_mean() - (k as f64 + 1.0) / (k as f64 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn identical_distributions_have_zero_radius() {
        for k in [2usize, 3, 5] {
            let p = BetaPerception { alpha: 13.0, beta: 5.0 };
            let radius = information_radius(&vec![p; k], 4096).unwrap();
            assert!(radius.abs() < 1e-9, "k={k}: {radius}");
        }
    }

    #[test]
    fn opposed_betas_give_large_grid_converged_radius() {
        let a = BetaPerception { alpha: 50.0, beta: 2.0 };
        let b = BetaPerception { alpha: 2.0, beta: 50.0 };
        let coarse = information_radius(&[a, b], 1 << 10).unwrap();
        let fine = information_radius(&[a, b], 1 << 12).unwrap();
        let rel = (coarse - fine).abs() / fine.abs();
        assert!(rel < 1e-3, "grid drift {rel}");
        // near-disjoint supports: each KL to the mean approaches ln 2
        assert!(fine > 0.5);
        assert!((fine - std::f64::consts::LN_2).abs() < 1e-3, "radius {fine}");
    }

    #[test]
    fn radius_is_permutation_symmetric_and_nonnegative() {
        let ps = [
            BetaPerception { alpha: 40.0, beta: 10.0 },
            BetaPerception { alpha: 10.0, beta: 40.0 },
            BetaPerception { alpha: 25.0, beta: 25.0 },
        ];
        let r1 = information_radius(&ps, 4096).unwrap();
        let reordered = [ps[2], ps[0], ps[1]];
        let r2 = information_radius(&reordered, 4096).unwrap();
        assert!((r1 - r2).abs() < 1e-12);
        assert!(r1 >= 0.0);
    }

    #[test]
    fn radius_input_validation() {
        let p = BetaPerception::new();
        assert!(information_radius(&[p], 4096).is_err());
        assert!(information_radius(&[p, p], 8).is_err());
        let bad = BetaPerception { alpha: 0.0, beta: 1.0 };
        assert!(matches!(information_radius(&[p, bad], 4096), Err(Error::NumericFailure(_))));
    }

    #[test]
    fn single_responder_separation_has_zero_radius() {
        let images = small_dataset(4);
        let gt = SyntheticResponder::groundtruth();
        let strategies: Vec<&dyn QuestioningStrategy> = vec![&RandomQs];
        let responders: Vec<&dyn Responder> = vec![&gt];
        let report =
            separation_experiment(&strategies, &responders, &images, &env(AssumptionMode::SimpleA), 3, 1024).unwrap();
        assert_eq!(report.strategies[0].information_radius, 0.0);
        assert!(report.n_u > 0);
    }

    #[test]
    fn identical_responders_yield_vanishing_radius() {
        let images = small_dataset(5);
        let gt1 = SyntheticResponder::groundtruth();
        let gt2 = SyntheticResponder::groundtruth();
        let gt3 = SyntheticResponder::groundtruth();
        let textbook = TextbookQs { mode: AssumptionMode::SimpleA };
        let strategies: Vec<&dyn QuestioningStrategy> = vec![&textbook];
        let responders: Vec<&dyn Responder> = vec![&gt1, &gt2, &gt3];
        let report =
            separation_experiment(&strategies, &responders, &images, &env(AssumptionMode::SimpleA), 3, 4096).unwrap();
        // identical answer streams produce identical posteriors
        assert!(report.strategies[0].information_radius < 0.05);
    }

    mod radius_properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn radius_is_nonnegative_and_finite(
                params in proptest::collection::vec((1.0..200.0f64, 1.0..200.0f64), 2..6)
            ) {
                let ps: Vec<BetaPerception> =
                    params.into_iter().map(|(alpha, beta)| BetaPerception { alpha, beta }).collect();
                let radius = information_radius(&ps, 1024).unwrap();
                prop_assert!(radius.is_finite());
                // trapezoid error can dip a hair below zero for near-identical inputs
                prop_assert!(radius > -1e-9, "radius {radius}");
            }
        }
    }

    #[test]
    fn capping_uses_exactly_n_u_updates_per_stream() {
        let images = small_dataset(6);
        let gt = SyntheticResponder::groundtruth();
        let noisy =
            SyntheticResponder::new(ResponderSpec::Random { accuracy: 0.7, seed: 2 }, AssumptionMode::SimpleA).unwrap();
        let textbook = TextbookQs { mode: AssumptionMode::SimpleA };
        let strategies: Vec<&dyn QuestioningStrategy> = vec![&textbook, &RandomQs];
        let responders: Vec<&dyn Responder> = vec![&gt, &noisy];
        let report =
            separation_experiment(&strategies, &responders, &images, &env(AssumptionMode::SimpleA), 7, 1024).unwrap();
        let min_questions =
            report.strategies.iter().flat_map(|s| s.questions_asked.iter().copied()).min().unwrap();
        assert_eq!(report.n_u, min_questions);
        for s in &report.strategies {
            for p in &s.perceptions {
                assert_eq!((p.alpha + p.beta - 2.0) as usize, report.n_u);
            }
        }
    }
}
