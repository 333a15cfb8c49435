//! Episode-level properties across every shipped strategy.

use vtt_core::data::{generate_dataset, split_dataset, DatasetConfig, SplitSpec};
use vtt_core::domain::AskedSet;
use vtt_core::environment::{run_episode, EpisodeConfig};
use vtt_core::grading::AssumptionMode;
use vtt_core::learn::{QNetwork, RlQs};
use vtt_core::responders::{Responder, ResponderSpec, SyntheticResponder};
use vtt_core::strategies::{
    random_budget, textbook_budget, train_decision_tree, QuestioningStrategy, RandomQs, TextbookQs, TreeParams,
    TreeQs,
};

fn strategies(mode: AssumptionMode, train: &[vtt_core::grading::GroundTruthImage]) -> Vec<Box<dyn QuestioningStrategy>> {
    let rb = random_budget(train, mode, 3).unwrap();
    let tb = textbook_budget(train, mode, 4).unwrap();
    vec![
        Box::new(RandomQs),
        Box::new(TextbookQs { mode }),
        Box::new(TreeQs::new(train_decision_tree(&rb, &TreeParams::default()).unwrap(), "dt-rb")),
        Box::new(TreeQs::new(train_decision_tree(&tb, &TreeParams::default()).unwrap(), "dt-tb")),
        Box::new(RlQs::new(QNetwork::new(&[32, 16], 5), "rl-untrained")),
    ]
}

#[test]
fn no_strategy_ever_repeats_a_question() {
    let images = generate_dataset(&DatasetConfig { n_images: 50, seed: 9, ..DatasetConfig::default() }).unwrap();
    let split = split_dataset(&images, &SplitSpec::default(), 9).unwrap();
    let noisy =
        SyntheticResponder::new(ResponderSpec::Random { accuracy: 0.7, seed: 1 }, AssumptionMode::SimpleA).unwrap();
    let groundtruth = SyntheticResponder::groundtruth();
    let responders: [&dyn Responder; 2] = [&groundtruth, &noisy];
    for mode in AssumptionMode::BOTH {
        let cfg = EpisodeConfig { gamma: 0.8, max_questions: 20, mode, include_terminal_tuples: false };
        for strategy in strategies(mode, &split.train) {
            for (i, img) in images.iter().enumerate() {
                for responder in responders {
                    let episode = run_episode(strategy.as_ref(), responder, img, &cfg, i as u64).unwrap();
                    let mut seen = AskedSet::new();
                    for tr in &episode.transitions {
                        assert!(!seen.contains(tr.action), "{} repeated {}", strategy.name(), tr.action);
                        seen.insert(tr.action);
                    }
                }
            }
        }
    }
}

#[test]
fn masked_returns_are_zero_or_a_discount_power() {
    let images = generate_dataset(&DatasetConfig { n_images: 40, seed: 10, ..DatasetConfig::default() }).unwrap();
    let cfg = EpisodeConfig {
        gamma: 0.8,
        max_questions: 20,
        mode: AssumptionMode::ExtraUA,
        include_terminal_tuples: false,
    };
    for (i, img) in images.iter().enumerate() {
        let episode = run_episode(&RandomQs, &SyntheticResponder::groundtruth(), img, &cfg, i as u64).unwrap();
        if episode.reached_terminal() {
            let expected = cfg.gamma.powi(episode.len() as i32 - 1);
            assert!((episode.return_g - expected).abs() < 1e-12);
        } else {
            assert_eq!(episode.return_g, 0.0);
        }
    }
}

#[test]
fn episode_batches_are_deterministic_across_runs() {
    let images = generate_dataset(&DatasetConfig { n_images: 30, seed: 11, ..DatasetConfig::default() }).unwrap();
    let cfg = EpisodeConfig { gamma: 0.8, max_questions: 20, mode: AssumptionMode::SimpleA, include_terminal_tuples: false };
    let noisy =
        SyntheticResponder::new(ResponderSpec::Reasonable { accuracy: 0.7, seed: 2 }, AssumptionMode::SimpleA).unwrap();
    let run = || vtt_core::eval::run_episodes(&RandomQs, &noisy, &images, &cfg, 77).unwrap();
    let a = run();
    let b = run();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.return_g, y.return_g);
        assert_eq!(x.len(), y.len());
        for (tx, ty) in x.transitions.iter().zip(&y.transitions) {
            assert_eq!(tx.action, ty.action);
            assert_eq!(tx.answer(), ty.answer());
        }
    }
}
