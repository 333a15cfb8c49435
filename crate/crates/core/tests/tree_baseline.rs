//! Classification-tree baseline: grade accuracy on held-out terminal
//! histories.

use vtt_core::data::{generate_dataset, split_dataset, DatasetConfig, SplitSpec};
use vtt_core::grading::AssumptionMode;
use vtt_core::strategies::{random_budget, textbook_budget, train_decision_tree, TreeParams};

#[test]
fn tree_baselines_reach_085_test_accuracy() {
    for mode in AssumptionMode::BOTH {
        for budget_kind in ["random", "textbook"] {
            let mut accuracies = Vec::new();
            for seed in 0..5u64 {
                let images =
                    generate_dataset(&DatasetConfig { n_images: 200, seed: 100 + seed, ..DatasetConfig::default() })
                        .unwrap();
                let split = split_dataset(&images, &SplitSpec::default(), 100 + seed).unwrap();
                let (train_budget, test_budget) = match budget_kind {
                    "random" => (
                        random_budget(&split.train, mode, seed).unwrap(),
                        random_budget(&split.test, mode, 7000 + seed).unwrap(),
                    ),
                    _ => (
                        textbook_budget(&split.train, mode, seed).unwrap(),
                        textbook_budget(&split.test, mode, 7000 + seed).unwrap(),
                    ),
                };
                let model = train_decision_tree(&train_budget, &TreeParams::default()).unwrap();
                accuracies.push(model.accuracy(&test_budget));
            }
            let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
            assert!(mean >= 0.85, "{budget_kind} budget under {mode}: accuracy {mean} ({accuracies:?})");
        }
    }
}

#[test]
fn training_accuracy_is_near_perfect_for_unpruned_trees() {
    let images = generate_dataset(&DatasetConfig { n_images: 120, seed: 42, ..DatasetConfig::default() }).unwrap();
    let budget = random_budget(&images, AssumptionMode::SimpleA, 2).unwrap();
    let model = train_decision_tree(&budget, &TreeParams::default()).unwrap();
    let accuracy = model.accuracy(&budget);
    assert!(accuracy >= 0.99, "training accuracy {accuracy}");
}
