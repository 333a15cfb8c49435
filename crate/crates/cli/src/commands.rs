//! Subcommand implementations. All outputs are deterministic for a given
//! config and seed: files never embed timestamps and every random draw comes
//! from a named sub-stream of the master seed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use vtt_core::data::{generate_dataset, load_annotations_file, save_annotations, split_dataset, DatasetSplit};
use vtt_core::environment::EPISODE_LOG_HEADER;
use vtt_core::eval::{reward_table, run_episodes, separation_experiment, RewardTable};
use vtt_core::grading::GroundTruthImage;
use vtt_core::learn::{
    load_checkpoint, save_checkpoint, train_mc, train_qlearning, QNetwork, RlQs, TrainScheme, TrainedModel,
};
use vtt_core::responders::{Responder, SyntheticResponder};
use vtt_core::rng;
use vtt_core::strategies::{
    random_budget, textbook_budget, train_decision_tree, unroll_strategy, QuestioningStrategy, RandomQs, TextbookQs,
    TreeParams, TreeQs, UnrollParams,
};

use crate::config::{RunConfig, StrategySpec};
use crate::CliError;

/// Dataset plus its split, loaded or regenerated deterministically.
pub struct PreparedData {
    pub images: Vec<GroundTruthImage>,
    pub split: DatasetSplit,
}

pub fn prepare_data(config: &RunConfig) -> Result<PreparedData, CliError> {
    let images = match (&config.dataset_config(), &config.data.annotations) {
        (Some(cfg), None) => generate_dataset(cfg)?,
        (None, Some(path)) => load_annotations_file(path)?,
        _ => unreachable!("config validation enforces exactly one source"),
    };
    let split = split_dataset(&images, &config.split_spec(), config.split_seed())?;
    for warning in &split.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(PreparedData { images, split })
}

fn ensure_output_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    Ok(())
}

fn refuse_existing(paths: &[PathBuf], force: bool) -> Result<(), CliError> {
    if force {
        return Ok(());
    }
    for path in paths {
        if path.exists() {
            return Err(CliError::Data(format!("{} already exists (use --force to overwrite)", path.display())));
        }
    }
    Ok(())
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Numeric(format!("cannot serialize {}: {e}", path.display())))?;
    write_file(path, json.as_bytes())
}

#[derive(Serialize)]
struct SplitManifest {
    train: Vec<String>,
    validation: Vec<String>,
    test: Vec<String>,
}

fn ids(images: &[GroundTruthImage]) -> Vec<String> {
    images.iter().map(|i| i.id().to_string()).collect()
}

/// `generate`: write the annotation CSV and the split manifest.
pub fn cmd_generate(config: &RunConfig, force: bool) -> Result<(), CliError> {
    if config.data.generate.is_none() {
        return Err(CliError::Config("generate requires a data.generate section".into()));
    }
    ensure_output_dir(&config.output_dir)?;
    let annotations_path = config.output_dir.join("annotations.csv");
    let splits_path = config.output_dir.join("splits.json");
    refuse_existing(&[annotations_path.clone(), splits_path.clone()], force)?;

    let data = prepare_data(config)?;
    let mut buf = Vec::new();
    save_annotations(&data.images, &mut buf)?;
    write_file(&annotations_path, &buf)?;
    write_json(
        &splits_path,
        &SplitManifest { train: ids(&data.split.train), validation: ids(&data.split.validation), test: ids(&data.split.test) },
    )?;
    println!("wrote {} images to {}", data.images.len(), annotations_path.display());
    println!(
        "split sizes: train {}, validation {}, test {}",
        data.split.train.len(),
        data.split.validation.len(),
        data.split.test.len()
    );
    Ok(())
}

fn train_one(config: &RunConfig, data: &PreparedData, repetition: usize) -> Result<TrainedModel, CliError> {
    let cfg = config.train_config(repetition);
    let pol = config.policy_config();
    let env_cfg = config.env_config(true);
    let model = match config.training.scheme {
        TrainScheme::Q => train_qlearning(&data.split.train, &data.split.validation, &cfg, &pol, &env_cfg)?,
        TrainScheme::Mc => train_mc(&data.split.train, &data.split.validation, &cfg, &pol, &env_cfg)?,
    };
    Ok(model)
}

/// `train`: run the configured repetitions, keep the checkpoint with the
/// best selected validation reward, and log every epoch.
pub fn cmd_train(config: &RunConfig, force: bool) -> Result<(), CliError> {
    ensure_output_dir(&config.output_dir)?;
    let scheme = config.training.scheme;
    let checkpoint_path = config.output_dir.join(format!("checkpoint_{}.json", scheme.label()));
    let log_path = config.output_dir.join("training_log.csv");
    refuse_existing(&[checkpoint_path.clone(), log_path.clone()], force)?;

    let data = prepare_data(config)?;
    let mut log = String::from("repetition,epoch,epsilon,validation_reward\n");
    let mut best: Option<(usize, TrainedModel)> = None;
    for rep in 0..config.training.repetitions {
        let model = train_one(config, &data, rep)?;
        for stats in &model.log {
            writeln!(log, "{rep},{},{},{}", stats.epoch, stats.epsilon, stats.validation_reward)
                .expect("string writes are infallible");
        }
        if model.burn_in_waived {
            eprintln!(
                "warning: repetition {rep}: no epoch reached the burn-in ({}); selected epoch {} instead",
                config.training.burn_in_epochs, model.best_epoch
            );
        }
        println!(
            "repetition {rep}: best epoch {} with validation reward {:.4}",
            model.best_epoch, model.best_validation_reward
        );
        let better = best
            .as_ref()
            .is_none_or(|(_, b)| model.best_validation_reward > b.best_validation_reward);
        if better {
            best = Some((rep, model));
        }
    }
    let (rep, model) = best.expect("at least one repetition");
    save_checkpoint(&model.network, scheme, &checkpoint_path)?;
    write_file(&log_path, log.as_bytes())?;
    println!(
        "kept repetition {rep} (validation reward {:.4}) in {}",
        model.best_validation_reward,
        checkpoint_path.display()
    );
    Ok(())
}

/// Strategies materialized from their config specs.
pub struct BuiltStrategies {
    strategies: Vec<Box<dyn QuestioningStrategy>>,
}

impl BuiltStrategies {
    pub fn all(&self) -> Vec<&dyn QuestioningStrategy> {
        self.strategies.iter().map(AsRef::as_ref).collect()
    }

    pub fn by_name(&self, name: &str) -> Option<&dyn QuestioningStrategy> {
        self.strategies.iter().map(AsRef::as_ref).find(|s| s.name() == name)
    }
}

fn load_rl_strategy(checkpoint: &Path) -> Result<RlQs, CliError> {
    let (net, scheme): (QNetwork, String) = load_checkpoint(checkpoint)?;
    Ok(RlQs::new(net, format!("rl-{scheme}")))
}

/// Build every configured strategy. Tree strategies are fitted on budgets
/// from the training split; the RL strategy loads its checkpoint.
pub fn build_strategies(config: &RunConfig, data: &PreparedData) -> Result<BuiltStrategies, CliError> {
    let budget_seed = rng::derive(config.seed, "tree-budget");
    let mut strategies: Vec<Box<dyn QuestioningStrategy>> = Vec::new();
    for spec in &config.evaluation.strategies {
        let strategy: Box<dyn QuestioningStrategy> = match spec {
            StrategySpec::Random => Box::new(RandomQs),
            StrategySpec::Textbook => Box::new(TextbookQs { mode: config.mode }),
            StrategySpec::DtRb => {
                let budget = random_budget(&data.split.train, config.mode, budget_seed)?;
                let model = train_decision_tree(&budget, &TreeParams::default())?;
                Box::new(TreeQs::new(model, "dt-rb"))
            }
            StrategySpec::DtTb => {
                let budget = textbook_budget(&data.split.train, config.mode, budget_seed)?;
                let model = train_decision_tree(&budget, &TreeParams::default())?;
                Box::new(TreeQs::new(model, "dt-tb"))
            }
            StrategySpec::Rl { checkpoint } => Box::new(load_rl_strategy(checkpoint)?),
        };
        strategies.push(strategy);
    }
    Ok(BuiltStrategies { strategies })
}

pub fn build_responders(config: &RunConfig) -> Result<Vec<SyntheticResponder>, CliError> {
    if config.responders.is_empty() {
        return Ok(vec![SyntheticResponder::groundtruth()]);
    }
    config
        .responders
        .iter()
        .map(|spec| SyntheticResponder::new(spec.clone(), config.mode).map_err(CliError::from))
        .collect()
}

fn format_opt(value: Option<f64>) -> String {
    value.map(|v| format!("{v}")).unwrap_or_default()
}

fn reward_table_csv(table: &RewardTable, mode_label: &str) -> String {
    let mut csv = String::from(
        "qs,mue,mode,grade0_count,grade0_mean_reward,grade0_mean_questions,\
         grade1_count,grade1_mean_reward,grade1_mean_questions,\
         grade2_count,grade2_mean_reward,grade2_mean_questions,\
         total_count,total_mean_reward,total_mean_questions\n",
    );
    let mut row = format!("{},{},{mode_label}", table.qs, table.mue);
    for stats in &table.per_grade {
        let count = stats.map(|s| format!("{}", s.count)).unwrap_or_default();
        write!(
            row,
            ",{count},{},{}",
            format_opt(stats.map(|s| s.mean_reward)),
            format_opt(stats.map(|s| s.mean_questions))
        )
        .expect("string writes are infallible");
    }
    write!(row, ",{},{},{}", table.total.count, table.total.mean_reward, table.total.mean_questions)
        .expect("string writes are infallible");
    csv.push_str(&row);
    csv.push('\n');
    csv
}

/// `evaluate`: one reward table and one episode log per strategy-responder
/// pair, over the test split.
pub fn cmd_evaluate(config: &RunConfig, force: bool) -> Result<(), CliError> {
    config.validate_strategy_paths()?;
    ensure_output_dir(&config.output_dir)?;
    let data = prepare_data(config)?;
    let strategies = build_strategies(config, &data)?;
    let responders = build_responders(config)?;
    let env_cfg = config.env_config(false);
    let eval_seed = config.eval_seed();

    let mut outputs: Vec<PathBuf> = Vec::new();
    for qs in strategies.all() {
        for mue in &responders {
            outputs.push(config.output_dir.join(format!("rewards_{}_{}.csv", qs.name(), mue.name())));
            outputs.push(config.output_dir.join(format!("episodes_{}_{}.csv", qs.name(), mue.name())));
        }
    }
    refuse_existing(&outputs, force)?;

    for (qi, qs) in strategies.all().into_iter().enumerate() {
        for (ri, mue) in responders.iter().enumerate() {
            let seed = rng::mix(&[eval_seed, qi as u64, ri as u64]);
            let table = reward_table(qs, mue, &data.split.test, &env_cfg, seed)?;
            let rewards_path = config.output_dir.join(format!("rewards_{}_{}.csv", qs.name(), mue.name()));
            write_file(&rewards_path, reward_table_csv(&table, config.mode.label()).as_bytes())?;

            let episodes = run_episodes(qs, mue, &data.split.test, &env_cfg, seed)?;
            let mut log = Vec::new();
            use std::io::Write as _;
            writeln!(log, "{EPISODE_LOG_HEADER}").expect("vec writes are infallible");
            for episode in &episodes {
                episode.write_log_rows(&mut log)?;
            }
            let episodes_path = config.output_dir.join(format!("episodes_{}_{}.csv", qs.name(), mue.name()));
            write_file(&episodes_path, &log)?;
            println!(
                "{} vs {}: total reward {:.4} [{:.2} questions] -> {}",
                qs.name(),
                mue.name(),
                table.total.mean_reward,
                table.total.mean_questions,
                rewards_path.display()
            );
        }
    }
    Ok(())
}

/// Points at which beta densities are sampled for the curve export.
const BETA_CURVE_POINTS: usize = 512;

/// `separate`: responder-separation analysis producing the report JSON and
/// sampled beta densities.
pub fn cmd_separate(config: &RunConfig, force: bool) -> Result<(), CliError> {
    config.validate_strategy_paths()?;
    ensure_output_dir(&config.output_dir)?;
    let report_path = config.output_dir.join("separation.json");
    let curves_path = config.output_dir.join("beta_curves.csv");
    refuse_existing(&[report_path.clone(), curves_path.clone()], force)?;

    let data = prepare_data(config)?;
    let strategies = build_strategies(config, &data)?;
    let responders = build_responders(config)?;
    let responder_refs: Vec<&dyn Responder> = responders.iter().map(|r| r as &dyn Responder).collect();
    let env_cfg = config.env_config(false);

    let report = separation_experiment(
        &strategies.all(),
        &responder_refs,
        &data.split.test,
        &env_cfg,
        rng::derive(config.seed, "separation"),
        config.evaluation.grid_points,
    )?;
    write_json(&report_path, &report)?;

    let mut curves = String::from("qs,mue,x,density\n");
    for strategy in &report.strategies {
        for perception in &strategy.perceptions {
            let beta = vtt_core::eval::BetaPerception { alpha: perception.alpha, beta: perception.beta };
            for k in 0..BETA_CURVE_POINTS {
                let x = (k as f64 + 0.5) / BETA_CURVE_POINTS as f64;
                writeln!(curves, "{},{},{x},{}", strategy.qs, perception.mue, beta.density(x))
                    .expect("string writes are infallible");
            }
        }
    }
    write_file(&curves_path, curves.as_bytes())?;

    for strategy in &report.strategies {
        println!("{}: information radius {:.4}", strategy.qs, strategy.information_radius);
    }
    println!("update cap N_u = {} -> {}", report.n_u, report_path.display());
    Ok(())
}

/// `export-tree`: unroll one configured strategy into a DOT file.
pub fn cmd_export_tree(config: &RunConfig, qs_name: &str, depth: usize, force: bool) -> Result<(), CliError> {
    config.validate_strategy_paths()?;
    ensure_output_dir(&config.output_dir)?;
    let dot_path = config.output_dir.join(format!("tree_{qs_name}.dot"));
    refuse_existing(std::slice::from_ref(&dot_path), force)?;

    let data = prepare_data(config)?;
    let strategies = build_strategies(config, &data)?;
    let Some(strategy) = strategies.by_name(qs_name) else {
        let known: Vec<String> = strategies.all().iter().map(|s| s.name().to_string()).collect();
        return Err(CliError::Config(format!(
            "strategy '{qs_name}' is not configured; available: {}",
            known.join(", ")
        )));
    };
    let params = UnrollParams {
        depth,
        rollouts: config.evaluation.unroll_rollouts,
        seed: rng::derive(config.seed, "unroll"),
    };
    let tree = unroll_strategy(strategy, config.mode, &params)?;
    let graph_name = qs_name.replace('-', "_");
    write_file(&dot_path, tree.to_dot(&graph_name).as_bytes())?;
    println!("wrote {} ({} nodes)", dot_path.display(), tree.nodes().len());
    Ok(())
}
