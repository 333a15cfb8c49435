//! Simulator and library for training adaptive questioning strategies and
//! evaluating black-box question-answering responders on a diabetic macular
//! edema grading task.
//!
//! An interrogator (questioning strategy) poses closed-ended
//! concept-in-region questions about a fundus image to a responder, one at a
//! time, until the answers suffice for a diagnosis. The crate provides the
//! episodic environment, assumption-based grading with an exhaustive
//! decidability oracle, synthetic responders with controlled reasoning
//! behavior, baseline and learned strategies, and the evaluation metrics
//! (reward tables, beta-posterior accuracy perception, information radius).
//!
//! Evaluation loops are data-parallel via the `parallel` feature (enabled by
//! default); disabling it yields an equivalent sequential build.

pub mod data;
pub mod domain;
pub mod environment;
pub mod eval;
pub mod exec;
pub mod grading;
pub mod learn;
pub mod responders;
pub mod rng;
pub mod strategies;

mod error;

pub use error::{Error, Result};
