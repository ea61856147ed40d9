//! Step sequences, the shot engine, flag evaluation and batch runs.

pub mod bias;
pub mod engine;
pub mod experiment;
pub mod flags;
mod sequence;

pub use engine::{run_shot, shot_rng, ShotEngine, ShotOptions, ShotRecord};
pub use experiment::{run_experiment, run_experiment_with_threads, ExperimentConfig, ExperimentOutput, RunMode};
pub use flags::{evaluate_flags, DetectionOutcomes, FlagPolicy, FlagReason, FlagVerdict};
pub use sequence::{build_sequence, build_sequence_with_angle, DetectLabel, Preparation, QubitState, Sequence, SequenceStep};
