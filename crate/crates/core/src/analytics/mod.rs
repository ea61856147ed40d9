//! Closed-form predictors and estimators that sit next to the simulator.

pub mod bias;
pub mod interval;
pub mod lifetime;
pub mod rejection;
pub mod summary;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpamError};

pub use bias::{bias_closed_form, correct_bias, correct_bias_simplified, BiasCorrection, BiasCurve, BiasModel};
pub use interval::{wilson_interval, RateEstimate};
pub use lifetime::{fit_lifetime, fit_lifetime_fractions, fit_lifetime_samples, LifetimeData, LifetimeFit};
pub use rejection::{predict_rejection, predict_rejection_exact, rejection_events, RejectionOptions};
pub use summary::{spam_summary, ExperimentSummary, SummaryTally};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionBudget {
    /// Error for the fluorescing readout state.
    pub bright_total: f64,
    /// Error for the shelved readout state, including decay.
    pub dark_total: f64,
    pub average: f64,
}

/// Expected readout error: a bright state misread dark, and a dark state
/// either misread or decaying (with probability `decay`) into a state that
/// then reads bright.
pub fn detection_error_budget(bright_err: f64, dark_err: f64, decay: f64) -> Result<DetectionBudget> {
    for (what, p) in [("bright error", bright_err), ("dark error", dark_err), ("decay probability", decay)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(SpamError::invalid(format!("{what} must lie in [0, 1], got {p}")));
        }
    }
    let dark_total = dark_err + decay * (1.0 - bright_err);
    Ok(DetectionBudget { bright_total: bright_err, dark_total, average: 0.5 * (bright_err + dark_total) })
}
