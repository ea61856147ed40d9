//! Shot-level simulation of heralded state preparation and measurement
//! (SPAM) for trapped-ion qubits stored in a ground (`A`) and a metastable
//! (`B`) manifold, together with the closed-form models used to check it.
//!
//! ```
//! use spamsim_core::{build_sequence, encoding_catalog, predict_rejection, EncodingName, ErrorModel, Preparation};
//!
//! let seq = build_sequence(&encoding_catalog(EncodingName::Metastable), Preparation::Zero).unwrap();
//! let p = predict_rejection(&seq, &ErrorModel::paper_defaults(), Default::default()).unwrap();
//! assert!((p - 0.0356).abs() < 1e-12);
//! ```

pub mod analytics;
pub mod atomic_model;
pub mod detection;
pub mod error;
pub mod error_model;
pub mod protocol;

pub use analytics::{
    bias_closed_form, correct_bias, detection_error_budget, fit_lifetime, predict_rejection, predict_rejection_exact,
    spam_summary, wilson_interval, BiasCurve, ExperimentSummary, RateEstimate, RejectionOptions,
};
pub use atomic_model::{encoding_catalog, EncodingName, Manifold, QubitEncoding, StateLabel};
pub use detection::{calibrate_threshold, CountHistogram, DetectionModel, FitMethod, Outcome};
pub use error::{Result, SpamError};
pub use error_model::{DecayChannel, ErrorModel, PulseOrder, TransferPulse};
pub use protocol::{
    build_sequence, evaluate_flags, run_experiment, run_shot, ExperimentConfig, FlagPolicy, FlagReason, Preparation,
    QubitState, RunMode, Sequence, ShotRecord,
};
