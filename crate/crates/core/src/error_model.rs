//! Stochastic channel parameters and the closed-form channel probabilities.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::atomic_model::{
    transition_allowed, StateLabel, A_F1_M0, A_F2_M0, B_F1_MM1, B_F2_MM1, B_F2_MP1,
};
use crate::detection::DetectionModel;
use crate::error::{Result, SpamError};

/// How the post-selection acceptance of a pulse scales with its duration
/// when the same transition is driven once or twice in the readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseOrder {
    Single,
    Double,
}

impl PulseOrder {
    pub fn exponent(&self) -> i32 {
        match self {
            PulseOrder::Single => 1,
            PulseOrder::Double => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferPulse {
    pub from: StateLabel,
    pub to: StateLabel,
    pub error_rate: f64,
    /// Calibrated π-time in seconds.
    pub t_pi: f64,
    pub order: PulseOrder,
}

impl TransferPulse {
    pub fn validate(&self) -> Result<()> {
        check_probability("pulse error_rate", self.error_rate)?;
        if !(self.t_pi.is_finite() && self.t_pi > 0.0) {
            return Err(SpamError::Config(format!("pulse t_pi must be positive, got {}", self.t_pi)));
        }
        if !transition_allowed(self.from, self.to)? {
            return Err(SpamError::Config(format!(
                "pulse {} -> {} does not connect the two manifolds",
                self.from, self.to
            )));
        }
        Ok(())
    }

    /// The same transition driven in the opposite direction.
    pub fn reversed(&self) -> Self {
        Self { from: self.to, to: self.from, ..self.clone() }
    }

    pub fn connects(&self, a: StateLabel, b: StateLabel) -> bool {
        (self.from == a && self.to == b) || (self.from == b && self.to == a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpChannel {
    pub target: StateLabel,
    pub error_rate: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayChannel {
    /// Lifetime of the metastable manifold in seconds; `INFINITY` disables decay.
    pub lifetime: f64,
}

impl DecayChannel {
    pub fn new(lifetime: f64) -> Result<Self> {
        if !(lifetime > 0.0) {
            return Err(SpamError::Config(format!("lifetime must be positive, got {lifetime}")));
        }
        Ok(Self { lifetime })
    }

    pub fn disabled() -> Self {
        Self { lifetime: f64::INFINITY }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDurations {
    pub cooling: f64,
    pub deshelve: f64,
}

impl Default for StepDurations {
    fn default() -> Self {
        Self { cooling: 1e-3, deshelve: 0.0 }
    }
}

/// Every channel parameter the shot engine needs. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ErrorModelDoc", into = "ErrorModelDoc")]
pub struct ErrorModel {
    pub pump: PumpChannel,
    pub pulses: BTreeMap<(StateLabel, StateLabel), TransferPulse>,
    pub decay: DecayChannel,
    pub detection: DetectionModel,
    pub durations: StepDurations,
    pub loss_probability_per_shot: f64,
}

/// Measured error rates for the five transitions the sequences use, as
/// `(A-side state, B-side state, error rate, readout order)`.
const MEASURED_TRANSITIONS: [(StateLabel, StateLabel, f64, PulseOrder); 5] = [
    (A_F2_M0, B_F2_MM1, 0.0138, PulseOrder::Single),
    (A_F2_M0, B_F1_MM1, 0.0473, PulseOrder::Double),
    (A_F2_M0, B_F2_MP1, 0.0310, PulseOrder::Double),
    (A_F1_M0, B_F2_MM1, 0.0111, PulseOrder::Single),
    (A_F1_M0, B_F1_MM1, 0.0098, PulseOrder::Single),
];

pub const DEFAULT_T_PI: f64 = 25e-6;
pub const DEFAULT_PUMP_DURATION: f64 = 20e-6;
pub const DEFAULT_LIFETIME: f64 = 27.2;

impl ErrorModel {
    /// The measured Ba-137 parameter set: pumping and pulse error rates,
    /// 27.2 s metastable lifetime, and detection counts tuned to the
    /// measured optical detection errors.
    pub fn paper_defaults() -> Self {
        let mut pulses = BTreeMap::new();
        for (a, b, rate, order) in MEASURED_TRANSITIONS {
            let p = TransferPulse { from: a, to: b, error_rate: rate, t_pi: DEFAULT_T_PI, order };
            pulses.insert((b, a), p.reversed());
            pulses.insert((a, b), p);
        }
        Self {
            pump: PumpChannel { target: A_F2_M0, error_rate: 0.008, duration: DEFAULT_PUMP_DURATION },
            pulses,
            decay: DecayChannel { lifetime: DEFAULT_LIFETIME },
            detection: DetectionModel::paper_defaults(),
            durations: StepDurations::default(),
            loss_probability_per_shot: 0.0,
        }
    }

    /// All channels off: perfect pumping and pulses, no decay, no loss.
    /// Detection statistics are kept.
    pub fn ideal() -> Self {
        let mut m = Self::paper_defaults().without_static_errors();
        m.decay = DecayChannel::disabled();
        m
    }

    /// Zeroes the pumping, pulse and loss error rates. Decay and
    /// detection are untouched.
    pub fn without_static_errors(mut self) -> Self {
        self.pump.error_rate = 0.0;
        for p in self.pulses.values_mut() {
            p.error_rate = 0.0;
        }
        self.loss_probability_per_shot = 0.0;
        self
    }

    pub fn pulse(&self, from: StateLabel, to: StateLabel) -> Result<&TransferPulse> {
        self.pulses.get(&(from, to)).ok_or(SpamError::MissingPulse { from, to })
    }

    /// Sets the error rate of the transition in both directions.
    pub fn set_transition_error(&mut self, a: StateLabel, b: StateLabel, rate: f64) -> Result<()> {
        check_probability("pulse error_rate", rate)?;
        let mut found = false;
        for key in [(a, b), (b, a)] {
            if let Some(p) = self.pulses.get_mut(&key) {
                p.error_rate = rate;
                found = true;
            }
        }
        if found {
            Ok(())
        } else {
            Err(SpamError::MissingPulse { from: a, to: b })
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pump.target.manifold() != Some(crate::atomic_model::Manifold::A) || self.pump.target.is_sentinel() {
            return Err(SpamError::Config(format!("pump target {} must be a named A state", self.pump.target)));
        }
        check_probability("pump error_rate", self.pump.error_rate)?;
        check_duration("pump duration", self.pump.duration)?;
        for ((from, to), p) in &self.pulses {
            if (p.from, p.to) != (*from, *to) {
                return Err(SpamError::Config(format!("pulse keyed {from} -> {to} describes {} -> {}", p.from, p.to)));
            }
            p.validate()?;
        }
        if !(self.decay.lifetime > 0.0) {
            return Err(SpamError::Config("lifetime must be positive".into()));
        }
        self.detection.validate()?;
        check_duration("cooling duration", self.durations.cooling)?;
        check_duration("deshelve duration", self.durations.deshelve)?;
        check_probability("loss_probability_per_shot", self.loss_probability_per_shot)?;
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_probability(what: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(SpamError::Config(format!("{what} must lie in [0, 1], got {p}")))
    }
}

fn check_duration(what: &str, t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(SpamError::Config(format!("{what} must be a non-negative number of seconds, got {t}")))
    }
}

/// On-disk layout of [`ErrorModel`]. Pulses are a list because JSON
/// object keys cannot be pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ErrorModelDoc {
    pump: PumpChannel,
    pulses: Vec<TransferPulse>,
    decay: DecayDoc,
    detection: DetectionModel,
    #[serde(default)]
    durations: StepDurations,
    #[serde(default)]
    loss_probability_per_shot: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecayDoc {
    /// `null` disables decay.
    lifetime: Option<f64>,
}

impl TryFrom<ErrorModelDoc> for ErrorModel {
    type Error = SpamError;

    fn try_from(doc: ErrorModelDoc) -> Result<Self> {
        let mut pulses = BTreeMap::new();
        for p in doc.pulses {
            if pulses.insert((p.from, p.to), p.clone()).is_some() {
                return Err(SpamError::Config(format!("duplicate pulse {} -> {}", p.from, p.to)));
            }
        }
        let decay = match doc.decay.lifetime {
            Some(t) => DecayChannel::new(t)?,
            None => DecayChannel::disabled(),
        };
        let model = ErrorModel {
            pump: doc.pump,
            pulses,
            decay,
            detection: doc.detection,
            durations: doc.durations,
            loss_probability_per_shot: doc.loss_probability_per_shot,
        };
        model.validate()?;
        Ok(model)
    }
}

impl From<ErrorModel> for ErrorModelDoc {
    fn from(m: ErrorModel) -> Self {
        ErrorModelDoc {
            pump: m.pump,
            pulses: m.pulses.into_values().collect(),
            decay: DecayDoc { lifetime: m.decay.lifetime.is_finite().then_some(m.decay.lifetime) },
            detection: m.detection,
            durations: m.durations,
            loss_probability_per_shot: m.loss_probability_per_shot,
        }
    }
}

/// Probability that a metastable state has decayed after `t` seconds.
pub fn decay_probability(t: f64, lifetime: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(SpamError::invalid(format!("elapsed time must be non-negative, got {t}")));
    }
    if !(lifetime > 0.0) {
        return Err(SpamError::invalid(format!("lifetime must be positive, got {lifetime}")));
    }
    Ok(-(-t / lifetime).exp_m1())
}

/// Duration factor of a pulse driven for `t` seconds: `sin²(πt/2t_π)` for
/// a single pass, squared again for [`PulseOrder::Double`]. Equal to one
/// at `t = t_π`; the static error rate is not included.
pub fn pulse_success_probability(t: f64, pulse: &TransferPulse) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(SpamError::invalid(format!("pulse duration must be non-negative, got {t}")));
    }
    let single = (FRAC_PI_2 * t / pulse.t_pi).sin().powi(2);
    Ok(single.powi(pulse.order.exponent()))
}

/// Probability that one application of `pulse` lasting `t` seconds moves
/// population out of its source state.
pub fn transfer_probability(t: f64, pulse: &TransferPulse) -> f64 {
    let single = (FRAC_PI_2 * t / pulse.t_pi).sin().powi(2);
    (1.0 - pulse.error_rate) * single
}

/// Drives `pulse` on `state`. Only the pulse's source state responds; a
/// failed transfer leaves the population where it was.
pub fn apply_transfer<R: Rng + ?Sized>(state: StateLabel, pulse: &TransferPulse, t: f64, rng: &mut R) -> StateLabel {
    if state != pulse.from {
        return state;
    }
    let p = transfer_probability(t, pulse);
    if p >= 1.0 || rng.random::<f64>() < p {
        pulse.to
    } else {
        state
    }
}

/// Samples a decay instant in `[0, duration)` for a metastable state, or
/// `None` if it survives the window. One uniform draw per call.
pub fn sample_decay_time<R: Rng + ?Sized>(duration: f64, decay: &DecayChannel, rng: &mut R) -> Option<f64> {
    if !decay.lifetime.is_finite() || duration <= 0.0 {
        return None;
    }
    let u: f64 = rng.random();
    // Inverse CDF of the exponential; t < duration happens with
    // probability 1 - exp(-duration/τ) and is then correctly truncated.
    let t = -decay.lifetime * (-u).ln_1p();
    (t < duration).then_some(t)
}

/// Lets a metastable state decay over `duration`. Decayed population
/// lands in a fluorescing ground state (`WrongGround`); the instant of
/// the decay is returned alongside.
pub fn apply_decay<R: Rng + ?Sized>(
    state: StateLabel,
    duration: f64,
    decay: &DecayChannel,
    rng: &mut R,
) -> (StateLabel, Option<f64>) {
    if !state.in_metastable() {
        return (state, None);
    }
    match sample_decay_time(duration, decay, rng) {
        Some(t) => (StateLabel::WrongGround, Some(t)),
        None => (state, None),
    }
}
