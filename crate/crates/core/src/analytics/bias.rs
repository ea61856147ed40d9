//! Post-selection bias of a measured ⟨Z⟩ when the acceptance probability
//! depends on the qubit state, and its inversion.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::atomic_model::{EncodingName, StateLabel, A_F2_M0, B_F1_MM1, B_F2_MM1, B_F2_MP1};
use crate::error::{Result, SpamError};
use crate::error_model::PulseOrder;
use crate::protocol::QubitState;

fn check_probability(what: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(SpamError::invalid(format!("{what} must lie in [0, 1], got {p}")))
    }
}

/// Bias `⟨Z_meas⟩ − ⟨Z⟩` of a post-selected estimate when
/// `γ = P(a|0)/P(a|1)`.
pub fn bias_closed_form(gamma: f64, p0: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(SpamError::invalid(format!("acceptance ratio must be positive, got {gamma}")));
    }
    check_probability("P(0)", p0)?;
    let p1 = 1.0 - p0;
    let denom = gamma * p0 + p1;
    if denom == 0.0 {
        return Err(SpamError::Singular("γP(0) + P(1) vanishes".into()));
    }
    Ok((gamma * p0 - p1) / denom - (p0 - p1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasModel {
    pub gamma: f64,
    pub p0: f64,
}

impl BiasModel {
    pub fn new(gamma: f64, p0: f64) -> Result<Self> {
        bias_closed_form(gamma, p0)?;
        Ok(Self { gamma, p0 })
    }

    /// The post-selected expectation value.
    pub fn measured_z(&self) -> f64 {
        let p1 = 1.0 - self.p0;
        (self.gamma * self.p0 - p1) / (self.gamma * self.p0 + p1)
    }

    pub fn bias(&self) -> f64 {
        self.measured_z() - (2.0 * self.p0 - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasCorrection {
    pub p0: f64,
    pub p1: f64,
    pub z: f64,
}

/// Recovers `P(0)`, `P(1)` and `⟨Z⟩` from the joint bright-and-accepted
/// probability and its values for the two calibration states.
pub fn correct_bias(p_ba: f64, p_ba_given_0: f64, p_ba_given_1: f64) -> Result<BiasCorrection> {
    for (what, p) in [("P(b,a)", p_ba), ("P(b,a|0)", p_ba_given_0), ("P(b,a|1)", p_ba_given_1)] {
        check_probability(what, p)?;
    }
    let denom = p_ba_given_0 - p_ba_given_1;
    if denom == 0.0 {
        return Err(SpamError::Singular("P(b,a|0) equals P(b,a|1)".into()));
    }
    let p0 = (p_ba - p_ba_given_1) / denom;
    let z = (2.0 * p_ba - p_ba_given_1 - p_ba_given_0) / denom;
    Ok(BiasCorrection { p0, p1: 1.0 - p0, z })
}

/// The simplified inversion for negligible decay, where a bright accepted
/// shot always came from |0⟩ and a dark accepted one from |1⟩:
/// `P(i) = P(outcome_i, a) / P(a|i)`. The two need not sum to one.
pub fn correct_bias_simplified(p_ba: f64, p_da: f64, p_a_given_0: f64, p_a_given_1: f64) -> Result<BiasCorrection> {
    for (what, p) in [("P(b,a)", p_ba), ("P(d,a)", p_da), ("P(a|0)", p_a_given_0), ("P(a|1)", p_a_given_1)] {
        check_probability(what, p)?;
    }
    if p_a_given_0 == 0.0 || p_a_given_1 == 0.0 {
        return Err(SpamError::Singular("a state is never accepted".into()));
    }
    let (p0, p1) = (p_ba / p_a_given_0, p_da / p_a_given_1);
    Ok(BiasCorrection { p0, p1, z: p0 - p1 })
}

/// Forward model matching [`correct_bias`]: the bright-and-accepted
/// probability for a population `p0`.
pub fn joint_bright_accepted(p0: f64, p_ba_given_0: f64, p_ba_given_1: f64) -> f64 {
    p0 * p_ba_given_0 + (1.0 - p0) * p_ba_given_1
}

/// The four scanned curves: which encoding, which readout transition is
/// detuned from its π-time, and whose acceptance that costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasCurve {
    OpticalZero,
    OpticalOne,
    MetastableZero,
    GroundZero,
}

impl BiasCurve {
    pub const ALL: [BiasCurve; 4] = [BiasCurve::OpticalZero, BiasCurve::OpticalOne, BiasCurve::MetastableZero, BiasCurve::GroundZero];

    pub fn name(self) -> &'static str {
        match self {
            BiasCurve::OpticalZero => "optical-zero",
            BiasCurve::OpticalOne => "optical-one",
            BiasCurve::MetastableZero => "metastable-zero",
            BiasCurve::GroundZero => "ground-zero",
        }
    }

    pub fn encoding(self) -> EncodingName {
        match self {
            BiasCurve::OpticalZero | BiasCurve::OpticalOne => EncodingName::Optical,
            BiasCurve::MetastableZero => EncodingName::Metastable,
            BiasCurve::GroundZero => EncodingName::Ground,
        }
    }

    pub fn scanned_transition(self) -> (StateLabel, StateLabel) {
        match self {
            BiasCurve::OpticalZero | BiasCurve::MetastableZero => (A_F2_M0, B_F2_MM1),
            BiasCurve::OpticalOne => (A_F2_M0, B_F1_MM1),
            BiasCurve::GroundZero => (A_F2_M0, B_F2_MP1),
        }
    }

    /// The state whose acceptance drops when the pulse is mistimed.
    pub fn affected_state(self) -> QubitState {
        match self {
            BiasCurve::OpticalOne => QubitState::One,
            _ => QubitState::Zero,
        }
    }

    /// Whether the affected state passes through the scanned pulse once or
    /// twice after the rotation.
    pub fn order(self) -> PulseOrder {
        match self {
            BiasCurve::OpticalZero | BiasCurve::MetastableZero => PulseOrder::Single,
            BiasCurve::OpticalOne | BiasCurve::GroundZero => PulseOrder::Double,
        }
    }

    /// `(P(a|0), P(a|1))` at pulse duration `ratio · t_π`.
    pub fn acceptance(self, ratio: f64) -> (f64, f64) {
        let p = (FRAC_PI_2 * ratio).sin().powi(2).powi(self.order().exponent());
        match self.affected_state() {
            QubitState::Zero => (p, 1.0),
            QubitState::One => (1.0, p),
        }
    }

    pub fn gamma(self, ratio: f64) -> f64 {
        let (a0, a1) = self.acceptance(ratio);
        a0 / a1
    }

    /// Closed-form bias for an equal superposition.
    pub fn closed_form_bias(self, ratio: f64) -> Result<f64> {
        bias_closed_form(self.gamma(ratio), 0.5)
    }
}

impl fmt::Display for BiasCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BiasCurve {
    type Err = SpamError;

    fn from_str(s: &str) -> Result<Self> {
        BiasCurve::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| SpamError::invalid(format!("unknown bias curve `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        for p0 in [0.0, 0.2, 0.5, 1.0] {
            assert!(bias_closed_form(1.0, p0).unwrap().abs() < 1e-15);
        }
        assert!((bias_closed_form(2.0, 0.5).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(bias_closed_form(3.0, 1.0).unwrap(), 0.0);
        assert!(bias_closed_form(0.0, 0.5).is_err());
        assert!(bias_closed_form(1.0, 1.5).is_err());
    }

    #[test]
    fn relabeling_flips_the_sign() {
        for (g, p0) in [(2.0, 0.5), (0.3, 0.8), (5.0, 0.1)] {
            let a = bias_closed_form(g, p0).unwrap();
            let b = bias_closed_form(1.0 / g, 1.0 - p0).unwrap();
            assert!((a + b).abs() < 1e-14);
        }
    }

    #[test]
    fn model_agrees_with_closed_form() {
        let m = BiasModel::new(1.7, 0.35).unwrap();
        assert!((m.bias() - bias_closed_form(1.7, 0.35).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn correction_examples() {
        assert!((correct_bias(0.3, 1.0, 0.0).unwrap().p0 - 0.3).abs() < 1e-15);
        let c = correct_bias(0.5, 0.9, 0.1).unwrap();
        assert!((c.p0 - 0.5).abs() < 1e-15 && c.z.abs() < 1e-15);
        assert!(matches!(correct_bias(0.5, 0.4, 0.4), Err(SpamError::Singular(_))));
    }

    #[test]
    fn simplified_form_matches_full_form_without_decay() {
        // |0⟩ always bright when accepted, |1⟩ always dark
        let (p0, a0, a1) = (0.3, 0.8, 0.95);
        let p_ba = p0 * a0;
        let p_da = (1.0 - p0) * a1;
        let s = correct_bias_simplified(p_ba, p_da, a0, a1).unwrap();
        assert!((s.p0 - p0).abs() < 1e-15 && (s.p1 - 0.7).abs() < 1e-15);
    }

    #[test]
    fn curves_are_unbiased_at_the_pi_time() {
        for c in BiasCurve::ALL {
            assert_eq!(c.acceptance(1.0), (1.0, 1.0));
            assert!(c.closed_form_bias(1.0).unwrap().abs() < 1e-15);
            assert_eq!(c.name().parse::<BiasCurve>().unwrap(), c);
        }
        // an undershot |1⟩ pulse favours |0⟩
        assert!(BiasCurve::OpticalOne.closed_form_bias(0.7).unwrap() > 0.0);
        assert!(BiasCurve::GroundZero.closed_form_bias(0.7).unwrap() < BiasCurve::MetastableZero.closed_form_bias(0.7).unwrap());
    }
}
