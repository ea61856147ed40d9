//! Monte Carlo estimate of post-selection bias: prepare an equal
//! superposition, detune one readout pulse, and compare the accepted
//! ⟨Z⟩ with its true value of zero.

use serde::{Deserialize, Serialize};

use crate::analytics::bias::BiasCurve;
use crate::atomic_model::encoding_catalog;
use crate::detection::Outcome;
use crate::error::{Result, SpamError};
use crate::error_model::ErrorModel;
use crate::protocol::engine::{shot_rng, ShotEngine, ShotOptions};
use crate::protocol::{build_sequence, DetectLabel, Preparation, QubitState, Sequence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasPoint {
    pub curve: BiasCurve,
    pub t_over_tpi: f64,
    pub shots: u64,
    pub accepted: u64,
    pub bright: u64,
    pub measured_bias: f64,
    pub closed_form_bias: f64,
    pub mc_std_err: f64,
}

/// The two superposition sequences (rotating from |0⟩ and from |1⟩) with
/// the curve's readout pulses driven for `ratio · t_π`.
pub fn bias_sequences(curve: BiasCurve, ratio: f64, model: &ErrorModel) -> Result<[Sequence; 2]> {
    if !(ratio >= 0.0 && ratio.is_finite()) {
        return Err(SpamError::invalid(format!("pulse duration ratio must be non-negative, got {ratio}")));
    }
    let enc = encoding_catalog(curve.encoding());
    let (a, b) = curve.scanned_transition();
    let mut out = Vec::with_capacity(2);
    for base in QubitState::BOTH {
        let mut s = build_sequence(&enc, Preparation::SuperpositionViaRotation(base))?;
        s.scale_readout_pulses(a, b, ratio, model)?;
        out.push(s);
    }
    Ok(out.try_into().expect("two sequences"))
}

/// Runs `shots` shots, alternating the rotation's starting state. The
/// model is used as given; zero its static error rates to compare with
/// the closed form, which only accounts for the detuned pulse.
pub fn run_bias_point(model: &ErrorModel, curve: BiasCurve, ratio: f64, shots: u64, seed: u64) -> Result<BiasPoint> {
    if shots == 0 {
        return Err(SpamError::invalid("shots must be at least 1"));
    }
    let [s0, s1] = bias_sequences(curve, ratio, model)?;
    let engines = [ShotEngine::new(&s0, model)?, ShotEngine::new(&s1, model)?];
    let opts = ShotOptions::default();
    let (mut accepted, mut bright) = (0u64, 0u64);
    for i in 0..shots {
        let r = engines[(i % 2) as usize].run(&mut shot_rng(seed, i), &opts);
        if !r.flagged {
            accepted += 1;
            bright += (r.outcomes.get(DetectLabel::R3) == Some(Outcome::Bright)) as u64;
        }
    }
    let (z, se) = if accepted == 0 {
        (0.0, 1.0)
    } else {
        let z = (2.0 * bright as f64 - accepted as f64) / accepted as f64;
        (z, ((1.0 - z * z) / accepted as f64).sqrt())
    };
    Ok(BiasPoint {
        curve,
        t_over_tpi: ratio,
        shots,
        accepted,
        bright,
        measured_bias: z,
        closed_form_bias: curve.closed_form_bias(ratio)?,
        mc_std_err: se,
    })
}

/// One point per grid value; point `k` uses its own seed offset.
pub fn bias_scan(model: &ErrorModel, curve: BiasCurve, grid: &[f64], shots: u64, seed: u64) -> Result<Vec<BiasPoint>> {
    grid.iter()
        .enumerate()
        .map(|(k, &r)| run_bias_point(model, curve, r, shots, seed.wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_pulse_count_matches_acceptance_order() {
        let model = ErrorModel::paper_defaults();
        for curve in BiasCurve::ALL {
            let enc = encoding_catalog(curve.encoding());
            let (a, b) = curve.scanned_transition();
            let mut s = build_sequence(&enc, Preparation::SuperpositionViaRotation(curve.affected_state())).unwrap();
            let n = s.scale_readout_pulses(a, b, 0.7, &model).unwrap();
            assert_eq!(n as i32, curve.order().exponent(), "{curve}");
            assert_eq!(model.pulse(a, b).unwrap().order, curve.order(), "{curve}");
        }
    }

    #[test]
    fn calibrated_pulses_are_unbiased() {
        let model = ErrorModel::paper_defaults().without_static_errors();
        let p = run_bias_point(&model, BiasCurve::OpticalOne, 1.0, 20_000, 5).unwrap();
        assert!(p.measured_bias.abs() < 4.0 * p.mc_std_err, "{p:?}");
        assert_eq!(p.closed_form_bias, 0.0);
    }

    #[test]
    fn detuned_pulse_matches_closed_form() {
        let model = ErrorModel::paper_defaults().without_static_errors();
        let p = run_bias_point(&model, BiasCurve::GroundZero, 0.6, 20_000, 6).unwrap();
        assert!((p.measured_bias - p.closed_form_bias).abs() < 4.0 * p.mc_std_err, "{p:?}");
        assert!(p.closed_form_bias < -0.3);
    }
}
