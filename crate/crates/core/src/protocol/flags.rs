use serde::{Deserialize, Serialize};

use crate::detection::Outcome;
use crate::error::{Result, SpamError};
use crate::protocol::{DetectLabel, QubitState};

/// Outcomes of R0…R5 for one shot; `None` where a detection did not run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DetectionOutcomes(pub [Option<Outcome>; 6]);

impl DetectionOutcomes {
    pub fn get(&self, label: DetectLabel) -> Option<Outcome> {
        self.0[label.index()]
    }

    pub fn set(&mut self, label: DetectLabel, outcome: Outcome) {
        self.0[label.index()] = Some(outcome);
    }

    pub fn from_bright(bright: [bool; 6]) -> Self {
        Self(bright.map(|b| Some(if b { Outcome::Bright } else { Outcome::Dark })))
    }

    fn require(&self, label: DetectLabel) -> Result<bool> {
        self.get(label).map(Outcome::is_bright).ok_or(SpamError::MissingOutcome(label.name()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FlagReason {
    None,
    R0Dark,
    R1Bright,
    R2Bright,
    R3R4Dark,
    /// Only raised under [`FlagPolicy::Strict`].
    R3BrightR4Dark,
    R5Dark,
}

impl FlagReason {
    pub const ALL: [FlagReason; 7] = [
        FlagReason::None,
        FlagReason::R0Dark,
        FlagReason::R1Bright,
        FlagReason::R2Bright,
        FlagReason::R3R4Dark,
        FlagReason::R3BrightR4Dark,
        FlagReason::R5Dark,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FlagReason::None => "None",
            FlagReason::R0Dark => "R0Dark",
            FlagReason::R1Bright => "R1Bright",
            FlagReason::R2Bright => "R2Bright",
            FlagReason::R3R4Dark => "R3R4Dark",
            FlagReason::R3BrightR4Dark => "R3BrightR4Dark",
            FlagReason::R5Dark => "R5Dark",
        }
    }
}

/// `Standard` accepts a bright R3 regardless of R4. `Strict` additionally
/// rejects bright-R3/dark-R4, where the ion was already fluorescing before
/// the second readout transfer could have brought it back.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlagPolicy {
    #[default]
    Standard,
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagVerdict {
    pub flagged: bool,
    pub reason: FlagReason,
    /// R3 bright reads |0⟩; absent for flagged shots.
    pub inferred: Option<QubitState>,
}

/// The cumulative post-selection stages, in the order they are applied.
pub const STAGE_NAMES: [&str; 6] = ["none", "R0", "R1", "R2", "R3R4", "R5"];

/// Which of the five flag conditions (R0, R1, R2, R3/R4, R5) fire.
pub fn flag_conditions(outcomes: &DetectionOutcomes, policy: FlagPolicy) -> Result<[bool; 5]> {
    use DetectLabel::*;
    let b = |l| outcomes.require(l);
    let (r0, r1, r2, r3, r4, r5) = (b(R0)?, b(R1)?, b(R2)?, b(R3)?, b(R4)?, b(R5)?);
    let readout = match policy {
        FlagPolicy::Standard => !r3 && !r4,
        FlagPolicy::Strict => !r4,
    };
    Ok([!r0, r1, r2, readout, !r5])
}

/// Applies the flag rules; the first matching condition is the reason.
pub fn evaluate_flags(outcomes: &DetectionOutcomes, policy: FlagPolicy) -> Result<FlagVerdict> {
    let conds = flag_conditions(outcomes, policy)?;
    let r3 = outcomes.require(DetectLabel::R3)?;
    let reason = match conds.iter().position(|&c| c) {
        None => FlagReason::None,
        Some(0) => FlagReason::R0Dark,
        Some(1) => FlagReason::R1Bright,
        Some(2) => FlagReason::R2Bright,
        Some(3) if r3 => FlagReason::R3BrightR4Dark,
        Some(3) => FlagReason::R3R4Dark,
        Some(_) => FlagReason::R5Dark,
    };
    let flagged = reason != FlagReason::None;
    Ok(FlagVerdict { flagged, reason, inferred: (!flagged).then(|| raw_inference(r3)) })
}

/// Readout of R3 alone, ignoring every flag.
pub fn raw_inference(r3_bright: bool) -> QubitState {
    if r3_bright {
        QubitState::Zero
    } else {
        QubitState::One
    }
}
