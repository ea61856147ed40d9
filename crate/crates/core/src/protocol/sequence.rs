use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::atomic_model::{
    encoding_catalog, EncodingName, QubitEncoding, StateLabel, A_F1_M0, A_F2_M0, B_F1_MM1, B_F2_MM1, B_F2_MP1,
};
use crate::error::{Result, SpamError};
use crate::error_model::ErrorModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QubitState {
    Zero,
    One,
}

impl QubitState {
    pub const BOTH: [QubitState; 2] = [QubitState::Zero, QubitState::One];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_char(self) -> char {
        match self {
            QubitState::Zero => '0',
            QubitState::One => '1',
        }
    }
}

impl fmt::Display for QubitState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QubitState::Zero => "zero",
            QubitState::One => "one",
        })
    }
}

impl FromStr for QubitState {
    type Err = SpamError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "0" | "zero" => Ok(QubitState::Zero),
            "1" | "one" => Ok(QubitState::One),
            _ => Err(SpamError::invalid(format!("unknown qubit state `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preparation {
    Zero,
    One,
    /// Prepare the given basis state, then rotate it by π/2.
    SuperpositionViaRotation(QubitState),
}

impl Preparation {
    pub fn basis(q: QubitState) -> Self {
        match q {
            QubitState::Zero => Preparation::Zero,
            QubitState::One => Preparation::One,
        }
    }

    /// The basis state the preparation pulses actually target.
    pub fn base_state(&self) -> QubitState {
        match self {
            Preparation::Zero => QubitState::Zero,
            Preparation::One => QubitState::One,
            Preparation::SuperpositionViaRotation(q) => *q,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DetectLabel {
    R0,
    R1,
    R2,
    R3,
    R4,
    R5,
}

impl DetectLabel {
    pub const ALL: [DetectLabel; 6] =
        [DetectLabel::R0, DetectLabel::R1, DetectLabel::R2, DetectLabel::R3, DetectLabel::R4, DetectLabel::R5];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        ["R0", "R1", "R2", "R3", "R4", "R5"][self.index()]
    }
}

impl fmt::Display for DetectLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SequenceStep {
    /// Doppler cooling; the ion is only waiting, for the model's cooling time.
    Cool,
    Detect(DetectLabel),
    Pump,
    /// `duration: None` drives the pulse for its calibrated π-time.
    Transfer { from: StateLabel, to: StateLabel, duration: Option<f64> },
    Deshelve,
    Rotate { angle: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub encoding: QubitEncoding,
    pub prepare: Preparation,
    steps: Vec<SequenceStep>,
    prep_range: Range<usize>,
}

impl Sequence {
    /// Checks the structural invariants: R0…R5 each once and in order, a
    /// transfer into the metastable manifold right before R1, and a
    /// B → A transfer before each of R3 and R4.
    pub fn new(encoding: QubitEncoding, prepare: Preparation, steps: Vec<SequenceStep>) -> Result<Self> {
        let bad = |m: &str| Err(SpamError::InvalidSequence(m.to_string()));
        let detects: Vec<(usize, DetectLabel)> = steps
            .iter()
            .enumerate()
            .filter_map(|(i, s)| match s {
                SequenceStep::Detect(l) => Some((i, *l)),
                _ => None,
            })
            .collect();
        if detects.iter().map(|d| d.1).ne(DetectLabel::ALL) {
            return bad("detections must be exactly R0, R1, R2, R3, R4, R5 in that order");
        }
        let at = |l: DetectLabel| detects[l.index()].0;

        let is_transfer_into = |s: &SequenceStep, m: crate::atomic_model::Manifold| {
            matches!(s, SequenceStep::Transfer { to, .. } if to.manifold() == Some(m))
        };
        use crate::atomic_model::Manifold::{A, B};
        let Some(first_into_b) = steps.iter().position(|s| is_transfer_into(s, B)) else {
            return bad("no transfer into the metastable manifold");
        };
        if first_into_b > at(DetectLabel::R1) || steps[first_into_b + 1..at(DetectLabel::R1)].iter().any(|s| !matches!(s, SequenceStep::Cool)) {
            return bad("R1 must directly follow the first transfer into the metastable manifold");
        }
        let readout = |lo: usize, hi: usize| steps[lo..hi].iter().any(|s| is_transfer_into(s, A));
        if !readout(at(DetectLabel::R2), at(DetectLabel::R3)) || !readout(at(DetectLabel::R3), at(DetectLabel::R4)) {
            return bad("R3 and R4 must each follow a transfer back into the ground manifold");
        }
        for s in &steps {
            if let SequenceStep::Transfer { from, to, duration } = s {
                if !crate::atomic_model::transition_allowed(*from, *to)? {
                    return bad("transfer does not connect the two manifolds");
                }
                if duration.is_some_and(|d| !(d >= 0.0)) {
                    return bad("transfer duration must be non-negative");
                }
            }
        }
        let Some(pump) = steps[..at(DetectLabel::R1)].iter().position(|s| matches!(s, SequenceStep::Pump)) else {
            return bad("no optical pumping before R1");
        };
        let start = steps[..pump].iter().rposition(|s| matches!(s, SequenceStep::Cool)).unwrap_or(pump);
        if start <= at(DetectLabel::R0) && pump <= at(DetectLabel::R0) {
            return bad("optical pumping must come after R0");
        }
        let prep_range = start.max(at(DetectLabel::R0) + 1)..at(DetectLabel::R1) + 1;
        Ok(Self { encoding, prepare, steps, prep_range })
    }

    pub fn steps(&self) -> &[SequenceStep] {
        &self.steps
    }

    /// Steps repeated by repeat-until-success: from the cooling before
    /// optical pumping up to and including R1.
    pub fn prep_range(&self) -> Range<usize> {
        self.prep_range.clone()
    }

    pub fn rotate_index(&self) -> Option<usize> {
        self.steps.iter().position(|s| matches!(s, SequenceStep::Rotate { .. }))
    }

    /// Checks that every pulse the sequence drives exists in `model`.
    pub fn check_against(&self, model: &ErrorModel) -> Result<()> {
        for s in &self.steps {
            if let SequenceStep::Transfer { from, to, .. } = s {
                model.pulse(*from, *to)?;
            }
        }
        Ok(())
    }

    /// Drives every post-rotation pulse on the `a ↔ b` transition for
    /// `ratio` of its π-time. Returns how many steps changed.
    pub fn scale_readout_pulses(&mut self, a: StateLabel, b: StateLabel, ratio: f64, model: &ErrorModel) -> Result<usize> {
        let start = self.rotate_index().map_or(0, |i| i + 1);
        let mut changed = 0;
        for s in &mut self.steps[start..] {
            if let SequenceStep::Transfer { from, to, duration } = s {
                if (*from == a && *to == b) || (*from == b && *to == a) {
                    *duration = Some(ratio * model.pulse(*from, *to)?.t_pi);
                    changed += 1;
                }
            }
        }
        Ok(changed)
    }

    /// Detection and transfer steps only, i.e. the numbered protocol steps
    /// without the surrounding cooling and deshelving.
    pub fn protocol_steps(&self) -> impl Iterator<Item = &SequenceStep> {
        self.steps.iter().filter(|s| {
            matches!(s, SequenceStep::Detect(_) | SequenceStep::Pump | SequenceStep::Transfer { .. })
        })
    }
}

fn transfer(from: StateLabel, to: StateLabel) -> SequenceStep {
    SequenceStep::Transfer { from, to, duration: None }
}

/// The full shot for one encoding: cooling and R0, cooling again, the
/// preparation and readout transfers with R1–R4, then deshelving and R5.
pub fn build_sequence(encoding: &QubitEncoding, prepare: Preparation) -> Result<Sequence> {
    build_sequence_with_angle(encoding, prepare, std::f64::consts::FRAC_PI_2)
}

pub fn build_sequence_with_angle(encoding: &QubitEncoding, prepare: Preparation, angle: f64) -> Result<Sequence> {
    if *encoding != encoding_catalog(encoding.name) {
        return Err(SpamError::InvalidSequence(format!("{} is not a catalogued encoding", encoding.name)));
    }
    use DetectLabel::*;
    use SequenceStep::{Cool, Deshelve, Detect, Pump};
    let base = prepare.base_state();
    let rotate = matches!(prepare, Preparation::SuperpositionViaRotation(_));

    let mut steps = vec![Cool, Detect(R0), Cool, Pump];
    match encoding.name {
        EncodingName::Optical => {
            let shelf = if base == QubitState::Zero { B_F2_MM1 } else { B_F1_MM1 };
            steps.push(transfer(A_F2_M0, shelf));
            steps.push(Detect(R1));
            if base == QubitState::One {
                steps.push(transfer(B_F1_MM1, A_F2_M0));
            }
            if rotate {
                steps.push(SequenceStep::Rotate { angle });
            }
            // |1⟩ sits in the ground manifold and must be shelved for R2
            if base == QubitState::One || rotate {
                steps.push(transfer(A_F2_M0, B_F1_MM1));
            }
            steps.extend([
                Detect(R2),
                transfer(B_F2_MM1, A_F2_M0),
                Detect(R3),
                transfer(B_F1_MM1, A_F2_M0),
                Detect(R4),
            ]);
        }
        EncodingName::Metastable => {
            steps.push(transfer(A_F2_M0, encoding.state(base)));
            steps.push(Detect(R1));
            if rotate {
                steps.push(SequenceStep::Rotate { angle });
            }
            steps.extend([
                Detect(R2),
                transfer(B_F2_MM1, A_F2_M0),
                Detect(R3),
                transfer(B_F1_MM1, A_F2_M0),
                Detect(R4),
            ]);
        }
        EncodingName::Ground => {
            steps.push(transfer(A_F2_M0, B_F2_MM1));
            steps.push(Detect(R1));
            steps.push(transfer(B_F2_MM1, encoding.state(base)));
            if rotate {
                steps.push(SequenceStep::Rotate { angle });
            }
            steps.extend([
                transfer(A_F2_M0, B_F2_MP1),
                transfer(A_F1_M0, B_F1_MM1),
                Detect(R2),
                transfer(B_F2_MP1, A_F2_M0),
                Detect(R3),
                // Readout of |1⟩ returns to F=1; this is the transition
                // whose error rate reproduces the observed |1⟩ rejections.
                transfer(B_F1_MM1, A_F1_M0),
                Detect(R4),
            ]);
        }
    }
    steps.extend([Deshelve, Detect(R5)]);
    Sequence::new(encoding.clone(), prepare, steps)
}
