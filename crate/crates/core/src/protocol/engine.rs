use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::atomic_model::{Manifold, StateLabel};
use crate::detection::{detect, CountSampler};
use crate::error::Result;
use crate::error_model::{apply_decay, apply_transfer, DecayChannel, ErrorModel, PumpChannel, TransferPulse};
use crate::protocol::flags::{evaluate_flags, DetectionOutcomes, FlagPolicy, FlagReason};
use crate::protocol::{DetectLabel, Preparation, QubitState, Sequence, SequenceStep};

/// Independent, reproducible random stream for shot `index` of a run.
pub fn shot_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub outcomes: DetectionOutcomes,
    pub counts: [i64; 6],
    pub flagged: bool,
    pub flag_reason: FlagReason,
    /// Present iff the shot was not flagged.
    pub inferred: Option<QubitState>,
    /// Basis state the preparation pulses targeted.
    pub prepared: QubitState,
    /// Born-rule outcome for rotated preparations.
    pub projected: Option<QubitState>,
    /// Passes through the preparation block (1 without repeat-until-success).
    pub attempts: u32,
    /// `(step index, state after the step)`; `None` while in superposition.
    pub trace: Option<Vec<(usize, Option<StateLabel>)>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ShotOptions {
    pub policy: FlagPolicy,
    /// Repeat the preparation block while R1 reads bright, up to this many
    /// attempts in total. `None` runs it once.
    pub max_attempts: Option<u32>,
    pub trace: bool,
}

#[derive(Debug, Clone)]
enum Step {
    Wait(f64),
    Detect(DetectLabel),
    Pump,
    Transfer(TransferPulse, f64),
    Deshelve(f64),
    Rotate(f64),
}

#[derive(Debug, Clone, Copy)]
enum Ion {
    Definite(StateLabel),
    Superposed { zero: StateLabel, one: StateLabel, p_zero: f64 },
}

/// A sequence resolved against an error model, ready to run many shots.
#[derive(Debug, Clone)]
pub struct ShotEngine {
    steps: Vec<Step>,
    prep: std::ops::Range<usize>,
    prepared: QubitState,
    zero: StateLabel,
    one: StateLabel,
    pump: PumpChannel,
    decay: DecayChannel,
    loss: f64,
    sampler: CountSampler,
}

impl ShotEngine {
    pub fn new(sequence: &Sequence, model: &ErrorModel) -> Result<Self> {
        model.validate()?;
        let steps = sequence
            .steps()
            .iter()
            .map(|s| {
                Ok(match s {
                    SequenceStep::Cool => Step::Wait(model.durations.cooling),
                    SequenceStep::Detect(l) => Step::Detect(*l),
                    SequenceStep::Pump => Step::Pump,
                    SequenceStep::Transfer { from, to, duration } => {
                        let p = model.pulse(*from, *to)?.clone();
                        let t = duration.unwrap_or(p.t_pi);
                        Step::Transfer(p, t)
                    }
                    SequenceStep::Deshelve => Step::Deshelve(model.durations.deshelve),
                    SequenceStep::Rotate { angle } => Step::Rotate(*angle),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            steps,
            prep: sequence.prep_range(),
            prepared: sequence.prepare.base_state(),
            zero: sequence.encoding.zero,
            one: sequence.encoding.one,
            pump: model.pump.clone(),
            decay: model.decay,
            loss: model.loss_probability_per_shot,
            sampler: CountSampler::new(&model.detection)?,
        })
    }

    pub fn prepared(&self) -> QubitState {
        self.prepared
    }

    fn pump<R: Rng + ?Sized>(&self, state: StateLabel, rng: &mut R) -> StateLabel {
        if state.manifold() != Some(Manifold::A) {
            return state;
        }
        if self.pump.error_rate > 0.0 && rng.random::<f64>() < self.pump.error_rate {
            StateLabel::WrongGround
        } else {
            self.pump.target
        }
    }

    pub fn run<R: Rng + ?Sized>(&self, rng: &mut R, opts: &ShotOptions) -> ShotRecord {
        let mut ion = if self.loss > 0.0 && rng.random::<f64>() < self.loss {
            Ion::Definite(StateLabel::Lost)
        } else {
            Ion::Definite(StateLabel::WrongGround)
        };
        let mut outcomes = DetectionOutcomes::default();
        let mut counts = [0i64; 6];
        let mut projected = None;
        let mut attempts = 1u32;
        let mut trace = opts.trace.then(Vec::new);
        let max_attempts = opts.max_attempts.unwrap_or(1).max(1);

        let mut i = 0;
        while i < self.steps.len() {
            let step = &self.steps[i];
            if let Step::Rotate(angle) = step {
                // a rotation only acts on a state inside the qubit subspace
                if let Ion::Definite(s) = ion {
                    let half = 0.5 * angle;
                    if s == self.zero {
                        ion = Ion::Superposed { zero: self.zero, one: self.one, p_zero: half.cos().powi(2) };
                    } else if s == self.one {
                        ion = Ion::Superposed { zero: self.zero, one: self.one, p_zero: half.sin().powi(2) };
                    }
                }
                if let Some(t) = trace.as_mut() {
                    t.push((i, match ion {
                        Ion::Definite(s) => Some(s),
                        Ion::Superposed { .. } => None,
                    }));
                }
                i += 1;
                continue;
            }
            let mut state = match ion {
                Ion::Superposed { zero, one, p_zero } => {
                    let q = if rng.random::<f64>() < p_zero { QubitState::Zero } else { QubitState::One };
                    projected = Some(q);
                    if q == QubitState::Zero {
                        zero
                    } else {
                        one
                    }
                }
                Ion::Definite(s) => s,
            };
            match step {
                Step::Wait(t) => state = apply_decay(state, *t, &self.decay, rng).0,
                Step::Pump => {
                    state = apply_decay(state, self.pump.duration, &self.decay, rng).0;
                    state = self.pump(state, rng);
                }
                Step::Transfer(p, t) => {
                    state = apply_decay(state, *t, &self.decay, rng).0;
                    state = apply_transfer(state, p, *t, rng);
                }
                Step::Deshelve(t) => {
                    state = apply_decay(state, *t, &self.decay, rng).0;
                    if state.in_metastable() {
                        state = StateLabel::WrongGround;
                    }
                }
                Step::Detect(l) => {
                    let r = detect(state, &self.sampler, &self.decay, rng);
                    outcomes.set(*l, r.outcome);
                    counts[l.index()] = r.counts;
                    state = r.post_state;
                }
                Step::Rotate(_) => unreachable!(),
            }
            ion = Ion::Definite(state);
            if let Some(t) = trace.as_mut() {
                t.push((i, Some(state)));
            }
            let retry = matches!(step, Step::Detect(DetectLabel::R1))
                && outcomes.get(DetectLabel::R1).is_some_and(|o| o.is_bright())
                && attempts < max_attempts;
            if retry {
                attempts += 1;
                i = self.prep.start;
            } else {
                i += 1;
            }
        }

        let verdict = evaluate_flags(&outcomes, opts.policy).expect("every detection ran");
        ShotRecord {
            outcomes,
            counts,
            flagged: verdict.flagged,
            flag_reason: verdict.reason,
            inferred: verdict.inferred,
            prepared: self.prepared,
            projected,
            attempts,
            trace,
        }
    }
}

/// Runs one shot of `sequence` under `model`.
pub fn run_shot<R: Rng + ?Sized>(sequence: &Sequence, model: &ErrorModel, rng: &mut R) -> Result<ShotRecord> {
    Ok(ShotEngine::new(sequence, model)?.run(rng, &ShotOptions::default()))
}

/// Convenience for tests and examples: a basis-state shot of `encoding`.
pub fn run_basis_shot<R: Rng + ?Sized>(
    encoding: crate::atomic_model::EncodingName,
    state: QubitState,
    model: &ErrorModel,
    rng: &mut R,
) -> Result<ShotRecord> {
    let seq = crate::protocol::build_sequence(&crate::atomic_model::encoding_catalog(encoding), Preparation::basis(state))?;
    run_shot(&seq, model, rng)
}
