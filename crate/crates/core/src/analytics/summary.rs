use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analytics::interval::wilson_interval;
use crate::error::{Result, SpamError};
use crate::protocol::flags::{evaluate_flags, flag_conditions, raw_inference, FlagPolicy, FlagReason, STAGE_NAMES};
use crate::protocol::{DetectLabel, QubitState, ShotRecord};

/// Rounds to six significant digits so summaries stay readable and
/// byte-stable.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

/// Integer aggregates for one prepared state; merging is associative.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateTally {
    pub shots: u64,
    /// Shots surviving each cumulative post-selection stage.
    pub kept: [u64; 6],
    /// Misidentified shots among those kept at each stage.
    pub errors: [u64; 6],
    pub reasons: [u64; 7],
    pub attempts: u64,
}

impl StateTally {
    fn merge(&mut self, o: &StateTally) {
        self.shots += o.shots;
        self.attempts += o.attempts;
        for i in 0..6 {
            self.kept[i] += o.kept[i];
            self.errors[i] += o.errors[i];
        }
        for i in 0..7 {
            self.reasons[i] += o.reasons[i];
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryTally {
    pub policy: FlagPolicy,
    pub states: [StateTally; 2],
}

impl SummaryTally {
    pub fn new(policy: FlagPolicy) -> Self {
        Self { policy, states: Default::default() }
    }

    pub fn push(&mut self, r: &ShotRecord) -> Result<()> {
        let conds = flag_conditions(&r.outcomes, self.policy)?;
        let reason = evaluate_flags(&r.outcomes, self.policy)?.reason;
        let r3 = r.outcomes.get(DetectLabel::R3).ok_or(SpamError::MissingOutcome("R3"))?.is_bright();
        let wrong = raw_inference(r3) != r.projected.unwrap_or(r.prepared);
        let t = &mut self.states[r.prepared.index()];
        t.shots += 1;
        t.attempts += r.attempts as u64;
        t.reasons[reason.index()] += 1;
        for stage in 0..6 {
            if conds[..stage].iter().any(|&c| c) {
                break;
            }
            t.kept[stage] += 1;
            t.errors[stage] += wrong as u64;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &SummaryTally) {
        for (a, b) in self.states.iter_mut().zip(&other.states) {
            a.merge(b);
        }
    }

    pub fn summarize(&self, z: f64) -> Result<ExperimentSummary> {
        if self.states.iter().all(|s| s.shots == 0) {
            return Err(SpamError::invalid("no shots to summarize"));
        }
        let mut states = Vec::new();
        for q in QubitState::BOTH {
            let t = &self.states[q.index()];
            if t.shots == 0 {
                continue;
            }
            let stages = (0..6)
                .map(|i| {
                    let (error, interval) = if t.kept[i] == 0 {
                        (0.0, (0.0, 1.0))
                    } else {
                        (t.errors[i] as f64 / t.kept[i] as f64, wilson_interval(t.errors[i], t.kept[i], z)?)
                    };
                    Ok(StageStats {
                        criterion: STAGE_NAMES[i].to_string(),
                        kept: t.kept[i],
                        retention: round_sig(t.kept[i] as f64 / t.shots as f64),
                        errors: t.errors[i],
                        error: round_sig(error),
                        interval: (round_sig(interval.0), round_sig(interval.1)),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let rejected = t.shots - t.kept[5];
            states.push(StateSummary {
                prepared: q,
                shots: t.shots,
                rejected,
                rejection_fraction: round_sig(rejected as f64 / t.shots as f64),
                mean_attempts: round_sig(t.attempts as f64 / t.shots as f64),
                flag_reasons: FlagReason::ALL
                    .iter()
                    .filter(|r| **r != FlagReason::None)
                    .map(|r| (r.name().to_string(), t.reasons[r.index()]))
                    .collect(),
                stages,
            });
        }
        let m = states.len() as f64;
        let average = (0..6)
            .map(|i| {
                let mean = |f: &dyn Fn(&StageStats) -> f64| round_sig(states.iter().map(|s| f(&s.stages[i])).sum::<f64>() / m);
                AverageStage {
                    criterion: STAGE_NAMES[i].to_string(),
                    retention: mean(&|s| s.retention),
                    error: mean(&|s| s.error),
                    interval: (mean(&|s| s.interval.0), mean(&|s| s.interval.1)),
                }
            })
            .collect();
        Ok(ExperimentSummary { z, policy: self.policy, states, average })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub criterion: String,
    pub kept: u64,
    pub retention: f64,
    pub errors: u64,
    pub error: f64,
    pub interval: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub prepared: QubitState,
    pub shots: u64,
    pub rejected: u64,
    pub rejection_fraction: f64,
    pub mean_attempts: f64,
    pub flag_reasons: BTreeMap<String, u64>,
    pub stages: Vec<StageStats>,
}

impl StateSummary {
    /// The fully post-selected stage.
    pub fn final_stage(&self) -> &StageStats {
        self.stages.last().expect("six stages")
    }
}

/// Mean over the prepared states of the rates and of the interval bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageStage {
    pub criterion: String,
    pub retention: f64,
    pub error: f64,
    pub interval: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub z: f64,
    pub policy: FlagPolicy,
    pub states: Vec<StateSummary>,
    pub average: Vec<AverageStage>,
}

impl ExperimentSummary {
    pub fn state(&self, q: QubitState) -> Option<&StateSummary> {
        self.states.iter().find(|s| s.prepared == q)
    }

    pub fn final_average(&self) -> &AverageStage {
        self.average.last().expect("six stages")
    }
}

/// Cumulative post-selection statistics over a set of shot records.
pub fn spam_summary(records: &[ShotRecord], policy: FlagPolicy, z: f64) -> Result<ExperimentSummary> {
    if records.is_empty() {
        return Err(SpamError::invalid("no shot records"));
    }
    let mut tally = SummaryTally::new(policy);
    for r in records {
        tally.push(r)?;
    }
    tally.summarize(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::flags::DetectionOutcomes;

    fn record(bright: [bool; 6], prepared: QubitState) -> ShotRecord {
        let outcomes = DetectionOutcomes::from_bright(bright);
        let v = evaluate_flags(&outcomes, FlagPolicy::Standard).unwrap();
        ShotRecord {
            outcomes,
            counts: [0; 6],
            flagged: v.flagged,
            flag_reason: v.reason,
            inferred: v.inferred,
            prepared,
            projected: None,
            attempts: 1,
            trace: None,
        }
    }

    #[test]
    fn rounding() {
        assert_eq!(round_sig(0.123456789), 0.123457);
        assert_eq!(round_sig(3.19085850785e-6), 3.19086e-6);
        assert_eq!(round_sig(0.0), 0.0);
    }

    #[test]
    fn stages_accumulate_in_order() {
        let good0 = record([true, false, false, true, true, true], QubitState::Zero);
        let good1 = record([true, false, false, false, true, true], QubitState::One);
        let r1 = record([true, true, false, true, true, true], QubitState::Zero);
        // misread before any filter, caught by R2
        let bad = record([true, false, true, false, true, true], QubitState::Zero);
        let s = spam_summary(&[good0, good1, r1, bad], FlagPolicy::Standard, 1.0).unwrap();
        let zero = s.state(QubitState::Zero).unwrap();
        let kept: Vec<u64> = zero.stages.iter().map(|x| x.kept).collect();
        let errs: Vec<u64> = zero.stages.iter().map(|x| x.errors).collect();
        assert_eq!(kept, vec![3, 3, 2, 1, 1, 1]);
        assert_eq!(errs, vec![1, 1, 1, 0, 0, 0]);
        assert_eq!(zero.flag_reasons["R1Bright"], 1);
        assert_eq!(zero.flag_reasons["R2Bright"], 1);
        assert_eq!(zero.rejected, 2);
        let one = s.state(QubitState::One).unwrap();
        assert_eq!(one.final_stage().retention, 1.0);
        assert_eq!(one.final_stage().error, 0.0);
        // average of the two final-stage retentions (1/3 and 1)
        assert_eq!(s.final_average().retention, round_sig((1.0 / 3.0 + 1.0) / 2.0));
    }

    #[test]
    fn tallies_merge_associatively() {
        let rs = [
            record([true, false, false, true, true, true], QubitState::Zero),
            record([false, false, false, true, true, true], QubitState::One),
            record([true, false, false, false, false, true], QubitState::One),
        ];
        let mut whole = SummaryTally::new(FlagPolicy::Standard);
        rs.iter().for_each(|r| whole.push(r).unwrap());
        let mut a = SummaryTally::new(FlagPolicy::Standard);
        a.push(&rs[0]).unwrap();
        let mut b = SummaryTally::new(FlagPolicy::Standard);
        b.push(&rs[1]).unwrap();
        b.push(&rs[2]).unwrap();
        a.merge(&b);
        assert_eq!(a, whole);
    }

    #[test]
    fn empty_records_are_an_error() {
        assert!(spam_summary(&[], FlagPolicy::Standard, 1.0).is_err());
    }
}
