use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::summary::{ExperimentSummary, SummaryTally};
use crate::atomic_model::{encoding_catalog, EncodingName};
use crate::detection::{CountAccumulator, CountHistogram, HistogramLabel};
use crate::error::{Result, SpamError};
use crate::error_model::ErrorModel;
use crate::protocol::engine::{shot_rng, ShotEngine, ShotOptions, ShotRecord};
use crate::protocol::flags::FlagPolicy;
use crate::protocol::{build_sequence, DetectLabel, Preparation, QubitState};

/// Shots per work unit. Fixed, so the merge order never depends on the
/// number of workers.
const CHUNK: u64 = 4096;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RunMode {
    #[default]
    PostSelect,
    RepeatUntilSuccess { max_attempts: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub encoding: EncodingName,
    /// Shots per prepared state.
    pub shots: u64,
    #[serde(default)]
    pub mode: RunMode,
    pub seed: u64,
    /// Alternate |0⟩ and |1⟩ preparations instead of running them in blocks.
    #[serde(default = "yes")]
    pub interleave: bool,
    #[serde(default)]
    pub policy: FlagPolicy,
    /// Confidence quantile for the summary's Wilson intervals.
    #[serde(default = "one")]
    pub z: f64,
    #[serde(default)]
    pub keep_records: bool,
    #[serde(default)]
    pub collect_histograms: bool,
}

fn yes() -> bool {
    true
}

fn one() -> f64 {
    1.0
}

impl ExperimentConfig {
    pub fn new(encoding: EncodingName, shots: u64, seed: u64) -> Self {
        Self {
            encoding,
            shots,
            mode: RunMode::PostSelect,
            seed,
            interleave: true,
            policy: FlagPolicy::Standard,
            z: 1.0,
            keep_records: false,
            collect_histograms: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shots == 0 {
            return Err(SpamError::invalid("shots must be at least 1"));
        }
        if let RunMode::RepeatUntilSuccess { max_attempts: 0 } = self.mode {
            return Err(SpamError::invalid("max_attempts must be at least 1"));
        }
        if !(self.z > 0.0 && self.z.is_finite()) {
            return Err(SpamError::invalid("z must be positive"));
        }
        Ok(())
    }

    pub fn total_shots(&self) -> u64 {
        2 * self.shots
    }

    /// Prepared state of global shot `index`.
    pub fn prepared(&self, index: u64) -> QubitState {
        let zero = if self.interleave { index % 2 == 0 } else { index < self.shots };
        if zero {
            QubitState::Zero
        } else {
            QubitState::One
        }
    }
}

/// Count histograms per prepared state and detection label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExperimentHistograms {
    acc: [[CountAccumulator; 6]; 2],
}

impl ExperimentHistograms {
    fn push(&mut self, r: &ShotRecord) {
        for (acc, &c) in self.acc[r.prepared.index()].iter_mut().zip(&r.counts) {
            acc.push(c);
        }
    }

    fn merge(&mut self, o: &ExperimentHistograms) {
        for (a, b) in self.acc.iter_mut().flatten().zip(o.acc.iter().flatten()) {
            a.merge(b);
        }
    }

    pub fn histogram(&self, state: QubitState, label: DetectLabel) -> CountHistogram {
        self.acc[state.index()][label.index()].clone().into_histogram(HistogramLabel::Unlabeled)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub tally: SummaryTally,
    pub summary: ExperimentSummary,
    /// In shot order, when requested.
    pub records: Option<Vec<ShotRecord>>,
    pub histograms: Option<ExperimentHistograms>,
}

struct Partial {
    tally: SummaryTally,
    records: Vec<ShotRecord>,
    histograms: Option<ExperimentHistograms>,
}

/// Runs `2 × shots` shots on the current rayon pool. Each shot draws from
/// its own stream derived from the seed and the shot index, so results do
/// not depend on scheduling.
pub fn run_experiment(config: &ExperimentConfig, model: &ErrorModel) -> Result<ExperimentOutput> {
    config.validate()?;
    let encoding = encoding_catalog(config.encoding);
    let engines = QubitState::BOTH
        .map(|q| build_sequence(&encoding, Preparation::basis(q)).and_then(|s| ShotEngine::new(&s, model)));
    let [zero, one] = engines;
    let engines = [zero?, one?];
    let opts = ShotOptions {
        policy: config.policy,
        max_attempts: match config.mode {
            RunMode::PostSelect => None,
            RunMode::RepeatUntilSuccess { max_attempts } => Some(max_attempts),
        },
        trace: false,
    };
    let total = config.total_shots();
    let chunks = total.div_ceil(CHUNK);
    let partials: Vec<Partial> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut p = Partial {
                tally: SummaryTally::new(config.policy),
                records: Vec::new(),
                histograms: config.collect_histograms.then(ExperimentHistograms::default),
            };
            for i in c * CHUNK..((c + 1) * CHUNK).min(total) {
                let engine = &engines[config.prepared(i).index()];
                let r = engine.run(&mut shot_rng(config.seed, i), &opts);
                p.tally.push(&r).expect("engine records every outcome");
                if let Some(h) = p.histograms.as_mut() {
                    h.push(&r);
                }
                if config.keep_records {
                    p.records.push(r);
                }
            }
            p
        })
        .collect();

    let mut tally = SummaryTally::new(config.policy);
    let mut records = config.keep_records.then(|| Vec::with_capacity(total as usize));
    let mut histograms = config.collect_histograms.then(ExperimentHistograms::default);
    for p in partials {
        tally.merge(&p.tally);
        if let Some(r) = records.as_mut() {
            r.extend(p.records);
        }
        if let (Some(h), Some(ph)) = (histograms.as_mut(), p.histograms.as_ref()) {
            h.merge(ph);
        }
    }
    let summary = tally.summarize(config.z)?;
    Ok(ExperimentOutput { tally, summary, records, histograms })
}

/// [`run_experiment`] on a dedicated pool of `threads` workers.
pub fn run_experiment_with_threads(config: &ExperimentConfig, model: &ErrorModel, threads: usize) -> Result<ExperimentOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| SpamError::invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_experiment(config, model))
}
