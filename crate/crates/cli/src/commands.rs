use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use spamsim_core::analytics::lifetime::{DecayFraction, DecaySample, LifetimeData, LifetimeFit};
use spamsim_core::analytics::summary::round_sig;
use spamsim_core::analytics::{fit_lifetime, predict_rejection, predict_rejection_exact, BiasCurve, RejectionOptions};
use spamsim_core::detection::{calibrate_threshold, CountHistogram, HistogramLabel, ThresholdCalibration};
use spamsim_core::protocol::bias::{bias_scan as scan_curve, BiasPoint};
use spamsim_core::protocol::{
    run_experiment, run_experiment_with_threads, DetectLabel, ExperimentConfig, FlagPolicy, QubitState, RunMode, ShotRecord,
};
use spamsim_core::{build_sequence, encoding_catalog, EncodingName, ErrorModel, ExperimentSummary, Preparation, Result, SpamError};

use crate::output::{emit_json, to_json, Outputs};
use crate::{BiasScanArgs, CalibrateArgs, LifetimeArgs, ModeArg, ModelArgs, PredictArgs, RunSpamArgs};

fn with_path(path: &Path) -> impl FnOnce(std::io::Error) -> SpamError + '_ {
    move |e| SpamError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(with_path(path))
}

fn load_model(args: &ModelArgs) -> Result<ErrorModel> {
    match (&args.config, args.paper_defaults) {
        (_, true) => Ok(ErrorModel::paper_defaults()),
        (Some(path), false) => ErrorModel::from_json_str(&std::fs::read_to_string(path).map_err(with_path(path))?),
        (None, false) => Err(SpamError::Config("give an error-model file or --paper-defaults".into())),
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let now = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).unwrap_or_default();
        now.as_nanos() as u64
    })
}

fn policy(strict: bool) -> FlagPolicy {
    if strict {
        FlagPolicy::Strict
    } else {
        FlagPolicy::Standard
    }
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(SpamError::invalid("--threads must be at least 1"));
        }
        b = b.num_threads(t);
    }
    b.build().map_err(|e| SpamError::invalid(format!("cannot start worker pool: {e}")))
}

#[derive(Debug, Serialize)]
struct PredictedRejection {
    first_order: f64,
    exact: f64,
}

#[derive(Debug, Serialize)]
struct SummaryDocument<'a> {
    encoding: EncodingName,
    mode: RunMode,
    seed: u64,
    shots_per_state: u64,
    interleave: bool,
    predicted_rejection: [PredictedRejection; 2],
    summary: &'a ExperimentSummary,
}

fn predicted(encoding: EncodingName, q: QubitState, model: &ErrorModel, opts: RejectionOptions) -> Result<PredictedRejection> {
    let seq = build_sequence(&encoding_catalog(encoding), Preparation::basis(q))?;
    Ok(PredictedRejection {
        first_order: round_sig(predict_rejection(&seq, model, opts)?),
        exact: round_sig(predict_rejection_exact(&seq, model, opts)?),
    })
}

pub fn run_spam(a: RunSpamArgs, argv: &[String]) -> Result<()> {
    let model = load_model(&a.model)?;
    let seed = resolve_seed(a.seed);
    let config = ExperimentConfig {
        encoding: a.encoding.into(),
        shots: a.shots,
        mode: match a.mode {
            ModeArg::PostSelect => RunMode::PostSelect,
            ModeArg::Rus => RunMode::RepeatUntilSuccess { max_attempts: a.max_attempts },
        },
        seed,
        interleave: !a.no_interleave,
        policy: policy(a.strict),
        z: 1.0,
        keep_records: a.records,
        collect_histograms: true,
    };
    config.validate()?;
    let out = match a.threads {
        Some(t) => {
            if t == 0 {
                return Err(SpamError::invalid("--threads must be at least 1"));
            }
            run_experiment_with_threads(&config, &model, t)?
        }
        None => run_experiment(&config, &model)?,
    };

    let opts = RejectionOptions { include_decay: false, policy: config.policy };
    let doc = SummaryDocument {
        encoding: config.encoding,
        mode: config.mode,
        seed,
        shots_per_state: config.shots,
        interleave: config.interleave,
        predicted_rejection: [
            predicted(config.encoding, QubitState::Zero, &model, opts)?,
            predicted(config.encoding, QubitState::One, &model, opts)?,
        ],
        summary: &out.summary,
    };
    let mut files = Outputs::new(&a.out)?;
    files.write_json("summary.json", &doc)?;
    if let Some(h) = &out.histograms {
        for q in QubitState::BOTH {
            for l in DetectLabel::ALL {
                let path = files.path(&format!("histogram_{q}_{l}.csv"));
                h.histogram(q, l).write_csv(BufWriter::new(File::create(path)?))?;
            }
        }
    }
    if let Some(records) = &out.records {
        write_records(&files.path("shots.csv"), records)?;
    }
    files.finish("run-spam", argv, a.model.config.as_deref(), Some(seed))?;
    eprintln!("{}", describe(&out.summary));
    Ok(())
}

fn describe(s: &ExperimentSummary) -> String {
    s.states
        .iter()
        .map(|st| {
            let f = st.final_stage();
            format!(
                "|{}⟩: {} shots, rejected {:.4}%, error {:.3e} ({}/{})",
                st.prepared.as_char(),
                st.shots,
                100.0 * st.rejection_fraction,
                f.error,
                f.errors,
                f.kept
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn write_records(path: &Path, records: &[ShotRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["shot", "prepared", "R0", "R1", "R2", "R3", "R4", "R5", "flagged", "reason", "inferred", "attempts"])?;
    for (i, r) in records.iter().enumerate() {
        let mut row = vec![i.to_string(), r.prepared.as_char().to_string()];
        row.extend(r.outcomes.0.iter().map(|o| o.map_or('-', |o| o.as_char()).to_string()));
        row.push(r.flagged.to_string());
        row.push(r.flag_reason.name().to_string());
        row.push(r.inferred.map_or(String::new(), |q| q.as_char().to_string()));
        row.push(r.attempts.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn calibrate(a: CalibrateArgs, argv: &[String]) -> Result<()> {
    let bright = CountHistogram::read_csv(open(&a.bright)?, HistogramLabel::Bright)?;
    let dark = CountHistogram::read_csv(open(&a.dark)?, HistogramLabel::Dark)?;
    let cal: ThresholdCalibration = calibrate_threshold(&bright, &dark, a.method.into())?;
    emit_json(&cal, a.out.as_deref(), "calibration.json", "calibrate-threshold", argv, None, None)
}

#[derive(Debug, Serialize)]
struct RejectionRow {
    encoding: EncodingName,
    state: QubitState,
    first_order: f64,
    exact: f64,
}

#[derive(Debug, Serialize)]
struct RejectionReport {
    include_decay: bool,
    policy: FlagPolicy,
    rows: Vec<RejectionRow>,
}

pub fn predict(a: PredictArgs, argv: &[String]) -> Result<()> {
    let model = load_model(&a.model)?;
    let opts = RejectionOptions { include_decay: a.include_decay, policy: policy(a.strict) };
    let mut rows = Vec::new();
    for encoding in EncodingName::ALL {
        for state in QubitState::BOTH {
            let p = predicted(encoding, state, &model, opts)?;
            rows.push(RejectionRow { encoding, state, first_order: p.first_order, exact: p.exact });
        }
    }
    for r in &rows {
        eprintln!(
            "{}|{}⟩  first-order {:6.2}%  exact {:7.3}%",
            r.encoding.short(),
            r.state.as_char(),
            100.0 * r.first_order,
            100.0 * r.exact
        );
    }
    let report = RejectionReport { include_decay: a.include_decay, policy: opts.policy, rows };
    emit_json(&report, a.out.as_deref(), "rejection.json", "predict-rejection", argv, a.model.config.as_deref(), None)
}

pub fn bias_scan(a: BiasScanArgs, argv: &[String]) -> Result<()> {
    let mut model = load_model(&a.model)?;
    if !a.keep_static_errors {
        model = model.without_static_errors();
    }
    if a.shots == 0 {
        return Err(SpamError::invalid("--shots must be at least 1"));
    }
    if a.t_grid.is_empty() {
        return Err(SpamError::invalid("--t-grid is empty"));
    }
    let curves: Vec<(usize, BiasCurve)> = match &a.curve {
        Some(name) => {
            let c: BiasCurve = name.parse()?;
            vec![(BiasCurve::ALL.iter().position(|x| *x == c).unwrap_or(0), c)]
        }
        None => BiasCurve::ALL.into_iter().enumerate().collect(),
    };
    let seed = resolve_seed(a.seed);
    let points: Vec<Vec<BiasPoint>> = pool(a.threads)?.install(|| {
        curves
            .par_iter()
            .map(|&(i, c)| scan_curve(&model, c, &a.t_grid, a.shots, seed.wrapping_add(i as u64)))
            .collect::<Result<_>>()
    })?;

    let render = |w: &mut csv::Writer<Box<dyn std::io::Write>>| -> Result<()> {
        w.write_record(["curve", "t_over_tpi", "measured_bias", "closed_form_bias", "mc_std_err", "accepted", "shots"])?;
        for p in points.iter().flatten() {
            w.write_record([
                p.curve.name().to_string(),
                p.t_over_tpi.to_string(),
                round_sig(p.measured_bias).to_string(),
                round_sig(p.closed_form_bias).to_string(),
                round_sig(p.mc_std_err).to_string(),
                p.accepted.to_string(),
                p.shots.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    match &a.out {
        Some(dir) => {
            let mut files = Outputs::new(dir)?;
            let path = files.path("bias_scan.csv");
            let mut w = csv::Writer::from_writer(Box::new(BufWriter::new(File::create(path)?)) as Box<dyn std::io::Write>);
            render(&mut w)?;
            files.finish("bias-scan", argv, a.model.config.as_deref(), Some(seed))
        }
        None => render(&mut csv::Writer::from_writer(Box::new(std::io::stdout()) as Box<dyn std::io::Write>)),
    }
}

#[derive(Debug, Serialize)]
struct LifetimeReport {
    #[serde(flatten)]
    fit: LifetimeFit,
    z: f64,
    interval: (f64, f64),
}

fn read_lifetime(path: &Path) -> Result<LifetimeData> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let delay = col("delay").ok_or_else(|| SpamError::invalid("lifetime CSV needs a `delay` column"))?;
    let parse_f = |s: &str| s.trim().parse::<f64>().map_err(|_| SpamError::invalid(format!("not a number: `{s}`")));
    if let Some(d) = col("decayed") {
        let mut out = Vec::new();
        for row in r.records() {
            let row = row?;
            let decayed = match row[d].trim().to_ascii_lowercase().as_str() {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(SpamError::invalid(format!("`decayed` must be 0/1/true/false, got `{other}`"))),
            };
            out.push(DecaySample { delay: parse_f(&row[delay])?, decayed });
        }
        Ok(LifetimeData::Samples(out))
    } else if let Some(f) = col("fraction") {
        let mut out = Vec::new();
        for row in r.records() {
            let row = row?;
            out.push(DecayFraction { delay: parse_f(&row[delay])?, fraction: parse_f(&row[f])? });
        }
        Ok(LifetimeData::Fractions(out))
    } else {
        Err(SpamError::invalid("lifetime CSV needs a `decayed` or `fraction` column"))
    }
}

pub fn lifetime(a: LifetimeArgs, argv: &[String]) -> Result<()> {
    if !(a.z > 0.0) {
        return Err(SpamError::invalid("--z must be positive"));
    }
    let fit = fit_lifetime(&read_lifetime(&a.samples)?)?;
    let report = LifetimeReport { fit, z: a.z, interval: fit.interval(a.z) };
    emit_json(&report, a.out.as_deref(), "lifetime.json", "lifetime-fit", argv, None, None)
}

pub fn show_defaults() -> Result<()> {
    print!("{}", to_json(&ErrorModel::paper_defaults())?);
    Ok(())
}
