//! Acceptance criteria, one test each. Every test writes a single
//! `PASS`/`FAIL` line straight to stdout (bypassing the test harness's
//! capture) before asserting, so the full scorecard is visible in a plain
//! `cargo test` run.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use spamsim_core::analytics::lifetime::{fit_lifetime_samples, generate_decay_samples};
use spamsim_core::analytics::{detection_error_budget, predict_rejection, predict_rejection_exact, BiasCurve};
use spamsim_core::detection::{calibrate_threshold, optical_errors, CountHistogram, FitMethod, HistogramLabel};
use spamsim_core::error_model::decay_probability;
use spamsim_core::protocol::bias::run_bias_point;
use spamsim_core::protocol::{run_experiment, run_experiment_with_threads, DetectionOutcomes, ExperimentConfig};
use spamsim_core::{build_sequence, encoding_catalog, evaluate_flags, EncodingName, ErrorModel, FlagPolicy, Preparation, QubitState};

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let line = format!("ACCEPTANCE {id} {name}: {} — {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

/// Expected rejected fractions per encoding and prepared state, with the
/// number of decimals (in percent) they are quoted to.
const EXPECTED_REJECTION: [(EncodingName, QubitState, f64, i32); 6] = [
    (EncodingName::Optical, QubitState::Zero, 0.0356, 2),
    (EncodingName::Optical, QubitState::One, 0.150, 1),
    (EncodingName::Metastable, QubitState::Zero, 0.0356, 2),
    (EncodingName::Metastable, QubitState::One, 0.1026, 2),
    (EncodingName::Ground, QubitState::Zero, 0.0976, 2),
    (EncodingName::Ground, QubitState::One, 0.0525, 2),
];

#[test]
fn criterion_1_monte_carlo_rejection_fractions() {
    let model = ErrorModel::paper_defaults();
    let n = 1_000_000u64;
    let mut pass = true;
    let mut detail = Vec::new();
    for name in EncodingName::ALL {
        let out = run_experiment(&ExperimentConfig::new(name, n, 0x5eed_0001), &model).unwrap();
        for (enc, q, expected, _) in EXPECTED_REJECTION.iter().filter(|e| e.0 == name) {
            let s = out.summary.state(*q).unwrap();
            let measured = s.rejected as f64 / s.shots as f64;
            let se = (expected * (1.0 - expected) / n as f64).sqrt();
            let ok = (measured - expected).abs() <= 3.0 * se;
            pass &= ok;
            detail.push(format!("{}|{}⟩ {:.4}% vs {:.2}%{}", enc.short(), q.as_char(), 100.0 * measured, 100.0 * expected, if ok { "" } else { " ✗" }));
        }
    }
    report(1, "Monte Carlo rejection fractions", pass, &detail.join(", "));
    assert!(pass);
}

#[test]
fn criterion_2_analytic_rejection_fractions() {
    let model = ErrorModel::paper_defaults();
    let mut first_ok = true;
    let mut exact_ok = true;
    let mut detail = Vec::new();
    for (name, q, expected, decimals) in EXPECTED_REJECTION {
        let seq = build_sequence(&encoding_catalog(name), Preparation::basis(q)).unwrap();
        let first = predict_rejection(&seq, &model, Default::default()).unwrap();
        let exact = predict_rejection_exact(&seq, &model, Default::default()).unwrap();
        let scale = 10f64.powi(decimals + 2);
        let f_ok = ((first * scale).round() - expected * scale).abs() < 1e-6;
        let e_ok = (exact - expected).abs() <= 5e-4;
        first_ok &= f_ok;
        exact_ok &= e_ok;
        detail.push(format!(
            "{}|{}⟩ first-order {:.2}% exact {:.3}%{}",
            name.short(),
            q.as_char(),
            100.0 * first,
            100.0 * exact,
            if e_ok { "" } else { " ✗" }
        ));
    }
    report(
        2,
        "analytic rejection fractions",
        first_ok && exact_ok,
        &format!("first-order {}, exact {}: {}", ok(first_ok), ok(exact_ok), detail.join(", ")),
    );
    assert!(first_ok && exact_ok);
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "off"
    }
}

#[test]
fn criterion_3_detection_error_budget() {
    let b = detection_error_budget(3.2e-6, 0.0, 1.4e-5).unwrap();
    // two significant figures, as quoted
    let shown = format!("{:.1e}", b.average);
    let pass = shown == "8.6e-6";
    report(3, "detection error budget", pass, &format!("average {:.4e}", b.average));
    assert!(pass);
}

#[test]
fn criterion_4_end_to_end_spam_error() {
    let model = ErrorModel::paper_defaults();
    let (bright_err, dark_err) = optical_errors(&model.detection);
    let readout = model.pulse(spamsim_core::atomic_model::B_F2_MM1, spamsim_core::atomic_model::A_F2_M0).unwrap().t_pi;
    let eps_d = decay_probability(model.detection.total_duration + readout, model.decay.lifetime).unwrap();
    let predicted = detection_error_budget(bright_err, dark_err, eps_d).unwrap().average;

    let config = ExperimentConfig::new(EncodingName::Metastable, 5_000_000, 0xC4_2024);
    let out = run_experiment(&config, &model).unwrap();
    let avg = out.summary.final_average();
    let (lo, hi) = avg.interval;
    let zero = out.summary.state(QubitState::Zero).unwrap().final_stage().clone();
    let one = out.summary.state(QubitState::One).unwrap().final_stage().clone();

    let contains = lo <= predicted && predicted <= hi;
    let overlaps = lo <= 9e-6 && hi >= 1e-6;
    let asymmetric = one.error > zero.error;
    let pass = contains && overlaps && asymmetric;
    report(
        4,
        "end-to-end SPAM error",
        pass,
        &format!(
            "average {:.3e} [{:.3e}, {:.3e}]; prediction {:.3e} {}; measured 5(4)e-6 overlap {}; |0⟩ {:.3e} ({}/{}) < |1⟩ {:.3e} ({}/{}) {}",
            avg.error,
            lo,
            hi,
            predicted,
            ok(contains),
            ok(overlaps),
            zero.error,
            zero.errors,
            zero.kept,
            one.error,
            one.errors,
            one.kept,
            ok(asymmetric)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_bias_curves() {
    let model = ErrorModel::paper_defaults().without_static_errors();
    let grid = [0.6, 0.7, 0.8, 0.9, 1.0];
    let mut pass = true;
    let mut worst: f64 = 0.0;
    let mut misses = Vec::new();
    for (c, curve) in BiasCurve::ALL.into_iter().enumerate() {
        for (k, &r) in grid.iter().enumerate() {
            let seed = 0xB1A5_0000 + (c * 16 + k) as u64;
            let p = run_bias_point(&model, curve, r, 100_000, seed).unwrap();
            let dev = (p.measured_bias - p.closed_form_bias).abs() / p.mc_std_err;
            let ok = dev <= 3.0 && (r != 1.0 || p.measured_bias.abs() <= 3.0 * p.mc_std_err);
            worst = worst.max(dev);
            if !ok {
                misses.push(format!("{curve}@{r}: {:.4} vs {:.4}", p.measured_bias, p.closed_form_bias));
            }
            pass &= ok;
        }
    }
    let detail = if misses.is_empty() {
        format!("20 points, largest deviation {worst:.2} standard errors")
    } else {
        format!("outside 3 SE: {}", misses.join(", "))
    };
    report(5, "bias curves", pass, &detail);
    assert!(pass);
}

/// Flag rules written out directly from the outcome table.
fn oracle(bits: [bool; 6]) -> (bool, Option<QubitState>) {
    let [r0, r1, r2, r3, r4, r5] = bits;
    let accept = r0 && !r1 && !r2 && (r3 || r4) && r5;
    let readout = if r3 { QubitState::Zero } else { QubitState::One };
    (!accept, accept.then_some(readout))
}

#[test]
fn criterion_6_truth_table() {
    let mut mismatches = 0;
    for code in 0u32..64 {
        let bits: [bool; 6] = std::array::from_fn(|i| code & (1 << i) != 0);
        let v = evaluate_flags(&DetectionOutcomes::from_bright(bits), FlagPolicy::Standard).unwrap();
        if (v.flagged, v.inferred) != oracle(bits) {
            mismatches += 1;
        }
    }
    let pass = mismatches == 0;
    report(6, "flag truth table", pass, &format!("{} of 64 patterns agree", 64 - mismatches));
    assert!(pass);
}

#[test]
fn criterion_7_lifetime_fit_coverage() {
    let tau = 27.2;
    let delays = [5.0, 10.0, 20.0, 30.0];
    let mut covered = 0;
    for rep in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x7A0_0000 + rep);
        let samples = generate_decay_samples(tau, &delays, 2_500, &mut rng).unwrap();
        let fit = fit_lifetime_samples(&samples).unwrap();
        let (lo, hi) = fit.interval(2.0);
        covered += (lo <= tau && tau <= hi) as u32;
    }
    let pass = covered >= 45;
    report(7, "lifetime fit coverage", pass, &format!("{covered}/50 two-sigma intervals contain 27.2 s"));
    assert!(pass);
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Equal-prior misclassification of integer counts with cut `thr`
/// (bright iff count > thr).
fn misclassification(thr: i64, dark: (f64, f64), bright: (f64, f64)) -> f64 {
    let cut = thr as f64 + 0.5;
    0.5 * (1.0 - normal_cdf((cut - dark.0) / dark.1)) + 0.5 * normal_cdf((cut - bright.0) / bright.1)
}

#[test]
fn criterion_8_threshold_calibration() {
    let cases = [((20.0, 15.0), (320.0, 60.0)), ((0.0, 10.0), (100.0, 10.0)), ((50.0, 20.0), (200.0, 40.0))];
    let mut pass = true;
    let mut detail = Vec::new();
    for (i, (dark, bright)) in cases.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x7E5 + i as u64);
        let mut draw = |(m, s): (f64, f64)| -> Vec<i64> {
            let d = Normal::new(m, s).unwrap();
            (0..100_000).map(|_| d.sample(&mut rng).round() as i64).collect()
        };
        let hd = CountHistogram::from_samples(&draw(dark), HistogramLabel::Dark);
        let hb = CountHistogram::from_samples(&draw(bright), HistogramLabel::Bright);
        let cal = calibrate_threshold(&hb, &hd, FitMethod::Moments).unwrap();
        let got = misclassification(cal.threshold, dark, bright);
        let (best_t, best) = (dark.0 as i64..=bright.0 as i64)
            .map(|t| (t, misclassification(t, dark, bright)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let rel = got / best - 1.0;
        let ok = rel <= 0.10;
        pass &= ok;
        detail.push(format!("threshold {} vs optimal {best_t} (+{:.2}%)", cal.threshold, 100.0 * rel));
    }
    report(8, "threshold calibration", pass, &detail.join(", "));
    assert!(pass);
}

#[test]
fn criterion_9_determinism_across_workers() {
    let model = ErrorModel::paper_defaults();
    let config = ExperimentConfig::new(EncodingName::Ground, 100_000, 0xD0D0);
    let a = run_experiment_with_threads(&config, &model, 1).unwrap();
    let b = run_experiment_with_threads(&config, &model, 8).unwrap();
    let ja = serde_json::to_string_pretty(&a.summary).unwrap();
    let jb = serde_json::to_string_pretty(&b.summary).unwrap();
    let pass = ja.as_bytes() == jb.as_bytes();
    report(9, "determinism across worker counts", pass, &format!("{} bytes, identical: {pass}", ja.len()));
    assert!(pass);
}
