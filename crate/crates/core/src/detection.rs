//! Population detection: photon-count sampling, bright/dark
//! classification, threshold calibration, and decay during the pulse.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::atomic_model::StateLabel;
use crate::error::{Result, SpamError};
use crate::error_model::{sample_decay_time, DecayChannel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    Bright,
    Dark,
}

impl Outcome {
    pub fn is_bright(self) -> bool {
        self == Outcome::Bright
    }

    pub fn as_char(self) -> char {
        match self {
            Outcome::Bright => 'b',
            Outcome::Dark => 'd',
        }
    }
}

/// Photon-count statistics of one detection pulse. Means are net of the
/// camera offset, which is only kept for converting back to raw counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionModel {
    pub mean_bright: f64,
    pub mean_dark: f64,
    pub read_noise_sigma: f64,
    pub offset: f64,
    /// Camera exposure in seconds.
    pub exposure: f64,
    /// Full pulse length including readout dead time, in seconds.
    pub total_duration: f64,
    pub threshold: f64,
}

impl DetectionModel {
    /// 400 μs exposure inside a 458.6 μs pulse, threshold 161 counts. The
    /// count means and read noise are not measured values: they are chosen
    /// so that a fluorescing ion reads dark with probability ≈ 3.2e-6 at
    /// that threshold while a dark ion essentially never reads bright.
    pub fn paper_defaults() -> Self {
        Self {
            mean_bright: 318.2,
            mean_dark: 10.0,
            read_noise_sigma: 30.0,
            offset: 100.0,
            exposure: 400e-6,
            total_duration: 458.6e-6,
            threshold: 161.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SpamError::Config(m));
        if !(self.mean_dark >= 0.0 && self.mean_bright > self.mean_dark && self.mean_bright.is_finite()) {
            return bad(format!(
                "need mean_bright > mean_dark >= 0, got {} and {}",
                self.mean_bright, self.mean_dark
            ));
        }
        if !(self.read_noise_sigma >= 0.0 && self.read_noise_sigma.is_finite()) {
            return bad(format!("read_noise_sigma must be non-negative, got {}", self.read_noise_sigma));
        }
        if !(self.exposure > 0.0 && self.total_duration >= self.exposure && self.total_duration.is_finite()) {
            return bad(format!(
                "need total_duration >= exposure > 0, got {} and {}",
                self.total_duration, self.exposure
            ));
        }
        if !self.threshold.is_finite() || !self.offset.is_finite() {
            return bad("threshold and offset must be finite".into());
        }
        Ok(())
    }

    pub fn raw_counts(&self, net: i64) -> f64 {
        net as f64 + self.offset
    }
}

/// Cached distributions for the two pure cases so the shot loop does not
/// rebuild a Poisson sampler on every detection.
#[derive(Debug, Clone)]
pub struct CountSampler {
    model: DetectionModel,
    bright: Option<Poisson<f64>>,
    dark: Option<Poisson<f64>>,
    noise: Option<Normal<f64>>,
}

impl CountSampler {
    pub fn new(model: &DetectionModel) -> Result<Self> {
        model.validate()?;
        let poisson = |mean: f64| if mean > 0.0 { Poisson::new(mean).ok() } else { None };
        let noise = if model.read_noise_sigma > 0.0 {
            Some(Normal::new(0.0, model.read_noise_sigma).map_err(|e| SpamError::Config(e.to_string()))?)
        } else {
            None
        };
        Ok(Self { model: model.clone(), bright: poisson(model.mean_bright), dark: poisson(model.mean_dark), noise })
    }

    pub fn model(&self) -> &DetectionModel {
        &self.model
    }

    pub fn sample<R: Rng + ?Sized>(&self, fluorescing: f64, rng: &mut R) -> i64 {
        let photons = if fluorescing >= 1.0 {
            self.bright.as_ref().map_or(0.0, |d| d.sample(rng))
        } else if fluorescing <= 0.0 {
            self.dark.as_ref().map_or(0.0, |d| d.sample(rng))
        } else {
            let mean = fluorescing * self.model.mean_bright + (1.0 - fluorescing) * self.model.mean_dark;
            if mean > 0.0 {
                Poisson::new(mean).map(|d| d.sample(rng)).unwrap_or(0.0)
            } else {
                0.0
            }
        };
        let noise = self.noise.as_ref().map_or(0.0, |d| d.sample(rng));
        (photons + noise).round() as i64
    }
}

/// Net camera counts for an ion that fluoresces for fraction `fluorescing`
/// of the pulse: Poisson photons plus Gaussian read noise, rounded.
pub fn sample_counts<R: Rng + ?Sized>(fluorescing: f64, model: &DetectionModel, rng: &mut R) -> Result<i64> {
    if !(0.0..=1.0).contains(&fluorescing) {
        return Err(SpamError::invalid(format!("fluorescing fraction must lie in [0, 1], got {fluorescing}")));
    }
    Ok(CountSampler::new(model)?.sample(fluorescing, rng))
}

/// Counts strictly above the threshold are bright.
pub fn classify(counts: i64, threshold: f64) -> Outcome {
    if counts as f64 > threshold {
        Outcome::Bright
    } else {
        Outcome::Dark
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionResult {
    pub outcome: Outcome,
    pub counts: i64,
    pub post_state: StateLabel,
}

/// One detection pulse. Ground-manifold states glow for the whole pulse,
/// a lost ion never does, and a metastable state glows for whatever is
/// left of the pulse after it decays.
pub fn detect<R: Rng + ?Sized>(
    state: StateLabel,
    sampler: &CountSampler,
    decay: &DecayChannel,
    rng: &mut R,
) -> DetectionResult {
    let model = sampler.model();
    let (fluorescing, post_state) = if state.fluoresces() {
        (1.0, state)
    } else if state.in_metastable() {
        let t_d = model.total_duration;
        match sample_decay_time(t_d, decay, rng) {
            Some(t) => ((t_d - t) / t_d, StateLabel::WrongGround),
            None => (0.0, state),
        }
    } else {
        (0.0, state)
    };
    let counts = sampler.sample(fluorescing, rng);
    DetectionResult { outcome: classify(counts, model.threshold), counts, post_state }
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn poisson_pmf(k: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let k = k as f64;
    (k * mean.ln() - mean - libm::lgamma(k + 1.0)).exp()
}

/// Probability that a count drawn for fluorescing fraction `f` lands at or
/// below the threshold (i.e. reads dark), by direct summation over the
/// Poisson photon number.
pub fn dark_probability(f: f64, model: &DetectionModel) -> f64 {
    let mean = f * model.mean_bright + (1.0 - f) * model.mean_dark;
    let cut = model.threshold.floor() + 0.5;
    let upper = (mean + 40.0 * mean.sqrt() + 60.0).ceil() as u64;
    (0..=upper)
        .map(|k| {
            let p = poisson_pmf(k, mean);
            let below = if model.read_noise_sigma > 0.0 {
                normal_cdf((cut - k as f64) / model.read_noise_sigma)
            } else if (k as f64) < cut {
                1.0
            } else {
                0.0
            };
            p * below
        })
        .sum()
}

/// Optical detection errors `(1 − P(bright | A), 1 − P(dark | B))` with
/// decay switched off.
pub fn optical_errors(model: &DetectionModel) -> (f64, f64) {
    (dark_probability(1.0, model), 1.0 - dark_probability(0.0, model))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HistogramLabel {
    Bright,
    Dark,
    Unlabeled,
}

/// Histogram over integer counts. Bin `i` holds counts in
/// `edges[i]..edges[i + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountHistogram {
    edges: Vec<i64>,
    frequencies: Vec<u64>,
    pub label: HistogramLabel,
}

impl CountHistogram {
    pub fn new(edges: Vec<i64>, frequencies: Vec<u64>, label: HistogramLabel) -> Result<Self> {
        if edges.len() != frequencies.len() + 1 {
            return Err(SpamError::invalid(format!(
                "{} edges cannot bound {} bins",
                edges.len(),
                frequencies.len()
            )));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SpamError::invalid("bin edges must be strictly increasing"));
        }
        Ok(Self { edges, frequencies, label })
    }

    /// Unit-width histogram spanning the observed range.
    pub fn from_samples(samples: &[i64], label: HistogramLabel) -> Self {
        let mut acc = CountAccumulator::default();
        for &s in samples {
            acc.push(s);
        }
        acc.into_histogram(label)
    }

    pub fn edges(&self) -> &[i64] {
        &self.edges
    }

    pub fn frequencies(&self) -> &[u64] {
        &self.frequencies
    }

    pub fn total(&self) -> u64 {
        self.frequencies.iter().sum()
    }

    /// Representative count of each bin (midpoint of the integers it holds).
    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        self.edges.windows(2).map(|w| (w[0] + w[1] - 1) as f64 / 2.0)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["bin_low", "frequency"])?;
        for (lo, f) in self.edges.iter().zip(&self.frequencies) {
            wtr.write_record([lo.to_string(), f.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads `(bin_low, frequency)` rows. The last bin is given the same
    /// width as the one before it (unit width for a single row).
    pub fn read_csv<R: Read>(r: R, label: HistogramLabel) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut lows = Vec::new();
        let mut freqs = Vec::new();
        for row in rdr.deserialize::<(i64, u64)>() {
            let (lo, f) = row?;
            lows.push(lo);
            freqs.push(f);
        }
        if lows.is_empty() {
            return Err(SpamError::invalid("histogram file has no rows"));
        }
        let width = if lows.len() > 1 { lows[lows.len() - 1] - lows[lows.len() - 2] } else { 1 };
        let last = *lows.last().unwrap();
        lows.push(last + width.max(1));
        Self::new(lows, freqs, label)
    }
}

/// Growable unit-width tally of integer counts, cheap to merge.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CountAccumulator {
    min: i64,
    bins: Vec<u64>,
}

impl CountAccumulator {
    pub fn push(&mut self, count: i64) {
        if self.bins.is_empty() {
            self.min = count;
            self.bins.push(0);
        }
        if count < self.min {
            let grow = (self.min - count) as usize;
            self.bins.splice(0..0, std::iter::repeat_n(0, grow));
            self.min = count;
        }
        let idx = (count - self.min) as usize;
        if idx >= self.bins.len() {
            self.bins.resize(idx + 1, 0);
        }
        self.bins[idx] += 1;
    }

    pub fn merge(&mut self, other: &CountAccumulator) {
        for (i, &n) in other.bins.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let c = other.min + i as i64;
            self.push(c);
            let idx = (c - self.min) as usize;
            self.bins[idx] += n - 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }

    pub fn into_histogram(self, label: HistogramLabel) -> CountHistogram {
        if self.bins.is_empty() {
            return CountHistogram { edges: vec![0, 1], frequencies: vec![0], label };
        }
        let n = self.bins.len() as i64;
        CountHistogram { edges: (self.min..=self.min + n).collect(), frequencies: self.bins, label }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub mean: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    #[default]
    Moments,
    LeastSquares,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCalibration {
    pub threshold: i64,
    /// Where the two fitted densities are equal.
    pub crossing: f64,
    pub dark: GaussianFit,
    pub bright: GaussianFit,
    pub method: FitMethod,
}

pub fn fit_moments(h: &CountHistogram) -> Result<GaussianFit> {
    let n = h.total();
    if n == 0 {
        return Err(SpamError::invalid("cannot fit an empty histogram"));
    }
    let n = n as f64;
    let mean = h.centers().zip(h.frequencies()).map(|(x, &f)| x * f as f64).sum::<f64>() / n;
    let var = h.centers().zip(h.frequencies()).map(|(x, &f)| (x - mean).powi(2) * f as f64).sum::<f64>() / n;
    Ok(GaussianFit { mean, sigma: var.sqrt() })
}

/// Least-squares fit of `a·exp(−(x−μ)²/2σ²)` to the bin frequencies,
/// Levenberg–Marquardt started from the moment estimate.
pub fn fit_least_squares(h: &CountHistogram) -> Result<GaussianFit> {
    let start = fit_moments(h)?;
    if start.sigma == 0.0 {
        return Ok(start);
    }
    let xs: Vec<f64> = h.centers().collect();
    let ys: Vec<f64> = h.frequencies().iter().map(|&f| f as f64).collect();
    let peak = ys.iter().cloned().fold(0.0, f64::max);
    let mut p = [peak, start.mean, start.sigma];
    let cost = |p: &[f64; 3]| -> f64 {
        xs.iter().zip(&ys).map(|(&x, &y)| (y - p[0] * (-(x - p[1]).powi(2) / (2.0 * p[2] * p[2])).exp()).powi(2)).sum()
    };
    let mut lambda = 1e-3;
    let mut current = cost(&p);
    for _ in 0..200 {
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for (&x, &y) in xs.iter().zip(&ys) {
            let d = x - p[1];
            let e = (-d * d / (2.0 * p[2] * p[2])).exp();
            let model = p[0] * e;
            let grad = [e, model * d / (p[2] * p[2]), model * d * d / p[2].powi(3)];
            let r = y - model;
            for i in 0..3 {
                jtr[i] += grad[i] * r;
                for j in 0..3 {
                    jtj[i][j] += grad[i] * grad[j];
                }
            }
        }
        let mut a = jtj;
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += lambda * jtj[i][i].max(1e-12);
        }
        let Some(step) = solve3(a, jtr) else { break };
        let trial = [p[0] + step[0], p[1] + step[1], (p[2] + step[2]).abs()];
        let c = cost(&trial);
        if c < current {
            let rel = (current - c) / current.max(f64::MIN_POSITIVE);
            p = trial;
            current = c;
            lambda = (lambda / 10.0).max(1e-12);
            if rel < 1e-12 {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    Ok(GaussianFit { mean: p[1], sigma: p[2] })
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let k = a[row][col] / a[col][col];
            for c in col..3 {
                a[row][c] -= k * a[col][c];
            }
            b[row] -= k * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Point between the two means where the Gaussian densities are equal,
/// from `σ_b²(x−μ_d)² − σ_d²(x−μ_b)² = 2σ_d²σ_b² ln(σ_b/σ_d)`.
pub fn gaussian_crossing(dark: GaussianFit, bright: GaussianFit) -> Result<f64> {
    let (lo, hi) = if dark.mean <= bright.mean { (dark, bright) } else { (bright, dark) };
    let separation = hi.mean - lo.mean;
    let width = (lo.sigma.powi(2) + hi.sigma.powi(2)).sqrt();
    if !(separation >= width) || width == 0.0 {
        return Err(SpamError::Inseparable { separation, width });
    }
    if lo.sigma == 0.0 || hi.sigma == 0.0 {
        return Err(SpamError::invalid("a fitted distribution has zero width"));
    }
    let (s1, s2) = (lo.sigma * lo.sigma, hi.sigma * hi.sigma);
    let (m1, m2) = (lo.mean, hi.mean);
    let a = s2 - s1;
    let b = -2.0 * (s2 * m1 - s1 * m2);
    let c = s2 * m1 * m1 - s1 * m2 * m2 - 2.0 * s1 * s2 * (hi.sigma / lo.sigma).ln();
    let inside = |x: f64| x.is_finite() && x >= m1 && x <= m2;
    let root = if a.abs() <= 1e-12 * s1.max(s2) {
        Some(-c / b)
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            // numerically stable pair of roots
            let q = -0.5 * (b + b.signum() * disc.sqrt());
            [q / a, c / q].into_iter().find(|&x| inside(x))
        } else {
            None
        }
    };
    match root.filter(|&x| inside(x)) {
        Some(x) => Ok(x),
        None => {
            let diff = |x: f64| {
                (-(x - m1).powi(2) / (2.0 * s1) - lo.sigma.ln()) - (-(x - m2).powi(2) / (2.0 * s2) - hi.sigma.ln())
            };
            let (mut l, mut h) = (m1, m2);
            for _ in 0..200 {
                let mid = 0.5 * (l + h);
                if diff(mid) > 0.0 {
                    l = mid;
                } else {
                    h = mid;
                }
            }
            Ok(0.5 * (l + h))
        }
    }
}

/// Fits both histograms and returns the integer threshold `T` such that
/// the decision boundary `T + ½` sits at the equal-density point. The
/// histogram with the lower mean is treated as dark whatever its label.
pub fn calibrate_threshold(a: &CountHistogram, b: &CountHistogram, method: FitMethod) -> Result<ThresholdCalibration> {
    let fit = |h: &CountHistogram| match method {
        FitMethod::Moments => fit_moments(h),
        FitMethod::LeastSquares => fit_least_squares(h),
    };
    let (fa, fb) = (fit(a)?, fit(b)?);
    let (dark, bright) = if fa.mean <= fb.mean { (fa, fb) } else { (fb, fa) };
    let crossing = gaussian_crossing(dark, bright)?;
    let threshold = (crossing + 1e-9).floor() as i64;
    Ok(ThresholdCalibration { threshold, crossing, dark, bright, method })
}
