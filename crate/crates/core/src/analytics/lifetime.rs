//! Metastable lifetime from decay-vs-delay data, `P = 1 − exp(−t/τ)`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpamError};
use crate::error_model::decay_probability;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecaySample {
    pub delay: f64,
    pub decayed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFraction {
    pub delay: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LifetimeData {
    Samples(Vec<DecaySample>),
    Fractions(Vec<DecayFraction>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LifetimeMethod {
    MaximumLikelihood,
    LeastSquares,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeFit {
    pub tau: f64,
    /// One standard deviation of `tau`, propagated from the rate.
    pub sigma: f64,
    pub method: LifetimeMethod,
    pub delays: usize,
}

impl LifetimeFit {
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (self.tau - z * self.sigma, self.tau + z * self.sigma)
    }
}

pub fn fit_lifetime(data: &LifetimeData) -> Result<LifetimeFit> {
    match data {
        LifetimeData::Samples(s) => fit_lifetime_samples(s),
        LifetimeData::Fractions(f) => fit_lifetime_fractions(f),
    }
}

fn check_delay(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(SpamError::invalid(format!("delays must be positive and finite, got {t}")))
    }
}

fn unidentifiable<T>(msg: &str) -> Result<T> {
    Err(SpamError::Unidentifiable(msg.to_string()))
}

/// Binomial maximum likelihood in the decay rate `k = 1/τ`; the interval
/// comes from the Fisher information.
pub fn fit_lifetime_samples(samples: &[DecaySample]) -> Result<LifetimeFit> {
    let mut groups: BTreeMap<u64, (f64, f64, f64)> = BTreeMap::new();
    for s in samples {
        check_delay(s.delay)?;
        let g = groups.entry(s.delay.to_bits()).or_insert((s.delay, 0.0, 0.0));
        g.1 += 1.0;
        g.2 += s.decayed as u8 as f64;
    }
    let groups: Vec<(f64, f64, f64)> = groups.into_values().collect();
    if groups.len() < 2 {
        return unidentifiable("need at least two distinct delays");
    }
    let (n, y): (f64, f64) = groups.iter().fold((0.0, 0.0), |a, g| (a.0 + g.1, a.1 + g.2));
    if y == 0.0 {
        return unidentifiable("no sample decayed");
    }
    if y == n {
        return unidentifiable("every sample decayed");
    }
    // score is strictly decreasing in k
    let score = |k: f64| -> f64 {
        groups.iter().map(|&(t, n, y)| y * t / (k * t).exp_m1() - (n - y) * t).sum()
    };
    let t_max = groups.iter().map(|g| g.0).fold(0.0, f64::max);
    let t_min = groups.iter().map(|g| g.0).fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (1e-12 / t_max, 1.0 / t_min);
    while score(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return unidentifiable("rate diverges");
        }
    }
    while score(lo) < 0.0 {
        lo *= 0.5;
        if lo < 1e-300 {
            return unidentifiable("rate vanishes");
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if score(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let k = 0.5 * (lo + hi);
    let info: f64 = groups.iter().map(|&(t, n, _)| n * t * t / (k * t).exp_m1()).sum();
    let sigma_k = 1.0 / info.sqrt();
    Ok(LifetimeFit { tau: 1.0 / k, sigma: sigma_k / (k * k), method: LifetimeMethod::MaximumLikelihood, delays: groups.len() })
}

/// Least-squares fit to binned decay fractions; the interval comes from
/// the residual variance, so noiseless input gives zero width.
pub fn fit_lifetime_fractions(points: &[DecayFraction]) -> Result<LifetimeFit> {
    for p in points {
        check_delay(p.delay)?;
        if !(0.0..=1.0).contains(&p.fraction) {
            return Err(SpamError::invalid(format!("decay fraction must lie in [0, 1], got {}", p.fraction)));
        }
    }
    let mut delays: Vec<f64> = points.iter().map(|p| p.delay).collect();
    delays.sort_by(f64::total_cmp);
    delays.dedup();
    if delays.len() < 2 {
        return unidentifiable("need at least two distinct delays");
    }
    if points.iter().all(|p| p.fraction == 0.0) {
        return unidentifiable("no decay observed");
    }
    if points.iter().all(|p| p.fraction == 1.0) {
        return unidentifiable("every delay fully decayed");
    }
    let rss = |k: f64| -> f64 { points.iter().map(|p| (-(-k * p.delay).exp_m1() - p.fraction).powi(2)).sum() };
    // start from the linearised estimate −ln(1 − f)/t
    let inner: Vec<f64> = points
        .iter()
        .filter(|p| p.fraction > 0.0 && p.fraction < 1.0)
        .map(|p| -(-p.fraction).ln_1p() / p.delay)
        .collect();
    let mut k = if inner.is_empty() { 1.0 / delays[delays.len() / 2] } else { inner.iter().sum::<f64>() / inner.len() as f64 };
    let mut current = rss(k);
    for _ in 0..200 {
        let (mut jr, mut jj) = (0.0, 0.0);
        for p in points {
            let e = (-k * p.delay).exp();
            let r = 1.0 - e - p.fraction;
            let j = p.delay * e;
            jr += j * r;
            jj += j * j;
        }
        if jj == 0.0 {
            break;
        }
        let mut step = -jr / jj;
        let mut improved = false;
        for _ in 0..50 {
            let trial = k + step;
            if trial > 0.0 {
                let r = rss(trial);
                if r <= current {
                    k = trial;
                    improved = r < current;
                    current = r;
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved || step.abs() <= 1e-15 * k {
            break;
        }
    }
    let jj: f64 = points.iter().map(|p| (p.delay * (-k * p.delay).exp()).powi(2)).sum();
    let dof = (points.len() as f64 - 1.0).max(1.0);
    let sigma_k = (current / dof / jj).sqrt();
    Ok(LifetimeFit { tau: 1.0 / k, sigma: sigma_k / (k * k), method: LifetimeMethod::LeastSquares, delays: delays.len() })
}

/// Synthetic decay data: `per_delay` Bernoulli trials at each delay.
pub fn generate_decay_samples<R: Rng + ?Sized>(
    tau: f64,
    delays: &[f64],
    per_delay: usize,
    rng: &mut R,
) -> Result<Vec<DecaySample>> {
    let mut out = Vec::with_capacity(delays.len() * per_delay);
    for &t in delays {
        check_delay(t)?;
        let p = decay_probability(t, tau)?;
        out.extend((0..per_delay).map(|_| DecaySample { delay: t, decayed: rng.random::<f64>() < p }));
    }
    Ok(out)
}
