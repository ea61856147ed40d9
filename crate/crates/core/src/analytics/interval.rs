use serde::{Deserialize, Serialize};

use crate::error::{Result, SpamError};

/// Wilson score interval for `k` successes in `n` trials at normal
/// quantile `z`, clamped to `[0, 1]`.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(SpamError::invalid("Wilson interval needs at least one trial"));
    }
    if k > n {
        return Err(SpamError::invalid(format!("{k} successes exceed {n} trials")));
    }
    if !(z > 0.0 && z.is_finite()) {
        return Err(SpamError::invalid(format!("z must be positive, got {z}")));
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let (mut lo, mut hi) = ((center - half).max(0.0), (center + half).min(1.0));
    // keep the exact endpoints exact despite rounding
    if k == 0 {
        lo = 0.0;
    }
    if k == n {
        hi = 1.0;
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub successes: u64,
    pub trials: u64,
    pub point: f64,
    pub interval: (f64, f64),
    pub z: f64,
}

impl RateEstimate {
    pub fn new(successes: u64, trials: u64, z: f64) -> Result<Self> {
        let interval = wilson_interval(successes, trials, z)?;
        let point = successes as f64 / trials as f64;
        Ok(Self { successes, trials, point, interval, z })
    }

    pub fn contains(&self, p: f64) -> bool {
        self.interval.0 <= p && p <= self.interval.1
    }
}
