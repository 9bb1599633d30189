use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::fit_line;

pub const MIN_FIT_POINTS: usize = 4;

/// `estimate(r) ≈ K e^{−γ r}` fitted on `(r, log estimate)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub gamma: f64,
    pub gamma_se: f64,
    pub k: f64,
    pub r2: f64,
    pub distance_min: u32,
    pub distance_max: u32,
    pub points: usize,
}

impl DecayFit {
    /// Decay rate positive by more than two standard errors.
    pub fn is_localized(&self) -> bool {
        self.gamma > 0.0 && self.gamma > 2.0 * self.gamma_se
    }

    pub fn predict(&self, r: f64) -> f64 {
        self.k * (-self.gamma * r).exp()
    }
}

/// Least squares on `(distance, log estimate)` over the positive, finite
/// estimates. Needs at least [`MIN_FIT_POINTS`] distinct distances.
pub fn decay_fit(points: &[(u32, f64)]) -> Result<DecayFit> {
    let usable: Vec<(u32, f64)> = points
        .iter()
        .copied()
        .filter(|(_, v)| v.is_finite() && *v > 0.0)
        .collect();
    let mut distinct: Vec<u32> = usable.iter().map(|p| p.0).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < MIN_FIT_POINTS {
        return Err(Error::TooFewFitPoints(distinct.len()));
    }
    let xs: Vec<f64> = usable.iter().map(|p| p.0 as f64).collect();
    let ys: Vec<f64> = usable.iter().map(|p| p.1.ln()).collect();
    let f = fit_line(&xs, &ys).ok_or(Error::TooFewFitPoints(distinct.len()))?;
    Ok(DecayFit {
        gamma: -f.slope,
        gamma_se: f.slope_se,
        k: f.intercept.exp(),
        r2: f.r2,
        distance_min: distinct[0],
        distance_max: *distinct.last().expect("nonempty"),
        points: usable.len(),
    })
}
