use serde::{Deserialize, Serialize};

use super::correlator::spectrum;
use super::sweep::monte_carlo;
use super::SpectralParameter;
use crate::error::{Error, Result};
use crate::localized::localized_spectrum;
use crate::model::Model;
use crate::stats::wilson_interval;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumMethod {
    /// Diagonalize each sampled restriction.
    Dense,
    /// Closed-form orbit spectra; only for `C = C_π`.
    OrbitOracle,
}

/// Empirical `P(dist(σ(U^Λ_ω(C)), z) > η)` with a Wilson interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub eta: f64,
    pub successes: usize,
    pub samples: usize,
    pub probability: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

impl GapEstimate {
    /// `P(dist ≤ η)`.
    pub fn failure_probability(&self) -> f64 {
        1.0 - self.probability
    }
}

pub fn spectral_gap_probe(
    model: &Model,
    z: SpectralParameter,
    etas: &[f64],
    samples: usize,
    seed: u64,
    method: SpectrumMethod,
) -> Result<Vec<GapEstimate>> {
    if let Some(e) = etas.iter().find(|e| !(**e >= 0.0)) {
        return Err(Error::Config(format!("η must be nonnegative, got {e}")));
    }
    if samples == 0 {
        return Err(Error::Config("samples must be at least 1".into()));
    }
    if method == SpectrumMethod::OrbitOracle && !model.is_localized() {
        return Err(Error::Config("the orbit oracle needs C = C_π".into()));
    }
    let zv = z.value();
    let task = |s: u64| -> Result<Vec<f64>> {
        let ev = match method {
            SpectrumMethod::Dense => spectrum(&model.realization(s)?)?,
            SpectrumMethod::OrbitOracle => localized_spectrum(&model.sample_field(s), model.perm(), model.l())?,
        };
        let dist = ev.iter().map(|l| (l - zv).norm()).fold(f64::INFINITY, f64::min);
        Ok(vec![dist])
    };
    let dists = monte_carlo(samples, seed, 1, task)?.values.remove(0);
    let n = dists.len();
    Ok(etas
        .iter()
        .map(|&eta| {
            let successes = dists.iter().filter(|&&d| d > eta).count();
            let (wilson_low, wilson_high) = wilson_interval(successes, n);
            GapEstimate {
                eta,
                successes,
                samples: n,
                probability: successes as f64 / n as f64,
                wilson_low,
                wilson_high,
            }
        })
        .collect())
}
