//! The random environment: i.i.d. torus-valued phases `ω^τ_x` and the
//! site-decorated coin `C_ω(x)_{τ,σ} = e^{iω^τ_{x+r(τ)}} C_{τ,σ}`.

use std::f64::consts::TAU;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::coin::CoinMatrix;
use crate::error::{Error, Result};
use crate::lattice::{CoinIndex, Lattice, Region, Site};
use crate::seeding::uniform_at;
use crate::C64;

/// Number of bins of the inverse-CDF table of a tabulated density.
pub const DENSITY_BINS: usize = 4096;

/// Law `dμ(θ) = l(θ) dθ` of a single phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PhaseDistribution {
    /// Uniform on `[0, 2π)`.
    Uniform,
    /// Density given by samples on a uniform periodic grid of `[0, 2π)`.
    Tabulated { density: TabulatedDensity },
    /// Every phase is zero. Not a density; used to reduce `U_ω(C)` to `U(C)`.
    DeterministicZero,
}

impl Default for PhaseDistribution {
    fn default() -> Self {
        PhaseDistribution::Uniform
    }
}

impl PhaseDistribution {
    pub fn tabulated(samples: Vec<f64>) -> Result<Self> {
        Ok(PhaseDistribution::Tabulated {
            density: TabulatedDensity::new(samples)?,
        })
    }

    /// Maps a uniform `u ∈ [0, 1)` to a phase in `[0, 2π)`.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        match self {
            PhaseDistribution::Uniform => TAU * u,
            PhaseDistribution::Tabulated { density } => density.inverse_cdf(u),
            PhaseDistribution::DeterministicZero => 0.0,
        }
    }

    pub fn cdf(&self, theta: f64) -> f64 {
        let theta = theta.clamp(0.0, TAU);
        match self {
            PhaseDistribution::Uniform => theta / TAU,
            PhaseDistribution::Tabulated { density } => density.cdf(theta),
            PhaseDistribution::DeterministicZero => 1.0,
        }
    }

    /// Density value, `None` for the degenerate zero law.
    pub fn density(&self, theta: f64) -> Option<f64> {
        match self {
            PhaseDistribution::Uniform => Some(1.0 / TAU),
            PhaseDistribution::Tabulated { density } => Some(density.density(theta)),
            PhaseDistribution::DeterministicZero => None,
        }
    }

    pub fn has_density(&self) -> bool {
        !matches!(self, PhaseDistribution::DeterministicZero)
    }
}

/// Piecewise-constant density on [`DENSITY_BINS`] bins, resampled by
/// periodic linear interpolation from user samples, with its CDF table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TabulatedDensity {
    samples: Vec<f64>,
    bins: Vec<f64>,
    cdf: Vec<f64>,
}

impl TryFrom<Vec<f64>> for TabulatedDensity {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        TabulatedDensity::new(v)
    }
}

impl From<TabulatedDensity> for Vec<f64> {
    fn from(t: TabulatedDensity) -> Vec<f64> {
        t.samples
    }
}

impl TabulatedDensity {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config("tabulated density has no samples".into()));
        }
        if samples.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(
                "tabulated density must be finite and nonnegative".into(),
            ));
        }
        let n = samples.len();
        let width = TAU / DENSITY_BINS as f64;
        let mut bins: Vec<f64> = (0..DENSITY_BINS)
            .map(|j| {
                let pos = (j as f64 + 0.5) * n as f64 / DENSITY_BINS as f64;
                let k = pos.floor() as usize % n;
                let frac = pos - pos.floor();
                samples[k] * (1.0 - frac) + samples[(k + 1) % n] * frac
            })
            .collect();
        let mass: f64 = bins.iter().sum::<f64>() * width;
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Config("tabulated density is not normalizable".into()));
        }
        for b in bins.iter_mut() {
            *b /= mass;
        }
        let mut cdf = Vec::with_capacity(DENSITY_BINS + 1);
        cdf.push(0.0);
        let mut acc = 0.0;
        for b in &bins {
            acc += b * width;
            cdf.push(acc);
        }
        let last = *cdf.last().unwrap();
        for c in cdf.iter_mut() {
            *c /= last;
        }
        Ok(TabulatedDensity { samples, bins, cdf })
    }

    fn width() -> f64 {
        TAU / DENSITY_BINS as f64
    }

    pub fn density(&self, theta: f64) -> f64 {
        let t = theta.rem_euclid(TAU);
        self.bins[((t / Self::width()) as usize).min(DENSITY_BINS - 1)]
    }

    pub fn cdf(&self, theta: f64) -> f64 {
        let pos = theta / Self::width();
        let j = (pos.floor() as usize).min(DENSITY_BINS - 1);
        let frac = (pos - j as f64).clamp(0.0, 1.0);
        self.cdf[j] + frac * (self.cdf[j + 1] - self.cdf[j])
    }

    pub fn inverse_cdf(&self, u: f64) -> f64 {
        // first bin whose upper CDF edge exceeds u
        let j = self.cdf[1..]
            .partition_point(|&c| c <= u)
            .min(DENSITY_BINS - 1);
        let (lo, hi) = (self.cdf[j], self.cdf[j + 1]);
        let frac = if hi > lo { (u - lo) / (hi - lo) } else { 0.0 };
        ((j as f64 + frac.clamp(0.0, 1.0)) * Self::width()).min(TAU.next_down())
    }
}

/// A disorder realization `ω = {ω^τ_x}` on a centred cube of sites.
///
/// Values are addressed by `(seed, site, coin)` through a counter-based
/// generator, so the phase at a given `(τ, x)` does not depend on the cube
/// radius it was sampled with.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseField {
    lattice: Lattice,
    radius: u32,
    seed: Option<u64>,
    distribution: PhaseDistribution,
    values: Vec<f64>,
}

const COORD_BITS: u32 = 20;

fn entry_key(site: &Site, coin: CoinIndex) -> u64 {
    let half = 1i64 << (COORD_BITS - 1);
    let mut key = 0u64;
    for axis in 0..crate::lattice::MAX_DIM {
        let c = site.coords().get(axis).copied().unwrap_or(0) as i64;
        debug_assert!(c.abs() < half);
        key = (key << COORD_BITS) | (c + half) as u64;
    }
    (key << 3) | coin.position() as u64
}

/// Independent draws for every `(τ, x)` with `|x| ≤ radius`.
pub fn sample_phases(
    lattice: Lattice,
    radius: u32,
    distribution: &PhaseDistribution,
    seed: u64,
) -> PhaseField {
    assert!(radius < 1 << (COORD_BITS - 2), "phase region too large");
    let region = Region::cube(lattice, radius);
    let coins = lattice.coins();
    let mut values = Vec::with_capacity(region.basis_len());
    for site in region.sites() {
        for &c in &coins {
            let u = uniform_at(seed, entry_key(site, c));
            values.push(distribution.inverse_cdf(u));
        }
    }
    PhaseField {
        lattice,
        radius,
        seed: Some(seed),
        distribution: distribution.clone(),
        values,
    }
}

impl PhaseField {
    pub fn zeros(lattice: Lattice, radius: u32) -> Self {
        let n = Region::cube(lattice, radius).basis_len();
        PhaseField {
            lattice,
            radius,
            seed: None,
            distribution: PhaseDistribution::DeterministicZero,
            values: vec![0.0; n],
        }
    }

    /// Field with explicit values in flat layout order over the cube.
    pub fn from_values(lattice: Lattice, radius: u32, values: Vec<f64>) -> Result<Self> {
        let n = Region::cube(lattice, radius).basis_len();
        if values.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: values.len(),
            });
        }
        Ok(PhaseField {
            lattice,
            radius,
            seed: None,
            distribution: PhaseDistribution::Uniform,
            values: values.into_iter().map(|v| v.rem_euclid(TAU)).collect(),
        })
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn distribution(&self) -> &PhaseDistribution {
        &self.distribution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn offset(&self, coin: CoinIndex, site: &Site) -> Result<usize> {
        let side = 2 * self.radius as usize + 1;
        if site.dim() != self.lattice.dim() || site.sup_norm() > self.radius {
            return Err(Error::Coverage {
                coin: coin.value(),
                site: site.to_string(),
            });
        }
        let pos = site.coords().iter().fold(0usize, |acc, &c| {
            acc * side + (c + self.radius as i32) as usize
        });
        Ok(pos * self.lattice.coin_dim() + coin.position())
    }

    /// `ω^τ_x`.
    pub fn get(&self, coin: CoinIndex, site: &Site) -> Result<f64> {
        Ok(self.values[self.offset(coin, site)?])
    }

    pub fn set(&mut self, coin: CoinIndex, site: &Site, phase: f64) -> Result<()> {
        let i = self.offset(coin, site)?;
        self.values[i] = phase.rem_euclid(TAU);
        self.seed = None;
        Ok(())
    }

    pub fn covers(&self, site: &Site) -> bool {
        site.sup_norm() <= self.radius
    }

    pub fn to_descriptor(&self, include_values: bool) -> PhaseFieldDescriptor {
        PhaseFieldDescriptor {
            d: self.lattice.dim(),
            radius: self.radius,
            seed: self.seed,
            distribution: self.distribution.clone(),
            values: if include_values || self.seed.is_none() {
                Some(self.values.clone())
            } else {
                None
            },
        }
    }

    pub fn from_descriptor(desc: &PhaseFieldDescriptor) -> Result<Self> {
        let lattice = Lattice::new(desc.d)?;
        match (&desc.values, desc.seed) {
            (_, Some(seed)) => {
                let field = sample_phases(lattice, desc.radius, &desc.distribution, seed);
                if let Some(v) = &desc.values {
                    if v != &field.values {
                        return Err(Error::Config(
                            "dumped phase values disagree with the seed".into(),
                        ));
                    }
                }
                Ok(field)
            }
            (Some(v), None) => {
                let mut f = PhaseField::from_values(lattice, desc.radius, v.clone())?;
                f.distribution = desc.distribution.clone();
                Ok(f)
            }
            (None, None) => Err(Error::Config(
                "phase field needs a seed or explicit values".into(),
            )),
        }
    }
}

/// JSON form of a [`PhaseField`]: values are regenerated from the seed and
/// only optionally dumped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseFieldDescriptor {
    pub d: usize,
    pub radius: u32,
    pub seed: Option<u64>,
    pub distribution: PhaseDistribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

/// `C_ω(x)`: row `τ` of `C` multiplied by `e^{iω^τ_{x+r(τ)}}`.
pub fn decorate_coin(coin: &CoinMatrix, field: &PhaseField, site: &Site) -> Result<CoinMatrix> {
    let lattice = coin.lattice();
    let n = coin.dim();
    let coins = lattice.coins();
    let phases = coins
        .iter()
        .map(|&t| field.get(t, &(*site + lattice.jump(t))).map(|w| C64::from_polar(1.0, w)))
        .collect::<Result<Vec<_>>>()?;
    let m = Mat::from_fn(n, n, |i, j| phases[i] * coin.matrix()[(i, j)]);
    CoinMatrix::new(lattice, m)
}
