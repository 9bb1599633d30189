use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{decay_fit, DecayFit};
use super::{Resolvent, SpectralParameter};
use crate::error::{Error, Result};
use crate::lattice::{BasisLabel, Lattice};
use crate::model::Model;
use crate::seeding::derive_seed;
use crate::stats::{bootstrap_interval, bootstrap_mean_ci, mean, median, standard_error, trimmed_mean};

/// `(row, col) = ((τ, x), (σ, y))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelPair {
    pub row: BasisLabel,
    pub col: BasisLabel,
}

impl LabelPair {
    pub fn new(row: BasisLabel, col: BasisLabel) -> Self {
        LabelPair { row, col }
    }

    /// `|x − y|` in the sup norm.
    pub fn distance(&self) -> u32 {
        self.row.site.sup_dist(&self.col.site)
    }
}

/// All pairs `((τ, ±n e₁), (σ, 0))` for `n` in `distances` and all coins.
pub fn axis_pairs(lattice: Lattice, distances: RangeInclusive<u32>) -> Vec<LabelPair> {
    let mut out = Vec::new();
    for n in distances {
        for sign in [1, -1] {
            let x = lattice.axis_point(0, sign * n as i32);
            for tau in lattice.coins() {
                for sigma in lattice.coins() {
                    out.push(LabelPair::new(
                        BasisLabel::new(tau, x),
                        BasisLabel::new(sigma, lattice.origin()),
                    ));
                }
            }
        }
    }
    out
}

fn default_resamples() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalMomentConfig {
    pub s: f64,
    pub samples: usize,
    pub z_grid: Vec<SpectralParameter>,
    pub pairs: Vec<LabelPair>,
    pub seed: u64,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
}

impl FractionalMomentConfig {
    pub fn new(s: f64, samples: usize, pairs: Vec<LabelPair>, seed: u64) -> Self {
        FractionalMomentConfig {
            s,
            samples,
            z_grid: SpectralParameter::default_grid(),
            pairs,
            seed,
            bootstrap_resamples: default_resamples(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::Config(format!("s must lie in (0, 1), got {}", self.s)));
        }
        if self.samples == 0 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        if self.z_grid.is_empty() || self.pairs.is_empty() {
            return Err(Error::Config("z grid and pair list must be nonempty".into()));
        }
        if let Some(p) = self.pairs.iter().find(|p| p.distance() < 2) {
            return Err(Error::Config(format!(
                "pair {} / {} is at distance {} < 2",
                p.row,
                p.col,
                p.distance()
            )));
        }
        Ok(())
    }
}

/// Statistics of one `(pair, z)` cell over the realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEstimate {
    pub pair: LabelPair,
    pub z: Option<SpectralParameter>,
    pub distance: u32,
    pub mean: f64,
    pub median: f64,
    pub trimmed_mean: f64,
    pub se: f64,
    pub n: usize,
}

/// The largest cell mean at one distance, with its spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    pub distance: u32,
    pub mean: f64,
    pub median: f64,
    pub trimmed_mean: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    /// Index into [`SweepResult::cells`] of the maximizing cell.
    pub cell: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<CellEstimate>,
    pub distances: Vec<DistanceEstimate>,
    pub task_seeds: Vec<u64>,
    pub failures: usize,
    pub first_failure: Option<String>,
    /// `values[cell][k]`: the statistic in the `k`-th successful realization.
    #[serde(skip)]
    pub values: Vec<Vec<f64>>,
}

pub(crate) struct Samples {
    pub values: Vec<Vec<f64>>,
    pub seeds: Vec<u64>,
    pub failures: usize,
    pub first_failure: Option<String>,
}

/// Runs `task(seed_i)` for `i < samples` with `seed_i = derive_seed(master, i)`.
/// Each task returns one value per cell. Numerical failures are tolerated up
/// to 1% of the samples; input errors abort at once.
pub(crate) fn monte_carlo<F>(samples: usize, master: u64, cells: usize, task: F) -> Result<Samples>
where
    F: Fn(u64) -> Result<Vec<f64>> + Sync,
{
    let seeds: Vec<u64> = (0..samples as u64).map(|i| derive_seed(master, i)).collect();
    let outputs: Vec<Result<Vec<f64>>> = seeds.par_iter().map(|&s| task(s)).collect();
    let mut values = vec![Vec::with_capacity(samples); cells];
    let mut failures = 0;
    let mut first_failure = None;
    for out in outputs {
        match out {
            Ok(v) => {
                for (c, x) in v.into_iter().enumerate() {
                    values[c].push(x);
                }
            }
            Err(e) if e.is_numerical() => {
                failures += 1;
                first_failure.get_or_insert_with(|| e.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    if failures * 100 > samples {
        return Err(Error::SampleFailures {
            failed: failures,
            total: samples,
            first: first_failure.unwrap_or_default(),
        });
    }
    Ok(Samples {
        values,
        seeds,
        failures,
        first_failure,
    })
}

impl SweepResult {
    pub(crate) fn assemble(
        samples: Samples,
        keys: Vec<(LabelPair, Option<SpectralParameter>)>,
        resamples: usize,
        seed: u64,
    ) -> Self {
        let cells: Vec<CellEstimate> = keys
            .into_iter()
            .zip(&samples.values)
            .map(|((pair, z), v)| CellEstimate {
                pair,
                z,
                distance: pair.distance(),
                mean: mean(v),
                median: median(v),
                trimmed_mean: trimmed_mean(v, 0.05),
                se: standard_error(v),
                n: v.len(),
            })
            .collect();
        let mut best: BTreeMap<u32, usize> = BTreeMap::new();
        for (i, c) in cells.iter().enumerate() {
            let e = best.entry(c.distance).or_insert(i);
            if c.mean > cells[*e].mean {
                *e = i;
            }
        }
        let distances = best
            .into_iter()
            .map(|(distance, i)| {
                let c = &cells[i];
                let (ci_low, ci_high) = bootstrap_mean_ci(&samples.values[i], resamples, 0.95, seed ^ distance as u64);
                DistanceEstimate {
                    distance,
                    mean: c.mean,
                    median: c.median,
                    trimmed_mean: c.trimmed_mean,
                    se: c.se,
                    ci_low,
                    ci_high,
                    n: c.n,
                    cell: i,
                }
            })
            .collect();
        SweepResult {
            cells,
            distances,
            task_seeds: samples.seeds,
            failures: samples.failures,
            first_failure: samples.first_failure,
            values: samples.values,
        }
    }

    pub fn estimate_at(&self, distance: u32) -> Option<&DistanceEstimate> {
        self.distances.iter().find(|d| d.distance == distance)
    }

    /// Decay fit of the per-distance means over `range`.
    pub fn fit(&self, range: RangeInclusive<u32>) -> Result<DecayFit> {
        let pts: Vec<(u32, f64)> = self
            .distances
            .iter()
            .filter(|d| range.contains(&d.distance))
            .map(|d| (d.distance, d.mean))
            .collect();
        decay_fit(&pts)
    }

    /// Percentile bootstrap interval for `γ` over `range`, resampling whole
    /// realizations and redoing the per-distance maximization.
    pub fn gamma_interval(&self, range: RangeInclusive<u32>, resamples: usize, level: f64, seed: u64) -> (f64, f64) {
        let n = self.values.first().map_or(0, Vec::len);
        let by_distance: BTreeMap<u32, Vec<usize>> = self
            .cells
            .iter()
            .enumerate()
            .filter(|(_, c)| range.contains(&c.distance))
            .fold(BTreeMap::new(), |mut m, (i, c)| {
                m.entry(c.distance).or_insert_with(Vec::new).push(i);
                m
            });
        bootstrap_interval(n, resamples, level, seed, |idx| {
            let pts: Vec<(u32, f64)> = by_distance
                .iter()
                .map(|(&d, cells)| {
                    let m = cells
                        .iter()
                        .map(|&c| idx.iter().map(|&k| self.values[c][k]).sum::<f64>())
                        .fold(f64::NEG_INFINITY, f64::max);
                    (d, m / idx.len() as f64)
                })
                .collect();
            decay_fit(&pts).map_or(f64::NAN, |f| f.gamma)
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("distance,mean,median,trimmed_mean,se,ci_low,ci_high,n\n");
        for d in &self.distances {
            s.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}\n",
                d.distance, d.mean, d.median, d.trimmed_mean, d.se, d.ci_low, d.ci_high, d.n
            ));
        }
        s
    }

    pub fn cells_csv(&self) -> String {
        let mut s = String::from("row,col,z_re,z_im,distance,mean,median,trimmed_mean,se,n\n");
        for c in &self.cells {
            let (zr, zi) = c.z.map_or((f64::NAN, f64::NAN), |z| (z.value().re, z.value().im));
            s.push_str(&format!(
                "\"{}\",\"{}\",{zr:.6},{zi:.6},{},{:.12e},{:.12e},{:.12e},{:.12e},{}\n",
                c.pair.row, c.pair.col, c.distance, c.mean, c.median, c.trimmed_mean, c.se, c.n
            ));
        }
        s
    }
}

/// Monte Carlo estimates of `E|G(x, y; z)|^s` for every pair and `z`.
pub fn fractional_moment_sweep(cfg: &FractionalMomentConfig, model: &Model) -> Result<SweepResult> {
    cfg.validate()?;
    let mut cols: Vec<BasisLabel> = cfg.pairs.iter().map(|p| p.col).collect();
    cols.sort();
    cols.dedup();
    let nz = cfg.z_grid.len();
    let cells = cfg.pairs.len() * nz;
    let task = |seed: u64| -> Result<Vec<f64>> {
        let op = model.realization(seed)?;
        let basis = op.basis();
        let col_idx = cols.iter().map(|c| basis.require(c)).collect::<Result<Vec<_>>>()?;
        let rows = cfg
            .pairs
            .iter()
            .map(|p| Ok((basis.require(&p.row)?, cols.binary_search(&p.col).expect("listed"))))
            .collect::<Result<Vec<_>>>()?;
        let mut out = vec![0.0; cells];
        for (k, &z) in cfg.z_grid.iter().enumerate() {
            let r = Resolvent::new(&op, z)?;
            let g = r.columns(&col_idx)?;
            for (p, &(i, c)) in rows.iter().enumerate() {
                out[p * nz + k] = g[c][i].norm().powf(cfg.s);
            }
        }
        Ok(out)
    };
    let samples = monte_carlo(cfg.samples, cfg.seed, cells, task)?;
    let keys = cfg
        .pairs
        .iter()
        .flat_map(|p| cfg.z_grid.iter().map(move |z| (*p, Some(*z))))
        .collect();
    Ok(SweepResult::assemble(samples, keys, cfg.bootstrap_resamples, cfg.seed))
}

/// One row of the finite-volume diagnostic: `E|G^Λ(x, y; z)|^s` at
/// `|x − y| = ⌊L/2⌋` and `|z| = 1 − L^{−β}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeRow {
    pub l: u32,
    pub beta: f64,
    pub eta: f64,
    pub distance: u32,
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

pub fn moment_vs_volume(
    model: &Model,
    sizes: &[u32],
    betas: &[f64],
    s: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<VolumeRow>> {
    let mut rows = Vec::new();
    for &l in sizes {
        let m = model.with_l(l)?;
        let distance = (l / 2).max(2);
        for &beta in betas {
            let eta = (l as f64).powf(-beta);
            let cfg = FractionalMomentConfig {
                s,
                samples,
                z_grid: vec![SpectralParameter::polar(1.0 - eta, 0.0)?],
                pairs: axis_pairs(m.lattice(), distance..=distance),
                seed,
                bootstrap_resamples: 200,
            };
            let r = fractional_moment_sweep(&cfg, &m)?;
            let d = &r.distances[0];
            rows.push(VolumeRow {
                l,
                beta,
                eta,
                distance,
                mean: d.mean,
                se: d.se,
                n: d.n,
            });
        }
    }
    Ok(rows)
}
