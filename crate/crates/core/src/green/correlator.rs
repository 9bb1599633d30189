use std::ops::RangeInclusive;

use faer::Mat;
use serde::{Deserialize, Serialize};

use super::fit::DecayFit;
use super::sweep::{monte_carlo, LabelPair, SweepResult};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::walk::WalkOperator;
use crate::C64;

/// Eigenvalues closer than this in angle share a spectral projection.
pub const CLUSTER_TOL: f64 = 1e-12;

/// Eigenvector overlap above which two clusters are merged.
const OVERLAP_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
struct Block {
    vectors: Mat<C64>,
    eigenvalues: Vec<C64>,
    groups: Vec<Vec<usize>>,
}

/// Orthonormal eigenbasis of a finite unitary, grouped into spectral
/// projections, computed block by block over the connected components of
/// the transition graph.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    blocks: Vec<Block>,
    /// `(block, local index)` of each basis state.
    place: Vec<(usize, usize)>,
}

fn find(p: &mut [usize], mut i: usize) -> usize {
    while p[i] != i {
        p[i] = p[p[i]];
        i = p[i];
    }
    i
}

fn decompose_block(m: &Mat<C64>) -> Result<Block> {
    let n = m.nrows();
    let evd = m.eigen().map_err(|e| Error::Diagonalization(format!("{e:?}")))?;
    let eigenvalues: Vec<C64> = (0..n).map(|k| evd.S()[k]).collect();
    let mut vectors = evd.U().to_owned();
    for k in 0..n {
        let nrm = (0..n).map(|i| vectors[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if !(nrm > 0.0 && nrm.is_finite()) {
            return Err(Error::Diagonalization(format!("degenerate eigenvector {k}")));
        }
        for i in 0..n {
            vectors[(i, k)] /= nrm;
        }
    }

    // cluster by angle, including across the branch cut
    let mut order: Vec<usize> = (0..n).collect();
    let angle = |k: usize| eigenvalues[k].arg();
    order.sort_by(|&a, &b| angle(a).total_cmp(&angle(b)));
    let mut parent: Vec<usize> = (0..n).collect();
    let close = |a: usize, b: usize| (eigenvalues[a] - eigenvalues[b]).norm() <= CLUSTER_TOL;
    for w in order.windows(2) {
        if close(w[0], w[1]) {
            let (ra, rb) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    if n > 1 && close(order[0], order[n - 1]) {
        let (ra, rb) = (find(&mut parent, order[0]), find(&mut parent, order[n - 1]));
        parent[ra.max(rb)] = ra.min(rb);
    }

    // nearly parallel eigenvectors belong to one projection
    for a in 0..n {
        for b in a + 1..n {
            if find(&mut parent, a) == find(&mut parent, b) {
                continue;
            }
            let ov: C64 = (0..n).map(|i| vectors[(i, a)].conj() * vectors[(i, b)]).sum();
            if ov.norm() > OVERLAP_TOL {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut gid = vec![usize::MAX; n];
    for k in 0..n {
        let r = find(&mut parent, k);
        if gid[r] == usize::MAX {
            gid[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[gid[r]].push(k);
    }

    // orthonormalize within each group (two passes of modified Gram-Schmidt)
    for g in groups.iter().filter(|g| g.len() > 1) {
        for _ in 0..2 {
            for (p, &k) in g.iter().enumerate() {
                for &q in &g[..p] {
                    let ov: C64 = (0..n).map(|i| vectors[(i, q)].conj() * vectors[(i, k)]).sum();
                    for i in 0..n {
                        let vq = vectors[(i, q)];
                        vectors[(i, k)] -= ov * vq;
                    }
                }
                let nrm = (0..n).map(|i| vectors[(i, k)].norm_sqr()).sum::<f64>().sqrt();
                if nrm < 1e-8 {
                    return Err(Error::Diagonalization("eigenvectors are linearly dependent".into()));
                }
                for i in 0..n {
                    vectors[(i, k)] /= nrm;
                }
            }
        }
    }
    Ok(Block {
        vectors,
        eigenvalues,
        groups,
    })
}

impl SpectralDecomposition {
    pub fn new(op: &WalkOperator) -> Result<Self> {
        let comps = op.components();
        let mut place = vec![(0, 0); op.dim()];
        let mut blocks = Vec::with_capacity(comps.len());
        for (b, members) in comps.members.iter().enumerate() {
            for (k, &i) in members.iter().enumerate() {
                place[i] = (b, k);
            }
            blocks.push(decompose_block(&op.dense_block(members))?);
        }
        Ok(SpectralDecomposition { blocks, place })
    }

    pub fn eigenvalues(&self) -> Vec<C64> {
        self.blocks.iter().flat_map(|b| b.eigenvalues.iter().copied()).collect()
    }

    /// Number of distinct spectral projections.
    pub fn projection_count(&self) -> usize {
        self.blocks.iter().map(|b| b.groups.len()).sum()
    }

    /// `Σ_j |⟨a|P_j|b⟩|` over the spectral projections `P_j`.
    pub fn correlator(&self, a: usize, b: usize) -> f64 {
        let ((ba, ia), (bb, ib)) = (self.place[a], self.place[b]);
        if ba != bb {
            return 0.0;
        }
        let blk = &self.blocks[ba];
        blk.groups
            .iter()
            .map(|g| {
                g.iter()
                    .map(|&k| blk.vectors[(ia, k)] * blk.vectors[(ib, k)].conj())
                    .sum::<C64>()
                    .norm()
            })
            .sum()
    }
}

/// Eigenvalues of a finite unitary, block by block.
pub fn spectrum(op: &WalkOperator) -> Result<Vec<C64>> {
    let comps = op.components();
    let mut out = Vec::with_capacity(op.dim());
    for members in &comps.members {
        let ev = op
            .dense_block(members)
            .eigenvalues()
            .map_err(|e| Error::Diagonalization(format!("{e:?}")))?;
        out.extend(ev);
    }
    Ok(out)
}

/// `sup_{‖f‖_∞ ≤ 1} |⟨from|f(U)|to⟩| = Σ_j |⟨from|P_j|to⟩|`.
pub fn eigenfunction_correlator(
    op: &WalkOperator,
    from: &crate::lattice::BasisLabel,
    to: &crate::lattice::BasisLabel,
) -> Result<f64> {
    let (a, b) = (op.basis().require(from)?, op.basis().require(to)?);
    Ok(SpectralDecomposition::new(op)?.correlator(a, b))
}

fn default_resamples() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorConfig {
    pub samples: usize,
    pub pairs: Vec<LabelPair>,
    pub seed: u64,
    /// Distances used for the fit; defaults to `2 ..= L/2`.
    #[serde(default)]
    pub fit_range: Option<(u32, u32)>,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
}

impl CorrelatorConfig {
    pub fn new(samples: usize, pairs: Vec<LabelPair>, seed: u64) -> Self {
        CorrelatorConfig {
            samples,
            pairs,
            seed,
            fit_range: None,
            bootstrap_resamples: default_resamples(),
        }
    }

    pub fn range_for(&self, l: u32) -> RangeInclusive<u32> {
        let (a, b) = self.fit_range.unwrap_or((2, l / 2));
        a..=b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CorrelatorOutcome {
    Decay { fit: DecayFit, gamma_ci: (f64, f64) },
    /// Every estimate beyond `radius` is exactly zero.
    CompactSupport { radius: u32 },
    NoFit { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorResult {
    pub sweep: SweepResult,
    pub outcome: CorrelatorOutcome,
}

/// Monte Carlo estimate of `E[Σ_j |⟨τ,x|P_j|σ,y⟩|]` per distance and its
/// exponential fit.
pub fn correlator_decay_experiment(model: &Model, cfg: &CorrelatorConfig) -> Result<CorrelatorResult> {
    if cfg.samples == 0 || cfg.pairs.is_empty() {
        return Err(Error::Config("correlator run needs samples and pairs".into()));
    }
    let cells = cfg.pairs.len();
    let task = |seed: u64| -> Result<Vec<f64>> {
        let op = model.realization(seed)?;
        let b = op.basis();
        let idx = cfg
            .pairs
            .iter()
            .map(|p| Ok((b.require(&p.row)?, b.require(&p.col)?)))
            .collect::<Result<Vec<_>>>()?;
        let sd = SpectralDecomposition::new(&op)?;
        Ok(idx.into_iter().map(|(i, j)| sd.correlator(i, j)).collect())
    };
    let samples = monte_carlo(cfg.samples, cfg.seed, cells, task)?;
    let keys = cfg.pairs.iter().map(|p| (*p, None)).collect();
    let sweep = SweepResult::assemble(samples, keys, cfg.bootstrap_resamples, cfg.seed);
    let range = cfg.range_for(model.l());
    let radius = sweep
        .distances
        .iter()
        .filter(|d| d.mean > 0.0)
        .map(|d| d.distance)
        .max()
        .unwrap_or(0);
    let outcome = if sweep.distances.iter().any(|d| d.distance > radius) && radius < *range.start() {
        CorrelatorOutcome::CompactSupport { radius }
    } else {
        match sweep.fit(range.clone()) {
            Ok(fit) => CorrelatorOutcome::Decay {
                fit,
                gamma_ci: sweep.gamma_interval(range, cfg.bootstrap_resamples, 0.95, cfg.seed),
            },
            Err(e) => CorrelatorOutcome::NoFit { reason: e.to_string() },
        }
    };
    Ok(CorrelatorResult { sweep, outcome })
}
