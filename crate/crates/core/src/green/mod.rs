//! Green functions `G(x, y; z) = ⟨τ,x|(U − z)^{−1}|σ,y⟩` of finite-volume
//! walks, fractional-moment sweeps, spectral-gap probes and eigenfunction
//! correlators.

mod correlator;
mod fit;
mod gap;
mod sweep;

use std::f64::consts::TAU;
use std::fmt;

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::BasisLabel;
use crate::walk::{Components, WalkOperator};
use crate::C64;

pub use correlator::{
    correlator_decay_experiment, eigenfunction_correlator, CorrelatorConfig, CorrelatorOutcome, CorrelatorResult,
    SpectralDecomposition, CLUSTER_TOL,
};
pub use fit::{decay_fit, DecayFit, MIN_FIT_POINTS};
pub use gap::{spectral_gap_probe, GapEstimate, SpectrumMethod};
pub(crate) use sweep::monte_carlo;
pub use sweep::{
    axis_pairs, fractional_moment_sweep, moment_vs_volume, CellEstimate, DistanceEstimate, FractionalMomentConfig,
    LabelPair, SweepResult, VolumeRow,
};

/// Smallest admissible `||z| − 1|`.
pub const CIRCLE_MARGIN: f64 = 1e-12;

/// Operators up to this dimension are factorized densely.
pub const DENSE_LIMIT: usize = 512;

/// A spectral parameter strictly off the unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct SpectralParameter(C64);

impl TryFrom<[f64; 2]> for SpectralParameter {
    type Error = Error;
    fn try_from(v: [f64; 2]) -> Result<Self> {
        SpectralParameter::new(C64::new(v[0], v[1]))
    }
}

impl From<SpectralParameter> for [f64; 2] {
    fn from(z: SpectralParameter) -> Self {
        [z.0.re, z.0.im]
    }
}

impl SpectralParameter {
    pub fn new(z: C64) -> Result<Self> {
        if !z.re.is_finite() || !z.im.is_finite() || (z.norm() - 1.0).abs() < CIRCLE_MARGIN {
            return Err(Error::OnUnitCircle(format!("{z}")));
        }
        Ok(SpectralParameter(z))
    }

    pub fn polar(radius: f64, angle: f64) -> Result<Self> {
        SpectralParameter::new(C64::from_polar(radius, angle))
    }

    pub fn value(&self) -> C64 {
        self.0
    }

    /// `||z| − 1|`, a lower bound on the distance to the spectrum of any
    /// unitary.
    pub fn circle_distance(&self) -> f64 {
        (self.0.norm() - 1.0).abs()
    }

    /// `radii × angles` with the angles `2πk/angles`.
    pub fn grid(radii: &[f64], angles: usize) -> Result<Vec<Self>> {
        let mut out = Vec::with_capacity(radii.len() * angles);
        for &r in radii {
            for k in 0..angles {
                out.push(SpectralParameter::polar(r, TAU * k as f64 / angles as f64)?);
            }
        }
        Ok(out)
    }

    /// `|z| ∈ {1 − 10^{−3}, 1 + 10^{−3}}` at 8 equally spaced angles.
    pub fn default_grid() -> Vec<Self> {
        SpectralParameter::grid(&[1.0 - 1e-3, 1.0 + 1e-3], 8).expect("grid is off the circle")
    }
}

impl fmt::Display for SpectralParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Dense up to [`DENSE_LIMIT`], sparse above.
    Auto,
    Dense,
    Sparse,
}

enum Factor {
    Dense(PartialPivLu<C64>),
    Sparse(Lu<usize, C64>),
}

/// A factorization of `U − z` with iterative refinement.
pub struct Resolvent<'a> {
    op: &'a WalkOperator,
    z: SpectralParameter,
    factor: Factor,
    components: Components,
    tol: f64,
}

impl<'a> Resolvent<'a> {
    pub fn new(op: &'a WalkOperator, z: SpectralParameter) -> Result<Self> {
        Resolvent::with_solver(op, z, SolverKind::Auto)
    }

    pub fn with_solver(op: &'a WalkOperator, z: SpectralParameter, kind: SolverKind) -> Result<Self> {
        let n = op.dim();
        let zv = z.value();
        let dense = match kind {
            SolverKind::Auto => n <= DENSE_LIMIT,
            SolverKind::Dense => true,
            SolverKind::Sparse => false,
        };
        let factor = if dense {
            let mut m = op.to_dense();
            for i in 0..n {
                m[(i, i)] -= zv;
            }
            Factor::Dense(m.partial_piv_lu())
        } else {
            let mut t: Vec<Triplet<usize, usize, C64>> =
                op.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
            t.extend((0..n).map(|i| Triplet::new(i, i, -zv)));
            let m = SparseColMat::<usize, C64>::try_new_from_triplets(n, n, &t)
                .map_err(|e| Error::Internal(format!("sparse assembly: {e:?}")))?;
            Factor::Sparse(m.sp_lu().map_err(|e| Error::SolverBreakdown {
                residual: f64::INFINITY,
                detail: format!("sparse LU: {e:?}"),
            })?)
        };
        Ok(Resolvent {
            op,
            z,
            factor,
            components: op.components(),
            tol: 1e-10 / (1.0 + zv.norm()),
        })
    }

    pub fn z(&self) -> SpectralParameter {
        self.z
    }

    /// Relative residual accepted after refinement.
    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    fn raw_solve(&self, rhs: &Mat<C64>) -> Mat<C64> {
        match &self.factor {
            Factor::Dense(lu) => lu.solve(rhs),
            Factor::Sparse(lu) => lu.solve(rhs),
        }
    }

    /// `b − (U − z) x`.
    fn residual(&self, b: &[C64], x: &[C64]) -> Result<Vec<C64>> {
        let ux = self.op.apply(x)?;
        let z = self.z.value();
        Ok(b.iter()
            .zip(ux.iter().zip(x))
            .map(|(bi, (uxi, xi))| bi - (uxi - z * xi))
            .collect())
    }

    /// Solves `(U − z) w = b` for each column of `rhs`.
    pub fn solve_many(&self, rhs: &[Vec<C64>]) -> Result<Vec<Vec<C64>>> {
        let n = self.op.dim();
        if rhs.is_empty() {
            return Ok(Vec::new());
        }
        for b in rhs {
            if b.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: b.len(),
                });
            }
        }
        let b = Mat::from_fn(n, rhs.len(), |i, k| rhs[k][i]);
        let x = self.raw_solve(&b);
        let mut out = Vec::with_capacity(rhs.len());
        for (k, bk) in rhs.iter().enumerate() {
            let mut xk: Vec<C64> = (0..n).map(|i| x[(i, k)]).collect();
            self.refine(bk, &mut xk)?;
            out.push(xk);
        }
        Ok(out)
    }

    pub fn solve(&self, rhs: &[C64]) -> Result<Vec<C64>> {
        Ok(self.solve_many(&[rhs.to_vec()])?.remove(0))
    }

    fn refine(&self, b: &[C64], x: &mut [C64]) -> Result<()> {
        let bnorm = norm(b);
        if bnorm == 0.0 {
            x.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            return Ok(());
        }
        let mut rel = f64::INFINITY;
        for _ in 0..4 {
            let r = self.residual(b, x)?;
            rel = norm(&r) / bnorm;
            if !rel.is_finite() {
                break;
            }
            if rel <= self.tol {
                return Ok(());
            }
            let n = r.len();
            let dx = self.raw_solve(&Mat::from_fn(n, 1, |i, _| r[i]));
            for (i, xi) in x.iter_mut().enumerate() {
                *xi += dx[(i, 0)];
            }
        }
        Err(Error::SolverBreakdown {
            residual: rel,
            detail: format!("refinement stalled at z = {}", self.z),
        })
    }

    /// `(U − z)^{−1} e_j`, with exact zeros outside the connected component
    /// of `j`.
    pub fn columns(&self, js: &[usize]) -> Result<Vec<Vec<C64>>> {
        let n = self.op.dim();
        for &j in js {
            if j >= n {
                return Err(Error::IndexOutOfRange { index: j, len: n });
            }
        }
        let rhs: Vec<Vec<C64>> = js
            .iter()
            .map(|&j| {
                let mut e = vec![C64::new(0.0, 0.0); n];
                e[j] = C64::new(1.0, 0.0);
                e
            })
            .collect();
        let mut cols = self.solve_many(&rhs)?;
        for (col, &j) in cols.iter_mut().zip(js) {
            for (i, v) in col.iter_mut().enumerate() {
                if !self.components.same(i, j) {
                    *v = C64::new(0.0, 0.0);
                }
            }
        }
        Ok(cols)
    }

    /// `⟨row|(U − z)^{−1}|col⟩`.
    pub fn entry(&self, row: &BasisLabel, col: &BasisLabel) -> Result<C64> {
        let basis = self.op.basis();
        let (i, j) = (basis.require(row)?, basis.require(col)?);
        if !self.components.same(i, j) {
            return Ok(C64::new(0.0, 0.0));
        }
        Ok(self.columns(&[j])?[0][i])
    }
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// `G(x, y; z) = ⟨τ,x|(U − z)^{−1}|σ,y⟩` with `row = (τ,x)`, `col = (σ,y)`.
pub fn green(op: &WalkOperator, z: SpectralParameter, row: &BasisLabel, col: &BasisLabel) -> Result<C64> {
    Resolvent::new(op, z)?.entry(row, col)
}

/// Dense `(U − z)^{−1}` by LU with refinement, column by column.
pub fn dense_resolvent(op: &WalkOperator, z: SpectralParameter) -> Result<Mat<C64>> {
    let r = Resolvent::with_solver(op, z, SolverKind::Dense)?;
    let n = op.dim();
    let cols = r.columns(&(0..n).collect::<Vec<_>>())?;
    Ok(Mat::from_fn(n, n, |i, j| cols[j][i]))
}
