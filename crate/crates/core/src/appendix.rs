//! Numerical checks of the functional-calculus machinery: Poisson-kernel
//! reconstruction of `f(U)`, the second-moment relation between `E|G|²`
//! and fractional moments, and the conditional moment bound over two
//! distinguished phases.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{monte_carlo, LabelPair, Resolvent, SpectralParameter};
use crate::lattice::{BasisLabel, Site};
use crate::model::Model;
use crate::seeding::stream;
use crate::stats::{mean, median};
use crate::C64;

/// Test functions on the unit circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestFunction {
    One,
    Z,
    Z2,
    RealPart,
    /// Smoothed indicator of the arc `|θ − center| ≤ half_width`, with
    /// `tanh` edges of width `smoothing`.
    SmoothArc { center: f64, half_width: f64, smoothing: f64 },
    /// Values at `θ_k = 2πk/n`, interpolated linearly.
    Tabulated { values: Vec<[f64; 2]> },
}

impl TestFunction {
    pub fn eval(&self, theta: f64) -> C64 {
        match self {
            TestFunction::One => C64::new(1.0, 0.0),
            TestFunction::Z => C64::from_polar(1.0, theta),
            TestFunction::Z2 => C64::from_polar(1.0, 2.0 * theta),
            TestFunction::RealPart => C64::new(theta.cos(), 0.0),
            TestFunction::SmoothArc {
                center,
                half_width,
                smoothing,
            } => {
                let d = (theta - center + PI).rem_euclid(TAU) - PI;
                let v = 0.5 * (((half_width - d.abs()) / smoothing).tanh() + 1.0);
                C64::new(v, 0.0)
            }
            TestFunction::Tabulated { values } => {
                let n = values.len();
                let pos = theta.rem_euclid(TAU) / TAU * n as f64;
                let k = (pos.floor() as usize).min(n - 1);
                let t = pos - k as f64;
                let a = C64::new(values[k][0], values[k][1]);
                let b = C64::new(values[(k + 1) % n][0], values[(k + 1) % n][1]);
                a + (b - a) * t
            }
        }
    }

    /// `f ≥ 0` on the circle.
    pub fn is_nonnegative(&self) -> bool {
        match self {
            TestFunction::One | TestFunction::SmoothArc { .. } => true,
            TestFunction::Tabulated { values } => values.iter().all(|v| v[1] == 0.0 && v[0] >= 0.0),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonConfig {
    pub r: f64,
    pub grid: usize,
    pub function: TestFunction,
}

impl PoissonConfig {
    pub fn new(r: f64, grid: usize, function: TestFunction) -> Result<Self> {
        let c = PoissonConfig { r, grid, function };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r < 1.0) {
            return Err(Error::Config(format!("Poisson radius must lie in (0, 1), got {}", self.r)));
        }
        if self.grid < 64 || (self.grid as f64) * (1.0 - self.r) < 64.0 * (1.0 - 1e-12) {
            return Err(Error::Config(format!(
                "θ grid of {} points cannot resolve r = {} (need at least max(64, 64/(1 − r)))",
                self.grid, self.r
            )));
        }
        if let TestFunction::Tabulated { values } = &self.function {
            if values.is_empty() {
                return Err(Error::Config("tabulated test function is empty".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoissonRoute {
    /// Integrand `Σ_k ψ_k(a) conj ψ_k(b) / |λ_k − re^{iθ}|²` from one
    /// diagonalization.
    Spectral,
    /// `[(U − w)^{−1} ((U − w)^{−1})^*]_{ab}` by an LU solve at every node.
    Resolvent,
}

fn check_unitary(u: MatRef<'_, C64>) -> Result<()> {
    if u.nrows() != u.ncols() {
        return Err(Error::DimensionMismatch {
            expected: u.nrows(),
            got: u.ncols(),
        });
    }
    let defect = crate::coin::unitarity_defect(u);
    if defect > 1e-10 {
        return Err(Error::NotUnitary { defect });
    }
    Ok(())
}

/// Eigenpairs of a unitary with orthonormal eigenvectors.
struct Eig {
    values: Vec<C64>,
    vectors: Mat<C64>,
}

fn unitary_eig(u: MatRef<'_, C64>) -> Result<Eig> {
    let n = u.nrows();
    let evd = u.eigen().map_err(|e| Error::Diagonalization(format!("{e:?}")))?;
    let values = (0..n).map(|k| evd.S()[k]).collect();
    let mut vectors = evd.U().to_owned();
    // Gram-Schmidt guards against near-degenerate pairs
    for k in 0..n {
        for q in 0..k {
            let ov: C64 = (0..n).map(|i| vectors[(i, q)].conj() * vectors[(i, k)]).sum();
            for i in 0..n {
                let vq = vectors[(i, q)];
                vectors[(i, k)] -= ov * vq;
            }
        }
        let nrm = (0..n).map(|i| vectors[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        for i in 0..n {
            vectors[(i, k)] /= nrm;
        }
    }
    Ok(Eig { values, vectors })
}

/// `[(U − w)^{−1}(U^{−1} − w̄)^{−1}]_{ab}` at `w = r e^{iθ}`.
pub fn poisson_integrand(u: MatRef<'_, C64>, a: usize, b: usize, r: f64, theta: f64) -> Result<C64> {
    check_unitary(u)?;
    let n = u.nrows();
    let w = C64::from_polar(r, theta);
    // rows a, b of A = (U − w)^{−1} are conjugates of columns of A^* = (U^* − w̄)^{−1}
    let mut m = u.adjoint().to_owned();
    for i in 0..n {
        m[(i, i)] -= w.conj();
    }
    let rhs = Mat::from_fn(n, 2, |i, k| C64::new(if i == [a, b][k] { 1.0 } else { 0.0 }, 0.0));
    let y = m.partial_piv_lu().solve(&rhs);
    Ok((0..n).map(|i| y[(i, 0)].conj() * y[(i, 1)]).sum())
}

/// Trapezoidal approximation of
/// `(1 − r²)/2π ∫ [(U − re^{iθ})^{−1}(U^{−1} − re^{−iθ})^{−1}]_{ab} f(e^{iθ}) dθ`.
pub fn poisson_reconstruct(
    u: MatRef<'_, C64>,
    a: usize,
    b: usize,
    cfg: &PoissonConfig,
    route: PoissonRoute,
) -> Result<C64> {
    cfg.validate()?;
    check_unitary(u)?;
    let n = u.nrows();
    for i in [a, b] {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
    }
    let h = TAU / cfg.grid as f64;
    let scale = (1.0 - cfg.r * cfg.r) / TAU * h;
    let nodes = (0..cfg.grid).map(|k| h * k as f64);
    match route {
        PoissonRoute::Spectral => {
            let e = unitary_eig(u)?;
            let weights: Vec<C64> = (0..n).map(|k| e.vectors[(a, k)] * e.vectors[(b, k)].conj()).collect();
            let mut acc = C64::new(0.0, 0.0);
            for theta in nodes {
                let w = C64::from_polar(cfg.r, theta);
                let kern: C64 = weights
                    .iter()
                    .zip(&e.values)
                    .map(|(c, l)| c / (l - w).norm_sqr())
                    .sum();
                acc += kern * cfg.function.eval(theta);
            }
            Ok(acc * scale)
        }
        PoissonRoute::Resolvent => {
            let mut acc = C64::new(0.0, 0.0);
            for theta in nodes {
                acc += poisson_integrand(u, a, b, cfg.r, theta)? * cfg.function.eval(theta);
            }
            Ok(acc * scale)
        }
    }
}

/// All matrix elements of the spectral-route reconstruction at once.
pub fn poisson_reconstruct_matrix(u: MatRef<'_, C64>, cfg: &PoissonConfig) -> Result<Mat<C64>> {
    cfg.validate()?;
    check_unitary(u)?;
    let n = u.nrows();
    let e = unitary_eig(u)?;
    let h = TAU / cfg.grid as f64;
    let scale = (1.0 - cfg.r * cfg.r) / TAU * h;
    let mut coef = vec![C64::new(0.0, 0.0); n];
    for k in 0..cfg.grid {
        let theta = h * k as f64;
        let w = C64::from_polar(cfg.r, theta);
        let f = cfg.function.eval(theta);
        for (c, l) in coef.iter_mut().zip(&e.values) {
            *c += f / (l - w).norm_sqr();
        }
    }
    Ok(Mat::from_fn(n, n, |a, b| {
        (0..n)
            .map(|k| e.vectors[(a, k)] * coef[k] * e.vectors[(b, k)].conj())
            .sum::<C64>()
            * scale
    }))
}

/// Exact `f(U)` through the eigendecomposition.
pub fn exact_function(u: MatRef<'_, C64>, f: &TestFunction) -> Result<Mat<C64>> {
    check_unitary(u)?;
    let n = u.nrows();
    let e = unitary_eig(u)?;
    let fv: Vec<C64> = e.values.iter().map(|l| f.eval(l.arg())).collect();
    Ok(Mat::from_fn(n, n, |a, b| {
        (0..n).map(|k| e.vectors[(a, k)] * fv[k] * e.vectors[(b, k)].conj()).sum()
    }))
}

/// Haar-distributed unitary: QR of a complex Ginibre matrix with the phases
/// of `diag R` divided out.
pub fn haar_unitary(n: usize, seed: u64) -> Mat<C64> {
    let mut rng = stream(seed, 0x4AA2);
    let g = Mat::from_fn(n, n, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        C64::new(re, im)
    });
    let qr = g.qr();
    let q = qr.compute_Q();
    let r = qr.R();
    Mat::from_fn(n, n, |i, j| {
        let d = r[(j, j)];
        q[(i, j)] * d / d.norm()
    })
}

/// `(r, error)` rows for the reconstruction error `max_{a,b} |f(U)_{ab} − ·|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonErrorRow {
    pub r: f64,
    pub grid: usize,
    pub function: TestFunction,
    pub error: f64,
}

pub fn poisson_convergence(
    u: MatRef<'_, C64>,
    radii: &[f64],
    grid: usize,
    functions: &[TestFunction],
) -> Result<Vec<PoissonErrorRow>> {
    let mut out = Vec::new();
    for f in functions {
        let exact = exact_function(u, f)?;
        for &r in radii {
            let cfg = PoissonConfig::new(r, grid, f.clone())?;
            let approx = poisson_reconstruct_matrix(u, &cfg)?;
            let mut err: f64 = 0.0;
            for i in 0..u.nrows() {
                for j in 0..u.ncols() {
                    err = err.max((approx[(i, j)] - exact[(i, j)]).norm());
                }
            }
            out.push(PoissonErrorRow {
                r,
                grid,
                function: f.clone(),
                error: err,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrafConfig {
    pub s: f64,
    pub samples: usize,
    pub z_grid: Vec<SpectralParameter>,
    pub pairs: Vec<LabelPair>,
    pub seed: u64,
    /// Sup-norm radius of the `m` neighbourhood around `x`.
    #[serde(default = "default_reach")]
    pub reach: u32,
}

fn default_reach() -> u32 {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrafRow {
    pub l: u32,
    pub z: SpectralParameter,
    pub pair: LabelPair,
    /// `|1 − |z|²| E|G(x, y; z)|²`.
    pub lhs: f64,
    /// `Σ_{|m−x| ≤ reach} max_{τ',σ'} E|G(m, y; z)|^s`.
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrafReport {
    pub rows: Vec<GrafRow>,
    /// Largest `lhs / rhs` over rows with `rhs > 0`.
    pub fitted_k: f64,
    pub task_seeds: Vec<u64>,
}

impl GrafReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("l,z_re,z_im,row,col,lhs,rhs,ratio\n");
        for r in &self.rows {
            let z = r.z.value();
            s.push_str(&format!(
                "{},{:.6},{:.6},\"{}\",\"{}\",{:.12e},{:.12e},{:.12e}\n",
                r.l, z.re, z.im, r.pair.row, r.pair.col, r.lhs, r.rhs, r.ratio
            ));
        }
        s
    }
}

/// Sites within sup distance `reach` of `x`.
fn neighbourhood(x: &Site, reach: u32, lattice: crate::lattice::Lattice) -> Vec<Site> {
    lattice.cube_sites(reach).into_iter().map(|d| *x + d).collect()
}

/// Monte Carlo evaluation of both sides of the second-moment relation.
pub fn graf_diagnostic(model: &Model, cfg: &GrafConfig) -> Result<GrafReport> {
    if !(cfg.s > 0.0 && cfg.s < 1.0) {
        return Err(Error::Config(format!("s must lie in (0, 1), got {}", cfg.s)));
    }
    if cfg.samples == 0 || cfg.z_grid.is_empty() || cfg.pairs.is_empty() {
        return Err(Error::Config("Graf diagnostic needs samples, z values and pairs".into()));
    }
    let lattice = model.lattice();
    let coins = lattice.coins();
    let nc = coins.len();
    // cell layout per (z, pair): [|G(x,y)|², then |G(m,y)|^s for m, τ', σ']
    let hood: Vec<Vec<Site>> = cfg
        .pairs
        .iter()
        .map(|p| neighbourhood(&p.row.site, cfg.reach, lattice))
        .collect();
    let per_pair: Vec<usize> = hood.iter().map(|h| 1 + h.len() * nc * nc).collect();
    let per_z: usize = per_pair.iter().sum();
    let cells = per_z * cfg.z_grid.len();
    let task = |seed: u64| -> Result<Vec<f64>> {
        let op = model.realization(seed)?;
        let basis = op.basis();
        let mut out = Vec::with_capacity(cells);
        for &z in &cfg.z_grid {
            let res = Resolvent::new(&op, z)?;
            for (p, pair) in cfg.pairs.iter().enumerate() {
                let ys: Vec<usize> = coins
                    .iter()
                    .map(|&c| basis.require(&BasisLabel::new(c, pair.col.site)))
                    .collect::<Result<_>>()?;
                let cols = res.columns(&ys)?;
                let sigma = pair.col.coin.position();
                out.push(cols[sigma][basis.require(&pair.row)?].norm_sqr());
                for m in &hood[p] {
                    for &tau in &coins {
                        let row = basis.index_of(&BasisLabel::new(tau, *m));
                        for col in &cols {
                            out.push(row.map_or(0.0, |i| col[i].norm().powf(cfg.s)));
                        }
                    }
                }
            }
        }
        Ok(out)
    };
    let samples = monte_carlo(cfg.samples, cfg.seed, cells, task)?;
    let means: Vec<f64> = samples.values.iter().map(|v| mean(v)).collect();
    let mut rows = Vec::new();
    let mut offset = 0;
    for &z in &cfg.z_grid {
        let factor = (1.0 - z.value().norm_sqr()).abs();
        for (p, pair) in cfg.pairs.iter().enumerate() {
            let lhs = factor * means[offset];
            let mut rhs = 0.0;
            for m in 0..hood[p].len() {
                let base = offset + 1 + m * nc * nc;
                rhs += means[base..base + nc * nc].iter().copied().fold(0.0, f64::max);
            }
            let ratio = if rhs > 0.0 { lhs / rhs } else { f64::NAN };
            rows.push(GrafRow {
                l: model.l(),
                z,
                pair: *pair,
                lhs,
                rhs,
                ratio,
            });
            offset += per_pair[p];
        }
    }
    let fitted_k = rows
        .iter()
        .filter(|r| r.rhs > 0.0)
        .map(|r| r.ratio)
        .fold(0.0, f64::max);
    Ok(GrafReport {
        rows,
        fitted_k,
        task_seeds: samples.seeds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMomentConfig {
    pub pair: LabelPair,
    pub z_grid: Vec<SpectralParameter>,
    pub s_values: Vec<f64>,
    pub backgrounds: usize,
    pub seed: u64,
    #[serde(default = "default_quadrature")]
    pub quadrature: usize,
}

fn default_quadrature() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMomentRow {
    pub s: f64,
    pub z: SpectralParameter,
    /// `max` over backgrounds of `∫∫ |G|^s l(θ₁) l(θ₂) dθ₁ dθ₂`.
    pub max_estimate: f64,
    pub mean_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMomentReport {
    pub rows: Vec<ConditionalMomentRow>,
    /// Per `s`: `max / median` of `max_estimate` over the z grid.
    pub spread: BTreeMap<String, f64>,
}

/// Tensor trapezoidal quadrature over the phases `ω^τ_x` and `ω^σ_y` of the
/// pair, with every other phase fixed by a sampled background.
pub fn conditional_moment_check(model: &Model, cfg: &ConditionalMomentConfig) -> Result<ConditionalMomentReport> {
    let dist = model.distribution();
    if !dist.has_density() {
        return Err(Error::Config("conditional moments need a phase law with a density".into()));
    }
    if cfg.pair.row == cfg.pair.col {
        return Err(Error::Config("conditional moments need two distinct labels".into()));
    }
    if let Some(s) = cfg.s_values.iter().find(|s| !(**s > 0.0 && **s < 1.0)) {
        return Err(Error::Config(format!("s must lie in (0, 1), got {s}")));
    }
    if cfg.backgrounds == 0 || cfg.quadrature < 2 || cfg.z_grid.is_empty() {
        return Err(Error::Config("conditional moments need backgrounds, quadrature and z values".into()));
    }
    let q = cfg.quadrature;
    let h = TAU / q as f64;
    let nodes: Vec<f64> = (0..q).map(|k| h * k as f64).collect();
    let weights: Vec<f64> = nodes.iter().map(|&t| dist.density(t).expect("has density") * h).collect();
    let ns = cfg.s_values.len();
    let nz = cfg.z_grid.len();
    let task = |seed: u64| -> Result<Vec<f64>> {
        let mut field = model.sample_field(seed);
        field.set(cfg.pair.row.coin, &cfg.pair.row.site, 0.0)?;
        field.set(cfg.pair.col.coin, &cfg.pair.col.site, 0.0)?;
        let op = model.restriction(&field)?;
        let basis = op.basis();
        let (a, b) = (basis.require(&cfg.pair.row)?, basis.require(&cfg.pair.col)?);
        let mut out = vec![0.0; ns * nz];
        if !op.components().same(a, b) {
            return Ok(out);
        }
        let base = op.to_dense();
        let n = op.dim();
        for (zi, z) in cfg.z_grid.iter().enumerate() {
            let zv = z.value();
            for (i1, &t1) in nodes.iter().enumerate() {
                for (i2, &t2) in nodes.iter().enumerate() {
                    let (p1, p2) = (C64::from_polar(1.0, t1), C64::from_polar(1.0, t2));
                    let m = Mat::from_fn(n, n, |i, j| {
                        let v = base[(i, j)];
                        let v = if i == a { v * p1 } else if i == b { v * p2 } else { v };
                        if i == j {
                            v - zv
                        } else {
                            v
                        }
                    });
                    let rhs = Mat::from_fn(n, 1, |i, _| C64::new(if i == b { 1.0 } else { 0.0 }, 0.0));
                    let g = m.partial_piv_lu().solve(&rhs)[(a, 0)].norm();
                    let w = weights[i1] * weights[i2];
                    for (si, s) in cfg.s_values.iter().enumerate() {
                        out[si * nz + zi] += w * g.powf(*s);
                    }
                }
            }
        }
        Ok(out)
    };
    let samples = monte_carlo(cfg.backgrounds, cfg.seed, ns * nz, task)?;
    let mut rows = Vec::new();
    let mut spread = BTreeMap::new();
    for (si, &s) in cfg.s_values.iter().enumerate() {
        let mut maxes = Vec::new();
        for (zi, &z) in cfg.z_grid.iter().enumerate() {
            let v = &samples.values[si * nz + zi];
            let mx = v.iter().copied().fold(0.0, f64::max);
            maxes.push(mx);
            rows.push(ConditionalMomentRow {
                s,
                z,
                max_estimate: mx,
                mean_estimate: mean(v),
            });
        }
        let med = median(&maxes);
        let top = maxes.iter().copied().fold(0.0, f64::max);
        spread.insert(format!("{s}"), if med > 0.0 { top / med } else { 0.0 });
    }
    Ok(ConditionalMomentReport { rows, spread })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coin::{perturbed_coin, CoinPermutation};
    use crate::disorder::PhaseDistribution;
    use crate::green::axis_pairs;
    use crate::lattice::Lattice;

    fn diag(phases: &[f64]) -> Mat<C64> {
        let n = phases.len();
        Mat::from_fn(n, n, |i, j| if i == j { C64::from_polar(1.0, phases[i]) } else { C64::new(0.0, 0.0) })
    }

    #[test]
    fn config_validation() {
        assert!(PoissonConfig::new(0.9, 640, TestFunction::One).is_ok());
        assert!(PoissonConfig::new(0.9, 639, TestFunction::One).is_err());
        assert!(PoissonConfig::new(0.5, 32, TestFunction::One).is_err());
        assert!(PoissonConfig::new(1.0, 1 << 16, TestFunction::One).is_err());
        assert!(PoissonConfig::new(0.0, 1 << 16, TestFunction::One).is_err());
    }

    #[test]
    fn haar_is_unitary() {
        let u = haar_unitary(20, 3);
        assert!(crate::coin::unitarity_defect(u.as_ref()) < 1e-12);
        assert_ne!(haar_unitary(20, 3), haar_unitary(20, 4));
    }

    #[test]
    fn diagonal_closed_form() {
        // for a 1×1 unitary e^{iφ}: P_r * z^n = r^n e^{inφ}
        let phases = [0.3, 2.0, -1.1];
        let u = diag(&phases);
        for r in [0.9, 0.99] {
            let cfg = PoissonConfig::new(r, 8192, TestFunction::Z2).unwrap();
            let m = poisson_reconstruct_matrix(u.as_ref(), &cfg).unwrap();
            for (k, &p) in phases.iter().enumerate() {
                let want = C64::from_polar(r * r, 2.0 * p);
                assert!((m[(k, k)] - want).norm() < 1e-12);
            }
            assert!(m[(0, 1)].norm() < 1e-12);
        }
    }

    #[test]
    fn routes_agree() {
        let u = haar_unitary(12, 7);
        for f in [TestFunction::Z, TestFunction::RealPart] {
            let cfg = PoissonConfig::new(0.9, 1024, f).unwrap();
            for (a, b) in [(0, 0), (3, 5), (11, 2)] {
                let s = poisson_reconstruct(u.as_ref(), a, b, &cfg, PoissonRoute::Spectral).unwrap();
                let r = poisson_reconstruct(u.as_ref(), a, b, &cfg, PoissonRoute::Resolvent).unwrap();
                assert!((s - r).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn direct_matrix_elements() {
        let u = haar_unitary(16, 2);
        let u2 = &u * &u;
        let cfg = |f| PoissonConfig::new(0.999, 1 << 16, f).unwrap();
        let one = poisson_reconstruct_matrix(u.as_ref(), &cfg(TestFunction::One)).unwrap();
        let z = poisson_reconstruct_matrix(u.as_ref(), &cfg(TestFunction::Z)).unwrap();
        let z2 = poisson_reconstruct_matrix(u.as_ref(), &cfg(TestFunction::Z2)).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((one[(i, j)] - id).norm() < 1e-9);
                // the Poisson bias for z^n is (1 − r^n) |U^n_ab|
                assert!((z[(i, j)] - u[(i, j)]).norm() <= 1.01e-3 * u[(i, j)].norm() + 1e-9);
                assert!((z2[(i, j)] - u2[(i, j)]).norm() <= 2.01e-3 * u2[(i, j)].norm() + 1e-9);
            }
        }
    }

    #[test]
    fn diagonal_integrand_is_positive() {
        let u = haar_unitary(10, 1);
        for r in [0.5, 0.9, 0.999] {
            for k in 0..50 {
                let v = poisson_integrand(u.as_ref(), 4, 4, r, 0.37 * k as f64).unwrap();
                assert!(v.re > 0.0 && v.im.abs() < 1e-9 * v.re);
            }
        }
        let cfg = PoissonConfig::new(
            0.99,
            8192,
            TestFunction::SmoothArc {
                center: 1.0,
                half_width: 0.5,
                smoothing: 0.1,
            },
        )
        .unwrap();
        for a in 0..10 {
            let v = poisson_reconstruct(u.as_ref(), a, a, &cfg, PoissonRoute::Spectral).unwrap();
            assert!(v.re >= 0.0);
        }
    }

    #[test]
    fn error_decreases_with_radius() {
        let u = haar_unitary(32, 5);
        let rows = poisson_convergence(
            u.as_ref(),
            &[0.9, 0.99, 0.999],
            1 << 16,
            &[TestFunction::One, TestFunction::Z, TestFunction::Z2],
        )
        .unwrap();
        for f in rows.chunks(3) {
            assert!(f[2].error < 1e-3, "{f:?}");
            if f[0].function != TestFunction::One {
                assert!(f[0].error > f[1].error && f[1].error > f[2].error, "{f:?}");
            }
        }
    }

    fn small_model(delta: f64, l: u32) -> Model {
        let lat = Lattice::new(1).unwrap();
        let perm = CoinPermutation::standard_cycle(lat);
        Model::new(perturbed_coin(&perm, delta, 3).unwrap(), perm, PhaseDistribution::Uniform, l).unwrap()
    }

    #[test]
    fn graf_localized_off_orbit_is_zero() {
        let m = Model::localized(Lattice::new(1).unwrap(), 16).unwrap();
        let cfg = GrafConfig {
            s: 0.5,
            samples: 5,
            z_grid: SpectralParameter::grid(&[0.99], 2).unwrap(),
            pairs: axis_pairs(m.lattice(), 8..=8),
            seed: 1,
            reach: 4,
        };
        let rep = graf_diagnostic(&m, &cfg).unwrap();
        assert!(rep.rows.iter().all(|r| r.lhs == 0.0 && r.rhs == 0.0));
    }

    #[test]
    fn graf_sides_are_finite_and_ordered() {
        let m = small_model(0.1, 12);
        let cfg = GrafConfig {
            s: 0.5,
            samples: 20,
            z_grid: SpectralParameter::grid(&[0.9, 0.99, 1.01], 2).unwrap(),
            pairs: axis_pairs(m.lattice(), 3..=3),
            seed: 4,
            reach: 4,
        };
        let rep = graf_diagnostic(&m, &cfg).unwrap();
        assert!(rep.rows.iter().all(|r| r.lhs.is_finite() && r.rhs > 0.0));
        assert!(rep.fitted_k.is_finite() && rep.fitted_k > 0.0);
    }

    #[test]
    fn green_modulus_is_invariant_under_global_phase() {
        let m = small_model(0.2, 8);
        let field = m.sample_field(3);
        let phi = 0.77;
        let rotated = crate::disorder::PhaseField::from_values(
            field.lattice(),
            field.radius(),
            field.values().iter().map(|v| v + phi).collect(),
        )
        .unwrap();
        let u = m.restriction(&field).unwrap();
        let v = m.restriction(&rotated).unwrap();
        let ph = C64::from_polar(1.0, phi);
        for zv in [C64::new(0.5, 0.2), C64::new(0.0, 1.01)] {
            let z = SpectralParameter::new(zv).unwrap();
            let zr = SpectralParameter::new(zv * ph).unwrap();
            let a = Resolvent::new(&u, z).unwrap().columns(&[0, 5]).unwrap();
            let b = Resolvent::new(&v, zr).unwrap().columns(&[0, 5]).unwrap();
            for (ca, cb) in a.iter().zip(&b) {
                for (x, y) in ca.iter().zip(cb) {
                    assert!((x.norm() - y.norm()).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn conditional_moments() {
        let m = small_model(0.1, 6);
        let lat = m.lattice();
        let pair = LabelPair::new(
            BasisLabel::new(lat.coin(1).unwrap(), lat.axis_point(0, 2)),
            BasisLabel::new(lat.coin(-1).unwrap(), lat.origin()),
        );
        let cfg = ConditionalMomentConfig {
            pair,
            z_grid: SpectralParameter::grid(&[0.99, 1.01], 1).unwrap(),
            s_values: vec![0.3, 0.7],
            backgrounds: 2,
            seed: 2,
            quadrature: 16,
        };
        let rep = conditional_moment_check(&m, &cfg).unwrap();
        assert!(rep.rows.iter().all(|r| r.max_estimate.is_finite() && r.max_estimate > 0.0));
        let loc = Model::localized(lat, 6).unwrap();
        let far = LabelPair::new(BasisLabel::new(lat.coin(1).unwrap(), lat.axis_point(0, 3)), pair.col);
        let rep = conditional_moment_check(&loc, &ConditionalMomentConfig { pair: far, ..cfg.clone() }).unwrap();
        assert!(rep.rows.iter().all(|r| r.max_estimate == 0.0));
        let zero = m.with_distribution(PhaseDistribution::DeterministicZero);
        assert!(conditional_moment_check(&zero, &cfg).is_err());
    }
}
