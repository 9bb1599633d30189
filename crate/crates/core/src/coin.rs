//! Coin matrices on the `2d`-dimensional internal space, permutation coins
//! `C_π`, and the operator-norm distance `‖C − C_π‖`.

use faer::{Mat, MatRef, Side};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::lattice::{CoinIndex, Lattice};
use crate::C64;

/// Tolerance on `‖C*C − I‖` accepted for a coin.
pub const UNITARY_TOL: f64 = 1e-10;

/// Largest singular value.
pub fn operator_norm(m: MatRef<'_, C64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values()
        .map(|s| s[0])
        .unwrap_or_else(|_| m.norm_l2())
}

/// `‖M*M − I‖` in operator norm.
pub fn unitarity_defect(m: MatRef<'_, C64>) -> f64 {
    let n = m.ncols();
    let mut g = m.adjoint() * m;
    for i in 0..n {
        g[(i, i)] -= C64::new(1.0, 0.0);
    }
    operator_norm(g.as_ref())
}

/// A unitary `2d × 2d` matrix; rows and columns follow the coin layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoinMatrix {
    lattice: Lattice,
    m: Mat<C64>,
}

impl CoinMatrix {
    pub fn new(lattice: Lattice, m: Mat<C64>) -> Result<Self> {
        let n = lattice.coin_dim();
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: m.nrows().max(m.ncols()),
            });
        }
        let defect = unitarity_defect(m.as_ref());
        if !(defect <= UNITARY_TOL) {
            return Err(Error::NotUnitary { defect });
        }
        Ok(CoinMatrix { lattice, m })
    }

    pub fn from_rows(lattice: Lattice, rows: &[Vec<C64>]) -> Result<Self> {
        let n = lattice.coin_dim();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: rows.len(),
            });
        }
        CoinMatrix::new(lattice, Mat::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(lattice: Lattice) -> Self {
        let n = lattice.coin_dim();
        CoinMatrix {
            lattice,
            m: Mat::identity(n, n),
        }
    }

    /// The one-dimensional family `[[t, r], [r, −t]]` with `t² + r² = 1`.
    pub fn reflection(t: f64, r: f64) -> Result<Self> {
        if ((t * t + r * r) - 1.0).abs() > UNITARY_TOL {
            return Err(Error::Config(format!(
                "reflection coin needs t² + r² = 1, got {}",
                t * t + r * r
            )));
        }
        let c = |v: f64| C64::new(v, 0.0);
        CoinMatrix::from_rows(
            Lattice::new(1)?,
            &[vec![c(t), c(r)], vec![c(r), c(-t)]],
        )
    }

    /// Hadamard-type member `t = r = 1/√2` of the reflection family.
    pub fn hadamard() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        CoinMatrix::reflection(h, h).expect("unitary")
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> MatRef<'_, C64> {
        self.m.as_ref()
    }

    /// `C_{τ,σ}`.
    pub fn entry(&self, tau: CoinIndex, sigma: CoinIndex) -> C64 {
        self.m[(tau.position(), sigma.position())]
    }

    pub fn unitarity_defect(&self) -> f64 {
        unitarity_defect(self.m.as_ref())
    }

    /// Operator-norm distance `‖self − other‖`.
    pub fn distance(&self, other: &CoinMatrix) -> f64 {
        let diff = &self.m - &other.m;
        operator_norm(diff.as_ref())
    }

    /// Multiplies by a global phase `e^{iφ}`.
    pub fn phased(&self, phi: f64) -> Self {
        CoinMatrix {
            lattice: self.lattice,
            m: Mat::from_fn(self.dim(), self.dim(), |i, j| {
                self.m[(i, j)] * C64::from_polar(1.0, phi)
            }),
        }
    }

    pub(crate) fn from_unchecked(lattice: Lattice, m: Mat<C64>) -> Self {
        CoinMatrix { lattice, m }
    }

    pub fn to_rows(&self) -> Vec<Vec<[f64; 2]>> {
        (0..self.dim())
            .map(|i| {
                (0..self.dim())
                    .map(|j| [self.m[(i, j)].re, self.m[(i, j)].im])
                    .collect()
            })
            .collect()
    }
}

/// A permutation `π` of `I_±`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CoinPermutation {
    lattice: Lattice,
    /// `image[pos(τ)] = pos(π(τ))`.
    image: Vec<usize>,
}

impl CoinPermutation {
    pub fn identity(lattice: Lattice) -> Self {
        CoinPermutation {
            lattice,
            image: (0..lattice.coin_dim()).collect(),
        }
    }

    /// Builds `π` from explicit `(τ, π(τ))` pairs covering all of `I_±`.
    pub fn from_pairs(lattice: Lattice, pairs: &[(i32, i32)]) -> Result<Self> {
        let n = lattice.coin_dim();
        let mut image = vec![usize::MAX; n];
        for &(a, b) in pairs {
            let a = lattice.coin(a)?.position();
            let b = lattice.coin(b)?.position();
            if image[a] != usize::MAX {
                return Err(Error::InvalidPermutation(format!(
                    "{} mapped twice",
                    CoinIndex::from_position(a)
                )));
            }
            image[a] = b;
        }
        Self::from_image(lattice, image)
    }

    /// Cycle notation: `[τ₀, τ₁, …]` means `τ₀ → τ₁ → … → τ₀`; indices not
    /// listed are fixed.
    pub fn from_cycle(lattice: Lattice, cycle: &[i32]) -> Result<Self> {
        let n = lattice.coin_dim();
        let mut image: Vec<usize> = (0..n).collect();
        let positions = cycle
            .iter()
            .map(|&v| lattice.coin(v).map(|c| c.position()))
            .collect::<Result<Vec<_>>>()?;
        let mut seen = vec![false; n];
        for &p in &positions {
            if std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidPermutation(format!(
                    "{} repeated in cycle",
                    CoinIndex::from_position(p)
                )));
            }
        }
        for (k, &p) in positions.iter().enumerate() {
            image[p] = positions[(k + 1) % positions.len()];
        }
        Self::from_image(lattice, image)
    }

    /// The full cycle `+1 → −1 → +2 → −2 → … → −d → +1`.
    pub fn standard_cycle(lattice: Lattice) -> Self {
        let n = lattice.coin_dim();
        CoinPermutation {
            lattice,
            image: (0..n).map(|p| (p + 1) % n).collect(),
        }
    }

    fn from_image(lattice: Lattice, image: Vec<usize>) -> Result<Self> {
        let n = lattice.coin_dim();
        if image.len() != n {
            return Err(Error::InvalidPermutation(format!(
                "expected {n} images, got {}",
                image.len()
            )));
        }
        let mut hit = vec![false; n];
        for &b in &image {
            if b >= n || std::mem::replace(&mut hit[b], true) {
                return Err(Error::InvalidPermutation("not a bijection on I_±".into()));
            }
        }
        Ok(CoinPermutation { lattice, image })
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn apply(&self, tau: CoinIndex) -> CoinIndex {
        CoinIndex::from_position(self.image[tau.position()])
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.image.len()];
        for (a, &b) in self.image.iter().enumerate() {
            inv[b] = a;
        }
        CoinPermutation {
            lattice: self.lattice,
            image: inv,
        }
    }

    /// Cycle decomposition, each cycle starting at its smallest position.
    pub fn cycles(&self) -> Vec<Vec<CoinIndex>> {
        let n = self.image.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut cyc = Vec::new();
            let mut p = start;
            while !seen[p] {
                seen[p] = true;
                cyc.push(CoinIndex::from_position(p));
                p = self.image[p];
            }
            out.push(cyc);
        }
        out
    }

    pub fn is_full_cycle(&self) -> bool {
        self.cycles().len() == 1
    }

    pub fn require_full_cycle(&self) -> Result<()> {
        if self.is_full_cycle() {
            Ok(())
        } else {
            Err(Error::NotFullCycle(
                self.cycles().iter().map(Vec::len).collect(),
            ))
        }
    }

    /// Cycle notation of a full cycle starting at `+1`, as signed integers.
    pub fn to_cycle_notation(&self) -> Vec<Vec<i32>> {
        self.cycles()
            .into_iter()
            .map(|c| c.into_iter().map(CoinIndex::value).collect())
            .collect()
    }
}

/// `C_π = Σ_τ |π(τ)⟩⟨τ|`.
pub fn permutation_coin(perm: &CoinPermutation) -> CoinMatrix {
    let n = perm.lattice.coin_dim();
    let m = Mat::from_fn(n, n, |row, col| {
        if perm.image[col] == row {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    CoinMatrix::from_unchecked(perm.lattice, m)
}

/// `‖C − C_π‖` in operator norm.
pub fn coin_distance(coin: &CoinMatrix, perm: &CoinPermutation) -> Result<f64> {
    if coin.lattice() != perm.lattice() {
        return Err(Error::DimensionMismatch {
            expected: coin.dim(),
            got: perm.lattice().coin_dim(),
        });
    }
    Ok(coin.distance(&permutation_coin(perm)))
}

/// Random Hermitian matrix with unit operator norm.
fn unit_hermitian(n: usize, rng: &mut ChaCha8Rng) -> Mat<C64> {
    let a = Mat::from_fn(n, n, |_, _| {
        C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    });
    let h = Mat::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5);
    let norm = operator_norm(h.as_ref());
    Mat::from_fn(n, n, |i, j| h[(i, j)] / norm)
}

/// `C_π · exp(iθH)` for Hermitian `H`, the exponential taken spectrally.
fn rotate(cpi: &CoinMatrix, h: &Mat<C64>, theta: f64) -> Result<Mat<C64>> {
    let n = h.nrows();
    let evd = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Diagonalization(format!("{e:?}")))?;
    let v = evd.U();
    let s = evd.S();
    let phased = Mat::from_fn(n, n, |i, j| {
        v[(i, j)] * C64::from_polar(1.0, theta * s[j].re)
    });
    let e = &phased * v.adjoint();
    Ok(cpi.matrix() * &e)
}

/// A coin at operator-norm distance exactly `delta` from `C_π`:
/// `C = C_π exp(iθH)` with `H` a seeded random Hermitian matrix of unit norm
/// and `θ` found by bisection on the measured distance.
pub fn perturbed_coin(perm: &CoinPermutation, delta: f64, seed: u64) -> Result<CoinMatrix> {
    if !(0.0..=2.0).contains(&delta) {
        return Err(Error::Config(format!(
            "perturbation size must lie in [0, 2], got {delta}"
        )));
    }
    let cpi = permutation_coin(perm);
    if delta == 0.0 {
        return Ok(cpi);
    }
    let lattice = perm.lattice();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = unit_hermitian(lattice.coin_dim(), &mut rng);
    let dist = |theta: f64| -> Result<(f64, Mat<C64>)> {
        let c = rotate(&cpi, &h, theta)?;
        let d = operator_norm((&c - cpi.matrix()).as_ref());
        Ok((d, c))
    };
    // 2 sin(θ/2) is increasing on [0, π] and covers [0, 2].
    let (mut lo, mut hi) = (0.0, std::f64::consts::PI);
    let mut best = dist(hi)?;
    if (best.0 - delta).abs() > 1e-12 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let cur = dist(mid)?;
            if cur.0 < delta {
                lo = mid;
            } else {
                hi = mid;
            }
            let done = (cur.0 - delta).abs() <= 1e-13 || hi - lo < 1e-16;
            best = cur;
            if done {
                break;
            }
        }
    }
    CoinMatrix::new(lattice, best.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn swap() -> CoinPermutation {
        CoinPermutation::from_cycle(Lattice::new(1).unwrap(), &[1, -1]).unwrap()
    }

    #[test]
    fn swap_coin() {
        let c = permutation_coin(&swap());
        let m = c.matrix();
        assert_eq!(m[(0, 0)], C64::new(0.0, 0.0));
        assert_eq!(m[(0, 1)], C64::new(1.0, 0.0));
        assert_eq!(m[(1, 0)], C64::new(1.0, 0.0));
        assert_eq!(m[(1, 1)], C64::new(0.0, 0.0));
    }

    #[test]
    fn identity_permutation_coin() {
        let l = Lattice::new(3).unwrap();
        let c = permutation_coin(&CoinPermutation::identity(l));
        assert_eq!(c, CoinMatrix::identity(l));
    }

    #[test]
    fn four_cycle_coin() {
        let l = Lattice::new(2).unwrap();
        let p = CoinPermutation::from_cycle(l, &[1, -1, 2, -2]).unwrap();
        assert_eq!(p, CoinPermutation::standard_cycle(l));
        let c = permutation_coin(&p);
        assert!(c.unitarity_defect() < 1e-14);
        // column τ has its single 1 at row π(τ)
        for t in l.coins() {
            for r in l.coins() {
                let want = if r == p.apply(t) { 1.0 } else { 0.0 };
                assert_eq!(c.entry(r, t), C64::new(want, 0.0));
            }
        }
        assert!(p.is_full_cycle());
    }

    #[test]
    fn permutation_validation() {
        let l = Lattice::new(2).unwrap();
        assert!(CoinPermutation::from_pairs(l, &[(1, -1), (-1, 1), (2, 2)]).is_err());
        assert!(CoinPermutation::from_pairs(l, &[(1, -1), (-1, -1), (2, -2), (-2, 2)]).is_err());
        assert!(CoinPermutation::from_cycle(l, &[1, 1]).is_err());
        let two_cycles = CoinPermutation::from_pairs(l, &[(1, -1), (-1, 1), (2, -2), (-2, 2)]).unwrap();
        assert!(matches!(
            two_cycles.require_full_cycle(),
            Err(Error::NotFullCycle(ref v)) if v == &vec![2, 2]
        ));
        let p = CoinPermutation::standard_cycle(l);
        for t in l.coins() {
            assert_eq!(p.inverse().apply(p.apply(t)), t);
        }
    }

    #[test]
    fn distance_to_self_is_zero() {
        let p = CoinPermutation::standard_cycle(Lattice::new(2).unwrap());
        assert_eq!(coin_distance(&permutation_coin(&p), &p).unwrap(), 0.0);
    }

    /// Largest singular value of a 2×2 complex matrix from the closed form
    /// `σ²_max = (‖M‖_F² + √(‖M‖_F⁴ − 4|det M|²)) / 2`.
    fn sigma_max_2x2(m: [[C64; 2]; 2]) -> f64 {
        let f2: f64 = m.iter().flatten().map(|z| z.norm_sqr()).sum();
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        ((f2 + (f2 * f2 - 4.0 * det.norm_sqr()).max(0.0).sqrt()) / 2.0).sqrt()
    }

    #[test]
    fn reflection_coin_distance() {
        let (t, r) = (0.6, 0.8);
        let c = CoinMatrix::reflection(t, r).unwrap();
        let got = coin_distance(&c, &swap()).unwrap();
        let diff = [
            [C64::new(t, 0.0), C64::new(r - 1.0, 0.0)],
            [C64::new(r - 1.0, 0.0), C64::new(-t, 0.0)],
        ];
        let oracle = sigma_max_2x2(diff);
        assert!((oracle - 0.40f64.sqrt()).abs() < 1e-12);
        assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
    }

    #[test]
    fn global_phase_distance() {
        let phi = 0.1;
        let cpi = permutation_coin(&swap());
        let got = coin_distance(&cpi.phased(phi), &swap()).unwrap();
        let oracle = (C64::from_polar(1.0, phi) - 1.0).norm();
        assert!((got - oracle).abs() < 1e-12);
        assert!((got - 0.0999).abs() < 1e-4);
    }

    #[test]
    fn distance_invariant_under_relabeling() {
        let l = Lattice::new(2).unwrap();
        let p = CoinPermutation::standard_cycle(l);
        let c = perturbed_coin(&p, 0.3, 11).unwrap();
        // relabel rows and columns of both arguments by the same permutation
        let q = CoinPermutation::from_cycle(l, &[1, 2]).unwrap();
        let n = l.coin_dim();
        let qpos = |i: usize| q.apply(CoinIndex::from_position(i)).position();
        let mut c2 = Mat::zeros(n, n);
        let mut p2 = Mat::zeros(n, n);
        let cp = permutation_coin(&p);
        for i in 0..n {
            for j in 0..n {
                c2[(qpos(i), qpos(j))] = c.matrix()[(i, j)];
                p2[(qpos(i), qpos(j))] = cp.matrix()[(i, j)];
            }
        }
        let a = c.distance(&cp);
        let b = operator_norm((&c2 - &p2).as_ref());
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn perturbed_coin_hits_target() {
        for d in 1..=3 {
            let p = CoinPermutation::standard_cycle(Lattice::new(d).unwrap());
            assert_eq!(perturbed_coin(&p, 0.0, 1).unwrap(), permutation_coin(&p));
            for (seed, delta) in [(1u64, 0.1), (2, 0.05), (3, 0.3), (4, 1.5), (5, 2.0)] {
                let c = perturbed_coin(&p, delta, seed).unwrap();
                let dist = coin_distance(&c, &p).unwrap();
                assert!((dist - delta).abs() <= 1e-10, "d={d} δ={delta}: {dist}");
                assert!(c.unitarity_defect() <= 1e-10);
            }
            assert!(perturbed_coin(&p, 2.5, 1).is_err());
        }
    }

    #[test]
    fn non_unitary_rejected() {
        let l = Lattice::new(1).unwrap();
        let one = C64::new(1.0, 0.0);
        assert!(matches!(
            CoinMatrix::from_rows(l, &[vec![one, one], vec![one, one]]),
            Err(Error::NotUnitary { .. })
        ));
        assert!(CoinMatrix::reflection(0.6, 0.7).is_err());
    }
}
