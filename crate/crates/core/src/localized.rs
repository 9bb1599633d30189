//! Closed-form description of the fully localized walk `U_ω(C_π)` for a
//! full-cycle permutation `π`: its `2d`-dimensional cyclic orbits, the
//! accumulated orbit phases `α`, and the orbit spectra
//! `e^{iα/2d} · {2d-th roots of unity}`.

use std::collections::HashSet;
use std::f64::consts::TAU;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::coin::CoinPermutation;
use crate::disorder::PhaseField;
use crate::error::{Error, Result};
use crate::lattice::{BasisLabel, Lattice};
use crate::C64;

/// Ordered orbit `|π^k(τ), x + Σ_{s=1}^{k} r(π^s(τ))⟩`, `k = 0 … 2d−1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Orbit {
    pub seed: BasisLabel,
    pub members: Vec<BasisLabel>,
}

impl Orbit {
    /// Smallest member; identifies the orbit independently of its seed.
    pub fn canonical(&self) -> BasisLabel {
        *self.members.iter().min().expect("orbits are nonempty")
    }

    pub fn contains(&self, label: &BasisLabel) -> bool {
        self.members.contains(label)
    }

    /// Largest sup-norm distance between two member sites.
    pub fn diameter(&self) -> u32 {
        let mut d = 0;
        for a in &self.members {
            for b in &self.members {
                d = d.max(a.site.sup_dist(&b.site));
            }
        }
        d
    }
}

/// Successor of `label` under the localized walk (up to its phase).
pub fn successor(lattice: Lattice, perm: &CoinPermutation, label: &BasisLabel) -> BasisLabel {
    let next = perm.apply(label.coin);
    BasisLabel::new(next, label.site + lattice.jump(next))
}

pub fn orbit(perm: &CoinPermutation, seed: BasisLabel) -> Result<Orbit> {
    perm.require_full_cycle()?;
    let lattice = perm.lattice();
    let n = lattice.coin_dim();
    let mut members = Vec::with_capacity(n);
    let mut cur = seed;
    for _ in 0..n {
        members.push(cur);
        cur = successor(lattice, perm, &cur);
    }
    if cur != seed {
        return Err(Error::Internal(format!("orbit of {seed} does not close")));
    }
    Ok(Orbit { seed, members })
}

/// `α = Σ_k ω^{τ_k}_{x_k}` over the orbit members, reduced to `[0, 2π)`.
pub fn alpha_phase(field: &PhaseField, orbit: &Orbit) -> Result<f64> {
    let mut sum = 0.0;
    for m in &orbit.members {
        sum += field.get(m.coin, &m.site)?;
    }
    Ok(sum.rem_euclid(TAU))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSpectrum {
    pub alpha: f64,
    pub eigenvalues: Vec<C64>,
}

pub fn orbit_spectrum(alpha: f64, lattice: Lattice) -> OrbitSpectrum {
    let n = lattice.coin_dim();
    let base = C64::from_polar(1.0, alpha / n as f64);
    let eigenvalues = (0..n)
        .map(|k| base * C64::from_polar(1.0, TAU * k as f64 / n as f64))
        .collect();
    OrbitSpectrum { alpha, eigenvalues }
}

/// Matrix of `U_ω(C_π)` restricted to the orbit, in member order: member
/// `k` is sent to `e^{iω(m_{k+1})} m_{k+1}`.
pub fn orbit_block(field: &PhaseField, orbit: &Orbit) -> Result<Mat<C64>> {
    let n = orbit.members.len();
    let mut m = Mat::zeros(n, n);
    for k in 0..n {
        let next = &orbit.members[(k + 1) % n];
        m[((k + 1) % n, k)] = C64::from_polar(1.0, field.get(next.coin, &next.site)?);
    }
    Ok(m)
}

/// Distinct orbits through the given labels, in order of first appearance.
pub fn orbits_through(perm: &CoinPermutation, labels: &[BasisLabel]) -> Result<Vec<Orbit>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for &l in labels {
        if seen.contains(&l) {
            continue;
        }
        let o = orbit(perm, l)?;
        seen.extend(o.members.iter().copied());
        out.push(o);
    }
    Ok(out)
}

/// The orbits spanning `H^Λ` for the localized walk: all orbits through a
/// state `|τ, x⟩` with `|x| ≤ l`.
pub fn cube_orbits(perm: &CoinPermutation, l: u32) -> Result<Vec<Orbit>> {
    let lattice = perm.lattice();
    let labels: Vec<BasisLabel> = lattice
        .cube_sites(l)
        .into_iter()
        .flat_map(|s| lattice.coins().into_iter().map(move |c| BasisLabel::new(c, s)))
        .collect();
    orbits_through(perm, &labels)
}

/// Exact spectrum of `U^Λ_ω(C_π)` assembled from the orbit formula.
pub fn localized_spectrum(field: &PhaseField, perm: &CoinPermutation, l: u32) -> Result<Vec<C64>> {
    let lattice = perm.lattice();
    let mut out = Vec::new();
    for o in cube_orbits(perm, l)? {
        out.extend(orbit_spectrum(alpha_phase(field, &o)?, lattice).eigenvalues);
    }
    Ok(out)
}

/// Largest distance between paired points of two equal-size sets on the
/// circle, pairing each `expected` point with its nearest unused `actual`.
pub fn spectral_mismatch(expected: &[C64], actual: &[C64]) -> f64 {
    if expected.len() != actual.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; actual.len()];
    let mut worst: f64 = 0.0;
    for e in expected {
        let (k, d) = actual
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, a)| (k, (a - e).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("same length");
        used[k] = true;
        worst = worst.max(d);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coin::permutation_coin;
    use crate::disorder::{sample_phases, PhaseDistribution};
    use crate::stats::ks_test;
    use crate::walk::build_bulk;

    fn lab(l: Lattice, c: i32, x: &[i32]) -> BasisLabel {
        BasisLabel::new(l.coin(c).unwrap(), l.site(x).unwrap())
    }

    fn dense_eigenvalues(m: &Mat<C64>) -> Vec<C64> {
        m.eigenvalues().unwrap()
    }

    #[test]
    fn swap_orbit() {
        let l = Lattice::new(1).unwrap();
        let p = CoinPermutation::standard_cycle(l);
        let o = orbit(&p, lab(l, 1, &[0])).unwrap();
        assert_eq!(o.members, vec![lab(l, 1, &[0]), lab(l, -1, &[-1])]);
        let o2 = orbit(&p, lab(l, -1, &[-1])).unwrap();
        assert_eq!(o2.members, vec![lab(l, -1, &[-1]), lab(l, 1, &[0])]);
        assert_eq!(o.canonical(), o2.canonical());
    }

    #[test]
    fn four_cycle_orbit_closes() {
        let l = Lattice::new(2).unwrap();
        let p = CoinPermutation::from_cycle(l, &[1, -1, 2, -2]).unwrap();
        let seed = lab(l, 1, &[0, 0]);
        let o = orbit(&p, seed).unwrap();
        assert_eq!(o.members.len(), 4);
        // direct iteration of the successor map
        let mut cur = seed;
        let mut total = l.origin();
        for m in &o.members {
            assert_eq!(*m, cur);
            let next = p.apply(cur.coin);
            total = total + l.jump(next);
            cur = BasisLabel::new(next, cur.site + l.jump(next));
        }
        assert_eq!(total, l.origin());
        assert!(o.diameter() <= 1);
    }

    #[test]
    fn non_cycle_rejected() {
        let l = Lattice::new(2).unwrap();
        let p = CoinPermutation::from_cycle(l, &[1, -1]).unwrap();
        assert!(matches!(orbit(&p, lab(l, 1, &[0, 0])), Err(Error::NotFullCycle(_))));
    }

    #[test]
    fn alpha_examples() {
        let l = Lattice::new(1).unwrap();
        let p = CoinPermutation::standard_cycle(l);
        let x = [3];
        let o = orbit(&p, lab(l, 1, &x)).unwrap();
        assert_eq!(alpha_phase(&PhaseField::zeros(l, 5), &o).unwrap(), 0.0);
        let f = sample_phases(l, 5, &PhaseDistribution::Uniform, 2);
        let expect = (f.get(l.coin(1).unwrap(), &l.site(&[3]).unwrap()).unwrap()
            + f.get(l.coin(-1).unwrap(), &l.site(&[2]).unwrap()).unwrap())
        .rem_euclid(TAU);
        assert!((alpha_phase(&f, &o).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn alpha_is_uniform() {
        // the 2d-fold convolution of the uniform law on the torus is uniform
        let l = Lattice::new(1).unwrap();
        let p = CoinPermutation::standard_cycle(l);
        let f = sample_phases(l, 10_001, &PhaseDistribution::Uniform, 31);
        let alphas: Vec<f64> = (0..10_000)
            .map(|x| alpha_phase(&f, &orbit(&p, lab(l, 1, &[x * 2 - 10_000])).unwrap()).unwrap())
            .collect();
        let (_, pval) = ks_test(&alphas, |t| t / TAU);
        assert!(pval > 0.01, "p = {pval}");
    }

    #[test]
    fn spectrum_examples() {
        let l = Lattice::new(1).unwrap();
        let s = orbit_spectrum(0.0, l);
        assert!(spectral_mismatch(&[C64::new(1.0, 0.0), C64::new(-1.0, 0.0)], &s.eigenvalues) < 1e-15);
        let s = orbit_spectrum(std::f64::consts::PI, l);
        assert!(spectral_mismatch(&[C64::new(0.0, 1.0), C64::new(0.0, -1.0)], &s.eigenvalues) < 1e-15);
    }

    #[test]
    fn spectrum_matches_dense_block() {
        let l = Lattice::new(2).unwrap();
        let p = CoinPermutation::standard_cycle(l);
        let f = sample_phases(l, 4, &PhaseDistribution::Uniform, 7);
        for x in l.cube_sites(2) {
            let o = orbit(&p, BasisLabel::new(l.coin(-2).unwrap(), x)).unwrap();
            let block = orbit_block(&f, &o).unwrap();
            let exact = orbit_spectrum(alpha_phase(&f, &o).unwrap(), l);
            let numeric = dense_eigenvalues(&block);
            assert!(spectral_mismatch(&exact.eigenvalues, &numeric) < 1e-10);
            // determinant consistency: Π λ = (−1)^{2d−1} e^{iα}
            let prod: C64 = numeric.iter().product();
            let det = -C64::from_polar(1.0, exact.alpha);
            assert!((prod - det).norm() < 1e-10);
        }
    }

    #[test]
    fn orbits_partition_window() {
        for d in 1..=3 {
            let l = Lattice::new(d).unwrap();
            let p = CoinPermutation::standard_cycle(l);
            let orbits = cube_orbits(&p, 2).unwrap();
            let mut seen = HashSet::new();
            for o in &orbits {
                for m in &o.members {
                    assert!(seen.insert(*m), "{m} in two orbits");
                }
            }
            for s in l.cube_sites(2) {
                for c in l.coins() {
                    assert!(seen.contains(&BasisLabel::new(c, s)));
                }
            }
        }
    }

    #[test]
    fn orbit_block_matches_operator() {
        let l = Lattice::new(2).unwrap();
        let p = CoinPermutation::standard_cycle(l);
        let f = sample_phases(l, 5, &PhaseDistribution::Uniform, 3);
        let u = build_bulk(&permutation_coin(&p), Some(&f), 4).unwrap();
        let b = u.basis();
        let o = orbit(&p, lab(l, 2, &[1, 0])).unwrap();
        let block = orbit_block(&f, &o).unwrap();
        for (a, ma) in o.members.iter().enumerate() {
            for (c, mc) in o.members.iter().enumerate() {
                let ent = u.entry(b.index_of(ma).unwrap(), b.index_of(mc).unwrap());
                assert!((ent - block[(a, c)]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn support_stays_in_orbit() {
        let l = Lattice::new(2).unwrap();
        let p = CoinPermutation::standard_cycle(l);
        let f = sample_phases(l, 4, &PhaseDistribution::Uniform, 3);
        let u = build_bulk(&permutation_coin(&p), Some(&f), 3).unwrap();
        let b = u.basis();
        let o = orbit(&p, lab(l, 1, &[0, 1])).unwrap();
        let mut psi = vec![C64::new(0.0, 0.0); u.dim()];
        psi[b.index_of(&o.members[0]).unwrap()] = C64::new(0.6, 0.0);
        psi[b.index_of(&o.members[2]).unwrap()] = C64::new(0.0, 0.8);
        let mut next = psi.clone();
        for _ in 0..1000 {
            u.apply_into(&psi, &mut next).unwrap();
            std::mem::swap(&mut psi, &mut next);
            for (i, a) in psi.iter().enumerate() {
                if a.norm() > 0.0 {
                    assert!(o.contains(&b.label(i)));
                }
            }
        }
    }
}
