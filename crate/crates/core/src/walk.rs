//! One-step walk operators on finite windows.
//!
//! Matrix elements follow
//! `⟨τ, x + r(τ)| U |σ, x⟩ = e^{iω^τ_{x+r(τ)}} C(x)_{τ,σ}`,
//! with `C(x) = C` in the bulk and `C(x) = C_π` on the collar shells
//! `|x| ∈ {L−1, L, L+1}`. Storage is column-compressed; a column whose image
//! leaves the window is kept but flagged incomplete.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::coin::{permutation_coin, CoinMatrix, CoinPermutation};
use crate::disorder::PhaseField;
use crate::error::{Error, Result};
use crate::lattice::{Basis, Lattice, Region, Site};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    /// `U_ω(C)` (or `U(C)` without phases) on a window.
    Bulk,
    /// `U^L_ω(C)` on the window `|x| ≤ L + 2`.
    Collared,
    /// `U^Λ_ω(C)`, the restriction to the invariant subspace `H^Λ`.
    Restriction,
    /// The collared operator on the window states outside `H^Λ`.
    Complement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorMeta {
    pub kind: OperatorKind,
    pub d: usize,
    pub window_radius: u32,
    pub collar: Option<u32>,
    pub disorder_seed: Option<u64>,
}

/// Sparse one-step unitary together with its basis.
#[derive(Debug, Clone)]
pub struct WalkOperator {
    basis: Arc<Basis>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<C64>,
    col_complete: Vec<bool>,
    row_complete: Vec<bool>,
    meta: OperatorMeta,
}

struct Assembly<'a> {
    lattice: Lattice,
    radius: u32,
    coin_at: &'a dyn Fn(&Site) -> &'a CoinMatrix,
    phases: Option<&'a PhaseField>,
    kind: OperatorKind,
    collar: Option<u32>,
}

impl Assembly<'_> {
    fn build(self) -> Result<WalkOperator> {
        let lattice = self.lattice;
        let region = Region::cube(lattice, self.radius);
        let basis = Arc::new(Basis::of_region(&region));
        let coins = lattice.coins();
        let n = basis.len();
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::with_capacity(n * coins.len());
        let mut vals = Vec::with_capacity(n * coins.len());
        let mut col_complete = vec![true; n];
        let mut row_complete = vec![true; n];
        col_ptr.push(0);
        let mut entries: Vec<(usize, C64)> = Vec::with_capacity(coins.len());
        for (j, label) in basis.labels().iter().enumerate() {
            let coin = (self.coin_at)(&label.site);
            entries.clear();
            for &tau in &coins {
                let c = coin.entry(tau, label.coin);
                if c == C64::new(0.0, 0.0) {
                    continue;
                }
                let target = label.site + lattice.jump(tau);
                match region.position(&target) {
                    Some(pos) => {
                        let phase = match self.phases {
                            Some(f) => C64::from_polar(1.0, f.get(tau, &target)?),
                            None => C64::new(1.0, 0.0),
                        };
                        entries.push((pos * coins.len() + tau.position(), phase * c));
                    }
                    None => col_complete[j] = false,
                }
            }
            entries.sort_by_key(|e| e.0);
            for &(i, v) in &entries {
                row_idx.push(i);
                vals.push(v);
            }
            col_ptr.push(row_idx.len());

            // predecessors of row j sit at x − r(τ)
            let tau = label.coin;
            let source = label.site - lattice.jump(tau);
            if !region.contains(&source) {
                let c = (self.coin_at)(&source);
                if coins.iter().any(|&s| c.entry(tau, s) != C64::new(0.0, 0.0)) {
                    row_complete[j] = false;
                }
            }
        }
        Ok(WalkOperator {
            basis,
            col_ptr,
            row_idx,
            vals,
            col_complete,
            row_complete,
            meta: OperatorMeta {
                kind: self.kind,
                d: lattice.dim(),
                window_radius: self.radius,
                collar: self.collar,
                disorder_seed: self.phases.and_then(|f| f.seed()),
            },
        })
    }
}

/// `U_ω(C)` on the window `|x| ≤ radius`, or `U(C)` when `phases` is `None`.
pub fn build_bulk(coin: &CoinMatrix, phases: Option<&PhaseField>, radius: u32) -> Result<WalkOperator> {
    check_phase_lattice(coin, phases)?;
    let coin_at = |_: &Site| coin;
    Assembly {
        lattice: coin.lattice(),
        radius,
        coin_at: &coin_at,
        phases,
        kind: OperatorKind::Bulk,
        collar: None,
    }
    .build()
}

/// `U^L_ω(C)`: bulk coin `C`, collar coin `C_π` on `|x| ∈ {L−1, L, L+1}`,
/// assembled on the window `|x| ≤ L + 2`.
pub fn build_collared(
    coin: &CoinMatrix,
    perm: &CoinPermutation,
    phases: &PhaseField,
    l: u32,
) -> Result<WalkOperator> {
    if l < 3 {
        return Err(Error::Config(format!("collared operator needs L ≥ 3, got {l}")));
    }
    if perm.lattice() != coin.lattice() {
        return Err(Error::DimensionMismatch {
            expected: coin.lattice().dim(),
            got: perm.lattice().dim(),
        });
    }
    check_phase_lattice(coin, Some(phases))?;
    let collar_coin = permutation_coin(perm);
    let coin_at = |x: &Site| collar_coin_at(coin, &collar_coin, l, x);
    Assembly {
        lattice: coin.lattice(),
        radius: l + 2,
        coin_at: &coin_at,
        phases: Some(phases),
        kind: OperatorKind::Collared,
        collar: Some(l),
    }
    .build()
}

/// Coin used by the collared construction at site `x`.
pub fn collar_coin_at<'a>(
    coin: &'a CoinMatrix,
    collar_coin: &'a CoinMatrix,
    l: u32,
    x: &Site,
) -> &'a CoinMatrix {
    if (l - 1..=l + 1).contains(&x.sup_norm()) {
        collar_coin
    } else {
        coin
    }
}

fn check_phase_lattice(coin: &CoinMatrix, phases: Option<&PhaseField>) -> Result<()> {
    match phases {
        Some(f) if f.lattice() != coin.lattice() => Err(Error::DimensionMismatch {
            expected: coin.lattice().dim(),
            got: f.lattice().dim(),
        }),
        _ => Ok(()),
    }
}

/// Partition of a basis into the connected components of a transition graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    pub labels: Vec<usize>,
    pub members: Vec<Vec<usize>>,
}

impl Components {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn same(&self, a: usize, b: usize) -> bool {
        self.labels[a] == self.labels[b]
    }
}

/// The collared operator split along `H^Λ ⊕ (window ⊖ H^Λ)`.
#[derive(Debug, Clone)]
pub struct InvariantSplit {
    pub restriction: WalkOperator,
    pub complement: WalkOperator,
    /// Nonzero transitions between the two blocks; zero for a valid collar.
    pub boundary_edges: usize,
}

impl WalkOperator {
    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn lattice(&self) -> Lattice {
        self.basis.lattice()
    }

    pub fn meta(&self) -> &OperatorMeta {
        &self.meta
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Nonzero `(row, value)` pairs of column `j`.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn column_is_complete(&self, j: usize) -> bool {
        self.col_complete[j]
    }

    pub fn row_is_complete(&self, i: usize) -> bool {
        self.row_complete[i]
    }

    /// True when every column and row is fully represented in the basis.
    pub fn is_closed(&self) -> bool {
        self.col_complete.iter().all(|&c| c) && self.row_complete.iter().all(|&c| c)
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.column(col)
            .find(|&(i, _)| i == row)
            .map(|(_, v)| v)
            .unwrap_or(C64::new(0.0, 0.0))
    }

    /// `(row, col, value)` for every stored entry, column-major.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim()).flat_map(move |j| self.column(j).map(move |(i, v)| (i, j, v)))
    }

    pub fn to_dense(&self) -> Mat<C64> {
        let mut m = Mat::zeros(self.dim(), self.dim());
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: len,
            });
        }
        Ok(())
    }

    /// `out = U ψ`.
    pub fn apply_into(&self, psi: &[C64], out: &mut [C64]) -> Result<()> {
        self.check_len(psi.len())?;
        self.check_len(out.len())?;
        out.fill(C64::new(0.0, 0.0));
        for (j, &a) in psi.iter().enumerate() {
            if a == C64::new(0.0, 0.0) {
                continue;
            }
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                out[self.row_idx[k]] += self.vals[k] * a;
            }
        }
        Ok(())
    }

    /// `out = U* ψ`.
    pub fn apply_adjoint_into(&self, psi: &[C64], out: &mut [C64]) -> Result<()> {
        self.check_len(psi.len())?;
        self.check_len(out.len())?;
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                acc += self.vals[k].conj() * psi[self.row_idx[k]];
            }
            *o = acc;
        }
        Ok(())
    }

    pub fn apply(&self, psi: &[C64]) -> Result<Vec<C64>> {
        let mut out = vec![C64::new(0.0, 0.0); self.dim()];
        self.apply_into(psi, &mut out)?;
        Ok(out)
    }

    pub fn apply_adjoint(&self, psi: &[C64]) -> Result<Vec<C64>> {
        let mut out = vec![C64::new(0.0, 0.0); self.dim()];
        self.apply_adjoint_into(psi, &mut out)?;
        Ok(out)
    }

    /// Row-compressed transpose structure: for each row, `(col, value)`.
    fn rows(&self) -> Vec<Vec<(usize, C64)>> {
        let mut rows = vec![Vec::new(); self.dim()];
        for (i, j, v) in self.triplets() {
            rows[i].push((j, v));
        }
        rows
    }

    /// Upper bound on `max(‖U*U − I‖, ‖UU* − I‖)` over the complete columns
    /// and rows, via the maximal absolute row sum of the (Hermitian) defect
    /// matrices. For a closed operator this bounds the unitarity defect.
    pub fn unitarity_defect(&self) -> f64 {
        let rows = self.rows();
        let n = self.dim();
        let mut scratch = vec![C64::new(0.0, 0.0); n];
        let mut mark = vec![false; n];
        let mut touched = Vec::new();
        let mut worst: f64 = 0.0;

        // U*U: entry (a, b) = Σ_i conj(U_ia) U_ib
        for a in 0..n {
            if !self.col_complete[a] {
                continue;
            }
            for (i, va) in self.column(a) {
                for &(b, vb) in &rows[i] {
                    if !std::mem::replace(&mut mark[b], true) {
                        touched.push(b);
                    }
                    scratch[b] += va.conj() * vb;
                }
            }
            scratch[a] -= C64::new(1.0, 0.0);
            if !std::mem::replace(&mut mark[a], true) {
                touched.push(a);
            }
            let sum: f64 = touched
                .iter()
                .filter(|&&b| self.col_complete[b])
                .map(|&b| scratch[b].norm())
                .sum();
            worst = worst.max(sum);
            for &b in &touched {
                scratch[b] = C64::new(0.0, 0.0);
                mark[b] = false;
            }
            touched.clear();
        }

        // UU*: entry (a, b) = Σ_j U_aj conj(U_bj)
        for a in 0..n {
            if !self.row_complete[a] {
                continue;
            }
            for &(j, va) in &rows[a] {
                for (b, vb) in self.column(j) {
                    if !std::mem::replace(&mut mark[b], true) {
                        touched.push(b);
                    }
                    scratch[b] += va * vb.conj();
                }
            }
            scratch[a] -= C64::new(1.0, 0.0);
            if !std::mem::replace(&mut mark[a], true) {
                touched.push(a);
            }
            let sum: f64 = touched
                .iter()
                .filter(|&&b| self.row_complete[b])
                .map(|&b| scratch[b].norm())
                .sum();
            worst = worst.max(sum);
            for &b in &touched {
                scratch[b] = C64::new(0.0, 0.0);
                mark[b] = false;
            }
            touched.clear();
        }
        worst
    }

    /// Checks that every stored entry connects `|σ, x⟩` to `|τ, x + r(τ)⟩`.
    pub fn respects_band_structure(&self) -> bool {
        let lattice = self.lattice();
        self.triplets().all(|(i, j, _)| {
            let from = self.basis.label(j);
            let to = self.basis.label(i);
            to.site == from.site + lattice.jump(to.coin)
        })
    }

    /// Dense principal block on the given basis indices, in that order.
    pub fn dense_block(&self, idx: &[usize]) -> Mat<C64> {
        let mut local = vec![usize::MAX; self.dim()];
        for (k, &i) in idx.iter().enumerate() {
            local[i] = k;
        }
        let mut m = Mat::zeros(idx.len(), idx.len());
        for (c, &j) in idx.iter().enumerate() {
            for (i, v) in self.column(j) {
                if local[i] != usize::MAX {
                    m[(local[i], c)] = v;
                }
            }
        }
        m
    }

    /// Connected components of the transition graph: `labels[i]` is the
    /// component of basis state `i`, numbered by first appearance.
    pub fn components(&self) -> Components {
        let n = self.dim();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for (i, j, _) in self.triplets() {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut id = vec![usize::MAX; n];
        let mut labels = vec![0; n];
        let mut members: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            if id[r] == usize::MAX {
                id[r] = members.len();
                members.push(Vec::new());
            }
            labels[i] = id[r];
            members[id[r]].push(i);
        }
        Components { labels, members }
    }

    /// Splits a collared operator into `H^Λ` (the closure of all states with
    /// `|x| ≤ L` under forward and backward transitions) and the rest.
    pub fn split_invariant(&self) -> Result<InvariantSplit> {
        let l = match (self.meta.kind, self.meta.collar) {
            (OperatorKind::Collared, Some(l)) => l,
            _ => {
                return Err(Error::Config(
                    "invariant restriction needs a collared operator".into(),
                ))
            }
        };
        let n = self.dim();
        let rows = self.rows();
        let mut inside = vec![false; n];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for (i, label) in self.basis.labels().iter().enumerate() {
            if label.site.sup_norm() <= l {
                inside[i] = true;
                queue.push_back(i);
            }
        }
        while let Some(v) = queue.pop_front() {
            let fwd = self.column(v).map(|(i, _)| i);
            let bwd = rows[v].iter().map(|&(j, _)| j);
            for w in fwd.chain(bwd).collect::<Vec<_>>() {
                if !inside[w] {
                    inside[w] = true;
                    queue.push_back(w);
                }
            }
        }
        for (i, &flag) in inside.iter().enumerate() {
            if flag {
                let label = self.basis.label(i);
                if label.site.sup_norm() > l + 1 || !self.col_complete[i] || !self.row_complete[i] {
                    return Err(Error::Internal(format!(
                        "invariant closure escaped the collar at {label}"
                    )));
                }
            }
        }
        let boundary_edges = self
            .triplets()
            .filter(|&(i, j, _)| inside[i] != inside[j])
            .count();
        let restriction = self.sub_operator(&inside, true, OperatorKind::Restriction)?;
        let complement = self.sub_operator(&inside, false, OperatorKind::Complement)?;
        Ok(InvariantSplit {
            restriction,
            complement,
            boundary_edges,
        })
    }

    /// `U^Λ_ω(C)`.
    pub fn invariant_restriction(&self) -> Result<WalkOperator> {
        let split = self.split_invariant()?;
        if split.boundary_edges != 0 {
            return Err(Error::Internal(format!(
                "{} transitions cross the collar",
                split.boundary_edges
            )));
        }
        Ok(split.restriction)
    }

    fn sub_operator(&self, mask: &[bool], keep: bool, kind: OperatorKind) -> Result<WalkOperator> {
        let mut map = vec![usize::MAX; self.dim()];
        let mut labels = Vec::new();
        for (i, &m) in mask.iter().enumerate() {
            if m == keep {
                map[i] = labels.len();
                labels.push(self.basis.label(i));
            }
        }
        let basis = Arc::new(Basis::new(self.lattice(), labels)?);
        let mut col_ptr = vec![0];
        let mut row_idx = Vec::new();
        let mut vals = Vec::new();
        let mut col_complete = Vec::with_capacity(basis.len());
        let mut row_complete = vec![true; basis.len()];
        for (j, &m) in mask.iter().enumerate() {
            if m != keep {
                continue;
            }
            let mut complete = self.col_complete[j];
            for (i, v) in self.column(j) {
                if map[i] == usize::MAX {
                    complete = false;
                } else {
                    row_idx.push(map[i]);
                    vals.push(v);
                }
            }
            col_complete.push(complete);
            col_ptr.push(row_idx.len());
        }
        for (i, &m) in mask.iter().enumerate() {
            if m == keep && !self.row_complete[i] {
                row_complete[map[i]] = false;
            }
        }
        for (i, j, _) in self.triplets() {
            if mask[i] == keep && mask[j] != keep {
                row_complete[map[i]] = false;
            }
        }
        Ok(WalkOperator {
            basis,
            col_ptr,
            row_idx,
            vals,
            col_complete,
            row_complete,
            meta: OperatorMeta {
                kind,
                ..self.meta.clone()
            },
        })
    }

    /// Operator `D U` for a diagonal `D` on the same basis.
    pub fn left_multiply(&self, diag: &DiagonalPhaseOperator) -> Result<WalkOperator> {
        self.check_len(diag.phases.len())?;
        let mut out = self.clone();
        for (v, &i) in out.vals.iter_mut().zip(&self.row_idx) {
            *v *= C64::from_polar(1.0, diag.phases[i]);
        }
        Ok(out)
    }

    /// Coordinate-list export: a header then `row,col,re,im` per entry.
    pub fn write_coo<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "row,col,re,im")?;
        for (i, j, v) in self.triplets() {
            writeln!(w, "{i},{j},{:.17e},{:.17e}", v.re, v.im)?;
        }
        Ok(())
    }

    /// Basis export: `index,coin,x1[,x2[,x3]]`.
    pub fn write_basis<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.lattice().dim();
        let head: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
        writeln!(w, "index,coin,{}", head.join(","))?;
        for (i, l) in self.basis.labels().iter().enumerate() {
            let c: Vec<String> = l.site.coords().iter().map(i32::to_string).collect();
            writeln!(w, "{i},{},{}", l.coin.value(), c.join(","))?;
        }
        Ok(())
    }
}

/// `D_ω = diag(e^{iω^τ_x})` on a basis.
#[derive(Debug, Clone)]
pub struct DiagonalPhaseOperator {
    basis: Arc<Basis>,
    phases: Vec<f64>,
}

impl DiagonalPhaseOperator {
    pub fn new(basis: Arc<Basis>, field: &PhaseField) -> Result<Self> {
        let phases = basis
            .labels()
            .iter()
            .map(|l| field.get(l.coin, &l.site))
            .collect::<Result<Vec<_>>>()?;
        Ok(DiagonalPhaseOperator { basis, phases })
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn apply(&self, psi: &[C64]) -> Result<Vec<C64>> {
        if psi.len() != self.phases.len() {
            return Err(Error::DimensionMismatch {
                expected: self.phases.len(),
                got: psi.len(),
            });
        }
        Ok(psi
            .iter()
            .zip(&self.phases)
            .map(|(a, &p)| a * C64::from_polar(1.0, p))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coin::perturbed_coin;
    use crate::disorder::{sample_phases, PhaseDistribution};
    use crate::lattice::BasisLabel;

    fn l1() -> Lattice {
        Lattice::new(1).unwrap()
    }

    fn swap() -> CoinPermutation {
        CoinPermutation::standard_cycle(l1())
    }

    fn dense_defect(m: &Mat<C64>) -> f64 {
        crate::coin::unitarity_defect(m.as_ref())
    }

    #[test]
    fn free_walk_is_translation_invariant() {
        let lat = Lattice::new(2).unwrap();
        let coin = perturbed_coin(&CoinPermutation::standard_cycle(lat), 0.7, 3).unwrap();
        let u = build_bulk(&coin, None, 4).unwrap();
        let b = u.basis().clone();
        let a = lat.site(&[1, -1]).unwrap();
        for (i, j, v) in u.triplets() {
            let (to, from) = (b.label(i), b.label(j));
            if from.site.sup_norm() > 2 {
                continue;
            }
            let ti = b.index_of(&BasisLabel::new(to.coin, to.site + a)).unwrap();
            let tj = b.index_of(&BasisLabel::new(from.coin, from.site + a)).unwrap();
            assert!((u.entry(ti, tj) - v).norm() < 1e-15);
        }
    }

    #[test]
    fn swap_walk_has_period_two() {
        let lat = l1();
        let u = build_bulk(&permutation_coin(&swap()), None, 3).unwrap();
        let b = u.basis();
        let start = b
            .index_of(&BasisLabel::new(lat.coin(1).unwrap(), lat.origin()))
            .unwrap();
        let mut psi = vec![C64::new(0.0, 0.0); u.dim()];
        psi[start] = C64::new(1.0, 0.0);
        let once = u.apply(&psi).unwrap();
        let expect = b
            .index_of(&BasisLabel::new(lat.coin(-1).unwrap(), lat.site(&[-1]).unwrap()))
            .unwrap();
        assert_eq!(once[expect], C64::new(1.0, 0.0));
        assert!((once.iter().map(|a| a.norm_sqr()).sum::<f64>() - 1.0).abs() < 1e-15);
        let twice = u.apply(&once).unwrap();
        assert_eq!(twice, psi);
    }

    #[test]
    fn random_walk_factorizes() {
        for d in 1..=3 {
            let lat = Lattice::new(d).unwrap();
            let coin = perturbed_coin(&CoinPermutation::standard_cycle(lat), 0.5, d as u64).unwrap();
            let field = sample_phases(lat, 4, &PhaseDistribution::Uniform, 17);
            let u = build_bulk(&coin, Some(&field), 3).unwrap();
            let free = build_bulk(&coin, None, 3).unwrap();
            let diag = DiagonalPhaseOperator::new(free.basis().clone(), &field).unwrap();
            let du = free.left_multiply(&diag).unwrap();
            assert_eq!(u.nnz(), du.nnz());
            for ((i, j, a), (k, l, b)) in u.triplets().zip(du.triplets()) {
                assert_eq!((i, j), (k, l));
                assert!((a - b).norm() <= 1e-12);
            }
            assert!(u.respects_band_structure());
        }
    }

    #[test]
    fn bulk_columns_are_orthonormal_on_interior() {
        let lat = Lattice::new(2).unwrap();
        let coin = perturbed_coin(&CoinPermutation::standard_cycle(lat), 0.3, 1).unwrap();
        let field = sample_phases(lat, 5, &PhaseDistribution::Uniform, 2);
        let u = build_bulk(&coin, Some(&field), 4).unwrap();
        assert!(!u.is_closed());
        assert!(u.unitarity_defect() < 1e-12);
    }

    #[test]
    fn missing_phases_are_reported() {
        let coin = CoinMatrix::hadamard();
        let field = PhaseField::zeros(l1(), 2);
        assert!(matches!(build_bulk(&coin, Some(&field), 4), Err(Error::Coverage { .. })));
    }

    #[test]
    fn collar_requires_l_at_least_three() {
        let coin = CoinMatrix::hadamard();
        let field = PhaseField::zeros(l1(), 10);
        assert!(matches!(
            build_collared(&coin, &swap(), &field, 2),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn collared_with_pi_coin_equals_plain() {
        let lat = Lattice::new(2).unwrap();
        let p = CoinPermutation::standard_cycle(lat);
        let cpi = permutation_coin(&p);
        let field = sample_phases(lat, 8, &PhaseDistribution::Uniform, 4);
        let a = build_collared(&cpi, &p, &field, 5).unwrap();
        let b = build_bulk(&cpi, Some(&field), 7).unwrap();
        let ta: Vec<_> = a.triplets().collect();
        let tb: Vec<_> = b.triplets().collect();
        assert_eq!(ta, tb);
    }

    #[test]
    fn collar_coin_readout() {
        let coin = CoinMatrix::hadamard();
        let cpi = permutation_coin(&swap());
        let l = 6;
        let lat = l1();
        assert_eq!(collar_coin_at(&coin, &cpi, l, &lat.site(&[4]).unwrap()), &coin);
        for x in [-7, -6, -5, 5, 6, 7] {
            assert_eq!(collar_coin_at(&coin, &cpi, l, &lat.site(&[x]).unwrap()), &cpi);
        }
        // the assembled operator: a column at |x| = L has one entry, at L − 2 two
        let field = PhaseField::zeros(lat, l + 2);
        let u = build_collared(&coin, &swap(), &field, l).unwrap();
        let b = u.basis();
        let at = |x: i32| {
            b.index_of(&BasisLabel::new(lat.coin(1).unwrap(), lat.site(&[x]).unwrap()))
                .unwrap()
        };
        assert_eq!(u.column(at(6)).count(), 1);
        assert_eq!(u.column(at(4)).count(), 2);
    }

    #[test]
    fn restriction_is_unitary_and_closed() {
        for d in 1..=2 {
            let lat = Lattice::new(d).unwrap();
            let p = CoinPermutation::standard_cycle(lat);
            let coin = perturbed_coin(&p, 0.2, 9).unwrap();
            let l = if d == 1 { 8 } else { 4 };
            let field = sample_phases(lat, l + 2, &PhaseDistribution::Uniform, 12);
            let u = build_collared(&coin, &p, &field, l).unwrap();
            let split = u.split_invariant().unwrap();
            assert_eq!(split.boundary_edges, 0);
            let r = &split.restriction;
            assert!(r.is_closed());
            assert_eq!(r.dim() + split.complement.dim(), u.dim());
            assert!(r.unitarity_defect() <= 1e-10);
            assert!(dense_defect(&r.to_dense()) <= 1e-10);
            let lower = 2 * d * (2 * l as usize + 1).pow(d as u32);
            let upper = 2 * d * (2 * l as usize + 3).pow(d as u32);
            assert!((lower..=upper).contains(&r.dim()), "{} not in [{lower}, {upper}]", r.dim());
            // the complement is an isometry on its complete columns
            assert!(split.complement.unitarity_defect() <= 1e-10);
        }
    }

    #[test]
    fn restriction_rejects_bulk() {
        let u = build_bulk(&CoinMatrix::hadamard(), None, 4).unwrap();
        assert!(u.invariant_restriction().is_err());
    }

    #[test]
    fn apply_adjoint_inverts() {
        let lat = Lattice::new(2).unwrap();
        let p = CoinPermutation::standard_cycle(lat);
        let coin = perturbed_coin(&p, 0.4, 5).unwrap();
        let field = sample_phases(lat, 6, &PhaseDistribution::Uniform, 6);
        let u = build_collared(&coin, &p, &field, 4).unwrap().invariant_restriction().unwrap();
        let mut rng = crate::seeding::stream(1, 2);
        use rand::Rng;
        for _ in 0..100 {
            let psi: Vec<C64> = (0..u.dim())
                .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let norm: f64 = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            let y = u.apply(&psi).unwrap();
            let ny: f64 = y.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            assert!((ny - norm).abs() <= 1e-10 * norm);
            let back = u.apply(&u.apply_adjoint(&psi).unwrap()).unwrap();
            for (a, b) in back.iter().zip(&psi) {
                assert!((a - b).norm() <= 1e-10);
            }
        }
        assert!(u.apply(&[C64::new(1.0, 0.0)]).is_err());
    }

    #[test]
    fn basis_vector_reads_column() {
        let coin = CoinMatrix::hadamard();
        let u = build_bulk(&coin, None, 3).unwrap();
        let j = 5;
        let mut e = vec![C64::new(0.0, 0.0); u.dim()];
        e[j] = C64::new(1.0, 0.0);
        let y = u.apply(&e).unwrap();
        for (i, v) in y.iter().enumerate() {
            assert_eq!(*v, u.entry(i, j));
        }
    }

    #[test]
    fn coo_export() {
        let u = build_bulk(&permutation_coin(&swap()), None, 1).unwrap();
        let mut buf = Vec::new();
        u.write_coo(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + u.nnz());
        assert!(text.starts_with("row,col,re,im\n"));
        let mut basis = Vec::new();
        u.write_basis(&mut basis).unwrap();
        assert_eq!(String::from_utf8(basis).unwrap().lines().count(), 1 + u.dim());
    }
}
