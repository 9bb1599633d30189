//! Lattice geometry: the coin index set `I_± = {±1, …, ±d}`, sites of `Z^d`,
//! product basis labels `|τ, x⟩`, and flat vector layouts over finite regions.
//!
//! Layout conventions used everywhere in the crate:
//! * sites are ordered lexicographically on their coordinates;
//! * coin indices are ordered `+1, −1, +2, −2, …, +d, −d`;
//! * the flat index of `|τ, x⟩` over a region is `pos(x) · 2d + pos(τ)`.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

/// The lattice `Z^d` for a runtime dimension `d ∈ {1, 2, 3}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Lattice {
    dim: usize,
}

impl TryFrom<usize> for Lattice {
    type Error = Error;
    fn try_from(dim: usize) -> Result<Self> {
        Lattice::new(dim)
    }
}

impl From<Lattice> for usize {
    fn from(l: Lattice) -> usize {
        l.dim
    }
}

impl Lattice {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::UnsupportedDimension(dim));
        }
        Ok(Lattice { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Dimension of the coin space, `2d`.
    pub fn coin_dim(&self) -> usize {
        2 * self.dim
    }

    pub fn coin(&self, value: i32) -> Result<CoinIndex> {
        CoinIndex::new(value, self.dim)
    }

    /// All coin indices in layout order.
    pub fn coins(&self) -> Vec<CoinIndex> {
        (0..self.coin_dim()).map(CoinIndex::from_position).collect()
    }

    pub fn origin(&self) -> Site {
        Site {
            coords: [0; MAX_DIM],
            dim: self.dim as u8,
        }
    }

    pub fn site(&self, coords: &[i32]) -> Result<Site> {
        if coords.len() != self.dim {
            return Err(Error::SiteDimension {
                expected: self.dim,
                got: coords.len(),
            });
        }
        let mut c = [0; MAX_DIM];
        c[..self.dim].copy_from_slice(coords);
        Ok(Site {
            coords: c,
            dim: self.dim as u8,
        })
    }

    /// `r(τ) = sign(τ) e_{|τ|}`.
    pub fn jump(&self, tau: CoinIndex) -> Site {
        let mut s = self.origin();
        s.coords[tau.axis()] = tau.sign();
        s
    }

    /// Unit step `e_axis` scaled by `n`.
    pub fn axis_point(&self, axis: usize, n: i32) -> Site {
        let mut s = self.origin();
        s.coords[axis] = n;
        s
    }

    /// All sites with `|x| ≤ radius` in lexicographic order.
    pub fn cube_sites(&self, radius: u32) -> Vec<Site> {
        let r = radius as i32;
        let side = 2 * radius as usize + 1;
        let count = side.pow(self.dim as u32);
        let mut out = Vec::with_capacity(count);
        for k in 0..count {
            let mut s = self.origin();
            let mut rest = k;
            for axis in (0..self.dim).rev() {
                s.coords[axis] = (rest % side) as i32 - r;
                rest /= side;
            }
            out.push(s);
        }
        out
    }
}

/// An element of `I_± = {±1, …, ±d}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "i32", try_from = "i32")]
pub struct CoinIndex(i8);

impl TryFrom<i32> for CoinIndex {
    type Error = Error;
    fn try_from(v: i32) -> Result<Self> {
        CoinIndex::new(v, MAX_DIM)
    }
}

impl From<CoinIndex> for i32 {
    fn from(c: CoinIndex) -> i32 {
        c.0 as i32
    }
}

impl CoinIndex {
    pub fn new(value: i32, dim: usize) -> Result<Self> {
        if value == 0 || value.unsigned_abs() as usize > dim {
            return Err(Error::InvalidCoinIndex { value, dim });
        }
        Ok(CoinIndex(value as i8))
    }

    /// Inverse of [`CoinIndex::position`].
    pub fn from_position(pos: usize) -> Self {
        let axis = (pos / 2) as i8 + 1;
        CoinIndex(if pos % 2 == 0 { axis } else { -axis })
    }

    pub fn value(self) -> i32 {
        self.0 as i32
    }

    /// Position in the layout order `+1, −1, +2, −2, …`.
    pub fn position(self) -> usize {
        2 * (self.0.unsigned_abs() as usize - 1) + usize::from(self.0 < 0)
    }

    /// Zero-based coordinate axis `|τ| − 1`.
    pub fn axis(self) -> usize {
        self.0.unsigned_abs() as usize - 1
    }

    pub fn sign(self) -> i32 {
        if self.0 > 0 {
            1
        } else {
            -1
        }
    }

    pub fn reversed(self) -> Self {
        CoinIndex(-self.0)
    }
}

impl fmt::Display for CoinIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.0)
    }
}

/// A point of `Z^d`. Also used for displacements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site {
    dim: u8,
    coords: [i32; MAX_DIM],
}

impl Site {
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[i32] {
        &self.coords[..self.dim as usize]
    }

    /// `|x| = max_i |x_i|`.
    pub fn sup_norm(&self) -> u32 {
        self.coords().iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn sup_dist(&self, other: &Site) -> u32 {
        (*self - *other).sup_norm()
    }
}

impl std::ops::Add for Site {
    type Output = Site;
    fn add(mut self, rhs: Site) -> Site {
        debug_assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.coords.iter_mut().zip(rhs.coords) {
            *a += b;
        }
        self
    }
}

impl std::ops::Sub for Site {
    type Output = Site;
    fn sub(mut self, rhs: Site) -> Site {
        debug_assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.coords.iter_mut().zip(rhs.coords) {
            *a -= b;
        }
        self
    }
}

impl std::ops::Neg for Site {
    type Output = Site;
    fn neg(mut self) -> Site {
        for a in self.coords.iter_mut() {
            *a = -*a;
        }
        self
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl Serialize for Site {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Site {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<i32>::deserialize(d)?;
        let lattice = Lattice::new(v.len()).map_err(serde::de::Error::custom)?;
        lattice.site(&v).map_err(serde::de::Error::custom)
    }
}

/// The product basis label `|τ, x⟩ = |τ⟩ ⊗ |x⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BasisLabel {
    pub coin: CoinIndex,
    pub site: Site,
}

impl BasisLabel {
    pub fn new(coin: CoinIndex, site: Site) -> Self {
        BasisLabel { coin, site }
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{}, {}⟩", self.coin, self.site)
    }
}

/// An ordered finite set of sites with fast position lookup.
#[derive(Debug, Clone)]
pub struct Region {
    lattice: Lattice,
    sites: Vec<Site>,
    lookup: RegionLookup,
}

#[derive(Debug, Clone)]
enum RegionLookup {
    Cube(u32),
    Table(HashMap<Site, usize>),
}

impl Region {
    pub fn cube(lattice: Lattice, radius: u32) -> Self {
        Region {
            lattice,
            sites: lattice.cube_sites(radius),
            lookup: RegionLookup::Cube(radius),
        }
    }

    /// Region from an explicit site list; the given order is kept.
    pub fn from_sites(lattice: Lattice, sites: Vec<Site>) -> Result<Self> {
        let mut table = HashMap::with_capacity(sites.len());
        for (i, s) in sites.iter().enumerate() {
            if s.dim() != lattice.dim() {
                return Err(Error::SiteDimension {
                    expected: lattice.dim(),
                    got: s.dim(),
                });
            }
            if table.insert(*s, i).is_some() {
                return Err(Error::Config(format!("duplicate site {s} in region")));
            }
        }
        Ok(Region {
            lattice,
            sites,
            lookup: RegionLookup::Table(table),
        })
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Radius if this region is a centred cube.
    pub fn cube_radius(&self) -> Option<u32> {
        match self.lookup {
            RegionLookup::Cube(r) => Some(r),
            RegionLookup::Table(_) => None,
        }
    }

    pub fn position(&self, site: &Site) -> Option<usize> {
        match &self.lookup {
            RegionLookup::Cube(radius) => {
                if site.dim() != self.lattice.dim() || site.sup_norm() > *radius {
                    return None;
                }
                let side = 2 * *radius as usize + 1;
                Some(site.coords().iter().fold(0usize, |acc, &c| {
                    acc * side + (c + *radius as i32) as usize
                }))
            }
            RegionLookup::Table(t) => t.get(site).copied(),
        }
    }

    pub fn contains(&self, site: &Site) -> bool {
        self.position(site).is_some()
    }

    /// Number of basis states `2d · |region|`.
    pub fn basis_len(&self) -> usize {
        self.sites.len() * self.lattice.coin_dim()
    }

    pub fn flat_index(&self, label: &BasisLabel) -> Result<usize> {
        let pos = self
            .position(&label.site)
            .ok_or_else(|| Error::OutsideRegion(label.site.to_string()))?;
        Ok(pos * self.lattice.coin_dim() + label.coin.position())
    }

    pub fn label(&self, index: usize) -> Result<BasisLabel> {
        let n = self.lattice.coin_dim();
        if index >= self.basis_len() {
            return Err(Error::IndexOutOfRange {
                index,
                len: self.basis_len(),
            });
        }
        Ok(BasisLabel::new(
            CoinIndex::from_position(index % n),
            self.sites[index / n],
        ))
    }
}

/// An ordered list of basis labels: the coordinate system of a state vector
/// or operator.
#[derive(Debug, Clone)]
pub struct Basis {
    lattice: Lattice,
    labels: Vec<BasisLabel>,
    index: HashMap<BasisLabel, usize>,
}

impl Basis {
    pub fn new(lattice: Lattice, labels: Vec<BasisLabel>) -> Result<Self> {
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(*l, i).is_some() {
                return Err(Error::Config(format!("duplicate basis label {l}")));
            }
        }
        Ok(Basis {
            lattice,
            labels,
            index,
        })
    }

    /// The full flat layout of a region.
    pub fn of_region(region: &Region) -> Self {
        let labels = (0..region.basis_len())
            .map(|i| region.label(i).expect("index in range"))
            .collect();
        Basis::new(region.lattice(), labels).expect("region sites are distinct")
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn labels(&self) -> &[BasisLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &BasisLabel) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn require(&self, label: &BasisLabel) -> Result<usize> {
        self.index_of(label)
            .ok_or_else(|| Error::OutsideRegion(label.to_string()))
    }

    pub fn label(&self, i: usize) -> BasisLabel {
        self.labels[i]
    }
}

impl PartialEq for Basis {
    fn eq(&self, other: &Self) -> bool {
        self.lattice == other.lattice && self.labels == other.labels
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn jump_examples() {
        let l2 = Lattice::new(2).unwrap();
        assert_eq!(l2.jump(l2.coin(1).unwrap()).coords(), &[1, 0]);
        assert_eq!(l2.jump(l2.coin(-2).unwrap()).coords(), &[0, -1]);
        let l1 = Lattice::new(1).unwrap();
        assert_eq!(l1.jump(l1.coin(-1).unwrap()).coords(), &[-1]);
    }

    #[test]
    fn invalid_coin_rejected() {
        assert!(CoinIndex::new(0, 2).is_err());
        assert!(CoinIndex::new(3, 2).is_err());
        assert!(CoinIndex::new(-3, 2).is_err());
        assert!(Lattice::new(0).is_err());
        assert!(Lattice::new(4).is_err());
    }

    #[test]
    fn jumps_cancel() {
        for d in 1..=3 {
            let l = Lattice::new(d).unwrap();
            let mut total = l.origin();
            for t in l.coins() {
                assert_eq!(l.jump(t) + l.jump(t.reversed()), l.origin());
                total = total + l.jump(t);
            }
            assert_eq!(total, l.origin());
        }
    }

    #[test]
    fn coin_order() {
        let l = Lattice::new(2).unwrap();
        let v: Vec<i32> = l.coins().iter().map(|c| c.value()).collect();
        assert_eq!(v, vec![1, -1, 2, -2]);
        for (i, c) in l.coins().iter().enumerate() {
            assert_eq!(c.position(), i);
        }
    }

    #[test]
    fn sup_norm_examples() {
        let l2 = Lattice::new(2).unwrap();
        assert_eq!(l2.origin().sup_norm(), 0);
        assert_eq!(l2.site(&[3, -5]).unwrap().sup_norm(), 5);
        let l1 = Lattice::new(1).unwrap();
        assert_eq!(l1.site(&[-2]).unwrap().sup_norm(), 2);
    }

    #[test]
    fn cube_examples() {
        let l1 = Lattice::new(1).unwrap();
        let c: Vec<i32> = l1.cube_sites(1).iter().map(|s| s.coords()[0]).collect();
        assert_eq!(c, vec![-1, 0, 1]);
        assert_eq!(l1.cube_sites(0).len(), 1);
        assert_eq!(l1.cube_sites(0)[0], l1.origin());
        let l2 = Lattice::new(2).unwrap();
        let c2 = l2.cube_sites(1);
        assert_eq!(c2.len(), 9);
        let mut sorted = c2.clone();
        sorted.sort();
        assert_eq!(sorted, c2, "lexicographic order");
    }

    #[test]
    fn flat_index_conventions() {
        let l = Lattice::new(1).unwrap();
        let region = Region::cube(l, 2);
        let first = BasisLabel::new(l.coin(1).unwrap(), region.sites()[0]);
        assert_eq!(region.flat_index(&first).unwrap(), 0);
        for i in 0..region.basis_len() {
            let label = region.label(i).unwrap();
            assert_eq!(region.flat_index(&label).unwrap(), i);
        }
        let outside = BasisLabel::new(l.coin(1).unwrap(), l.site(&[3]).unwrap());
        assert!(matches!(
            region.flat_index(&outside),
            Err(Error::OutsideRegion(_))
        ));
        assert!(region.label(region.basis_len()).is_err());
    }

    #[test]
    fn table_region_matches_cube() {
        let l = Lattice::new(2).unwrap();
        let cube = Region::cube(l, 2);
        let table = Region::from_sites(l, cube.sites().to_vec()).unwrap();
        for s in cube.sites() {
            assert_eq!(cube.position(s), table.position(s));
        }
        assert!(Region::from_sites(l, vec![l.origin(), l.origin()]).is_err());
    }

    proptest! {
        #[test]
        fn cube_cardinality_and_bijection(d in 1usize..=3, radius in 0u32..4) {
            let l = Lattice::new(d).unwrap();
            let region = Region::cube(l, radius);
            prop_assert_eq!(region.len(), (2 * radius as usize + 1).pow(d as u32));
            for s in region.sites() {
                prop_assert!(s.sup_norm() <= radius);
            }
            for i in 0..region.basis_len() {
                let label = region.label(i).unwrap();
                prop_assert_eq!(region.flat_index(&label).unwrap(), i);
            }
        }
    }
}
