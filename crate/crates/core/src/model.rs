//! A disorder ensemble: lattice, bulk coin, collar permutation, phase law
//! and volume. Each seed yields one finite-volume realization `U^Λ_ω(C)`.

use crate::coin::{coin_distance, permutation_coin, CoinMatrix, CoinPermutation};
use crate::disorder::{sample_phases, PhaseDistribution, PhaseField};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::walk::{build_collared, WalkOperator};

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    coin: CoinMatrix,
    perm: CoinPermutation,
    distribution: PhaseDistribution,
    l: u32,
}

impl Model {
    pub fn new(coin: CoinMatrix, perm: CoinPermutation, distribution: PhaseDistribution, l: u32) -> Result<Self> {
        if coin.lattice() != perm.lattice() {
            return Err(Error::DimensionMismatch {
                expected: coin.lattice().dim(),
                got: perm.lattice().dim(),
            });
        }
        perm.require_full_cycle()?;
        if l < 3 {
            return Err(Error::Config(format!("volume needs L ≥ 3, got {l}")));
        }
        Ok(Model {
            coin,
            perm,
            distribution,
            l,
        })
    }

    /// The fully localized model `C = C_π` with uniform phases.
    pub fn localized(lattice: Lattice, l: u32) -> Result<Self> {
        let perm = CoinPermutation::standard_cycle(lattice);
        Model::new(permutation_coin(&perm), perm, PhaseDistribution::Uniform, l)
    }

    pub fn lattice(&self) -> Lattice {
        self.coin.lattice()
    }

    pub fn coin(&self) -> &CoinMatrix {
        &self.coin
    }

    pub fn perm(&self) -> &CoinPermutation {
        &self.perm
    }

    pub fn distribution(&self) -> &PhaseDistribution {
        &self.distribution
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    pub fn with_l(&self, l: u32) -> Result<Self> {
        Model::new(self.coin.clone(), self.perm.clone(), self.distribution.clone(), l)
    }

    pub fn with_coin(&self, coin: CoinMatrix) -> Result<Self> {
        Model::new(coin, self.perm.clone(), self.distribution.clone(), self.l)
    }

    pub fn with_distribution(&self, distribution: PhaseDistribution) -> Self {
        Model {
            distribution,
            ..self.clone()
        }
    }

    /// `‖C − C_π‖`.
    pub fn delta(&self) -> f64 {
        coin_distance(&self.coin, &self.perm).expect("lattices checked at construction")
    }

    pub fn is_localized(&self) -> bool {
        self.delta() == 0.0
    }

    /// Phases on the window `|x| ≤ L + 2` of the collared operator.
    pub fn sample_field(&self, seed: u64) -> PhaseField {
        sample_phases(self.lattice(), self.l + 2, &self.distribution, seed)
    }

    pub fn collared(&self, field: &PhaseField) -> Result<WalkOperator> {
        build_collared(&self.coin, &self.perm, field, self.l)
    }

    /// `U^Λ_ω(C)` for the given phases.
    pub fn restriction(&self, field: &PhaseField) -> Result<WalkOperator> {
        self.collared(field)?.invariant_restriction()
    }

    pub fn realization(&self, seed: u64) -> Result<WalkOperator> {
        self.restriction(&self.sample_field(seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn realization_is_unitary_and_reproducible() {
        let lat = Lattice::new(1).unwrap();
        let perm = CoinPermutation::standard_cycle(lat);
        let coin = crate::coin::perturbed_coin(&perm, 0.1, 4).unwrap();
        let m = Model::new(coin, perm, PhaseDistribution::Uniform, 8).unwrap();
        assert!((m.delta() - 0.1).abs() < 1e-10);
        let a = m.realization(3).unwrap();
        let b = m.realization(3).unwrap();
        assert!(a.unitarity_defect() < 1e-10);
        assert!(a.is_closed());
        assert_eq!(a.to_dense(), b.to_dense());
    }

    #[test]
    fn rejects_bad_inputs() {
        let l1 = Lattice::new(1).unwrap();
        let l2 = Lattice::new(2).unwrap();
        let p2 = CoinPermutation::standard_cycle(l2);
        assert!(Model::new(CoinMatrix::hadamard(), p2, PhaseDistribution::Uniform, 8).is_err());
        assert!(Model::localized(l1, 2).is_err());
        let partial = CoinPermutation::from_cycle(l2, &[1, -1]).unwrap();
        assert!(Model::new(CoinMatrix::identity(l2), partial, PhaseDistribution::Uniform, 8).is_err());
        assert!(Model::localized(l2, 4).unwrap().is_localized());
    }
}
