//! Coined random quantum walks on `Z^d`: operators, disorder, localized
//! orbits, dynamics, Green functions and spectral diagnostics.

pub mod appendix;
pub mod coin;
pub mod disorder;
pub mod dynamics;
pub mod error;
pub mod green;
pub mod lattice;
pub mod localized;
pub mod model;
pub mod seeding;
pub mod stats;
pub mod walk;

pub type C64 = num_complex::Complex64;

pub use coin::{coin_distance, perturbed_coin, permutation_coin, CoinMatrix, CoinPermutation};
pub use disorder::{decorate_coin, sample_phases, PhaseDistribution, PhaseField};
pub use error::{Error, Result};
pub use green::{green, SpectralParameter};
pub use lattice::{Basis, BasisLabel, CoinIndex, Lattice, Region, Site};
pub use model::Model;
pub use walk::{build_bulk, build_collared, WalkOperator};
