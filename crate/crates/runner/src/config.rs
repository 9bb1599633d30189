//! Experiment configuration: parsing, defaults and field-level validation.

use std::io::Read;
use std::path::{Path, PathBuf};

use rqw::appendix::TestFunction;
use rqw::{
    coin_distance, perturbed_coin, permutation_coin, CoinMatrix, CoinPermutation, Lattice, Model,
    PhaseDistribution, SpectralParameter, C64,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{FieldError, RunError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoinSpec {
    /// `C_π` for the given cycle (default: `+1 → −1 → +2 → … → −d → +1`).
    Permutation {
        #[serde(default)]
        cycle: Option<Vec<i32>>,
    },
    /// `C_π exp(iθH)` at operator-norm distance `delta` from `C_π`.
    Perturbed {
        #[serde(default)]
        cycle: Option<Vec<i32>>,
        delta: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Explicit rows of `[re, im]` entries, ordered `+1, −1, +2, −2, …`.
    Matrix {
        #[serde(default)]
        cycle: Option<Vec<i32>>,
        rows: Vec<Vec<[f64; 2]>>,
    },
    /// The one-dimensional family `[[t, r], [r, −t]]`.
    Family { t: f64, r: f64 },
    Hadamard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ZGrid {
    Polar { radii: Vec<f64>, angles: usize },
    Points(Vec<[f64; 2]>),
}

impl Default for ZGrid {
    fn default() -> Self {
        ZGrid::Polar {
            radii: vec![1.0 - 1e-3, 1.0 + 1e-3],
            angles: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapSpec {
    #[serde(default = "default_gap_radius")]
    pub z_radius: f64,
    #[serde(default)]
    pub z_angle: f64,
    #[serde(default = "default_etas")]
    pub etas: Vec<f64>,
}

fn default_gap_radius() -> f64 {
    1.0 - 1e-6
}

fn default_etas() -> Vec<f64> {
    (0..5).map(|k| 10f64.powf(-3.0 + 0.5 * k as f64)).collect()
}

impl Default for GapSpec {
    fn default() -> Self {
        GapSpec {
            z_radius: default_gap_radius(),
            z_angle: 0.0,
            etas: default_etas(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppendixSpec {
    #[serde(default = "default_radii")]
    pub radii: Vec<f64>,
    #[serde(default = "default_quadrature_grid")]
    pub grid: usize,
    #[serde(default = "default_functions")]
    pub functions: Vec<TestFunction>,
    /// Dimensions of the Haar unitaries used for the Poisson reconstruction.
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    /// Window sizes for the second-moment diagnostic; empty means `[L]`.
    #[serde(default)]
    pub graf_sizes: Vec<u32>,
    #[serde(default = "default_graf_distances")]
    pub graf_distances: (u32, u32),
    #[serde(default = "default_backgrounds")]
    pub backgrounds: usize,
}

fn default_radii() -> Vec<f64> {
    vec![0.9, 0.99, 0.999]
}

fn default_quadrature_grid() -> usize {
    1 << 16
}

fn default_functions() -> Vec<TestFunction> {
    vec![TestFunction::One, TestFunction::Z, TestFunction::Z2]
}

fn default_dims() -> Vec<usize> {
    vec![8, 16, 32, 64]
}

fn default_graf_distances() -> (u32, u32) {
    (2, 6)
}

fn default_backgrounds() -> usize {
    8
}

impl Default for AppendixSpec {
    fn default() -> Self {
        AppendixSpec {
            radii: default_radii(),
            grid: default_quadrature_grid(),
            functions: default_functions(),
            dims: default_dims(),
            graf_sizes: Vec::new(),
            graf_distances: default_graf_distances(),
            backgrounds: default_backgrounds(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub d: usize,
    #[serde(rename = "L", alias = "l")]
    pub l: u32,
    pub coin: CoinSpec,
    #[serde(default)]
    pub phases: PhaseDistribution,
    #[serde(default = "default_s")]
    pub s: Vec<f64>,
    #[serde(default)]
    pub z_grid: ZGrid,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_p")]
    pub p: f64,
    pub samples: usize,
    pub seed: u64,
    /// Distances `[min, max]` probed by `green` and `correlator`; defaults
    /// to `[2, L/2]`.
    #[serde(default)]
    pub distances: Option<(u32, u32)>,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default)]
    pub gap: GapSpec,
    #[serde(default)]
    pub appendix: AppendixSpec,
    #[serde(default, skip_serializing)]
    pub output: Option<PathBuf>,
}

fn default_s() -> Vec<f64> {
    vec![0.5]
}

fn default_horizon() -> usize {
    1000
}

fn default_p() -> f64 {
    1.0
}

fn default_resamples() -> usize {
    1000
}

/// Removes `//` and `/* */` comments, leaving string literals intact.
pub fn strip_comments(text: &str) -> Result<String, RunError> {
    let mut out = String::new();
    json_comments::StripComments::new(text.as_bytes())
        .read_to_string(&mut out)
        .map_err(|e| RunError::config("", format!("cannot strip comments: {e}")))?;
    Ok(out)
}

impl ExperimentConfig {
    pub fn from_str(text: &str) -> Result<Self, RunError> {
        let clean = strip_comments(text)?;
        let de = &mut serde_json::Deserializer::from_str(&clean);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { String::new() } else { path };
            RunError::config(&field, e.inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::config("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_str(&text)
    }

    /// Checks every field and reports all violations at once.
    pub fn validate(&self) -> Result<(), RunError> {
        let mut errs = Vec::new();
        let mut bad = |field: &str, msg: String| errs.push(FieldError::new(field, msg));
        if self.schema_version != SCHEMA_VERSION {
            bad(
                "schema_version",
                format!("unsupported schema version {}, expected {SCHEMA_VERSION}", self.schema_version),
            );
        }
        if !(1..=3).contains(&self.d) {
            bad("d", format!("must be 1, 2 or 3, got {}", self.d));
        }
        if self.l < 3 {
            bad("L", format!("must be at least 3, got {}", self.l));
        }
        match &self.coin {
            CoinSpec::Perturbed { delta, .. } if !(0.0..=2.0).contains(delta) => {
                bad("coin.delta", format!("must lie in [0, 2], got {delta}"));
            }
            CoinSpec::Matrix { rows, .. } => {
                let n = 2 * self.d;
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    bad("coin.rows", format!("must be a {n}×{n} matrix"));
                }
            }
            CoinSpec::Family { .. } | CoinSpec::Hadamard if self.d != 1 => {
                bad("coin.kind", format!("the reflection family needs d = 1, got d = {}", self.d));
            }
            _ => {}
        }
        if self.s.is_empty() {
            bad("s", "must list at least one exponent".into());
        }
        for (i, s) in self.s.iter().enumerate() {
            if !(*s > 0.0 && *s < 1.0) {
                bad(&format!("s[{i}]"), format!("must lie in the open interval (0, 1), got {s}"));
            }
        }
        if let Err(e) = self.spectral_grid() {
            bad("z_grid", e);
        }
        if self.horizon < rqw::dynamics::MIN_HORIZON {
            bad(
                "horizon",
                format!("must be at least {}, got {}", rqw::dynamics::MIN_HORIZON, self.horizon),
            );
        }
        if !(self.p >= 0.0 && self.p.is_finite()) {
            bad("p", format!("must be a finite nonnegative number, got {}", self.p));
        }
        if self.samples == 0 {
            bad("samples", "must be at least 1".into());
        }
        if let Some((a, b)) = self.distances {
            if a < 2 || b < a || b > self.l {
                bad("distances", format!("need 2 ≤ min ≤ max ≤ L, got [{a}, {b}]"));
            }
        }
        if self.bootstrap_resamples == 0 {
            bad("bootstrap_resamples", "must be at least 1".into());
        }
        let g = &self.gap;
        if !(g.z_radius > 0.0) || g.z_radius == 1.0 {
            bad("gap.z_radius", format!("must be positive and off the unit circle, got {}", g.z_radius));
        }
        if g.etas.is_empty() || g.etas.iter().any(|e| !(*e > 0.0)) {
            bad("gap.etas", "must be a nonempty list of positive numbers".into());
        }
        let a = &self.appendix;
        for (i, r) in a.radii.iter().enumerate() {
            if !(*r > 0.0 && *r < 1.0) {
                bad(&format!("appendix.radii[{i}]"), format!("must lie in (0, 1), got {r}"));
            } else if let Err(e) = rqw::appendix::PoissonConfig::new(*r, a.grid, TestFunction::One) {
                bad("appendix.grid", e.to_string());
            }
        }
        if a.dims.iter().any(|&n| n == 0) {
            bad("appendix.dims", "dimensions must be positive".into());
        }
        if a.functions.is_empty() {
            bad("appendix.functions", "must list at least one test function".into());
        }
        if a.graf_sizes.iter().any(|&l| l < 3) {
            bad("appendix.graf_sizes", "window sizes must be at least 3".into());
        }
        let (ga, gb) = a.graf_distances;
        if ga < 2 || gb < ga {
            bad("appendix.graf_distances", format!("need 2 ≤ min ≤ max, got [{ga}, {gb}]"));
        }
        let smallest = a.graf_sizes.iter().copied().min().unwrap_or(self.l);
        if gb > smallest {
            bad(
                "appendix.graf_distances",
                format!("max distance {gb} exceeds the smallest window {smallest}"),
            );
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(RunError::Config(errs))
        }
    }

    pub fn lattice(&self) -> Lattice {
        Lattice::new(self.d).expect("validated dimension")
    }

    pub fn spectral_grid(&self) -> Result<Vec<SpectralParameter>, String> {
        let grid = match &self.z_grid {
            ZGrid::Polar { radii, angles } => SpectralParameter::grid(radii, *angles),
            ZGrid::Points(pts) => pts
                .iter()
                .map(|p| SpectralParameter::new(C64::new(p[0], p[1])))
                .collect(),
        }
        .map_err(|e| e.to_string())?;
        if grid.is_empty() {
            return Err("must contain at least one point".into());
        }
        Ok(grid)
    }

    pub fn distance_range(&self) -> (u32, u32) {
        self.distances.unwrap_or((2, self.l / 2))
    }

    fn permutation(&self, cycle: &Option<Vec<i32>>) -> Result<CoinPermutation, RunError> {
        let lattice = self.lattice();
        match cycle {
            None => Ok(CoinPermutation::standard_cycle(lattice)),
            Some(c) => CoinPermutation::from_cycle(lattice, c).map_err(|e| RunError::config("coin.cycle", e.to_string())),
        }
    }

    /// The coin, its reference permutation, and `‖C − C_π‖`.
    pub fn coin(&self) -> Result<(CoinMatrix, CoinPermutation, f64), RunError> {
        let lattice = self.lattice();
        let (coin, perm) = match &self.coin {
            CoinSpec::Permutation { cycle } => {
                let perm = self.permutation(cycle)?;
                (permutation_coin(&perm), perm)
            }
            CoinSpec::Perturbed { cycle, delta, seed } => {
                let perm = self.permutation(cycle)?;
                let c = perturbed_coin(&perm, *delta, *seed).map_err(|e| RunError::config("coin.delta", e.to_string()))?;
                (c, perm)
            }
            CoinSpec::Matrix { cycle, rows } => {
                let perm = self.permutation(cycle)?;
                let rows: Vec<Vec<C64>> = rows
                    .iter()
                    .map(|r| r.iter().map(|v| C64::new(v[0], v[1])).collect())
                    .collect();
                let c = CoinMatrix::from_rows(lattice, &rows).map_err(|e| RunError::config("coin.rows", e.to_string()))?;
                (c, perm)
            }
            CoinSpec::Family { t, r } => {
                let c = CoinMatrix::reflection(*t, *r).map_err(|e| RunError::config("coin", e.to_string()))?;
                (c, CoinPermutation::standard_cycle(lattice))
            }
            CoinSpec::Hadamard => (CoinMatrix::hadamard(), CoinPermutation::standard_cycle(lattice)),
        };
        let delta = coin_distance(&coin, &perm).map_err(|e| RunError::config("coin", e.to_string()))?;
        Ok((coin, perm, delta))
    }

    pub fn model(&self) -> Result<Model, RunError> {
        let (coin, perm, _) = self.coin()?;
        Model::new(coin, perm, self.phases.clone(), self.l).map_err(|e| RunError::config("coin", e.to_string()))
    }

    /// Canonical serialization: defaults filled in, output directory omitted.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
