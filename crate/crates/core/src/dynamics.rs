//! Time evolution `U^n ψ`, the position moments `‖|X|^p U^n ψ‖`, and
//! transport-exponent fits.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Basis, BasisLabel};
use crate::stats::{fit_line, LineFit};
use crate::walk::WalkOperator;
use crate::C64;

/// Minimal horizon accepted by [`transport_series`].
pub const MIN_HORIZON: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    basis: Arc<Basis>,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn basis_state(basis: Arc<Basis>, label: &BasisLabel) -> Result<Self> {
        let i = basis.require(label)?;
        let mut amps = vec![C64::new(0.0, 0.0); basis.len()];
        amps[i] = C64::new(1.0, 0.0);
        Ok(StateVector { basis, amps })
    }

    /// A normalized superposition of the given labels with the given weights.
    pub fn superposition(basis: Arc<Basis>, terms: &[(BasisLabel, C64)]) -> Result<Self> {
        let mut amps = vec![C64::new(0.0, 0.0); basis.len()];
        for (l, a) in terms {
            amps[basis.require(l)?] += a;
        }
        let mut s = StateVector { basis, amps };
        let n = s.norm();
        if n == 0.0 {
            return Err(Error::Config("superposition has zero norm".into()));
        }
        s.amps.iter_mut().for_each(|a| *a /= n);
        Ok(s)
    }

    pub fn from_amplitudes(basis: Arc<Basis>, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                got: amps.len(),
            });
        }
        Ok(StateVector { basis, amps })
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn support(&self) -> Vec<BasisLabel> {
        self.amps
            .iter()
            .enumerate()
            .filter(|(_, a)| a.norm_sqr() > 0.0)
            .map(|(i, _)| self.basis.label(i))
            .collect()
    }

    /// `max |x|` over the support.
    pub fn support_radius(&self) -> u32 {
        self.support().iter().map(|l| l.site.sup_norm()).max().unwrap_or(0)
    }
}

fn check_basis(op: &WalkOperator, psi: &StateVector) -> Result<()> {
    if psi.amps.len() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            got: psi.amps.len(),
        });
    }
    if !Arc::ptr_eq(op.basis(), &psi.basis) && op.basis().labels() != psi.basis.labels() {
        return Err(Error::Config("state and operator use different bases".into()));
    }
    Ok(())
}

/// `U^n ψ₀`; negative `n` applies the adjoint.
pub fn evolve(op: &WalkOperator, psi0: &StateVector, n: i64) -> Result<StateVector> {
    check_basis(op, psi0)?;
    let mut cur = psi0.amps.clone();
    let mut next = vec![C64::new(0.0, 0.0); cur.len()];
    for _ in 0..n.unsigned_abs() {
        if n > 0 {
            op.apply_into(&cur, &mut next)?;
        } else {
            op.apply_adjoint_into(&cur, &mut next)?;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(StateVector {
        basis: psi0.basis.clone(),
        amps: cur,
    })
}

/// `‖|X|^p ψ‖ = (Σ |x|^{2p} |ψ(τ, x)|²)^{1/2}` with the sup norm, `0^0 = 1`.
pub fn position_moment(psi: &StateVector, p: f64) -> f64 {
    moment_of(&psi.basis, &psi.amps, p)
}

fn moment_of(basis: &Basis, amps: &[C64], p: f64) -> f64 {
    amps.iter()
        .enumerate()
        .filter(|(_, a)| a.norm_sqr() > 0.0)
        .map(|(i, a)| {
            let r = basis.label(i).site.sup_norm() as f64;
            let w = if p == 0.0 { 1.0 } else { r.powf(2.0 * p) };
            w * a.norm_sqr()
        })
        .sum::<f64>()
        .sqrt()
}

/// Moments `m_n = ‖|X|^p U^n ψ₀‖` for `n = 0 … N` and the growth fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportSeries {
    pub p: f64,
    pub moments: Vec<f64>,
    /// Slope of `log m_n` against `log n` over the tail half.
    pub exponent: Option<f64>,
    pub fit: Option<LineFit>,
    /// Realized supremum of the moments over the horizon.
    pub sup: f64,
}

impl TransportSeries {
    pub fn from_moments(p: f64, moments: Vec<f64>) -> Self {
        let fit = growth_fit(&moments);
        let sup = moments.iter().copied().fold(0.0, f64::max);
        TransportSeries {
            p,
            exponent: fit.map(|f| f.slope),
            fit,
            moments,
            sup,
        }
    }

    pub fn horizon(&self) -> usize {
        self.moments.len().saturating_sub(1)
    }

    /// Pointwise mean of several series with the same horizon and order.
    pub fn average(series: &[TransportSeries]) -> Result<Self> {
        let first = series
            .first()
            .ok_or_else(|| Error::Config("no series to average".into()))?;
        let len = first.moments.len();
        let mut acc = vec![0.0; len];
        for s in series {
            if s.moments.len() != len || s.p != first.p {
                return Err(Error::Config("series have different shapes".into()));
            }
            for (a, m) in acc.iter_mut().zip(&s.moments) {
                *a += m;
            }
        }
        let k = series.len() as f64;
        Ok(TransportSeries::from_moments(
            first.p,
            acc.into_iter().map(|a| a / k).collect(),
        ))
    }

    /// `max_{n ∈ [a, b]} m_n`.
    pub fn max_over(&self, a: usize, b: usize) -> f64 {
        self.moments[a..=b.min(self.horizon())]
            .iter()
            .copied()
            .fold(0.0, f64::max)
    }

    /// CSV body `n,moment`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,moment\n");
        for (n, m) in self.moments.iter().enumerate() {
            s.push_str(&format!("{n},{m:.12e}\n"));
        }
        s
    }
}

/// Least squares on `(log n, log m_n)` over `n ∈ [N/2, N]`, skipping zeros.
pub fn growth_fit(moments: &[f64]) -> Option<LineFit> {
    let horizon = moments.len().checked_sub(1)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = (horizon / 2..=horizon)
        .filter(|&n| n > 0 && moments[n] > 0.0)
        .map(|n| ((n as f64).ln(), moments[n].ln()))
        .unzip();
    fit_line(&xs, &ys)
}

pub fn transport_series(op: &WalkOperator, psi0: &StateVector, horizon: usize, p: f64) -> Result<TransportSeries> {
    if horizon < MIN_HORIZON {
        return Err(Error::Config(format!(
            "transport horizon must be at least {MIN_HORIZON}, got {horizon}"
        )));
    }
    check_basis(op, psi0)?;
    let mut cur = psi0.amps.clone();
    let mut next = vec![C64::new(0.0, 0.0); cur.len()];
    let mut moments = Vec::with_capacity(horizon + 1);
    moments.push(moment_of(&psi0.basis, &cur, p));
    for _ in 0..horizon {
        op.apply_into(&cur, &mut next)?;
        std::mem::swap(&mut cur, &mut next);
        moments.push(moment_of(&psi0.basis, &cur, p));
    }
    Ok(TransportSeries::from_moments(p, moments))
}

/// Collar size that keeps a walker started within `support_radius` away
/// from the boundary for `horizon` steps.
pub fn collar_for_horizon(horizon: usize, support_radius: u32) -> u32 {
    horizon as u32 + support_radius + 3
}
