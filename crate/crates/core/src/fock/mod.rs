//! Two-mode Fock algebra for the trapped components 1 and 2.
//!
//! States of the trapped atoms are stored in the symmetric/antisymmetric
//! mode basis `b± = (b1 ± b2)/√2`, indexed by the symmetric occupation
//! `n₊`. In this basis the phase-cosine operator
//! `cos φ̂ = (b1†b2 + b2†b1) / (2√(N1 N2))` is diagonal with eigenvalue
//! `(2n₊ - N) / (2√(N1 N2))`, which for `N1 = N2 = N` is `-1 + n₊/N`.

pub mod logspace;
pub mod transform;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use logspace::{ln_binomial, ln_factorial, LogFactorials, LogSigned};

const NORM_TOL: f64 = 1e-10;

/// Atom numbers `(N1, N2)` of the initial product Fock state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SectorSpec {
    n1: usize,
    n2: usize,
}

impl SectorSpec {
    pub fn new(n1: usize, n2: usize) -> Result<Self> {
        if n1 + n2 == 0 {
            return Err(Error::InvalidInput("sector needs at least one atom".into()));
        }
        let (lo, hi) = (n1.min(n2) as f64, n1.max(n2) as f64);
        if lo > 0.0 && (hi - lo) > 0.5 * lo {
            log::warn!("sector ({n1}, {n2}) is strongly imbalanced; the protocol assumes N1 ≈ N2");
        }
        Ok(SectorSpec { n1, n2 })
    }

    /// `N1 = N2 = n`.
    pub fn symmetric(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn total(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn is_symmetric(&self) -> bool {
        self.n1 == self.n2
    }

    /// `2√(N1 N2)`, the denominator of `cos φ̂`.
    pub fn cosphi_norm(&self) -> f64 {
        2.0 * ((self.n1 as f64) * (self.n2 as f64)).sqrt()
    }
}

/// Eigenvalues of `cos φ̂` in the sector, ascending and indexed by `n₊`.
pub fn cosphi_spectrum(sector: &SectorSpec) -> Result<Vec<f64>> {
    let norm = sector.cosphi_norm();
    if norm == 0.0 {
        return Err(Error::InvalidInput(
            "cos φ is undefined when one component is empty".into(),
        ));
    }
    let total = sector.total() as f64;
    Ok((0..=sector.total())
        .map(|p| (2.0 * p as f64 - total) / norm)
        .collect())
}

fn check_norm(amps: &[Complex64]) -> Result<()> {
    let n: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    if (n - 1.0).abs() > NORM_TOL {
        return Err(Error::InvalidInput(format!("state norm {n} differs from 1")));
    }
    Ok(())
}

fn normalized(mut amps: Vec<Complex64>) -> Result<Vec<Complex64>> {
    let n: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::InvalidInput("cannot normalise a zero state".into()));
    }
    let s = 1.0 / n.sqrt();
    amps.iter_mut().for_each(|a| *a *= s);
    Ok(amps)
}

fn current_total(sector: &SectorSpec, removed: usize, len: usize) -> Result<usize> {
    if removed > sector.total() || len != sector.total() - removed + 1 {
        return Err(Error::InvalidInput(format!(
            "amplitude vector of length {len} does not fit sector {} with {removed} atoms removed",
            sector.total()
        )));
    }
    Ok(sector.total() - removed)
}

/// Trapped-atom state in the `n₊` basis.
///
/// `sector` is the initial sector and `removed` the number of atoms
/// outcoupled since, so `amps` has `sector.total() - removed + 1` entries.
/// For a depleted state `cos φ̂` is normalised with the proportionally
/// depleted occupations `N_β' = N_β M / N_tot`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlusMinusState {
    sector: SectorSpec,
    removed: usize,
    amps: Vec<Complex64>,
}

impl PlusMinusState {
    /// Wraps normalised amplitudes of the full (undepleted) sector.
    pub fn new(sector: SectorSpec, amps: Vec<Complex64>) -> Result<Self> {
        Self::with_removed(sector, 0, amps)
    }

    pub fn with_removed(sector: SectorSpec, removed: usize, amps: Vec<Complex64>) -> Result<Self> {
        current_total(&sector, removed, amps.len())?;
        check_norm(&amps)?;
        Ok(PlusMinusState {
            sector,
            removed,
            amps,
        })
    }

    /// Normalises `amps` first.
    pub fn from_unnormalized(
        sector: SectorSpec,
        removed: usize,
        amps: Vec<Complex64>,
    ) -> Result<Self> {
        current_total(&sector, removed, amps.len())?;
        Ok(PlusMinusState {
            sector,
            removed,
            amps: normalized(amps)?,
        })
    }

    /// The eigenstate `|n₊⟩` of `cos φ̂`.
    pub fn basis(sector: SectorSpec, n_plus: usize) -> Result<Self> {
        if n_plus > sector.total() {
            return Err(Error::InvalidInput(format!("n+ = {n_plus} out of range")));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); sector.total() + 1];
        amps[n_plus] = Complex64::new(1.0, 0.0);
        Ok(PlusMinusState {
            sector,
            removed: 0,
            amps,
        })
    }

    /// The initial product state `|N1, N2⟩`.
    pub fn fock(sector: SectorSpec) -> Self {
        let col = transform::column(sector.total(), sector.n1());
        PlusMinusState {
            sector,
            removed: 0,
            amps: col.into_iter().map(|v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn sector(&self) -> &SectorSpec {
        &self.sector
    }

    pub fn removed(&self) -> usize {
        self.removed
    }

    /// Current atom number `M`.
    pub fn total(&self) -> usize {
        self.amps.len() - 1
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amps(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Normalisation `2√(N1' N2')` of `cos φ̂` for the current atom number.
    pub fn cosphi_norm(&self) -> f64 {
        self.sector.cosphi_norm() * self.total() as f64 / self.sector.total() as f64
    }

    /// `cos φ̂` eigenvalue of basis state `n_plus`.
    pub fn eigenvalue(&self, n_plus: usize) -> f64 {
        (2.0 * n_plus as f64 - self.total() as f64) / self.cosphi_norm()
    }

    pub fn mean_n_plus(&self) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .map(|(p, a)| p as f64 * a.norm_sqr())
            .sum()
    }
}

/// Trapped-atom state in the `(n1, n2)` number basis, indexed by `n1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NumberBasisState {
    sector: SectorSpec,
    removed: usize,
    amps: Vec<Complex64>,
}

impl NumberBasisState {
    pub fn new(sector: SectorSpec, amps: Vec<Complex64>) -> Result<Self> {
        Self::with_removed(sector, 0, amps)
    }

    pub fn with_removed(sector: SectorSpec, removed: usize, amps: Vec<Complex64>) -> Result<Self> {
        current_total(&sector, removed, amps.len())?;
        check_norm(&amps)?;
        Ok(NumberBasisState {
            sector,
            removed,
            amps,
        })
    }

    pub fn from_unnormalized(
        sector: SectorSpec,
        removed: usize,
        amps: Vec<Complex64>,
    ) -> Result<Self> {
        current_total(&sector, removed, amps.len())?;
        Ok(NumberBasisState {
            sector,
            removed,
            amps: normalized(amps)?,
        })
    }

    /// `|N1, N2⟩`.
    pub fn fock(sector: SectorSpec) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); sector.total() + 1];
        amps[sector.n1()] = Complex64::new(1.0, 0.0);
        NumberBasisState {
            sector,
            removed: 0,
            amps,
        }
    }

    pub fn sector(&self) -> &SectorSpec {
        &self.sector
    }

    pub fn removed(&self) -> usize {
        self.removed
    }

    pub fn total(&self) -> usize {
        self.amps.len() - 1
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }
}

/// Rewrites a number-basis state in the `n₊` basis.
pub fn number_to_plusminus(state: &NumberBasisState) -> PlusMinusState {
    PlusMinusState {
        sector: state.sector,
        removed: state.removed,
        amps: transform::apply_forward(state.total(), &state.amps),
    }
}

/// Inverse of [`number_to_plusminus`].
pub fn plusminus_to_number(state: &PlusMinusState) -> NumberBasisState {
    NumberBasisState {
        sector: state.sector,
        removed: state.removed,
        amps: transform::apply_inverse(state.total(), &state.amps),
    }
}

/// `⟨cos φ̂⟩`.
pub fn cosphi_expectation(state: &PlusMinusState) -> f64 {
    state
        .amps
        .iter()
        .enumerate()
        .map(|(p, a)| a.norm_sqr() * state.eigenvalue(p))
        .sum()
}
