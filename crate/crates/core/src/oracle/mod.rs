//! Brute-force references for tiny systems.
//!
//! Everything here works on explicit dense matrices in the occupation
//! number basis and shares no code with the fast paths it is used to
//! check: three-mode unitary evolution under the Λ-coupling Hamiltonian,
//! two-mode operator algebra, and the master equation of continuous
//! detection through the jump operator `√W (b1 + b2)`. Units have ħ = 1.

pub mod dense;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::SectorSpec;

pub use dense::{expm, DenseFockSpace, DIMENSION_CAP};

/// Mode slots used by the three-mode space.
pub const LEVEL1: usize = 0;
pub const LEVEL2: usize = 1;
pub const LEVEL0: usize = 2;

/// State vector on the three-mode space at fixed total atom number.
#[derive(Debug, Clone)]
pub struct ThreeModeState {
    pub space: DenseFockSpace,
    pub amps: DVector<f64>,
}

impl ThreeModeState {
    pub fn total(&self) -> usize {
        self.space.basis()[0].iter().sum()
    }

    /// `P(n0)` for `n0 = 0..=total`.
    pub fn n0_marginal(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.total() + 1];
        for (occ, a) in self.space.basis().iter().zip(self.amps.iter()) {
            p[occ[LEVEL0]] += a * a;
        }
        p
    }

    /// Unnormalised trapped amplitudes `⟨n1, M - n0 - n1; n0|ψ⟩`, indexed by `n1`.
    pub fn trapped_given_n0(&self, n0: usize) -> Vec<f64> {
        let m = self.total() - n0;
        let mut out = vec![0.0; m + 1];
        for (occ, a) in self.space.basis().iter().zip(self.amps.iter()) {
            if occ[LEVEL0] == n0 {
                out[occ[LEVEL1]] = *a;
            }
        }
        out
    }

    pub fn mean_number(&self, mode: usize) -> f64 {
        self.space
            .basis()
            .iter()
            .zip(self.amps.iter())
            .map(|(occ, a)| occ[mode] as f64 * a * a)
            .sum()
    }
}

/// `exp(-iĤt)|N1, N2, 0⟩` with
/// `Ĥ = i[V1(b0†b1 - b1†b0) + V2(b0†b2 - b2†b0)]`.
pub fn dense_unitary_evolve(sector: &SectorSpec, v1: f64, v2: f64, t: f64) -> Result<ThreeModeState> {
    let space = DenseFockSpace::fixed_total(3, sector.total())?;
    let gen = (space.hopping(LEVEL0, LEVEL1) - space.hopping(LEVEL1, LEVEL0)) * v1
        + (space.hopping(LEVEL0, LEVEL2) - space.hopping(LEVEL2, LEVEL0)) * v2;
    // Ĥ = iK with K real antisymmetric, so exp(-iĤt) = exp(Kt) is real orthogonal
    let u = expm(&(gen * t));
    let psi0 = space.basis_vector(&[sector.n1(), sector.n2(), 0])?;
    let amps = u * psi0;
    Ok(ThreeModeState { space, amps })
}

/// Two-mode space `(n1, n2)` at fixed total; index `i` holds `n1 = total - i`.
pub fn two_mode_space(total: usize) -> Result<DenseFockSpace> {
    DenseFockSpace::fixed_total(2, total)
}

/// `(b1†b2 + b2†b1) / (2√(N1 N2))` on the sector.
pub fn cosphi_matrix(sector: &SectorSpec) -> Result<DMatrix<f64>> {
    let space = two_mode_space(sector.total())?;
    let norm = sector.cosphi_norm();
    if norm == 0.0 {
        return Err(Error::InvalidInput("cos φ needs both components".into()));
    }
    Ok((space.hopping(0, 1) + space.hopping(1, 0)) / norm)
}

/// `exp(θ (b1†b2 - b2†b1))` on the two-mode sector.
pub fn beam_splitter(total: usize, theta: f64) -> Result<DMatrix<f64>> {
    let space = two_mode_space(total)?;
    let gen = space.hopping(0, 1) - space.hopping(1, 0);
    Ok(expm(&(gen * theta)))
}

/// The `n₊`-basis transform `T[p][n1]` assembled from [`beam_splitter`].
///
/// `U = exp(π/4 (b1†b2 - b2†b1))` maps `b1† → b-†` and `b2† → b+†`, so
/// `⟨n₊ = p, n₋ | n1, n2⟩ = ⟨n1' = n₋, n2' = p | U† | n1, n2⟩`.
pub fn dense_plusminus_transform(total: usize) -> Result<Vec<Vec<f64>>> {
    let u_dag = beam_splitter(total, -std::f64::consts::FRAC_PI_4)?;
    // index i <-> n1 = total - i
    let idx = |n1: usize| total - n1;
    Ok((0..=total)
        .map(|p| {
            (0..=total)
                .map(|n1| u_dag[(idx(total - p), idx(n1))])
                .collect()
        })
        .collect())
}

/// Master equation `dρ/dt = cρc† - ½{c†c, ρ}` with `c = √W (b1 + b2)` on
/// the trapped modes, over all atom numbers up to the initial one.
#[derive(Debug, Clone)]
pub struct LindbladOracle {
    pub space: DenseFockSpace,
    jump: DMatrix<Complex64>,
    jump_dag: DMatrix<Complex64>,
    rate_op: DMatrix<Complex64>,
}

/// Per unit `Wt`.
pub const LINDBLAD_TOL: f64 = 1e-10;

impl LindbladOracle {
    pub fn new(max_total: usize, w: f64) -> Result<Self> {
        let space = DenseFockSpace::up_to_total(2, max_total)?;
        let c = (space.annihilation(0) + space.annihilation(1)) * w.sqrt();
        let jump = c.map(|v| Complex64::new(v, 0.0));
        let jump_dag = jump.adjoint();
        let rate_op = &jump_dag * &jump;
        Ok(LindbladOracle {
            space,
            jump,
            jump_dag,
            rate_op,
        })
    }

    pub fn pure(&self, psi: &DVector<Complex64>) -> DMatrix<Complex64> {
        psi * psi.adjoint()
    }

    fn rhs(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let half = Complex64::new(0.5, 0.0);
        &self.jump * rho * &self.jump_dag - (&self.rate_op * rho + rho * &self.rate_op) * half
    }

    fn rk4(&self, rho: &DMatrix<Complex64>, h: f64) -> DMatrix<Complex64> {
        let k1 = self.rhs(rho);
        let k2 = self.rhs(&(rho + &k1 * Complex64::new(h / 2.0, 0.0)));
        let k3 = self.rhs(&(rho + &k2 * Complex64::new(h / 2.0, 0.0)));
        let k4 = self.rhs(&(rho + &k3 * Complex64::new(h, 0.0)));
        rho + (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4)
            * Complex64::new(h / 6.0, 0.0)
    }

    /// Integrates to time `t` with step-doubling error control.
    pub fn evolve(&self, rho0: &DMatrix<Complex64>, t: f64) -> Result<DMatrix<Complex64>> {
        let scale = self.rate_op.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
        let mut rho = rho0.clone();
        let mut time = 0.0;
        let mut h = (0.1 / scale).min(t);
        while time < t {
            h = h.min(t - time);
            let full = self.rk4(&rho, h);
            let half = self.rk4(&self.rk4(&rho, h / 2.0), h / 2.0);
            let err = (&half - &full).iter().map(|v| v.norm()).fold(0.0, f64::max) / 15.0;
            let allowed = LINDBLAD_TOL * h * scale;
            if err <= allowed {
                time += h;
                // Richardson extrapolation of the two estimates
                rho = &half + (&half - &full) / Complex64::new(15.0, 0.0);
            }
            let factor = if err == 0.0 {
                2.0
            } else {
                (0.9 * (allowed / err).powf(0.2)).clamp(0.2, 2.0)
            };
            h *= factor;
            if h < 1e-14 * t.max(1e-300) && time < t {
                return Err(Error::StepControlFailure { step: h, time });
            }
        }
        Ok(rho)
    }

    /// Smallest eigenvalue of the Hermitian part of `rho`.
    pub fn min_eigenvalue(rho: &DMatrix<Complex64>) -> f64 {
        let herm = (rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
        herm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn trace(rho: &DMatrix<Complex64>) -> f64 {
        rho.diagonal().iter().map(|v| v.re).sum()
    }

    /// `Tr[ρ (n1 + n2)]`.
    pub fn mean_total(&self, rho: &DMatrix<Complex64>) -> f64 {
        self.space
            .basis()
            .iter()
            .enumerate()
            .map(|(i, occ)| (occ[0] + occ[1]) as f64 * rho[(i, i)].re)
            .sum()
    }
}

/// Largest element modulus.
pub fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Conditional state of continuous detection with the given waiting times,
/// propagated with dense no-jump and jump matrices. `tail` is extra no-jump
/// evolution after the last detection. Returns normalised amplitudes over
/// `n1` of the final sector.
pub fn dense_conditional_state(sector: &SectorSpec, w: f64, taus: &[f64], tail: f64) -> Result<Vec<f64>> {
    let space = DenseFockSpace::up_to_total(2, sector.total())?;
    let c = (space.annihilation(0) + space.annihilation(1)) * w.sqrt();
    let rate = c.transpose() * &c;
    let mut psi = space.basis_vector(&[sector.n1(), sector.n2()])?;
    for &tau in taus {
        psi = expm(&(&rate * (-0.5 * tau))) * psi;
        psi = &c * psi;
        let n = psi.norm();
        if n == 0.0 {
            return Err(Error::InvalidInput("jump annihilated the state".into()));
        }
        psi /= n;
    }
    psi = expm(&(&rate * (-0.5 * tail))) * psi;
    psi /= psi.norm();
    let m = sector.total() - taus.len();
    let mut out = vec![0.0; m + 1];
    for (occ, a) in space.basis().iter().zip(psi.iter()) {
        if occ[0] + occ[1] == m {
            out[occ[0]] = *a;
        }
    }
    Ok(out)
}
