//! Snapshot measurement after coherent outcoupling.
//!
//! The Λ coupling only touches the bright mode `c = cos α b1 + sin α b2`,
//! which Rabi-rotates into level 0: `c† → cos Vt c† + sin Vt b0†`. Writing
//! the initial Fock product in the `(c, d)` mode basis therefore makes the
//! joint state a product of a mode rotation and independent binomial
//! splittings of each `c` occupation. For `α = π/4` the bright mode is
//! `b₊` itself and no rotation is needed.

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{ln_binomial, ln_factorial, transform, PlusMinusState, SectorSpec};
use crate::histogram::CountHistogram;

/// `⟨n₀⟩ / min(N1, N2)` above which the undepleted picture is rejected.
pub const UNDEPLETED_RATIO: f64 = 0.1;
/// Weight allowed beyond the `n₀` truncation.
pub const TRUNCATION_TAIL: f64 = 1e-10;
const ZERO_PROBABILITY: f64 = 1e-30;
const ALPHA_TOL: f64 = 1e-12;

/// Rabi couplings `V₁ = V cos α`, `V₂ = V sin α` and pulse length `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub v: f64,
    pub alpha: f64,
    pub t: f64,
}

impl CouplingParams {
    pub fn new(v: f64, alpha: f64, t: f64) -> Result<Self> {
        let p = CouplingParams { v, alpha, t };
        p.validate()?;
        Ok(p)
    }

    /// Equal couplings, `V = 1`, pulse chosen so that `sin²Vt = sin2`.
    pub fn equal_with_sin2(sin2: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&sin2) {
            return Err(Error::InvalidInput(format!("sin²Vt must lie in [0, 1], got {sin2}")));
        }
        Self::new(1.0, FRAC_PI_4, sin2.sqrt().asin())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v > 0.0) || !self.v.is_finite() {
            return Err(Error::InvalidInput(format!("V must be positive, got {}", self.v)));
        }
        if !(self.alpha > 0.0 && self.alpha < PI / 2.0) {
            return Err(Error::InvalidInput(format!(
                "alpha must lie in (0, pi/2), got {}",
                self.alpha
            )));
        }
        if !(self.t >= 0.0) || !self.t.is_finite() {
            return Err(Error::InvalidInput(format!("t must be >= 0, got {}", self.t)));
        }
        Ok(())
    }

    pub fn vt(&self) -> f64 {
        self.v * self.t
    }

    pub fn sin2(&self) -> f64 {
        self.vt().sin().powi(2)
    }

    pub fn is_equal_coupling(&self) -> bool {
        (self.alpha - FRAC_PI_4).abs() < ALPHA_TOL
    }

    /// `sin²Vt (N1 cos²α + N2 sin²α)`.
    pub fn expected_n0(&self, sector: &SectorSpec) -> f64 {
        let (c, s) = (self.alpha.cos(), self.alpha.sin());
        self.sin2() * (sector.n1() as f64 * c * c + sector.n2() as f64 * s * s)
    }

    pub fn check_undepleted(&self, sector: &SectorSpec) -> Result<()> {
        let bound = UNDEPLETED_RATIO * sector.n1().min(sector.n2()) as f64;
        let value = self.expected_n0(sector);
        if value >= bound {
            return Err(Error::UndepletedAssumptionViolated {
                what: "mean outcoupled atom number",
                value,
                bound,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    /// Largest `n₀` kept. When unset, starts from `⌈⟨n₀⟩ + 10σ⌉` and
    /// grows until the tail is below [`TRUNCATION_TAIL`].
    pub n0_max: Option<usize>,
    /// The expansion is exact either way; the check guards the
    /// undepleted-pump reading of its output.
    pub enforce_undepleted: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            n0_max: None,
            enforce_undepleted: true,
        }
    }
}

/// Amplitudes over `(n₊, n₀)`. Column `n₀` holds the trapped state of
/// `N_tot - n₀` atoms in its own `n₊` basis.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    sector: SectorSpec,
    params: CouplingParams,
    columns: Vec<Vec<Complex64>>,
    tail: f64,
}

impl JointState {
    pub fn sector(&self) -> &SectorSpec {
        &self.sector
    }

    pub fn params(&self) -> &CouplingParams {
        &self.params
    }

    pub fn n0_max(&self) -> usize {
        self.columns.len() - 1
    }

    pub fn column(&self, n0: usize) -> &[Complex64] {
        &self.columns[n0]
    }

    /// Amplitude of `|n₊⟩|n₀⟩`, zero outside the stored range.
    pub fn amp(&self, n_plus: usize, n0: usize) -> Complex64 {
        self.columns
            .get(n0)
            .and_then(|c| c.get(n_plus))
            .copied()
            .unwrap_or_default()
    }

    /// Probability beyond `n0_max`.
    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn norm_sqr(&self) -> f64 {
        self.columns
            .iter()
            .flat_map(|c| c.iter())
            .map(|a| a.norm_sqr())
            .sum()
    }
}

/// Exact `(mean, variance)` of `n₀`: each of the `k` bright-mode atoms is
/// outcoupled independently with probability `sin²Vt`.
pub fn exact_n0_moments(sector: &SectorSpec, params: &CouplingParams) -> (f64, f64) {
    let weights = bright_mode_weights(sector, params);
    let (mut m1, mut m2) = (0.0, 0.0);
    for (k, w) in weights.iter().enumerate() {
        m1 += k as f64 * w;
        m2 += (k * k) as f64 * w;
    }
    let s2 = params.sin2();
    let var_k = m2 - m1 * m1;
    (s2 * m1, m1 * s2 * (1.0 - s2) + s2 * s2 * var_k)
}

/// `N sin²Vt` and `N sin²Vt cos²Vt + ½N² sin⁴Vt`, stated for equal couplings
/// and `N1 = N2 = N`.
pub fn n0_moments(sector: &SectorSpec, params: &CouplingParams) -> Result<(f64, f64)> {
    if !params.is_equal_coupling() || !sector.is_symmetric() {
        return Err(Error::FormulaScope(format!(
            "closed-form moments need alpha = pi/4 and N1 = N2, got alpha = {}, N1 = {}, N2 = {}",
            params.alpha,
            sector.n1(),
            sector.n2()
        )));
    }
    let n = sector.n1() as f64;
    let s2 = params.sin2();
    Ok((n * s2, n * s2 * (1.0 - s2) + 0.5 * n * n * s2 * s2))
}

/// `⌈⟨n₀⟩ + 10σ⌉` from the exact moments, clamped to `N_tot`.
pub fn default_n0_max(sector: &SectorSpec, params: &CouplingParams) -> usize {
    let (m, v) = exact_n0_moments(sector, params);
    ((m + 10.0 * v.sqrt()).ceil() as usize).min(sector.total())
}

/// Occupation distribution of the bright mode in `|N1, N2⟩`.
fn bright_mode_weights(sector: &SectorSpec, params: &CouplingParams) -> Vec<f64> {
    if params.is_equal_coupling() {
        PlusMinusState::fock(*sector).probabilities()
    } else {
        bright_mode_amps(sector, params.alpha)
            .iter()
            .map(|a| a.norm_sqr())
            .collect()
    }
}

/// `⟨k_c, M - k_c | N1, N2⟩`.
fn bright_mode_amps(sector: &SectorSpec, alpha: f64) -> Vec<Complex64> {
    let mut fock = vec![Complex64::new(0.0, 0.0); sector.total() + 1];
    fock[sector.n1()] = Complex64::new(1.0, 0.0);
    transform::rotate_y(sector.total(), -2.0 * alpha, &fock)
}

/// `ln(√C(k, n0) |cos Vt|^{k-n0} |sin Vt|^{n0})` and its sign.
fn split_factor(k: usize, n0: usize, ln_c: f64, ln_s: f64, neg_c: bool, neg_s: bool) -> (f64, f64) {
    let mut ln = 0.5 * ln_binomial(k, n0);
    if k > n0 {
        ln += (k - n0) as f64 * ln_c;
    }
    if n0 > 0 {
        ln += n0 as f64 * ln_s;
    }
    let odd = (neg_c && (k - n0) % 2 == 1) ^ (neg_s && n0 % 2 == 1);
    (ln, if odd { -1.0 } else { 1.0 })
}

/// Splits each bright-mode occupation `k` into `(k - n0)` trapped and
/// `n0` outcoupled atoms.
fn outcouple(bright: &[Complex64], n0: usize, vt: f64) -> Vec<Complex64> {
    let (c, s) = (vt.cos(), vt.sin());
    let (ln_c, ln_s) = (c.abs().ln(), s.abs().ln());
    (n0..bright.len())
        .map(|k| {
            let a = bright[k];
            if a.norm_sqr() == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let (ln, sign) = split_factor(k, n0, ln_c, ln_s, c < 0.0, s < 0.0);
            a * (sign * ln.exp())
        })
        .collect()
}

/// Joint state of the trapped modes and level 0 after the pulse.
pub fn evolve_general_alpha(sector: SectorSpec, params: CouplingParams) -> Result<JointState> {
    evolve_with(sector, params, &EvolveOptions::default())
}

pub fn evolve_with(
    sector: SectorSpec,
    params: CouplingParams,
    options: &EvolveOptions,
) -> Result<JointState> {
    params.validate()?;
    if options.enforce_undepleted {
        params.check_undepleted(&sector)?;
    }
    let total = sector.total();
    let vt = params.vt();
    let bright = if params.is_equal_coupling() {
        PlusMinusState::fock(sector).into_amps()
    } else {
        bright_mode_amps(&sector, params.alpha)
    };
    let column = |n0: usize| -> Vec<Complex64> {
        let split = outcouple(&bright, n0, vt);
        if params.is_equal_coupling() {
            return split;
        }
        let rest = total - n0;
        let number = transform::rotate_y(rest, 2.0 * params.alpha, &split);
        transform::apply_forward(rest, &number)
    };

    let mut n0_max = options
        .n0_max
        .unwrap_or_else(|| default_n0_max(&sector, &params))
        .min(total);
    let mut columns: Vec<Vec<Complex64>> = (0..=n0_max).into_par_iter().map(column).collect();
    let weight = |cols: &[Vec<Complex64>]| -> f64 {
        cols.iter().flat_map(|c| c.iter()).map(|a| a.norm_sqr()).sum()
    };
    let mut tail = (1.0 - weight(&columns)).max(0.0);
    // the 10σ guess undershoots the long tail of small sectors
    while options.n0_max.is_none() && n0_max < total && tail > TRUNCATION_TAIL {
        let grown = (2 * n0_max + 1).min(total);
        let extra: Vec<Vec<Complex64>> = (n0_max + 1..=grown).into_par_iter().map(column).collect();
        columns.extend(extra);
        n0_max = grown;
        tail = (1.0 - weight(&columns)).max(0.0);
    }
    if n0_max < total && tail > TRUNCATION_TAIL {
        return Err(Error::Truncation { n0_max, tail });
    }
    Ok(JointState {
        sector,
        params,
        columns,
        tail,
    })
}

/// Closed-form coefficient of `|j⟩₁₂|n₀⟩₀` for `N1 = N2 = N` and equal
/// couplings; `two_j = 2j`.
pub fn equal_coupling_coefficient(n: usize, two_j: usize, n0: usize, vt: f64) -> f64 {
    if two_j % 2 == 1 || two_j > 2 * n || n0 > two_j {
        return 0.0;
    }
    let j = two_j / 2;
    let (c, s) = (vt.cos(), vt.sin());
    let mut ln = ln_factorial(two_j) + 0.5 * ln_factorial(2 * n - two_j)
        - ln_factorial(j)
        - ln_factorial(n - j)
        - 0.5 * (ln_factorial(n0) + ln_factorial(two_j - n0))
        - n as f64 * std::f64::consts::LN_2;
    let mut sign = if j % 2 == 1 { -1.0 } else { 1.0 };
    if two_j > n0 {
        if c == 0.0 {
            return 0.0;
        }
        ln += (two_j - n0) as f64 * c.abs().ln();
        if c < 0.0 && (two_j - n0) % 2 == 1 {
            sign = -sign;
        }
    }
    if n0 > 0 {
        if s == 0.0 {
            return 0.0;
        }
        ln += n0 as f64 * s.abs().ln();
        if s < 0.0 && n0 % 2 == 1 {
            sign = -sign;
        }
    }
    sign * ln.exp()
}

/// `P₀(n₀)`, the level-0 marginal.
pub fn n0_distribution(state: &JointState) -> CountHistogram {
    let probs = state
        .columns
        .iter()
        .map(|c| c.iter().map(|a| a.norm_sqr()).sum())
        .collect();
    CountHistogram::new("n0", 0, probs)
        .with_provenance("N1", state.sector.n1())
        .with_provenance("N2", state.sector.n2())
        .with_provenance("alpha", state.params.alpha)
        .with_provenance("Vt", state.params.vt())
        .with_provenance("n0_max", state.n0_max())
}

/// Trapped state left behind when `n0` atoms are found in level 0, and the
/// probability of that outcome.
pub fn project_on_n0(state: &JointState, n0: usize) -> Result<(PlusMinusState, f64)> {
    if n0 > state.n0_max() {
        return Err(Error::InvalidInput(format!(
            "n0 = {n0} beyond the kept range 0..={}",
            state.n0_max()
        )));
    }
    let col = state.columns[n0].clone();
    let probability: f64 = col.iter().map(|a| a.norm_sqr()).sum();
    if probability < ZERO_PROBABILITY {
        return Err(Error::ZeroProbabilityOutcome { n0, probability });
    }
    let st = PlusMinusState::from_unnormalized(state.sector, n0, col)?;
    Ok((st, probability))
}

/// `φ` grid of `n` midpoints on `(-π, π)`, avoiding `cos φ = ±1` and
/// mirror-symmetric bit for bit.
pub fn default_phi_grid(n: usize) -> Vec<f64> {
    let h = 2.0 * PI / n as f64;
    (0..n)
        .map(|i| {
            let x = -PI + (i as f64 + 0.5) * h;
            if 2 * i + 1 < n {
                x
            } else if 2 * i + 1 == n {
                0.0
            } else {
                -(-PI + ((n - 1 - i) as f64 + 0.5) * h)
            }
        })
        .collect()
}

pub const DEFAULT_PHI_POINTS: usize = 2048;

/// A distribution over `cos φ` values, optionally drawn on a `φ` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalPhaseDistribution {
    pub sector: SectorSpec,
    pub n0_observed: usize,
    /// `(cos φ, probability)`, ascending in `cos φ`. Empty when the
    /// distribution exists only as a `φ` density.
    pub support: Vec<(f64, f64)>,
    pub rendering: Option<PhaseRendering>,
}

/// Probabilities of the points of a `φ` grid, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRendering {
    pub phi: Vec<f64>,
    pub prob: Vec<f64>,
}

impl ConditionalPhaseDistribution {
    pub fn mean_cosphi(&self) -> f64 {
        if !self.support.is_empty() {
            return self.support.iter().map(|(c, p)| c * p).sum();
        }
        self.rendering
            .as_ref()
            .map(|r| r.phi.iter().zip(&r.prob).map(|(f, p)| f.cos() * p).sum())
            .unwrap_or(f64::NAN)
    }

    /// Spreads each discrete `cos φ` weight over `φ` with the continuum
    /// Jacobian `|d cos φ / dφ|`. Labels of a parity class that carries no
    /// weight at all are skipped so the lattice spacing is the populated one.
    pub fn render(&self, phi_grid: &[f64]) -> Result<PhaseRendering> {
        let pts = populated_lattice(&self.support);
        if pts.len() < 2 {
            return Err(Error::InvalidInput("too few support points to render".into()));
        }
        let density: Vec<f64> = (0..pts.len())
            .map(|k| {
                let lo = pts[k.saturating_sub(1)].0;
                let hi = pts[(k + 1).min(pts.len() - 1)].0;
                let span = if k == 0 || k == pts.len() - 1 { hi - lo } else { 0.5 * (hi - lo) };
                pts[k].1 / span
            })
            .collect();
        let mut prob: Vec<f64> = phi_grid
            .iter()
            .map(|&phi| {
                let c = phi.cos();
                interpolate(&pts, &density, c) * phi.sin().abs()
            })
            .collect();
        let s: f64 = prob.iter().sum();
        if !(s > 0.0) {
            return Err(Error::InvalidInput("rendering has no weight on the grid".into()));
        }
        prob.iter_mut().for_each(|p| *p /= s);
        Ok(PhaseRendering {
            phi: phi_grid.to_vec(),
            prob,
        })
    }
}

fn populated_lattice(support: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let class_weight = |r: usize| -> f64 {
        support
            .iter()
            .skip(r)
            .step_by(2)
            .map(|(_, p)| *p)
            .sum()
    };
    let (even, odd) = (class_weight(0), class_weight(1));
    if even == 0.0 {
        support.iter().skip(1).step_by(2).copied().collect()
    } else if odd == 0.0 {
        support.iter().step_by(2).copied().collect()
    } else {
        support.to_vec()
    }
}

fn interpolate(pts: &[(f64, f64)], values: &[f64], x: f64) -> f64 {
    let (first, last) = (pts[0].0, pts[pts.len() - 1].0);
    if x < first || x > last {
        return 0.0;
    }
    let k = pts.partition_point(|(c, _)| *c <= x);
    if k == 0 {
        return values[0];
    }
    if k >= pts.len() {
        return values[pts.len() - 1];
    }
    let (x0, x1) = (pts[k - 1].0, pts[k].0);
    let t = (x - x0) / (x1 - x0);
    values[k - 1] * (1.0 - t) + values[k] * t
}

/// Exact `cos φ̂` distribution of the trapped state left after `n0`
/// detections, labelled by that state's own eigenvalues.
pub fn exact_conditional_phase(state: &JointState, n0: usize) -> Result<ConditionalPhaseDistribution> {
    let (st, _) = project_on_n0(state, n0)?;
    let support = st
        .probabilities()
        .into_iter()
        .enumerate()
        .map(|(p, w)| (st.eigenvalue(p), w))
        .collect();
    Ok(ConditionalPhaseDistribution {
        sector: state.sector,
        n0_observed: n0,
        support,
        rendering: None,
    })
}

/// `C_ph exp{-[n₀ - n̄(φ)]² / 2n₀}` on `phi_grid`, where
/// `n̄(φ) = sin²Vt (N1 cos²α + N2 sin²α + 2√(N1N2) sin α cos α cos φ)`
/// reduces to `N sin²Vt (1 + cos φ)` for the symmetric case.
pub fn gaussian_phase_approx(
    sector: &SectorSpec,
    params: &CouplingParams,
    n0: usize,
    phi_grid: &[f64],
) -> Result<ConditionalPhaseDistribution> {
    if n0 == 0 {
        return Err(Error::InvalidInput("the Gaussian form needs n0 >= 1".into()));
    }
    let (ca, sa) = (params.alpha.cos(), params.alpha.sin());
    let (n1, n2) = (sector.n1() as f64, sector.n2() as f64);
    let s2 = params.sin2();
    let n0f = n0 as f64;
    let mut prob: Vec<f64> = phi_grid
        .iter()
        .map(|phi| {
            let mean = s2 * (n1 * ca * ca + n2 * sa * sa + 2.0 * (n1 * n2).sqrt() * sa * ca * phi.cos());
            (-(n0f - mean).powi(2) / (2.0 * n0f)).exp()
        })
        .collect();
    let c_ph: f64 = prob.iter().sum();
    if !(c_ph > 0.0) {
        return Err(Error::InvalidInput(format!("no weight on the grid for n0 = {n0}")));
    }
    prob.iter_mut().for_each(|p| *p /= c_ph);
    Ok(ConditionalPhaseDistribution {
        sector: *sector,
        n0_observed: n0,
        support: Vec::new(),
        rendering: Some(PhaseRendering {
            phi: phi_grid.to_vec(),
            prob,
        }),
    })
}

/// `½ Σ |p - q|` between two renderings on the same grid.
pub fn total_variation(a: &PhaseRendering, b: &PhaseRendering) -> Result<f64> {
    if a.phi.len() != b.phi.len() || a.phi.iter().zip(&b.phi).any(|(x, y)| x != y) {
        return Err(Error::InvalidInput("renderings use different grids".into()));
    }
    Ok(0.5 * a.prob.iter().zip(&b.prob).map(|(p, q)| (p - q).abs()).sum::<f64>())
}
