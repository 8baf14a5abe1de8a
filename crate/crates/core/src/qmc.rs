//! Quantum trajectories of continuous one-by-one detection.
//!
//! With level 0 adiabatically eliminated the detector sees the jump
//! operator `c = √W (b1 + b2) = √(2W) b₊`. Both the no-jump generator
//! `-½c†c = -W n₊` and the jump `b₊` act diagonally (or as a shift) on the
//! `n₊` basis, so waiting times are drawn exactly from the
//! multi-exponential survival function instead of by time stepping.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{cosphi_expectation, PlusMinusState, SectorSpec};

/// `ν / min(N1, N2)` above which the undepleted picture is rejected.
pub const UNDEPLETED_RATIO: f64 = 0.1;
const DARK_RATE: f64 = 1e-300;
const ROOT_RTOL: f64 = 1e-10;
const NORM_TOL: f64 = 1e-12;

/// `W = V²/γ`, number of detections `ν` and the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContinuousParams {
    pub w: Rate,
    pub nu: usize,
    pub seed: u64,
}

/// A positive rate kept as raw bits so params stay `Eq` and hashable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "f64", try_from = "f64")]
pub struct Rate(u64);

impl Rate {
    pub fn new(value: f64) -> Result<Self> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::InvalidInput(format!("rate must be positive, got {value}")));
        }
        Ok(Rate(value.to_bits()))
    }

    pub fn get(self) -> f64 {
        f64::from_bits(self.0)
    }
}

impl From<Rate> for f64 {
    fn from(r: Rate) -> f64 {
        r.get()
    }
}

impl TryFrom<f64> for Rate {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Rate::new(v)
    }
}

impl ContinuousParams {
    pub fn new(w: f64, nu: usize, seed: u64) -> Result<Self> {
        if nu == 0 {
            return Err(Error::InvalidInput("nu must be at least 1".into()));
        }
        Ok(ContinuousParams {
            w: Rate::new(w)?,
            nu,
            seed,
        })
    }

    pub fn w(&self) -> f64 {
        self.w.get()
    }

    pub fn check_undepleted(&self, sector: &SectorSpec) -> Result<()> {
        let bound = UNDEPLETED_RATIO * sector.n1().min(sector.n2()) as f64;
        if self.nu as f64 >= bound {
            return Err(Error::UndepletedAssumptionViolated {
                what: "number of outcoupled atoms nu",
                value: self.nu as f64,
                bound,
            });
        }
        Ok(())
    }
}

/// `c = √(2W) b₊` in the `n₊` basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpOperator {
    w: f64,
}

/// The detection channel of the trapped modes, independent of the sector.
pub fn effective_jump_operator(w: f64) -> Result<JumpOperator> {
    Ok(JumpOperator { w: Rate::new(w)?.get() })
}

impl JumpOperator {
    pub fn w(&self) -> f64 {
        self.w
    }

    /// Jump rate `2W n₊` of basis state `n₊`.
    pub fn rate(&self, n_plus: usize) -> f64 {
        2.0 * self.w * n_plus as f64
    }

    /// `⟨c†c⟩`.
    pub fn total_rate(&self, state: &PlusMinusState) -> f64 {
        state
            .amps()
            .iter()
            .enumerate()
            .map(|(p, a)| self.rate(p) * a.norm_sqr())
            .sum()
    }

    /// No-jump amplitude factor `exp(-W n₊ t)`.
    pub fn no_jump_factor(&self, n_plus: usize, t: f64) -> f64 {
        (-self.w * n_plus as f64 * t).exp()
    }

    /// Jump amplitude `√(2W n₊)` for `n₊ → n₊ - 1`.
    pub fn jump_amplitude(&self, n_plus: usize) -> f64 {
        self.rate(n_plus).sqrt()
    }

    /// Normalised state after no-jump evolution for `t`.
    pub fn evolve_no_jump(&self, state: &PlusMinusState, t: f64) -> Result<PlusMinusState> {
        let lowest = state.amps().iter().position(|a| a.norm_sqr() > 0.0).unwrap_or(0);
        let amps = state
            .amps()
            .iter()
            .enumerate()
            .map(|(p, a)| if p < lowest { *a } else { a * self.no_jump_factor(p - lowest, t) })
            .collect();
        PlusMinusState::from_unnormalized(*state.sector(), state.removed(), amps)
    }

    /// Normalised state after one detection.
    pub fn apply_jump(&self, state: &PlusMinusState) -> Result<PlusMinusState> {
        if state.total() == 0 || self.total_rate(state) < DARK_RATE {
            return Err(Error::DarkStateStall {
                detections: state.removed(),
                requested: state.removed() + 1,
            });
        }
        let amps = (0..state.total())
            .map(|p| state.amps()[p + 1] * self.jump_amplitude(p + 1))
            .collect();
        PlusMinusState::from_unnormalized(*state.sector(), state.removed() + 1, amps)
    }
}

/// One simulated detection record.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub index: u64,
    pub seed: u64,
    pub w: f64,
    /// Intervals between consecutive detections, the first measured from
    /// `t = 0`.
    pub taus: Vec<f64>,
    /// `⟨cos φ̂⟩` right after each detection.
    pub cosphi_history: Vec<f64>,
    /// Time at which the record ends: the last detection, or the horizon.
    pub elapsed: f64,
    pub final_state: PlusMinusState,
}

impl TrajectoryRecord {
    pub fn detections(&self) -> usize {
        self.taus.len()
    }

    pub fn mean_tau(&self) -> f64 {
        self.taus.iter().sum::<f64>() / self.taus.len() as f64
    }

    pub fn final_cosphi(&self) -> f64 {
        cosphi_expectation(&self.final_state)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrajectoryLine {
    pub index: u64,
    pub seed: u64,
    pub taus: Vec<f64>,
    pub cosphi_history: Vec<f64>,
}

impl From<&TrajectoryRecord> for TrajectoryLine {
    fn from(r: &TrajectoryRecord) -> Self {
        TrajectoryLine {
            index: r.index,
            seed: r.seed,
            taus: r.taus.clone(),
            cosphi_history: r.cosphi_history.clone(),
        }
    }
}

/// One JSON object per line.
pub fn write_jsonl<W: Write>(records: &[TrajectoryRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, &TrajectoryLine::from(r))?;
        writeln!(out)?;
    }
    Ok(())
}

/// Independent stream `index` of the master seed.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy)]
enum Stop {
    Detections(usize),
    Horizon { t: f64, max_detections: usize },
}

/// Survival `S(t) = Σ w_p exp(-2W p t)` restricted to `p ≥ 1`, plus the
/// dark weight `w_0`.
struct Survival {
    rates: Vec<f64>,
    weights: Vec<f64>,
    dark: f64,
}

impl Survival {
    fn new(op: &JumpOperator, state: &PlusMinusState) -> Self {
        let mut rates = Vec::new();
        let mut weights = Vec::new();
        let mut dark = 0.0;
        for (p, a) in state.amps().iter().enumerate() {
            let w = a.norm_sqr();
            if w == 0.0 {
                continue;
            }
            if p == 0 {
                dark = w;
            } else {
                rates.push(op.rate(p));
                weights.push(w);
            }
        }
        Survival {
            rates,
            weights,
            dark,
        }
    }

    fn mean_rate(&self) -> f64 {
        self.rates.iter().zip(&self.weights).map(|(r, w)| r * w).sum()
    }

    /// `S(t) - u` and its derivative.
    fn eval(&self, t: f64, u: f64) -> (f64, f64) {
        let mut s = self.dark;
        let mut ds = 0.0;
        for (r, w) in self.rates.iter().zip(&self.weights) {
            let e = w * (-r * t).exp();
            s += e;
            ds -= r * e;
        }
        (s - u, ds)
    }

    /// Solves `S(τ) = u` for `u` in `(dark, 1)` by safeguarded Newton.
    fn invert(&self, u: f64) -> f64 {
        let mut lo = 0.0;
        let mut hi = -u.ln() / self.mean_rate();
        while self.eval(hi, u).0 > 0.0 {
            lo = hi;
            hi *= 2.0;
        }
        let mut t = 0.5 * (lo + hi);
        for _ in 0..200 {
            let (f, df) = self.eval(t, u);
            if f > 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let newton = t - f / df;
            t = if df < 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= ROOT_RTOL * t || f == 0.0 {
                break;
            }
        }
        t
    }
}

fn simulate(
    op: &JumpOperator,
    initial: &PlusMinusState,
    stop: Stop,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, Vec<f64>, f64, PlusMinusState)> {
    let mut state = initial.clone();
    let mut taus = Vec::new();
    let mut history = Vec::new();
    let mut elapsed = 0.0;
    let wanted = match stop {
        Stop::Detections(n) => n,
        Stop::Horizon { max_detections, .. } => max_detections,
    };
    while taus.len() < wanted {
        let survival = Survival::new(op, &state);
        // u in (0, 1]
        let u = 1.0 - rng.random::<f64>();
        let dark = survival.mean_rate() < DARK_RATE || u <= survival.dark;
        let tau = if dark { f64::INFINITY } else { survival.invert(u) };
        if let Stop::Horizon { t, .. } = stop {
            if elapsed + tau > t {
                state = op.evolve_no_jump(&state, t - elapsed)?;
                elapsed = t;
                return Ok((taus, history, elapsed, state));
            }
        }
        if dark {
            return Err(Error::DarkStateStall {
                detections: taus.len(),
                requested: wanted,
            });
        }
        state = op.apply_jump(&op.evolve_no_jump(&state, tau)?)?;
        debug_assert!((state.probabilities().iter().sum::<f64>() - 1.0).abs() < NORM_TOL);
        elapsed += tau;
        taus.push(tau);
        history.push(cosphi_expectation(&state));
    }
    if let Stop::Horizon { t, .. } = stop {
        state = op.evolve_no_jump(&state, t - elapsed)?;
        elapsed = t;
    }
    Ok((taus, history, elapsed, state))
}

/// Detects `params.nu` atoms starting from `initial`, using stream `index`
/// of the master seed.
pub fn run_trajectory(
    initial: &PlusMinusState,
    params: &ContinuousParams,
    index: u64,
) -> Result<TrajectoryRecord> {
    params.check_undepleted(initial.sector())?;
    run_detections(initial, params.w(), params.nu, params.seed, index)
}

/// As [`run_trajectory`] without the undepleted check.
pub fn run_detections(
    initial: &PlusMinusState,
    w: f64,
    nu: usize,
    seed: u64,
    index: u64,
) -> Result<TrajectoryRecord> {
    let op = effective_jump_operator(w)?;
    let mut rng = trajectory_rng(seed, index);
    let (taus, cosphi_history, elapsed, final_state) =
        simulate(&op, initial, Stop::Detections(nu), &mut rng)?;
    Ok(TrajectoryRecord {
        index,
        seed,
        w,
        taus,
        cosphi_history,
        elapsed,
        final_state,
    })
}

/// Evolves to the fixed time `horizon`, recording whatever detections occur
/// (at most `max_detections`, after which only no-jump evolution runs).
pub fn run_until(
    initial: &PlusMinusState,
    w: f64,
    horizon: f64,
    max_detections: usize,
    seed: u64,
    index: u64,
) -> Result<TrajectoryRecord> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidInput(format!("horizon must be finite and >= 0, got {horizon}")));
    }
    let op = effective_jump_operator(w)?;
    let mut rng = trajectory_rng(seed, index);
    let stop = Stop::Horizon {
        t: horizon,
        max_detections,
    };
    let (taus, cosphi_history, elapsed, final_state) = simulate(&op, initial, stop, &mut rng)?;
    Ok(TrajectoryRecord {
        index,
        seed,
        w,
        taus,
        cosphi_history,
        elapsed,
        final_state,
    })
}

/// Trajectories `0..count` in parallel, returned in index order.
pub fn run_ensemble(
    initial: &PlusMinusState,
    params: &ContinuousParams,
    count: usize,
) -> Result<Vec<Result<TrajectoryRecord>>> {
    params.check_undepleted(initial.sector())?;
    Ok((0..count as u64)
        .into_par_iter()
        .map(|i| run_detections(initial, params.w(), params.nu, params.seed, i))
        .collect())
}

/// Completed trajectories plus the indices that stalled in a dark state.
#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub records: Vec<TrajectoryRecord>,
    pub stalled: Vec<u64>,
}

/// Runs indices in order until `wanted` trajectories reach `ν` detections.
/// Stalled indices are skipped, which conditions the ensemble on `ν`
/// detections having occurred.
pub fn run_completed(
    initial: &PlusMinusState,
    params: &ContinuousParams,
    wanted: usize,
    max_attempts: usize,
) -> Result<EnsembleRun> {
    params.check_undepleted(initial.sector())?;
    let mut run = EnsembleRun {
        records: Vec::with_capacity(wanted),
        stalled: Vec::new(),
    };
    let mut next = 0u64;
    while run.records.len() < wanted {
        if next as usize >= max_attempts {
            return Err(Error::DarkStateStall {
                detections: run.records.len(),
                requested: wanted,
            });
        }
        let batch = ((wanted - run.records.len()) * 9 / 8 + 8).min(max_attempts - next as usize) as u64;
        let results: Vec<Result<TrajectoryRecord>> = (next..next + batch)
            .into_par_iter()
            .map(|i| run_detections(initial, params.w(), params.nu, params.seed, i))
            .collect();
        for (i, r) in (next..).zip(results) {
            if run.records.len() == wanted {
                break;
            }
            match r {
                Ok(rec) => run.records.push(rec),
                Err(Error::DarkStateStall { .. }) => {
                    log::debug!("trajectory {i} stalled in a dark state");
                    run.stalled.push(i);
                }
                Err(e) => return Err(e),
            }
        }
        next += batch;
    }
    Ok(run)
}

/// Result of a Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample KS test against the unit exponential.
pub fn ks_exponential(samples: &[f64]) -> KsResult {
    ks_test(samples, |x| if x <= 0.0 { 0.0 } else { -(-x).exp_m1() })
}

/// One-sample KS test against a continuous CDF.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / nf).max((i + 1) as f64 / nf - f);
    }
    KsResult {
        statistic: d,
        p_value: kolmogorov_p(d, n),
        n,
    }
}

/// Asymptotic `P(D_n > d)` with the Stephens small-sample correction.
pub fn kolmogorov_p(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Per-trajectory points and the agreement checks on them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    /// `(τ̄, ⟨cos φ⟩_final, predicted τ̄)` per trajectory.
    pub points: Vec<(f64, f64, f64)>,
    /// RMS of `(τ̄ - τ̄_pred) / τ̄_pred`.
    pub residual_rms: f64,
    /// Least-squares slope of `τ̄` against `τ̄_pred` through the origin.
    pub fit_slope: f64,
    /// Pooled `τᵢ / τ̄` against the unit exponential.
    pub pooled_ks: KsResult,
    /// Fraction of trajectories whose own KS test has `p > 0.01`.
    pub per_trajectory_pass: f64,
}

/// `[W (N_tot + 2√(N1N2) ⟨cos φ⟩)]⁻¹`, i.e. `[2WN(1 + ⟨cos φ⟩)]⁻¹` for
/// `N1 = N2 = N`.
pub fn predicted_mean_tau(sector: &SectorSpec, w: f64, cosphi: f64) -> f64 {
    1.0 / (w * (sector.total() as f64 + sector.cosphi_norm() * cosphi))
}

pub fn ensemble_statistics(records: &[TrajectoryRecord]) -> Result<EnsembleSummary> {
    let usable: Vec<&TrajectoryRecord> = records.iter().filter(|r| !r.taus.is_empty()).collect();
    if usable.len() < 2 {
        return Err(Error::InvalidInput("need at least two records with detections".into()));
    }
    let points: Vec<(f64, f64, f64)> = usable
        .iter()
        .map(|r| {
            let c = r.final_cosphi();
            (r.mean_tau(), c, predicted_mean_tau(r.final_state.sector(), r.w, c))
        })
        .collect();
    let residual_rms = (points
        .iter()
        .map(|(t, _, p)| ((t - p) / p).powi(2))
        .sum::<f64>()
        / points.len() as f64)
        .sqrt();
    let fit_slope = points.iter().map(|(t, _, p)| t * p).sum::<f64>()
        / points.iter().map(|(_, _, p)| p * p).sum::<f64>();
    let mut pooled = Vec::new();
    let mut passes = 0usize;
    for r in &usable {
        let m = r.mean_tau();
        let normalised: Vec<f64> = r.taus.iter().map(|t| t / m).collect();
        if ks_exponential(&normalised).p_value > 0.01 {
            passes += 1;
        }
        pooled.extend(normalised);
    }
    Ok(EnsembleSummary {
        points,
        residual_rms,
        fit_slope,
        pooled_ks: ks_exponential(&pooled),
        per_trajectory_pass: passes as f64 / usable.len() as f64,
    })
}

/// Convenience for examples and tests: `|N, N⟩` in the `n₊` basis.
pub fn symmetric_fock(n: usize) -> Result<PlusMinusState> {
    Ok(PlusMinusState::fock(SectorSpec::symmetric(n)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn dark_state_has_no_rate() {
        let s = SectorSpec::symmetric(3).unwrap();
        let op = effective_jump_operator(1.0).unwrap();
        let dark = PlusMinusState::basis(s, 0).unwrap();
        assert_eq!(op.total_rate(&dark), 0.0);
        assert!(matches!(op.apply_jump(&dark), Err(Error::DarkStateStall { .. })));
        assert!(matches!(
            run_detections(&dark, 1.0, 1, 0, 0),
            Err(Error::DarkStateStall { detections: 0, requested: 1 })
        ));
    }

    #[test]
    fn fock_rate_is_2wn() {
        let op = effective_jump_operator(0.5).unwrap();
        let st = symmetric_fock(1000).unwrap();
        let r = op.total_rate(&st);
        assert!((r - 1000.0).abs() < 1e-7, "{r}");
    }

    #[test]
    fn jump_lowers_n_plus_by_one() {
        let s = SectorSpec::symmetric(2).unwrap();
        let op = effective_jump_operator(1.0).unwrap();
        let st = PlusMinusState::basis(s, 3).unwrap();
        let after = op.apply_jump(&st).unwrap();
        assert_eq!(after.total(), 3);
        assert_eq!(after.removed(), 1);
        assert_eq!(after.amps()[2], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn survival_inversion_is_accurate() {
        let s = Survival {
            rates: vec![1.0, 5.0, 40.0],
            weights: vec![0.2, 0.5, 0.2],
            dark: 0.1,
        };
        for u in [0.999, 0.7, 0.3, 0.1000001] {
            let t = s.invert(u);
            let (f, _) = s.eval(t, u);
            assert!(f.abs() < 1e-9, "u={u}: residual {f}");
        }
    }

    #[test]
    fn kolmogorov_tail_values() {
        // asymptotic critical values: P(√n D > 1.358) ≈ 0.05, 1.628 ≈ 0.01
        let n = 1_000_000;
        let sn = (n as f64).sqrt();
        assert!((kolmogorov_p(1.3581 / sn, n) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_p(1.6276 / sn, n) - 0.01).abs() < 1e-3);
        assert_eq!(kolmogorov_p(0.0, 10), 1.0);
    }

    #[test]
    fn rate_roundtrips_through_json() {
        let p = ContinuousParams::new(0.25, 30, 9).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"w":0.25,"nu":30,"seed":9}"#);
        assert_eq!(serde_json::from_str::<ContinuousParams>(&s).unwrap(), p);
        assert!(serde_json::from_str::<ContinuousParams>(r#"{"w":-1.0,"nu":3,"seed":0}"#).is_err());
    }
}
