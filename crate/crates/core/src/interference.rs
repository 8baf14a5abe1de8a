//! Detecting the superposition through the final number difference.
//!
//! A state with phase components near `±φ₀` interferes in the conjugate
//! variable `ΔN^f = n1 - n2`; for `⟨cos φ⟩ ≈ 0` the fringes repeat every four
//! counts inside the single populated parity class. Ensembles pool these
//! distributions over initial atom numbers and blur them with the counting
//! error.

use std::io::Write;
use std::ops::RangeInclusive;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{cosphi_expectation, plusminus_to_number, PlusMinusState, SectorSpec};
use crate::histogram::CountHistogram;
use crate::qmc::{self, ContinuousParams};

/// Half-width of the accepted window around the target `⟨cos φ⟩`.
pub const DEFAULT_WINDOW: f64 = 0.05;
/// Peaks below this fraction of the maximum are ignored.
const PEAK_FLOOR: f64 = 1e-3;
const NUMBER_SEED_SALT: u64 = 0x6a09_e667_f3bc_c909;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitialNumberModel {
    Fixed { n1: usize, n2: usize },
    Poissonian { mean1: f64, mean2: f64 },
}

impl InitialNumberModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InitialNumberModel::Fixed { n1, n2 } => SectorSpec::new(n1, n2).map(|_| ()),
            InitialNumberModel::Poissonian { mean1, mean2 } => {
                if mean1 > 0.0 && mean2 > 0.0 && mean1.is_finite() && mean2.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidInput(format!(
                        "poissonian means must be positive, got {mean1}, {mean2}"
                    )))
                }
            }
        }
    }

    /// Smallest mode population to expect, for depletion checks.
    pub fn typical_min(&self) -> f64 {
        match *self {
            InitialNumberModel::Fixed { n1, n2 } => n1.min(n2) as f64,
            InitialNumberModel::Poissonian { mean1, mean2 } => mean1.min(mean2),
        }
    }

    /// Initial numbers of ensemble member `index`.
    pub fn sample(&self, seed: u64, index: u64) -> Result<SectorSpec> {
        match *self {
            InitialNumberModel::Fixed { n1, n2 } => SectorSpec::new(n1, n2),
            InitialNumberModel::Poissonian { mean1, mean2 } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ NUMBER_SEED_SALT);
                rng.set_stream(index);
                let draw = |m: f64, rng: &mut ChaCha8Rng| -> Result<usize> {
                    let p = Poisson::new(m).map_err(|e| Error::InvalidInput(e.to_string()))?;
                    Ok(p.sample(rng) as usize)
                };
                let n1 = draw(mean1, &mut rng)?;
                let n2 = draw(mean2, &mut rng)?;
                SectorSpec::new(n1, n2)
            }
        }
    }
}

/// Counting error and the spread of initial atom numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionModel {
    pub sigma: f64,
    pub initial_number_model: InitialNumberModel,
}

impl DetectionModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidInput(format!("sigma must be finite and >= 0, got {}", self.sigma)));
        }
        self.initial_number_model.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeReport {
    pub histogram: CountHistogram,
    pub peak_positions: Vec<i64>,
    /// Common spacing of the central peaks, if they are evenly spaced.
    pub peak_spacing: Option<i64>,
    pub visibility: f64,
}

/// `P(ΔN^f)` over `n1 - n2` of the final sector.
pub fn final_number_distribution(state: &PlusMinusState) -> CountHistogram {
    let m = state.total() as i64;
    let probs = plusminus_to_number(state).probabilities();
    let pairs = probs.into_iter().enumerate().map(|(n1, p)| (2 * n1 as i64 - m, p));
    CountHistogram::from_pairs("dN_final", pairs)
        .with_provenance("N1", state.sector().n1())
        .with_provenance("N2", state.sector().n2())
        .with_provenance("removed", state.removed())
}

/// One conditioned measurement outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMember {
    pub index: u64,
    pub sector: SectorSpec,
    pub final_state: PlusMinusState,
}

impl EnsembleMember {
    pub fn initial_difference(&self) -> i64 {
        self.sector.n1() as i64 - self.sector.n2() as i64
    }
}

/// How to produce an ensemble of measured states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub initial: InitialNumberModel,
    pub w: f64,
    pub nu: usize,
    pub target_cosphi: f64,
    pub window: f64,
    pub members: usize,
    pub max_attempts: usize,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        self.initial.validate()?;
        let bound = qmc::UNDEPLETED_RATIO * self.initial.typical_min();
        if self.nu as f64 >= bound {
            return Err(Error::UndepletedAssumptionViolated {
                what: "number of outcoupled atoms nu",
                value: self.nu as f64,
                bound,
            });
        }
        if !(self.window > 0.0) || self.target_cosphi.abs() > 1.0 {
            return Err(Error::InvalidInput(format!(
                "need window > 0 and |target| <= 1, got {} and {}",
                self.window, self.target_cosphi
            )));
        }
        if self.members == 0 || self.max_attempts < self.members {
            return Err(Error::InvalidInput("need 0 < members <= max_attempts".into()));
        }
        ContinuousParams::new(self.w, self.nu, self.seed).map(|_| ())
    }
}

#[derive(Debug, Clone)]
pub struct ConditionedEnsemble {
    pub members: Vec<EnsembleMember>,
    pub attempts: u64,
    pub stalled: u64,
}

impl ConditionedEnsemble {
    pub fn acceptance(&self) -> f64 {
        self.members.len() as f64 / self.attempts as f64
    }
}

enum Attempt {
    Accepted(EnsembleMember),
    Rejected,
    Stalled,
}

fn attempt(spec: &EnsembleSpec, index: u64) -> Result<Attempt> {
    let sector = spec.initial.sample(spec.seed, index)?;
    let init = PlusMinusState::fock(sector);
    match qmc::run_detections(&init, spec.w, spec.nu, spec.seed, index) {
        Ok(rec) => {
            let c = cosphi_expectation(&rec.final_state);
            Ok(if (c - spec.target_cosphi).abs() <= spec.window {
                Attempt::Accepted(EnsembleMember {
                    index,
                    sector,
                    final_state: rec.final_state,
                })
            } else {
                Attempt::Rejected
            })
        }
        Err(Error::DarkStateStall { .. }) => Ok(Attempt::Stalled),
        Err(e) => Err(e),
    }
}

/// Runs trajectories in index order, keeping those whose final `⟨cos φ⟩`
/// falls in the window, until `spec.members` are accepted.
pub fn conditioned_ensemble(spec: &EnsembleSpec) -> Result<ConditionedEnsemble> {
    spec.validate()?;
    let mut out = ConditionedEnsemble {
        members: Vec::with_capacity(spec.members),
        attempts: 0,
        stalled: 0,
    };
    let batch = 256u64;
    let mut next = 0u64;
    while out.members.len() < spec.members {
        if next as usize >= spec.max_attempts {
            return Err(Error::InvalidInput(format!(
                "only {} of {} members accepted after {} attempts",
                out.members.len(),
                spec.members,
                spec.max_attempts
            )));
        }
        let end = (next + batch).min(spec.max_attempts as u64);
        let results: Vec<Result<Attempt>> = (next..end).into_par_iter().map(|i| attempt(spec, i)).collect();
        for r in results {
            if out.members.len() == spec.members {
                break;
            }
            out.attempts += 1;
            match r? {
                Attempt::Accepted(m) => out.members.push(m),
                Attempt::Stalled => out.stalled += 1,
                Attempt::Rejected => {}
            }
        }
        next = end;
    }
    Ok(out)
}

fn pooled(
    ensemble: &[EnsembleMember],
    observable: &str,
    shift: impl Fn(&EnsembleMember) -> i64 + Sync,
) -> Result<CountHistogram> {
    if ensemble.is_empty() {
        return Err(Error::InvalidInput("empty ensemble".into()));
    }
    let weight = 1.0 / ensemble.len() as f64;
    let parts: Vec<CountHistogram> = ensemble
        .par_iter()
        .map(|m| final_number_distribution(&m.final_state).shifted(shift(m)))
        .collect();
    let mut acc = CountHistogram::new(observable, 0, Vec::new());
    for p in &parts {
        acc.accumulate(p, weight);
    }
    Ok(acc.with_provenance("members", ensemble.len()))
}

/// Unblurred `ΔN₁₂ = ΔN^f - (N1 - N2)` pooled over the ensemble.
pub fn centered_histogram(ensemble: &[EnsembleMember]) -> Result<CountHistogram> {
    pooled(ensemble, "dN12_centered", |m| -m.initial_difference())
}

/// Unblurred raw `ΔN^f` pooled over the ensemble.
pub fn raw_histogram(ensemble: &[EnsembleMember]) -> Result<CountHistogram> {
    pooled(ensemble, "dN_final", |_| 0)
}

/// Centered distribution blurred by the counting error, with its fringes.
pub fn centered_difference_distribution(
    ensemble: &[EnsembleMember],
    model: &DetectionModel,
) -> Result<FringeReport> {
    model.validate()?;
    fringe_report(&centered_histogram(ensemble)?, model.sigma)
}

/// As [`centered_difference_distribution`] without centering.
pub fn raw_difference_distribution(
    ensemble: &[EnsembleMember],
    model: &DetectionModel,
) -> Result<FringeReport> {
    model.validate()?;
    fringe_report(&raw_histogram(ensemble)?, model.sigma)
}

/// Blurs `hist` by `sigma` and measures the fringe contrast on the lattice
/// of the unblurred pattern.
///
/// Peaks are located before blurring, on the parity class carrying the most
/// weight, as local maxima against the class neighbours `±2`. The three
/// peaks nearest the mean fix the fringe lattice; visibility is
/// `Σ(P - T) / Σ(P + T)` over those positions in the blurred histogram,
/// with `T` the mean of the two sites `±2` away.
pub fn fringe_report(hist: &CountHistogram, sigma: f64) -> Result<FringeReport> {
    if hist.is_empty() {
        return Err(Error::InvalidInput("empty histogram".into()));
    }
    let even: f64 = hist.iter().filter(|(v, _)| v.rem_euclid(2) == 0).map(|(_, p)| p).sum();
    let residue = if 2.0 * even >= hist.total() { 0 } else { 1 };
    let peaks = class_peaks(hist, residue);
    let central = central_peaks(&peaks, hist.mean());
    let mut blurred = hist.convolve_gaussian(sigma)?;
    blurred.set_provenance("smearing_sigma", sigma);
    let visibility = lattice_visibility(&blurred, &central);
    let peak_spacing = common_spacing(&central);
    Ok(FringeReport {
        histogram: blurred,
        peak_positions: peaks,
        peak_spacing,
        visibility,
    })
}

/// Local maxima of the class sites against their neighbours `±2`.
fn class_peaks(h: &CountHistogram, residue: i64) -> Vec<i64> {
    let max = h.probabilities().iter().copied().fold(0.0, f64::max);
    let mut first = h.min_value();
    if (first - residue).rem_euclid(2) != 0 {
        first += 1;
    }
    let mut peaks = Vec::new();
    let mut x = first;
    while x <= h.max_value() {
        let p = h.get(x);
        if p > PEAK_FLOOR * max && p > h.get(x - 2) && p >= h.get(x + 2) {
            peaks.push(x);
        }
        x += 2;
    }
    peaks
}

fn lattice_visibility(h: &CountHistogram, positions: &[i64]) -> f64 {
    let (mut diff, mut sum) = (0.0, 0.0);
    for &x in positions {
        let p = h.get(x);
        let t = 0.5 * (h.get(x - 2) + h.get(x + 2));
        diff += p - t;
        sum += p + t;
    }
    if sum > 0.0 { (diff / sum).max(0.0) } else { 0.0 }
}

fn central_peaks(peaks: &[i64], center: f64) -> Vec<i64> {
    let mut by_distance = peaks.to_vec();
    by_distance.sort_by(|a, b| (*a as f64 - center).abs().total_cmp(&(*b as f64 - center).abs()));
    by_distance.truncate(3);
    by_distance.sort_unstable();
    by_distance
}

fn common_spacing(sorted: &[i64]) -> Option<i64> {
    let diffs: Vec<i64> = sorted.windows(2).map(|w| w[1] - w[0]).collect();
    match diffs.first() {
        Some(&d) if diffs.iter().all(|&x| x == d) => Some(d),
        _ => None,
    }
}

/// Rows of `P(ΔN^f)` against the initial number difference.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalMap {
    pub initial_differences: Vec<i64>,
    pub rows: Vec<CountHistogram>,
}

impl FinalMap {
    /// Central fringe peak of each row: the class maximum nearest the mean.
    pub fn central_peaks(&self) -> Vec<Option<i64>> {
        self.rows
            .iter()
            .map(|h| {
                let residue = h.iter().fold((0, 0.0), |best, (v, p)| if p > best.1 { (v, p) } else { best }).0;
                let peaks = class_peaks(h, residue.rem_euclid(2));
                central_peaks(&peaks, h.mean())
                    .into_iter()
                    .min_by(|a, b| (*a as f64 - h.mean()).abs().total_cmp(&(*b as f64 - h.mean()).abs()))
            })
            .collect()
    }

    /// Header with provenance, then one row per initial difference; columns
    /// run over the union of final values.
    pub fn write_csv<W: Write>(&self, mut out: W, provenance: &[(String, String)]) -> Result<()> {
        for (k, v) in provenance {
            writeln!(out, "# {k}: {v}")?;
        }
        let lo = self.rows.iter().map(|h| h.min_value()).min().unwrap_or(0);
        let hi = self.rows.iter().map(|h| h.max_value()).max().unwrap_or(-1);
        write!(out, "initial_dN")?;
        for v in lo..=hi {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
        for (d, h) in self.initial_differences.iter().zip(&self.rows) {
            write!(out, "{d}")?;
            for v in lo..=hi {
                write!(out, ",{:e}", h.get(v))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// For each initial difference `d`, a fixed-number ensemble with
/// `N1 = n + ⌈d/2⌉`, `N2 = n - ⌊d/2⌋`, conditioned like `template`.
pub fn initial_vs_final_map(
    n: usize,
    differences: RangeInclusive<i64>,
    template: &EnsembleSpec,
) -> Result<FinalMap> {
    let mut initial_differences = Vec::new();
    let mut rows = Vec::new();
    for d in differences {
        let n1 = n as i64 + d.div_euclid(2) + d.rem_euclid(2);
        let n2 = n as i64 - d.div_euclid(2);
        if n1 < 0 || n2 < 0 {
            return Err(Error::InvalidInput(format!("initial difference {d} exceeds 2N")));
        }
        let spec = EnsembleSpec {
            initial: InitialNumberModel::Fixed {
                n1: n1 as usize,
                n2: n2 as usize,
            },
            ..*template
        };
        let ens = conditioned_ensemble(&spec)?;
        let mut h = raw_histogram(&ens.members)?;
        h.set_provenance("initial_dN", d);
        initial_differences.push(d);
        rows.push(h);
    }
    Ok(FinalMap {
        initial_differences,
        rows,
    })
}

/// `ν` scaled to `n` atoms per mode from its value at 1000, rounded to the
/// nearest integer of the same parity as `ν` (at least 1 or 2).
///
/// Parity decides the fringe lattice: at `⟨cos φ⟩ ≈ 0` an odd number of
/// detections leaves the final sector on the odd class, where the
/// period-4 fringes are sampled at their midpoints and vanish.
pub fn desk_scale_nu(nu: usize, n: usize) -> usize {
    let scaled = nu as f64 * n as f64 / 1000.0;
    let parity = nu % 2;
    let k = ((scaled - parity as f64) / 2.0).round().max(0.0) as usize;
    let out = 2 * k + parity;
    if out == 0 { 2 } else { out }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comb_has_unit_visibility() {
        // period-4 comb on even sites
        let pairs = (-20..=20).filter(|v| v % 2 == 0).map(|v| (v, if v % 4 == 0 { 1.0 } else { 0.0 }));
        let h = CountHistogram::from_pairs("x", pairs);
        let r = fringe_report(&h, 0.0).unwrap();
        assert_eq!(r.peak_spacing, Some(4));
        assert!((r.visibility - 1.0).abs() < 1e-12);
        assert!(r.peak_positions.contains(&0));
    }

    #[test]
    fn smooth_envelope_has_low_visibility() {
        let pairs = (-40..=40).filter(|v| v % 2 == 0).map(|v| (v, (-(v as f64 / 15.0).powi(2)).exp()));
        let h = CountHistogram::from_pairs("x", pairs);
        let r = fringe_report(&h, 0.0).unwrap();
        assert_eq!(r.peak_positions, vec![0]);
        assert!(r.visibility < 0.01);
        assert_eq!(r.peak_spacing, None);
    }

    #[test]
    fn desk_scaling_rounds() {
        assert_eq!(desk_scale_nu(26, 100), 2);
        assert_eq!(desk_scale_nu(26, 1000), 26);
        assert_eq!(desk_scale_nu(60, 100), 6);
        assert_eq!(desk_scale_nu(27, 100), 3);
        assert_eq!(desk_scale_nu(2, 10), 2);
    }

    #[test]
    fn poisson_draws_are_reproducible() {
        let m = InitialNumberModel::Poissonian {
            mean1: 1000.0,
            mean2: 1000.0,
        };
        assert_eq!(m.sample(4, 9).unwrap(), m.sample(4, 9).unwrap());
        assert_ne!(m.sample(4, 9).unwrap(), m.sample(4, 10).unwrap());
    }
}
