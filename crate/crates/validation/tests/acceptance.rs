//! Acceptance criteria, one line each. Exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use mqs_core::cli;
use mqs_core::coherent::{
    default_phi_grid, evolve_general_alpha, exact_conditional_phase, gaussian_phase_approx, n0_distribution,
    n0_moments, total_variation, CouplingParams, DEFAULT_PHI_POINTS,
};
use mqs_core::collapse::{
    collapse, find_roots, peaks_resolved, two_peak_approximation, DetectorKernel, MeasuredFunction, Wavefunction1D,
};
use mqs_core::config::{Mode, RunConfig};
use mqs_core::fock::{cosphi_spectrum, plusminus_to_number, PlusMinusState, SectorSpec};
use mqs_core::histogram::CountHistogram;
use mqs_core::interference::{
    centered_histogram, conditioned_ensemble, final_number_distribution, fringe_report, raw_histogram,
    ConditionedEnsemble, EnsembleSpec,
};
use mqs_core::oracle::{cosphi_matrix, LindbladOracle};
use mqs_core::qmc::{ensemble_statistics, run_completed, run_until, symmetric_fock, ContinuousParams};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

const MOMENT_REL_TOL: f64 = 1e-6;
const SPECTRUM_TOL: f64 = 1e-12;
const PARITY_TOL: f64 = 1e-14;
const TV_TOL: f64 = 0.05;
const TV_COS_WINDOW: f64 = 0.3;
const RESIDUAL_RMS_TOL: f64 = 0.15;
const KS_P_MIN: f64 = 0.01;
const LINDBLAD_SE: f64 = 3.0;
const VISIBILITY_PERSISTS: f64 = 0.1;
const VISIBILITY_GONE: f64 = 0.05;
const NORM_TOL: f64 = 1e-10;

const TRAJECTORY_SEED: u64 = 1;
const LINDBLAD_TRAJECTORIES: usize = 100_000;
const LINDBLAD_SEED: u64 = 17;
const FULL_SCALE_MEMBERS: usize = 400;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: u32, name: &str, budget: Duration, run: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = run();
    let elapsed = start.elapsed();
    let pass = out.pass && elapsed <= budget;
    println!(
        "criterion {id:>2} {} {name}: {} [{:.1}s, budget {}s]",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    pass
}

fn moment_identity() -> Outcome {
    let sector = SectorSpec::symmetric(1000).unwrap();
    let p = CouplingParams::equal_with_sin2(0.03).unwrap();
    let h = n0_distribution(&evolve_general_alpha(sector, p).unwrap());
    let (mean, var) = n0_moments(&sector, &p).unwrap();
    let rel_mean = (h.mean() - mean).abs() / mean;
    let rel_var = (h.variance() - var).abs() / var;
    Outcome {
        pass: rel_mean < MOMENT_REL_TOL && rel_var < MOMENT_REL_TOL,
        detail: format!(
            "mean {:.6} vs {mean:.6} (rel {rel_mean:.1e}), variance {:.6} vs {var:.6} (rel {rel_var:.1e}), tol {MOMENT_REL_TOL:e}",
            h.mean(),
            h.variance()
        ),
    }
}

fn spectrum_identity() -> Outcome {
    let mut worst = 0.0f64;
    for n in [1usize, 2, 10] {
        let sector = SectorSpec::symmetric(n).unwrap();
        let ours = cosphi_spectrum(&sector).unwrap();
        let mut dense: Vec<f64> = cosphi_matrix(&sector).unwrap().symmetric_eigenvalues().iter().copied().collect();
        dense.sort_by(f64::total_cmp);
        if ours.len() != 2 * n + 1 || dense.len() != ours.len() {
            return Outcome {
                pass: false,
                detail: format!("N={n}: {} eigenvalues", ours.len()),
            };
        }
        for (k, (o, d)) in ours.iter().zip(&dense).enumerate() {
            let j = k as f64 / 2.0;
            let formula = -1.0 + 2.0 * j / n as f64;
            worst = worst.max((o - d).abs()).max((o - formula).abs());
        }
    }
    Outcome {
        pass: worst < SPECTRUM_TOL,
        detail: format!("max deviation {worst:.1e} at N in {{1, 2, 10}}, tol {SPECTRUM_TOL:e}"),
    }
}

fn parity_selection() -> Outcome {
    let mut worst = 0.0f64;
    for n in [2usize, 10, 100] {
        let st = PlusMinusState::fock(SectorSpec::symmetric(n).unwrap());
        for (p, a) in st.amps().iter().enumerate() {
            if p % 2 == 1 {
                worst = worst.max(a.norm());
            }
        }
    }
    Outcome {
        pass: worst < PARITY_TOL,
        detail: format!("max odd-n+ amplitude {worst:.1e} at N in {{2, 10, 100}}, tol {PARITY_TOL:e}"),
    }
}

fn gaussian_approximation() -> Outcome {
    let sector = SectorSpec::symmetric(1000).unwrap();
    let p = CouplingParams::equal_with_sin2(0.03).unwrap();
    let state = evolve_general_alpha(sector, p).unwrap();
    let p0 = n0_distribution(&state);
    let grid = default_phi_grid(DEFAULT_PHI_POINTS);
    let mut worst = (0.0f64, 0usize);
    let mut checked = 0;
    for (n0, prob) in p0.iter() {
        if prob < 1e-12 {
            continue;
        }
        let exact = exact_conditional_phase(&state, n0 as usize).unwrap();
        if exact.mean_cosphi().abs() >= TV_COS_WINDOW {
            continue;
        }
        let approx = gaussian_phase_approx(&sector, &p, n0 as usize, &grid).unwrap();
        let tv = total_variation(&exact.render(&grid).unwrap(), approx.rendering.as_ref().unwrap()).unwrap();
        if tv > worst.0 {
            worst = (tv, n0 as usize);
        }
        checked += 1;
    }
    Outcome {
        pass: checked > 0 && worst.0 < TV_TOL,
        detail: format!(
            "worst TV {:.4} at n0={} over {checked} outcomes with |<cos phi>| < {TV_COS_WINDOW}, tol {TV_TOL}",
            worst.0, worst.1
        ),
    }
}

fn waiting_time_law() -> Outcome {
    let init = symmetric_fock(1000).unwrap();
    let params = ContinuousParams::new(1.0, 30, TRAJECTORY_SEED).unwrap();
    let run = run_completed(&init, &params, 200, 2000).unwrap();
    let s = ensemble_statistics(&run.records).unwrap();
    Outcome {
        pass: run.records.len() >= 200 && s.residual_rms < RESIDUAL_RMS_TOL && s.pooled_ks.p_value > KS_P_MIN,
        detail: format!(
            "{} trajectories ({} dark stalls skipped), residual RMS {:.4} (tol {RESIDUAL_RMS_TOL}), pooled KS p {:.3} (min {KS_P_MIN})",
            run.records.len(),
            run.stalled.len(),
            s.residual_rms,
            s.pooled_ks.p_value
        ),
    }
}

fn embed(oracle: &LindbladOracle, st: &PlusMinusState) -> DVector<Complex64> {
    let mut v = DVector::zeros(oracle.space.dim());
    let m = st.total();
    for (n1, a) in plusminus_to_number(st).amps().iter().enumerate() {
        v[oracle.space.index_of(&[n1, m - n1]).unwrap()] = *a;
    }
    v
}

fn lindblad_equivalence() -> Outcome {
    let (n, w, horizon) = (3usize, 1.0, 0.2);
    let init = PlusMinusState::fock(SectorSpec::symmetric(n).unwrap());
    let oracle = LindbladOracle::new(2 * n, w).unwrap();
    let rho = oracle.evolve(&oracle.pure(&embed(&oracle, &init)), horizon).unwrap();
    let dim = oracle.space.dim();
    let mut sum = DMatrix::<f64>::zeros(dim, dim);
    let mut sum_sq = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..LINDBLAD_TRAJECTORIES as u64 {
        let rec = run_until(&init, w, horizon, 2 * n, LINDBLAD_SEED, i).unwrap();
        let v = embed(&oracle, &rec.final_state);
        for a in 0..dim {
            for b in 0..dim {
                let x = (v[a] * v[b].conj()).re;
                sum[(a, b)] += x;
                sum_sq[(a, b)] += x * x;
            }
        }
    }
    // blocks reached by at most two detections
    let basis = oracle.space.basis();
    let kept = |i: usize| basis[i][0] + basis[i][1] + 2 >= 2 * n;
    let nf = LINDBLAD_TRAJECTORIES as f64;
    let (mut worst, mut elements, mut structural) = (0.0f64, 0, 0.0f64);
    for a in (0..dim).filter(|&a| kept(a)) {
        for b in (0..dim).filter(|&b| kept(b)) {
            let mean = sum[(a, b)] / nf;
            let var = (sum_sq[(a, b)] / nf - mean * mean).max(0.0);
            let se = (var / (nf - 1.0)).sqrt();
            let diff = (mean - rho[(a, b)].re).abs().max(rho[(a, b)].im.abs());
            if se == 0.0 {
                structural = structural.max(diff);
            } else {
                worst = worst.max(diff / se);
            }
            elements += 1;
        }
    }
    Outcome {
        pass: worst <= LINDBLAD_SE && structural < 1e-10,
        detail: format!(
            "{LINDBLAD_TRAJECTORIES} trajectories, N1=N2={n}, {elements} elements with <= 2 detections, worst {worst:.2} s.e. (tol {LINDBLAD_SE}), structural zeros within {structural:.1e}"
        ),
    }
}

fn ensemble_spec(c: &RunConfig) -> EnsembleSpec {
    EnsembleSpec {
        initial: c.initial_numbers(),
        w: c.w,
        nu: c.nu,
        target_cosphi: c.target_cosphi,
        window: c.window,
        members: c.ensemble_size,
        max_attempts: c.attempts_cap(),
        seed: c.seed,
    }
}

fn fringe_config(scale: impl Fn(&mut RunConfig), poissonian: bool, members: usize) -> RunConfig {
    let mut c = RunConfig::for_mode(Mode::Interference);
    c.nu = 26;
    if poissonian {
        c.initial_number_model = Some(mqs_core::interference::InitialNumberModel::Poissonian {
            mean1: 1000.0,
            mean2: 1000.0,
        });
    }
    c.ensemble_size = members;
    scale(&mut c);
    c.validate().into_result().unwrap();
    c
}

struct FullScale {
    ensemble: ConditionedEnsemble,
    centered: CountHistogram,
    elapsed: Duration,
}

fn fringe_spacing(full: &FullScale) -> Outcome {
    let desk = fringe_config(RunConfig::apply_desk_scale, false, 20);
    let ens = conditioned_ensemble(&ensemble_spec(&desk)).unwrap();
    let mut spacings: Vec<Option<i64>> = ens
        .members
        .iter()
        .map(|m| fringe_report(&final_number_distribution(&m.final_state), 0.0).unwrap().peak_spacing)
        .collect();
    spacings.push(fringe_report(&raw_histogram(&ens.members).unwrap(), 0.0).unwrap().peak_spacing);
    let desk_ok = spacings.iter().all(|s| *s == Some(4));
    let full_spacing = fringe_report(&full.centered, 0.0).unwrap().peak_spacing;
    let budget_ok = full.elapsed < Duration::from_secs(30 * 60);
    Outcome {
        pass: desk_ok && full_spacing == Some(4) && budget_ok,
        detail: format!(
            "desk N=100 nu={}: spacing 4 in {}/{} members and pooled; full scale N=1000 nu=26: spacing {:?} (shared run, {:.0}s)",
            desk.nu,
            spacings.iter().take(ens.members.len()).filter(|s| **s == Some(4)).count(),
            ens.members.len(),
            full_spacing,
            full.elapsed.as_secs_f64()
        ),
    }
}

fn sigma_threshold(full: &FullScale) -> Outcome {
    let v = |sigma: f64| fringe_report(&full.centered, sigma).unwrap().visibility;
    let (v10, v17) = (v(1.0), v(1.7));
    Outcome {
        pass: v10 > VISIBILITY_PERSISTS && v17 < VISIBILITY_GONE,
        detail: format!(
            "{} members (acceptance {:.3}), visibility {v10:.3} at sigma=1.0 (min {VISIBILITY_PERSISTS}), {v17:.3} at sigma=1.7 (max {VISIBILITY_GONE}), sigma=0 gives {:.3}",
            full.ensemble.members.len(),
            full.ensemble.acceptance(),
            v(0.0)
        ),
    }
}

fn collapse_suite() -> Outcome {
    let f = MeasuredFunction::cos();
    let mut failures = Vec::new();
    let priors = [
        Wavefunction1D::sample(-PI, PI, 20_001, |_| 1.0.into()).unwrap().normalized().unwrap(),
        Wavefunction1D::sample(-PI, PI, 20_001, |x| (1.0 + 0.5 * x.cos()).into()).unwrap().normalized().unwrap(),
    ];
    let (mut norm_err, mut asym) = (0.0f64, 0.0f64);
    for psi in &priors {
        for f0 in [-0.6, 0.0, 0.3, 0.8] {
            for g in [DetectorKernel::gaussian(f0, 0.05).unwrap(), DetectorKernel::boxcar(f0, 0.1).unwrap()] {
                let out = collapse(psi, &f, &g).unwrap();
                norm_err = norm_err.max((out.norm_sqr() - 1.0).abs());
                let d = out.density();
                let n = d.len();
                for i in 0..n / 2 {
                    asym = asym.max((d[i] - d[n - 1 - i]).abs() / d[i].max(1.0));
                }
                let again = collapse(&out, &f, &g).unwrap();
                if out.overlap(&again).unwrap().norm() + 1e-12 < psi.overlap(&out).unwrap().norm() {
                    failures.push(format!("recollapse widened at f0={f0}"));
                }
            }
        }
    }
    if norm_err >= NORM_TOL {
        failures.push(format!("norm error {norm_err:.1e}"));
    }
    if asym >= NORM_TOL {
        failures.push(format!("asymmetry {asym:.1e}"));
    }

    let psi = &priors[0];
    let roots = find_roots(&f, psi.grid(), 0.5);
    let distances: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&w| {
            let g = DetectorKernel::gaussian(0.5, w).unwrap();
            collapse(psi, &f, &g).unwrap().l2_distance(&two_peak_approximation(psi, &f, &g, &roots).unwrap()).unwrap()
        })
        .collect();
    if !distances.windows(2).all(|w| w[1] < w[0]) {
        failures.push(format!("two-peak distances not decreasing: {distances:?}"));
    }

    let halves = [-PI / 2.0, PI / 2.0];
    if !peaks_resolved(&DetectorKernel::gaussian(0.0, 0.05).unwrap(), &halves, &f)
        || peaks_resolved(&DetectorKernel::gaussian(0.0, 3.0).unwrap(), &halves, &f)
        || peaks_resolved(&DetectorKernel::gaussian(0.999, 0.05).unwrap(), &find_roots(&f, psi.grid(), 0.999), &f)
    {
        failures.push("resolution predicate".into());
    }
    Outcome {
        pass: failures.is_empty(),
        detail: format!(
            "norm error {norm_err:.1e}, asymmetry {asym:.1e}, two-peak L2 {:.4}/{:.4}/{:.4} at widths 0.1/0.05/0.025{}",
            distances[0],
            distances[1],
            distances[2],
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    }
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut configs = Vec::new();
    for mode in [Mode::Coherent, Mode::Trajectories, Mode::Interference, Mode::CollapseDemo] {
        let mut c = RunConfig::for_mode(mode);
        match mode {
            Mode::Coherent => {
                c.sin2_vt = Some(0.03);
                c.n0_observed = Some(30);
            }
            Mode::Interference => {
                c.nu = 26;
                c.sigma = 1.0;
                c.ensemble_size = 50;
                c.initial_number_model = Some(mqs_core::interference::InitialNumberModel::Poissonian {
                    mean1: 1000.0,
                    mean2: 1000.0,
                });
                c.apply_desk_scale();
            }
            _ => {}
        }
        c.seed = 12345;
        c.out_dir = tmp.path().join(mode.name());
        configs.push(c);
    }
    let mut files = 0;
    let mut mismatched = Vec::new();
    for c in &configs {
        let first = cli::run(c).unwrap();
        let a = snapshot(&c.out_dir);
        let second = cli::run(c).unwrap();
        let b = snapshot(&c.out_dir);
        files += a.len();
        if a != b || first != second {
            mismatched.push(c.mode.name());
        }
    }
    Outcome {
        pass: mismatched.is_empty(),
        detail: format!(
            "{files} output files over {} modes rerun with seed 12345: {}",
            configs.len(),
            if mismatched.is_empty() { "byte-identical".to_string() } else { format!("differ in {mismatched:?}") }
        ),
    }
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let mut all = true;
    all &= report(1, "moment identity", secs(10), moment_identity);
    all &= report(2, "spectrum identity", secs(1), spectrum_identity);
    all &= report(3, "parity selection", secs(1), parity_selection);
    all &= report(4, "gaussian approximation", secs(30), gaussian_approximation);
    all &= report(5, "waiting-time law", secs(120), waiting_time_law);
    all &= report(6, "trajectory-lindblad equivalence", secs(300), lindblad_equivalence);

    let start = Instant::now();
    let full_cfg = fringe_config(RunConfig::apply_full_scale, true, FULL_SCALE_MEMBERS);
    let ensemble = conditioned_ensemble(&ensemble_spec(&full_cfg)).unwrap();
    let centered = centered_histogram(&ensemble.members).unwrap();
    let full = FullScale {
        ensemble,
        centered,
        elapsed: start.elapsed(),
    };
    // the shared full-scale ensemble is charged to criterion 8's budget
    all &= report(7, "fringe spacing", secs(120), || fringe_spacing(&full));
    all &= report(8, "sigma threshold", secs(30 * 60).saturating_sub(full.elapsed), || sigma_threshold(&full));
    all &= report(9, "collapse-kernel properties", secs(5), collapse_suite);
    all &= report(10, "determinism", secs(600), determinism);

    if all {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: at least one criterion failed");
        ExitCode::FAILURE
    }
}
