//! Run orchestration behind the `mqs` binary.
//!
//! Every output embeds the full configuration; nothing time- or
//! host-dependent is written, so equal configurations give equal bytes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::coherent::{
    default_phi_grid, evolve_with, exact_conditional_phase, exact_n0_moments, gaussian_phase_approx,
    n0_distribution, total_variation, EvolveOptions,
};
use crate::collapse::{
    collapse, find_roots, peaks_resolved, two_peak_approximation, DetectorKernel, MeasuredFunction,
    Wavefunction1D,
};
use crate::config::{Mode, OutputFormat, RunConfig};
use crate::error::{Error, ErrorCategory, Result};
use crate::fock::{plusminus_to_number, PlusMinusState};
use crate::histogram::CountHistogram;
use crate::interference::{
    centered_histogram, conditioned_ensemble, fringe_report, initial_vs_final_map, EnsembleSpec,
};
use crate::oracle::{dense_conditional_state, dense_unitary_evolve};
use crate::qmc::{ensemble_statistics, run_completed, run_detections, write_jsonl, ContinuousParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MODEL: i32 = 3;
pub const EXIT_SELF_CHECK: i32 = 4;

/// Agreement required of `oracle-check`.
pub const ORACLE_TOL: f64 = 1e-8;

pub fn exit_code(e: &Error) -> i32 {
    match e.category() {
        ErrorCategory::Config => EXIT_CONFIG,
        ErrorCategory::Model | ErrorCategory::Io => EXIT_MODEL,
    }
}

/// `error[category/kind]: message`.
pub fn describe_error(e: &Error) -> String {
    let cat = match e.category() {
        ErrorCategory::Config => "config",
        ErrorCategory::Model => "model",
        ErrorCategory::Io => "io",
    };
    format!("error[{cat}/{}]: {e}", e.kind())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub line: String,
    pub files: Vec<PathBuf>,
    pub self_check_passed: bool,
}

struct Outputs<'a> {
    config: &'a RunConfig,
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl<'a> Outputs<'a> {
    fn new(config: &'a RunConfig) -> Result<Self> {
        fs::create_dir_all(&config.out_dir)?;
        Ok(Outputs {
            config,
            dir: config.out_dir.clone(),
            files: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let f = File::create(&path)?;
        self.files.push(path);
        Ok(BufWriter::new(f))
    }

    fn header<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "# config: {}", self.config.to_json())?;
        writeln!(out, "# seed: {}", self.config.seed)?;
        Ok(())
    }

    fn histogram(&mut self, stem: &str, h: &CountHistogram) -> Result<()> {
        let h = h
            .clone()
            .with_provenance("config", self.config.to_json())
            .with_provenance("seed", self.config.seed);
        match self.config.format {
            OutputFormat::Csv => {
                let mut f = self.create(&format!("{stem}.csv"))?;
                h.write_csv(&mut f)?;
                f.flush()?;
            }
            OutputFormat::Json => self.json(stem, &h)?,
        }
        Ok(())
    }

    fn json<T: Serialize>(&mut self, stem: &str, value: &T) -> Result<()> {
        #[derive(Serialize)]
        struct Wrapped<'a, T> {
            config: &'a RunConfig,
            seed: u64,
            data: &'a T,
        }
        let mut f = self.create(&format!("{stem}.json"))?;
        let wrapped = Wrapped {
            config: self.config,
            seed: self.config.seed,
            data: value,
        };
        serde_json::to_writer_pretty(&mut f, &wrapped)?;
        writeln!(f)?;
        f.flush()?;
        Ok(())
    }

    /// Columns of equal length under a header row.
    fn table(&mut self, stem: &str, names: &[&str], columns: &[Vec<f64>]) -> Result<()> {
        match self.config.format {
            OutputFormat::Csv => {
                let mut f = self.create(&format!("{stem}.csv"))?;
                self.header(&mut f)?;
                writeln!(f, "{}", names.join(","))?;
                let rows = columns.first().map_or(0, Vec::len);
                for i in 0..rows {
                    let row: Vec<String> = columns.iter().map(|c| format!("{:e}", c[i])).collect();
                    writeln!(f, "{}", row.join(","))?;
                }
                f.flush()?;
            }
            OutputFormat::Json => {
                let map: serde_json::Map<String, serde_json::Value> = names
                    .iter()
                    .zip(columns)
                    .map(|(n, c)| (n.to_string(), serde_json::json!(c)))
                    .collect();
                self.json(stem, &map)?;
            }
        }
        Ok(())
    }
}

/// Validates, runs the selected mode and writes its outputs.
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    config.validate().into_result()?;
    let mut out = Outputs::new(config)?;
    let (line, passed) = match config.mode {
        Mode::Coherent => (run_coherent(config, &mut out)?, true),
        Mode::Trajectories => (run_trajectories(config, &mut out)?, true),
        Mode::Interference => (run_interference(config, &mut out)?, true),
        Mode::OracleCheck => run_oracle_check(config, &mut out)?,
        Mode::CollapseDemo => (run_collapse_demo(config, &mut out)?, true),
    };
    Ok(RunSummary {
        line,
        files: out.files,
        self_check_passed: passed,
    })
}

fn run_coherent(config: &RunConfig, out: &mut Outputs) -> Result<String> {
    let sector = config.sector()?;
    let params = config.coupling()?;
    let opts = EvolveOptions {
        n0_max: config.n0_max,
        enforce_undepleted: true,
    };
    let joint = evolve_with(sector, params, &opts)?;
    let h = n0_distribution(&joint);
    out.histogram("n0_distribution", &h)?;
    let (exact_mean, exact_var) = exact_n0_moments(&sector, &params);
    let mut line = format!(
        "mode=coherent N1={} N2={} sin2_vt={:.6} mean={:.6} variance={:.6} exact_variance={:.6} n0_max={}",
        sector.n1(),
        sector.n2(),
        params.sin2(),
        h.mean(),
        h.variance(),
        exact_var,
        joint.n0_max()
    );
    debug_assert!((h.mean() - exact_mean).abs() < 1e-6 * exact_mean.max(1.0));
    if let Some(n0) = config.n0_observed {
        let grid = default_phi_grid(config.phi_grid_size);
        let exact = exact_conditional_phase(&joint, n0)?.render(&grid)?;
        let gauss = gaussian_phase_approx(&sector, &params, n0, &grid)?
            .rendering
            .expect("gaussian form is rendered");
        let tv = total_variation(&exact, &gauss)?;
        out.table("phase_distribution", &["phi", "exact", "gaussian"], &[grid, exact.prob, gauss.prob])?;
        line.push_str(&format!(" n0_observed={n0} tv_gaussian={tv:.6}"));
    }
    Ok(line)
}

fn run_trajectories(config: &RunConfig, out: &mut Outputs) -> Result<String> {
    let sector = config.sector()?;
    let params = ContinuousParams::new(config.w, config.nu, config.seed)?;
    let init = PlusMinusState::fock(sector);
    let run = run_completed(&init, &params, config.ensemble_size, config.attempts_cap())?;
    let summary = ensemble_statistics(&run.records)?;
    {
        let mut f = out.create("trajectories.jsonl")?;
        serde_json::to_writer(
            &mut f,
            &serde_json::json!({ "config": config, "seed": config.seed, "stalled": run.stalled }),
        )?;
        writeln!(f)?;
        write_jsonl(&run.records, &mut f)?;
        f.flush()?;
    }
    let cols: [Vec<f64>; 3] = [
        summary.points.iter().map(|p| p.0).collect(),
        summary.points.iter().map(|p| p.1).collect(),
        summary.points.iter().map(|p| p.2).collect(),
    ];
    out.table("tau_vs_cosphi", &["tau_bar", "cosphi", "tau_predicted"], &cols)?;
    let tau_bar = cols[0].iter().sum::<f64>() / cols[0].len() as f64;
    Ok(format!(
        "mode=trajectories completed={} stalled={} tau_bar={tau_bar:.6e} residual_rms={:.4} ks_p={:.4} per_trajectory_ks_pass={:.3}",
        run.records.len(),
        run.stalled.len(),
        summary.residual_rms,
        summary.pooled_ks.p_value,
        summary.per_trajectory_pass
    ))
}

fn ensemble_spec(config: &RunConfig) -> EnsembleSpec {
    EnsembleSpec {
        initial: config.initial_numbers(),
        w: config.w,
        nu: config.nu,
        target_cosphi: config.target_cosphi,
        window: config.window,
        members: config.ensemble_size,
        max_attempts: config.attempts_cap(),
        seed: config.seed,
    }
}

fn run_interference(config: &RunConfig, out: &mut Outputs) -> Result<String> {
    let spec = ensemble_spec(config);
    let ens = conditioned_ensemble(&spec)?;
    let hist = centered_histogram(&ens.members)?;
    let report = fringe_report(&hist, config.sigma)?;
    out.histogram("dN12_centered", &report.histogram)?;
    out.json("fringe_report", &report)?;
    let mut line = format!(
        "mode=interference members={} attempts={} stalled={} sigma={} visibility={:.4} peak_spacing={}",
        ens.members.len(),
        ens.attempts,
        ens.stalled,
        config.sigma,
        report.visibility,
        report.peak_spacing.map_or("none".to_string(), |s| s.to_string())
    );
    if let Some([lo, hi]) = config.map_range {
        let n = config.n1.min(config.n2);
        let map = initial_vs_final_map(n, lo..=hi, &spec)?;
        let mut f = out.create("initial_vs_final.csv")?;
        let prov = vec![
            ("config".to_string(), config.to_json()),
            ("seed".to_string(), config.seed.to_string()),
        ];
        map.write_csv(&mut f, &prov)?;
        f.flush()?;
        line.push_str(&format!(" map_rows={}", map.rows.len()));
    }
    Ok(line)
}

#[derive(Serialize)]
struct OracleReport {
    coherent_max_deviation: f64,
    trajectory_max_deviation: f64,
    trajectories_checked: usize,
    tolerance: f64,
    passed: bool,
}

fn run_oracle_check(config: &RunConfig, out: &mut Outputs) -> Result<(String, bool)> {
    let sector = config.sector()?;
    let mut coherent_dev = 0.0f64;
    if let Ok(params) = config.coupling() {
        let opts = EvolveOptions {
            n0_max: Some(sector.total()),
            enforce_undepleted: false,
        };
        let joint = evolve_with(sector, params, &opts)?;
        let (v1, v2) = (params.v * params.alpha.cos(), params.v * params.alpha.sin());
        let dense = dense_unitary_evolve(&sector, v1, v2, params.t)?;
        let ours = n0_distribution(&joint);
        for (n0, p) in dense.n0_marginal().into_iter().enumerate() {
            coherent_dev = coherent_dev.max((ours.get(n0 as i64) - p).abs());
        }
    }
    let init = PlusMinusState::fock(sector);
    let mut traj_dev = 0.0f64;
    let mut checked = 0;
    for index in 0..config.ensemble_size as u64 {
        let rec = match run_detections(&init, config.w, config.nu, config.seed, index) {
            Ok(r) => r,
            Err(Error::DarkStateStall { .. }) => continue,
            Err(e) => return Err(e),
        };
        let dense = dense_conditional_state(&sector, config.w, &rec.taus, 0.0)?;
        let ours = plusminus_to_number(&rec.final_state);
        let overlap: f64 = dense.iter().zip(ours.amps()).map(|(d, o)| d * o.re).sum();
        let sign = overlap.signum();
        for (d, o) in dense.iter().zip(ours.amps()) {
            traj_dev = traj_dev.max((o - sign * d).norm());
        }
        checked += 1;
    }
    let passed = coherent_dev <= ORACLE_TOL && traj_dev <= ORACLE_TOL;
    out.json(
        "oracle_check",
        &OracleReport {
            coherent_max_deviation: coherent_dev,
            trajectory_max_deviation: traj_dev,
            trajectories_checked: checked,
            tolerance: ORACLE_TOL,
            passed,
        },
    )?;
    Ok((
        format!(
            "mode=oracle-check coherent_dev={coherent_dev:.3e} trajectory_dev={traj_dev:.3e} trajectories={checked} passed={passed}"
        ),
        passed,
    ))
}

fn run_collapse_demo(config: &RunConfig, out: &mut Outputs) -> Result<String> {
    use std::f64::consts::PI;
    let prior = Wavefunction1D::sample(-PI, PI, config.grid_points, |_| 1.0.into())?.normalized()?;
    let f = MeasuredFunction::cos();
    let g = DetectorKernel::gaussian(config.f0, config.kernel_width)?;
    let post = collapse(&prior, &f, &g)?;
    let roots = find_roots(&f, prior.grid(), config.f0);
    let resolved = roots.len() >= 2 && peaks_resolved(&g, &roots, &f);
    let approx = two_peak_approximation(&prior, &f, &g, &roots)?;
    let distance = post.l2_distance(&approx)?;
    out.table(
        "collapse",
        &["x", "density_in", "density_out", "density_two_peak"],
        &[prior.grid().to_vec(), prior.density(), post.density(), approx.density()],
    )?;
    let roots_s: Vec<String> = roots.iter().map(|r| format!("{r:.6}")).collect();
    Ok(format!(
        "mode=collapse-demo f0={} width={} roots=[{}] resolved={resolved} l2_two_peak={distance:.4e}",
        config.f0,
        config.kernel_width,
        roots_s.join(",")
    ))
}

/// Reads and validates a configuration file without running it.
pub fn validate_file(path: &Path) -> Result<crate::config::ValidationReport> {
    Ok(RunConfig::load(path)?.validate())
}
