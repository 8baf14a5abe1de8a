//! Run configuration: a flat JSON document with defaults for every field
//! except `mode`.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coherent::CouplingParams;
use crate::error::{Error, Result};
use crate::fock::SectorSpec;
use crate::interference::{desk_scale_nu, InitialNumberModel};
use crate::oracle::DIMENSION_CAP;
use crate::qmc::UNDEPLETED_RATIO;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Coherent,
    Trajectories,
    Interference,
    OracleCheck,
    CollapseDemo,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Coherent => "coherent",
            Mode::Trajectories => "trajectories",
            Mode::Interference => "interference",
            Mode::OracleCheck => "oracle-check",
            Mode::CollapseDemo => "collapse-demo",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

fn d_n() -> usize {
    1000
}
fn d_alpha() -> f64 {
    std::f64::consts::FRAC_PI_4
}
fn d_one() -> f64 {
    1.0
}
fn d_nu() -> usize {
    30
}
fn d_window() -> f64 {
    0.05
}
fn d_phi_points() -> usize {
    crate::coherent::DEFAULT_PHI_POINTS
}
fn d_ensemble() -> usize {
    200
}
fn d_seed() -> u64 {
    1
}
fn d_kernel_width() -> f64 {
    0.05
}
fn d_grid_points() -> usize {
    4001
}
fn d_out() -> PathBuf {
    PathBuf::from("out")
}

/// All dimensionless: times in units of `1/V` (coherent) or `1/W`
/// (continuous detection).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default = "d_n")]
    pub n1: usize,
    #[serde(default = "d_n")]
    pub n2: usize,
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default = "d_one")]
    pub v: f64,
    /// Coupling time; give either this or `sin2_vt`.
    #[serde(default)]
    pub t: Option<f64>,
    #[serde(default)]
    pub sin2_vt: Option<f64>,
    /// Coherent mode: outcome whose conditional phase distribution is
    /// exported.
    #[serde(default)]
    pub n0_observed: Option<usize>,
    #[serde(default)]
    pub n0_max: Option<usize>,
    #[serde(default = "d_phi_points")]
    pub phi_grid_size: usize,
    #[serde(default = "d_one")]
    pub w: f64,
    #[serde(default = "d_nu")]
    pub nu: usize,
    #[serde(default)]
    pub sigma: f64,
    /// Interference mode; absent means fixed `n1`, `n2`.
    #[serde(default)]
    pub initial_number_model: Option<InitialNumberModel>,
    #[serde(default)]
    pub target_cosphi: f64,
    #[serde(default = "d_window")]
    pub window: f64,
    /// Initial differences for the final-vs-initial map.
    #[serde(default)]
    pub map_range: Option<[i64; 2]>,
    #[serde(default = "d_ensemble")]
    pub ensemble_size: usize,
    #[serde(default)]
    pub max_attempts: Option<usize>,
    #[serde(default = "d_seed")]
    pub seed: u64,
    /// Collapse demo: measured value of `cos x`.
    #[serde(default)]
    pub f0: f64,
    #[serde(default = "d_kernel_width")]
    pub kernel_width: f64,
    #[serde(default = "d_grid_points")]
    pub grid_points: usize,
    #[serde(default = "d_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
}

impl RunConfig {
    /// Defaults for every field.
    pub fn for_mode(mode: Mode) -> Self {
        serde_json::from_value(serde_json::json!({ "mode": mode })).expect("defaults parse")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn sector(&self) -> Result<SectorSpec> {
        SectorSpec::new(self.n1, self.n2)
    }

    pub fn coupling(&self) -> Result<CouplingParams> {
        let t = match (self.t, self.sin2_vt) {
            (Some(t), None) => t,
            (None, Some(s2)) => {
                if !(0.0..=1.0).contains(&s2) {
                    return Err(Error::Config(format!("sin2_vt must lie in [0, 1], got {s2}")));
                }
                if !(self.v > 0.0) {
                    return Err(Error::Config(format!("v must be positive, got {}", self.v)));
                }
                s2.sqrt().asin() / self.v
            }
            (Some(_), Some(_)) => return Err(Error::Config("give either t or sin2_vt, not both".into())),
            (None, None) => return Err(Error::Config("coherent mode needs t or sin2_vt".into())),
        };
        CouplingParams::new(self.v, self.alpha, t)
    }

    pub fn initial_numbers(&self) -> InitialNumberModel {
        self.initial_number_model.unwrap_or(InitialNumberModel::Fixed {
            n1: self.n1,
            n2: self.n2,
        })
    }

    pub fn attempts_cap(&self) -> usize {
        self.max_attempts.unwrap_or(self.ensemble_size.saturating_mul(1000).max(10_000))
    }

    /// `N = 100` per mode with `ν` scaled to match.
    pub fn apply_desk_scale(&mut self) {
        self.rescale(100);
        self.nu = desk_scale_nu(self.nu, 100);
    }

    /// `N = 1000` per mode.
    pub fn apply_full_scale(&mut self) {
        self.rescale(1000);
    }

    fn rescale(&mut self, n: usize) {
        self.n1 = n;
        self.n2 = n;
        if let Some(InitialNumberModel::Poissonian { .. }) = self.initial_number_model {
            self.initial_number_model = Some(InitialNumberModel::Poissonian {
                mean1: n as f64,
                mean2: n as f64,
            });
        } else if self.initial_number_model.is_some() {
            self.initial_number_model = Some(InitialNumberModel::Fixed { n1: n, n2: n });
        }
    }

    /// Every violated precondition of the selected mode.
    pub fn validate(&self) -> ValidationReport {
        let mut problems = Vec::new();
        let mut check = |r: Result<()>| {
            if let Err(e) = r {
                problems.push(e);
            }
        };
        let sector = match self.sector() {
            Ok(s) => Some(s),
            Err(e) => {
                check(Err(e));
                None
            }
        };
        match self.mode {
            Mode::Coherent => {
                match (self.coupling(), sector) {
                    (Ok(c), Some(s)) => check(c.check_undepleted(&s)),
                    (Err(e), _) => check(Err(e)),
                    _ => {}
                }
                if self.phi_grid_size < 16 {
                    check(Err(Error::Config(format!("phi_grid_size must be >= 16, got {}", self.phi_grid_size))));
                }
            }
            Mode::Trajectories | Mode::Interference | Mode::OracleCheck => {
                if !(self.w > 0.0) || !self.w.is_finite() {
                    check(Err(Error::Config(format!("w must be positive, got {}", self.w))));
                }
                if self.nu == 0 {
                    check(Err(Error::Config("nu must be at least 1".into())));
                }
                if self.ensemble_size == 0 {
                    check(Err(Error::Config("ensemble_size must be at least 1".into())));
                }
                if self.max_attempts.is_some_and(|m| m < self.ensemble_size) {
                    check(Err(Error::Config("max_attempts must be >= ensemble_size".into())));
                }
            }
            Mode::CollapseDemo => {
                if !(self.kernel_width > 0.0) {
                    check(Err(Error::Config(format!("kernel_width must be positive, got {}", self.kernel_width))));
                }
                if self.grid_points < 16 {
                    check(Err(Error::Config(format!("grid_points must be >= 16, got {}", self.grid_points))));
                }
                if self.f0.abs() > 1.0 {
                    check(Err(Error::Config(format!("f0 = {} is outside the range of cos x", self.f0))));
                }
            }
        }
        match self.mode {
            Mode::Trajectories => check(self.check_nu(self.n1.min(self.n2) as f64)),
            Mode::Interference => {
                let model = self.initial_numbers();
                check(model.validate());
                check(self.check_nu(model.typical_min()));
                if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
                    check(Err(Error::Config(format!("sigma must be finite and >= 0, got {}", self.sigma))));
                }
                if !(self.window > 0.0) || self.target_cosphi.abs() > 1.0 {
                    check(Err(Error::Config("need window > 0 and |target_cosphi| <= 1".into())));
                }
                if let Some([lo, hi]) = self.map_range {
                    if lo > hi || (lo.unsigned_abs() as usize) > 2 * self.n2 || (hi.unsigned_abs() as usize) > 2 * self.n1 {
                        check(Err(Error::Config(format!("map_range [{lo}, {hi}] is empty or exceeds the atom numbers"))));
                    }
                }
            }
            Mode::OracleCheck => {
                let dim = (self.n1 + self.n2 + 1).pow(3);
                if dim > DIMENSION_CAP {
                    check(Err(Error::DimensionCap { dim, cap: DIMENSION_CAP }));
                }
                if self.nu > self.n1 + self.n2 {
                    check(Err(Error::Config("nu exceeds the number of atoms".into())));
                }
            }
            _ => {}
        }
        ValidationReport { problems }
    }

    fn check_nu(&self, min_population: f64) -> Result<()> {
        let bound = UNDEPLETED_RATIO * min_population;
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

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub problems: Vec<Error>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.problems.is_empty()
    }

    /// The first problem, for callers that want a single error.
    pub fn into_result(self) -> Result<()> {
        match self.problems.into_iter().next() {
            None => Ok(()),
            Some(e) => Err(e),
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.problems.is_empty() {
            return write!(f, "ok");
        }
        for (i, e) in self.problems.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{}: {e}", e.kind())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip() {
        for mode in [Mode::Coherent, Mode::Trajectories, Mode::Interference, Mode::OracleCheck, Mode::CollapseDemo] {
            let c = RunConfig::for_mode(mode);
            assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
            assert_eq!(mode.name().parse::<Mode>().unwrap(), mode);
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let e = RunConfig::from_json(r#"{"mode":"coherent","N":3}"#).unwrap_err();
        assert_eq!(e.kind(), "ConfigError");
    }

    #[test]
    fn sin2_sets_time() {
        let mut c = RunConfig::for_mode(Mode::Coherent);
        c.sin2_vt = Some(0.03);
        assert!((c.coupling().unwrap().sin2() - 0.03).abs() < 1e-15);
        c.t = Some(1.0);
        assert!(c.coupling().is_err());
    }

    #[test]
    fn desk_scale_keeps_parity() {
        let mut c = RunConfig::for_mode(Mode::Interference);
        c.nu = 26;
        c.initial_number_model = Some(InitialNumberModel::Poissonian { mean1: 1000.0, mean2: 1000.0 });
        c.apply_desk_scale();
        assert_eq!((c.n1, c.nu), (100, 2));
        assert_eq!(c.initial_number_model, Some(InitialNumberModel::Poissonian { mean1: 100.0, mean2: 100.0 }));
    }
}
