//! One-dimensional measurement collapse `Ψ_out(x) ∝ Ψ_in(x) g[f(x) - f₀]`
//! and its linearised multi-peak form.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const UNIFORM_TOL: f64 = 1e-12;
const ZERO_OVERLAP: f64 = 1e-30;
const BOUNDARY_RATIO: f64 = 1e-8;
const DEGENERATE_SLOPE: f64 = 1e-9;
/// `g(y)/g(0)` below this counts as "much less than".
pub const RESOLUTION_RATIO: f64 = 0.01;

/// Samples of a wavefunction on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Wavefunction1D {
    grid: Vec<f64>,
    amps: Vec<Complex64>,
    norm_tol: f64,
}

impl Wavefunction1D {
    pub fn new(grid: Vec<f64>, amps: Vec<Complex64>) -> Result<Self> {
        if grid.len() < 3 || grid.len() != amps.len() {
            return Err(Error::InvalidInput(format!(
                "need matching grid and amplitudes of length >= 3, got {} and {}",
                grid.len(),
                amps.len()
            )));
        }
        let dx = grid[1] - grid[0];
        if dx <= 0.0 {
            return Err(Error::InvalidInput("grid must be strictly increasing".into()));
        }
        for w in grid.windows(2) {
            if ((w[1] - w[0]) - dx).abs() > UNIFORM_TOL * dx.max(w[1].abs()) * 10.0 {
                return Err(Error::InvalidInput("grid spacing is not uniform".into()));
            }
        }
        Ok(Wavefunction1D {
            grid,
            amps,
            norm_tol: 1e-10,
        })
    }

    /// Samples `psi` at `n` points spanning `[lo, hi]`.
    pub fn sample(lo: f64, hi: f64, n: usize, psi: impl Fn(f64) -> Complex64) -> Result<Self> {
        let grid = uniform_grid(lo, hi, n)?;
        let amps = grid.iter().map(|&x| psi(x)).collect();
        Self::new(grid, amps)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn spacing(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    pub fn norm_tol(&self) -> f64 {
        self.norm_tol
    }

    /// `∑|Ψ|² Δx`.
    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.spacing()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sqr();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidInput(format!("cannot normalise, norm² = {n}")));
        }
        let s = 1.0 / n.sqrt();
        self.amps.iter_mut().for_each(|a| *a *= s);
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= self.norm_tol
    }

    pub fn density(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `⟨self|other⟩`; the grids must agree.
    pub fn overlap(&self, other: &Self) -> Result<Complex64> {
        self.check_same_grid(other)?;
        let s: Complex64 = self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(s * self.spacing())
    }

    /// `‖self - other‖₂`.
    pub fn l2_distance(&self, other: &Self) -> Result<f64> {
        self.check_same_grid(other)?;
        let s: f64 = self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        Ok((s * self.spacing()).sqrt())
    }

    /// Linear interpolation of Ψ, zero outside the grid.
    pub fn interpolate(&self, x: f64) -> Complex64 {
        let dx = self.spacing();
        let u = (x - self.grid[0]) / dx;
        if u < 0.0 || u > (self.grid.len() - 1) as f64 {
            return Complex64::new(0.0, 0.0);
        }
        let i = (u.floor() as usize).min(self.grid.len() - 2);
        let t = u - i as f64;
        self.amps[i] * (1.0 - t) + self.amps[i + 1] * t
    }

    fn check_same_grid(&self, other: &Self) -> Result<()> {
        let same = self.grid.len() == other.grid.len()
            && (self.grid[0] - other.grid[0]).abs() <= UNIFORM_TOL * self.spacing()
            && (self.spacing() - other.spacing()).abs() <= UNIFORM_TOL * self.spacing();
        if same {
            Ok(())
        } else {
            Err(Error::InvalidInput("wavefunctions live on different grids".into()))
        }
    }

    fn check_boundary(&self) -> Result<()> {
        let max = self.amps.iter().map(|a| a.norm()).fold(0.0, f64::max);
        let edge = self.amps[0].norm().max(self.amps[self.amps.len() - 1].norm());
        let ratio = edge / max;
        if ratio >= BOUNDARY_RATIO {
            return Err(Error::GridTooSmall { ratio });
        }
        Ok(())
    }
}

pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n < 3 || !(hi > lo) {
        return Err(Error::InvalidInput(format!("bad grid [{lo}, {hi}] with {n} points")));
    }
    let dx = (hi - lo) / (n - 1) as f64;
    Ok((0..n).map(|i| lo + dx * i as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelShape {
    Gaussian,
    Boxcar,
}

/// Detector response `g`, unit-normalised and centred on the outcome `f₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorKernel {
    pub center: f64,
    pub width: f64,
    pub shape: KernelShape,
}

impl DetectorKernel {
    pub fn new(center: f64, width: f64, shape: KernelShape) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() || !center.is_finite() {
            return Err(Error::InvalidInput(format!(
                "kernel needs finite centre and positive width, got {center}, {width}"
            )));
        }
        Ok(DetectorKernel {
            center,
            width,
            shape,
        })
    }

    pub fn gaussian(center: f64, width: f64) -> Result<Self> {
        Self::new(center, width, KernelShape::Gaussian)
    }

    pub fn boxcar(center: f64, width: f64) -> Result<Self> {
        Self::new(center, width, KernelShape::Boxcar)
    }

    /// `g(y)`, with `y` measured from the outcome.
    pub fn eval(&self, y: f64) -> f64 {
        let w = self.width;
        match self.shape {
            KernelShape::Gaussian => {
                (-0.5 * (y / w).powi(2)).exp() / (w * (2.0 * std::f64::consts::PI).sqrt())
            }
            KernelShape::Boxcar => {
                if y.abs() <= w {
                    0.5 / w
                } else {
                    0.0
                }
            }
        }
    }
}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The measured observable `f(x)` and its slope.
#[derive(Clone)]
pub struct MeasuredFunction {
    f: RealFn,
    df: Option<RealFn>,
}

impl fmt::Debug for MeasuredFunction {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("MeasuredFunction")
            .field("analytic_derivative", &self.df.is_some())
            .finish()
    }
}

impl MeasuredFunction {
    pub fn new(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        MeasuredFunction {
            f: Arc::new(f),
            df: Some(Arc::new(df)),
        }
    }

    /// Slope taken by central differences.
    pub fn numeric(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        MeasuredFunction {
            f: Arc::new(f),
            df: None,
        }
    }

    pub fn cos() -> Self {
        Self::new(f64::cos, |x| -x.sin())
    }

    pub fn identity() -> Self {
        Self::new(|x| x, |_| 1.0)
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn slope(&self, x: f64) -> f64 {
        match &self.df {
            Some(df) => df(x),
            None => self.central_difference(x),
        }
    }

    fn central_difference(&self, x: f64) -> f64 {
        let h = 1e-5 * x.abs().max(1.0);
        ((self.f)(x + h) - (self.f)(x - h)) / (2.0 * h)
    }

    pub fn sample(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&x| self.value(x)).collect()
    }

    /// Checks the supplied slope against central differences of the
    /// sampled `f` on interior grid points.
    pub fn check_slope(&self, grid: &[f64]) -> Result<()> {
        if self.df.is_none() {
            return Ok(());
        }
        let vals = self.sample(grid);
        let dx = grid[1] - grid[0];
        let scale = vals.iter().map(|v| v.abs()).fold(0.0, f64::max) / (grid[grid.len() - 1] - grid[0]);
        for i in 1..grid.len() - 1 {
            let fd = (vals[i + 1] - vals[i - 1]) / (2.0 * dx);
            let an = self.slope(grid[i]);
            // central differences carry an O(dx²) error of their own
            let tol = 1e-6 * an.abs().max(scale) + dx * dx * scale;
            if (fd - an).abs() > tol {
                return Err(Error::InvalidInput(format!(
                    "slope mismatch at x = {}: analytic {an}, finite difference {fd}",
                    grid[i]
                )));
            }
        }
        Ok(())
    }
}

/// Roots of `f(x) = f0` on the grid, refined by bisection.
pub fn find_roots(f: &MeasuredFunction, grid: &[f64], f0: f64) -> Vec<f64> {
    let h = |x: f64| f.value(x) - f0;
    let mut roots = Vec::new();
    let vals: Vec<f64> = grid.iter().map(|&x| h(x)).collect();
    for i in 0..grid.len() {
        if vals[i] == 0.0 {
            roots.push(grid[i]);
            continue;
        }
        if i + 1 < grid.len() && vals[i + 1] != 0.0 && vals[i].signum() != vals[i + 1].signum() {
            let (mut a, mut b, mut ha) = (grid[i], grid[i + 1], vals[i]);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let hm = h(m);
                if hm == 0.0 || (b - a) <= f64::EPSILON * m.abs().max(1.0) {
                    a = m;
                    b = m;
                    break;
                }
                if hm.signum() == ha.signum() {
                    a = m;
                    ha = hm;
                } else {
                    b = m;
                }
            }
            roots.push(0.5 * (a + b));
        }
    }
    roots
}

/// `Ψ_out ∝ Ψ_in · g[f(x) - f₀]`, normalised.
pub fn collapse(
    psi_in: &Wavefunction1D,
    f: &MeasuredFunction,
    g: &DetectorKernel,
) -> Result<Wavefunction1D> {
    let dx = psi_in.spacing();
    if g.width <= 2.0 * dx {
        return Err(Error::KernelUnderresolved {
            width: g.width,
            spacing: dx,
        });
    }
    let amps: Vec<Complex64> = psi_in
        .grid
        .iter()
        .zip(&psi_in.amps)
        .map(|(&x, &a)| a * g.eval(f.value(x) - g.center))
        .collect();
    let mut out = Wavefunction1D {
        grid: psi_in.grid.clone(),
        amps,
        norm_tol: psi_in.norm_tol,
    };
    let weight = out.norm_sqr();
    if weight < ZERO_OVERLAP {
        return Err(Error::ZeroOverlap {
            outcome: g.center,
            weight,
        });
    }
    out.normalize()?;
    out.check_boundary()?;
    Ok(out)
}

/// Sum of linearised kernel images `Ψ_in(r) g[f'(r)(x - r)]` over `roots`.
pub fn two_peak_approximation(
    psi_in: &Wavefunction1D,
    f: &MeasuredFunction,
    g: &DetectorKernel,
    roots: &[f64],
) -> Result<Wavefunction1D> {
    let mut slopes = Vec::with_capacity(roots.len());
    for &r in roots {
        let slope = f.slope(r);
        if slope.abs() < DEGENERATE_SLOPE {
            return Err(Error::DegenerateRoot { root: r, slope });
        }
        slopes.push(slope);
    }
    if roots.len() >= 2 && !peaks_resolved(g, roots, f) {
        log::warn!("kernel images of adjacent roots overlap; linearisation is unreliable");
    }
    let weights: Vec<Complex64> = roots.iter().map(|&r| psi_in.interpolate(r)).collect();
    let amps = psi_in
        .grid
        .iter()
        .map(|&x| {
            roots
                .iter()
                .zip(&slopes)
                .zip(&weights)
                .map(|((&r, &s), &w)| w * g.eval(s * (x - r)))
                .sum()
        })
        .collect();
    let mut out = Wavefunction1D {
        grid: psi_in.grid.clone(),
        amps,
        norm_tol: psi_in.norm_tol,
    };
    let weight = out.norm_sqr();
    if weight < ZERO_OVERLAP {
        return Err(Error::ZeroOverlap {
            outcome: g.center,
            weight,
        });
    }
    out.normalize()?;
    Ok(out)
}

/// Largest `g(h f'(r)) / g(0)` over adjacent root pairs, `h` being half
/// their separation and `r` either root of the pair.
pub fn resolution_ratio(g: &DetectorKernel, roots: &[f64], f: &MeasuredFunction) -> Option<f64> {
    if roots.len() < 2 {
        return None;
    }
    let mut sorted = roots.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let g0 = g.eval(0.0);
    sorted
        .windows(2)
        .map(|w| {
            let h = 0.5 * (w[1] - w[0]);
            let a = g.eval(h * f.slope(w[0]));
            let b = g.eval(h * f.slope(w[1]));
            a.max(b) / g0
        })
        .reduce(f64::max)
}

/// Whether the kernel images around adjacent roots are well separated.
pub fn peaks_resolved(g: &DetectorKernel, roots: &[f64], f: &MeasuredFunction) -> bool {
    resolution_ratio(g, roots, f).is_some_and(|r| r < RESOLUTION_RATIO)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn flat(n: usize) -> Wavefunction1D {
        Wavefunction1D::sample(-PI, PI, n, |_| Complex64::new(1.0, 0.0))
            .unwrap()
            .normalized()
            .unwrap()
    }

    #[test]
    fn rejects_nonuniform_grid() {
        let amps = vec![Complex64::new(1.0, 0.0); 4];
        assert!(Wavefunction1D::new(vec![0.0, 1.0, 2.0, 3.5], amps).is_err());
    }

    #[test]
    fn kernels_are_unit_normalised() {
        for g in [
            DetectorKernel::gaussian(0.0, 0.3).unwrap(),
            DetectorKernel::boxcar(0.0, 0.3).unwrap(),
        ] {
            let dy = 1e-4;
            let total: f64 = (-50_000..=50_000).map(|k| g.eval(k as f64 * dy)).sum::<f64>() * dy;
            assert!((total - 1.0).abs() < 1e-3);
            assert_eq!(g.eval(0.1), g.eval(-0.1));
        }
    }

    #[test]
    fn monotone_observable_gives_one_narrower_peak() {
        let psi = Wavefunction1D::sample(-8.0, 8.0, 4001, |x| Complex64::new((-x * x / 4.0).exp(), 0.0))
            .unwrap()
            .normalized()
            .unwrap();
        let g = DetectorKernel::gaussian(0.0, 0.3).unwrap();
        let out = collapse(&psi, &MeasuredFunction::identity(), &g).unwrap();
        let var = |w: &Wavefunction1D| {
            w.grid().iter().zip(w.density()).map(|(x, p)| x * x * p).sum::<f64>() * w.spacing()
        };
        assert!(var(&out) < var(&psi));
        let peak = out.density().iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!(out.grid()[peak].abs() < 1e-9);
    }

    #[test]
    fn cosine_at_zero_gives_two_equal_peaks() {
        let out = collapse(&flat(4001), &MeasuredFunction::cos(), &DetectorKernel::gaussian(0.0, 0.05).unwrap()).unwrap();
        let d = out.density();
        let left: f64 = d[..2000].iter().sum();
        let right: f64 = d[2001..].iter().sum();
        assert!((left - right).abs() < 1e-10 * (left + right));
        let imax = d.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!((out.grid()[imax].abs() - PI / 2.0).abs() < 2.0 * out.spacing());
    }

    #[test]
    fn underresolved_kernel_and_zero_overlap() {
        let psi = flat(101);
        let f = MeasuredFunction::cos();
        assert!(matches!(
            collapse(&psi, &f, &DetectorKernel::gaussian(0.0, 0.05).unwrap()),
            Err(Error::KernelUnderresolved { .. })
        ));
        assert!(matches!(
            collapse(&psi, &f, &DetectorKernel::boxcar(3.0, 0.5).unwrap()),
            Err(Error::ZeroOverlap { .. })
        ));
    }

    #[test]
    fn roots_of_cosine() {
        let grid = uniform_grid(-PI, PI, 1001).unwrap();
        let r = find_roots(&MeasuredFunction::cos(), &grid, 0.5);
        assert_eq!(r.len(), 2);
        assert!((r[0] + PI / 3.0).abs() < 1e-12 && (r[1] - PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_root_is_rejected() {
        let psi = flat(1001);
        let g = DetectorKernel::gaussian(1.0, 0.05).unwrap();
        assert!(matches!(
            two_peak_approximation(&psi, &MeasuredFunction::cos(), &g, &[0.0]),
            Err(Error::DegenerateRoot { .. })
        ));
    }

    #[test]
    fn analytic_slope_passes_check() {
        let grid = uniform_grid(-PI, PI, 2001).unwrap();
        MeasuredFunction::cos().check_slope(&grid).unwrap();
        assert!(MeasuredFunction::new(f64::cos, f64::sin).check_slope(&grid).is_err());
    }
}
