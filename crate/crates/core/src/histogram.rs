//! Probability distributions over an integer observable.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense distribution over the integers `offset..offset + probs.len()`,
/// tagged with the observable's name and free-form provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountHistogram {
    observable: String,
    offset: i64,
    probs: Vec<f64>,
    #[serde(default)]
    provenance: BTreeMap<String, String>,
}

impl CountHistogram {
    pub fn new(observable: impl Into<String>, offset: i64, probs: Vec<f64>) -> Self {
        CountHistogram {
            observable: observable.into(),
            offset,
            probs,
            provenance: BTreeMap::new(),
        }
    }

    /// Builds from `(value, probability)` pairs; repeated values add up.
    pub fn from_pairs(observable: impl Into<String>, pairs: impl IntoIterator<Item = (i64, f64)>) -> Self {
        let mut map = BTreeMap::new();
        for (v, p) in pairs {
            *map.entry(v).or_insert(0.0) += p;
        }
        let Some((&lo, _)) = map.first_key_value() else {
            return Self::new(observable, 0, Vec::new());
        };
        let hi = *map.last_key_value().unwrap().0;
        let mut probs = vec![0.0; (hi - lo + 1) as usize];
        for (v, p) in map {
            probs[(v - lo) as usize] = p;
        }
        Self::new(observable, lo, probs)
    }

    pub fn with_provenance(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.provenance.insert(key.into(), value.to_string());
        self
    }

    pub fn set_provenance(&mut self, key: impl Into<String>, value: impl ToString) {
        self.provenance.insert(key.into(), value.to_string());
    }

    pub fn provenance(&self) -> &BTreeMap<String, String> {
        &self.provenance
    }

    pub fn observable(&self) -> &str {
        &self.observable
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn min_value(&self) -> i64 {
        self.offset
    }

    pub fn max_value(&self) -> i64 {
        self.offset + self.probs.len() as i64 - 1
    }

    pub fn get(&self, value: i64) -> f64 {
        let i = value - self.offset;
        if i < 0 || i >= self.probs.len() as i64 {
            0.0
        } else {
            self.probs[i as usize]
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(move |(i, &p)| (self.offset + i as i64, p))
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(v, p)| v as f64 * p).sum::<f64>() / self.total()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.iter().map(|(v, p)| (v as f64 - m).powi(2) * p).sum::<f64>() / self.total()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let t = self.total();
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidInput(format!("cannot normalise histogram of mass {t}")));
        }
        self.probs.iter_mut().for_each(|p| *p /= t);
        Ok(())
    }

    /// Same distribution over `value + by`.
    pub fn shifted(&self, by: i64) -> Self {
        let mut h = self.clone();
        h.offset += by;
        h
    }

    /// Adds `weight × other` into `self`, widening the range as needed.
    pub fn accumulate(&mut self, other: &CountHistogram, weight: f64) {
        if other.is_empty() {
            return;
        }
        if self.is_empty() {
            self.offset = other.offset;
        }
        let lo = self.min_value().min(other.min_value());
        let hi = self.max_value().max(other.max_value());
        if lo < self.offset || hi > self.max_value() {
            let mut probs = vec![0.0; (hi - lo + 1) as usize];
            let shift = (self.offset - lo) as usize;
            probs[shift..shift + self.probs.len()].copy_from_slice(&self.probs);
            self.probs = probs;
            self.offset = lo;
        }
        let shift = (other.offset - self.offset) as usize;
        for (i, p) in other.probs.iter().enumerate() {
            self.probs[shift + i] += weight * p;
        }
    }

    /// Convolution with the discrete Gaussian `∝ exp(-k²/2σ²)` on the
    /// integers, cut at `8σ`. `σ = 0` returns an exact copy.
    pub fn convolve_gaussian(&self, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidInput(format!("sigma must be finite and >= 0, got {sigma}")));
        }
        if sigma == 0.0 {
            return Ok(self.clone());
        }
        let kernel = discrete_gaussian(sigma);
        let half = (kernel.len() / 2) as i64;
        let mut probs = vec![0.0; self.probs.len() + kernel.len() - 1];
        for (i, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (k, &w) in kernel.iter().enumerate() {
                probs[i + k] += p * w;
            }
        }
        let mut h = self.clone();
        h.offset -= half;
        h.probs = probs;
        h.set_provenance("smearing_sigma", sigma);
        Ok(h)
    }

    /// Keeps values congruent to `residue` modulo `modulus`.
    pub fn restricted_to_class(&self, modulus: i64, residue: i64) -> Self {
        let mut h = self.clone();
        for (i, p) in h.probs.iter_mut().enumerate() {
            if (self.offset + i as i64 - residue).rem_euclid(modulus) != 0 {
                *p = 0.0;
            }
        }
        h
    }

    /// Writes `# key: value` provenance lines, then `value,probability` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# observable: {}", self.observable)?;
        for (k, v) in &self.provenance {
            writeln!(out, "# {k}: {v}")?;
        }
        writeln!(out, "value,probability")?;
        for (v, p) in self.iter() {
            writeln!(out, "{v},{p:e}")?;
        }
        Ok(())
    }
}

/// Normalised weights `exp(-k²/2σ²)` for `k = -⌈8σ⌉..=⌈8σ⌉`.
pub fn discrete_gaussian(sigma: f64) -> Vec<f64> {
    let half = (8.0 * sigma).ceil() as i64;
    let w: Vec<f64> = (-half..=half)
        .map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_pairs() {
        let h = CountHistogram::from_pairs("x", [(2, 0.25), (-2, 0.25), (0, 0.5)]);
        assert_eq!(h.offset(), -2);
        assert_eq!(h.len(), 5);
        assert_eq!(h.mean(), 0.0);
        assert_eq!(h.variance(), 2.0);
    }

    #[test]
    fn zero_width_smearing_is_identity() {
        let h = CountHistogram::new("x", 3, vec![0.1, 0.2, 0.7]);
        assert_eq!(h.convolve_gaussian(0.0).unwrap(), h);
    }

    #[test]
    fn smearing_preserves_mass_and_mean_and_adds_variance() {
        let h = CountHistogram::new("x", 10, vec![0.3, 0.0, 0.7]);
        let s = h.convolve_gaussian(1.5).unwrap();
        assert!((s.total() - 1.0).abs() < 1e-14);
        assert!((s.mean() - h.mean()).abs() < 1e-12);
        let kvar: f64 = discrete_gaussian(1.5)
            .iter()
            .enumerate()
            .map(|(i, w)| (i as f64 - 12.0).powi(2) * w)
            .sum();
        assert!((s.variance() - h.variance() - kvar).abs() < 1e-12);
    }

    #[test]
    fn accumulate_widens_range() {
        let mut a = CountHistogram::new("x", 0, vec![1.0]);
        a.accumulate(&CountHistogram::new("x", -2, vec![1.0, 1.0]), 0.5);
        a.accumulate(&CountHistogram::new("x", 3, vec![2.0]), 1.0);
        assert_eq!(a.offset(), -2);
        assert_eq!(a.probabilities(), &[0.5, 0.5, 1.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let h = CountHistogram::new("n0", 0, vec![0.5, 0.5]).with_provenance("seed", 7);
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(
            s,
            "# observable: n0\n# seed: 7\nvalue,probability\n0,5e-1\n1,5e-1\n"
        );
    }
}
