//! Dense Fock spaces for a handful of bosonic modes.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Cap on the product of per-mode dimensions.
pub const DIMENSION_CAP: usize = 1_000_000;

/// Occupation-number basis of a few modes, either at a fixed total atom
/// number or the direct sum of all totals up to a maximum.
#[derive(Debug, Clone)]
pub struct DenseFockSpace {
    modes: usize,
    basis: Vec<Vec<usize>>,
    index: HashMap<Vec<usize>, usize>,
}

impl DenseFockSpace {
    /// All occupations of `modes` modes summing to `total`.
    pub fn fixed_total(modes: usize, total: usize) -> Result<Self> {
        Self::check_cap(modes, total)?;
        let mut basis = Vec::new();
        push_compositions(modes, total, &mut Vec::new(), &mut basis);
        Ok(Self::from_basis(modes, basis))
    }

    /// All occupations with total `0..=max_total`, ordered by descending total.
    pub fn up_to_total(modes: usize, max_total: usize) -> Result<Self> {
        Self::check_cap(modes, max_total)?;
        let mut basis = Vec::new();
        for total in (0..=max_total).rev() {
            push_compositions(modes, total, &mut Vec::new(), &mut basis);
        }
        Ok(Self::from_basis(modes, basis))
    }

    fn check_cap(modes: usize, cutoff: usize) -> Result<()> {
        let dim = (cutoff + 1).checked_pow(modes as u32).unwrap_or(usize::MAX);
        if dim > DIMENSION_CAP {
            return Err(Error::DimensionCap {
                dim,
                cap: DIMENSION_CAP,
            });
        }
        Ok(())
    }

    fn from_basis(modes: usize, basis: Vec<Vec<usize>>) -> Self {
        let index = basis
            .iter()
            .enumerate()
            .map(|(i, occ)| (occ.clone(), i))
            .collect();
        DenseFockSpace {
            modes,
            basis,
            index,
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn basis(&self) -> &[Vec<usize>] {
        &self.basis
    }

    pub fn index_of(&self, occupation: &[usize]) -> Option<usize> {
        self.index.get(occupation).copied()
    }

    /// `b_mode`, dropping transitions that leave the space.
    pub fn annihilation(&self, mode: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for (col, occ) in self.basis.iter().enumerate() {
            if occ[mode] == 0 {
                continue;
            }
            let mut target = occ.clone();
            target[mode] -= 1;
            if let Some(row) = self.index_of(&target) {
                m[(row, col)] = (occ[mode] as f64).sqrt();
            }
        }
        m
    }

    /// `b_to† b_from`, which never leaves a fixed-total space.
    pub fn hopping(&self, to: usize, from: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for (col, occ) in self.basis.iter().enumerate() {
            if occ[from] == 0 {
                continue;
            }
            let mut target = occ.clone();
            let amp = if to == from {
                occ[from] as f64
            } else {
                target[from] -= 1;
                target[to] += 1;
                ((occ[from] * target[to]) as f64).sqrt()
            };
            if let Some(row) = self.index_of(&target) {
                m[(row, col)] = amp;
            }
        }
        m
    }

    pub fn number(&self, mode: usize) -> DMatrix<f64> {
        self.hopping(mode, mode)
    }

    pub fn basis_vector(&self, occupation: &[usize]) -> Result<DVector<f64>> {
        let i = self
            .index_of(occupation)
            .ok_or_else(|| Error::InvalidInput(format!("{occupation:?} not in space")))?;
        let mut v = DVector::zeros(self.dim());
        v[i] = 1.0;
        Ok(v)
    }
}

fn push_compositions(modes: usize, remaining: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if prefix.len() + 1 == modes {
        prefix.push(remaining);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for k in (0..=remaining).rev() {
        prefix.push(k);
        push_compositions(modes, remaining - k, prefix, out);
        prefix.pop();
    }
}

/// `exp(A)` by scaling and squaring of a truncated Taylor series.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.iter().map(|v| v.abs()).fold(0.0, f64::max) * n as f64;
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let a = a * scale;
    let mut result = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=24 {
        term = &term * &a / k as f64;
        result += &term;
        if term.amax() < 1e-20 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}
