//! Change of mode basis between `(b1, b2)` and `b± = (b1 ± b2)/√2`.
//!
//! The overlap `T[p][n1] = ⟨n₊ = p | n₁⟩` inside a sector of `M` atoms is a
//! Wigner small-d element at angle π/2. Both of its slices are the same
//! normalised Krawtchouk sequence
//!
//! ```text
//! B(q; a, b) = 2^{-M/2} sqrt(q!(M-q)! / (a! b!)) [x^q] (1+x)^a (1-x)^b,   M = a + b
//! T[p][n1]   = (-1)^{n2}    B(p;  n1, n2)      (fixed n1, varying n₊)
//!            = (-1)^{M-p}   B(n1; p,  M-p)     (fixed n₊, varying n1)
//! ```
//!
//! `B` obeys the three-term recurrence
//! `B_{q+1} sqrt((q+1)(M-q)) = (a-b) B_q - sqrt(q(M-q+1)) B_{q-1}`,
//! which is run in log space from `q = 0` to the centre and mirrored with
//! `B(M-q) = (-1)^b B(q)`. Starting at the edge keeps the recurrence in
//! its growing (or oscillatory) direction.

use num_complex::Complex64;

use super::logspace::{ln_binomial, LogSigned};

/// `B(q; a, b)` for `q = 0..=a+b`.
pub fn krawtchouk_amplitudes(a: usize, b: usize) -> Vec<f64> {
    let m = a + b;
    let half = m / 2;
    let delta = a as f64 - b as f64;
    let ln_delta = delta.abs().ln();

    let mut out = vec![0.0; m + 1];
    let mut prev = LogSigned::ZERO;
    let mut cur = LogSigned::new(
        1.0,
        0.5 * (ln_binomial(m, a) - m as f64 * std::f64::consts::LN_2),
    );
    out[0] = cur.to_f64();
    for q in 0..half {
        let lead = if delta == 0.0 {
            LogSigned::ZERO
        } else {
            LogSigned::new(cur.sign() * delta.signum(), cur.ln_mag() + ln_delta)
        };
        let back = if q == 0 {
            LogSigned::ZERO
        } else {
            prev.scale_ln(0.5 * ((q as f64).ln() + ((m - q + 1) as f64).ln()))
        };
        let next = (lead - back).scale_ln(-0.5 * (((q + 1) as f64).ln() + ((m - q) as f64).ln()));
        prev = cur;
        cur = next;
        out[q + 1] = cur.to_f64();
    }
    let mirror = if b % 2 == 0 { 1.0 } else { -1.0 };
    for q in (half + 1)..=m {
        out[q] = mirror * out[m - q];
    }
    out
}

/// Column `n1` of the transform: `⟨p | n1, M - n1⟩` for `p = 0..=M`.
pub fn column(total: usize, n1: usize) -> Vec<f64> {
    assert!(n1 <= total);
    let n2 = total - n1;
    let mut col = krawtchouk_amplitudes(n1, n2);
    if n2 % 2 == 1 {
        col.iter_mut().for_each(|v| *v = -*v);
    }
    col
}

/// Row `p` of the transform: `⟨p | n1, M - n1⟩` for `n1 = 0..=M`.
pub fn row(total: usize, p: usize) -> Vec<f64> {
    assert!(p <= total);
    let mut r = krawtchouk_amplitudes(p, total - p);
    if (total - p) % 2 == 1 {
        r.iter_mut().for_each(|v| *v = -*v);
    }
    r
}

/// Full `(M+1) × (M+1)` transform, indexed `[p][n1]`.
pub fn transform_matrix(total: usize) -> Vec<Vec<f64>> {
    (0..=total).map(|p| row(total, p)).collect()
}

/// Components below `1e-36` of the largest weight are skipped.
fn negligible(amps: &[Complex64]) -> f64 {
    1e-36 * amps.iter().map(|a| a.norm_sqr()).fold(0.0, f64::max)
}

/// `a(p) = Σ_{n1} T[p][n1] c(n1)`.
pub(crate) fn apply_forward(total: usize, number_amps: &[Complex64]) -> Vec<Complex64> {
    debug_assert_eq!(number_amps.len(), total + 1);
    let floor = negligible(number_amps);
    let mut out = vec![Complex64::new(0.0, 0.0); total + 1];
    for (n1, c) in number_amps.iter().enumerate() {
        if c.norm_sqr() <= floor {
            continue;
        }
        for (o, t) in out.iter_mut().zip(column(total, n1)) {
            *o += c * t;
        }
    }
    out
}

/// `c(n1) = Σ_p T[p][n1] a(p)`.
pub(crate) fn apply_inverse(total: usize, pm_amps: &[Complex64]) -> Vec<Complex64> {
    debug_assert_eq!(pm_amps.len(), total + 1);
    let floor = negligible(pm_amps);
    let mut out = vec![Complex64::new(0.0, 0.0); total + 1];
    for (p, a) in pm_amps.iter().enumerate() {
        if a.norm_sqr() <= floor {
            continue;
        }
        for (o, t) in out.iter_mut().zip(row(total, p)) {
            *o += a * t;
        }
    }
    out
}

/// `exp(-iβ J_y)` on number-basis amplitudes, where `J_y` generates the
/// mode rotation `b1† → cos(β/2) b1† + sin(β/2) b2†`.
///
/// Uses `exp(-iβJ_y) = exp(-iπ/2 J_z) exp(-iβ J_x) exp(iπ/2 J_z)` with
/// `J_x` diagonal in the `n₊` basis, so only the π/2 transform is needed.
pub fn rotate_y(total: usize, beta: f64, number_amps: &[Complex64]) -> Vec<Complex64> {
    let half = total as f64 / 2.0;
    let quarter = |k: usize, sign: f64| Complex64::from_polar(1.0, sign * std::f64::consts::FRAC_PI_2 * (k as f64 - half));
    let phased: Vec<Complex64> = number_amps
        .iter()
        .enumerate()
        .map(|(n1, &c)| c * quarter(n1, 1.0))
        .collect();
    let mut pm = apply_forward(total, &phased);
    for (p, a) in pm.iter_mut().enumerate() {
        *a *= Complex64::from_polar(1.0, -beta * (p as f64 - half));
    }
    let mut out = apply_inverse(total, &pm);
    for (n1, a) in out.iter_mut().enumerate() {
        *a *= quarter(n1, -1.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct alternating sum, fine for small M.
    fn brute(a: usize, b: usize) -> Vec<f64> {
        let m = a + b;
        let fact = |k: usize| (1..=k).fold(1.0f64, |acc, i| acc * i as f64);
        let choose = |n: usize, k: usize| if k > n { 0.0 } else { fact(n) / (fact(k) * fact(n - k)) };
        (0..=m)
            .map(|q| {
                let mut coef = 0.0;
                for k in 0..=q.min(a) {
                    if q - k > b {
                        continue;
                    }
                    let s = if (q - k) % 2 == 0 { 1.0 } else { -1.0 };
                    coef += s * choose(a, k) * choose(b, q - k);
                }
                coef * (fact(q) * fact(m - q) / (fact(a) * fact(b))).sqrt() * 2f64.powf(-(m as f64) / 2.0)
            })
            .collect()
    }

    #[test]
    fn recurrence_matches_alternating_sum() {
        for m in 0..=16 {
            for a in 0..=m {
                let fast = krawtchouk_amplitudes(a, m - a);
                let slow = brute(a, m - a);
                for (x, y) in fast.iter().zip(&slow) {
                    assert!((x - y).abs() < 1e-12, "m={m} a={a}: {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn single_atom_beam_splitter() {
        // b1† = (b+† + b-†)/√2, b2† = (b+† - b-†)/√2
        let t = transform_matrix(1);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((t[0][1] - h).abs() < 1e-15 && (t[1][1] - h).abs() < 1e-15);
        assert!((t[0][0] + h).abs() < 1e-15 && (t[1][0] - h).abs() < 1e-15);
    }

    #[test]
    fn row_and_column_slices_agree() {
        let m = 9;
        let rows = transform_matrix(m);
        for n1 in 0..=m {
            let col = column(m, n1);
            for p in 0..=m {
                assert!((col[p] - rows[p][n1]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn rotation_moves_single_atom() {
        let beta = 0.8f64;
        let one = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
        // |n1 = 1⟩ = b1†|vac⟩ → cos(β/2)|n1 = 1⟩ + sin(β/2)|n1 = 0⟩
        let r = rotate_y(1, beta, &one);
        assert!((r[1] - Complex64::new((beta / 2.0).cos(), 0.0)).norm() < 1e-14);
        assert!((r[0] - Complex64::new((beta / 2.0).sin(), 0.0)).norm() < 1e-14);
    }
}
