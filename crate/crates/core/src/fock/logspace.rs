//! Log-space arithmetic for combinatorial amplitudes.
//!
//! Binomial prefactors at N ~ 10^3 overflow `f64` long before the
//! amplitudes they multiply become small, so amplitudes are carried as a
//! sign together with the natural log of the magnitude.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

/// `ln(1e-300)`. Magnitudes below this are flushed to zero on conversion.
pub const LN_FLUSH: f64 = -690.775_527_898_213_7;

/// Number of `ln k!` entries kept in the shared table.
pub const TABLE_LEN: usize = 1 << 16;

/// A real number stored as `sign * exp(ln_mag)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogSigned {
    sign: f64,
    ln_mag: f64,
}

impl LogSigned {
    pub const ZERO: LogSigned = LogSigned {
        sign: 0.0,
        ln_mag: f64::NEG_INFINITY,
    };

    pub const ONE: LogSigned = LogSigned {
        sign: 1.0,
        ln_mag: 0.0,
    };

    /// Builds `sign * exp(ln_mag)`; only the sign of `sign` matters.
    pub fn new(sign: f64, ln_mag: f64) -> Self {
        if sign == 0.0 || ln_mag == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            LogSigned {
                sign: sign.signum(),
                ln_mag,
            }
        }
    }

    pub fn from_f64(x: f64) -> Self {
        Self::new(x, x.abs().ln())
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0.0
    }

    pub fn sign(&self) -> f64 {
        self.sign
    }

    pub fn ln_mag(&self) -> f64 {
        self.ln_mag
    }

    /// Multiplies by `exp(ln_factor)`.
    pub fn scale_ln(self, ln_factor: f64) -> Self {
        if self.is_zero() {
            self
        } else {
            LogSigned {
                sign: self.sign,
                ln_mag: self.ln_mag + ln_factor,
            }
        }
    }

    /// Linear value, flushing magnitudes below `1e-300` to exact zero.
    pub fn to_f64(self) -> f64 {
        if self.is_zero() || self.ln_mag < LN_FLUSH {
            0.0
        } else {
            self.sign * self.ln_mag.exp()
        }
    }
}

impl Neg for LogSigned {
    type Output = LogSigned;
    fn neg(self) -> LogSigned {
        LogSigned {
            sign: -self.sign,
            ln_mag: self.ln_mag,
        }
    }
}

impl Mul for LogSigned {
    type Output = LogSigned;
    fn mul(self, rhs: LogSigned) -> LogSigned {
        LogSigned::new(self.sign * rhs.sign, self.ln_mag + rhs.ln_mag)
    }
}

impl Add for LogSigned {
    type Output = LogSigned;
    fn add(self, rhs: LogSigned) -> LogSigned {
        if self.is_zero() {
            return rhs;
        }
        if rhs.is_zero() {
            return self;
        }
        let (big, small) = if self.ln_mag >= rhs.ln_mag {
            (self, rhs)
        } else {
            (rhs, self)
        };
        let ratio = (small.ln_mag - big.ln_mag).exp();
        if big.sign == small.sign {
            LogSigned {
                sign: big.sign,
                ln_mag: big.ln_mag + ratio.ln_1p(),
            }
        } else if ratio == 1.0 {
            LogSigned::ZERO
        } else {
            LogSigned {
                sign: big.sign,
                ln_mag: big.ln_mag + (-ratio).ln_1p(),
            }
        }
    }
}

impl Sub for LogSigned {
    type Output = LogSigned;
    fn sub(self, rhs: LogSigned) -> LogSigned {
        self + (-rhs)
    }
}

/// Table of `ln k!` built by cumulative summation.
#[derive(Debug, Clone)]
pub struct LogFactorials {
    table: Vec<f64>,
}

impl LogFactorials {
    pub fn new(k_max: usize) -> Self {
        let mut table = Vec::with_capacity(k_max + 1);
        table.push(0.0);
        let mut acc = 0.0;
        for k in 1..=k_max {
            acc += (k as f64).ln();
            table.push(acc);
        }
        LogFactorials { table }
    }

    /// Process-wide table with [`TABLE_LEN`] entries.
    pub fn shared() -> &'static LogFactorials {
        static SHARED: OnceLock<LogFactorials> = OnceLock::new();
        SHARED.get_or_init(|| LogFactorials::new(TABLE_LEN - 1))
    }

    pub fn k_max(&self) -> usize {
        self.table.len() - 1
    }

    pub fn ln_factorial(&self, k: usize) -> f64 {
        match self.table.get(k) {
            Some(v) => *v,
            None => stirling_ln_factorial(k),
        }
    }

    /// `ln C(n, k)`; `-inf` when `k > n`.
    pub fn ln_binomial(&self, n: usize, k: usize) -> f64 {
        if k > n {
            f64::NEG_INFINITY
        } else {
            self.ln_factorial(n) - self.ln_factorial(k) - self.ln_factorial(n - k)
        }
    }
}

/// Shorthand for `LogFactorials::shared().ln_factorial(k)`.
pub fn ln_factorial(k: usize) -> f64 {
    LogFactorials::shared().ln_factorial(k)
}

/// Shorthand for `LogFactorials::shared().ln_binomial(n, k)`.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    LogFactorials::shared().ln_binomial(n, k)
}

fn stirling_ln_factorial(k: usize) -> f64 {
    let n = k as f64;
    let inv = 1.0 / n;
    let inv2 = inv * inv;
    n * n.ln() - n + 0.5 * (std::f64::consts::TAU * n).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}
