//! Small numerical utilities shared across the crate.
//!
//! Everything here is deliberately tiny and deterministic: compensated
//! summation so that empirical masses are reproducible bit-for-bit no
//! matter how work is chunked, and one shared `b^x` so every module rounds
//! exponentials identically.

/// Kahan–Babuška compensated accumulator.
///
/// Adding values in a fixed order through this accumulator produces the
/// same bits on every run and keeps the error of a length-`n` sum at
/// O(ε) instead of O(nε). Used for masses, weighted losses, and the
/// term sums of the stability constants.
#[derive(Clone, Copy, Debug, Default)]
pub struct Kahan {
    sum: f64,
    compensation: f64,
}

impl Kahan {
    /// Fresh accumulator at zero.
    pub fn new() -> Self {
        Self::default()
    }

    /// Add one term.
    #[inline]
    pub fn add(&mut self, value: f64) {
        let y = value - self.compensation;
        let t = self.sum + y;
        self.compensation = (t - self.sum) - y;
        self.sum = t;
    }

    /// Current compensated total.
    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Compensated sum of an iterator, in iteration order.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = Kahan::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// `base^x` computed as `exp(x · ln base)`.
///
/// All exponentials with a configurable base (softmax, loss sandwich,
/// stability constants) route through this single definition so the
/// library and its oracles agree to the last rounding.
#[inline]
pub fn pow_b(base: f64, x: f64) -> f64 {
    (x * base.ln()).exp()
}

/// `ln(1 + base^x)` with `ln_1p` precision for very negative `x`.
#[inline]
pub fn ln_1p_pow(base: f64, x: f64) -> f64 {
    pow_b(base, x).ln_1p()
}
