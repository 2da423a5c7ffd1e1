//! Small statistics helpers: means and rank correlation.
//!
//! Spearman's ρ is Pearson's correlation applied to ranks, with ties
//! receiving the average of the rank positions they occupy. That convention
//! makes the coefficient exact on tied data without any approximation
//! formula, and it is the one used by the experiment pipeline to compare
//! scan widths against training loss.

use crate::error::{DgError, Result};
use crate::numeric::kahan_sum;

/// Arithmetic mean. Errors on an empty slice or non-finite entries.
pub fn mean(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(DgError::invalid("xs", "mean of an empty slice"));
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(DgError::invalid("xs", "entries must be finite"));
    }
    Ok(kahan_sum(xs.iter().copied()) / xs.len() as f64)
}

/// Pearson correlation coefficient.
///
/// Errors if the slices differ in length, have fewer than two entries, or
/// contain non-finite values. Returns 0 when either side has zero variance
/// (the coefficient is undefined there; 0 is the conventional neutral value
/// and keeps downstream sign tests well-defined).
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(DgError::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(DgError::invalid("xs", "correlation needs at least 2 points"));
    }
    let mx = mean(xs)?;
    let my = mean(ys)?;
    let cov = kahan_sum(xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)));
    let vx = kahan_sum(xs.iter().map(|&x| (x - mx) * (x - mx)));
    let vy = kahan_sum(ys.iter().map(|&y| (y - my) * (y - my)));
    if vx <= 0.0 || vy <= 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (vx.sqrt() * vy.sqrt()))
}

/// Fractional ranks (1-based), ties averaged.
///
/// `ranks(&[10, 20, 20, 30])` is `[1, 2.5, 2.5, 4]`.
pub fn ranks(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(DgError::invalid("xs", "entries must be finite"));
    }
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        // Positions start+1 ..= end share the average rank.
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            out[idx] = avg;
        }
        start = end;
    }
    Ok(out)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(DgError::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    pearson(&ranks(xs)?, &ranks(ys)?)
}
