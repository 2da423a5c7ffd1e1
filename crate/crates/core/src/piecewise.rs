//! Continuous piecewise-linear functions of one variable.
//!
//! A [`Piecewise1D`] with `m` breakpoints has `m + 1` affine pieces with
//! nonzero slopes; continuity is built in by construction (the function is
//! anchored by its value at the first breakpoint and integrated outward).
//!
//! Conventions shared across the crate:
//! - at a breakpoint, [`Piecewise1D::derivative`] returns the slope of the
//!   piece to the **right** (one-sided choice for subgradients);
//! - piece `r` has the closed domain `[b_{r−1}, b_r]` (unbounded at the
//!   ends), so breakpoints belong to both adjacent pieces — consumers that
//!   pull a region back through the function must handle the overlap.

use serde::{Deserialize, Serialize};

use crate::error::{DgError, Result};

/// One affine piece `x ↦ slope·x + intercept` on the closed interval
/// `[lo, hi]` (`±∞` for the outer pieces).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffinePiece {
    /// Slope of the piece (nonzero).
    pub slope: f64,
    /// Intercept of the piece.
    pub intercept: f64,
    /// Left end of the domain (`−∞` for the first piece).
    pub lo: f64,
    /// Right end of the domain (`+∞` for the last piece).
    pub hi: f64,
}

/// Continuous piecewise-linear map ℝ → ℝ with nonzero slopes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piecewise1D {
    breakpoints: Vec<f64>,
    slopes: Vec<f64>,
    value_at_first: f64,
    /// Function values at the breakpoints (derived; cached for evaluation).
    values: Vec<f64>,
}

impl Piecewise1D {
    /// Build a piecewise-linear map from `m ≥ 1` strictly increasing
    /// breakpoints, `m + 1` nonzero finite slopes, and the function value
    /// at the first breakpoint.
    pub fn new(breakpoints: Vec<f64>, slopes: Vec<f64>, value_at_first: f64) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(DgError::invalid("breakpoints", "need at least one"));
        }
        if slopes.len() != breakpoints.len() + 1 {
            return Err(DgError::invalid(
                "slopes",
                format!(
                    "need exactly {} slopes for {} breakpoints, got {}",
                    breakpoints.len() + 1,
                    breakpoints.len(),
                    slopes.len()
                ),
            ));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(DgError::invalid("breakpoints", "must all be finite"));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(DgError::invalid(
                "breakpoints",
                "must be strictly increasing",
            ));
        }
        if slopes.iter().any(|s| !s.is_finite() || *s == 0.0) {
            return Err(DgError::invalid("slopes", "must all be finite and nonzero"));
        }
        if !value_at_first.is_finite() {
            return Err(DgError::invalid("value_at_first", "must be finite"));
        }
        let mut values = Vec::with_capacity(breakpoints.len());
        values.push(value_at_first);
        for j in 1..breakpoints.len() {
            let prev = values[j - 1];
            values.push(prev + slopes[j] * (breakpoints[j] - breakpoints[j - 1]));
        }
        Ok(Self {
            breakpoints,
            slopes,
            value_at_first,
            values,
        })
    }

    /// Leaky rectifier: slope `alpha` left of 0, slope 1 right of 0.
    pub fn leaky_relu(alpha: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![alpha, 1.0], 0.0)
    }

    /// Re-run the constructor checks (for values read from disk).
    pub fn validate(&self) -> Result<()> {
        let rebuilt = Self::new(
            self.breakpoints.clone(),
            self.slopes.clone(),
            self.value_at_first,
        )?;
        if rebuilt.values.len() != self.values.len()
            || rebuilt
                .values
                .iter()
                .zip(&self.values)
                .any(|(a, b)| a.to_bits() != b.to_bits())
        {
            return Err(DgError::invalid(
                "values",
                "cached breakpoint values disagree with breakpoints and slopes",
            ));
        }
        Ok(())
    }

    /// Breakpoints, strictly increasing.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Slopes of the `m + 1` pieces, left to right.
    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// Number of affine pieces (`m + 1`).
    pub fn n_pieces(&self) -> usize {
        self.slopes.len()
    }

    /// Index of the piece whose slope applies at `x`, with breakpoints
    /// assigned to the right piece.
    fn piece_index(&self, x: f64) -> usize {
        // Number of breakpoints ≤ x: 0 means the leftmost piece.
        self.breakpoints.partition_point(|&b| b <= x)
    }

    /// Evaluate the function.
    pub fn eval(&self, x: f64) -> f64 {
        let r = self.piece_index(x);
        if r == 0 {
            self.values[0] + self.slopes[0] * (x - self.breakpoints[0])
        } else {
            self.values[r - 1] + self.slopes[r] * (x - self.breakpoints[r - 1])
        }
    }

    /// One-sided derivative: the right piece's slope at breakpoints.
    pub fn derivative(&self, x: f64) -> f64 {
        self.slopes[self.piece_index(x)]
    }

    /// Largest absolute slope.
    pub fn alpha_max(&self) -> f64 {
        self.slopes.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Smallest absolute slope.
    pub fn alpha_min(&self) -> f64 {
        self.slopes.iter().fold(f64::INFINITY, |m, s| m.min(s.abs()))
    }

    /// Function values at the breakpoints (the critical values, in
    /// breakpoint order).
    pub fn critical_values(&self) -> &[f64] {
        &self.values
    }

    /// Smallest gap between distinct critical values after sorting;
    /// `+∞` when there are fewer than two breakpoints.
    pub fn v_g(&self) -> f64 {
        if self.values.len() < 2 {
            return f64::INFINITY;
        }
        let mut sorted = self.values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sorted
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|&g| g > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    /// The affine pieces with their closed domains, left to right.
    pub fn pieces(&self) -> Vec<AffinePiece> {
        let m = self.breakpoints.len();
        (0..=m)
            .map(|r| {
                let (anchor_x, anchor_y, slope) = if r == 0 {
                    (self.breakpoints[0], self.values[0], self.slopes[0])
                } else {
                    (self.breakpoints[r - 1], self.values[r - 1], self.slopes[r])
                };
                AffinePiece {
                    slope,
                    intercept: anchor_y - slope * anchor_x,
                    lo: if r == 0 {
                        f64::NEG_INFINITY
                    } else {
                        self.breakpoints[r - 1]
                    },
                    hi: if r == m {
                        f64::INFINITY
                    } else {
                        self.breakpoints[r]
                    },
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn zigzag() -> Piecewise1D {
        // Slopes +1/−1/+1/−1 over breakpoints −1, 0, 2: values −? anchored
        // at f(−1) = 0 → f(0) = −1, f(2) = 1.
        Piecewise1D::new(vec![-1.0, 0.0, 2.0], vec![1.0, -1.0, 1.0, -1.0], 0.0).unwrap()
    }

    #[test]
    fn constructor_validation() {
        assert!(Piecewise1D::new(vec![], vec![1.0], 0.0).is_err());
        assert!(Piecewise1D::new(vec![0.0], vec![1.0], 0.0).is_err());
        assert!(Piecewise1D::new(vec![0.0, 0.0], vec![1.0, 1.0, 1.0], 0.0).is_err());
        assert!(Piecewise1D::new(vec![1.0, 0.0], vec![1.0, 1.0, 1.0], 0.0).is_err());
        assert!(Piecewise1D::new(vec![0.0], vec![0.0, 1.0], 0.0).is_err());
        assert!(Piecewise1D::new(vec![0.0], vec![f64::NAN, 1.0], 0.0).is_err());
        assert!(Piecewise1D::new(vec![0.0], vec![1.0, 1.0], f64::INFINITY).is_err());
        assert!(Piecewise1D::new(vec![0.0], vec![0.5, 1.0], 0.0).is_ok());
    }

    #[test]
    fn leaky_relu_matches_closed_form() {
        let f = Piecewise1D::leaky_relu(0.01).unwrap();
        assert_eq!(f.eval(-3.0), -0.03);
        assert_eq!(f.eval(0.0), 0.0);
        assert_eq!(f.eval(2.5), 2.5);
        assert_eq!(f.derivative(-1.0), 0.01);
        // Right-piece convention at the kink.
        assert_eq!(f.derivative(0.0), 1.0);
        assert_eq!(f.derivative(1.0), 1.0);
    }

    #[test]
    fn abs_as_piecewise() {
        let f = Piecewise1D::new(vec![0.0], vec![-1.0, 1.0], 0.0).unwrap();
        for x in [-3.0, -0.5, 0.0, 0.25, 7.0] {
            assert_eq!(f.eval(x), x.abs());
        }
    }

    #[test]
    fn zigzag_values_and_continuity() {
        let f = zigzag();
        assert_eq!(f.eval(-1.0), 0.0);
        assert_eq!(f.eval(0.0), -1.0);
        assert_eq!(f.eval(2.0), 1.0);
        assert_eq!(f.eval(-2.0), -1.0);
        assert_eq!(f.eval(3.0), 0.0);
        // Continuity: left and right limits agree at each breakpoint.
        for &b in f.breakpoints() {
            let eps = 1e-9;
            assert_relative_eq!(f.eval(b - eps), f.eval(b), epsilon = 1e-8);
            assert_relative_eq!(f.eval(b + eps), f.eval(b), epsilon = 1e-8);
        }
    }

    #[test]
    fn slope_extremes_and_vg() {
        let f = zigzag();
        assert_eq!(f.alpha_max(), 1.0);
        assert_eq!(f.alpha_min(), 1.0);
        // Critical values 0, −1, 1 → sorted gaps 1 and 1.
        assert_eq!(f.v_g(), 1.0);

        let single = Piecewise1D::leaky_relu(0.3).unwrap();
        assert_eq!(single.v_g(), f64::INFINITY);
        assert_eq!(single.alpha_min(), 0.3);
    }

    #[test]
    fn vg_skips_duplicate_critical_values() {
        // Values 0, −1, 0: duplicate 0s are one point; the gap is 1.
        let f = Piecewise1D::new(vec![-1.0, 0.0, 1.0], vec![1.0, -1.0, 1.0, 1.0], 0.0).unwrap();
        assert_eq!(f.critical_values(), &[0.0, -1.0, 0.0]);
        assert_eq!(f.v_g(), 1.0);
    }

    #[test]
    fn pieces_reproduce_eval_on_their_domains() {
        let f = zigzag();
        let pieces = f.pieces();
        assert_eq!(pieces.len(), f.n_pieces());
        for piece in &pieces {
            let lo = piece.lo.max(-10.0);
            let hi = piece.hi.min(10.0);
            for k in 0..=20 {
                let x = lo + (hi - lo) * k as f64 / 20.0;
                assert_relative_eq!(
                    piece.slope * x + piece.intercept,
                    f.eval(x),
                    epsilon = 1e-12
                );
            }
        }
        // Domains tile the line.
        assert_eq!(pieces[0].lo, f64::NEG_INFINITY);
        assert_eq!(pieces.last().unwrap().hi, f64::INFINITY);
        for w in pieces.windows(2) {
            assert_eq!(w[0].hi, w[1].lo);
        }
    }

    #[test]
    fn serde_roundtrip_validates() {
        let f = zigzag();
        let json = serde_json::to_string(&f).unwrap();
        let back: Piecewise1D = serde_json::from_str(&json).unwrap();
        back.validate().unwrap();
        assert_eq!(back, f);
    }
}
