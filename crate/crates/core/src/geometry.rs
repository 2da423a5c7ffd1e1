//! Slabs and truncated slabs in ℝⁿ: membership, scaling, and empirical mass.
//!
//! A *slab* is the region between two parallel hyperplanes: all points `x`
//! with `|(x − center)·normal| ≤ width/2` for a unit `normal`. A
//! *truncated slab* intersects a slab with finitely many closed
//! half-spaces `v·x ≤ t`. Truncations are part of a truncated slab's
//! identity: rescaling the slab's width never moves them.
//!
//! Conventions used throughout the crate:
//! - widths are **full** widths (half-width = `width/2`),
//! - boundary points count as **inside** (all comparisons non-strict),
//! - normals are re-normalized on construction and construction fails if
//!   the supplied vector has norm below `1e-12`,
//! - masses are accumulated with compensated summation in point order, so
//!   they are bit-reproducible for any dataset that fits in memory.
//!
//! All types are immutable after construction and all operations are
//! pure, so values may be shared freely across threads.

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{DgError, Result};
use crate::numeric::Kahan;

/// Smallest norm accepted for a direction vector before normalization.
pub const MIN_NORMAL_NORM: f64 = 1e-12;

fn norm(v: &[f64]) -> f64 {
    let mut acc = Kahan::new();
    for &x in v {
        acc.add(x * x);
    }
    acc.value().sqrt()
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(DgError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Region between two parallel hyperplanes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slab {
    center: Vec<f64>,
    normal: Vec<f64>,
    width: f64,
}

impl Slab {
    /// Build a slab; `normal` is re-normalized to unit length.
    ///
    /// Errors if `width ≤ 0` or is non-finite, if `normal` is shorter
    /// than [`MIN_NORMAL_NORM`], or if dimensions disagree.
    pub fn new(center: Vec<f64>, normal: Vec<f64>, width: f64) -> Result<Self> {
        check_dim(center.len(), normal.len())?;
        if center.is_empty() {
            return Err(DgError::invalid("center", "dimension must be ≥ 1"));
        }
        if !(width > 0.0) || !width.is_finite() {
            return Err(DgError::invalid(
                "width",
                format!("must be positive and finite, got {width}"),
            ));
        }
        let n = norm(&normal);
        if n < MIN_NORMAL_NORM {
            return Err(DgError::DegenerateNormal { norm: n });
        }
        let normal = normal.into_iter().map(|x| x / n).collect();
        Ok(Self {
            center,
            normal,
            width,
        })
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Slab center.
    pub fn center(&self) -> &[f64] {
        &self.center
    }

    /// Unit normal.
    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    /// Full width.
    pub fn width(&self) -> f64 {
        self.width
    }

    /// Signed distance of `x` from the center plane along the normal.
    pub fn signed_offset(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let mut acc = Kahan::new();
        for ((&xi, &ci), &ni) in x.iter().zip(&self.center).zip(&self.normal) {
            acc.add((xi - ci) * ni);
        }
        Ok(acc.value())
    }

    /// Whether `x` lies in the slab (boundary inclusive).
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        Ok(self.signed_offset(x)?.abs() <= self.width / 2.0)
    }

    /// Copy of this slab with a different width.
    pub fn with_width(&self, width: f64) -> Result<Slab> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(DgError::invalid(
                "width",
                format!("must be positive and finite, got {width}"),
            ));
        }
        Ok(Slab {
            center: self.center.clone(),
            normal: self.normal.clone(),
            width,
        })
    }
}

/// Closed half-space `v·x ≤ t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    v: Vec<f64>,
    t: f64,
}

impl HalfSpace {
    /// Build a half-space; errors if `v` is (numerically) zero.
    pub fn new(v: Vec<f64>, t: f64) -> Result<Self> {
        if v.is_empty() {
            return Err(DgError::invalid("v", "dimension must be ≥ 1"));
        }
        let n = norm(&v);
        if n < MIN_NORMAL_NORM {
            return Err(DgError::DegenerateNormal { norm: n });
        }
        Ok(Self { v, t })
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.v.len()
    }

    /// Constraint direction (not normalized; the pair (v, t) is kept as given).
    pub fn direction(&self) -> &[f64] {
        &self.v
    }

    /// Constraint threshold.
    pub fn threshold(&self) -> f64 {
        self.t
    }

    /// Whether `x` satisfies `v·x ≤ t` (boundary inclusive).
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        check_dim(self.dim(), x.len())?;
        let mut acc = Kahan::new();
        for (&vi, &xi) in self.v.iter().zip(x) {
            acc.add(vi * xi);
        }
        Ok(acc.value() <= self.t)
    }
}

/// A slab intersected with finitely many half-spaces.
///
/// The truncation list is ordered and immutable; [`TruncatedSlab::scale`]
/// changes only the slab width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedSlab {
    slab: Slab,
    truncations: Vec<HalfSpace>,
}

impl TruncatedSlab {
    /// Intersect `slab` with `truncations` (may be empty).
    pub fn new(slab: Slab, truncations: Vec<HalfSpace>) -> Result<Self> {
        for h in &truncations {
            check_dim(slab.dim(), h.dim())?;
        }
        Ok(Self { slab, truncations })
    }

    /// A truncated slab with no truncations.
    pub fn from_slab(slab: Slab) -> Self {
        Self {
            slab,
            truncations: Vec::new(),
        }
    }

    /// The underlying slab.
    pub fn slab(&self) -> &Slab {
        &self.slab
    }

    /// The truncation list.
    pub fn truncations(&self) -> &[HalfSpace] {
        &self.truncations
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.slab.dim()
    }

    /// Current slab width.
    pub fn width(&self) -> f64 {
        self.slab.width()
    }

    /// Whether `x` lies in the slab **and** satisfies every truncation.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        if !self.slab.contains(x)? {
            return Ok(false);
        }
        for h in &self.truncations {
            if !h.contains(x)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Multiply the slab width by `factor > 0`; truncations are unchanged.
    pub fn scale(&self, factor: f64) -> Result<TruncatedSlab> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(DgError::invalid(
                "factor",
                format!("must be positive and finite, got {factor}"),
            ));
        }
        Ok(TruncatedSlab {
            slab: self.slab.with_width(self.slab.width() * factor)?,
            truncations: self.truncations.clone(),
        })
    }

    /// Copy with the slab width replaced outright (truncations unchanged).
    pub fn with_width(&self, width: f64) -> Result<TruncatedSlab> {
        Ok(TruncatedSlab {
            slab: self.slab.with_width(width)?,
            truncations: self.truncations.clone(),
        })
    }
}

/// Total weight of the dataset points inside `ts`.
///
/// Sums `μ(s)` in point order with compensated summation; returns a value
/// in `[0, 1]` for a dataset with normalized weights.
pub fn mass(ds: &LabeledDataset, ts: &TruncatedSlab) -> Result<f64> {
    check_dim(ts.dim(), ds.dim())?;
    let mut acc = Kahan::new();
    for (point, &w) in ds.points().iter().zip(ds.weights()) {
        if ts.contains(point)? {
            acc.add(w);
        }
    }
    Ok(acc.value())
}

/// Number of dataset points inside `ts` (labels and weights ignored).
pub fn count(ds: &LabeledDataset, ts: &TruncatedSlab) -> Result<usize> {
    check_dim(ts.dim(), ds.dim())?;
    let mut n = 0usize;
    for point in ds.points() {
        if ts.contains(point)? {
            n += 1;
        }
    }
    Ok(n)
}
