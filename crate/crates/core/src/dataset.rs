//! Weighted labeled point clouds and the synthetic decision-boundary
//! generator.
//!
//! A [`LabeledDataset`] is the empirical measure the rest of the crate
//! works with: points in ℝⁿ, a class label per point, and per-point
//! weights that sum to 1 (within `1e-9`). The generator builds the toy
//! two-class problem used by the experiment pipeline: sample a random
//! polynomial decision boundary, place half the points a fixed shift above
//! it (class 1, "red") and half below (class 0, "blue"), then jitter the
//! vertical coordinate with Gaussian noise. The noise law is Gaussian by
//! definition here (see [`NOISE_LAW`]) and is recorded in CLI metadata.
//!
//! Generation is deterministic in the seed: a single ChaCha8 stream is
//! consumed in a fixed documented order (polynomial coefficients first,
//! then per sample an x-draw followed by a noise draw). Distinct datasets
//! meant to be generated in parallel should use distinct seeds.
//!
//! File format: UTF-8 CSV with header `x0,x1,...,x{n-1},label[,weight]`.
//! Floats are printed with 17 significant digits, so save → load is
//! bit-exact; a file whose weights do not sum to 1 is renormalized on
//! load with a warning.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{DgError, Result};
use crate::numeric::kahan_sum;

/// Distribution used for the vertical displacement noise.
pub const NOISE_LAW: &str = "gaussian";

/// Tolerance inside which a weight vector counts as normalized.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Grid resolution used to measure a polynomial's range height when
/// rescaling it to height 1.
const RESCALE_GRID: usize = 4096;

/// Weighted point cloud in ℝⁿ with class labels: the measure μ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    points: Vec<Vec<f64>>,
    labels: Vec<usize>,
    weights: Vec<f64>,
    k: usize,
}

impl LabeledDataset {
    /// Build a dataset, validating every invariant.
    ///
    /// `weights = None` means uniform `1/n`. Explicit weights must be
    /// non-negative, finite, and sum to 1 within [`WEIGHT_SUM_TOL`]; use
    /// [`LabeledDataset::with_renormalized_weights`] for raw weights of
    /// arbitrary positive total.
    pub fn new(
        points: Vec<Vec<f64>>,
        labels: Vec<usize>,
        weights: Option<Vec<f64>>,
        k: usize,
    ) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(DgError::invalid("points", "dataset must be nonempty"));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(DgError::invalid("points", "ambient dimension must be ≥ 1"));
        }
        for p in &points {
            if p.len() != dim {
                return Err(DgError::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(DgError::invalid("points", "coordinates must be finite"));
            }
        }
        if labels.len() != n {
            return Err(DgError::DimensionMismatch {
                expected: n,
                got: labels.len(),
            });
        }
        if k == 0 {
            return Err(DgError::invalid("k", "class count must be ≥ 1"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(DgError::invalid(
                "labels",
                format!("label {bad} out of range for {k} classes"),
            ));
        }
        let weights = match weights {
            None => vec![1.0 / n as f64; n],
            Some(w) => {
                if w.len() != n {
                    return Err(DgError::DimensionMismatch {
                        expected: n,
                        got: w.len(),
                    });
                }
                if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(DgError::invalid(
                        "weights",
                        "weights must be finite and non-negative",
                    ));
                }
                let sum = kahan_sum(w.iter().copied());
                if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                    return Err(DgError::invalid(
                        "weights",
                        format!("sum {sum} differs from 1 by more than {WEIGHT_SUM_TOL}"),
                    ));
                }
                w
            }
        };
        Ok(Self {
            points,
            labels,
            weights,
            k,
        })
    }

    /// Like [`LabeledDataset::new`] but accepts raw weights of any
    /// positive total and divides them by their sum when they are not
    /// already normalized. Returns the dataset and whether renormalization
    /// was applied.
    pub fn with_renormalized_weights(
        points: Vec<Vec<f64>>,
        labels: Vec<usize>,
        raw_weights: Vec<f64>,
        k: usize,
    ) -> Result<(Self, bool)> {
        if raw_weights.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(DgError::invalid(
                "weights",
                "weights must be finite and non-negative",
            ));
        }
        let sum = kahan_sum(raw_weights.iter().copied());
        if sum <= 0.0 {
            return Err(DgError::invalid("weights", "weights must have positive sum"));
        }
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            let scaled = raw_weights.iter().map(|w| w / sum).collect();
            Ok((Self::new(points, labels, Some(scaled), k)?, true))
        } else {
            Ok((Self::new(points, labels, Some(raw_weights), k)?, false))
        }
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false: construction rejects empty datasets.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Ambient dimension n.
    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Number of classes K.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Points, in storage order.
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Labels, aligned with `points`.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Weights, aligned with `points`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Coordinate-wise (min, max) over all points.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let dim = self.dim();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in &self.points {
            for (d, &v) in p.iter().enumerate() {
                lo[d] = lo[d].min(v);
                hi[d] = hi[d].max(v);
            }
        }
        (lo, hi)
    }
}

/// Parameters of the synthetic polynomial-boundary generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyBoundarySpec {
    /// Polynomial degree (0–12; higher degrees risk evaluation overflow).
    pub degree: usize,
    /// Number of samples (≥ 2).
    pub n_samples: usize,
    /// Interval the x-coordinates are drawn from, `(lo, hi)` with `lo < hi`.
    pub x_range: (f64, f64),
    /// Vertical distance of each class from the boundary (> 0).
    pub vertical_shift: f64,
    /// Standard deviation of the Gaussian y-noise (≥ 0).
    pub noise_std: f64,
    /// RNG seed; generation is a pure function of this spec.
    pub seed: u64,
}

/// Maximum polynomial degree accepted by the generator.
pub const MAX_DEGREE: usize = 12;

impl PolyBoundarySpec {
    fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(DgError::invalid("n_samples", "need at least 2 samples"));
        }
        if self.degree > MAX_DEGREE {
            return Err(DgError::invalid(
                "degree",
                format!("must be ≤ {MAX_DEGREE}, got {}", self.degree),
            ));
        }
        let (lo, hi) = self.x_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(DgError::invalid(
                "x_range",
                format!("need finite lo < hi, got ({lo}, {hi})"),
            ));
        }
        if !(self.vertical_shift > 0.0) || !self.vertical_shift.is_finite() {
            return Err(DgError::invalid("vertical_shift", "must be positive"));
        }
        if self.noise_std < 0.0 || !self.noise_std.is_finite() {
            return Err(DgError::invalid("noise_std", "must be ≥ 0 and finite"));
        }
        Ok(())
    }
}

/// Evaluate a polynomial with coefficients in ascending-power order.
fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

/// Draw the boundary polynomial for `spec`: coefficients i.i.d. uniform on
/// `[−1, 1]`, then rescaled so the polynomial's range over `x_range` has
/// height 1 (a degree-0 polynomial has height 0 and is left unscaled).
///
/// Exposed so plots and tests can recover the exact boundary a dataset
/// was generated from.
pub fn boundary_polynomial(spec: &PolyBoundarySpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut coeffs: Vec<f64> = (0..=spec.degree)
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    let (lo, hi) = spec.x_range;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for i in 0..=RESCALE_GRID {
        let x = lo + (hi - lo) * i as f64 / RESCALE_GRID as f64;
        let y = poly_eval(&coeffs, x);
        min = min.min(y);
        max = max.max(y);
    }
    let height = max - min;
    if height > 0.0 {
        for c in &mut coeffs {
            *c /= height;
        }
    }
    Ok(coeffs)
}

/// Generate the two-class polynomial-boundary dataset described in the
/// module docs: 2-D points, the first ⌈n/2⌉ samples shifted up (class 1),
/// the rest shifted down (class 0), Gaussian y-noise, uniform weights.
pub fn generate_poly_boundary(spec: &PolyBoundarySpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let coeffs = boundary_polynomial(spec)?;

    // Re-derive the same stream the coefficients came from, then skip the
    // coefficient draws so per-sample draws continue where they left off.
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _ in 0..=spec.degree {
        let _: f64 = rng.random_range(-1.0..=1.0);
    }

    let noise = Normal::new(0.0, spec.noise_std)
        .map_err(|e| DgError::invalid("noise_std", e.to_string()))?;
    let (lo, hi) = spec.x_range;
    let n = spec.n_samples;
    let n_red = n.div_ceil(2);

    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let x = rng.random_range(lo..=hi);
        let eps = noise.sample(&mut rng);
        let red = i < n_red;
        let shift = if red {
            spec.vertical_shift
        } else {
            -spec.vertical_shift
        };
        let y = poly_eval(&coeffs, x) + shift + eps;
        points.push(vec![x, y]);
        labels.push(usize::from(red));
    }
    LabeledDataset::new(points, labels, None, 2)
}

/// Split into disjoint train/test parts of sizes `n_train` and
/// `len − n_train` by a seeded uniform shuffle; weights are renormalized
/// to sum 1 within each part.
pub fn split(
    ds: &LabeledDataset,
    n_train: usize,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let n = ds.len();
    if n_train < 1 || n_train >= n {
        return Err(DgError::invalid(
            "n_train",
            format!("must satisfy 1 ≤ n_train < {n}, got {n_train}"),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);

    let build = |indices: &[usize]| -> Result<LabeledDataset> {
        let points = indices.iter().map(|&i| ds.points[i].clone()).collect();
        let labels = indices.iter().map(|&i| ds.labels[i]).collect();
        let raw: Vec<f64> = indices.iter().map(|&i| ds.weights[i]).collect();
        Ok(LabeledDataset::with_renormalized_weights(points, labels, raw, ds.k)?.0)
    };
    Ok((build(&order[..n_train])?, build(&order[n_train..])?))
}

/// Format a float with 17 significant digits (round-trip exact).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write the dataset as CSV (see module docs for the format). The weight
/// column is always written.
pub fn save(ds: &LabeledDataset, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    let mut header: Vec<String> = (0..ds.dim()).map(|d| format!("x{d}")).collect();
    header.push("label".to_string());
    header.push("weight".to_string());
    writeln!(w, "{}", header.join(","))?;
    for ((point, &label), &weight) in ds.points.iter().zip(&ds.labels).zip(&ds.weights) {
        let mut fields: Vec<String> = point.iter().map(|&v| fmt_f64(v)).collect();
        fields.push(label.to_string());
        fields.push(fmt_f64(weight));
        writeln!(w, "{}", fields.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a dataset written by [`save`] (or by hand in the same format).
///
/// The weight column is optional; absent weights default to uniform.
/// Weights that do not sum to 1 within [`WEIGHT_SUM_TOL`] are renormalized
/// with a warning. Parse failures report 1-based line numbers.
pub fn load(path: &Path) -> Result<LabeledDataset> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();

    let header = match lines.next() {
        Some(line) => line?,
        None => {
            return Err(DgError::Parse {
                line: 1,
                message: "empty file".to_string(),
            })
        }
    };
    let columns: Vec<&str> = header.trim_end().split(',').collect();
    let has_weight = columns.last() == Some(&"weight");
    let n_coords = columns.len() - 1 - usize::from(has_weight);
    if n_coords == 0 {
        return Err(DgError::Parse {
            line: 1,
            message: "need at least one coordinate column".to_string(),
        });
    }
    for (d, col) in columns[..n_coords].iter().enumerate() {
        let expected = format!("x{d}");
        if *col != expected {
            return Err(DgError::Parse {
                line: 1,
                message: format!("expected column `{expected}`, found `{col}`"),
            });
        }
    }
    if columns[n_coords] != "label" {
        return Err(DgError::Parse {
            line: 1,
            message: format!("expected column `label`, found `{}`", columns[n_coords]),
        });
    }

    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut weights = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != columns.len() {
            return Err(DgError::Parse {
                line: line_no,
                message: format!(
                    "expected {} fields, found {}",
                    columns.len(),
                    fields.len()
                ),
            });
        }
        let parse_f64 = |s: &str, what: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| DgError::Parse {
                line: line_no,
                message: format!("bad {what} value `{s}`"),
            })
        };
        let mut point = Vec::with_capacity(n_coords);
        for field in &fields[..n_coords] {
            point.push(parse_f64(field, "coordinate")?);
        }
        let label: usize = fields[n_coords]
            .trim()
            .parse()
            .map_err(|_| DgError::Parse {
                line: line_no,
                message: format!("bad label `{}`", fields[n_coords]),
            })?;
        let weight = if has_weight {
            parse_f64(fields[n_coords + 1], "weight")?
        } else {
            1.0
        };
        points.push(point);
        labels.push(label);
        weights.push(weight);
    }
    if points.is_empty() {
        return Err(DgError::Parse {
            line: 2,
            message: "no data rows".to_string(),
        });
    }
    let k = labels.iter().max().copied().unwrap_or(0) + 1;
    let n = points.len();
    let raw = if has_weight {
        weights
    } else {
        vec![1.0 / n as f64; n]
    };
    let (ds, renormalized) = LabeledDataset::with_renormalized_weights(points, labels, raw, k)?;
    if renormalized {
        log::warn!(
            "{}: weights did not sum to 1; renormalized on load",
            path.display()
        );
    }
    Ok(ds)
}
