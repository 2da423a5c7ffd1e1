//! Transport of doubling conditions through layer maps.
//!
//! Each layer of the networks built in this crate is a linear map followed by
//! a coordinatewise nonlinearity. All three building blocks carry a doubling
//! condition on the input data to one on the image data, with constants that
//! can be predicted in advance:
//!
//! * an invertible **linear** map rescales slab widths anisotropically: a slab
//!   with unit normal `u` maps to one whose widths are multiplied by
//!   `ρ = 1/‖M⁻ᵀu‖ ∈ [s_min, s_max]` (the extreme singular values of `M`).
//!   The predicted constants use the squared convention `d = s²` shared with
//!   the stability-constant inputs: start-scale range `[d_min·ℓ, d_max·ℓ]`,
//!   ceiling `d_min·β`. The exact per-slab scale `ρ·ℓ` sits inside the
//!   squared range whenever `s_min ≤ 1 ≤ s_max`; outside that regime the
//!   verifier clamps to the range edge and flags the slab;
//! * the coordinatewise **absolute value** folds the 2ⁿ closed orthants onto
//!   the positive one. Widths are unchanged. If no data sits exactly on a
//!   folded coordinate plane the growth factor σ survives; each plane that
//!   carries mass halves it once, because the plane's mass is shared between
//!   the two half-space conditions that are being averaged;
//! * a **piecewise-linear** map, applied to one coordinate and with
//!   neighboring critical values separated by more than `2κβ`, rescales
//!   widths per piece: the start scale lands in `[α_min·ℓ, α_max·ℓ]`
//!   (extreme absolute slopes), the ceiling becomes `α_min·β`, and σ halves
//!   by the same averaging argument. Slab-level verification of this map is
//!   implemented for one-dimensional data, where the pullback through each
//!   affine piece is itself an interval.
//!
//! [`verify_propagation`] checks the per-slab implication behind those claims
//! empirically: it samples slabs, tests the *premise* (the doubling condition
//! on every preimage component, truncated to its domain) and, whenever the
//! premise holds, tests the *conclusion* (the doubling condition on the image
//! slab at the predicted constants). A sound transport never produces a slab
//! whose premise holds but whose conclusion fails.

use crate::constants::propagated_uniform_constants;
use crate::dataset::{fmt_f64, LabeledDataset};
use crate::doubling::{
    check_uniform_dc_slab, DcFailure, DcVerdict, DoublingParams, SlabSampler,
};
use crate::error::{DgError, Result};
use crate::geometry::{HalfSpace, Slab, TruncatedSlab};
use crate::linalg::{singular_values, Matrix};
use crate::parallel;
use crate::piecewise::Piecewise1D;
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

/// Largest ambient dimension accepted for the absolute-value transport.
///
/// The premise enumerates all 2ⁿ closed orthants, so the cost doubles per
/// dimension; beyond this the check is no longer a desk-scale operation.
pub const MAX_FOLD_DIM: usize = 12;

/// Relative slack used when asserting that a per-slab start scale lies in
/// the predicted `[ell_lo, ell_hi]` range, absorbing rounding in `ρ·ℓ`.
const SCALE_RANGE_SLACK: f64 = 1e-9;

/// Ratio below which a singular value counts as zero (rank detection).
const RANK_CUTOFF: f64 = 1e-10;

/// A layer map whose effect on the doubling condition is known.
#[derive(Debug, Clone)]
pub enum MapSpec {
    /// Invertible linear map `x ↦ Mx` on the ambient space.
    Linear(Matrix),
    /// Coordinatewise absolute value `x ↦ (|x₁|, …, |xₙ|)`.
    Abs,
    /// Scalar piecewise-linear map applied to coordinate `coord`:
    /// `x ↦ (x₁, …, g(x_coord), …, xₙ)`.
    Piecewise {
        /// The scalar map.
        g: Piecewise1D,
        /// Zero-based coordinate it acts on.
        coord: usize,
    },
}

/// Doubling-condition constants predicted for the image of a map.
#[derive(Debug, Clone, Serialize)]
pub struct PredictedConstants {
    /// Doubling constant, unchanged by every transport.
    pub kappa: f64,
    /// Growth factor after the map (possibly halved, see [`MapSpec`]).
    pub sigma: f64,
    /// Mass cap, unchanged by every transport.
    pub delta: f64,
    /// Lower end of the slab-dependent start-scale range.
    pub ell_lo: f64,
    /// Upper end of the slab-dependent start-scale range.
    pub ell_hi: f64,
    /// Width ceiling guaranteed on the image.
    pub beta: f64,
    /// Number of folded coordinate planes that carry data mass
    /// (absolute value only; zero for the other maps).
    pub folded_planes_with_mass: usize,
}

impl MapSpec {
    /// Check that the map is applicable to `dim`-dimensional data.
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            MapSpec::Linear(m) => {
                if m.rows() != dim || m.cols() != dim {
                    return Err(DgError::DimensionMismatch {
                        expected: dim,
                        got: m.rows().max(m.cols()),
                    });
                }
                let (s_lo, _) = singular_range(m)?;
                if s_lo == 0.0 {
                    return Err(DgError::invalid(
                        "map",
                        "linear map must be full rank to transport a doubling condition",
                    ));
                }
                Ok(())
            }
            MapSpec::Abs => {
                if dim > MAX_FOLD_DIM {
                    return Err(DgError::invalid(
                        "map",
                        format!(
                            "absolute-value transport enumerates 2^dim orthants; \
                             dim {dim} exceeds the supported maximum {MAX_FOLD_DIM}"
                        ),
                    ));
                }
                Ok(())
            }
            MapSpec::Piecewise { coord, .. } => {
                if *coord >= dim {
                    return Err(DgError::invalid(
                        "coord",
                        format!("coordinate {coord} out of range for dimension {dim}"),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Image of a single point.
    pub fn apply_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            MapSpec::Linear(m) => m.matvec(x),
            MapSpec::Abs => Ok(x.iter().map(|v| v.abs()).collect()),
            MapSpec::Piecewise { g, coord } => {
                if *coord >= x.len() {
                    return Err(DgError::DimensionMismatch {
                        expected: *coord + 1,
                        got: x.len(),
                    });
                }
                let mut y = x.to_vec();
                y[*coord] = g.eval(x[*coord]);
                Ok(y)
            }
        }
    }

    /// Pushforward of a dataset: points are mapped, labels and weights kept.
    pub fn apply(&self, ds: &LabeledDataset) -> Result<LabeledDataset> {
        self.validate(ds.dim())?;
        let points = ds
            .points()
            .iter()
            .map(|p| self.apply_point(p))
            .collect::<Result<Vec<_>>>()?;
        LabeledDataset::new(
            points,
            ds.labels().to_vec(),
            Some(ds.weights().to_vec()),
            ds.k(),
        )
    }

    /// Constants predicted for the image of `ds` when the input satisfies the
    /// doubling condition at `p`.
    ///
    /// For [`MapSpec::Piecewise`] this errors unless neighboring critical
    /// values are separated by more than `2κβ`; narrower gaps would let one
    /// image slab straddle two folds at once, which the transport cannot
    /// absorb.
    pub fn predicted_constants(
        &self,
        ds: &LabeledDataset,
        p: &DoublingParams,
    ) -> Result<PredictedConstants> {
        p.validate()?;
        self.validate(ds.dim())?;
        let base = PredictedConstants {
            kappa: p.kappa,
            sigma: p.sigma,
            delta: p.delta,
            ell_lo: p.ell,
            ell_hi: p.ell,
            beta: p.beta,
            folded_planes_with_mass: 0,
        };
        match self {
            MapSpec::Linear(m) => {
                let (s_lo, s_hi) = singular_range(m)?;
                let prop = propagated_uniform_constants(
                    p.ell,
                    p.beta,
                    p.sigma,
                    p.kappa,
                    s_lo * s_lo,
                    s_hi * s_hi,
                )?;
                Ok(PredictedConstants {
                    ell_lo: prop.ell_lo,
                    ell_hi: prop.ell_hi,
                    beta: prop.beta_prime,
                    ..base
                })
            }
            MapSpec::Abs => {
                let folded = folded_planes_with_mass(ds);
                Ok(PredictedConstants {
                    sigma: p.sigma / f64::powi(2.0, folded as i32),
                    folded_planes_with_mass: folded,
                    ..base
                })
            }
            MapSpec::Piecewise { g, .. } => {
                let v_g = g.v_g();
                let gate = 2.0 * p.kappa * p.beta;
                if !(v_g > gate) {
                    return Err(DgError::invalid(
                        "v_g",
                        format!(
                            "critical-value separation {v_g:.6e} must exceed 2κβ = {gate:.6e}"
                        ),
                    ));
                }
                Ok(PredictedConstants {
                    sigma: p.sigma / 2.0,
                    ell_lo: g.alpha_min() * p.ell,
                    ell_hi: g.alpha_max() * p.ell,
                    beta: g.alpha_min() * p.beta,
                    ..base
                })
            }
        }
    }
}

/// Extreme nonzero singular values of `m`, with `(0, 0)` reserved for the
/// all-zero matrix. `s_lo = 0` signals rank deficiency.
fn singular_range(m: &Matrix) -> Result<(f64, f64)> {
    let sv = singular_values(m)?;
    let s_hi = sv.iter().cloned().fold(0.0f64, f64::max);
    if s_hi == 0.0 {
        return Ok((0.0, 0.0));
    }
    let cutoff = RANK_CUTOFF * s_hi;
    let s_lo = sv
        .iter()
        .cloned()
        .filter(|&s| s > cutoff)
        .fold(f64::INFINITY, f64::min);
    if sv.iter().any(|&s| s <= cutoff) {
        return Ok((0.0, s_hi));
    }
    Ok((s_lo, s_hi))
}

/// Count coordinate planes `{xᵢ = 0}` that carry data mass.
fn folded_planes_with_mass(ds: &LabeledDataset) -> usize {
    (0..ds.dim())
        .filter(|&i| ds.points().iter().any(|p| p[i] == 0.0))
        .count()
}

/// Outcome of the premise/conclusion check for one sampled slab.
#[derive(Debug, Clone)]
pub struct SlabCheckRecord {
    /// Index of the sampled slab (also its RNG stream).
    pub slab_id: usize,
    /// Start scale the conclusion was checked at, after clamping into the
    /// predicted range.
    pub ell_prime: f64,
    /// Whether every preimage component satisfied its doubling condition.
    pub premise_holds: bool,
    /// Whether the image slab satisfied the predicted doubling condition.
    /// Only meaningful when the premise holds.
    pub conclusion_holds: bool,
    /// Whether the exact image start scale already lay in the predicted
    /// range, i.e. no clamping was needed.
    pub scale_in_range: bool,
    /// First failing scale of the conclusion check, if any.
    pub conclusion_failure: Option<DcFailure>,
}

/// Aggregated result of [`verify_propagation`].
#[derive(Debug, Clone, Serialize)]
pub struct PropagationVerdict {
    /// Constants the conclusion was checked against.
    pub predicted: PredictedConstants,
    /// Number of slabs sampled.
    pub n_slabs: usize,
    /// Slabs whose premise held (the implication is non-vacuous there).
    pub n_premise: usize,
    /// Premise slabs whose conclusion also held.
    pub n_conclusion: usize,
    /// Premise slabs whose conclusion failed — soundness violations.
    pub n_violations: usize,
    /// `n_conclusion / n_premise`, or 1 when no premise held.
    pub pass_rate: f64,
    /// Per-slab details, in slab-id order.
    #[serde(skip)]
    pub records: Vec<SlabCheckRecord>,
}

impl PropagationVerdict {
    /// Write one CSV row per violating slab:
    /// `slab_id,ell_prime,scale_index,width,mass_before,mass_after`.
    pub fn write_violations_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "slab_id,ell_prime,scale_index,width,mass_before,mass_after"
        )?;
        for r in &self.records {
            if !r.premise_holds || r.conclusion_holds {
                continue;
            }
            if let Some(f) = &r.conclusion_failure {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.slab_id,
                    fmt_f64(r.ell_prime),
                    f.scale_index,
                    fmt_f64(f.width),
                    fmt_f64(f.mass_before),
                    fmt_f64(f.mass_after)
                )?;
            }
        }
        Ok(())
    }
}

/// Empirically verify the per-slab transport implication for `map` on `ds`.
///
/// `n_slabs` slabs are sampled deterministically from `seed` (one RNG stream
/// per slab id, so the result does not depend on the thread count). For each
/// slab the premise — the doubling condition at `dc` on every preimage
/// component, truncated to its domain — is checked on `ds`; when it holds,
/// the conclusion — the doubling condition at the predicted constants — is
/// checked on the image dataset. The verdict's `pass_rate` is the fraction of
/// premise slabs whose conclusion held; a sound transport yields 1.
pub fn verify_propagation(
    map: &MapSpec,
    ds: &LabeledDataset,
    dc: &DoublingParams,
    n_slabs: usize,
    seed: u64,
) -> Result<PropagationVerdict> {
    dc.validate()?;
    map.validate(ds.dim())?;
    if n_slabs == 0 {
        return Err(DgError::invalid("n_slabs", "must be ≥ 1"));
    }
    if matches!(map, MapSpec::Piecewise { .. }) && ds.dim() != 1 {
        return Err(DgError::invalid(
            "map",
            "slab-level piecewise verification is implemented for \
             one-dimensional data",
        ));
    }
    let predicted = map.predicted_constants(ds, dc)?;
    let image = map.apply(ds)?;
    let sampler = SlabSampler::new(n_slabs, seed);

    let pool = parallel::build_pool()?;
    let records = pool.install(|| {
        (0..n_slabs)
            .into_par_iter()
            .map(|slab_id| check_one_slab(map, ds, &image, dc, &predicted, &sampler, slab_id))
            .collect::<Result<Vec<_>>>()
    })?;

    let n_premise = records.iter().filter(|r| r.premise_holds).count();
    let n_conclusion = records
        .iter()
        .filter(|r| r.premise_holds && r.conclusion_holds)
        .count();
    let n_violations = n_premise - n_conclusion;
    let pass_rate = if n_premise == 0 {
        1.0
    } else {
        n_conclusion as f64 / n_premise as f64
    };
    Ok(PropagationVerdict {
        predicted,
        n_slabs,
        n_premise,
        n_conclusion,
        n_violations,
        pass_rate,
        records,
    })
}

fn check_one_slab(
    map: &MapSpec,
    ds: &LabeledDataset,
    image: &LabeledDataset,
    dc: &DoublingParams,
    predicted: &PredictedConstants,
    sampler: &SlabSampler,
    slab_id: usize,
) -> Result<SlabCheckRecord> {
    match map {
        MapSpec::Linear(m) => check_linear_slab(m, ds, image, dc, predicted, sampler, slab_id),
        MapSpec::Abs => check_abs_slab(ds, image, dc, predicted, sampler, slab_id),
        MapSpec::Piecewise { g, .. } => {
            check_piecewise_slab(g, ds, image, dc, predicted, sampler, slab_id)
        }
    }
}

/// Linear transport: sample a slab on the input data, check the premise
/// there, and check the conclusion on its exact image slab.
fn check_linear_slab(
    m: &Matrix,
    ds: &LabeledDataset,
    image: &LabeledDataset,
    dc: &DoublingParams,
    predicted: &PredictedConstants,
    sampler: &SlabSampler,
    slab_id: usize,
) -> Result<SlabCheckRecord> {
    let slab = sampler.draw_slab(ds, slab_id, dc.ell)?;
    let premise = check_uniform_dc_slab(ds, &TruncatedSlab::from_slab(slab.clone()), dc)?;

    // Image of {x : |u·(x−c)| ≤ w/2} under x ↦ Mx is {y : |û·(y−Mc)| ≤ ρw/2}
    // with û ∝ M⁻ᵀu and ρ = 1/‖M⁻ᵀu‖; widths scale by ρ exactly. The exact
    // image start scale ρℓ is used when it lies in the predicted (squared
    // convention) range, otherwise it is clamped to the nearer edge.
    let pulled = m.transpose().solve(slab.normal())?;
    let nrm = l2_norm(&pulled);
    if nrm < 1e-12 {
        return Err(DgError::DegenerateNormal { norm: nrm });
    }
    let rho = 1.0 / nrm;
    let exact_scale = rho * dc.ell;
    let scale_in_range = scale_in_predicted_range(exact_scale, predicted);
    let ell_prime = exact_scale.clamp(predicted.ell_lo, predicted.ell_hi);
    let center = m.matvec(slab.center())?;
    let image_slab = Slab::new(center, pulled, ell_prime)?;
    let conc_params = DoublingParams {
        ell: ell_prime,
        beta: predicted.beta,
        ..*dc
    };
    let conclusion = check_uniform_dc_slab(image, &TruncatedSlab::from_slab(image_slab), &conc_params)?;
    Ok(record(
        slab_id,
        ell_prime,
        premise.satisfied,
        conclusion,
        scale_in_range,
    ))
}

/// Absolute-value transport: sample a slab on the folded data; the premise
/// ranges over all 2ⁿ sign patterns, each contributing the reflected slab
/// truncated to its closed orthant.
fn check_abs_slab(
    ds: &LabeledDataset,
    image: &LabeledDataset,
    dc: &DoublingParams,
    predicted: &PredictedConstants,
    sampler: &SlabSampler,
    slab_id: usize,
) -> Result<SlabCheckRecord> {
    let dim = ds.dim();
    let slab = sampler.draw_slab(image, slab_id, dc.ell)?;
    let mut premise_holds = true;
    for pattern in 0..(1usize << dim) {
        let signs: Vec<f64> = (0..dim)
            .map(|i| if pattern >> i & 1 == 1 { -1.0 } else { 1.0 })
            .collect();
        let center: Vec<f64> = slab
            .center()
            .iter()
            .zip(&signs)
            .map(|(&c, &s)| s * c)
            .collect();
        let normal: Vec<f64> = slab
            .normal()
            .iter()
            .zip(&signs)
            .map(|(&u, &s)| s * u)
            .collect();
        // Closed orthant {sᵢxᵢ ≥ 0 ∀i}, written as half-spaces −sᵢxᵢ ≤ 0.
        let truncations = (0..dim)
            .map(|i| {
                let mut dir = vec![0.0; dim];
                dir[i] = -signs[i];
                HalfSpace::new(dir, 0.0)
            })
            .collect::<Result<Vec<_>>>()?;
        let reflected = TruncatedSlab::new(Slab::new(center, normal, dc.ell)?, truncations)?;
        if !check_uniform_dc_slab(ds, &reflected, dc)?.satisfied {
            premise_holds = false;
            break;
        }
    }

    let conc_params = DoublingParams {
        sigma: predicted.sigma,
        ..*dc
    };
    let conclusion = check_uniform_dc_slab(image, &TruncatedSlab::from_slab(slab), &conc_params)?;
    Ok(record(slab_id, dc.ell, premise_holds, conclusion, true))
}

/// Piecewise transport: the slab is centered on the image of a data point;
/// `ℓ′ = |slope at that point|·ℓ`. The premise ranges over the pullback of
/// the image slab through every affine piece, truncated to the piece domain,
/// with widths divided by the piece's absolute slope.
fn check_piecewise_slab(
    g: &Piecewise1D,
    ds: &LabeledDataset,
    image: &LabeledDataset,
    dc: &DoublingParams,
    predicted: &PredictedConstants,
    sampler: &SlabSampler,
    slab_id: usize,
) -> Result<SlabCheckRecord> {
    let seed_slab = sampler.draw_slab(ds, slab_id, dc.ell)?;
    let x0 = seed_slab.center()[0];
    let a0 = g.derivative(x0).abs();
    let ell_prime = a0 * dc.ell;
    let center = g.eval(x0);

    let mut premise_holds = true;
    for piece in g.pieces() {
        let a = piece.slope.abs();
        let z = (center - piece.intercept) / piece.slope;
        let mut truncations = Vec::new();
        if piece.lo.is_finite() {
            // x ≥ lo ⟺ −x ≤ −lo.
            truncations.push(HalfSpace::new(vec![-1.0], -piece.lo)?);
        }
        if piece.hi.is_finite() {
            truncations.push(HalfSpace::new(vec![1.0], piece.hi)?);
        }
        let comp_params = DoublingParams {
            ell: ell_prime / a,
            beta: predicted.beta / a,
            ..*dc
        };
        let component = TruncatedSlab::new(
            Slab::new(vec![z], vec![1.0], comp_params.ell)?,
            truncations,
        )?;
        if !check_uniform_dc_slab(ds, &component, &comp_params)?.satisfied {
            premise_holds = false;
            break;
        }
    }

    let conc_params = DoublingParams {
        sigma: predicted.sigma,
        ell: ell_prime,
        beta: predicted.beta,
        ..*dc
    };
    let image_slab = Slab::new(vec![center], vec![1.0], ell_prime)?;
    let conclusion = check_uniform_dc_slab(image, &TruncatedSlab::from_slab(image_slab), &conc_params)?;
    let scale_in_range = scale_in_predicted_range(ell_prime, predicted);
    Ok(record(
        slab_id,
        ell_prime,
        premise_holds,
        conclusion,
        scale_in_range,
    ))
}

fn scale_in_predicted_range(ell_prime: f64, predicted: &PredictedConstants) -> bool {
    ell_prime >= predicted.ell_lo * (1.0 - SCALE_RANGE_SLACK)
        && ell_prime <= predicted.ell_hi * (1.0 + SCALE_RANGE_SLACK)
}

fn record(
    slab_id: usize,
    ell_prime: f64,
    premise_holds: bool,
    conclusion: DcVerdict,
    scale_in_range: bool,
) -> SlabCheckRecord {
    SlabCheckRecord {
        slab_id,
        ell_prime,
        premise_holds,
        conclusion_holds: conclusion.satisfied,
        scale_in_range,
        conclusion_failure: conclusion.first_failure,
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
