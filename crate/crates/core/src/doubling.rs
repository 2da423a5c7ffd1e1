//! Doubling-condition checkers and the simplified scan.
//!
//! Four related conditions on how mass grows when a region is widened by a
//! factor κ are implemented here:
//!
//! 1. **Uniform condition on a truncated slab** ([`check_uniform_dc_slab`]):
//!    for every integer `i ≥ 0` with `ℓκ^i < β` (strict), require
//!    `μ̄(S_{ℓκ^{i+1}}) ≥ min{δ, (1+σ)·μ̄(S_{ℓκ^i})}`, where `S_w` is the
//!    slab at width `w` with its truncations held fixed.
//! 2. **Non-uniform condition on a truncated slab**
//!    ([`check_nonuniform_dc_slab`]): for widths `ε ≤ β_S`, require
//!    `μ̄(S_{κε}) ≥ min{δ, max{m₀, (1+σ)·μ̄(S_ε)} − m₀}`. The "any ε"
//!    quantifier is discretized to the geometric grid `ε = β_S·κ^{−j}`
//!    down to the smallest positive inter-point projected gap.
//! 3. **Uniform / non-uniform conditions on a 1-D confidence
//!    distribution** ([`check_uniform_dc_deltax`],
//!    [`check_nonuniform_dc_deltax`]): the same inequalities for closed
//!    intervals `I = [−w/2, w/2]` centered at 0, with the uniform variant
//!    running over `w = ℓκ^i ≤ β` (non-strict, matching its definition).
//! 4. **The simplified scan** ([`sudc_scan`]): per sampled slab, grow the
//!    width by κ while `count(S_{κw}) ≥ (1+σ)·count(S_w)` over raw point
//!    counts (no δ cap — deliberately the "procedure" variant rather than
//!    the checker's inequality; both are exposed on purpose). The largest
//!    passing width is recorded; its mean over slabs is β̄.
//!
//! Width conventions are shared with [`crate::geometry`]: full widths,
//! closed boundaries. All comparisons against thresholds are non-strict
//! (`≥` passes ties). Masses are evaluated in point order with compensated
//! summation, so every checker here agrees bit-for-bit with a from-scratch
//! recount.
//!
//! Determinism: the scan derives one ChaCha8 stream per slab index from
//! the sampler seed, and results are merged by index, so reports are
//! identical for any worker-pool size.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{DgError, Result};
use crate::geometry::{Slab, TruncatedSlab};
use crate::numeric::{kahan_sum, Kahan};
use crate::parallel;

/// Parameter bundle shared by every doubling-condition variant.
///
/// `m0` participates only in the non-uniform variants; `delta` is ignored
/// by the scan (which implements the raw-count procedure).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublingParams {
    /// Doubling constant κ > 1.
    pub kappa: f64,
    /// Growth factor σ > 0: widening must multiply mass by at least 1+σ.
    pub sigma: f64,
    /// Mass cap δ ∈ (0, 1]: above it the condition is automatically met.
    pub delta: f64,
    /// Smallest width ℓ > 0 at which the uniform condition starts.
    pub ell: f64,
    /// Largest width β > 0 up to which conditions are checked.
    pub beta: f64,
    /// Residual mass m₀ ≥ 0 (non-uniform variants only).
    pub m0: f64,
}

impl DoublingParams {
    /// Validate every field range.
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 1.0) || !self.kappa.is_finite() {
            return Err(DgError::invalid("kappa", "must be finite and > 1"));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(DgError::invalid("sigma", "must be finite and > 0"));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(DgError::invalid("delta", "must lie in (0, 1]"));
        }
        if !(self.ell > 0.0) || !self.ell.is_finite() {
            return Err(DgError::invalid("ell", "must be finite and > 0"));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(DgError::invalid("beta", "must be finite and > 0"));
        }
        if self.m0 < 0.0 || !self.m0.is_finite() {
            return Err(DgError::invalid("m0", "must be finite and ≥ 0"));
        }
        Ok(())
    }
}

/// How slab centers are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CenterPolicy {
    /// Center on a uniformly chosen data point (default; guarantees the
    /// starting slab is nonempty).
    OnDataPoint,
    /// Center uniformly inside the dataset's bounding box.
    UniformInBoundingBox,
}

/// How slab normals are drawn. Only the isotropic law is defined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormalPolicy {
    /// Uniform on the unit sphere (independent standard normals,
    /// normalized).
    UniformOnSphere,
}

/// Slab sampling plan: how many slabs, where their centers come from, and
/// the seed the per-slab RNG streams are derived from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlabSampler {
    /// Number of slabs to draw (≥ 1).
    pub n_slabs: usize,
    /// Center law.
    pub center_policy: CenterPolicy,
    /// Normal law.
    pub normal_policy: NormalPolicy,
    /// Master seed; slab `i` uses ChaCha8 stream `i` of this seed.
    pub seed: u64,
}

impl SlabSampler {
    /// Sampler with the default policies (centers on data points).
    pub fn new(n_slabs: usize, seed: u64) -> Self {
        Self {
            n_slabs,
            center_policy: CenterPolicy::OnDataPoint,
            normal_policy: NormalPolicy::UniformOnSphere,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_slabs == 0 {
            return Err(DgError::invalid("n_slabs", "must be ≥ 1"));
        }
        Ok(())
    }

    /// Draw slab number `slab_id` at width `width` on `ds`.
    ///
    /// Deterministic in `(seed, slab_id)`: the center is drawn first, then
    /// the normal, from the slab's own stream.
    pub fn draw_slab(&self, ds: &LabeledDataset, slab_id: usize, width: f64) -> Result<Slab> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(slab_id as u64);
        let dim = ds.dim();
        let center = match self.center_policy {
            CenterPolicy::OnDataPoint => {
                let idx = rng.random_range(0..ds.len());
                ds.points()[idx].clone()
            }
            CenterPolicy::UniformInBoundingBox => {
                let (lo, hi) = ds.bounding_box();
                (0..dim).map(|d| rng.random_range(lo[d]..=hi[d])).collect()
            }
        };
        let normal = loop {
            let v: Vec<f64> = (0..dim)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-9 {
                break v;
            }
        };
        Slab::new(center, normal, width)
    }
}

/// Location of the first violated inequality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcFailure {
    /// Which sampled slab failed (0 for single-slab checks).
    pub slab_id: usize,
    /// Scale index: `i` of the failing width for uniform variants, grid
    /// index `j` for the non-uniform geometric grid.
    pub scale_index: usize,
    /// Width at which masses were compared (the smaller of the pair).
    pub width: f64,
    /// Mass before widening by κ.
    pub mass_before: f64,
    /// Mass after widening by κ.
    pub mass_after: f64,
}

/// Outcome of a doubling-condition check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcVerdict {
    /// True iff every checked inequality held.
    pub satisfied: bool,
    /// First failing scale, present iff `satisfied` is false.
    pub first_failure: Option<DcFailure>,
}

impl DcVerdict {
    fn pass() -> Self {
        Self {
            satisfied: true,
            first_failure: None,
        }
    }

    fn fail(failure: DcFailure) -> Self {
        Self {
            satisfied: false,
            first_failure: Some(failure),
        }
    }
}

/// Precomputed slab membership data: per-point |signed offset| plus the
/// (width-independent) truncation verdict, in point order.
///
/// `mass_at` reproduces [`crate::geometry::mass`] bit-for-bit because it
/// performs the same additions in the same order.
struct MassProfile {
    abs_offset: Vec<f64>,
    in_truncations: Vec<bool>,
    weights: Vec<f64>,
}

impl MassProfile {
    fn build(ds: &LabeledDataset, ts: &TruncatedSlab) -> Result<Self> {
        let mut abs_offset = Vec::with_capacity(ds.len());
        let mut in_truncations = Vec::with_capacity(ds.len());
        for point in ds.points() {
            abs_offset.push(ts.slab().signed_offset(point)?.abs());
            let mut ok = true;
            for h in ts.truncations() {
                if !h.contains(point)? {
                    ok = false;
                    break;
                }
            }
            in_truncations.push(ok);
        }
        Ok(Self {
            abs_offset,
            in_truncations,
            weights: ds.weights().to_vec(),
        })
    }

    fn mass_at(&self, width: f64) -> f64 {
        let half = width / 2.0;
        let mut acc = Kahan::new();
        for ((&t, &ok), &w) in self
            .abs_offset
            .iter()
            .zip(&self.in_truncations)
            .zip(&self.weights)
        {
            if ok && t <= half {
                acc.add(w);
            }
        }
        acc.value()
    }

    fn count_at(&self, width: f64) -> usize {
        let half = width / 2.0;
        self.abs_offset
            .iter()
            .zip(&self.in_truncations)
            .filter(|(&t, &ok)| ok && t <= half)
            .count()
    }
}

/// Check the uniform doubling condition on a truncated slab.
///
/// Runs over `i = 0, 1, …` while `ℓκ^i < β` (strict); widths are computed
/// as `ℓ·κ^i` directly (not by iterated multiplication) so scale `i` means
/// the same width everywhere in the crate.
pub fn check_uniform_dc_slab(
    ds: &LabeledDataset,
    ts: &TruncatedSlab,
    p: &DoublingParams,
) -> Result<DcVerdict> {
    p.validate()?;
    if p.ell > p.beta {
        return Err(DgError::invalid("ell", "must be ≤ beta for the uniform check"));
    }
    let profile = MassProfile::build(ds, ts)?;
    let mut i = 0usize;
    loop {
        let width = p.ell * p.kappa.powi(i as i32);
        if !(width < p.beta) {
            return Ok(DcVerdict::pass());
        }
        let mass_before = profile.mass_at(width);
        let mass_after = profile.mass_at(width * p.kappa);
        let required = p.delta.min((1.0 + p.sigma) * mass_before);
        if mass_after < required {
            return Ok(DcVerdict::fail(DcFailure {
                slab_id: 0,
                scale_index: i,
                width,
                mass_before,
                mass_after,
            }));
        }
        i += 1;
    }
}

/// Check the non-uniform (residual-mass) doubling condition on a
/// truncated slab over the geometric width grid `ε = β_S·κ^{−j}`.
///
/// The grid descends until ε falls below the smallest positive gap between
/// adjacent projected data points (below that, no inequality can change);
/// `j = 0` is always checked.
pub fn check_nonuniform_dc_slab(
    ds: &LabeledDataset,
    ts: &TruncatedSlab,
    p: &DoublingParams,
    beta_s: f64,
) -> Result<DcVerdict> {
    p.validate()?;
    if !(beta_s > 0.0) || !beta_s.is_finite() {
        return Err(DgError::invalid("beta_s", "must be finite and > 0"));
    }
    let profile = MassProfile::build(ds, ts)?;

    let mut sorted: Vec<f64> = Vec::with_capacity(ds.len());
    for point in ds.points() {
        sorted.push(ts.slab().signed_offset(point)?);
    }
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let min_gap = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&g| g > 0.0)
        .fold(f64::INFINITY, f64::min);

    let mut j = 0usize;
    loop {
        let eps = beta_s * p.kappa.powi(-(j as i32));
        let mass_before = profile.mass_at(eps);
        let mass_after = profile.mass_at(p.kappa * eps);
        let required = p
            .delta
            .min(p.m0.max((1.0 + p.sigma) * mass_before) - p.m0);
        if mass_after < required {
            return Ok(DcVerdict::fail(DcFailure {
                slab_id: 0,
                scale_index: j,
                width: eps,
                mass_before,
                mass_after,
            }));
        }
        j += 1;
        let next = beta_s * p.kappa.powi(-(j as i32));
        if !(next >= min_gap) || next == 0.0 {
            return Ok(DcVerdict::pass());
        }
    }
}

fn validate_deltax_weights(values: &[(f64, f64)]) -> Result<()> {
    if values.is_empty() {
        return Err(DgError::invalid("values", "need at least one sample"));
    }
    if values.iter().any(|(v, w)| !v.is_finite() || !w.is_finite() || *w < 0.0) {
        return Err(DgError::invalid(
            "values",
            "entries must be finite with non-negative weights",
        ));
    }
    let total = kahan_sum(values.iter().map(|(_, w)| *w));
    if (total - 1.0).abs() > 1e-9 {
        return Err(DgError::invalid(
            "values",
            format!("weights sum to {total}, expected 1 within 1e-9"),
        ));
    }
    Ok(())
}

/// Weight of `{v : |v| ≤ width/2}` in input order (compensated).
fn interval_mass(values: &[(f64, f64)], width: f64) -> f64 {
    let half = width / 2.0;
    let mut acc = Kahan::new();
    for &(v, w) in values {
        if v.abs() <= half {
            acc.add(w);
        }
    }
    acc.value()
}

/// Check the uniform doubling condition for a weighted 1-D confidence
/// distribution on closed intervals `I = [−w/2, w/2]`, `w = ℓκ^i ≤ β`
/// (non-strict upper end, matching the 1-D definition).
pub fn check_uniform_dc_deltax(values: &[(f64, f64)], p: &DoublingParams) -> Result<DcVerdict> {
    p.validate()?;
    validate_deltax_weights(values)?;
    let mut i = 0usize;
    loop {
        let width = p.ell * p.kappa.powi(i as i32);
        if !(width <= p.beta) {
            return Ok(DcVerdict::pass());
        }
        let mass_before = interval_mass(values, width);
        let mass_after = interval_mass(values, p.kappa * width);
        let required = p.delta.min((1.0 + p.sigma) * mass_before);
        if mass_after < required {
            return Ok(DcVerdict::fail(DcFailure {
                slab_id: 0,
                scale_index: i,
                width,
                mass_before,
                mass_after,
            }));
        }
        i += 1;
    }
}

/// Check the non-uniform (residual-mass) doubling condition for a 1-D
/// confidence distribution over the geometric grid `w = β·κ^{−j}`,
/// descending to the smallest positive gap between adjacent |value|s.
pub fn check_nonuniform_dc_deltax(values: &[(f64, f64)], p: &DoublingParams) -> Result<DcVerdict> {
    p.validate()?;
    validate_deltax_weights(values)?;

    let mut sorted: Vec<f64> = values.iter().map(|(v, _)| v.abs()).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let min_gap = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&g| g > 0.0)
        .fold(f64::INFINITY, f64::min);

    let mut j = 0usize;
    loop {
        let width = p.beta * p.kappa.powi(-(j as i32));
        let mass_before = interval_mass(values, width);
        let mass_after = interval_mass(values, p.kappa * width);
        let required = p
            .delta
            .min(p.m0.max((1.0 + p.sigma) * mass_before) - p.m0);
        if mass_after < required {
            return Ok(DcVerdict::fail(DcFailure {
                slab_id: 0,
                scale_index: j,
                width,
                mass_before,
                mass_after,
            }));
        }
        j += 1;
        let next = p.beta * p.kappa.powi(-(j as i32));
        if !(next >= min_gap) || next == 0.0 {
            return Ok(DcVerdict::pass());
        }
    }
}

/// What the scan counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SudcMode {
    /// Raw point counts (the procedure's definition; default).
    RawCount,
    /// μ-masses instead of counts.
    MassWeighted,
}

/// Per-slab scan outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabOutcome {
    /// Index of the slab in sampling order.
    pub slab_id: usize,
    /// Number of successful doublings.
    pub steps: usize,
    /// Largest width for which the growth test passed: exactly `ℓ·κ^steps`.
    pub final_width: f64,
    /// Points inside the final slab (raw-count mode).
    pub final_count: usize,
    /// Normalized mass inside the final slab (count/n in raw-count mode,
    /// μ-mass in mass-weighted mode).
    pub final_mass: f64,
}

/// Scan report: per-slab outcomes plus their means.
///
/// JSON serialization carries the aggregates only; the per-slab rows go
/// to CSV via [`SudcReport::write_csv`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SudcReport {
    /// Per-slab outcomes, ordered by slab id.
    #[serde(skip)]
    pub per_slab: Vec<SlabOutcome>,
    /// Number of slabs scanned.
    pub n_slabs: usize,
    /// Mean final width: the scan's headline statistic β̄.
    pub beta_bar: f64,
    /// Mean number of successful doublings.
    pub mean_steps: f64,
    /// Mean final mass.
    pub mean_final_mass: f64,
}

impl SudcReport {
    /// Write per-slab rows as CSV: `slab_id,steps,final_width,final_mass`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "slab_id,steps,final_width,final_mass")?;
        for row in &self.per_slab {
            writeln!(
                w,
                "{},{},{},{}",
                row.slab_id,
                row.steps,
                crate::dataset::fmt_f64(row.final_width),
                crate::dataset::fmt_f64(row.final_mass)
            )?;
        }
        Ok(())
    }
}

/// Scan one slab: grow while the (non-strict) raw growth test passes.
fn scan_slab(
    ds: &LabeledDataset,
    sampler: &SlabSampler,
    p: &DoublingParams,
    mode: SudcMode,
    slab_id: usize,
) -> Result<SlabOutcome> {
    let slab = sampler.draw_slab(ds, slab_id, p.ell)?;
    let ts = TruncatedSlab::from_slab(slab);
    let profile = MassProfile::build(ds, &ts)?;

    let grew = |w: f64| -> bool {
        match mode {
            SudcMode::RawCount => {
                let before = profile.count_at(w) as f64;
                let after = profile.count_at(p.kappa * w) as f64;
                after >= (1.0 + p.sigma) * before
            }
            SudcMode::MassWeighted => {
                let before = profile.mass_at(w);
                let after = profile.mass_at(p.kappa * w);
                after >= (1.0 + p.sigma) * before
            }
        }
    };

    let mut steps = 0usize;
    loop {
        let width = p.ell * p.kappa.powi(steps as i32);
        if !width.is_finite() || !grew(width) {
            break;
        }
        steps += 1;
    }
    let final_width = p.ell * p.kappa.powi(steps as i32);
    let final_count = profile.count_at(final_width);
    let final_mass = match mode {
        SudcMode::RawCount => final_count as f64 / ds.len() as f64,
        SudcMode::MassWeighted => profile.mass_at(final_width),
    };
    Ok(SlabOutcome {
        slab_id,
        steps,
        final_width,
        final_count,
        final_mass,
    })
}

/// Run the simplified scan over sampled slabs (raw-count mode).
pub fn sudc_scan(
    ds: &LabeledDataset,
    sampler: &SlabSampler,
    p: &DoublingParams,
) -> Result<SudcReport> {
    sudc_scan_with_mode(ds, sampler, p, SudcMode::RawCount)
}

/// Run the simplified scan with an explicit counting mode.
///
/// Work is split per slab across the crate worker pool; outcomes are
/// collected by slab id, so the report is independent of the pool size.
pub fn sudc_scan_with_mode(
    ds: &LabeledDataset,
    sampler: &SlabSampler,
    p: &DoublingParams,
    mode: SudcMode,
) -> Result<SudcReport> {
    p.validate()?;
    sampler.validate()?;
    let pool = parallel::build_pool()?;
    let per_slab: Result<Vec<SlabOutcome>> = pool.install(|| {
        (0..sampler.n_slabs)
            .into_par_iter()
            .map(|slab_id| scan_slab(ds, sampler, p, mode, slab_id))
            .collect()
    });
    let per_slab = per_slab?;

    let n = per_slab.len() as f64;
    let beta_bar = kahan_sum(per_slab.iter().map(|o| o.final_width)) / n;
    let mean_steps = kahan_sum(per_slab.iter().map(|o| o.steps as f64)) / n;
    let mean_final_mass = kahan_sum(per_slab.iter().map(|o| o.final_mass)) / n;
    Ok(SudcReport {
        n_slabs: per_slab.len(),
        per_slab,
        beta_bar,
        mean_steps,
        mean_final_mass,
    })
}
