//! Piecewise-linear multilayer perceptron, written from scratch.
//!
//! The model is `X = λ∘M_L∘…∘λ∘M_1`: a chain of dense linear layers with
//! the same scalar activation λ applied after **every** layer, including
//! the last — the class scores themselves are post-activation values. No
//! biases; the layers are plain matrices.
//!
//! Training minimizes the weighted cross-entropy of a softmax with an
//! explicit base `b`: probabilities `ρ_j ∝ b^{X_j}`, loss
//! `L̄ = −Σ_s μ(s)·ln ρ_{i(s)}`, where `i(s)` is the true label and μ the
//! sample weights (summing to 1). Writing `c = ln b`, the exact score
//! gradient is `∂L̄/∂X_j(s) = μ(s)·c·(ρ_j − 1{j=i(s)})`, which is what the
//! backward pass implements.
//!
//! Subgradient conventions at kinks (one-sided, fixed crate-wide):
//! `|x|` uses 0 at the origin; the leaky rectifier uses its positive
//! slope at 0; general piecewise-linear activations use the right piece's
//! slope.
//!
//! The margin of a sample is `δX(s) = X_{i(s)} − max_{j≠i(s)} X_j`;
//! accuracy is the μ-mass of `{δX > 0}` (strict, so ties count as
//! errors).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{DgError, Result};
use crate::linalg::Matrix;
use crate::numeric::Kahan;
use crate::piecewise::Piecewise1D;

/// Zero matrix with the shape of an existing (hence valid) layer.
fn zeros_like(m: &Matrix) -> Matrix {
    Matrix::zeros(m.rows(), m.cols()).expect("existing layer has positive dimensions")
}

/// Scalar activation applied after every layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ActivationKind {
    /// Absolute value; derivative 0 at the origin.
    Abs,
    /// Leaky rectifier with left slope `alpha ∈ (0, 1]`; derivative at 0
    /// is the right slope 1.
    LeakyRelu(f64),
    /// General continuous piecewise-linear activation; derivative at a
    /// kink is the right piece's slope.
    Piecewise(Piecewise1D),
}

impl ActivationKind {
    /// Check parameter ranges.
    pub fn validate(&self) -> Result<()> {
        match self {
            ActivationKind::Abs => Ok(()),
            ActivationKind::LeakyRelu(alpha) => {
                if !(*alpha > 0.0 && *alpha <= 1.0) {
                    return Err(DgError::invalid("alpha", "must lie in (0, 1]"));
                }
                Ok(())
            }
            ActivationKind::Piecewise(f) => f.validate(),
        }
    }

    /// Apply the activation.
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            ActivationKind::Abs => x.abs(),
            ActivationKind::LeakyRelu(alpha) => {
                if x < 0.0 {
                    alpha * x
                } else {
                    x
                }
            }
            ActivationKind::Piecewise(f) => f.eval(x),
        }
    }

    /// One-sided derivative with the crate's kink conventions.
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            ActivationKind::Abs => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            ActivationKind::LeakyRelu(alpha) => {
                if x < 0.0 {
                    *alpha
                } else {
                    1.0
                }
            }
            ActivationKind::Piecewise(f) => f.derivative(x),
        }
    }

    /// Distance from `x` to the nearest kink of the activation.
    pub fn kink_distance(&self, x: f64) -> f64 {
        match self {
            ActivationKind::Abs | ActivationKind::LeakyRelu(_) => x.abs(),
            ActivationKind::Piecewise(f) => f
                .breakpoints()
                .iter()
                .map(|b| (x - b).abs())
                .fold(f64::INFINITY, f64::min),
        }
    }
}

/// Dense multilayer perceptron without biases.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    layers: Vec<Matrix>,
    activation: ActivationKind,
}

impl MlpModel {
    /// Assemble a model from explicit layer matrices (applied left to
    /// right: `layers[0]` consumes the input).
    pub fn new(layers: Vec<Matrix>, activation: ActivationKind) -> Result<Self> {
        if layers.is_empty() {
            return Err(DgError::invalid("layers", "need at least one layer"));
        }
        activation.validate()?;
        for w in layers.windows(2) {
            if w[1].cols() != w[0].rows() {
                return Err(DgError::DimensionMismatch {
                    expected: w[0].rows(),
                    got: w[1].cols(),
                });
            }
        }
        Ok(Self { layers, activation })
    }

    /// Random model with layer widths `dims = [in, h₁, …, out]` and
    /// entries drawn uniformly from `[−1/√fan_in, 1/√fan_in]`.
    ///
    /// Deterministic in `seed`: weights are drawn layer by layer in
    /// row-major order from one ChaCha8 stream.
    pub fn init(dims: &[usize], activation: ActivationKind, seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(DgError::invalid("dims", "need at least input and output"));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(DgError::invalid("dims", "layer widths must be ≥ 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for l in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut m = Matrix::zeros(fan_out, fan_in)?;
            for v in m.as_mut_slice() {
                *v = rng.random_range(-bound..=bound);
            }
            layers.push(m);
        }
        Self::new(layers, activation)
    }

    /// Layer matrices, input side first.
    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    /// Activation shared by all layers.
    pub fn activation(&self) -> &ActivationKind {
        &self.activation
    }

    /// Input dimension.
    pub fn input_dim(&self) -> usize {
        self.layers[0].cols()
    }

    /// Output dimension (number of classes).
    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().rows()
    }

    /// Layer widths `[in, h₁, …, out]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(Matrix::rows));
        dims
    }

    /// Class scores for one input (post-activation after every layer).
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = x.to_vec();
        for m in &self.layers {
            let a = m.matvec(&z)?;
            z = a.into_iter().map(|v| self.activation.apply(v)).collect();
        }
        Ok(z)
    }

    /// Forward pass retaining pre- and post-activation vectors per layer
    /// (for the backward pass and kink diagnostics).
    pub fn forward_trace(&self, x: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut z = x.to_vec();
        for m in &self.layers {
            let a = m.matvec(&z)?;
            z = a.iter().map(|&v| self.activation.apply(v)).collect();
            pre.push(a);
            post.push(z.clone());
        }
        Ok((pre, post))
    }

    /// Product `M_L···M_1` of the layer matrices.
    pub fn product_matrix(&self) -> Result<Matrix> {
        let mut prod = self.layers[0].clone();
        for m in &self.layers[1..] {
            prod = m.matmul(&prod)?;
        }
        Ok(prod)
    }

    /// Singular values of the layer-matrix product, descending.
    pub fn singular_spectrum(&self) -> Result<Vec<f64>> {
        Ok(crate::linalg::svd(&self.product_matrix()?)?.s)
    }

    /// Zero out small singular values of every layer matrix in place;
    /// returns how many were dropped in total.
    pub fn truncate_weights(&mut self, policy: TruncationPolicy) -> Result<usize> {
        let mut dropped = 0;
        for layer in &mut self.layers {
            let (truncated, n) = truncate_singular_values(layer, policy)?;
            *layer = truncated;
            dropped += n;
        }
        Ok(dropped)
    }
}

/// Rule for deciding which singular values count as noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TruncationPolicy {
    /// Drop singular values strictly below a fixed threshold.
    Absolute(f64),
    /// Drop singular values strictly below `factor · median(σ)`.
    MedianMultiple(f64),
}

impl TruncationPolicy {
    /// The customary hard-threshold factor for square noisy matrices.
    pub const DEFAULT_MEDIAN_FACTOR: f64 = 2.858;

    /// Median rule with the default factor.
    pub fn default_median() -> Self {
        TruncationPolicy::MedianMultiple(Self::DEFAULT_MEDIAN_FACTOR)
    }
}

/// Rebuild `m` with singular values below the policy's threshold zeroed.
/// Returns the truncated matrix and the number of dropped values.
pub fn truncate_singular_values(m: &Matrix, policy: TruncationPolicy) -> Result<(Matrix, usize)> {
    let svd = crate::linalg::svd(m)?;
    let threshold = match policy {
        TruncationPolicy::Absolute(t) => {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(DgError::invalid("threshold", "must be finite and ≥ 0"));
            }
            t
        }
        TruncationPolicy::MedianMultiple(factor) => {
            if !(factor > 0.0) || !factor.is_finite() {
                return Err(DgError::invalid("factor", "must be finite and > 0"));
            }
            let mut sorted = svd.s.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mid = sorted.len() / 2;
            let median = if sorted.len() % 2 == 1 {
                sorted[mid]
            } else {
                0.5 * (sorted[mid - 1] + sorted[mid])
            };
            factor * median
        }
    };
    let kept: Vec<f64> = svd
        .s
        .iter()
        .map(|&s| if s < threshold { 0.0 } else { s })
        .collect();
    let already_zero = svd.s.iter().filter(|&&s| s == 0.0).count();
    let dropped = kept.iter().filter(|&&s| s == 0.0).count() - already_zero;
    Ok((svd.reconstruct(&kept)?, dropped))
}

/// Squared extremes of a matrix's singular values: `(d_min, d_max)` with
/// `d_min` the square of the smallest **nonzero** singular value (values
/// below `1e-10·σ_max` are treated as zero) and `d_max = σ_max²`.
pub fn squared_singular_range(m: &Matrix) -> Result<(f64, f64)> {
    let s = crate::linalg::svd(m)?.s;
    let s_max = s.first().copied().unwrap_or(0.0);
    if s_max == 0.0 {
        return Err(DgError::invalid("matrix", "all singular values are zero"));
    }
    let cutoff = 1e-10 * s_max;
    let s_min = s
        .iter()
        .rev()
        .find(|&&v| v > cutoff)
        .copied()
        .unwrap_or(s_max);
    Ok((s_min * s_min, s_max * s_max))
}

/// Softmax with base `b`: `ρ_j = b^{x_j} / Σ_k b^{x_k}`, computed with
/// max subtraction so huge scores stay finite.
pub fn softmax_b(scores: &[f64], base: f64) -> Result<Vec<f64>> {
    if !(base > 1.0) || !base.is_finite() {
        return Err(DgError::invalid("base", "must be finite and > 1"));
    }
    if scores.is_empty() {
        return Err(DgError::invalid("scores", "must be nonempty"));
    }
    let c = base.ln();
    let m = scores.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = scores.iter().map(|&x| (c * (x - m)).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Margin of a score vector: true-class score minus the best rival.
pub fn delta_x(scores: &[f64], true_label: usize) -> Result<f64> {
    if scores.len() < 2 {
        return Err(DgError::invalid("scores", "need at least two classes"));
    }
    if true_label >= scores.len() {
        return Err(DgError::invalid("true_label", "out of range"));
    }
    let rival = scores
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != true_label)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(scores[true_label] - rival)
}

/// Weighted margin distribution of a model over a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaXVector {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl DeltaXVector {
    /// Build from parallel value/weight vectors (weights ≥ 0, finite).
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != weights.len() {
            return Err(DgError::invalid(
                "values",
                "need equal-length nonempty value and weight vectors",
            ));
        }
        if values.iter().any(|v| !v.is_finite())
            || weights.iter().any(|w| !w.is_finite() || *w < 0.0)
        {
            return Err(DgError::invalid(
                "values",
                "entries must be finite with non-negative weights",
            ));
        }
        Ok(Self { values, weights })
    }

    /// Margin values in sample order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Sample weights in sample order.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(value, weight)` pairs, the shape the interval checkers consume.
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(&v, &w)| (v, w))
            .collect()
    }

    /// Weighted accuracy: mass of `{δX > 0}` (strict).
    pub fn accuracy(&self) -> f64 {
        self.good_mass(0.0)
    }

    /// Mass of the confidently-correct set `{δX > η}` (strict).
    pub fn good_mass(&self, eta: f64) -> f64 {
        let mut acc = Kahan::new();
        for (&v, &w) in self.values.iter().zip(&self.weights) {
            if v > eta {
                acc.add(w);
            }
        }
        acc.value()
    }

    /// Mass of the confidently-wrong set `{δX < −η}` (strict).
    pub fn bad_mass(&self, eta: f64) -> f64 {
        let mut acc = Kahan::new();
        for (&v, &w) in self.values.iter().zip(&self.weights) {
            if v < -eta {
                acc.add(w);
            }
        }
        acc.value()
    }
}

/// Margin distribution of `model` over `ds` (weights copied from the
/// dataset).
pub fn delta_x_distribution(model: &MlpModel, ds: &LabeledDataset) -> Result<DeltaXVector> {
    if ds.dim() != model.input_dim() {
        return Err(DgError::DimensionMismatch {
            expected: model.input_dim(),
            got: ds.dim(),
        });
    }
    if ds.k() > model.output_dim() {
        return Err(DgError::invalid(
            "dataset",
            format!(
                "dataset has {} classes but the model outputs {}",
                ds.k(),
                model.output_dim()
            ),
        ));
    }
    let mut values = Vec::with_capacity(ds.len());
    for (point, &label) in ds.points().iter().zip(ds.labels()) {
        let scores = model.forward(point)?;
        values.push(delta_x(&scores, label)?);
    }
    DeltaXVector::new(values, ds.weights().to_vec())
}

/// Per-sample loss `−ln ρ_{i}` and softmax probabilities for one score
/// vector, computed stably from the log-sum-exp.
fn sample_loss_and_probs(scores: &[f64], label: usize, c: f64) -> (f64, Vec<f64>) {
    let m = scores.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = scores.iter().map(|&x| (c * (x - m)).exp()).collect();
    let total: f64 = exps.iter().sum();
    let loss = total.ln() - c * (scores[label] - m);
    let probs = exps.into_iter().map(|e| e / total).collect();
    (loss, probs)
}

/// Weighted cross-entropy of `model` on `ds` under softmax base `base`.
pub fn cross_entropy(model: &MlpModel, ds: &LabeledDataset, base: f64) -> Result<f64> {
    if !(base > 1.0) || !base.is_finite() {
        return Err(DgError::invalid("base", "must be finite and > 1"));
    }
    let c = base.ln();
    let mut acc = Kahan::new();
    for ((point, &label), &w) in ds.points().iter().zip(ds.labels()).zip(ds.weights()) {
        let scores = model.forward(point)?;
        let (loss, _) = sample_loss_and_probs(&scores, label, c);
        acc.add(w * loss);
    }
    Ok(acc.value())
}

/// Analytic gradient of the weighted loss with respect to every layer
/// matrix, in layer order — the direction one full-batch descent step
/// moves against. Kink coordinates use the crate's fixed one-sided
/// subgradient convention.
pub fn loss_gradient(model: &MlpModel, ds: &LabeledDataset, base: f64) -> Result<Vec<Matrix>> {
    if !(base > 1.0) || !base.is_finite() {
        return Err(DgError::invalid("base", "must be finite and > 1"));
    }
    if ds.dim() != model.input_dim() {
        return Err(DgError::DimensionMismatch {
            expected: model.input_dim(),
            got: ds.dim(),
        });
    }
    let c = base.ln();
    let mut grads: Vec<Matrix> = model
        .layers
        .iter()
        .map(|m| Matrix::zeros(m.rows(), m.cols()))
        .collect::<Result<_>>()?;
    for ((point, &label), &w) in ds.points().iter().zip(ds.labels()).zip(ds.weights()) {
        backprop_sample(model, point, label, w, c, 1.0, &mut grads)?;
    }
    Ok(grads)
}

/// Loss and accuracy of `model` on `ds` in one pass.
pub fn evaluate(model: &MlpModel, ds: &LabeledDataset, base: f64) -> Result<(f64, f64)> {
    let c = base.ln();
    let mut loss = Kahan::new();
    let mut acc = Kahan::new();
    for ((point, &label), &w) in ds.points().iter().zip(ds.labels()).zip(ds.weights()) {
        let scores = model.forward(point)?;
        let (l, _) = sample_loss_and_probs(&scores, label, c);
        loss.add(w * l);
        if delta_x(&scores, label)? > 0.0 {
            acc.add(w);
        }
    }
    Ok((loss.value(), acc.value()))
}

/// Gradient-descent variant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    /// Plain gradient descent with a fixed step.
    Sgd {
        /// Learning rate.
        lr: f64,
    },
    /// Adam with bias correction.
    Adam {
        /// Learning rate.
        lr: f64,
        /// First-moment decay (customary 0.9).
        beta1: f64,
        /// Second-moment decay (customary 0.999).
        beta2: f64,
        /// Denominator floor (customary 1e-8).
        eps: f64,
    },
}

impl OptimizerKind {
    /// Adam with the customary decay constants.
    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            OptimizerKind::Sgd { lr } => {
                if !(lr > 0.0) || !lr.is_finite() {
                    return Err(DgError::invalid("lr", "must be finite and > 0"));
                }
            }
            OptimizerKind::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                if !(lr > 0.0) || !lr.is_finite() {
                    return Err(DgError::invalid("lr", "must be finite and > 0"));
                }
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
                    return Err(DgError::invalid("beta", "decays must lie in [0, 1)"));
                }
                if !(eps > 0.0) {
                    return Err(DgError::invalid("eps", "must be > 0"));
                }
            }
        }
        Ok(())
    }
}

/// Full-batch or shuffled minibatch gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BatchMode {
    /// One step per epoch on the full weighted loss.
    Full,
    /// Shuffled minibatches; each batch gradient is the weighted sum over
    /// the batch scaled by `n/|B|` (its actual length), an unbiased
    /// estimate of the full gradient.
    Minibatch {
        /// Batch size (≥ 1; the last batch of an epoch may be shorter).
        size: usize,
    },
}

/// Training configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    /// Number of epochs (trace rows are `0..=epochs`).
    pub epochs: usize,
    /// Optimizer and step size.
    pub optimizer: OptimizerKind,
    /// Batching scheme.
    pub batch: BatchMode,
    /// Softmax base `b > 1` used in the loss.
    pub softmax_base: f64,
    /// Seed for minibatch shuffling.
    pub seed: u64,
}

impl TrainOptions {
    /// Full-batch plain gradient descent at base e.
    pub fn full_batch_sgd(epochs: usize, lr: f64) -> Self {
        Self {
            epochs,
            optimizer: OptimizerKind::Sgd { lr },
            batch: BatchMode::Full,
            softmax_base: std::f64::consts::E,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if !(self.softmax_base > 1.0) || !self.softmax_base.is_finite() {
            return Err(DgError::invalid("softmax_base", "must be finite and > 1"));
        }
        if let BatchMode::Minibatch { size } = self.batch {
            if size == 0 {
                return Err(DgError::invalid("batch size", "must be ≥ 1"));
            }
        }
        Ok(())
    }
}

/// One row of the training trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    /// Epoch index; 0 is the pre-training evaluation.
    pub epoch: usize,
    /// Full-dataset weighted cross-entropy at this epoch.
    pub loss: f64,
    /// Full-dataset weighted accuracy at this epoch.
    pub accuracy: f64,
}

/// Training outcome: the per-epoch trace (row 0 is pre-training).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Rows for epochs `0..=epochs`.
    pub trace: Vec<TraceRow>,
}

impl TrainReport {
    /// Final loss (last trace row).
    pub fn final_loss(&self) -> f64 {
        self.trace.last().map(|r| r.loss).unwrap_or(f64::NAN)
    }

    /// Final accuracy (last trace row).
    pub fn final_accuracy(&self) -> f64 {
        self.trace.last().map(|r| r.accuracy).unwrap_or(f64::NAN)
    }

    /// Write the trace as CSV: `epoch,loss,accuracy`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,loss,accuracy")?;
        for row in &self.trace {
            writeln!(
                w,
                "{},{},{}",
                row.epoch,
                crate::dataset::fmt_f64(row.loss),
                crate::dataset::fmt_f64(row.accuracy)
            )?;
        }
        Ok(())
    }
}

/// Accumulate `scale · d ⊗ z` into `g`.
fn add_outer(g: &mut Matrix, d: &[f64], z: &[f64], scale: f64) {
    let cols = g.cols();
    let data = g.as_mut_slice();
    for (r, &dr) in d.iter().enumerate() {
        let coeff = scale * dr;
        if coeff == 0.0 {
            continue;
        }
        let row = &mut data[r * cols..(r + 1) * cols];
        for (c, &zc) in z.iter().enumerate() {
            row[c] += coeff * zc;
        }
    }
}

/// Add one sample's weighted loss gradient (scaled by `scale`) into
/// `grads`; returns the sample's unweighted loss.
fn backprop_sample(
    model: &MlpModel,
    point: &[f64],
    label: usize,
    weight: f64,
    c: f64,
    scale: f64,
    grads: &mut [Matrix],
) -> Result<f64> {
    let (pre, post) = model.forward_trace(point)?;
    let scores = post.last().unwrap();
    let (loss, probs) = sample_loss_and_probs(scores, label, c);

    // ∂L/∂X_j for this sample, including its μ-weight and batch scale.
    let coeff = scale * weight * c;
    let mut g: Vec<f64> = probs
        .iter()
        .enumerate()
        .map(|(j, &p)| coeff * (p - if j == label { 1.0 } else { 0.0 }))
        .collect();

    for l in (0..model.layers.len()).rev() {
        let d_pre: Vec<f64> = g
            .iter()
            .zip(&pre[l])
            .map(|(&gi, &ai)| gi * model.activation.derivative(ai))
            .collect();
        let input: &[f64] = if l == 0 { point } else { &post[l - 1] };
        add_outer(&mut grads[l], &d_pre, input, 1.0);
        if l > 0 {
            g = model.layers[l].matvec_transpose(&d_pre)?;
        }
    }
    Ok(loss)
}

/// Per-layer Adam moments.
struct AdamState {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: u64,
}

fn apply_step(
    model: &mut MlpModel,
    grads: &[Matrix],
    optimizer: &OptimizerKind,
    adam: &mut Option<AdamState>,
) {
    match *optimizer {
        OptimizerKind::Sgd { lr } => {
            for (layer, g) in model.layers.iter_mut().zip(grads) {
                for (w, &gv) in layer.as_mut_slice().iter_mut().zip(g.as_slice()) {
                    *w -= lr * gv;
                }
            }
        }
        OptimizerKind::Adam {
            lr,
            beta1,
            beta2,
            eps,
        } => {
            let state = adam.as_mut().expect("Adam state initialized before use");
            state.t += 1;
            let bc1 = 1.0 - beta1.powi(state.t as i32);
            let bc2 = 1.0 - beta2.powi(state.t as i32);
            for (((layer, g), m), v) in model
                .layers
                .iter_mut()
                .zip(grads)
                .zip(&mut state.m)
                .zip(&mut state.v)
            {
                for (((w, &gv), mv), vv) in layer
                    .as_mut_slice()
                    .iter_mut()
                    .zip(g.as_slice())
                    .zip(m.as_mut_slice())
                    .zip(v.as_mut_slice())
                {
                    *mv = beta1 * *mv + (1.0 - beta1) * gv;
                    *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                    let m_hat = *mv / bc1;
                    let v_hat = *vv / bc2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

/// Train `model` in place, returning the per-epoch trace.
///
/// Row `e` of the trace evaluates the parameters after `e` epochs on the
/// **full** dataset (row 0 is the untrained model). A non-finite
/// full-dataset loss aborts with [`DgError::NonFiniteLoss`] naming the
/// epoch at which it was observed. Training is sequential and
/// deterministic in `(model, ds, opts)`.
pub fn train(model: &mut MlpModel, ds: &LabeledDataset, opts: &TrainOptions) -> Result<TrainReport> {
    opts.validate()?;
    if ds.dim() != model.input_dim() {
        return Err(DgError::DimensionMismatch {
            expected: model.input_dim(),
            got: ds.dim(),
        });
    }
    if ds.k() > model.output_dim() {
        return Err(DgError::invalid(
            "dataset",
            format!(
                "dataset has {} classes but the model outputs {}",
                ds.k(),
                model.output_dim()
            ),
        ));
    }
    let c = opts.softmax_base.ln();
    let n = ds.len();

    let mut adam = match opts.optimizer {
        OptimizerKind::Adam { .. } => Some(AdamState {
            m: model.layers.iter().map(zeros_like).collect(),
            v: model.layers.iter().map(zeros_like).collect(),
            t: 0,
        }),
        OptimizerKind::Sgd { .. } => None,
    };

    let mut trace = Vec::with_capacity(opts.epochs + 1);
    let record = |model: &MlpModel, epoch: usize, trace: &mut Vec<TraceRow>| -> Result<()> {
        let (loss, accuracy) = evaluate(model, ds, opts.softmax_base)?;
        if !loss.is_finite() {
            return Err(DgError::NonFiniteLoss { epoch });
        }
        trace.push(TraceRow {
            epoch,
            loss,
            accuracy,
        });
        Ok(())
    };
    record(model, 0, &mut trace)?;

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut grads: Vec<Matrix> = model.layers.iter().map(zeros_like).collect();

    for epoch in 1..=opts.epochs {
        match opts.batch {
            BatchMode::Full => {
                for g in &mut grads {
                    for v in g.as_mut_slice() {
                        *v = 0.0;
                    }
                }
                for ((point, &label), &w) in
                    ds.points().iter().zip(ds.labels()).zip(ds.weights())
                {
                    backprop_sample(model, point, label, w, c, 1.0, &mut grads)?;
                }
                apply_step(model, &grads, &opts.optimizer, &mut adam);
            }
            BatchMode::Minibatch { size } => {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut shuffle_rng);
                for batch in order.chunks(size) {
                    for g in &mut grads {
                        for v in g.as_mut_slice() {
                            *v = 0.0;
                        }
                    }
                    let scale = n as f64 / batch.len() as f64;
                    for &idx in batch {
                        backprop_sample(
                            model,
                            &ds.points()[idx],
                            ds.labels()[idx],
                            ds.weights()[idx],
                            c,
                            scale,
                            &mut grads,
                        )?;
                    }
                    apply_step(model, &grads, &opts.optimizer, &mut adam);
                }
            }
        }
        record(model, epoch, &mut trace)?;
    }
    Ok(TrainReport { trace })
}

/// Checkpoint header, stored as one JSON line ahead of the weight payload.
#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    magic: String,
    version: u32,
    dims: Vec<usize>,
    activation: ActivationKind,
    n_values: usize,
}

const CHECKPOINT_MAGIC: &str = "dg-mlp";
const CHECKPOINT_VERSION: u32 = 1;

/// Save a model: one JSON header line, then every layer's entries
/// (row-major, input side first) as little-endian f64 bytes.
pub fn save_checkpoint(model: &MlpModel, path: &Path) -> Result<()> {
    let header = CheckpointHeader {
        magic: CHECKPOINT_MAGIC.to_string(),
        version: CHECKPOINT_VERSION,
        dims: model.dims(),
        activation: model.activation.clone(),
        n_values: model.layers.iter().map(|l| l.as_slice().len()).sum(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &header)
        .map_err(|e| DgError::invalid("checkpoint", e.to_string()))?;
    w.write_all(b"\n")?;
    for layer in &model.layers {
        for v in layer.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Load a model saved by [`save_checkpoint`]; weights round-trip
/// bit-exactly.
pub fn load_checkpoint(path: &Path) -> Result<MlpModel> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header_bytes = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        r.read_exact(&mut byte)
            .map_err(|_| DgError::Parse {
                line: 1,
                message: "checkpoint header line is truncated".to_string(),
            })?;
        if byte[0] == b'\n' {
            break;
        }
        header_bytes.push(byte[0]);
    }
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes).map_err(|e| {
        DgError::Parse {
            line: 1,
            message: format!("bad checkpoint header: {e}"),
        }
    })?;
    if header.magic != CHECKPOINT_MAGIC {
        return Err(DgError::Parse {
            line: 1,
            message: format!("bad magic {:?}", header.magic),
        });
    }
    if header.version != CHECKPOINT_VERSION {
        return Err(DgError::Parse {
            line: 1,
            message: format!("unsupported checkpoint version {}", header.version),
        });
    }
    if header.dims.len() < 2 {
        return Err(DgError::Parse {
            line: 1,
            message: "checkpoint needs at least two layer widths".to_string(),
        });
    }
    let expected: usize = header
        .dims
        .windows(2)
        .map(|w| w[0] * w[1])
        .sum();
    if header.n_values != expected {
        return Err(DgError::Parse {
            line: 1,
            message: format!(
                "header count {} disagrees with dims (expect {expected})",
                header.n_values
            ),
        });
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != expected * 8 {
        return Err(DgError::Parse {
            line: 2,
            message: format!(
                "payload holds {} bytes, expected {}",
                payload.len(),
                expected * 8
            ),
        });
    }
    let mut layers = Vec::with_capacity(header.dims.len() - 1);
    let mut offset = 0usize;
    for w in header.dims.windows(2) {
        let (rows, cols) = (w[1], w[0]);
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let bytes: [u8; 8] = payload[offset..offset + 8].try_into().unwrap();
            data.push(f64::from_le_bytes(bytes));
            offset += 8;
        }
        layers.push(Matrix::from_flat(rows, cols, data)?);
    }
    MlpModel::new(layers, header.activation)
}
