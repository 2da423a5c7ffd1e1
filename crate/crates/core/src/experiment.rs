//! End-to-end experiment pipeline.
//!
//! For each dataset index the pipeline generates a polynomial-boundary
//! dataset, trains a fresh network on it, records the final training loss
//! and accuracy, and runs the width scan to get the mean final width β̄.
//! It then keeps the half of the runs whose accuracy is closest to the mean
//! accuracy — comparing loss across runs is only meaningful at comparable
//! accuracy — and reports the rank correlation between β̄ and loss on that
//! half. Denser, better-spread data both scans wider and trains to lower
//! loss in a fixed number of epochs, so the expected correlation is
//! negative.
//!
//! Every stage derives its RNG seed from `(master seed, dataset index,
//! stage)` with a splitmix64 mix, and datasets are processed by index with
//! order-preserving aggregation, so the report is bit-identical for any
//! worker-pool size.

use crate::dataset::{fmt_f64, PolyBoundarySpec};
use crate::doubling::{sudc_scan, DoublingParams, SlabSampler};
use crate::error::{DgError, Result};
use crate::network::{
    train, ActivationKind, BatchMode, MlpModel, OptimizerKind, TrainOptions,
};
use crate::parallel;
use crate::stats::{mean, pearson, spearman};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Network architecture preset: hidden layer count/width plus activation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DnnPreset {
    /// Number of hidden layers.
    pub hidden_layers: usize,
    /// Width of each hidden layer.
    pub hidden_width: usize,
    /// Activation applied after every layer.
    pub activation: ActivationKind,
}

impl DnnPreset {
    /// Desk-scale preset: 2 hidden layers of 32 units, LeakyReLU(0.01).
    pub fn small() -> Self {
        Self {
            hidden_layers: 2,
            hidden_width: 32,
            activation: ActivationKind::LeakyRelu(0.01),
        }
    }

    /// Full-scale preset: 4 hidden layers of 1000 units, absolute value.
    pub fn paper() -> Self {
        Self {
            hidden_layers: 4,
            hidden_width: 1000,
            activation: ActivationKind::Abs,
        }
    }

    /// Layer dimensions for `input_dim` inputs and `k` classes.
    pub fn dims(&self, input_dim: usize, k: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_layers + 2);
        dims.push(input_dim);
        dims.extend(std::iter::repeat(self.hidden_width).take(self.hidden_layers));
        dims.push(k);
        dims
    }

    fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0 {
            return Err(DgError::invalid("hidden_layers", "must be ≥ 1"));
        }
        if self.hidden_width == 0 {
            return Err(DgError::invalid("hidden_width", "must be ≥ 1"));
        }
        self.activation.validate()
    }
}

/// Full description of a pipeline run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Number of independent datasets (and networks).
    pub n_datasets: usize,
    /// Smallest dataset size, inclusive.
    pub n_points_lo: usize,
    /// Largest dataset size, inclusive.
    pub n_points_hi: usize,
    /// Polynomial degree of the decision boundary.
    pub degree: usize,
    /// Interval the x-coordinates are drawn from.
    pub x_range: (f64, f64),
    /// Vertical distance of each class from the boundary.
    pub vertical_shift: f64,
    /// Standard deviation of the y-noise.
    pub noise_std: f64,
    /// Network architecture.
    pub preset: DnnPreset,
    /// Training epochs.
    pub epochs: usize,
    /// Optimizer for every run.
    pub optimizer: OptimizerKind,
    /// Batching mode for every run.
    pub batch: BatchMode,
    /// Softmax base used in the loss.
    pub softmax_base: f64,
    /// Parameters for the width scan.
    pub dc: DoublingParams,
    /// Number of slabs per scan.
    pub n_slabs: usize,
    /// Master seed; all per-run seeds derive from it.
    pub seed: u64,
}

impl ExperimentConfig {
    /// Desk-scale configuration: 20 datasets of 200–2000 points, the small
    /// preset trained 2 epochs with minibatch Adam, 2000 scan slabs.
    pub fn desk(seed: u64) -> Self {
        Self {
            n_datasets: 20,
            n_points_lo: 200,
            n_points_hi: 2000,
            degree: 3,
            x_range: (-1.0, 1.0),
            vertical_shift: 0.2,
            noise_std: 0.35,
            preset: DnnPreset::small(),
            epochs: 2,
            optimizer: OptimizerKind::adam(2e-3),
            batch: BatchMode::Minibatch { size: 32 },
            softmax_base: std::f64::consts::E,
            dc: DoublingParams {
                kappa: 2.0,
                sigma: 0.9,
                delta: 1.0,
                ell: 0.001,
                beta: 1.0,
                m0: 0.0,
            },
            n_slabs: 2000,
            seed,
        }
    }

    /// Full-scale configuration mirroring the 100-network experiment:
    /// 100 datasets of 10,000–20,000 points, the 4×1000 preset trained
    /// 5 epochs, 50,000 scan slabs at κ=2, σ=0.9, δ=1, ℓ=0.001.
    pub fn paper_ex_3_2(seed: u64) -> Self {
        Self {
            n_datasets: 100,
            n_points_lo: 10_000,
            n_points_hi: 20_000,
            epochs: 5,
            preset: DnnPreset::paper(),
            n_slabs: 50_000,
            ..Self::desk(seed)
        }
    }

    /// Validate every field range.
    pub fn validate(&self) -> Result<()> {
        if self.n_datasets == 0 {
            return Err(DgError::invalid("n_datasets", "must be ≥ 1"));
        }
        if self.n_points_lo < 2 || self.n_points_hi < self.n_points_lo {
            return Err(DgError::invalid(
                "n_points",
                "need 2 ≤ n_points_lo ≤ n_points_hi",
            ));
        }
        if self.epochs == 0 {
            return Err(DgError::invalid("epochs", "must be ≥ 1"));
        }
        if self.n_slabs == 0 {
            return Err(DgError::invalid("n_slabs", "must be ≥ 1"));
        }
        if !(self.softmax_base > 1.0) || !self.softmax_base.is_finite() {
            return Err(DgError::invalid("softmax_base", "must be finite and > 1"));
        }
        self.preset.validate()?;
        self.dc.validate()
    }
}

/// Per-dataset pipeline outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    /// Dataset index within the config.
    pub dataset_index: usize,
    /// Points in this dataset.
    pub n_points: usize,
    /// Training loss after the last epoch.
    pub final_loss: f64,
    /// Training accuracy after the last epoch.
    pub final_accuracy: f64,
    /// Mean final slab width from the scan.
    pub beta_bar: f64,
    /// Mean doubling steps from the scan.
    pub mean_steps: f64,
}

/// Aggregated pipeline result.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    /// Successful runs, ordered by dataset index.
    pub runs: Vec<RunRecord>,
    /// Datasets whose pipeline stage failed (logged and skipped).
    pub n_failed: usize,
    /// Mean accuracy over successful runs.
    pub mean_accuracy: f64,
    /// Dataset indices of the near-mean-accuracy half, ascending.
    pub selected: Vec<usize>,
    /// Spearman rank correlation of (β̄, loss) on the selected half;
    /// `None` when fewer than two runs are selected.
    pub spearman_beta_loss: Option<f64>,
    /// Pearson correlation on the same pairs.
    pub pearson_beta_loss: Option<f64>,
}

impl PipelineReport {
    /// The (β̄, final loss) pairs of the selected runs, by dataset index.
    pub fn selected_pairs(&self) -> Vec<(f64, f64)> {
        self.runs
            .iter()
            .filter(|r| self.selected.binary_search(&r.dataset_index).is_ok())
            .map(|r| (r.beta_bar, r.final_loss))
            .collect()
    }

    /// Write one CSV row per successful run:
    /// `dataset_index,n_points,final_loss,final_accuracy,beta_bar,mean_steps`.
    pub fn write_runs_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "dataset_index,n_points,final_loss,final_accuracy,beta_bar,mean_steps"
        )?;
        for r in &self.runs {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.dataset_index,
                r.n_points,
                fmt_f64(r.final_loss),
                fmt_f64(r.final_accuracy),
                fmt_f64(r.beta_bar),
                fmt_f64(r.mean_steps)
            )?;
        }
        Ok(())
    }

    /// Write one CSV row per selected run: `beta_bar,loss`.
    pub fn write_selected_pairs_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "beta_bar,loss")?;
        for (b, l) in self.selected_pairs() {
            writeln!(out, "{},{}", fmt_f64(b), fmt_f64(l))?;
        }
        Ok(())
    }
}

/// Stage tags for seed derivation; distinct per RNG consumer.
const STAGE_SIZE: u64 = 1;
const STAGE_DATA: u64 = 2;
const STAGE_MODEL: u64 = 3;
const STAGE_SHUFFLE: u64 = 4;
const STAGE_SLABS: u64 = 5;

/// splitmix64 finalizer: a cheap, well‑mixed u64 → u64 permutation.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent seed for `(master, dataset index, stage)`.
fn derive_seed(master: u64, index: u64, stage: u64) -> u64 {
    splitmix64(master ^ splitmix64(index ^ splitmix64(stage)))
}

/// Run one dataset end to end. Any stage error aborts just this dataset.
fn run_one(cfg: &ExperimentConfig, index: usize) -> Result<RunRecord> {
    let idx = index as u64;
    let mut size_rng =
        ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, idx, STAGE_SIZE));
    let n_points = size_rng.random_range(cfg.n_points_lo..=cfg.n_points_hi);

    let ds = crate::dataset::generate_poly_boundary(&PolyBoundarySpec {
        degree: cfg.degree,
        n_samples: n_points,
        x_range: cfg.x_range,
        vertical_shift: cfg.vertical_shift,
        noise_std: cfg.noise_std,
        seed: derive_seed(cfg.seed, idx, STAGE_DATA),
    })?;

    let dims = cfg.preset.dims(ds.dim(), ds.k());
    let mut model = MlpModel::init(
        &dims,
        cfg.preset.activation.clone(),
        derive_seed(cfg.seed, idx, STAGE_MODEL),
    )?;
    let train_report = train(
        &mut model,
        &ds,
        &TrainOptions {
            epochs: cfg.epochs,
            optimizer: cfg.optimizer,
            batch: cfg.batch,
            softmax_base: cfg.softmax_base,
            seed: derive_seed(cfg.seed, idx, STAGE_SHUFFLE),
        },
    )?;

    let sampler = SlabSampler::new(cfg.n_slabs, derive_seed(cfg.seed, idx, STAGE_SLABS));
    let scan = sudc_scan(&ds, &sampler, &cfg.dc)?;

    Ok(RunRecord {
        dataset_index: index,
        n_points,
        final_loss: train_report.final_loss(),
        final_accuracy: train_report.final_accuracy(),
        beta_bar: scan.beta_bar,
        mean_steps: scan.mean_steps,
    })
}

/// Run the full pipeline described by `cfg`.
///
/// Datasets are processed in parallel but aggregated by index; failures are
/// logged with `log::warn!` and skipped. The near-mean-accuracy half is the
/// ⌈n/2⌉ successful runs with the smallest |accuracy − mean accuracy|, ties
/// broken by dataset index.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<PipelineReport> {
    cfg.validate()?;
    let pool = parallel::build_pool()?;
    let outcomes: Vec<(usize, Result<RunRecord>)> = pool.install(|| {
        (0..cfg.n_datasets)
            .into_par_iter()
            .map(|i| (i, run_one(cfg, i)))
            .collect()
    });
    aggregate(outcomes)
}

/// Fold per-dataset outcomes into a report; failures are logged and skipped.
fn aggregate(outcomes: Vec<(usize, Result<RunRecord>)>) -> Result<PipelineReport> {
    let mut runs = Vec::with_capacity(outcomes.len());
    let mut n_failed = 0usize;
    for (i, outcome) in outcomes {
        match outcome {
            Ok(r) => runs.push(r),
            Err(e) => {
                n_failed += 1;
                log::warn!("dataset {i} failed: {e}");
            }
        }
    }
    if runs.is_empty() {
        return Err(DgError::invalid(
            "pipeline",
            "every dataset failed; nothing to report",
        ));
    }

    let accs: Vec<f64> = runs.iter().map(|r| r.final_accuracy).collect();
    let mean_accuracy = mean(&accs)?;

    let mut by_closeness: Vec<&RunRecord> = runs.iter().collect();
    by_closeness.sort_by(|a, b| {
        let da = (a.final_accuracy - mean_accuracy).abs();
        let db = (b.final_accuracy - mean_accuracy).abs();
        da.total_cmp(&db).then(a.dataset_index.cmp(&b.dataset_index))
    });
    let n_selected = runs.len().div_ceil(2);
    let mut selected: Vec<usize> = by_closeness[..n_selected]
        .iter()
        .map(|r| r.dataset_index)
        .collect();
    selected.sort_unstable();

    let pairs: Vec<(f64, f64)> = runs
        .iter()
        .filter(|r| selected.binary_search(&r.dataset_index).is_ok())
        .map(|r| (r.beta_bar, r.final_loss))
        .collect();
    let (spearman_beta_loss, pearson_beta_loss) = if pairs.len() < 2 {
        (None, None)
    } else {
        let betas: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let losses: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        (
            Some(spearman(&betas, &losses)?),
            Some(pearson(&betas, &losses)?),
        )
    };

    Ok(PipelineReport {
        runs,
        n_failed,
        mean_accuracy,
        selected,
        spearman_beta_loss,
        pearson_beta_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mini_config(seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            n_datasets: 6,
            n_points_lo: 60,
            n_points_hi: 240,
            epochs: 1,
            n_slabs: 100,
            ..ExperimentConfig::desk(seed)
        }
    }

    #[test]
    fn derived_seeds_are_distinct_across_stages_and_indices() {
        let mut seen = std::collections::HashSet::new();
        for index in 0..50 {
            for stage in [STAGE_SIZE, STAGE_DATA, STAGE_MODEL, STAGE_SHUFFLE, STAGE_SLABS] {
                assert!(seen.insert(derive_seed(42, index, stage)));
            }
        }
    }

    #[test]
    fn preset_dims_shape() {
        assert_eq!(DnnPreset::small().dims(2, 2), vec![2, 32, 32, 2]);
        assert_eq!(
            DnnPreset::paper().dims(2, 2),
            vec![2, 1000, 1000, 1000, 1000, 2]
        );
    }

    #[test]
    fn desk_and_paper_configs_validate() {
        assert!(ExperimentConfig::desk(1).validate().is_ok());
        assert!(ExperimentConfig::paper_ex_3_2(1).validate().is_ok());
        let paper = ExperimentConfig::paper_ex_3_2(1);
        assert_eq!(paper.n_datasets, 100);
        assert_eq!(paper.epochs, 5);
        assert_eq!(paper.n_slabs, 50_000);
        assert_eq!(paper.n_points_lo, 10_000);
        assert_eq!(paper.n_points_hi, 20_000);
        assert_eq!(paper.dc.ell, 0.001);
    }

    #[test]
    fn mini_pipeline_report_shape() {
        let report = run_pipeline(&mini_config(7)).unwrap();
        assert_eq!(report.runs.len(), 6);
        assert_eq!(report.n_failed, 0);
        assert_eq!(report.selected.len(), 3);
        assert!(report.spearman_beta_loss.is_some());
        assert!(report.pearson_beta_loss.is_some());
        // Runs arrive ordered by dataset index.
        for (i, r) in report.runs.iter().enumerate() {
            assert_eq!(r.dataset_index, i);
            assert!(r.final_loss.is_finite());
            assert!((0.0..=1.0).contains(&r.final_accuracy));
            assert!(r.beta_bar >= mini_config(7).dc.ell);
        }
        // Selected indices really are the closest-to-mean half.
        let mean_acc = report.mean_accuracy;
        let worst_selected = report
            .selected
            .iter()
            .map(|&i| (report.runs[i].final_accuracy - mean_acc).abs())
            .fold(0.0f64, f64::max);
        let best_unselected = report
            .runs
            .iter()
            .filter(|r| report.selected.binary_search(&r.dataset_index).is_err())
            .map(|r| (r.final_accuracy - mean_acc).abs())
            .fold(f64::INFINITY, f64::min);
        assert!(worst_selected <= best_unselected);
    }

    #[test]
    fn pipeline_is_deterministic_across_pool_sizes() {
        let cfg = mini_config(11);
        parallel::set_thread_override(Some(1));
        let a = run_pipeline(&cfg).unwrap();
        parallel::set_thread_override(Some(4));
        let b = run_pipeline(&cfg).unwrap();
        parallel::set_thread_override(None);
        assert_eq!(a.runs.len(), b.runs.len());
        for (ra, rb) in a.runs.iter().zip(&b.runs) {
            assert_eq!(ra.n_points, rb.n_points);
            assert_eq!(ra.final_loss.to_bits(), rb.final_loss.to_bits());
            assert_eq!(ra.final_accuracy.to_bits(), rb.final_accuracy.to_bits());
            assert_eq!(ra.beta_bar.to_bits(), rb.beta_bar.to_bits());
        }
        assert_eq!(a.selected, b.selected);
    }

    #[test]
    fn single_dataset_has_undefined_correlation() {
        let cfg = ExperimentConfig {
            n_datasets: 1,
            ..mini_config(3)
        };
        let report = run_pipeline(&cfg).unwrap();
        assert_eq!(report.runs.len(), 1);
        assert_eq!(report.selected, vec![0]);
        assert!(report.spearman_beta_loss.is_none());
        assert!(report.pearson_beta_loss.is_none());
    }

    #[test]
    fn failed_datasets_are_skipped_and_counted() {
        let ok = |i: usize, acc: f64, beta: f64, loss: f64| RunRecord {
            dataset_index: i,
            n_points: 100,
            final_loss: loss,
            final_accuracy: acc,
            beta_bar: beta,
            mean_steps: 1.0,
        };
        let outcomes = vec![
            (0, Ok(ok(0, 0.90, 0.004, 0.30))),
            (1, Err(crate::error::DgError::NonFiniteLoss { epoch: 1 })),
            (2, Ok(ok(2, 0.85, 0.002, 0.45))),
            (3, Ok(ok(3, 0.60, 0.001, 0.70))),
        ];
        let report = aggregate(outcomes).unwrap();
        assert_eq!(report.n_failed, 1);
        assert_eq!(
            report.runs.iter().map(|r| r.dataset_index).collect::<Vec<_>>(),
            vec![0, 2, 3]
        );
        // Mean accuracy (0.90+0.85+0.60)/3 ≈ 0.7833; the two closest are
        // datasets 0 and 2.
        assert_eq!(report.selected, vec![0, 2]);
        // β̄ 0.004 ↔ loss 0.30, β̄ 0.002 ↔ loss 0.45: perfectly anti-ranked.
        approx::assert_abs_diff_eq!(
            report.spearman_beta_loss.unwrap(),
            -1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn all_datasets_failing_is_a_clean_error() {
        // A huge step overflows the forward pass on every dataset; the
        // pipeline must surface one error instead of panicking.
        let cfg = ExperimentConfig {
            optimizer: OptimizerKind::Sgd { lr: 1e300 },
            batch: BatchMode::Full,
            ..mini_config(5)
        };
        let err = run_pipeline(&cfg).unwrap_err();
        assert!(err.to_string().contains("every dataset failed"));
    }

    #[test]
    fn runs_csv_round_trips_row_count() {
        let report = run_pipeline(&mini_config(13)).unwrap();
        let mut buf = Vec::new();
        report.write_runs_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), report.runs.len() + 1);
        assert!(text.starts_with(
            "dataset_index,n_points,final_loss,final_accuracy,beta_bar,mean_steps"
        ));
        let mut pairs_buf = Vec::new();
        report.write_selected_pairs_csv(&mut pairs_buf).unwrap();
        let pairs_text = String::from_utf8(pairs_buf).unwrap();
        assert_eq!(
            pairs_text.lines().count(),
            report.selected.len() + 1
        );
    }
}
