//! `dg pipeline`: generate datasets of varying size, train a small
//! network on each, scan doubling behaviour, and correlate the mean
//! final scan width with training loss.

use std::path::Path;

use dg_core::error::Result;
use dg_core::experiment::{run_pipeline, ExperimentConfig};
use serde::Serialize;

use crate::config::FileConfig;
use crate::manifest::{print_json, Manifest};
use crate::plot::Scatter;

#[derive(Debug, clap::Args)]
pub struct PipelineArgs {
    /// Preset: `desk` (default) or `paper-ex-3.2`.
    #[arg(long)]
    preset: Option<String>,
    /// Number of independent datasets.
    #[arg(long)]
    n_datasets: Option<usize>,
    /// Smallest dataset size.
    #[arg(long)]
    points_lo: Option<usize>,
    /// Largest dataset size.
    #[arg(long)]
    points_hi: Option<usize>,
    /// Degree of the polynomial decision boundary.
    #[arg(long)]
    degree: Option<usize>,
    /// Training epochs per dataset.
    #[arg(long)]
    epochs: Option<usize>,
    /// Slabs sampled per dataset in the doubling scan.
    #[arg(long)]
    slabs: Option<usize>,
    /// Master seed; every per-dataset stream is derived from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Smallest scan width ℓ.
    #[arg(long)]
    ell: Option<f64>,
}

#[derive(Serialize)]
struct PipelineSummary {
    n_runs: usize,
    n_failed: usize,
    mean_accuracy: f64,
    spearman_beta_loss: Option<f64>,
    pearson_beta_loss: Option<f64>,
}

pub fn run(cfg: &FileConfig, out: &Path, args: &PipelineArgs) -> Result<()> {
    let s = cfg.section("pipeline");
    let preset = s.or("preset", args.preset.clone(), "desk".to_string())?;
    let seed = s.or("seed", args.seed, 0)?;
    let mut config = match preset.as_str() {
        "desk" => ExperimentConfig::desk(seed),
        "paper-ex-3.2" => ExperimentConfig::paper_ex_3_2(seed),
        other => {
            return Err(dg_core::error::DgError::invalid(
                "preset",
                format!("expected `desk` or `paper-ex-3.2`, got `{other}`"),
            ))
        }
    };
    config.n_datasets = s.or("n-datasets", args.n_datasets, config.n_datasets)?;
    config.n_points_lo = s.or("points-lo", args.points_lo, config.n_points_lo)?;
    config.n_points_hi = s.or("points-hi", args.points_hi, config.n_points_hi)?;
    config.degree = s.or("degree", args.degree, config.degree)?;
    config.epochs = s.or("epochs", args.epochs, config.epochs)?;
    config.n_slabs = s.or("slabs", args.slabs, config.n_slabs)?;
    config.dc.ell = s.or("ell", args.ell, config.dc.ell)?;

    let report = run_pipeline(&config)?;

    let mut manifest = Manifest::create(out, "pipeline", &config)?;
    let mut runs_csv = Vec::new();
    report.write_runs_csv(&mut runs_csv)?;
    manifest.write_text(
        "runs.csv",
        std::str::from_utf8(&runs_csv).expect("CSV output is ASCII"),
    )?;
    let mut pairs_csv = Vec::new();
    report.write_selected_pairs_csv(&mut pairs_csv)?;
    manifest.write_text(
        "pairs.csv",
        std::str::from_utf8(&pairs_csv).expect("CSV output is ASCII"),
    )?;
    Scatter {
        title: "Training loss vs mean final width".to_string(),
        x_label: "mean final width".to_string(),
        y_label: "final training loss".to_string(),
        points: report.selected_pairs(),
    }
    .write(&mut manifest, "scatter")?;
    let report_json = serde_json::to_string_pretty(&report)
        .map_err(|e| dg_core::error::DgError::Io(std::io::Error::other(e)))?;
    manifest.write_text("report.json", &(report_json + "\n"))?;
    manifest.finish()?;

    if report.spearman_beta_loss.is_none() {
        log::warn!("fewer than two selected runs; correlation undefined");
        eprintln!("warning: correlation undefined (fewer than two selected runs)");
    }
    print_json(&PipelineSummary {
        n_runs: report.runs.len(),
        n_failed: report.n_failed,
        mean_accuracy: report.mean_accuracy,
        spearman_beta_loss: report.spearman_beta_loss,
        pearson_beta_loss: report.pearson_beta_loss,
    })
}
