//! `dg report`: re-plot a finished pipeline's per-run table as training-set
//! size versus mean final width.

use std::fs;
use std::path::Path;

use dg_core::dataset::fmt_f64;
use dg_core::error::{DgError, Result};
use serde::Serialize;

use crate::config::FileConfig;
use crate::manifest::{print_json, Manifest};
use crate::plot::Scatter;

#[derive(Debug, clap::Args)]
pub struct ReportArgs {
    /// Per-run CSV written by `dg pipeline` (runs.csv).
    #[arg(long)]
    runs: Option<String>,
}

const RUNS_HEADER: &str = "dataset_index,n_points,final_loss,final_accuracy,beta_bar,mean_steps";

fn parse_runs(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == RUNS_HEADER => {}
        Some((_, header)) => {
            return Err(DgError::Parse {
                line: 1,
                message: format!("expected header `{RUNS_HEADER}`, got `{header}`"),
            })
        }
        None => {
            return Err(DgError::Parse {
                line: 1,
                message: "empty runs file".to_string(),
            })
        }
    }
    let mut points = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(DgError::Parse {
                line: line_no,
                message: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        let field = |i: usize, name: &str| -> Result<f64> {
            fields[i].trim().parse::<f64>().map_err(|e| DgError::Parse {
                line: line_no,
                message: format!("bad {name} `{}`: {e}", fields[i]),
            })
        };
        points.push((field(1, "n_points")?, field(4, "beta_bar")?));
    }
    Ok(points)
}

#[derive(Serialize)]
struct ReportSummary {
    n_runs: usize,
    figure: String,
}

pub fn run(cfg: &FileConfig, out: &Path, args: &ReportArgs) -> Result<()> {
    let s = cfg.section("report");
    let runs_path = s.required("runs", args.runs.clone())?;
    let text = fs::read_to_string(Path::new(&runs_path))?;
    let points = parse_runs(&text)?;
    let n_runs = points.len();

    let mut manifest = Manifest::create(out, "report", &runs_path)?;
    let mut csv = String::from("n_points,beta_bar\n");
    for (n, b) in &points {
        csv.push_str(&format!("{},{}\n", fmt_f64(*n), fmt_f64(*b)));
    }
    manifest.write_text("points_vs_beta.csv", &csv)?;
    Scatter {
        title: "Mean final width vs training-set size".to_string(),
        x_label: "number of elements in the training set".to_string(),
        y_label: "mean final width".to_string(),
        points,
    }
    .write(&mut manifest, "points_vs_beta")?;
    manifest.finish()?;
    print_json(&ReportSummary {
        n_runs,
        figure: "points_vs_beta.svg".to_string(),
    })
}
