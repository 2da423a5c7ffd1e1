//! `dg sudc`: run the slab width scan on a dataset and report β̄.

use std::path::Path;

use dg_core::dataset;
use dg_core::doubling::{sudc_scan_with_mode, SlabSampler, SudcMode};
use dg_core::error::{DgError, Result};
use serde::Serialize;

use crate::commands::DcFlags;
use crate::config::FileConfig;
use crate::manifest::{print_json, Manifest};

#[derive(Debug, clap::Args)]
pub struct SudcArgs {
    /// Dataset CSV to scan.
    #[arg(long)]
    data: Option<String>,
    /// Number of slabs.
    #[arg(long)]
    slabs: Option<usize>,
    /// Slab-sampling seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Counting mode: `raw-count` or `mass-weighted`.
    #[arg(long)]
    mode: Option<String>,
    /// Per-slab CSV file name.
    #[arg(long)]
    csv: Option<String>,
    #[command(flatten)]
    dc: DcFlags,
}

#[derive(Debug, Serialize)]
struct Resolved {
    data: String,
    slabs: usize,
    seed: u64,
    mode: String,
    csv: String,
    dc: dg_core::doubling::DoublingParams,
}

fn parse_mode(text: &str) -> Result<SudcMode> {
    match text {
        "raw-count" => Ok(SudcMode::RawCount),
        "mass-weighted" => Ok(SudcMode::MassWeighted),
        other => Err(DgError::invalid(
            "mode",
            format!("expected `raw-count` or `mass-weighted`, got `{other}`"),
        )),
    }
}

pub fn run(cfg: &FileConfig, out: &Path, args: &SudcArgs) -> Result<()> {
    let s = cfg.section("sudc");
    let resolved = Resolved {
        data: s.required("data", args.data.clone())?,
        slabs: s.or("slabs", args.slabs, 2000)?,
        seed: s.or("seed", args.seed, 0)?,
        mode: s.or("mode", args.mode.clone(), "raw-count".to_string())?,
        csv: s.or("csv", args.csv.clone(), "sudc.csv".to_string())?,
        dc: args.dc.resolve(&s)?,
    };
    let mode = parse_mode(&resolved.mode)?;

    let ds = dataset::load(Path::new(&resolved.data))?;
    let sampler = SlabSampler::new(resolved.slabs, resolved.seed);
    let report = sudc_scan_with_mode(&ds, &sampler, &resolved.dc, mode)?;

    let mut manifest = Manifest::create(out, "sudc", &resolved)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    manifest.write_text(&resolved.csv, &String::from_utf8(buf).expect("csv is utf-8"))?;
    manifest.finish()?;

    // Aggregates only; per-slab rows are in the CSV.
    print_json(&report)
}
