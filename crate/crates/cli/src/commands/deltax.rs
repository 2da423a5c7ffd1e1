//! `dg deltax`: evaluate the classification-confidence distribution δX of
//! a trained model on a dataset, optionally checking a doubling condition
//! on it.

use std::path::Path;

use dg_core::dataset::{self, fmt_f64};
use dg_core::doubling::{check_nonuniform_dc_deltax, check_uniform_dc_deltax, DcVerdict};
use dg_core::error::{DgError, Result};
use dg_core::network::{delta_x_distribution, load_checkpoint};
use serde::Serialize;

use crate::commands::DcFlags;
use crate::config::FileConfig;
use crate::manifest::{print_json, Manifest};

#[derive(Debug, clap::Args)]
pub struct DeltaxArgs {
    /// Model checkpoint.
    #[arg(long)]
    model: Option<String>,
    /// Dataset CSV.
    #[arg(long)]
    data: Option<String>,
    /// Doubling-condition check on δX: `none`, `uniform`, or `nonuniform`.
    #[arg(long)]
    check: Option<String>,
    /// Margin for good/bad-mass reporting.
    #[arg(long)]
    eta: Option<f64>,
    /// δX CSV file name.
    #[arg(long)]
    csv: Option<String>,
    #[command(flatten)]
    dc: DcFlags,
}

#[derive(Debug, Serialize)]
struct Resolved {
    model: String,
    data: String,
    check: String,
    eta: Option<f64>,
    csv: String,
    dc: dg_core::doubling::DoublingParams,
}

#[derive(Serialize)]
struct Summary<'a> {
    n: usize,
    accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    good_mass_eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bad_mass_eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    check: Option<&'a DcVerdict>,
}

pub fn run(cfg: &FileConfig, out: &Path, args: &DeltaxArgs) -> Result<()> {
    let s = cfg.section("deltax");
    let resolved = Resolved {
        model: s.required("model", args.model.clone())?,
        data: s.required("data", args.data.clone())?,
        check: s.or("check", args.check.clone(), "none".to_string())?,
        eta: s.opt("eta", args.eta)?,
        csv: s.or("csv", args.csv.clone(), "deltax.csv".to_string())?,
        dc: args.dc.resolve(&s)?,
    };

    let model = load_checkpoint(Path::new(&resolved.model))?;
    let ds = dataset::load(Path::new(&resolved.data))?;
    let dist = delta_x_distribution(&model, &ds)?;
    let pairs = dist.pairs();

    let verdict = match resolved.check.as_str() {
        "none" => None,
        "uniform" => Some(check_uniform_dc_deltax(&pairs, &resolved.dc)?),
        "nonuniform" => Some(check_nonuniform_dc_deltax(&pairs, &resolved.dc)?),
        other => {
            return Err(DgError::invalid(
                "check",
                format!("expected `none`, `uniform`, or `nonuniform`, got `{other}`"),
            ))
        }
    };

    let mut manifest = Manifest::create(out, "deltax", &resolved)?;
    let mut csv = String::from("value,weight\n");
    for (v, w) in &pairs {
        csv.push_str(&format!("{},{}\n", fmt_f64(*v), fmt_f64(*w)));
    }
    manifest.write_text(&resolved.csv, &csv)?;
    manifest.finish()?;

    print_json(&Summary {
        n: pairs.len(),
        accuracy: dist.accuracy(),
        good_mass_eta: resolved.eta.map(|eta| dist.good_mass(eta)),
        bad_mass_eta: resolved.eta.map(|eta| dist.bad_mass(eta)),
        check: verdict.as_ref(),
    })
}
