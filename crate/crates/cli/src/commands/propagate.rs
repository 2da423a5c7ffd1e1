//! `dg propagate`: empirically verify how the doubling condition
//! transports through a map (linear, coordinatewise |·|, or a scalar
//! piecewise-linear function).

use std::path::Path;

use dg_core::dataset;
use dg_core::error::{DgError, Result};
use dg_core::linalg::Matrix;
use dg_core::piecewise::Piecewise1D;
use dg_core::propagation::{verify_propagation, MapSpec};
use serde::Serialize;

use crate::commands::{parse_f64_list, DcFlags};
use crate::config::FileConfig;
use crate::manifest::{print_json, Manifest};

#[derive(Debug, clap::Args)]
pub struct PropagateArgs {
    /// Input dataset CSV.
    #[arg(long)]
    data: Option<String>,
    /// Map kind: `linear`, `abs`, or `piecewise`.
    #[arg(long)]
    map: Option<String>,
    /// Matrix for `linear`, rows separated by `;`, entries by `,`.
    #[arg(long)]
    matrix: Option<String>,
    /// Breakpoints for `piecewise` (comma-separated, ascending).
    #[arg(long)]
    breakpoints: Option<String>,
    /// Slopes for `piecewise` (comma-separated, one more than breakpoints).
    #[arg(long)]
    slopes: Option<String>,
    /// Value of the piecewise map at its first breakpoint.
    #[arg(long)]
    value_at_first: Option<f64>,
    /// Coordinate the piecewise map acts on.
    #[arg(long)]
    coord: Option<usize>,
    /// Number of random slabs to test.
    #[arg(long)]
    slabs: Option<usize>,
    /// Seed for slab sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// File name of the violations CSV artifact.
    #[arg(long)]
    csv: Option<String>,
    #[command(flatten)]
    dc: DcFlags,
}

fn parse_matrix(text: &str) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = text
        .split(';')
        .map(|row| parse_f64_list(row, "matrix"))
        .collect::<Result<_>>()?;
    Matrix::from_rows(&rows)
}

#[derive(Serialize)]
struct ResolvedPropagate {
    data: String,
    map: String,
    matrix: Option<String>,
    breakpoints: Option<String>,
    slopes: Option<String>,
    value_at_first: f64,
    coord: usize,
    slabs: usize,
    seed: u64,
    csv: String,
    dc: dg_core::doubling::DoublingParams,
}

pub fn run(cfg: &FileConfig, out: &Path, args: &PropagateArgs) -> Result<()> {
    let s = cfg.section("propagate");
    let resolved = ResolvedPropagate {
        data: s.required("data", args.data.clone())?,
        map: s.required("map", args.map.clone())?,
        matrix: s.opt("matrix", args.matrix.clone())?,
        breakpoints: s.opt("breakpoints", args.breakpoints.clone())?,
        slopes: s.opt("slopes", args.slopes.clone())?,
        value_at_first: s.or("value-at-first", args.value_at_first, 0.0)?,
        coord: s.or("coord", args.coord, 0)?,
        slabs: s.or("slabs", args.slabs, 500)?,
        seed: s.or("seed", args.seed, 0)?,
        csv: s.or("csv", args.csv.clone(), "violations.csv".to_string())?,
        dc: args.dc.resolve(&s)?,
    };

    let map = match resolved.map.as_str() {
        "linear" => {
            let text = resolved.matrix.as_deref().ok_or(DgError::MissingInputs {
                missing: vec!["matrix"],
            })?;
            MapSpec::Linear(parse_matrix(text)?)
        }
        "abs" => MapSpec::Abs,
        "piecewise" => {
            let slopes_text = resolved.slopes.as_deref().ok_or(DgError::MissingInputs {
                missing: vec!["slopes"],
            })?;
            let breakpoints = match resolved.breakpoints.as_deref() {
                Some(text) if !text.trim().is_empty() => parse_f64_list(text, "breakpoints")?,
                _ => vec![0.0],
            };
            MapSpec::Piecewise {
                g: Piecewise1D::new(
                    breakpoints,
                    parse_f64_list(slopes_text, "slopes")?,
                    resolved.value_at_first,
                )?,
                coord: resolved.coord,
            }
        }
        other => {
            return Err(DgError::invalid(
                "map",
                format!("expected `linear`, `abs`, or `piecewise`, got `{other}`"),
            ))
        }
    };

    let ds = dataset::load(Path::new(&resolved.data))?;
    let verdict = verify_propagation(&map, &ds, &resolved.dc, resolved.slabs, resolved.seed)?;

    let mut manifest = Manifest::create(out, "propagate", &resolved)?;
    let mut csv = Vec::new();
    verdict.write_violations_csv(&mut csv)?;
    manifest.write_text(
        &resolved.csv,
        std::str::from_utf8(&csv).expect("CSV output is ASCII"),
    )?;
    manifest.finish()?;
    print_json(&verdict)
}
