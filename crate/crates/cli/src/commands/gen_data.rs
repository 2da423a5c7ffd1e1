//! `dg gen-data`: write a synthetic polynomial-boundary dataset as CSV.

use std::path::Path;

use dg_core::dataset::{self, PolyBoundarySpec};
use dg_core::error::Result;
use serde::Serialize;

use crate::config::FileConfig;
use crate::manifest::{print_json, Manifest};

#[derive(Debug, clap::Args)]
pub struct GenDataArgs {
    /// Polynomial degree of the decision boundary.
    #[arg(long)]
    degree: Option<usize>,
    /// Number of samples.
    #[arg(long)]
    n: Option<usize>,
    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Lower end of the x-range.
    #[arg(long)]
    x_lo: Option<f64>,
    /// Upper end of the x-range.
    #[arg(long)]
    x_hi: Option<f64>,
    /// Vertical distance of each class from the boundary.
    #[arg(long)]
    shift: Option<f64>,
    /// Standard deviation of the y-noise.
    #[arg(long)]
    noise: Option<f64>,
    /// Dataset file name inside the output directory.
    #[arg(long)]
    file: Option<String>,
}

#[derive(Debug, Serialize)]
struct Resolved {
    degree: usize,
    n: usize,
    seed: u64,
    x_lo: f64,
    x_hi: f64,
    shift: f64,
    noise: f64,
    file: String,
}

#[derive(Serialize)]
struct Summary<'a> {
    file: &'a str,
    n: usize,
    dim: usize,
    k: usize,
}

pub fn run(cfg: &FileConfig, out: &Path, args: &GenDataArgs) -> Result<()> {
    let s = cfg.section("gen-data");
    let resolved = Resolved {
        degree: s.or("degree", args.degree, 3)?,
        n: s.or("n", args.n, 1000)?,
        seed: s.or("seed", args.seed, 0)?,
        x_lo: s.or("x-lo", args.x_lo, -1.0)?,
        x_hi: s.or("x-hi", args.x_hi, 1.0)?,
        shift: s.or("shift", args.shift, 0.2)?,
        noise: s.or("noise", args.noise, 0.35)?,
        file: s.or("file", args.file.clone(), "data.csv".to_string())?,
    };

    let ds = dataset::generate_poly_boundary(&PolyBoundarySpec {
        degree: resolved.degree,
        n_samples: resolved.n,
        x_range: (resolved.x_lo, resolved.x_hi),
        vertical_shift: resolved.shift,
        noise_std: resolved.noise,
        seed: resolved.seed,
    })?;

    let mut manifest = Manifest::create(out, "gen-data", &resolved)?;
    dataset::save(&ds, &manifest.out_dir().join(&resolved.file))?;
    manifest.record(&resolved.file);
    manifest.finish()?;

    print_json(&Summary {
        file: &resolved.file,
        n: ds.len(),
        dim: ds.dim(),
        k: ds.k(),
    })
}
