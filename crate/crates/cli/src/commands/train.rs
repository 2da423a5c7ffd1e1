//! `dg train`: train a fresh network on a dataset CSV; emit the per-epoch
//! trace and a model checkpoint.

use std::path::Path;

use dg_core::dataset;
use dg_core::error::{DgError, Result};
use dg_core::network::{
    save_checkpoint, train, ActivationKind, BatchMode, MlpModel, OptimizerKind, TrainOptions,
};
use serde::Serialize;

use crate::config::FileConfig;
use crate::manifest::{print_json, Manifest};

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// Dataset CSV to train on.
    #[arg(long)]
    data: Option<String>,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Seed for weight init (shuffling uses seed+1).
    #[arg(long)]
    seed: Option<u64>,
    /// Number of hidden layers.
    #[arg(long)]
    hidden_layers: Option<usize>,
    /// Width of each hidden layer.
    #[arg(long)]
    hidden_width: Option<usize>,
    /// Activation: `abs` or `leaky`.
    #[arg(long)]
    activation: Option<String>,
    /// Left slope for the leaky activation.
    #[arg(long)]
    alpha: Option<f64>,
    /// Optimizer: `adam` or `sgd`.
    #[arg(long)]
    optimizer: Option<String>,
    /// Learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Minibatch size, or `full` for full-batch steps.
    #[arg(long)]
    batch: Option<String>,
    /// Softmax base of the loss (defaults to e).
    #[arg(long)]
    base: Option<f64>,
    /// Trace CSV file name.
    #[arg(long)]
    trace: Option<String>,
    /// Checkpoint file name.
    #[arg(long)]
    model: Option<String>,
}

#[derive(Debug, Serialize)]
struct Resolved {
    data: String,
    epochs: usize,
    seed: u64,
    hidden_layers: usize,
    hidden_width: usize,
    activation: String,
    alpha: f64,
    optimizer: String,
    lr: f64,
    batch: String,
    base: f64,
    trace: String,
    model: String,
}

#[derive(Serialize)]
struct Summary<'a> {
    final_loss: f64,
    final_accuracy: f64,
    epochs: usize,
    trace: &'a str,
    model: &'a str,
}

pub fn parse_activation(name: &str, alpha: f64) -> Result<ActivationKind> {
    match name {
        "abs" => Ok(ActivationKind::Abs),
        "leaky" => Ok(ActivationKind::LeakyRelu(alpha)),
        other => Err(DgError::invalid(
            "activation",
            format!("expected `abs` or `leaky`, got `{other}`"),
        )),
    }
}

pub fn parse_optimizer(name: &str, lr: f64) -> Result<OptimizerKind> {
    match name {
        "adam" => Ok(OptimizerKind::adam(lr)),
        "sgd" => Ok(OptimizerKind::Sgd { lr }),
        other => Err(DgError::invalid(
            "optimizer",
            format!("expected `adam` or `sgd`, got `{other}`"),
        )),
    }
}

pub fn parse_batch(text: &str) -> Result<BatchMode> {
    if text == "full" {
        return Ok(BatchMode::Full);
    }
    text.parse::<usize>()
        .map(|size| BatchMode::Minibatch { size })
        .map_err(|_| {
            DgError::invalid(
                "batch",
                format!("expected `full` or a positive integer, got `{text}`"),
            )
        })
}

pub fn run(cfg: &FileConfig, out: &Path, args: &TrainArgs) -> Result<()> {
    let s = cfg.section("train");
    let resolved = Resolved {
        data: s.required("data", args.data.clone())?,
        epochs: s.or("epochs", args.epochs, 5)?,
        seed: s.or("seed", args.seed, 0)?,
        hidden_layers: s.or("hidden-layers", args.hidden_layers, 2)?,
        hidden_width: s.or("hidden-width", args.hidden_width, 32)?,
        activation: s.or("activation", args.activation.clone(), "leaky".to_string())?,
        alpha: s.or("alpha", args.alpha, 0.01)?,
        optimizer: s.or("optimizer", args.optimizer.clone(), "adam".to_string())?,
        lr: s.or("lr", args.lr, 1e-2)?,
        batch: s.or("batch", args.batch.clone(), "32".to_string())?,
        base: s.or("base", args.base, std::f64::consts::E)?,
        trace: s.or("trace", args.trace.clone(), "trace.csv".to_string())?,
        model: s.or("model", args.model.clone(), "model.ckpt".to_string())?,
    };

    let ds = dataset::load(Path::new(&resolved.data))?;
    let mut dims = vec![ds.dim()];
    dims.extend(std::iter::repeat(resolved.hidden_width).take(resolved.hidden_layers));
    dims.push(ds.k());

    let activation = parse_activation(&resolved.activation, resolved.alpha)?;
    let mut model = MlpModel::init(&dims, activation, resolved.seed)?;
    let report = train(
        &mut model,
        &ds,
        &TrainOptions {
            epochs: resolved.epochs,
            optimizer: parse_optimizer(&resolved.optimizer, resolved.lr)?,
            batch: parse_batch(&resolved.batch)?,
            softmax_base: resolved.base,
            seed: resolved.seed.wrapping_add(1),
        },
    )?;

    let mut manifest = Manifest::create(out, "train", &resolved)?;
    let mut trace_buf = Vec::new();
    report.write_csv(&mut trace_buf)?;
    manifest.write_text(&resolved.trace, &String::from_utf8(trace_buf).expect("csv is utf-8"))?;
    save_checkpoint(&model, &manifest.out_dir().join(&resolved.model))?;
    manifest.record(&resolved.model);
    manifest.finish()?;

    print_json(&Summary {
        final_loss: report.final_loss(),
        final_accuracy: report.final_accuracy(),
        epochs: resolved.epochs,
        trace: &resolved.trace,
        model: &resolved.model,
    })
}
