//! Core library: doubling-condition analysis for classifiers.
//!
//! The crate groups into four layers:
//! - **foundations**: [`error`], [`numeric`], [`parallel`], [`linalg`],
//!   [`geometry`], [`piecewise`];
//! - **data**: [`dataset`] (synthetic polynomial-boundary generator, CSV
//!   persistence);
//! - **analysis**: [`doubling`] (condition checkers and the width scan),
//!   [`constants`] (stability constants and bounds), [`propagation`]
//!   (layer-by-layer condition transport);
//! - **models & experiments**: [`network`] (piecewise-linear multilayer
//!   perceptron), [`stats`], [`experiment`] (the end-to-end pipeline).
//!
//! Determinism contract: every parallel entry point derives per-item RNG
//! streams from a single seed and merges results by item index, so outputs
//! are bit-identical for any worker-pool size (see [`parallel`]).

pub mod constants;
pub mod dataset;
pub mod doubling;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod linalg;
pub mod network;
pub mod numeric;
pub mod parallel;
pub mod piecewise;
pub mod propagation;
pub mod stats;

pub use constants::{
    C1Params, C2Inputs, C2Result, C3Options, C3Params, PreconditionCheck, PreconditionInputs,
    StabilityReport, TheoremKind,
};
pub use dataset::{LabeledDataset, PolyBoundarySpec};
pub use doubling::{
    CenterPolicy, DcFailure, DcVerdict, DoublingParams, NormalPolicy, SlabOutcome, SlabSampler,
    SudcMode, SudcReport,
};
pub use error::{DgError, Result};
pub use geometry::{HalfSpace, Slab, TruncatedSlab};
pub use linalg::{Matrix, Svd};
pub use network::{
    ActivationKind, BatchMode, DeltaXVector, MlpModel, OptimizerKind, TraceRow, TrainOptions,
    TrainReport, TruncationPolicy,
};
pub use piecewise::{AffinePiece, Piecewise1D};
pub use experiment::{DnnPreset, ExperimentConfig, PipelineReport, RunRecord};
pub use propagation::{MapSpec, PredictedConstants, PropagationVerdict, SlabCheckRecord};
