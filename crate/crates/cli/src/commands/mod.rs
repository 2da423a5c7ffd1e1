//! One module per subcommand; each resolves its settings (flag → config
//! file → default), runs the corresponding library call, writes artifacts
//! plus `manifest.json` under the output directory, and prints a JSON
//! summary to stdout.

pub mod constants;
pub mod deltax;
pub mod gen_data;
pub mod pipeline;
pub mod propagate;
pub mod report;
pub mod sudc;
pub mod train;

use dg_core::doubling::DoublingParams;
use dg_core::error::{DgError, Result};

/// Comma-separated float list (`"2,3,4"`).
pub fn parse_f64_list(text: &str, what: &'static str) -> Result<Vec<f64>> {
    text.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| DgError::invalid(what, format!("cannot parse `{t}` as a number")))
        })
        .collect()
}

/// Shared doubling-parameter flags with the scan defaults
/// (κ=2, σ=0.9, δ=1, ℓ=0.001, β=1, m₀=0).
#[derive(Debug, Clone, clap::Args)]
pub struct DcFlags {
    /// Doubling constant κ.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Growth factor σ.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Mass cap δ.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Smallest scale ℓ.
    #[arg(long)]
    pub ell: Option<f64>,
    /// Largest width β.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Residual mass m₀ (non-uniform checks only).
    #[arg(long)]
    pub m0: Option<f64>,
}

impl DcFlags {
    /// Resolve against a config section using the scan defaults.
    pub fn resolve(&self, section: &crate::config::Resolve<'_>) -> Result<DoublingParams> {
        Ok(DoublingParams {
            kappa: section.or("kappa", self.kappa, 2.0)?,
            sigma: section.or("sigma", self.sigma, 0.9)?,
            delta: section.or("delta", self.delta, 1.0)?,
            ell: section.or("ell", self.ell, 0.001)?,
            beta: section.or("beta", self.beta, 1.0)?,
            m0: section.or("m0", self.m0, 0.0)?,
        })
    }
}
