//! `dg constants`: evaluate the stability-of-accuracy constants, derived
//! bounds, and theorem-precondition checks.

use std::path::Path;

use dg_core::constants::{
    acc_bound_from_loss, c1, c2, c3, check_theorem_preconditions, eta_star_tail_bound,
    tail_loss_floor, C1Params, C2Inputs, C3Params, PreconditionInputs, TheoremKind,
};
use dg_core::dataset::fmt_f64;
use dg_core::error::{DgError, Result};
use serde::Serialize;

use crate::commands::parse_f64_list;
use crate::config::FileConfig;
use crate::manifest::{print_json, Manifest};

const LN_2: f64 = std::f64::consts::LN_2;

#[derive(Debug, clap::Subcommand)]
pub enum ConstantsCmd {
    /// Residual-mass constant C₁.
    C1 {
        /// Exponent γ ∈ (0, min{1, ln(1+σ)/ln κ}].
        #[arg(long)]
        gamma: Option<f64>,
        /// Margin η.
        #[arg(long)]
        eta: Option<f64>,
        /// Number of classes.
        #[arg(long = "K")]
        k_classes: Option<usize>,
        /// Doubling constant κ.
        #[arg(long)]
        kappa: Option<f64>,
        /// Growth factor σ.
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Slab-condition constant C₂ (maximized over ξ).
    C2 {
        /// Margin η.
        #[arg(long)]
        eta: Option<f64>,
        /// Number of classes.
        #[arg(long = "K")]
        k_classes: Option<usize>,
        /// Doubling constant κ.
        #[arg(long)]
        kappa: Option<f64>,
        /// Growth factor σ.
        #[arg(long)]
        sigma: Option<f64>,
        /// Good-set deficit δ₀.
        #[arg(long)]
        delta0: Option<f64>,
        /// Smallest training-set scale ℓ.
        #[arg(long)]
        ell: Option<f64>,
        /// Squared smallest relevant singular value.
        #[arg(long)]
        dmin: Option<f64>,
        /// Squared largest singular value.
        #[arg(long)]
        dmax: Option<f64>,
        /// Softmax base (defaults to e).
        #[arg(long)]
        base: Option<f64>,
        /// Override the lower end of the ξ range.
        #[arg(long)]
        xi_lo: Option<f64>,
        /// Override the upper end of the ξ range.
        #[arg(long)]
        xi_hi: Option<f64>,
        /// Largest width β; reports whether η ≤ d_min·β/2.
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Margin-condition constant C₃.
    C3 {
        /// Margin η.
        #[arg(long)]
        eta: Option<f64>,
        /// Number of classes.
        #[arg(long = "K")]
        k_classes: Option<usize>,
        /// Doubling constant κ.
        #[arg(long)]
        kappa: Option<f64>,
        /// Growth factor σ.
        #[arg(long)]
        sigma: Option<f64>,
        /// Smallest scale ℓ.
        #[arg(long)]
        ell: Option<f64>,
        /// Bad-set margin ξ (must equal ℓ·κ^i).
        #[arg(long)]
        xi: Option<f64>,
        /// Good-set deficit δ₀.
        #[arg(long)]
        delta0: Option<f64>,
        /// Softmax base (defaults to e).
        #[arg(long)]
        base: Option<f64>,
        /// Comma-separated softmax bases to sweep into `sweep.csv`.
        #[arg(long)]
        sweep_base: Option<String>,
    },
    /// Bounds implied by a loss, a target slack, or a tail mass.
    Bounds {
        /// Observed loss, for the accuracy lower bound.
        #[arg(long)]
        loss: Option<f64>,
        /// Accuracy slack ε, for the confident-mass bound.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Confidence margin η*.
        #[arg(long)]
        eta_star: Option<f64>,
        /// Mass outside the confident set, for the loss floor.
        #[arg(long)]
        tail_mass: Option<f64>,
        /// Softmax base (defaults to e).
        #[arg(long)]
        base: Option<f64>,
    },
    /// Check every hypothesis of one stability statement.
    Preconditions {
        /// Statement: `slab`, `margin`, or `residual-margin`.
        #[arg(long)]
        theorem: Option<String>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        xi: Option<f64>,
        #[arg(long)]
        delta0: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        ell: Option<f64>,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long = "K")]
        k_classes: Option<usize>,
        #[arg(long)]
        base: Option<f64>,
        #[arg(long)]
        dmin: Option<f64>,
        #[arg(long)]
        dmax: Option<f64>,
        #[arg(long)]
        m0: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        good_mass_eta: Option<f64>,
        #[arg(long)]
        bad_mass_xi: Option<f64>,
        #[arg(long)]
        bad_mass_one: Option<f64>,
    },
}

#[derive(Serialize)]
struct ConstantSummary {
    constant: f64,
    loss_bound: f64,
    acc_lower_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    xi_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta_within_half_beta: Option<bool>,
}

impl ConstantSummary {
    fn from_constant(c: f64) -> Self {
        Self {
            constant: c,
            loss_bound: LN_2 * c,
            acc_lower_bound: 1.0 - c,
            xi_star: None,
            eta_within_half_beta: None,
        }
    }
}

fn parse_theorem(text: &str) -> Result<TheoremKind> {
    match text {
        "slab" | "slab-stability" => Ok(TheoremKind::SlabStability),
        "margin" | "margin-stability" => Ok(TheoremKind::MarginStability),
        "residual-margin" | "residual-margin-stability" => {
            Ok(TheoremKind::ResidualMarginStability)
        }
        other => Err(DgError::invalid(
            "theorem",
            format!("expected `slab`, `margin`, or `residual-margin`, got `{other}`"),
        )),
    }
}

pub fn run(cfg: &FileConfig, out: &Path, cmd: &ConstantsCmd) -> Result<()> {
    let s = cfg.section("constants");
    match cmd {
        ConstantsCmd::C1 {
            gamma,
            eta,
            k_classes,
            kappa,
            sigma,
        } => {
            let params = C1Params {
                gamma: s.required("gamma", *gamma)?,
                eta: s.required("eta", *eta)?,
                k_classes: s.required("K", *k_classes)?,
                kappa: s.required("kappa", *kappa)?,
                sigma: s.required("sigma", *sigma)?,
            };
            let value = c1(&params)?;
            let manifest = Manifest::create(out, "constants-c1", &params)?;
            manifest.finish()?;
            #[derive(Serialize)]
            struct C1Summary {
                constant: f64,
                log2_constant: f64,
            }
            print_json(&C1Summary {
                constant: value,
                log2_constant: value.log2(),
            })
        }
        ConstantsCmd::C2 {
            eta,
            k_classes,
            kappa,
            sigma,
            delta0,
            ell,
            dmin,
            dmax,
            base,
            xi_lo,
            xi_hi,
            beta,
        } => {
            let inputs = C2Inputs {
                eta: s.required("eta", *eta)?,
                k_classes: s.required("K", *k_classes)?,
                kappa: s.required("kappa", *kappa)?,
                sigma: s.required("sigma", *sigma)?,
                delta0: s.required("delta0", *delta0)?,
                ell: s.required("ell", *ell)?,
                d_min: s.required("dmin", *dmin)?,
                d_max: s.required("dmax", *dmax)?,
                softmax_base: s.or("base", *base, std::f64::consts::E)?,
                xi_lo: s.opt("xi-lo", *xi_lo)?,
                xi_hi: s.opt("xi-hi", *xi_hi)?,
                beta: s.opt("beta", *beta)?,
            };
            let result = c2(&inputs)?;
            let manifest = Manifest::create(out, "constants-c2", &inputs)?;
            manifest.finish()?;
            print_json(&ConstantSummary {
                xi_star: Some(result.xi_star),
                eta_within_half_beta: result.eta_within_half_beta,
                ..ConstantSummary::from_constant(result.value)
            })
        }
        ConstantsCmd::C3 {
            eta,
            k_classes,
            kappa,
            sigma,
            ell,
            xi,
            delta0,
            base,
            sweep_base,
        } => {
            let params = C3Params {
                eta: s.required("eta", *eta)?,
                k_classes: s.required("K", *k_classes)?,
                kappa: s.required("kappa", *kappa)?,
                sigma: s.required("sigma", *sigma)?,
                ell: s.required("ell", *ell)?,
                xi: s.required("xi", *xi)?,
                delta0: s.required("delta0", *delta0)?,
                softmax_base: s.or("base", *base, std::f64::consts::E)?,
            };
            let value = c3(&params)?;
            let mut manifest = Manifest::create(out, "constants-c3", &params)?;

            let sweep = s.opt("sweep-base", sweep_base.clone())?;
            if let Some(list) = sweep {
                let bases = parse_f64_list(&list, "sweep-base")?;
                let mut csv = String::from("param,value,C,loss_bound,acc_bound\n");
                for b in bases {
                    let c = c3(&C3Params {
                        softmax_base: b,
                        ..params
                    })?;
                    csv.push_str(&format!(
                        "base,{},{},{},{}\n",
                        fmt_f64(b),
                        fmt_f64(c),
                        fmt_f64(LN_2 * c),
                        fmt_f64(1.0 - c)
                    ));
                }
                manifest.write_text("sweep.csv", &csv)?;
            }
            manifest.finish()?;
            print_json(&ConstantSummary::from_constant(value))
        }
        ConstantsCmd::Bounds {
            loss,
            epsilon,
            eta_star,
            tail_mass,
            base,
        } => {
            let loss = s.opt("loss", *loss)?;
            let epsilon = s.opt("epsilon", *epsilon)?;
            let eta_star = s.opt("eta-star", *eta_star)?;
            let tail_mass = s.opt("tail-mass", *tail_mass)?;
            let base = s.or("base", *base, std::f64::consts::E)?;

            #[derive(Serialize)]
            struct BoundsSummary {
                #[serde(skip_serializing_if = "Option::is_none")]
                acc_lower_bound: Option<f64>,
                #[serde(skip_serializing_if = "Option::is_none")]
                confident_mass_bound: Option<f64>,
                #[serde(skip_serializing_if = "Option::is_none")]
                loss_floor: Option<f64>,
            }
            let summary = BoundsSummary {
                acc_lower_bound: loss.map(acc_bound_from_loss).transpose()?,
                confident_mass_bound: match (epsilon, eta_star) {
                    (Some(e), Some(h)) => Some(eta_star_tail_bound(e, h)?),
                    _ => None,
                },
                loss_floor: match (tail_mass, eta_star) {
                    (Some(t), Some(h)) => Some(tail_loss_floor(t, h, base)?),
                    _ => None,
                },
            };
            if summary.acc_lower_bound.is_none()
                && summary.confident_mass_bound.is_none()
                && summary.loss_floor.is_none()
            {
                return Err(DgError::MissingInputs {
                    missing: vec!["loss", "epsilon+eta-star", "tail-mass+eta-star"],
                });
            }
            let manifest = Manifest::create(
                out,
                "constants-bounds",
                &(loss, epsilon, eta_star, tail_mass, base),
            )?;
            manifest.finish()?;
            print_json(&summary)
        }
        ConstantsCmd::Preconditions {
            theorem,
            eta,
            xi,
            delta0,
            delta,
            beta,
            ell,
            kappa,
            sigma,
            k_classes,
            base,
            dmin,
            dmax,
            m0,
            epsilon,
            gamma,
            good_mass_eta,
            bad_mass_xi,
            bad_mass_one,
        } => {
            let kind = parse_theorem(&s.required("theorem", theorem.clone())?)?;
            let inputs = PreconditionInputs {
                eta: s.opt("eta", *eta)?,
                xi: s.opt("xi", *xi)?,
                delta0: s.opt("delta0", *delta0)?,
                delta: s.opt("delta", *delta)?,
                beta: s.opt("beta", *beta)?,
                ell: s.opt("ell", *ell)?,
                kappa: s.opt("kappa", *kappa)?,
                sigma: s.opt("sigma", *sigma)?,
                k_classes: s.opt("K", *k_classes)?,
                softmax_base: s.opt("base", *base)?,
                d_min: s.opt("dmin", *dmin)?,
                d_max: s.opt("dmax", *dmax)?,
                m0: s.opt("m0", *m0)?,
                epsilon: s.opt("epsilon", *epsilon)?,
                gamma: s.opt("gamma", *gamma)?,
                good_mass_eta: s.opt("good-mass-eta", *good_mass_eta)?,
                bad_mass_xi: s.opt("bad-mass-xi", *bad_mass_xi)?,
                bad_mass_one: s.opt("bad-mass-one", *bad_mass_one)?,
            };
            let report = check_theorem_preconditions(kind, &inputs)?;
            let mut manifest = Manifest::create(out, "constants-preconditions", &inputs)?;
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| DgError::Io(std::io::Error::other(e)))?;
            manifest.write_text("report.json", &(json + "\n"))?;
            manifest.finish()?;
            print_json(&report)
        }
    }
}
