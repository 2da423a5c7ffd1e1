//! Stability-of-accuracy constants, bounds, and precondition checks.
//!
//! Three constants quantify how well a classifier's accuracy is protected
//! once it is high:
//!
//! - [`c3`] — the margin-condition constant. When the margin distribution
//!   δX satisfies the uniform doubling condition at scales `ℓκ^i`, loss
//!   stays below `ln2·C₃` and accuracy above `1 − C₃`.
//! - [`c2`] — the slab-condition constant: the maximum of the same
//!   expression over an interval of ξ values `[d_min·ℓ, d_max·ℓ]` induced
//!   by how a network reshapes widths (`d_min`, `d_max` are the squared
//!   extreme singular values of the end-to-end linear part).
//! - [`c1`] — the older residual-mass constant; much larger, kept for
//!   comparison and for its own precondition set.
//!
//! All exponentials carry an explicit softmax base `b` (the paper-style
//! displays are recovered at `b = e`); the logarithms are natural. Every
//! log term is divided by `ln 2`, which makes the constants invariant to
//! a global change of logarithm base, so this choice is a normalization,
//! not a convention risk.
//!
//! The companion [`check_theorem_preconditions`] evaluates the hypothesis
//! list of each stability statement on user-supplied measurements and
//! reports one named check per hypothesis plus the implied bounds.

use serde::{Deserialize, Serialize};

use crate::error::{DgError, Result};
use crate::numeric::{pow_b, Kahan};

/// Default softmax base for the constants (`e`).
pub const DEFAULT_SOFTMAX_BASE: f64 = std::f64::consts::E;

/// Relative slack when testing that ξ sits on the geometric grid
/// `{ℓκ^i}`.
pub const GRID_TOLERANCE: f64 = 1e-9;

/// Inputs of the margin-condition constant C₃.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct C3Params {
    /// Margin η > 0 defining the good set.
    pub eta: f64,
    /// Number of classes K ≥ 2.
    pub k_classes: usize,
    /// Doubling constant κ > 1.
    pub kappa: f64,
    /// Growth factor σ > 0.
    pub sigma: f64,
    /// Smallest doubling scale ℓ > 0.
    pub ell: f64,
    /// Bad-set margin ξ; must lie on the grid `{ℓκ^i, i ≥ 0}` and be ≤ η.
    pub xi: f64,
    /// Good-set deficit δ₀ ∈ (0, 1).
    pub delta0: f64,
    /// Softmax base b > 1 (use [`DEFAULT_SOFTMAX_BASE`] for `e`).
    pub softmax_base: f64,
}

impl C3Params {
    fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(DgError::invalid("eta", "must be finite and > 0"));
        }
        if self.k_classes < 2 {
            return Err(DgError::invalid("k_classes", "must be ≥ 2"));
        }
        if !(self.kappa > 1.0) || !self.kappa.is_finite() {
            return Err(DgError::invalid("kappa", "must be finite and > 1"));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(DgError::invalid("sigma", "must be finite and > 0"));
        }
        if !(self.ell > 0.0) || !self.ell.is_finite() {
            return Err(DgError::invalid("ell", "must be finite and > 0"));
        }
        if !(self.xi > 0.0) || !self.xi.is_finite() {
            return Err(DgError::invalid("xi", "must be finite and > 0"));
        }
        if !(self.delta0 > 0.0 && self.delta0 < 1.0) {
            return Err(DgError::invalid("delta0", "must lie in (0, 1)"));
        }
        if !(self.softmax_base > 1.0) || !self.softmax_base.is_finite() {
            return Err(DgError::invalid("softmax_base", "must be finite and > 1"));
        }
        if self.xi > self.eta {
            return Err(DgError::invalid("xi", "must not exceed eta"));
        }
        Ok(())
    }
}

/// Which base width generates the tail-sum scales `w·κ^{i+1}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExponentForm {
    /// Scales grow from ℓ (the constant's own derivation; default).
    #[default]
    LemmaEll,
    /// Scales grow from ξ (the form used inside the slab-condition
    /// maximization; identical to `LemmaEll` when ℓ = ξ).
    XiKappa,
}

/// How the tail-sum length `p` is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum PFloorRule {
    /// `p = ⌊ln(η/w₀)/ln κ⌋` — the count of grid scales below η
    /// (default; the geometrically consistent reading).
    #[default]
    LogKappa,
    /// `p = ⌊ln(η/w₀)/κ⌋` — a literal variant seen in one display;
    /// exposed for comparison only.
    DivideByKappa,
}

/// Options selecting between published variants of the C₃ expression.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct C3Options {
    /// Base width of the tail sum.
    pub exponent_form: ExponentForm,
    /// Floor rule for the tail length.
    pub p_floor_rule: PFloorRule,
}

/// Check that `xi` lies on the grid `{ell·kappa^i : i ≥ 0}` up to
/// [`GRID_TOLERANCE`] on the exponent; returns the rounded index.
pub fn grid_index(xi: f64, ell: f64, kappa: f64) -> Result<u32> {
    let i_real = (xi / ell).ln() / kappa.ln();
    let i_round = i_real.round();
    if (i_real - i_round).abs() > GRID_TOLERANCE || i_round < -0.5 {
        return Err(DgError::invalid(
            "xi",
            format!(
                "must equal ell·kappa^i for an integer i ≥ 0 \
                 (ln(xi/ell)/ln(kappa) = {i_real}, nearest integer {i_round})"
            ),
        ));
    }
    Ok(i_round as u32)
}

/// Margin-condition constant C₃ with the default expression variants.
pub fn c3(p: &C3Params) -> Result<f64> {
    c3_with(p, &C3Options::default())
}

/// Margin-condition constant C₃:
///
/// ```text
/// C₃ = [ ln(1 + (K−1)·b^{−η})
///      + ln(1 + (K−1)·b^{−η/κ})·δ₀
///      + δ₀/(σ+1)^{ln(η/ξ)/ln κ − 1} · ln(1 + b^{ξ}(K−1))
///      + Σ_{i=0}^{p−1} δ₀/(σ+1)^{ln(η/(w₀κ^{i+1}))/ln κ − 1}
///                        · ln(1 + (K−1)·b^{−w₀κ^{i+1}}) ] / ln 2
/// ```
///
/// with `w₀` and `p` chosen by `opts` (defaults: `w₀ = ℓ`,
/// `p = ⌊ln(η/ℓ)/ln κ⌋`).
pub fn c3_with(p: &C3Params, opts: &C3Options) -> Result<f64> {
    p.validate()?;
    grid_index(p.xi, p.ell, p.kappa)?;

    let k1 = (p.k_classes - 1) as f64;
    let b = p.softmax_base;
    let ln_kappa = p.kappa.ln();

    let t1 = (k1 * pow_b(b, -p.eta)).ln_1p();
    let t2 = (k1 * pow_b(b, -p.eta / p.kappa)).ln_1p() * p.delta0;

    let r_xi = (p.eta / p.xi).ln() / ln_kappa;
    let t3 = p.delta0 / (p.sigma + 1.0).powf(r_xi - 1.0) * (k1 * pow_b(b, p.xi)).ln_1p();

    let w0 = match opts.exponent_form {
        ExponentForm::LemmaEll => p.ell,
        ExponentForm::XiKappa => p.xi,
    };
    let p_len = {
        let raw = match opts.p_floor_rule {
            PFloorRule::LogKappa => ((p.eta / w0).ln() / ln_kappa).floor(),
            PFloorRule::DivideByKappa => ((p.eta / w0).ln() / p.kappa).floor(),
        };
        if raw.is_sign_negative() {
            0
        } else {
            raw as u32
        }
    };
    let mut t4 = Kahan::new();
    for i in 0..p_len {
        let w = w0 * p.kappa.powi(i as i32 + 1);
        let r = (p.eta / w).ln() / ln_kappa;
        t4.add(p.delta0 / (p.sigma + 1.0).powf(r - 1.0) * (k1 * pow_b(b, -w)).ln_1p());
    }

    Ok((t1 + t2 + t3 + t4.value()) / std::f64::consts::LN_2)
}

/// Inputs of the slab-condition constant C₂.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct C2Inputs {
    /// Margin η > 0.
    pub eta: f64,
    /// Number of classes K ≥ 2.
    pub k_classes: usize,
    /// Doubling constant κ > 1.
    pub kappa: f64,
    /// Growth factor σ > 0.
    pub sigma: f64,
    /// Good-set deficit δ₀ ∈ (0, 1).
    pub delta0: f64,
    /// Smallest doubling scale ℓ > 0 checked on the training set.
    pub ell: f64,
    /// Squared smallest relevant singular value of the network's linear
    /// part.
    pub d_min: f64,
    /// Squared largest singular value.
    pub d_max: f64,
    /// Softmax base b > 1.
    pub softmax_base: f64,
    /// Optional lower end of the maximization range (default `d_min·ℓ`).
    pub xi_lo: Option<f64>,
    /// Optional upper end of the maximization range (default `d_max·ℓ`).
    pub xi_hi: Option<f64>,
    /// Optional β of the doubling condition; when given, the result
    /// reports whether `η ≤ d_min·β/2` holds.
    pub beta: Option<f64>,
}

/// Result of the C₂ maximization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct C2Result {
    /// The constant: the maximum over ξ of the margin-condition
    /// expression with `ℓ := ξ`.
    pub value: f64,
    /// The maximizing ξ.
    pub xi_star: f64,
    /// `η ≤ d_min·β/2`, reported iff `beta` was supplied.
    pub eta_within_half_beta: Option<bool>,
}

/// Number of geometric grid points used before local refinement.
const C2_GRID: usize = 4096;

/// Slab-condition constant C₂: the maximum over `ξ ∈ [d_min·ℓ, d_max·ℓ]`
/// (or an explicit override range) of the margin-condition expression
/// evaluated with both its scale parameters set to ξ — every candidate
/// is then trivially on its own grid.
///
/// The maximization runs a dense geometric grid followed by a
/// golden-section refinement around the best cell and returns the best
/// value ever evaluated, so it can never fall below the grid optimum.
/// The range must stay at or below η (the expression's domain of use).
pub fn c2(inputs: &C2Inputs) -> Result<C2Result> {
    if !(inputs.d_min > 0.0) || !inputs.d_min.is_finite() {
        return Err(DgError::invalid("d_min", "must be finite and > 0"));
    }
    if !(inputs.d_max >= inputs.d_min) || !inputs.d_max.is_finite() {
        return Err(DgError::invalid("d_max", "must be finite and ≥ d_min"));
    }
    let lo = inputs.xi_lo.unwrap_or(inputs.d_min * inputs.ell);
    let hi = inputs.xi_hi.unwrap_or(inputs.d_max * inputs.ell);
    if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() {
        return Err(DgError::invalid(
            "xi range",
            format!("need 0 < lo ≤ hi, got [{lo}, {hi}]"),
        ));
    }
    if hi > inputs.eta {
        return Err(DgError::invalid(
            "xi range",
            format!(
                "upper end {hi} exceeds eta = {}; the expression is used \
                 only for ξ ≤ η",
                inputs.eta
            ),
        ));
    }

    let eval = |xi: f64| -> Result<f64> {
        c3(&C3Params {
            eta: inputs.eta,
            k_classes: inputs.k_classes,
            kappa: inputs.kappa,
            sigma: inputs.sigma,
            ell: xi,
            xi,
            delta0: inputs.delta0,
            softmax_base: inputs.softmax_base,
        })
    };

    let eta_within_half_beta = inputs
        .beta
        .map(|beta| inputs.eta <= inputs.d_min * beta / 2.0);

    if lo == hi {
        return Ok(C2Result {
            value: eval(lo)?,
            xi_star: lo,
            eta_within_half_beta,
        });
    }

    // Dense geometric grid.
    let ratio = hi / lo;
    let mut best_val = f64::NEG_INFINITY;
    let mut best_xi = lo;
    let mut best_j = 0usize;
    for j in 0..C2_GRID {
        let xi = lo * ratio.powf(j as f64 / (C2_GRID - 1) as f64);
        let v = eval(xi)?;
        if v > best_val {
            best_val = v;
            best_xi = xi;
            best_j = j;
        }
    }

    // Golden-section refinement inside the bracketing cells, tracking the
    // best value seen anywhere.
    let cell = |j: usize| lo * ratio.powf(j as f64 / (C2_GRID - 1) as f64);
    let mut a = cell(best_j.saturating_sub(1));
    let mut b = cell((best_j + 1).min(C2_GRID - 1));
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = eval(x1)?;
    let mut f2 = eval(x2)?;
    for _ in 0..70 {
        let (x_new, f_new);
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = eval(x2)?;
            (x_new, f_new) = (x2, f2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = eval(x1)?;
            (x_new, f_new) = (x1, f1);
        }
        if f_new > best_val {
            best_val = f_new;
            best_xi = x_new;
        }
        if (b - a).abs() <= 1e-14 * hi {
            break;
        }
    }

    Ok(C2Result {
        value: best_val,
        xi_star: best_xi,
        eta_within_half_beta,
    })
}

/// Inputs of the residual-mass constant C₁.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct C1Params {
    /// Exponent γ with `0 < γ ≤ min{1, ln(1+σ)/ln κ}`.
    pub gamma: f64,
    /// Margin η > 0.
    pub eta: f64,
    /// Number of classes K ≥ 2.
    pub k_classes: usize,
    /// Doubling constant κ > 1.
    pub kappa: f64,
    /// Growth factor σ > 0.
    pub sigma: f64,
}

/// Residual-mass constant
/// `C₁ = max{6η^γ, (1/ln2)·κ·6(K−1)(σ+1)·a_p·(e + 2κ^γ)}` with
/// `a_j = Σ_{k=1}^{j}(1+σ)^k` and `p = ⌊ln η/ln κ⌋`.
pub fn c1(p: &C1Params) -> Result<f64> {
    if !(p.eta > 0.0) || !p.eta.is_finite() {
        return Err(DgError::invalid("eta", "must be finite and > 0"));
    }
    if p.k_classes < 2 {
        return Err(DgError::invalid("k_classes", "must be ≥ 2"));
    }
    if !(p.kappa > 1.0) || !p.kappa.is_finite() {
        return Err(DgError::invalid("kappa", "must be finite and > 1"));
    }
    if !(p.sigma > 0.0) || !p.sigma.is_finite() {
        return Err(DgError::invalid("sigma", "must be finite and > 0"));
    }
    let gamma_cap = 1.0f64.min((1.0 + p.sigma).ln() / p.kappa.ln());
    if !(p.gamma > 0.0 && p.gamma <= gamma_cap) {
        return Err(DgError::invalid(
            "gamma",
            format!("must lie in (0, {gamma_cap}] = (0, min{{1, ln(1+σ)/ln κ}}]"),
        ));
    }
    let p_len = {
        let raw = (p.eta.ln() / p.kappa.ln()).floor();
        if raw.is_sign_negative() {
            0
        } else {
            raw as u32
        }
    };
    let mut a_p = Kahan::new();
    for k in 1..=p_len {
        a_p.add((1.0 + p.sigma).powi(k as i32));
    }
    let branch1 = 6.0 * p.eta.powf(p.gamma);
    let branch2 = (1.0 / std::f64::consts::LN_2)
        * p.kappa
        * 6.0
        * (p.k_classes - 1) as f64
        * (p.sigma + 1.0)
        * a_p.value()
        * (std::f64::consts::E + 2.0 * p.kappa.powf(p.gamma));
    Ok(branch1.max(branch2))
}

/// Accuracy bound implied by an observed loss: `max(0, 1 − loss/ln 2)`.
///
/// Valid for the natural-log cross-entropy used throughout this crate
/// with any softmax base: a misclassified sample contributes at least
/// `ln 2` to the loss.
pub fn acc_bound_from_loss(loss: f64) -> Result<f64> {
    if !(loss >= 0.0) || !loss.is_finite() {
        return Err(DgError::invalid("loss", "must be finite and ≥ 0"));
    }
    Ok((1.0 - loss / std::f64::consts::LN_2).max(0.0))
}

/// Confident-mass bound `max(0, min(1, 1 − 2·ln2·ε·e^{η*}))` on
/// `μ(G_{η*})` after the residual-mass stability conclusion.
pub fn eta_star_tail_bound(epsilon: f64, eta_star: f64) -> Result<f64> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(DgError::invalid("epsilon", "must be finite and > 0"));
    }
    if !(eta_star >= 0.0) || !eta_star.is_finite() {
        return Err(DgError::invalid("eta_star", "must be finite and ≥ 0"));
    }
    Ok((1.0 - 2.0 * std::f64::consts::LN_2 * epsilon * eta_star.exp()).clamp(0.0, 1.0))
}

/// Lower envelope of the weighted cross-entropy from the margins:
/// `Σ μ(s)·ln(1 + b^{−δX(s)})`.
pub fn loss_lower_from_margins(pairs: &[(f64, f64)], base: f64) -> Result<f64> {
    if !(base > 1.0) || !base.is_finite() {
        return Err(DgError::invalid("base", "must be finite and > 1"));
    }
    let mut acc = Kahan::new();
    for &(v, w) in pairs {
        acc.add(w * pow_b(base, -v).ln_1p());
    }
    Ok(acc.value())
}

/// Upper envelope of the weighted cross-entropy from the margins:
/// `Σ μ(s)·ln(1 + (K−1)·b^{−δX(s)})`.
pub fn loss_upper_from_margins(pairs: &[(f64, f64)], k_classes: usize, base: f64) -> Result<f64> {
    if !(base > 1.0) || !base.is_finite() {
        return Err(DgError::invalid("base", "must be finite and > 1"));
    }
    if k_classes < 2 {
        return Err(DgError::invalid("k_classes", "must be ≥ 2"));
    }
    let k1 = (k_classes - 1) as f64;
    let mut acc = Kahan::new();
    for &(v, w) in pairs {
        acc.add(w * (k1 * pow_b(base, -v)).ln_1p());
    }
    Ok(acc.value())
}

/// Loss floor contributed by the mass outside `G_{η*}`:
/// `tail_mass · ln(1 + b^{−η*}) ≤ loss`.
pub fn tail_loss_floor(tail_mass: f64, eta_star: f64, base: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&tail_mass) {
        return Err(DgError::invalid("tail_mass", "must lie in [0, 1]"));
    }
    if !(base > 1.0) || !base.is_finite() {
        return Err(DgError::invalid("base", "must be finite and > 1"));
    }
    if !eta_star.is_finite() || eta_star < 0.0 {
        return Err(DgError::invalid("eta_star", "must be finite and ≥ 0"));
    }
    Ok(tail_mass * pow_b(base, -eta_star).ln_1p())
}

/// Residual-mass doubling constants transported from a training set to
/// the margin distribution by an absolute-value network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonuniformPropagated {
    /// `log₂` of the propagated residual mass
    /// `m₀′ = 2^{Σ c(i)}·K·m₀` (exact even when `m0_prime` overflows).
    pub log2_m0_prime: f64,
    /// The propagated residual mass itself (`+∞` on overflow).
    pub m0_prime: f64,
    /// `log₂` of the propagated growth factor `σ′ = σ/m₀′`.
    pub log2_sigma_prime: f64,
    /// The propagated growth factor (0 on underflow).
    pub sigma_prime: f64,
    /// The doubling constant, unchanged.
    pub kappa: f64,
}

/// Transport `(m₀, σ, κ)` through layers with node counts `c(i)`:
/// `m₀′ = 2^{Σ c(i)}·K·m₀`, `σ′ = σ/m₀′`, κ unchanged. Computed in
/// `log₂` space because the factor `2^{Σ c(i)}` overflows `f64` for
/// realistic widths.
pub fn nonuniform_propagated_constants(
    m0: f64,
    sigma: f64,
    kappa: f64,
    node_counts: &[usize],
    k_classes: usize,
) -> Result<NonuniformPropagated> {
    if !(m0 > 0.0) || !m0.is_finite() {
        return Err(DgError::invalid("m0", "must be finite and > 0"));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(DgError::invalid("sigma", "must be finite and > 0"));
    }
    if !(kappa > 1.0) || !kappa.is_finite() {
        return Err(DgError::invalid("kappa", "must be finite and > 1"));
    }
    if node_counts.is_empty() {
        return Err(DgError::invalid("node_counts", "must be nonempty"));
    }
    if k_classes < 2 {
        return Err(DgError::invalid("k_classes", "must be ≥ 2"));
    }
    let total_nodes: f64 = node_counts.iter().map(|&c| c as f64).sum();
    let log2_m0_prime = total_nodes + (k_classes as f64).log2() + m0.log2();
    let log2_sigma_prime = sigma.log2() - log2_m0_prime;
    Ok(NonuniformPropagated {
        log2_m0_prime,
        m0_prime: log2_m0_prime.exp2(),
        log2_sigma_prime,
        sigma_prime: log2_sigma_prime.exp2(),
        kappa,
    })
}

/// Uniform doubling constants transported to the margin distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformPropagated {
    /// Lower end of the propagated scale range: `d_min·ℓ`.
    pub ell_lo: f64,
    /// Upper end of the propagated scale range: `d_max·ℓ`.
    pub ell_hi: f64,
    /// Propagated largest width: `d_min·β`.
    pub beta_prime: f64,
    /// Growth factor, unchanged for almost every network.
    pub sigma: f64,
    /// Doubling constant, unchanged.
    pub kappa: f64,
}

/// Transport uniform doubling constants `(ℓ, β, σ, κ)` through a network
/// whose end-to-end linear part has squared extreme singular values
/// `d_min ≤ d_max`: the scale lands in `[d_min·ℓ, d_max·ℓ]` and β shrinks
/// to `d_min·β`; σ and κ survive unchanged.
pub fn propagated_uniform_constants(
    ell: f64,
    beta: f64,
    sigma: f64,
    kappa: f64,
    d_min: f64,
    d_max: f64,
) -> Result<UniformPropagated> {
    if !(ell > 0.0) || !ell.is_finite() {
        return Err(DgError::invalid("ell", "must be finite and > 0"));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(DgError::invalid("beta", "must be finite and > 0"));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(DgError::invalid("sigma", "must be finite and > 0"));
    }
    if !(kappa > 1.0) || !kappa.is_finite() {
        return Err(DgError::invalid("kappa", "must be finite and > 1"));
    }
    if !(d_min > 0.0) || !(d_max >= d_min) || !d_max.is_finite() {
        return Err(DgError::invalid("d_min", "need 0 < d_min ≤ d_max < ∞"));
    }
    Ok(UniformPropagated {
        ell_lo: d_min * ell,
        ell_hi: d_max * ell,
        beta_prime: d_min * beta,
        sigma,
        kappa,
    })
}

/// Which stability statement's hypotheses to check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TheoremKind {
    /// Slab-condition stability via C₂ (condition checked on the
    /// training set, transported through the network).
    SlabStability,
    /// Margin-condition stability via C₃ (uniform condition checked
    /// directly on δX).
    MarginStability,
    /// Residual-mass stability via C₁ (older condition with residual
    /// mass m₀, conclusions in terms of ε).
    ResidualMarginStability,
}

/// Measurements and constants the hypothesis checks may need. Leave
/// fields that a theorem does not use as `None`; missing required fields
/// are reported together in one error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PreconditionInputs {
    /// Margin η of the good set.
    pub eta: Option<f64>,
    /// Bad-set margin ξ (ξ′ for the slab statement).
    pub xi: Option<f64>,
    /// Good-set deficit δ₀.
    pub delta0: Option<f64>,
    /// Mass cap δ of the doubling condition.
    pub delta: Option<f64>,
    /// Largest width β of the doubling condition (on δX for the margin
    /// and residual statements; on the training set for the slab one).
    pub beta: Option<f64>,
    /// Smallest scale ℓ of the uniform doubling condition.
    pub ell: Option<f64>,
    /// Doubling constant κ.
    pub kappa: Option<f64>,
    /// Growth factor σ.
    pub sigma: Option<f64>,
    /// Number of classes K.
    pub k_classes: Option<usize>,
    /// Softmax base (defaults to e when omitted).
    pub softmax_base: Option<f64>,
    /// Squared smallest relevant singular value of the network's linear
    /// part.
    pub d_min: Option<f64>,
    /// Squared largest singular value.
    pub d_max: Option<f64>,
    /// Residual mass m₀ (after propagation, for the residual statement).
    pub m0: Option<f64>,
    /// Target accuracy slack ε of the residual statement.
    pub epsilon: Option<f64>,
    /// Exponent γ of the residual statement.
    pub gamma: Option<f64>,
    /// Measured `μ(G_η(t₀))`.
    pub good_mass_eta: Option<f64>,
    /// Measured `μ(B_{−ξ}(t₀))`.
    pub bad_mass_xi: Option<f64>,
    /// Measured `μ(B_{−1}(t₀))` (residual statement only).
    pub bad_mass_one: Option<f64>,
}

/// One named hypothesis with its verdict.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PreconditionCheck {
    /// Stable kebab-case identifier of the hypothesis.
    pub name: &'static str,
    /// Whether the hypothesis holds on the supplied numbers.
    pub holds: bool,
    /// Human-readable comparison with the actual values.
    pub detail: String,
}

/// Outcome of a full hypothesis check plus the implied bounds.
///
/// `loss_bound = ln2·constant` and `acc_lower_bound = 1 − constant`
/// always (they are the conclusions of the slab and margin statements);
/// for the residual statement the meaningful accuracy bound is
/// `epsilon_accuracy_bound = 1 − ε` instead, and `constant` holds C₁.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    /// Which statement was checked.
    pub theorem: TheoremKind,
    /// True iff every hypothesis holds.
    pub all_hold: bool,
    /// Individual hypothesis verdicts, in statement order.
    pub checks: Vec<PreconditionCheck>,
    /// The statement's constant (C₂, C₃, or C₁).
    pub constant: f64,
    /// `ln2 · constant`.
    pub loss_bound: f64,
    /// `1 − constant` (meaningful for the slab and margin statements).
    pub acc_lower_bound: f64,
    /// `1 − ε` (residual statement only).
    pub epsilon_accuracy_bound: Option<f64>,
    /// Maximizing ξ of the C₂ scan (slab statement only).
    pub xi_star: Option<f64>,
}

fn require(pairs: &[(&'static str, bool)]) -> Result<()> {
    let missing: Vec<&'static str> = pairs
        .iter()
        .filter(|(_, present)| !present)
        .map(|(name, _)| *name)
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(DgError::MissingInputs { missing })
    }
}

/// Evaluate every hypothesis of `kind` on `inputs` and report the
/// verdicts together with the statement's constant and bounds.
pub fn check_theorem_preconditions(
    kind: TheoremKind,
    inputs: &PreconditionInputs,
) -> Result<StabilityReport> {
    let base = inputs.softmax_base.unwrap_or(DEFAULT_SOFTMAX_BASE);
    match kind {
        TheoremKind::SlabStability => {
            require(&[
                ("eta", inputs.eta.is_some()),
                ("xi", inputs.xi.is_some()),
                ("delta0", inputs.delta0.is_some()),
                ("delta", inputs.delta.is_some()),
                ("beta", inputs.beta.is_some()),
                ("ell", inputs.ell.is_some()),
                ("kappa", inputs.kappa.is_some()),
                ("sigma", inputs.sigma.is_some()),
                ("k_classes", inputs.k_classes.is_some()),
                ("d_min", inputs.d_min.is_some()),
                ("d_max", inputs.d_max.is_some()),
                ("good_mass_eta", inputs.good_mass_eta.is_some()),
                ("bad_mass_xi", inputs.bad_mass_xi.is_some()),
            ])?;
            let (eta, xi, delta0, delta) = (
                inputs.eta.unwrap(),
                inputs.xi.unwrap(),
                inputs.delta0.unwrap(),
                inputs.delta.unwrap(),
            );
            let (beta, ell, d_min, d_max) = (
                inputs.beta.unwrap(),
                inputs.ell.unwrap(),
                inputs.d_min.unwrap(),
                inputs.d_max.unwrap(),
            );
            let (good, bad) = (inputs.good_mass_eta.unwrap(), inputs.bad_mass_xi.unwrap());

            let result = c2(&C2Inputs {
                eta,
                k_classes: inputs.k_classes.unwrap(),
                kappa: inputs.kappa.unwrap(),
                sigma: inputs.sigma.unwrap(),
                delta0,
                ell,
                d_min,
                d_max,
                softmax_base: base,
                xi_lo: None,
                xi_hi: None,
                beta: Some(beta),
            })?;

            let checks = vec![
                PreconditionCheck {
                    name: "eta-within-half-propagated-beta",
                    holds: d_min * beta / 2.0 >= eta,
                    detail: format!("d_min·beta/2 = {} vs eta = {eta}", d_min * beta / 2.0),
                },
                PreconditionCheck {
                    name: "xi-in-propagated-range",
                    holds: xi >= 0.0 && xi >= d_min * ell && xi <= d_max * ell,
                    detail: format!(
                        "xi = {xi} vs range [{}, {}]",
                        d_min * ell,
                        d_max * ell
                    ),
                },
                PreconditionCheck {
                    name: "xi-below-eta",
                    holds: xi < eta,
                    detail: format!("xi = {xi} vs eta = {eta}"),
                },
                PreconditionCheck {
                    name: "delta0-below-delta",
                    holds: delta0 < delta,
                    detail: format!("delta0 = {delta0} vs delta = {delta}"),
                },
                PreconditionCheck {
                    name: "good-set-large",
                    holds: good > 1.0 - delta0,
                    detail: format!("good mass = {good} vs 1 − delta0 = {}", 1.0 - delta0),
                },
                PreconditionCheck {
                    name: "bad-set-empty",
                    holds: bad == 0.0,
                    detail: format!("bad mass at −xi = {bad}"),
                },
            ];
            let all_hold = checks.iter().all(|c| c.holds);
            Ok(StabilityReport {
                theorem: kind,
                all_hold,
                checks,
                constant: result.value,
                loss_bound: std::f64::consts::LN_2 * result.value,
                acc_lower_bound: 1.0 - result.value,
                epsilon_accuracy_bound: None,
                xi_star: Some(result.xi_star),
            })
        }
        TheoremKind::MarginStability => {
            require(&[
                ("eta", inputs.eta.is_some()),
                ("xi", inputs.xi.is_some()),
                ("delta0", inputs.delta0.is_some()),
                ("delta", inputs.delta.is_some()),
                ("beta", inputs.beta.is_some()),
                ("ell", inputs.ell.is_some()),
                ("kappa", inputs.kappa.is_some()),
                ("sigma", inputs.sigma.is_some()),
                ("k_classes", inputs.k_classes.is_some()),
                ("good_mass_eta", inputs.good_mass_eta.is_some()),
                ("bad_mass_xi", inputs.bad_mass_xi.is_some()),
            ])?;
            let (eta, xi, delta0, delta) = (
                inputs.eta.unwrap(),
                inputs.xi.unwrap(),
                inputs.delta0.unwrap(),
                inputs.delta.unwrap(),
            );
            let (beta, ell, kappa) = (
                inputs.beta.unwrap(),
                inputs.ell.unwrap(),
                inputs.kappa.unwrap(),
            );
            let (good, bad) = (inputs.good_mass_eta.unwrap(), inputs.bad_mass_xi.unwrap());

            let constant = c3(&C3Params {
                eta,
                k_classes: inputs.k_classes.unwrap(),
                kappa,
                sigma: inputs.sigma.unwrap(),
                ell,
                xi,
                delta0,
                softmax_base: base,
            })?;

            let on_grid = grid_index(xi, ell, kappa).is_ok();
            let checks = vec![
                PreconditionCheck {
                    name: "eta-within-half-beta",
                    holds: beta / 2.0 >= eta,
                    detail: format!("beta/2 = {} vs eta = {eta}", beta / 2.0),
                },
                PreconditionCheck {
                    name: "xi-on-grid",
                    holds: on_grid,
                    detail: format!(
                        "ln(xi/ell)/ln(kappa) = {}",
                        (xi / ell).ln() / kappa.ln()
                    ),
                },
                PreconditionCheck {
                    name: "delta0-below-delta",
                    holds: delta0 < delta,
                    detail: format!("delta0 = {delta0} vs delta = {delta}"),
                },
                PreconditionCheck {
                    name: "good-set-large",
                    holds: good > 1.0 - delta0,
                    detail: format!("good mass = {good} vs 1 − delta0 = {}", 1.0 - delta0),
                },
                PreconditionCheck {
                    name: "bad-set-empty",
                    holds: bad == 0.0,
                    detail: format!("bad mass at −xi = {bad}"),
                },
            ];
            let all_hold = checks.iter().all(|c| c.holds);
            Ok(StabilityReport {
                theorem: kind,
                all_hold,
                checks,
                constant,
                loss_bound: std::f64::consts::LN_2 * constant,
                acc_lower_bound: 1.0 - constant,
                epsilon_accuracy_bound: None,
                xi_star: None,
            })
        }
        TheoremKind::ResidualMarginStability => {
            require(&[
                ("gamma", inputs.gamma.is_some()),
                ("eta", inputs.eta.is_some()),
                ("kappa", inputs.kappa.is_some()),
                ("sigma", inputs.sigma.is_some()),
                ("k_classes", inputs.k_classes.is_some()),
                ("m0", inputs.m0.is_some()),
                ("epsilon", inputs.epsilon.is_some()),
                ("delta0", inputs.delta0.is_some()),
                ("beta", inputs.beta.is_some()),
                ("good_mass_eta", inputs.good_mass_eta.is_some()),
                ("bad_mass_one", inputs.bad_mass_one.is_some()),
            ])?;
            let (gamma, eta, kappa, sigma) = (
                inputs.gamma.unwrap(),
                inputs.eta.unwrap(),
                inputs.kappa.unwrap(),
                inputs.sigma.unwrap(),
            );
            let (m0, epsilon, delta0, beta) = (
                inputs.m0.unwrap(),
                inputs.epsilon.unwrap(),
                inputs.delta0.unwrap(),
                inputs.beta.unwrap(),
            );
            let (good, bad_one) = (inputs.good_mass_eta.unwrap(), inputs.bad_mass_one.unwrap());
            if !(epsilon > 0.0) || !epsilon.is_finite() {
                return Err(DgError::invalid("epsilon", "must be finite and > 0"));
            }

            let constant = c1(&C1Params {
                gamma,
                eta,
                k_classes: inputs.k_classes.unwrap(),
                kappa,
                sigma,
            })?;

            let eta_floor = kappa * ((1.0 / epsilon).ln() + constant);
            let checks = vec![
                PreconditionCheck {
                    name: "residual-mass-small",
                    holds: m0 <= epsilon / (2.0 * constant),
                    detail: format!("m0 = {m0} vs eps/(2C1) = {}", epsilon / (2.0 * constant)),
                },
                PreconditionCheck {
                    name: "eta-in-window",
                    holds: eta_floor <= eta && eta <= beta / 2.0,
                    detail: format!(
                        "kappa(ln(1/eps)+C1) = {eta_floor} vs eta = {eta} vs beta/2 = {}",
                        beta / 2.0
                    ),
                },
                PreconditionCheck {
                    name: "delta0-small",
                    holds: delta0 <= (epsilon / constant) * eta.powf(gamma),
                    detail: format!(
                        "delta0 = {delta0} vs (eps/C1)·eta^gamma = {}",
                        (epsilon / constant) * eta.powf(gamma)
                    ),
                },
                PreconditionCheck {
                    name: "good-set-large",
                    holds: good > 1.0 - delta0,
                    detail: format!("good mass = {good} vs 1 − delta0 = {}", 1.0 - delta0),
                },
                PreconditionCheck {
                    name: "bad-set-empty-at-one",
                    holds: bad_one == 0.0,
                    detail: format!("bad mass at −1 = {bad_one}"),
                },
            ];
            let all_hold = checks.iter().all(|c| c.holds);
            Ok(StabilityReport {
                theorem: kind,
                all_hold,
                checks,
                constant,
                loss_bound: std::f64::consts::LN_2 * constant,
                acc_lower_bound: 1.0 - constant,
                epsilon_accuracy_bound: Some(1.0 - epsilon),
                xi_star: None,
            })
        }
    }
}
