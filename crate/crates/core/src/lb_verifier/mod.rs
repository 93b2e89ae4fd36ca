//! Assumption checks, the χ²-type budget `𝔼_{f₀}[Z²]`, the numeric risk
//! certificate, and empirical checks of the two auxiliary lemmas (the
//! pointwise sandwich `f*_y ≥ f_y ≥ e^{−1/n} f*_y` and the moment bound `W ≤ 2`).
//!
//! Passing checks at finite `n` is numerical evidence, not a proof.

pub mod assumptions;
pub mod binomial;
pub mod certificate;
pub mod chi;
pub mod lemmas;

pub use assumptions::{verify_assumptions, AssumptionChecklist, AssumptionEntry, BranchKind};
pub use certificate::{certificate, certificate_from_parts, Certificate};
pub use chi::{
    chi_budget, compute_sm, cosh_product_log, exact_enum_log, exact_equal_log, exact_equal_reference_log, ChiBudget,
    ChiMode, ChiOptions, SmSummary,
};
pub use lemmas::{check_lemma_sandwich, check_lemma_wjk, draw_wjk_cases, SandwichReport, WjkCase, WjkReport};

/// Lower bound on the prior mass of the class and separation events.
pub const CLASS_MASS_THRESHOLD: f64 = 230.0 / 231.0;
pub const CLASS_MASS_ANCHOR: &str = "prior mass of the class-membership and separation events, at least 230/231";

/// Lower bound on `κ = 𝔼^M[𝓘_y]` in the general branch.
pub const KAPPA_GENERAL_LOWER: f64 = 143.0 / 144.0;
pub const KAPPA_GENERAL_ANCHOR: &str = "kappa >= P(Y_rho) >= 143/144 in the general branch";

/// Bound on the prior mass of the complement of the good event.
pub const BAD_EVENT_MASS: f64 = 1.0 / 64.0;
pub const BAD_EVENT_ANCHOR: &str = "mass of the excluded perturbations, 1/144 + 2/231 <= 1/64";

/// `107/(144e)`: the asymptotic certificate in the general branch.
pub const ASYMPTOTIC_CERTIFICATE: f64 = 107.0 / (144.0 * std::f64::consts::E);
pub const ASYMPTOTIC_ANCHOR: &str = "liminf of the combined risk >= 107/(144e)";

/// `R` when every `λ_m = 0`.
pub const R_ZERO_LAMBDA: f64 = 0.125;
/// `R ≤ √2/8` in the general branch.
pub const R_GENERAL_BOUND: f64 = std::f64::consts::SQRT_2 / 8.0;

/// Assumption on the nonnegative branch: `Σ_M ≤ 1/4`.
pub const SIGMA_M_MAX: f64 = 0.25;
/// Assumption on the nonnegative branch: `256 𝔖²_M M n ≤ 1`.
pub const FRAK_S_FACTOR: f64 = 256.0;

/// `ln cosh x`, accurate for tiny and huge `|x|`.
pub fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    if a < 0.5 {
        let s = (0.5 * a).sinh();
        (2.0 * s * s).ln_1p()
    } else {
        a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_cosh_matches_direct() {
        for &x in &[0.3, 0.49, 0.5, 1.0, 5.0, -2.0] {
            let direct = f64::cosh(x).ln();
            assert!((ln_cosh(x) / direct - 1.0).abs() <= 1e-14, "{x}");
        }
        for &x in &[1e-9f64, 1e-4, 1e-2] {
            let series = x * x / 2.0 - x.powi(4) / 12.0 + x.powi(6) / 45.0 - 17.0 * x.powi(8) / 2520.0;
            assert!((ln_cosh(x) / series - 1.0).abs() <= 1e-14, "{x}");
        }
        assert!((ln_cosh(1000.0) - (1000.0 - std::f64::consts::LN_2)).abs() < 1e-12);
    }
}
