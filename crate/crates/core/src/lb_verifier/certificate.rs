//! Numeric lower bound on the combined two-class risk.
//!
//! `R_n ≥ e^{−1}(𝔼_{f₀}[Z ∧ α²] − R)` and, by Cauchy–Schwarz,
//! `2𝔼[Z ∧ α²] ≥ κ + α² − √(𝔼Z² − 2α²κ + α⁴)`.

use super::binomial::ln_dbinom;
use super::chi::{ChiBudget, ChiMode};
use super::{
    ASYMPTOTIC_ANCHOR, ASYMPTOTIC_CERTIFICATE, BAD_EVENT_ANCHOR, BAD_EVENT_MASS, CLASS_MASS_ANCHOR, CLASS_MASS_THRESHOLD,
    KAPPA_GENERAL_ANCHOR, KAPPA_GENERAL_LOWER, R_ZERO_LAMBDA,
};
use crate::density_lab::family::{PerturbationFamily, PriorSpec};
use crate::error::{Error, Result};
use crate::numerics::quadrature::log_sum_exp;
use serde::{Deserialize, Serialize};
use std::f64::consts::E;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedConstant {
    pub name: String,
    pub value: f64,
    pub anchor: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    /// `κ = 𝔼^M[𝓘_y]`.
    pub kappa: f64,
    pub ez2: f64,
    pub alpha_sq: f64,
    pub r_term: f64,
    /// Lower bound on `𝔼_{f₀}[Z ∧ α²]`.
    pub ez_min_bound: f64,
    /// `max(0, (ez_min_bound − R)/e)`.
    pub final_bound: f64,
    pub asymptote: f64,
    /// `true` when `ez2` is an upper bound rather than the exact second moment.
    pub conservative: bool,
    pub chi_mode: Option<ChiMode>,
    pub constants: Vec<NamedConstant>,
    pub note: String,
}

pub fn named_constants() -> Vec<NamedConstant> {
    vec![
        NamedConstant { name: "class_mass".into(), value: CLASS_MASS_THRESHOLD, anchor: CLASS_MASS_ANCHOR.into() },
        NamedConstant { name: "kappa_general".into(), value: KAPPA_GENERAL_LOWER, anchor: KAPPA_GENERAL_ANCHOR.into() },
        NamedConstant { name: "bad_event_mass".into(), value: BAD_EVENT_MASS, anchor: BAD_EVENT_ANCHOR.into() },
        NamedConstant { name: "asymptotic_certificate".into(), value: ASYMPTOTIC_CERTIFICATE, anchor: ASYMPTOTIC_ANCHOR.into() },
    ]
}

/// The certificate from its four inputs. Requires `ez2 ≥ κ²` up to rounding.
pub fn certificate_from_parts(kappa: f64, ez2: f64, alpha_sq: f64, r_term: f64) -> Result<Certificate> {
    if !(kappa > 0.0 && alpha_sq > 0.0) || ez2.is_nan() {
        return Err(Error::Domain(format!("kappa > 0 and alpha^2 > 0 required, got {kappa}, {alpha_sq}")));
    }
    let slack = ez2 - kappa * kappa;
    if slack < -1e-12 * kappa * kappa {
        return Err(Error::Numerical(format!("E Z^2 = {ez2} < kappa^2 = {}", kappa * kappa)));
    }
    let slack = slack.max(0.0);
    // rationalized form: no cancellation when ez2 ≈ κ²
    let ez_min = if ez2.is_infinite() {
        f64::NEG_INFINITY
    } else {
        let root = ((alpha_sq - kappa).powi(2) + slack).sqrt();
        (kappa * kappa + 4.0 * kappa * alpha_sq - ez2) / (2.0 * (kappa + alpha_sq + root))
    };
    Ok(Certificate {
        kappa,
        ez2,
        alpha_sq,
        r_term,
        ez_min_bound: ez_min,
        final_bound: ((ez_min - r_term) / E).max(0.0),
        asymptote: ASYMPTOTIC_CERTIFICATE,
        conservative: false,
        chi_mode: None,
        constants: named_constants(),
        note: "finite-n numerical evidence, not a proof".into(),
    })
}

/// `κ = 𝔼𝓘_y` and `𝔼𝓘²_y` with `𝓘_y = [(1 − Σ)e^{−Υ/(1−Σ)} + ρ_y]^n`, by exact binomial sums.
fn kappa_general(lambda: f64, m: u64, p: f64, n: u64) -> (f64, f64) {
    let sig = p * m as f64 * lambda;
    let (mut l1, mut l2) = (Vec::new(), Vec::new());
    for k in 0..=m {
        let rho = lambda * k as f64;
        let ups = rho - sig;
        let int = (1.0 - sig) * (-ups / (1.0 - sig)).exp() + rho;
        let lp = ln_dbinom(k, m, p);
        l1.push(lp + n as f64 * int.ln());
        l2.push(lp + 2.0 * n as f64 * int.ln());
    }
    (log_sum_exp(&l1).exp(), log_sum_exp(&l2).exp())
}

pub fn certificate(family: &PerturbationFamily, chi: &ChiBudget) -> Result<Certificate> {
    let (kappa, r_term) = if family.derived.lambda_m == 0.0 {
        (1.0, R_ZERO_LAMBDA)
    } else {
        let PriorSpec::BernoulliOnUnit { p } = family.prior else {
            return Err(Error::Domain("nonzero bump means need a prior on [0, 1]".into()));
        };
        let (k, i2) = kappa_general(family.derived.lambda_m, family.m, p, chi.n);
        (k, 0.125 * i2.sqrt())
    };
    let mut c = certificate_from_parts(kappa, chi.value, chi.alpha_sq, r_term)?;
    c.conservative = !chi.exact;
    c.chi_mode = Some(chi.mode);
    if c.conservative {
        c.note = "E Z^2 replaced by an upper bound; the certificate is conservative. Finite-n numerical evidence, not a proof".into();
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tight_second_moment_gives_kappa() {
        let c = certificate_from_parts(1.0, 1.0, 50.0, 0.125).unwrap();
        assert_eq!(c.ez_min_bound, 1.0);
        assert!((c.final_bound - 0.875 / E).abs() < 1e-16);
    }

    #[test]
    fn direct_evaluation_example() {
        let c = certificate_from_parts(1.0, 2.0, 100.0, 0.125).unwrap();
        let expect = (101.0 - 9802f64.sqrt()) / 2.0;
        assert!((c.ez_min_bound - expect).abs() < 1e-13);
        assert!((c.final_bound - 0.3209).abs() < 1e-4);
    }

    #[test]
    fn large_second_moment_clamps() {
        let c = certificate_from_parts(1.0, 1.0 + 4.0 * 3.0, 3.0, 0.125).unwrap();
        assert_eq!(c.final_bound, 0.0);
        assert!(certificate_from_parts(1.0, 0.5, 3.0, 0.125).is_err());
    }
}
