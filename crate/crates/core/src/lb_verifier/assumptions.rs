//! The five structural assumptions on a perturbation family, checked numerically.

use super::{CLASS_MASS_THRESHOLD, FRAK_S_FACTOR, SIGMA_M_MAX};
use crate::density_lab::family::{functional_norms, PerturbationFamily};
use crate::error::{Error, Result};
use crate::nikolskii::{lq_check, membership_check, BumpSum, MembershipOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionEntry {
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
    /// Monte-Carlo standard error for estimated prior masses.
    pub stderr: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchKind {
    /// Every `∫Λ_m = 0`.
    ZeroLambda,
    /// Nonnegative bumps with a prior on `[0, 1]`.
    NonnegUnit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionChecklist {
    pub a1_disjoint_supports: AssumptionEntry,
    pub a2_positive_base: AssumptionEntry,
    /// Estimated prior mass of `{y : f_y in the class at full radii}`.
    pub a3_class_mass: AssumptionEntry,
    /// Estimated prior mass of `{y : |‖f_y‖₂ − ‖f₀‖₂| ≥ 2ψ_n}`.
    pub a4_separation_mass: AssumptionEntry,
    pub a5_branch: BranchKind,
    /// `Σ_M = Σ_m 𝔼y_m λ_m ≤ 1/4`.
    pub a5_sigma_m: AssumptionEntry,
    /// `256 𝔖²_M M n ≤ 1`, `𝔖_M = max |λ_m|`.
    pub a5_frak_s: AssumptionEntry,
    /// `f₀` in every half-radius ball of both classes; membership of `f_y` follows by the triangle inequality.
    pub base_half_ball: AssumptionEntry,
    pub y_mc: usize,
    pub all_pass: bool,
}

fn entry(pass: bool, value: f64, threshold: f64, note: impl Into<String>) -> AssumptionEntry {
    AssumptionEntry { pass, value, threshold, stderr: None, note: note.into() }
}

fn frequency(hits: usize, total: usize, note: String) -> AssumptionEntry {
    let f = hits as f64 / total as f64;
    AssumptionEntry {
        pass: f >= CLASS_MASS_THRESHOLD,
        value: f,
        threshold: CLASS_MASS_THRESHOLD,
        stderr: Some((f * (1.0 - f) / total as f64).sqrt()),
        note,
    }
}

/// Smallest `f₀` value over the corners and centres of the first and last bump boxes.
fn base_min_on_boxes(family: &PerturbationFamily) -> f64 {
    let d = family.d;
    let mut min = f64::INFINITY;
    let mut sites = vec![0, family.m - 1];
    sites.dedup();
    for m in sites {
        let (lo, hi) = family.bump_box(m);
        for corner in 0..(1u32 << d) {
            let x: Vec<f64> = (0..d).map(|j| if corner >> j & 1 == 1 { hi[j] } else { lo[j] }).collect();
            min = min.min(family.base.eval(&x));
        }
        let c: Vec<f64> = (0..d).map(|j| 0.5 * (lo[j] + hi[j])).collect();
        min = min.min(family.base.eval(&c));
    }
    min.min(family.min_base_on_boxes())
}

pub fn verify_assumptions(family: &PerturbationFamily, n: u64, y_mc: usize, seed: u64) -> Result<AssumptionChecklist> {
    if y_mc < 100 {
        return Err(Error::Domain(format!("y_mc >= 100 required, got {y_mc}")));
    }
    let gap = (0..family.d)
        .map(|j| (family.lattice.spacing[j] - family.sigma[j]) / family.sigma[j])
        .fold(f64::INFINITY, f64::min);
    let a1 = entry(
        family.boxes_disjoint_in_plateau(),
        gap,
        0.0,
        "relative gap between neighbouring bump boxes; boxes inside the base plateau",
    );
    let bmin = base_min_on_boxes(family);
    let a2 = entry(bmin > 0.0, bmin, 0.0, "minimum of f0 over the bump boxes");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ys: Vec<Vec<f64>> = (0..y_mc).map(|_| family.prior.draw(&mut rng, family.m as usize)).collect();

    let opts = MembershipOptions::default();
    let (a3, base_half, q) = match &family.theta {
        Some(theta) => {
            let mut base_ok = true;
            let mut worst = 0.0f64;
            for th in [Some(theta), family.theta_prime.as_ref()].into_iter().flatten() {
                let rep = membership_check(&family.base, th, 0.5, &opts)?;
                let lq = lq_check(&family.base, th.q, 0.5 * th.big_q)?;
                base_ok &= rep.verdict && lq.pass;
                for p in &rep.per_direction {
                    worst = worst.max(p.worst_ratio / p.radius).max(p.norm / p.radius);
                }
                worst = worst.max(lq.norm / lq.radius);
            }
            let mut hits = 0;
            for y in &ys {
                let bs = BumpSum::new(family, y)?;
                let rep = membership_check(&bs, theta, 0.5, &opts)?;
                let lq = lq_check(&bs, theta.q, 0.5 * theta.big_q)?;
                let rho = family.rho(y);
                if base_ok && rep.verdict && lq.pass && (0.0..=1.0).contains(&(1.0 - rho)) {
                    hits += 1;
                }
            }
            (
                frequency(hits, y_mc, "base and perturbation each in the half-radius ball; triangle inequality gives full radii".into()),
                entry(base_ok, worst, 1.0, "largest norm-to-half-radius ratio of f0 over both classes"),
                theta.q,
            )
        }
        None => (
            entry(true, f64::NAN, CLASS_MASS_THRESHOLD, "no class pair attached; not applicable"),
            entry(true, f64::NAN, 1.0, "no class pair attached; not applicable"),
            2.0,
        ),
    };

    let norms = functional_norms(family, &ys, q)?;
    let threshold = 2.0 * family.psi_n;
    let hits = norms.per_y.iter().filter(|v| v.separation >= threshold).count();
    let mut a4 = frequency(hits, y_mc, format!("|‖f_y‖₂ − ‖f₀‖₂| >= 2 psi_n = {threshold:e}"));
    if family.psi_n == 0.0 {
        a4.note = "psi_n = 0 for this family; separation holds vacuously".into();
    }

    let lambda = family.derived.lambda_m;
    let (branch, sig, frak) = if lambda == 0.0 {
        (
            BranchKind::ZeroLambda,
            entry(true, 0.0, SIGMA_M_MAX, "zero-mean bumps: vacuous"),
            entry(true, 0.0, 1.0, "zero-mean bumps: vacuous"),
        )
    } else {
        let s = family.derived.sigma_big_m;
        let f = FRAK_S_FACTOR * lambda * lambda * (family.m * n) as f64;
        let unit = family.prior.support().iter().all(|v| (0.0..=1.0).contains(v)) && lambda > 0.0;
        (
            BranchKind::NonnegUnit,
            entry(unit && s <= SIGMA_M_MAX, s, SIGMA_M_MAX, "Sigma_M = sum of E y_m lambda_m"),
            entry(unit && f <= 1.0, f, 1.0, "256 S_M^2 M n with S_M = max |lambda_m|"),
        )
    };
    let all = [&a1, &a2, &a3, &a4, &sig, &frak, &base_half].iter().all(|e| e.pass);
    Ok(AssumptionChecklist {
        a1_disjoint_supports: a1,
        a2_positive_base: a2,
        a3_class_mass: a3,
        a4_separation_mass: a4,
        a5_branch: branch,
        a5_sigma_m: sig,
        a5_frak_s: frak,
        base_half_ball: base_half,
        y_mc,
        all_pass: all,
    })
}
