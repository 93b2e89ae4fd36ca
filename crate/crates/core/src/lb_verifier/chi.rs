//! `𝔼_{f₀}[Z²] = 𝔼^M⊗𝔼^M [𝔈(y, z)^n]` and its bounds.
//!
//! Zero-mean bumps give `𝔈(y, z) = 1 + Σ S_m y_m z_m`. Under a Rademacher
//! prior `w_m = y_m z_m` is again Rademacher, so the double sum over
//! `{−1,1}^{2M}` collapses to `2^{−M} Σ_w (1 + Σ S_m w_m)^n`, and with equal
//! `S_m` to a binomial sum over the number of positive signs.

use super::binomial::ln_dbinom;
use super::ln_cosh;
use crate::density_lab::family::{PerturbationFamily, PriorSpec};
use crate::error::{Error, Result};
use crate::nikolskii::{tensor_lr_norm, FnEvaluable};
use crate::numerics::quadrature::{log_sum_exp, CompensatedSum};
use crate::param_space::compare_thetas;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Largest `M` summed sign pattern by sign pattern.
pub const ENUMERATION_LIMIT: usize = 20;

/// Terms this far below the running maximum (in log) end the windowed binomial sum.
const LOG_CUTOFF: f64 = 45.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChiMode {
    /// `Π_m cosh(i·n·S_m)`: the bound via `(1 + x)^n ≤ e^{nx}`.
    CoshProduct,
    /// Exact `𝔼_{f₀}[Z²]` for zero-mean bumps and a Rademacher prior.
    ExactEnum,
    /// Bound for nonnegative bumps and a prior on `[0, 1]`.
    GeneralBranchBound,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChiOptions {
    /// The factor `i ∈ {1, 2}` inside the cosh product.
    pub i_factor: u32,
    /// Overrides the midpoint `α` of the class pair.
    pub alpha: Option<f64>,
    /// Overrides `α²_n` outright (families without a class pair need it).
    pub alpha_sq: Option<f64>,
    pub mc_reps: usize,
    pub seed: u64,
}

impl Default for ChiOptions {
    fn default() -> Self {
        ChiOptions { i_factor: 1, alpha: None, alpha_sq: None, mc_reps: 100_000, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmSummary {
    pub m: u64,
    /// Common value of `S_m = ∫ Λ_m² / f₀` (closed form on the plateau).
    pub value: f64,
    pub uniform: bool,
    /// `(m, S_m)` by tensor quadrature at a few lattice sites; empty for `d > 3`.
    pub quadrature: Vec<(u64, f64)>,
    pub max_rel_diff: f64,
}

impl SmSummary {
    pub fn per_m(&self) -> Vec<f64> {
        vec![self.value; self.m as usize]
    }
}

/// `S_m` for every bump. All bumps sit on the plateau of `f₀`, so `S_m = A²σ‖Λ‖₂²/h`.
pub fn compute_sm(family: &PerturbationFamily) -> Result<SmSummary> {
    let h = family.derived.base_height;
    if !(h > 0.0) || !family.boxes_disjoint_in_plateau() {
        return Err(Error::Domain("base density vanishes on a bump support; S_m undefined".into()));
    }
    let vol = family.volume();
    let a = family.amplitude;
    let value = a * a * vol * family.shape.l2_norm.powi(2) / h;
    let mut quadrature = Vec::new();
    let mut max_rel = 0.0f64;
    if family.d <= 3 {
        let mut sites = vec![0, family.m / 2, family.m - 1];
        sites.dedup();
        let mut c = vec![0.0; family.d];
        for m in sites {
            family.lattice.center(m, &mut c);
            let g = FnEvaluable {
                d: family.d,
                f: |t: &[f64]| {
                    let x: Vec<f64> = (0..family.d).map(|j| c[j] + family.sigma[j] * t[j]).collect();
                    family.shape.eval(t).powi(2) / family.base.eval(&x)
                },
                breaks: (0..family.d).map(|j| family.shape.factor_breaks(j)).collect(),
            };
            let q = a * a * vol * tensor_lr_norm(&g, 1.0, if family.d == 1 { 8 } else { 2 })?;
            max_rel = max_rel.max(((q - value) / value).abs());
            quadrature.push((m, q));
        }
    }
    Ok(SmSummary { m: family.m, value, uniform: true, quadrature, max_rel_diff: max_rel })
}

/// `ln Π_m cosh(i n S_m)`.
pub fn cosh_product_log(s: &[f64], n: u64, i_factor: u32) -> f64 {
    let mut acc = CompensatedSum::default();
    for &v in s {
        acc.add(ln_cosh(i_factor as f64 * n as f64 * v));
    }
    acc.value()
}

/// `ln 2^{−M} Σ_{w ∈ {−1,1}^M} (1 + Σ S_m w_m)^n`, summed over all `2^M` patterns.
pub fn exact_enum_log(s: &[f64], n: u64) -> Result<f64> {
    let m = s.len();
    if m > ENUMERATION_LIMIT {
        return Err(Error::Domain(format!("enumeration needs M <= {ENUMERATION_LIMIT}, got {m}")));
    }
    let nf = n as f64;
    let mut logs = Vec::with_capacity(1 << m);
    for mask in 0u32..(1u32 << m) {
        let mut acc = CompensatedSum::default();
        acc.add(1.0);
        for (k, &v) in s.iter().enumerate() {
            acc.add(if mask >> k & 1 == 1 { v } else { -v });
        }
        let base = acc.value();
        if base <= 0.0 {
            return Err(Error::Numerical(format!("1 + sum S_m w_m = {base} <= 0")));
        }
        logs.push(nf * base.ln());
    }
    Ok(log_sum_exp(&logs) - m as f64 * std::f64::consts::LN_2)
}

fn check_equal(s: f64, m: u64) -> Result<()> {
    if !(s >= 0.0) || !(s * (m as f64) < 1.0) {
        return Err(Error::Numerical(format!("equal-S collapse needs 0 <= S and S*M < 1, got S = {s}, M = {m}")));
    }
    Ok(())
}

/// `ln 𝔼[(1 + S(2B − M))^n]`, `B ~ Bin(M, ½)`, by a windowed sum around the mode of
/// the tilted terms. Both the tilted sum and the binomial normalizer are built by
/// ratio recursion from the same start, so no pmf value is needed.
pub fn exact_equal_log(s: f64, m: u64, n: u64) -> Result<f64> {
    check_equal(s, m)?;
    let nf = n as f64;
    let mf = m as f64;
    // ln of term(b+1)/term(b), split into the binomial and tilt parts
    let pmf_step = |b: u64| ((mf - b as f64) / (b as f64 + 1.0)).ln();
    let tilt_step = |b: u64| nf * (2.0 * s / (1.0 + s * (2.0 * b as f64 - mf))).ln_1p();
    // the log term is concave in b; find the first b whose step is negative
    let (mut lo, mut hi) = (0u64, m);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pmf_step(mid) + tilt_step(mid) < 0.0 {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let start = lo;
    let mut pmf = vec![0.0];
    let mut tilt = vec![0.0];
    let (mut lp, mut lt) = (CompensatedSum::default(), CompensatedSum::default());
    let (mut max_p, mut max_t) = (0.0f64, 0.0f64);
    let mut b = start;
    while b < m {
        lp.add(pmf_step(b));
        lt.add(tilt_step(b) + pmf_step(b));
        b += 1;
        let (p, t) = (lp.value(), lt.value());
        pmf.push(p);
        tilt.push(t);
        max_p = max_p.max(p);
        max_t = max_t.max(t);
        if p < max_p - LOG_CUTOFF && t < max_t - LOG_CUTOFF {
            break;
        }
    }
    let (mut lp, mut lt) = (CompensatedSum::default(), CompensatedSum::default());
    let mut b = start;
    while b > 0 {
        b -= 1;
        lp.add(-pmf_step(b));
        lt.add(-(tilt_step(b) + pmf_step(b)));
        let (p, t) = (lp.value(), lt.value());
        pmf.push(p);
        tilt.push(t);
        max_p = max_p.max(p);
        max_t = max_t.max(t);
        if p < max_p - LOG_CUTOFF && t < max_t - LOG_CUTOFF {
            break;
        }
    }
    // tilt holds ln(pmf·(1+x)^n) up to the common unknown ln pmf(start) + n ln(1 + x_start)
    let base_tilt = nf * (s * (2.0 * start as f64 - mf)).ln_1p();
    Ok(log_sum_exp(&tilt) - log_sum_exp(&pmf) + base_tilt)
}

/// Same quantity, every term from the saddle-point binomial pmf.
pub fn exact_equal_reference_log(s: f64, m: u64, n: u64) -> Result<f64> {
    check_equal(s, m)?;
    let nf = n as f64;
    let mf = m as f64;
    let logs: Vec<f64> = (0..=m).map(|b| ln_dbinom(b, m, 0.5) + nf * (s * (2.0 * b as f64 - mf)).ln_1p()).collect();
    Ok(log_sum_exp(&logs))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChiBudget {
    pub mode: ChiMode,
    pub value: f64,
    pub log_value: f64,
    pub s_m: SmSummary,
    pub n: u64,
    pub alpha_sq: f64,
    /// `value / α²_n`.
    pub ratio: f64,
    pub i_factor: u32,
    /// `true` when `value` equals `𝔼_{f₀}[Z²]`; otherwise it is an upper bound.
    pub exact: bool,
    pub method: String,
    /// Monte-Carlo standard error of the moment term (general branch only).
    pub mc_stderr: Option<f64>,
    /// The same moment term by exact binomial summation.
    pub moment_exact: Option<f64>,
    /// Premise `2bJ D_K ≤ 1` of the moment lemma with `b = 4(e+1)`, `J = n`, `K = M`.
    pub moment_premise: Option<bool>,
}

pub(crate) fn resolve_alpha_sq(family: &PerturbationFamily, n: u64, opts: &ChiOptions) -> Result<f64> {
    if let Some(a) = opts.alpha_sq {
        return Ok(a);
    }
    match (&family.theta, &family.theta_prime, &family.relation) {
        (Some(t), Some(tp), Some(rel)) => match opts.alpha {
            Some(alpha) => Ok(compare_thetas(t, tp, Some(alpha))?.alpha_sq(n)),
            None => Ok(rel.alpha_sq(n)),
        },
        _ => Err(Error::Domain("alpha_sq must be given for a family without a class pair".into())),
    }
}

/// `E[(1 + 4(e+1) Υ²)^n]`, `Υ = λ(B − pM)`, `B ~ Bin(M, p)`, by exact summation.
fn upsilon_moment_exact(lambda: f64, m: u64, p: f64, n: u64) -> f64 {
    let b = 4.0 * (std::f64::consts::E + 1.0);
    let logs: Vec<f64> = (0..=m)
        .map(|k| {
            let u = lambda * (k as f64 - p * m as f64);
            ln_dbinom(k, m, p) + n as f64 * (b * u * u).ln_1p()
        })
        .collect();
    log_sum_exp(&logs).exp()
}

pub fn chi_budget(family: &PerturbationFamily, n: u64, mode: ChiMode, opts: &ChiOptions) -> Result<ChiBudget> {
    let sm = compute_sm(family)?;
    let alpha_sq = resolve_alpha_sq(family, n, opts)?;
    let m = family.m;
    let s = sm.value;
    let (log_value, exact, method, mc_stderr, moment_exact, moment_premise) = match mode {
        ChiMode::CoshProduct | ChiMode::ExactEnum => {
            if family.prior != PriorSpec::Rademacher {
                return Err(Error::Domain(format!("{mode:?} needs a Rademacher prior")));
            }
            if family.derived.lambda_m != 0.0 {
                return Err(Error::Domain(format!("{mode:?} needs zero-mean bumps")));
            }
            if mode == ChiMode::CoshProduct {
                if !(opts.i_factor == 1 || opts.i_factor == 2) {
                    return Err(Error::Domain(format!("i in {{1, 2}} required, got {}", opts.i_factor)));
                }
                let lv = m as f64 * ln_cosh(opts.i_factor as f64 * n as f64 * s);
                (lv, false, "closed-form: M ln cosh(i n S)".to_string(), None, None, None)
            } else if m as usize <= ENUMERATION_LIMIT {
                (exact_enum_log(&sm.per_m(), n)?, true, "enumeration over 2^M sign patterns".to_string(), None, None, None)
            } else {
                (exact_equal_log(s, m, n)?, true, "binomial collapse for equal S_m".to_string(), None, None, None)
            }
        }
        ChiMode::GeneralBranchBound => {
            let PriorSpec::BernoulliOnUnit { p } = family.prior else {
                return Err(Error::Domain("GeneralBranchBound needs a prior on [0, 1]".into()));
            };
            let lambda = family.derived.lambda_m;
            let b = 4.0 * (std::f64::consts::E + 1.0);
            let premise = 2.0 * b * n as f64 * 5.0 * lambda * lambda * m as f64 <= 1.0;
            let first = -std::f64::consts::LN_2 + m as f64 * (p * p * (2.0 * n as f64 * s).exp_m1()).ln_1p();
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let reps = opts.mc_reps.max(2);
            let (mut sum, mut sum2) = (CompensatedSum::default(), CompensatedSum::default());
            for _ in 0..reps {
                let k = (0..m).filter(|_| rng.gen::<f64>() < p).count() as f64;
                let u = lambda * (k - p * m as f64);
                let v = (n as f64 * (b * u * u).ln_1p()).exp();
                sum.add(v);
                sum2.add(v * v);
            }
            let mean = sum.value() / reps as f64;
            let var = ((sum2.value() / reps as f64 - mean * mean) * reps as f64 / (reps - 1) as f64).max(0.0);
            let se = (var / reps as f64).sqrt();
            let exact_w = upsilon_moment_exact(lambda, m, p, n);
            let total = first.exp() + 0.5 * mean;
            (
                total.ln(),
                false,
                "1/2 prod(1 - p^2 + p^2 e^{2nS}) + 1/2 Monte-Carlo E(1 + 4(e+1) Upsilon^2)^n".to_string(),
                Some(0.5 * se),
                Some(exact_w),
                Some(premise),
            )
        }
    };
    Ok(ChiBudget {
        mode,
        value: log_value.exp(),
        log_value,
        s_m: sm,
        n,
        alpha_sq,
        ratio: (log_value - alpha_sq.ln()).exp(),
        i_factor: opts.i_factor,
        exact,
        method,
        mc_stderr,
        moment_exact,
        moment_premise,
    })
}
