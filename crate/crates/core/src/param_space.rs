//! Parameter space, rate exponents and regime classification.
//!
//! A class is indexed by `ϑ = (β⃗, r⃗, q, L⃗, Q)`. The rate exponent `𝔷` has
//! three closed forms:
//!
//! | form | scope |
//! |------|-------|
//! | [`exponent_general`] | any `q ∈ [2, ∞]` |
//! | [`exponent_q_infinity`] | `q = ∞` |
//! | [`exponent_isotropic`] | `q = ∞`, all `βⱼ` and all `rⱼ` equal |
//!
//! They are computed independently so that tests can cross-check them.
//! Infinite indices are plain `f64::INFINITY`; IEEE arithmetic gives `1/∞ = 0`
//! exactly, which is the only rule the formulas need.

use crate::error::{domain, Error, Result};
use crate::serde_ext::{ext, ext_vec};
use serde::{Deserialize, Serialize};

/// `ϑ = (β⃗, r⃗, q, L⃗, Q)` together with the ambient dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassParams {
    pub d: usize,
    pub beta: Vec<f64>,
    #[serde(with = "ext_vec")]
    pub r: Vec<f64>,
    #[serde(with = "ext")]
    pub q: f64,
    #[serde(rename = "L")]
    pub l: Vec<f64>,
    #[serde(rename = "Q")]
    pub big_q: f64,
}

impl ClassParams {
    pub fn new(beta: Vec<f64>, r: Vec<f64>, q: f64, l: Vec<f64>, big_q: f64) -> Result<Self> {
        let p = ClassParams { d: beta.len(), beta, r, q, l, big_q };
        p.validate()?;
        Ok(p)
    }

    /// Same `β`, `r`, `L` in every direction.
    pub fn isotropic(d: usize, beta: f64, r: f64, q: f64, l: f64, big_q: f64) -> Result<Self> {
        Self::new(vec![beta; d], vec![r; d], q, vec![l; d], big_q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return domain("d >= 1 required");
        }
        for (name, len) in [("beta", self.beta.len()), ("r", self.r.len()), ("L", self.l.len())] {
            if len != self.d {
                return domain(format!("{name} has {len} entries but d = {}", self.d));
            }
        }
        if let Some(b) = self.beta.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return domain(format!("beta > 0 (finite) required, got {b}"));
        }
        if let Some(r) = self.r.iter().find(|r| r.is_nan() || **r < 1.0) {
            return domain(format!("r >= 1 required, got {r}"));
        }
        if self.q.is_nan() || self.q < 2.0 {
            return domain(format!("q >= 2 required, got {}", self.q));
        }
        if let Some(l) = self.l.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return domain(format!("L > 0 required, got {l}"));
        }
        if !(self.big_q.is_finite() && self.big_q > 0.0) {
            return domain(format!("Q > 0 required, got {}", self.big_q));
        }
        Ok(())
    }

    pub fn is_isotropic(&self) -> bool {
        self.beta.iter().all(|b| *b == self.beta[0]) && self.r.iter().all(|r| *r == self.r[0])
    }

    /// Smallest `k > βⱼ`, the difference order used in membership checks.
    pub fn difference_order(&self, j: usize) -> usize {
        self.beta[j].floor() as usize + 1
    }
}

/// Aggregates of `(β⃗, r⃗)` that every exponent formula is built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessDiagnostics {
    /// `1/ω = Σ 1/(βⱼrⱼ)`.
    pub inv_omega: f64,
    /// `1/β = Σ 1/βⱼ`.
    pub inv_beta: f64,
    /// `𝐋 = Π Lⱼ^{1/βⱼ}`.
    pub bold_l: f64,
    pub tau_1: f64,
    pub tau_2: f64,
    #[serde(with = "ext")]
    pub q: f64,
    pub tau_q: f64,
    pub tau_inf: f64,
}

impl SmoothnessDiagnostics {
    /// `τ(s) = 1 − 1/ω + 1/(βs)`.
    ///
    /// Evaluated as `(1 − 1/ω) + (1/β)/s` so that `τ(2)/τ(1) ≥ 1/2` survives
    /// rounding whenever `τ(∞) ≥ 0`.
    pub fn tau(&self, s: f64) -> f64 {
        (1.0 - self.inv_omega) + self.inv_beta / s
    }
}

pub fn smoothness_diagnostics(theta: &ClassParams) -> SmoothnessDiagnostics {
    let inv_omega: f64 = theta.beta.iter().zip(&theta.r).map(|(b, r)| 1.0 / (b * r)).sum();
    let inv_beta: f64 = theta.beta.iter().map(|b| 1.0 / b).sum();
    let bold_l: f64 = theta.l.iter().zip(&theta.beta).map(|(l, b)| l.powf(1.0 / b)).product();
    let mut s = SmoothnessDiagnostics {
        inv_omega,
        inv_beta,
        bold_l,
        tau_1: 0.0,
        tau_2: 0.0,
        q: theta.q,
        tau_q: 0.0,
        tau_inf: 0.0,
    };
    s.tau_1 = s.tau(1.0);
    s.tau_2 = s.tau(2.0);
    s.tau_q = s.tau(theta.q);
    s.tau_inf = s.tau(f64::INFINITY);
    s
}

/// Which branch of the general exponent formula applies. Exactly one holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateCase {
    /// `τ(2) ≥ 1`.
    Smooth,
    /// `τ(2) < 1`, `τ(q) < 0`.
    Sparse,
    /// `τ(2) < 1`, `τ(q) ≥ 0`.
    Intermediate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `τ(2) ≥ 1` and `τ(1) > 2`.
    ThetaPrime,
    /// `τ(2) < 1` and `τ(q) < 0`.
    ThetaDoublePrime,
    /// `τ(2) < 1`, `τ(q) ≥ 0` and `τ(∞) < 0`.
    ThetaTriplePrime,
    /// `𝔷 = 1/2`.
    Parametric,
}

pub fn rate_case(s: &SmoothnessDiagnostics) -> RateCase {
    if s.tau_2 >= 1.0 {
        RateCase::Smooth
    } else if s.tau_q < 0.0 {
        RateCase::Sparse
    } else {
        RateCase::Intermediate
    }
}

pub fn regime(s: &SmoothnessDiagnostics) -> Regime {
    match rate_case(s) {
        RateCase::Smooth if s.tau_1 > 2.0 => Regime::ThetaPrime,
        RateCase::Sparse => Regime::ThetaDoublePrime,
        RateCase::Intermediate if s.tau_inf < 0.0 => Regime::ThetaTriplePrime,
        _ => Regime::Parametric,
    }
}

/// General exponent, valid for every `q ∈ [2, ∞]`.
pub fn exponent_general(s: &SmoothnessDiagnostics) -> f64 {
    let q = s.q;
    match rate_case(s) {
        RateCase::Smooth => 0.5f64.min(1.0 / s.tau_1),
        RateCase::Sparse => (1.0 - 2.0 / q) / (2.0 - 2.0 / q - s.tau_q),
        RateCase::Intermediate => 0.5f64.min(s.tau_2 / s.tau_1),
    }
}

/// Exponent for `q = ∞`, written without `q`.
pub fn exponent_q_infinity(s: &SmoothnessDiagnostics) -> f64 {
    if s.tau_2 >= 1.0 {
        0.5f64.min(1.0 / s.tau_1)
    } else if s.tau_inf < 0.0 {
        1.0 / (2.0 - s.tau_inf)
    } else {
        0.5
    }
}

/// Isotropic exponent for `q = ∞` in terms of `(β, r, d)` only.
pub fn exponent_isotropic(d: usize, beta: f64, r: f64) -> f64 {
    let d = d as f64;
    // β·r/(β·r + d(r − 1)) written as β/(β + d(1 − 1/r)) so that r = ∞ needs no limit.
    if r >= 2.0 {
        if beta < d * (1.0 - 1.0 / r) {
            beta / (beta + d * (1.0 - 1.0 / r))
        } else {
            0.5
        }
    } else if beta * r < d {
        beta * r / (beta * r + d)
    } else {
        0.5
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub z: f64,
    pub regime: Regime,
    pub case: RateCase,
    pub diagnostics: SmoothnessDiagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    /// `(√ln n / n)^𝔷`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi_n: Option<f64>,
    /// `n^{−𝔷}`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_n: Option<f64>,
    /// `ψ_n/φ_n = (ln n)^{𝔷/2}`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub price: Option<f64>,
}

pub fn rate_exponent(theta: &ClassParams) -> RateReport {
    let s = smoothness_diagnostics(theta);
    RateReport {
        z: exponent_general(&s),
        regime: regime(&s),
        case: rate_case(&s),
        diagnostics: s,
        n: None,
        psi_n: None,
        phi_n: None,
        price: None,
    }
}

/// `𝔷` alone.
pub fn z_of(theta: &ClassParams) -> f64 {
    exponent_general(&smoothness_diagnostics(theta))
}

pub fn check_sample_size(n: u64) -> Result<()> {
    if n < 3 {
        return domain(format!("n >= 3 required (ln n > 1), got {n}"));
    }
    Ok(())
}

/// `(√ln n / n)^z`.
pub fn psi_normalization(z: f64, n: u64) -> f64 {
    let nf = n as f64;
    (z * (0.5 * nf.ln().ln() - nf.ln())).exp()
}

pub fn rates_at_n(theta: &ClassParams, n: u64) -> Result<RateReport> {
    check_sample_size(n)?;
    let mut rep = rate_exponent(theta);
    let ln_n = (n as f64).ln();
    rep.n = Some(n);
    rep.psi_n = Some(psi_normalization(rep.z, n));
    rep.phi_n = Some((-rep.z * ln_n).exp());
    rep.price = Some(ln_n.powf(0.5 * rep.z));
    Ok(rep)
}

/// Everything the lower-bound machinery needs to know about a pair `(θ, θ′)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationReport {
    pub z_theta: f64,
    pub z_theta_prime: f64,
    pub regime_theta: Regime,
    pub regime_theta_prime: Regime,
    /// `ρ_{θ,θ′} = Σ min[(1/βₗ)(1/rₗ − 1/q), (1/γₗ)(1/sₗ − 1/q′)]`.
    pub rho: f64,
    pub rho_l: Vec<f64>,
    pub in_theta_prime_set: bool,
    pub in_theta_double_prime_set: bool,
    pub in_plus_set: bool,
    pub in_zero_set: bool,
    /// `c = α/𝔷(θ′)`.
    pub c: f64,
    pub alpha: f64,
    /// Exponent `e` with `α_n = n^e`; equals `c𝔷(θ′) − 𝔷(θ)`.
    pub alpha_exponent: f64,
    /// Exponent of polynomial decay of `φ_n(θ′)^{1−c}`; equals `(1 − c)𝔷(θ′)`.
    pub a3_exponent: f64,
}

impl RelationReport {
    /// `α_n(c) = φ_n(θ)/φ_n(θ′)^c`.
    pub fn alpha_n(&self, n: u64) -> f64 {
        (self.alpha_exponent * (n as f64).ln()).exp()
    }
    pub fn alpha_sq(&self, n: u64) -> f64 {
        (2.0 * self.alpha_exponent * (n as f64).ln()).exp()
    }
}

/// `alpha`: optional override of `α ∈ (𝔷(θ), 𝔷(θ′))`; the midpoint otherwise.
pub fn compare_thetas(
    theta: &ClassParams,
    theta_prime: &ClassParams,
    alpha: Option<f64>,
) -> Result<RelationReport> {
    if theta.d != theta_prime.d {
        return domain(format!("dimension mismatch: {} vs {}", theta.d, theta_prime.d));
    }
    let s = smoothness_diagnostics(theta);
    let sp = smoothness_diagnostics(theta_prime);
    let (z, zp) = (exponent_general(&s), exponent_general(&sp));
    if zp == 0.0 {
        return domain("z(theta') = 0: c(theta, theta') cannot be formed");
    }
    let rho_l: Vec<f64> = (0..theta.d)
        .map(|l| {
            let a = (1.0 / theta.beta[l]) * (1.0 / theta.r[l] - 1.0 / theta.q);
            let b = (1.0 / theta_prime.beta[l]) * (1.0 / theta_prime.r[l] - 1.0 / theta_prime.q);
            a.min(b)
        })
        .collect();
    let rho: f64 = rho_l.iter().sum();
    let (rg, rgp) = (regime(&s), regime(&sp));
    let alpha = match alpha {
        Some(a) => {
            if !(z < a && a < zp) {
                return domain(format!("alpha must lie in (z(theta), z(theta')) = ({z}, {zp}), got {a}"));
            }
            a
        }
        None => 0.5 * (z + zp),
    };
    let c = alpha / zp;
    Ok(RelationReport {
        z_theta: z,
        z_theta_prime: zp,
        regime_theta: rg,
        regime_theta_prime: rgp,
        rho,
        rho_l,
        in_theta_prime_set: rg == Regime::ThetaPrime && rgp == Regime::ThetaPrime && zp > z,
        in_theta_double_prime_set: rg == Regime::ThetaDoublePrime
            && rgp == Regime::ThetaDoublePrime
            && zp > z
            && rho >= 1.0
            && theta_prime.q <= theta.q,
        in_plus_set: zp > z,
        in_zero_set: zp == z,
        c,
        alpha,
        alpha_exponent: c * zp - z,
        a3_exponent: (1.0 - c) * zp,
    })
}

/// A normalization family `θ ↦ ψ_n(θ)` whose adaptivity conditions are checked.
pub trait NormalizationFamily {
    fn name(&self) -> &str;
    fn psi(&self, theta: &ClassParams, n: u64) -> f64;
    /// Upper bound `b` with `ψ_n(θ)/φ_n(θ) ≤ (ln n)^b` uniformly in `θ`.
    fn log_price_bound(&self) -> f64;
}

/// `ψ_n(θ) = (√ln n / n)^{𝔷(θ)}`; its price never exceeds `(ln n)^{1/4}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogPriceFamily;

impl NormalizationFamily for LogPriceFamily {
    fn name(&self) -> &str {
        "(sqrt(ln n)/n)^z"
    }
    fn psi(&self, theta: &ClassParams, n: u64) -> f64 {
        psi_normalization(z_of(theta), n)
    }
    fn log_price_bound(&self) -> f64 {
        0.25
    }
}

/// A tensor grid over the smoothness indices with `q`, `L`, `Q` held fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamGrid {
    pub d: usize,
    #[serde(with = "ext")]
    pub q: f64,
    pub l: f64,
    pub big_q: f64,
    /// Isotropic: one β axis and one r axis (ℓ = 2). Anisotropic: one β and
    /// one r axis per direction (ℓ = 2d).
    pub isotropic: bool,
    pub beta_axis: Vec<f64>,
    #[serde(with = "ext_vec")]
    pub r_axis: Vec<f64>,
}

impl ParamGrid {
    pub fn dimension(&self) -> usize {
        if self.isotropic {
            2
        } else {
            2 * self.d
        }
    }

    fn axis_lengths(&self) -> Vec<usize> {
        let (nb, nr) = (self.beta_axis.len(), self.r_axis.len());
        if self.isotropic {
            vec![nb, nr]
        } else {
            let mut v = vec![nb; self.d];
            v.extend(std::iter::repeat(nr).take(self.d));
            v
        }
    }

    fn point_at(&self, idx: &[usize]) -> Result<ClassParams> {
        if self.isotropic {
            ClassParams::isotropic(self.d, self.beta_axis[idx[0]], self.r_axis[idx[1]], self.q, self.l, self.big_q)
        } else {
            let beta = idx[..self.d].iter().map(|&i| self.beta_axis[i]).collect();
            let r = idx[self.d..].iter().map(|&i| self.r_axis[i]).collect();
            ClassParams::new(beta, r, self.q, vec![self.l; self.d], self.big_q)
        }
    }

    /// All grid points in mixed-radix order (first axis fastest).
    pub fn points(&self) -> Result<Vec<ClassParams>> {
        let lens = self.axis_lengths();
        let total: usize = lens.iter().product();
        (0..total).map(|k| self.point_at(&unravel(k, &lens))).collect()
    }

    /// For every grid cell (hypercube of adjacent indices), the flat indices of its corners.
    fn cells(&self) -> Vec<Vec<usize>> {
        let lens = self.axis_lengths();
        if lens.iter().any(|&n| n < 2) {
            return Vec::new();
        }
        let cell_lens: Vec<usize> = lens.iter().map(|n| n - 1).collect();
        let ncells: usize = cell_lens.iter().product();
        let ell = lens.len();
        (0..ncells)
            .map(|k| {
                let base = unravel(k, &cell_lens);
                (0..(1usize << ell))
                    .map(|mask| {
                        let idx: Vec<usize> = (0..ell).map(|a| base[a] + ((mask >> a) & 1)).collect();
                        ravel(&idx, &lens)
                    })
                    .collect()
            })
            .collect()
    }
}

fn unravel(mut k: usize, lens: &[usize]) -> Vec<usize> {
    lens.iter()
        .map(|&n| {
            let i = k % n;
            k /= n;
            i
        })
        .collect()
}

fn ravel(idx: &[usize], lens: &[usize]) -> usize {
    idx.iter().zip(lens).rev().fold(0, |acc, (&i, &n)| acc * n + i)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionReport {
    pub family: String,
    pub parameter_dimension: usize,
    pub isotropic: bool,
    pub grid_points: usize,
    pub grid_cells: usize,
    pub resolution: String,
    /// Ordered pairs `(θ, θ′)` with `θ′ ∈ Θ⁺[θ]`.
    pub pairs_checked: usize,
    pub a1_min_plus_fraction: f64,
    /// Grid points θ for which some full cell lies inside `Θ⁰[θ]`; must be 0.
    pub a1_zero_interior_points: usize,
    pub a1_pass: bool,
    /// Smallest `c𝔷(θ′) − 𝔷(θ)` over checked pairs; must be positive.
    pub a2_min_exponent: f64,
    pub a2_pass: bool,
    /// Smallest `(1 − c)𝔷(θ′)`; positive means `𝔭²_n φ_n(θ′)^{1−c} → 0`.
    pub a3_min_exponent: f64,
    /// Largest observed `ln 𝔭_n / ln ln n` over the sample sizes below.
    pub a3_observed_log_price: f64,
    pub a3_price_n: Vec<u64>,
    pub a3_pass: bool,
}

/// Exponents closer than this are the same exponent computed along different
/// branches of the case table.
const Z_TIE: f64 = 1e-12;

/// Conditions A1–A3 for `family` on `grid`.
pub fn check_conditions_a(grid: &ParamGrid, family: &dyn NormalizationFamily) -> Result<ConditionReport> {
    let pts = grid.points()?;
    if pts.is_empty() {
        return Err(Error::Domain("empty parameter grid".into()));
    }
    let zs: Vec<f64> = pts.iter().map(z_of).collect();
    let cells = grid.cells();
    let mut pairs = 0usize;
    let mut min_plus = f64::INFINITY;
    let mut zero_interior = 0usize;
    let (mut a2_min, mut a3_min) = (f64::INFINITY, f64::INFINITY);
    let z_top = zs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for (i, &z) in zs.iter().enumerate() {
        // The grid maximum has an empty Θ⁺ on any finite grid; it is not evidence against A1.
        if z < z_top {
            let plus = zs.iter().filter(|&&zp| zp > z + Z_TIE).count();
            min_plus = min_plus.min(plus as f64 / zs.len() as f64);
        }
        if cells.iter().any(|cell| cell.iter().all(|&k| (zs[k] - z).abs() <= Z_TIE)) {
            zero_interior += 1;
        }
        for (k, &zp) in zs.iter().enumerate() {
            if k == i || zp <= z + Z_TIE {
                continue;
            }
            let rel = compare_thetas(&pts[i], &pts[k], None)?;
            pairs += 1;
            a2_min = a2_min.min(rel.alpha_exponent);
            a3_min = a3_min.min(rel.a3_exponent);
        }
    }
    let price_n: Vec<u64> = vec![1_000, 1_000_000, 1_000_000_000, 1_000_000_000_000];
    let mut observed = f64::NEG_INFINITY;
    for &n in &price_n {
        let lnln = (n as f64).ln().ln();
        let price = pts
            .iter()
            .zip(&zs)
            .map(|(t, z)| family.psi(t, n) * (n as f64).powf(*z))
            .fold(0.0f64, f64::max);
        observed = observed.max(price.ln() / lnln);
    }
    if pairs == 0 {
        a2_min = f64::NAN;
        a3_min = f64::NAN;
    }
    let a1_pass = min_plus > 0.0;
    Ok(ConditionReport {
        family: family.name().to_string(),
        parameter_dimension: grid.dimension(),
        isotropic: grid.isotropic,
        grid_points: pts.len(),
        grid_cells: cells.len(),
        resolution: format!(
            "beta axis {} points on [{}, {}]; r axis {} points on [{}, {}]",
            grid.beta_axis.len(),
            grid.beta_axis.first().copied().unwrap_or(f64::NAN),
            grid.beta_axis.last().copied().unwrap_or(f64::NAN),
            grid.r_axis.len(),
            grid.r_axis.first().copied().unwrap_or(f64::NAN),
            grid.r_axis.last().copied().unwrap_or(f64::NAN),
        ),
        pairs_checked: pairs,
        a1_min_plus_fraction: min_plus,
        a1_zero_interior_points: zero_interior,
        a1_pass: a1_pass && zero_interior == 0,
        a2_min_exponent: a2_min,
        a2_pass: pairs > 0 && a2_min > 0.0,
        a3_min_exponent: a3_min,
        a3_observed_log_price: observed,
        a3_price_n: price_n,
        a3_pass: pairs > 0 && a3_min > 0.0 && observed <= family.log_price_bound() + 1e-12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iso(beta: f64, r: f64, q: f64) -> ClassParams {
        ClassParams::isotropic(1, beta, r, q, 1.0, 1.0).unwrap()
    }

    #[test]
    fn worked_exponents() {
        let t = rate_exponent(&iso(0.4, 2.0, f64::INFINITY));
        assert!((t.z - 4.0 / 9.0).abs() < 1e-15);
        assert_eq!(t.regime, Regime::ThetaPrime);
        let t = rate_exponent(&iso(10.0, f64::INFINITY, f64::INFINITY));
        assert_eq!((t.z, t.regime), (0.5, Regime::Parametric));
        let t = rate_exponent(&iso(0.5, 1.0, 4.0));
        assert!((t.z - 0.25).abs() < 1e-15);
        assert_eq!(t.regime, Regime::ThetaDoublePrime);
        let t = rate_exponent(&iso(0.8, 1.0, 2.0));
        assert!((t.z - 0.375).abs() < 1e-15);
        assert_eq!(t.regime, Regime::ThetaTriplePrime);
    }

    #[test]
    fn diagnostics_hand_values() {
        let s = smoothness_diagnostics(&iso(10.0, f64::INFINITY, f64::INFINITY));
        assert_eq!(s.inv_omega, 0.0);
        assert_eq!(s.tau_inf, 1.0);
        let s = smoothness_diagnostics(&ClassParams::isotropic(2, 1.0, 1.0, 4.0, 1.0, 1.0).unwrap());
        assert_eq!((s.inv_omega, s.tau_1), (2.0, 1.0));
        let s = smoothness_diagnostics(&iso(0.4, 2.0, f64::INFINITY));
        assert!((s.inv_omega - 1.25).abs() < 1e-15 && (s.tau_2 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rates_at_n_closed_forms() {
        let r = rates_at_n(&iso(0.4, 2.0, f64::INFINITY), 10_000).unwrap();
        let ratio = r.psi_n.unwrap() / r.phi_n.unwrap();
        assert!((ratio - (10_000f64).ln().powf(2.0 / 9.0)).abs() < 1e-12);
        assert!(rates_at_n(&iso(0.4, 2.0, 4.0), 2).is_err());
        let e2 = std::f64::consts::E.powi(2);
        let z = 0.5;
        let psi = (z * (0.5 * 2f64.ln() - 2.0)).exp();
        assert!((psi - (2f64.sqrt() / e2).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn relation_of_worked_pair() {
        let rel = compare_thetas(&iso(0.4, 2.0, f64::INFINITY), &iso(0.45, 2.0, f64::INFINITY), None).unwrap();
        assert!(rel.in_theta_prime_set && rel.in_plus_set && !rel.in_zero_set);
        let half_gap = 0.5 * (rel.z_theta - rel.z_theta_prime);
        assert!((rel.alpha_exponent + half_gap).abs() < 1e-15);
        assert!((rel.a3_exponent + half_gap).abs() < 1e-15);
        let same = compare_thetas(&iso(0.4, 2.0, f64::INFINITY), &iso(0.4, 2.0, f64::INFINITY), None).unwrap();
        assert!(same.in_zero_set && !same.in_plus_set);
        assert!((same.rho - 1.25).abs() < 1e-15);
    }

    #[test]
    fn alpha_override_maps_to_c() {
        let (t, tp) = (iso(0.4, 2.0, f64::INFINITY), iso(0.45, 2.0, f64::INFINITY));
        let rel = compare_thetas(&t, &tp, Some(0.46)).unwrap();
        assert!((rel.c - 0.46 / rel.z_theta_prime).abs() < 1e-15);
        assert!(compare_thetas(&t, &tp, Some(0.9)).is_err());
    }

    #[test]
    fn validation_names_constraint() {
        let e = ClassParams::isotropic(1, 0.4, -1.0, 4.0, 1.0, 1.0).unwrap_err();
        assert!(e.to_string().contains("r >= 1"));
        assert!(ClassParams::isotropic(1, 0.4, 2.0, 1.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn json_round_trip_with_infinity() {
        let t = iso(0.4, f64::INFINITY, f64::INFINITY);
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.contains("\"inf\""));
        let back: ClassParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        let bad = r#"{"d":1,"beta":[1],"r":[1],"q":2,"L":[1],"Q":1,"extra":0}"#;
        assert!(serde_json::from_str::<ClassParams>(bad).is_err());
    }

    #[test]
    fn conditions_on_isotropic_grid() {
        let grid = ParamGrid {
            d: 1,
            q: f64::INFINITY,
            l: 1.0,
            big_q: 1.0,
            isotropic: true,
            beta_axis: vec![0.2, 0.3, 0.4, 0.5],
            r_axis: vec![1.0, 1.5, 2.0, 3.0],
        };
        let rep = check_conditions_a(&grid, &LogPriceFamily).unwrap();
        assert!(rep.pairs_checked > 0);
        assert!(rep.a2_pass && rep.a3_pass, "{rep:?}");
        assert!(rep.a1_pass, "{rep:?}");
        assert_eq!(rep.parameter_dimension, 2);
    }
}
