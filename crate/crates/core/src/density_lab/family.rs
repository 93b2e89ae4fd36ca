//! Bump-perturbation families `f_y = (1 − ρ_y) f₀ + Σ y_m A Λ((x − x_m)/σ⃗)`.
//!
//! Bump centres sit on an implicit regular lattice inside the plateau of the
//! base density, so `f₀` equals the plateau height `h` on every bump box and
//! every per-bump quantity (`λ_m`, `S_m`, box mass) is the same for all `m`.

use crate::density_lab::base::{far_mollifier, mollified_uniform, shrunk_composite, BaseDensity};
use crate::density_lab::bump::{make_bump, BumpShape};
use crate::error::{Error, Result};
use crate::nikolskii::{calibrate_c1, lq_check, membership_check, MembershipOptions};
use crate::param_space::{
    compare_thetas, psi_normalization, smoothness_diagnostics, ClassParams, Regime, RelationReport,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Default lower bound `𝐍` on the plateau length of the calibrated base.
pub const DEFAULT_N_BOLD: f64 = 8.0;

/// Share of the χ² allowance `2(α − 𝔷)·ln n` the automatic κ may spend.
pub const CHI_BUDGET_FRACTION: f64 = 0.25;

/// Bisection steps refining the base scale `𝐚` once a passing value is found.
const A_REFINE_STEPS: usize = 6;

/// Distinct values of `y` in increasing order with their multiplicities.
/// Everything per-bump depends on `y_m` only, so this summary replaces `y` in bulk formulas.
pub fn value_counts(y: &[f64]) -> Vec<(f64, u64)> {
    let mut map: std::collections::BTreeMap<i64, u64> = std::collections::BTreeMap::new();
    for v in y {
        // order-preserving integer key for f64 total order
        let b = v.to_bits() as i64;
        *map.entry(b ^ (((b >> 63) as u64) >> 1) as i64).or_default() += 1;
    }
    map.into_iter()
        .map(|(k, c)| (f64::from_bits((k ^ (((k >> 63) as u64) >> 1) as i64) as u64), c))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    /// First centre per axis.
    pub lo: Vec<f64>,
    pub spacing: Vec<f64>,
    pub counts: Vec<u64>,
    /// Number of occupied sites: the first `m` in mixed-radix order, axis 0 fastest.
    pub m: u64,
}

impl Lattice {
    /// Fills `bbox` with `m` sites of spacing at least `min_gap·σ_j`, spread as evenly as the
    /// capacity allows.
    pub fn fill(bbox: &[(f64, f64)], sigma: &[f64], m: u64, min_gap: f64) -> Result<Lattice> {
        let d = bbox.len();
        let cap: Vec<u64> = (0..d)
            .map(|j| ((bbox[j].1 - bbox[j].0) / (min_gap * sigma[j])).floor().max(0.0) as u64)
            .collect();
        let total: u128 = cap.iter().map(|&c| c as u128).product();
        if total < m as u128 {
            return Err(Error::Infeasible(format!("lattice capacity {total} < M = {m}")));
        }
        let t = (m as f64 / total as f64).powf(1.0 / d as f64);
        let mut counts: Vec<u64> = cap.iter().map(|&c| ((c as f64 * t).ceil() as u64).clamp(1, c)).collect();
        let mut j = 0;
        while counts.iter().map(|&c| c as u128).product::<u128>() < m as u128 {
            if counts[j] < cap[j] {
                counts[j] += 1;
            }
            j = (j + 1) % d;
        }
        let spacing: Vec<f64> = (0..d).map(|j| (bbox[j].1 - bbox[j].0) / counts[j] as f64).collect();
        let lo = (0..d).map(|j| bbox[j].0 + 0.5 * spacing[j]).collect();
        Ok(Lattice { lo, spacing, counts, m })
    }

    pub fn capacity(&self) -> u128 {
        self.counts.iter().map(|&c| c as u128).product()
    }

    pub fn multi_index(&self, m: u64) -> Vec<u64> {
        let mut rest = m;
        self.counts
            .iter()
            .map(|&c| {
                let i = rest % c;
                rest /= c;
                i
            })
            .collect()
    }

    pub fn center(&self, m: u64, out: &mut [f64]) {
        let mut rest = m;
        for (j, o) in out.iter_mut().enumerate() {
            let c = self.counts[j];
            *o = self.lo[j] + (rest % c) as f64 * self.spacing[j];
            rest /= c;
        }
    }

    /// Index of the site whose box (edges `σ`) contains `x`.
    pub fn locate(&self, x: &[f64], sigma: &[f64]) -> Option<u64> {
        let mut idx = 0u64;
        let mut stride = 1u64;
        for j in 0..x.len() {
            let s = ((x[j] - self.lo[j]) / self.spacing[j]).round();
            if s < 0.0 || s >= self.counts[j] as f64 {
                return None;
            }
            let c = self.lo[j] + s * self.spacing[j];
            if (x[j] - c).abs() >= 0.5 * sigma[j] {
                return None;
            }
            idx += s as u64 * stride;
            stride = stride.saturating_mul(self.counts[j]);
        }
        (idx < self.m).then_some(idx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PriorSpec {
    /// `P{1} = P{−1} = 1/2`.
    Rademacher,
    /// `P{1} = p`, `P{0} = 1 − p`; support in `[0, 1]`.
    BernoulliOnUnit { p: f64 },
}

impl PriorSpec {
    pub fn first_moment(&self) -> f64 {
        match self {
            PriorSpec::Rademacher => 0.0,
            PriorSpec::BernoulliOnUnit { p } => *p,
        }
    }

    pub fn support(&self) -> [f64; 2] {
        match self {
            PriorSpec::Rademacher => [-1.0, 1.0],
            PriorSpec::BernoulliOnUnit { .. } => [0.0, 1.0],
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, m: usize) -> Vec<f64> {
        match self {
            PriorSpec::Rademacher => (0..m).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect(),
            PriorSpec::BernoulliOnUnit { p } => (0..m).map(|_| if rng.gen::<f64>() < *p { 1.0 } else { 0.0 }).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Construction {
    /// Mollified-uniform base with a dense lattice of zero-mean bumps.
    PlateauLattice,
    /// Shrunk composite base with zero-mean bumps packed into a small rectangle.
    ShrunkRectangle,
    /// Nonnegative bumps with a Bernoulli prior; exercises the nonzero-mean branch.
    NonnegativeSynthetic,
}

/// Per-bump and aggregate constants. Every bump sees the same base height, so
/// `λ_m` and `S_m` do not depend on `m`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Derived {
    pub lambda_m: f64,
    /// `A σ ∫Λ` with `∫Λ` by quadrature; exactly zero in theory for zero-mean bumps.
    pub lambda_m_quadrature: f64,
    pub sigma_big_m: f64,
    pub frak_s_m: f64,
    pub frak_d_m: f64,
    pub s_m: f64,
    pub s_m_uniform: bool,
    /// Base value on every bump box.
    pub base_height: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatedConstants {
    pub c1: f64,
    /// Base scale `𝐚` from bisection against the half-radius balls.
    pub a: f64,
    pub n_bold: f64,
    /// Realized plateau length `N` (`N^d = a^d / A` for the plateau lattice).
    pub n_real: f64,
    pub kappa: f64,
    pub kappa1: f64,
    /// `c₄` or `c₁₆`: separation constant from the realized norms.
    pub separation_constant: f64,
    pub m_real: f64,
    pub rounding_slack: f64,
    pub delta: Option<f64>,
    /// `𝐜` of the shrunk composite.
    pub c_const: Option<f64>,
    pub t: Option<f64>,
    pub alpha: f64,
    pub c: f64,
    pub z: f64,
    pub kappa_auto: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationFamily {
    pub construction: Construction,
    pub d: usize,
    pub base: BaseDensity,
    pub shape: BumpShape,
    pub amplitude: f64,
    pub sigma: Vec<f64>,
    pub m: u64,
    pub lattice: Lattice,
    pub prior: PriorSpec,
    pub derived: Derived,
    pub theta: Option<ClassParams>,
    pub theta_prime: Option<ClassParams>,
    pub relation: Option<RelationReport>,
    pub n: u64,
    /// `½ c κ (√ln n / n)^𝔷`, the separation normalization.
    pub psi_n: f64,
    /// Same with κ normalized out.
    pub psi_n_kappa_free: f64,
    pub constants: EstimatedConstants,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyOptions {
    pub kappa: Option<f64>,
    pub n_bold: f64,
    pub alpha: Option<f64>,
}

impl Default for FamilyOptions {
    fn default() -> Self {
        FamilyOptions { kappa: None, n_bold: DEFAULT_N_BOLD, alpha: None }
    }
}

/// Largest `a ∈ (0, 1]` (to bisection accuracy) with `f_{0,𝐍,a}` in every half ball
/// of `thetas` and in `B_q(Q/2)`.
pub fn calibrate_base_scale(thetas: &[&ClassParams], n_bold: f64) -> Result<f64> {
    let d = thetas[0].d;
    calibrate_scale(|a| base_in_half_balls(&mollified_uniform(d, n_bold, a)?, thetas))
}

/// As [`calibrate_base_scale`], additionally requiring the far mollifier `a^d Π φ(1 + a x_j)`
/// (the bulk of the shrunk composite) in every half ball.
pub fn calibrate_composite_scale(thetas: &[&ClassParams], n_bold: f64) -> Result<f64> {
    let d = thetas[0].d;
    calibrate_scale(|a| {
        Ok(base_in_half_balls(&mollified_uniform(d, n_bold, a)?, thetas)?
            && base_in_half_balls(&far_mollifier(d, a)?, thetas)?)
    })
}

fn calibrate_scale(passes: impl Fn(f64) -> Result<bool>) -> Result<f64> {
    let mut a = 1.0;
    let mut fail = None;
    for _ in 0..60 {
        if passes(a)? {
            break;
        }
        fail = Some(a);
        a *= 0.5;
    }
    if !passes(a)? {
        return Err(Error::Infeasible("no base scale a in (0, 1] passes the half-radius checks".into()));
    }
    if let Some(mut hi) = fail {
        let mut lo = a;
        for _ in 0..A_REFINE_STEPS {
            let mid = 0.5 * (lo + hi);
            if passes(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        a = lo;
    }
    Ok(a)
}

fn base_in_half_balls(b: &BaseDensity, thetas: &[&ClassParams]) -> Result<bool> {
    for th in thetas {
        if !membership_check(b, th, 0.5, &MembershipOptions::default())?.verdict {
            return Ok(false);
        }
        if !lq_check(b, th.q, 0.5 * th.big_q)?.pass {
            return Ok(false);
        }
    }
    Ok(true)
}

fn derived_for(base_height: f64, amplitude: f64, sigma: &[f64], m: u64, shape: &BumpShape, prior: PriorSpec) -> Derived {
    let vol: f64 = sigma.iter().product();
    let lambda_q = amplitude * vol * shape.integral;
    let lambda = if shape.nonnegative { lambda_q } else { 0.0 };
    let s_m = shape.l2_norm.powi(2) * amplitude * amplitude * vol / base_height;
    Derived {
        lambda_m: lambda,
        lambda_m_quadrature: lambda_q,
        sigma_big_m: prior.first_moment() * m as f64 * lambda,
        frak_s_m: lambda.abs(),
        frak_d_m: lambda.abs() * (m as f64).sqrt(),
        s_m,
        s_m_uniform: true,
        base_height,
    }
}

/// Lower bound on `|‖f_y‖₂ − ‖f₀‖₂|` from `‖f_y‖₂ ≤ ‖f₀‖₂ + ‖F_y‖₂` (zero-mean bumps, `|y_m| = 1`).
fn separation_lower_bound(f0_l2: f64, amplitude: f64, vol: f64, m: u64, shape: &BumpShape) -> f64 {
    let b2 = amplitude * amplitude * vol * m as f64 * shape.l2_norm.powi(2);
    b2 / (2.0 * f0_l2 + b2.sqrt())
}

struct PlateauGeometry {
    sigma: Vec<f64>,
    m: u64,
    m_real: f64,
    lattice: Lattice,
    kappa1: f64,
    s_m: f64,
}

fn plateau_geometry(
    theta: &ClassParams,
    c1: f64,
    a: f64,
    amplitude: f64,
    base: &BaseDensity,
    shape: &BumpShape,
    kappa: f64,
) -> Result<PlateauGeometry> {
    let d = theta.d;
    let diag = smoothness_diagnostics(theta);
    let kappa1 = a.powi(d as i32) * kappa;
    let sigma: Vec<f64> = (0..d)
        .map(|l| {
            let (b, r, lj) = (theta.beta[l], theta.r[l], theta.l[l]);
            let inv_br = if r.is_infinite() { 0.0 } else { 1.0 / (b * r) };
            (c1 * lj).powf(-1.0 / b) * amplitude.powf(1.0 / b - inv_br) * kappa1.powf(inv_br)
        })
        .collect();
    if let Some(l) = sigma.iter().position(|&s| !(s > 0.0 && s <= 1.0)) {
        return Err(Error::Infeasible(format!("kappa {kappa} too large: sigma_{} = {} > 1", l + 1, sigma[l])));
    }
    let m_real = c1.powf(diag.inv_beta) * diag.bold_l * amplitude.powf(-diag.tau_1) * kappa1.powf(1.0 - diag.inv_omega);
    if !(m_real >= 1.0) {
        return Err(Error::Infeasible(format!("M = {m_real} < 1 at this n; the construction needs larger n")));
    }
    if m_real >= 9.0e18 {
        return Err(Error::Infeasible(format!("M = {m_real} exceeds the lattice index range")));
    }
    let m = m_real.floor() as u64;
    let (bbox, h) = base.plateau();
    let lattice = Lattice::fill(&bbox, &sigma, m, 2.0)
        .map_err(|e| Error::Infeasible(format!("kappa {kappa} too large: {e}")))?;
    let vol: f64 = sigma.iter().product();
    let s_m = shape.l2_norm.powi(2) * amplitude * amplitude * vol / h;
    Ok(PlateauGeometry { sigma, m, m_real, lattice, kappa1, s_m })
}

/// `M ln cosh(n S)`, the log of the Rademacher χ² product for equal `S_m`.
fn log_cosh_product(m: u64, n: u64, s: f64) -> f64 {
    m as f64 * crate::lb_verifier::ln_cosh(n as f64 * s)
}

/// The dense-lattice family for `θ ∈ Θ′` against `θ′ ∈ Θ′[θ]`.
///
/// With `A = (√ln n / n)^{2𝔷(θ)}`, `κ₁ = 𝐚^d κ` and `N^d = 𝐚^d/A`:
/// `σ_l = (C₁L_l)^{−1/β_l} A^{1/β_l − 1/(β_l r_l)} κ₁^{1/(β_l r_l)}` and
/// `M = ⌊C₁^{1/β} 𝐋 A^{−τ(1)} κ₁^{1 − 1/ω}⌋`, so `MσA ≈ κ₁`.
pub fn build_family_i(theta: &ClassParams, theta_prime: &ClassParams, n: u64, opts: &FamilyOptions) -> Result<PerturbationFamily> {
    theta.validate()?;
    theta_prime.validate()?;
    crate::param_space::check_sample_size(n)?;
    let rel = compare_thetas(theta, theta_prime, opts.alpha)?;
    if rel.regime_theta != Regime::ThetaPrime {
        return Err(Error::Regime(format!("theta is in {:?}, the plateau lattice needs ThetaPrime", rel.regime_theta)));
    }
    if !rel.in_theta_prime_set {
        return Err(Error::Regime("theta_prime is not in Theta'[theta]".into()));
    }
    let d = theta.d;
    let shape = make_bump(d, false);
    let c1 = calibrate_c1(&shape, theta).c1;
    let a = calibrate_base_scale(&[theta, theta_prime], opts.n_bold)?;
    let z = rel.z_theta;
    let amp_target = psi_normalization(2.0 * z, n);
    let n_real = a * amp_target.powf(-1.0 / d as f64);
    if n_real < opts.n_bold {
        return Err(Error::Infeasible(format!("N = {n_real} < {} at n = {n}; the construction needs larger n", opts.n_bold)));
    }
    let base = mollified_uniform(d, n_real, a)?;
    // The plateau height is the amplitude: f_y ≥ 0 exactly despite rounding in N.
    let amplitude = base.plateau().1;
    let allowance = CHI_BUDGET_FRACTION * 2.0 * rel.alpha_exponent * (n as f64).ln();
    let (kappa, geo, auto) = match opts.kappa {
        Some(k) => {
            if !(k > 0.0 && k < 0.5f64.powi(d as i32)) {
                return Err(Error::Domain(format!("kappa in (0, 2^-d) required, got {k}")));
            }
            (k, plateau_geometry(theta, c1, a, amplitude, &base, &shape, k)?, false)
        }
        None => {
            let mut found = None;
            for j in 0..60 {
                let k = 0.999 * 0.5f64.powi(d as i32) * 0.5f64.powi(j);
                match plateau_geometry(theta, c1, a, amplitude, &base, &shape, k) {
                    Ok(g) if log_cosh_product(g.m, n, g.s_m) <= allowance => {
                        found = Some((k, g));
                        break;
                    }
                    Ok(_) | Err(Error::Infeasible(_)) => continue,
                    Err(e) => return Err(e),
                }
            }
            let (k, g) = found.ok_or_else(|| Error::Infeasible("no kappa on the ladder meets the geometry and chi budget".into()))?;
            (k, g, true)
        }
    };
    let vol: f64 = geo.sigma.iter().product();
    let prior = PriorSpec::Rademacher;
    let derived = derived_for(amplitude, amplitude, &geo.sigma, geo.m, &shape, prior);
    let sep_lb = separation_lower_bound(base.norm(2.0), amplitude, vol, geo.m, &shape);
    let root_a = psi_normalization(z, n);
    let c4 = sep_lb / (kappa * root_a);
    Ok(PerturbationFamily {
        construction: Construction::PlateauLattice,
        d,
        amplitude,
        sigma: geo.sigma,
        m: geo.m,
        lattice: geo.lattice,
        prior,
        derived,
        n,
        psi_n: 0.5 * c4 * kappa * root_a,
        psi_n_kappa_free: 0.5 * c4 * root_a,
        constants: EstimatedConstants {
            c1,
            a,
            n_bold: opts.n_bold,
            n_real,
            kappa,
            kappa1: geo.kappa1,
            separation_constant: c4,
            m_real: geo.m_real,
            rounding_slack: (geo.m_real - geo.m as f64) / geo.m_real,
            delta: None,
            c_const: None,
            t: None,
            alpha: rel.alpha,
            c: rel.c,
            z,
            kappa_auto: auto,
        },
        base,
        shape,
        theta: Some(theta.clone()),
        theta_prime: Some(theta_prime.clone()),
        relation: Some(rel),
    })
}

/// The shrunk-rectangle family for `θ ∈ Θ″` against `θ′ ∈ Θ″[θ]`.
///
/// With `B = (κ/C₁)^{1/β} 𝐋^{−1} M` and `M = ⌊(δ ln n / n²)^{τ(q)/(2 − 2/q − τ(q))}⌋`:
/// `σ_l = (κ/(C₁L_l))^{1/β_l} B^{(1/r_l − 1/q)/(β_l τ(q))}`, `A = κ B^{−(1/q)/τ(q)}`,
/// `t = Mσ = B^{1/τ(q)}`, `𝔥_l = t^{ρ_l/ρ}`.
pub fn build_family_ii(
    theta: &ClassParams,
    theta_prime: &ClassParams,
    n: u64,
    kappa: f64,
    delta: f64,
    opts: &FamilyOptions,
) -> Result<PerturbationFamily> {
    theta.validate()?;
    theta_prime.validate()?;
    crate::param_space::check_sample_size(n)?;
    let rel = compare_thetas(theta, theta_prime, opts.alpha)?;
    if rel.regime_theta != Regime::ThetaDoublePrime {
        return Err(Error::Regime(format!("theta is in {:?}, the shrunk rectangle needs ThetaDoublePrime", rel.regime_theta)));
    }
    if !rel.in_theta_double_prime_set {
        return Err(Error::Regime("theta_prime is not in Theta''[theta] (needs rho >= 1, q' <= q, larger exponent)".into()));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Domain(format!("delta > 0 required, got {delta}")));
    }
    if !(kappa > 0.0 && kappa <= 0.5 * theta.big_q) {
        return Err(Error::Domain(format!("kappa in (0, Q/2] required, got {kappa}")));
    }
    let d = theta.d;
    let q = theta.q;
    let diag = smoothness_diagnostics(theta);
    let tau_q = diag.tau_q;
    let inv_q = if q.is_infinite() { 0.0 } else { 1.0 / q };
    let shape = make_bump(d, false);
    let c1 = calibrate_c1(&shape, theta).c1;
    let a = calibrate_composite_scale(&[theta, theta_prime], opts.n_bold)?;
    let n_bold = opts.n_bold;
    let lmin = (0..d).map(|l| theta.l[l].min(theta_prime.l[l])).fold(f64::INFINITY, f64::min);
    let mut c_const = (c1 * lmin).min(0.5);
    let height_unit = (a / n_bold).powi(d as i32);
    let nf = n as f64;
    let m_real = (delta * nf.ln() / (nf * nf)).powf(tau_q / (2.0 - 2.0 * inv_q - tau_q));
    if !(m_real >= 1.0) || m_real >= 9.0e18 {
        return Err(Error::Infeasible(format!("M = {m_real} out of range at n = {n}")));
    }
    let m = m_real.floor() as u64;
    let big_b = (kappa / c1).powf(diag.inv_beta) / diag.bold_l * m as f64;
    let sigma: Vec<f64> = (0..d)
        .map(|l| {
            let (b, r, lj) = (theta.beta[l], theta.r[l], theta.l[l]);
            let inv_r = if r.is_infinite() { 0.0 } else { 1.0 / r };
            (kappa / (c1 * lj)).powf(1.0 / b) * big_b.powf((inv_r - inv_q) / (b * tau_q))
        })
        .collect();
    let amplitude = kappa * big_b.powf(-inv_q / tau_q);
    let vol: f64 = sigma.iter().product();
    let t = m as f64 * vol;
    if !(t < 1.0) {
        return Err(Error::Infeasible(format!("t = M sigma = {t} >= 1; n too small")));
    }
    let h_vec: Vec<f64> = rel.rho_l.iter().map(|rl| t.powf(rl / rel.rho)).collect();
    if let Some(l) = (0..d).find(|&l| sigma[l] > h_vec[l]) {
        return Err(Error::Infeasible(format!("sigma_{} = {} exceeds shrink {}; n too small", l + 1, sigma[l], h_vec[l])));
    }
    // Shrink 𝐜 until the rescaled plateau G_t sits in every half ball.
    let mut base = None;
    for _ in 0..40 {
        if !(kappa < c_const * height_unit) {
            return Err(Error::Domain(format!(
                "kappa {kappa} must be below c a^d N^-d = {}",
                c_const * height_unit
            )));
        }
        let b = shrunk_composite(d, t, c_const, q, h_vec.clone(), n_bold, a)?;
        if base_in_half_balls(&b, &[theta, theta_prime])? {
            base = Some(b);
            break;
        }
        c_const *= 0.5;
    }
    let base = base.ok_or_else(|| Error::Infeasible("no constant c puts the composite base in the half balls".into()))?;
    let (_, height) = base.plateau();
    // Π = ⊗[2𝔥_l/a, 2𝔥_l/a + 2𝔥_l] inside the plateau of G_t.
    let rect: Vec<(f64, f64)> = h_vec.iter().map(|h| (2.0 * h / a, 2.0 * h / a + 2.0 * h)).collect();
    let lattice = Lattice::fill(&rect, &sigma, m, 1.0)?;
    let prior = PriorSpec::Rademacher;
    let derived = derived_for(height, amplitude, &sigma, m, &shape, prior);
    let sep_lb = separation_lower_bound(base.norm(2.0), amplitude, vol, m, &shape);
    let z = rel.z_theta;
    let root = psi_normalization(z, n);
    let c16 = sep_lb / root;
    Ok(PerturbationFamily {
        construction: Construction::ShrunkRectangle,
        d,
        amplitude,
        sigma,
        m,
        lattice,
        prior,
        derived,
        n,
        psi_n: 0.5 * c16 * root,
        psi_n_kappa_free: 0.5 * c16 * root / kappa,
        constants: EstimatedConstants {
            c1,
            a,
            n_bold,
            n_real: n_bold,
            kappa,
            kappa1: kappa,
            separation_constant: c16,
            m_real,
            rounding_slack: (m_real - m as f64) / m_real,
            delta: Some(delta),
            c_const: Some(c_const),
            t: Some(t),
            alpha: rel.alpha,
            c: rel.c,
            z,
            kappa_auto: false,
        },
        base,
        shape,
        theta: Some(theta.clone()),
        theta_prime: Some(theta_prime.clone()),
        relation: Some(rel),
    })
}

/// A nonnegative-bump family with `y ∈ {0,1}^M`, `P{1} = p`, on `f_{0,8,1}`.
/// Bumps have edge 1/4 and `λ_m = fill / (16 √(M n))`, so `256 𝔖²_M M n = fill² ≤ 1`.
pub fn build_family_nonneg(d: usize, n: u64, m: u64, p: f64, fill: f64) -> Result<PerturbationFamily> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!("p in (0, 1] required, got {p}")));
    }
    if !(fill > 0.0 && fill <= 1.0) {
        return Err(Error::Domain(format!("fill in (0, 1] required, got {fill}")));
    }
    if m == 0 || n == 0 {
        return Err(Error::Domain("M >= 1 and n >= 1 required".into()));
    }
    let base = mollified_uniform(d, DEFAULT_N_BOLD, 1.0)?;
    let shape = make_bump(d, true);
    let sigma = vec![0.25; d];
    let (bbox, h) = base.plateau();
    let lattice = Lattice::fill(&bbox, &sigma, m, 2.0)?;
    let vol: f64 = sigma.iter().product();
    let lambda = fill / (16.0 * ((m * n) as f64).sqrt());
    let amplitude = lambda / (vol * shape.integral);
    let prior = PriorSpec::BernoulliOnUnit { p };
    let derived = derived_for(h, amplitude, &sigma, m, &shape, prior);
    if derived.sigma_big_m > 0.25 {
        return Err(Error::Infeasible(format!("Sigma_M = {} > 0.25", derived.sigma_big_m)));
    }
    Ok(PerturbationFamily {
        construction: Construction::NonnegativeSynthetic,
        d,
        base,
        shape,
        amplitude,
        sigma,
        m,
        lattice,
        prior,
        derived,
        theta: None,
        theta_prime: None,
        relation: None,
        n,
        psi_n: 0.0,
        psi_n_kappa_free: 0.0,
        constants: EstimatedConstants {
            c1: f64::NAN,
            a: 1.0,
            n_bold: DEFAULT_N_BOLD,
            n_real: DEFAULT_N_BOLD,
            kappa: f64::NAN,
            kappa1: f64::NAN,
            separation_constant: f64::NAN,
            m_real: m as f64,
            rounding_slack: 0.0,
            delta: None,
            c_const: None,
            t: None,
            alpha: f64::NAN,
            c: f64::NAN,
            z: f64::NAN,
            kappa_auto: false,
        },
    })
}

impl PerturbationFamily {
    pub fn volume(&self) -> f64 {
        self.sigma.iter().product()
    }

    fn check_y(&self, y: &[f64]) -> Result<()> {
        if y.len() as u64 != self.m {
            return Err(Error::Domain(format!("y has {} entries, family has M = {}", y.len(), self.m)));
        }
        Ok(())
    }

    /// `ρ_y = Σ y_m λ_m`.
    pub fn rho(&self, y: &[f64]) -> f64 {
        if self.derived.lambda_m == 0.0 {
            return 0.0;
        }
        self.derived.lambda_m * y.iter().sum::<f64>()
    }

    /// Index and value of the (unique) bump containing `x`, without `y`.
    pub fn bump_at(&self, x: &[f64]) -> Option<(u64, f64)> {
        let m = self.lattice.locate(x, &self.sigma)?;
        let mut c = vec![0.0; self.d];
        self.lattice.center(m, &mut c);
        let t: Vec<f64> = (0..self.d).map(|j| (x[j] - c[j]) / self.sigma[j]).collect();
        Some((m, self.amplitude * self.shape.eval(&t)))
    }

    pub fn eval_base(&self, x: &[f64]) -> f64 {
        self.base.eval(x)
    }

    /// `f_y(x) = (1 − ρ_y) f₀(x) + Σ y_m Λ_m(x)`; at most one bump is nonzero at `x`.
    pub fn eval(&self, y: &[f64], x: &[f64]) -> Result<f64> {
        self.check_y(y)?;
        if x.len() != self.d {
            return Err(Error::Domain(format!("x has {} coordinates, family has d = {}", x.len(), self.d)));
        }
        Ok(self.eval_with_rho(y, self.rho(y), x))
    }

    pub(crate) fn eval_with_rho(&self, y: &[f64], rho: f64, x: &[f64]) -> f64 {
        let mut v = (1.0 - rho) * self.base.eval(x);
        if let Some((m, b)) = self.bump_at(x) {
            v += y[m as usize] * b;
        }
        v
    }

    /// `f_y ≥ 0` everywhere: off the boxes `(1 − ρ_y) f₀ ≥ 0`; on box `m`,
    /// `(1 − ρ_y) h + y_m A min Λ ≥ 0`.
    pub fn is_nonnegative(&self, y: &[f64]) -> bool {
        let rho = self.rho(y);
        if rho > 1.0 {
            return false;
        }
        let h = (1.0 - rho) * self.derived.base_height;
        let lam_min = if self.shape.nonnegative { 0.0 } else { -1.0 };
        // max Λ = 1, so the minimum of y_m Λ is y_m·min Λ or y_m
        y.iter().all(|&v| {
            let worst = if v >= 0.0 { v * lam_min } else { v };
            h + self.amplitude * worst >= 0.0
        })
    }

    /// `∫ f_y`: `(1 − ρ_y) ∫f₀ + Σ y_m A σ ∫Λ`, with both integrals by quadrature.
    pub fn integral(&self, y: &[f64]) -> Result<f64> {
        self.check_y(y)?;
        let sum_y: f64 = y.iter().sum();
        Ok((1.0 - self.rho(y)) * self.base.integral() + self.derived.lambda_m_quadrature * sum_y)
    }

    /// Box `[lo, hi]` of bump `m`.
    pub fn bump_box(&self, m: u64) -> (Vec<f64>, Vec<f64>) {
        let mut c = vec![0.0; self.d];
        self.lattice.center(m, &mut c);
        let lo = (0..self.d).map(|j| c[j] - 0.5 * self.sigma[j]).collect();
        let hi = (0..self.d).map(|j| c[j] + 0.5 * self.sigma[j]).collect();
        (lo, hi)
    }

    /// Rectangles pairwise disjoint (interiors) and inside the base plateau.
    pub fn boxes_disjoint_in_plateau(&self) -> bool {
        let (pb, _) = self.base.plateau();
        let lat = &self.lattice;
        (0..self.d).all(|j| {
            let first = lat.lo[j] - 0.5 * self.sigma[j];
            let last = lat.lo[j] + (lat.counts[j] - 1) as f64 * lat.spacing[j] + 0.5 * self.sigma[j];
            let tol = 1e-12 * pb[j].1.abs().max(1.0);
            lat.spacing[j] >= self.sigma[j] * (1.0 - 1e-12) && first >= pb[j].0 - tol && last <= pb[j].1 + tol
        }) && lat.capacity() >= lat.m as u128
    }

    /// `min_{box} f₀` over the bump boxes; the plateau makes it the plateau height.
    pub fn min_base_on_boxes(&self) -> f64 {
        if self.boxes_disjoint_in_plateau() {
            self.derived.base_height
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct YNorms {
    pub l2: f64,
    pub lq: f64,
    pub cross_term: f64,
    pub separation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionalNorms {
    pub f0_l2: f64,
    #[serde(with = "crate::serde_ext::ext")]
    pub q: f64,
    pub per_y: Vec<YNorms>,
    pub min_separation: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// `‖f_y‖₂` by `(1 − ρ)²‖f₀‖² + 2(1 − ρ) h ρ_y + A²σ‖Λ‖²Σy_m²` (cross term `∫f₀F_y = h Σ y_m λ_m`);
/// `‖f_y‖_q` by splitting off the boxes, where `f_y` depends on `m` only through `y_m`.
pub fn functional_norms(family: &PerturbationFamily, ys: &[Vec<f64>], q: f64) -> Result<FunctionalNorms> {
    let f0 = family.base.norm(2.0);
    let f0_q = family.base.norm(q);
    let h = family.derived.base_height;
    let vol = family.volume();
    let lam2 = family.shape.l2_norm.powi(2);
    let mut per = Vec::with_capacity(ys.len());
    let mut min_sep = f64::INFINITY;
    for y in ys {
        family.check_y(y)?;
        let rho = family.rho(y);
        let sum_y2: f64 = y.iter().map(|v| v * v).sum();
        let cross = 2.0 * (1.0 - rho) * h * family.derived.lambda_m * y.iter().sum::<f64>();
        let sq = (1.0 - rho).powi(2) * f0 * f0 + cross + family.amplitude.powi(2) * vol * lam2 * sum_y2;
        let l2 = sq.max(0.0).sqrt();
        let lq = lq_of(family, y, rho, f0_q, q)?;
        let sep = (l2 - f0).abs();
        min_sep = min_sep.min(sep);
        per.push(YNorms { l2, lq, cross_term: cross, separation: sep });
    }
    let threshold = 2.0 * family.psi_n;
    Ok(FunctionalNorms { f0_l2: f0, q, per_y: per, min_separation: min_sep, threshold, pass: min_sep > threshold })
}

fn lq_of(family: &PerturbationFamily, y: &[f64], rho: f64, f0_q: f64, q: f64) -> Result<f64> {
    let h = (1.0 - rho) * family.derived.base_height;
    let a = family.amplitude;
    let counts = value_counts(y);
    if q.is_infinite() {
        let lmin = if family.shape.nonnegative { 0.0 } else { -1.0 };
        let on_boxes = counts.iter().map(|&(v, _)| (h + a * v).abs().max((h + a * v * lmin).abs())).fold(0.0, f64::max);
        return Ok(on_boxes.max((1.0 - rho) * f0_q));
    }
    let vol = family.volume();
    let m = family.m as f64;
    let outside = (1.0 - rho).powf(q) * (f0_q.powf(q) - m * family.derived.base_height.powf(q) * vol).max(0.0);
    let mut total = outside;
    for &(v, count) in &counts {
        let count = count as f64;
        let g = crate::nikolskii::FnEvaluable {
            d: family.d,
            f: |t: &[f64]| h + a * v * family.shape.eval(t),
            breaks: (0..family.d).map(|j| family.shape.factor_breaks(j)).collect(),
        };
        let inner = crate::nikolskii::tensor_lr_norm(&g, q, if family.d == 1 { 8 } else { 2 })?.powf(q);
        total += count * vol * inner;
    }
    Ok(total.powf(1.0 / q))
}
