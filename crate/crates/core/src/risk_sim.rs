//! Monte-Carlo probe of the two-class risk tradeoff with a reference `‖f‖₂` estimator.
//!
//! The estimator is the kernel U-statistic for `∫f²` followed by a square root.
//! All bandwidths of a grid are evaluated on the same samples, so differences
//! between estimators are not blurred by independent sampling noise.

use crate::density_lab::{build_family_i, build_family_ii, functional_norms, sample_with, FamilyOptions, PerturbationFamily, PriorSpec, Sample};
use crate::error::{Error, Result};
use crate::lb_verifier::{certificate, chi_budget, Certificate, ChiMode, ChiOptions};
use crate::numerics::quadrature::{log_space, CompensatedSum};
use crate::param_space::{compare_thetas, ClassParams, Regime};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Batches used for the batch-means standard error.
pub const RISK_BATCHES: usize = 10;

/// Label attached to every table: a finite estimator grid only probes the infimum.
pub const EVIDENCE_LABEL: &str = "estimator-specific upper evidence";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel1d {
    /// `K(u) = (15/16)(1 − u²)²` on `|u| ≤ 1`.
    Biweight,
}

impl Kernel1d {
    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Kernel1d::Biweight => {
                let s = 1.0 - u * u;
                if s <= 0.0 {
                    0.0
                } else {
                    0.9375 * s * s
                }
            }
        }
    }

    /// `K` vanishes outside `[−radius, radius]`.
    pub fn radius(self) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    KernelUStat { h: Vec<f64>, kernel: Kernel1d },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    /// Replace a negative `∫f²` estimate by 0 before the square root.
    pub clamp: bool,
}

impl EstimatorSpec {
    pub fn biweight(h: Vec<f64>) -> Result<Self> {
        let s = EstimatorSpec { kind: EstimatorKind::KernelUStat { h, kernel: Kernel1d::Biweight }, clamp: true };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let EstimatorKind::KernelUStat { h, .. } = &self.kind;
        if h.is_empty() || !h.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::Domain(format!("bandwidths must be finite and > 0, got {h:?}")));
        }
        Ok(())
    }

    pub fn bandwidth(&self) -> &[f64] {
        let EstimatorKind::KernelUStat { h, .. } = &self.kind;
        h
    }

    pub fn id(&self) -> String {
        let EstimatorKind::KernelUStat { h, kernel } = &self.kind;
        let hs: Vec<String> = h.iter().map(|v| format!("{v:.4e}")).collect();
        format!("{}-ustat-h{}", serde_json::to_value(kernel).unwrap().as_str().unwrap_or("kernel"), hs.join("x"))
    }
}

/// Isotropic biweight estimators with `count` log-spaced bandwidths on `[lo, hi]`.
pub fn bandwidth_grid(d: usize, lo: f64, hi: f64, count: usize) -> Result<Vec<EstimatorSpec>> {
    if !(lo > 0.0 && hi >= lo) || count == 0 {
        return Err(Error::Domain(format!("0 < lo <= hi and count >= 1 required, got [{lo}, {hi}], {count}")));
    }
    log_space(lo, hi, count).into_iter().map(|h| EstimatorSpec::biweight(vec![h; d])).collect()
}

/// `θ̂ = (n(n−1))⁻¹ Σ_{i≠j} Π_l h_l⁻¹ K((X_il − X_jl)/h_l)` for every spec, in one pass.
fn ustat_many(sample: &Sample, specs: &[EstimatorSpec]) -> Result<Vec<f64>> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::Domain(format!("n >= 2 required, got {n}")));
    }
    let d = sample.d;
    for s in specs {
        s.validate()?;
        if s.bandwidth().len() != d {
            return Err(Error::Domain(format!("bandwidth has {} entries, sample has d = {d}", s.bandwidth().len())));
        }
    }
    let kernels: Vec<(Kernel1d, Vec<f64>, f64)> = specs
        .iter()
        .map(|s| {
            let EstimatorKind::KernelUStat { h, kernel } = &s.kind;
            let inv: Vec<f64> = h.iter().map(|v| 1.0 / v).collect();
            (*kernel, inv.clone(), inv.iter().product())
        })
        .collect();
    // Pairs further apart than the widest window on axis 0 contribute nothing.
    let window = specs.iter().map(|s| s.bandwidth()[0] * kernel_radius(s)).fold(0.0, f64::max);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sample.row(a)[0].total_cmp(&sample.row(b)[0]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().flat_map(|&i| sample.row(i).iter().copied()).collect();

    let mut total = vec![CompensatedSum::default(); specs.len()];
    let mut row = vec![0.0; specs.len()];
    for i in 0..n {
        let xi = &sorted[i * d..(i + 1) * d];
        row.iter_mut().for_each(|v| *v = 0.0);
        for j in i + 1..n {
            let xj = &sorted[j * d..(j + 1) * d];
            if xj[0] - xi[0] > window {
                break;
            }
            for (s, (k, inv, norm)) in kernels.iter().enumerate() {
                let mut v = *norm;
                for l in 0..d {
                    v *= k.eval((xi[l] - xj[l]) * inv[l]);
                    if v == 0.0 {
                        break;
                    }
                }
                row[s] += v;
            }
        }
        for (t, r) in total.iter_mut().zip(&row) {
            t.add(*r);
        }
    }
    let pairs = n as f64 * (n - 1) as f64;
    Ok(total.iter().map(|t| 2.0 * t.value() / pairs).collect())
}

fn kernel_radius(s: &EstimatorSpec) -> f64 {
    let EstimatorKind::KernelUStat { kernel, .. } = &s.kind;
    kernel.radius()
}

fn finish(theta_hat: f64, spec: &EstimatorSpec) -> f64 {
    if spec.clamp {
        theta_hat.max(0.0).sqrt()
    } else {
        // Without the clamp a negative estimate stays signed.
        theta_hat.signum() * theta_hat.abs().sqrt()
    }
}

/// Estimate of `‖f‖₂` from one sample.
pub fn estimate_l2(sample: &Sample, spec: &EstimatorSpec) -> Result<f64> {
    Ok(finish(ustat_many(sample, std::slice::from_ref(spec))?[0], spec))
}

/// The `∫f²` estimate before the square root.
pub fn estimate_l2_squared(sample: &Sample, spec: &EstimatorSpec) -> Result<f64> {
    Ok(ustat_many(sample, std::slice::from_ref(spec))?[0])
}

/// `‖f‖₂` estimates for several specs on the same sample.
pub fn estimate_l2_many(sample: &Sample, specs: &[EstimatorSpec]) -> Result<Vec<f64>> {
    Ok(ustat_many(sample, specs)?.into_iter().zip(specs).map(|(t, s)| finish(t, s)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub estimator_id: String,
    /// Mean of `(Φ̂ − ‖f‖₂)²` over replications.
    pub mse: f64,
    /// Batch-means standard error of `mse`; absent for a single replication.
    pub stderr: Option<f64>,
    pub mean_estimate: f64,
    /// Quadrature value of `‖f‖₂`.
    pub truth: f64,
    pub reps: usize,
}

/// SplitMix64 finalizer: decorrelates derived seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for a sub-experiment identified by `tags`.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix(seed), |s, t| mix(s ^ mix(*t)))
}

/// Runs `f(0..count)` on worker threads; results come back in index order.
fn par_map<T: Send>(count: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let workers = std::thread::available_parallelism().map(|v| v.get()).unwrap_or(1).min(count.max(1));
    let chunk = count.div_ceil(workers.max(1)).max(1);
    let f = &f;
    let parts: Vec<Result<Vec<T>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..count)
            .step_by(chunk)
            .map(|lo| scope.spawn(move || (lo..(lo + chunk).min(count)).map(f).collect::<Result<Vec<T>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(count);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Mean and batch-means standard error of `values` (in replication order).
fn batch_means(values: &[f64]) -> (f64, Option<f64>) {
    let r = values.len();
    let mut s = CompensatedSum::default();
    values.iter().for_each(|v| s.add(*v));
    let mean = s.value() / r as f64;
    if r < 2 {
        return (mean, None);
    }
    let b = RISK_BATCHES.min(r);
    let means: Vec<f64> = (0..b)
        .map(|k| {
            let (lo, hi) = (k * r / b, (k + 1) * r / b);
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let centre = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - centre).powi(2)).sum::<f64>() / (b - 1) as f64;
    (mean, Some((var / b as f64).sqrt()))
}

/// Risk of every spec under `f_y` (or `f₀` when `y` is `None`) on common samples.
/// Replication `k` draws from the ChaCha8 stream `k` of `seed`.
pub fn empirical_risk_many(
    family: &PerturbationFamily,
    y: Option<&[f64]>,
    n: usize,
    reps: usize,
    specs: &[EstimatorSpec],
    seed: u64,
) -> Result<Vec<RiskEstimate>> {
    if reps == 0 || specs.is_empty() {
        return Err(Error::Domain("reps >= 1 and at least one estimator required".into()));
    }
    let zeros;
    let y = match y {
        Some(y) => y,
        None => {
            zeros = vec![0.0; family.m as usize];
            &zeros
        }
    };
    if !family.is_nonnegative(y) {
        return Err(Error::Domain("f_y takes negative values; it is not a density".into()));
    }
    let norms = functional_norms(family, &[y.to_vec()], 2.0)?;
    let truth = norms.per_y[0].l2;
    let per_rep = par_map(reps, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let sample = sample_with(family, y, n, &mut rng)?;
        estimate_l2_many(&sample, specs)
    })?;
    Ok(specs
        .iter()
        .enumerate()
        .map(|(s, spec)| {
            let errs: Vec<f64> = per_rep.iter().map(|e| (e[s] - truth).powi(2)).collect();
            let (mse, stderr) = batch_means(&errs);
            let mut m = CompensatedSum::default();
            per_rep.iter().for_each(|e| m.add(e[s]));
            RiskEstimate { estimator_id: spec.id(), mse, stderr, mean_estimate: m.value() / reps as f64, truth, reps }
        })
        .collect())
}

pub fn empirical_risk(
    family: &PerturbationFamily,
    y: Option<&[f64]>,
    n: usize,
    reps: usize,
    spec: &EstimatorSpec,
    seed: u64,
) -> Result<RiskEstimate> {
    Ok(empirical_risk_many(family, y, n, reps, std::slice::from_ref(spec), seed)?.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    /// `f0` or `f_y<k>` for the k-th prior draw.
    pub density_id: String,
    pub estimator_id: String,
    pub n: u64,
    pub reps: usize,
    pub mse: f64,
    pub stderr: Option<f64>,
    pub truth: f64,
}

/// The two normalized risk terms of one estimator at one `n`.
///
/// The certificate bounds the sum weighted by the family's own `ψ_n`, which carries the
/// construction constant `½c₄κ`; the display weight `(√ln n / n)^{−2𝔷(θ)}` drops it and is
/// reported alongside for comparison only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedRow {
    pub n: u64,
    pub estimator_id: String,
    pub bandwidth: Vec<f64>,
    /// `n^{2α}·mse(f₀)`, the class with the larger exponent.
    pub term_prime: f64,
    /// `ψ_n^{−2}·max_y mse(f_y)`.
    pub term_theta: f64,
    pub combined: f64,
    pub combined_stderr: f64,
    /// `(√ln n / n)^{−2𝔷(θ)}·max_y mse(f_y)`.
    pub term_theta_display: f64,
    pub combined_display: f64,
    pub combined_display_stderr: f64,
    /// `combined ≥ final − 3·stderr`.
    pub above_certificate: bool,
    /// Both normalized terms `≤ final/2`.
    pub both_terms_small: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NSummary {
    pub n: u64,
    pub m: u64,
    pub alpha: f64,
    pub z_theta: f64,
    pub psi_n: f64,
    pub certificate: Certificate,
    /// Minimum of `combined` over the estimator grid.
    pub min_combined: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiskTable {
    pub label: String,
    pub rows: Vec<RiskRow>,
    pub combined_rows: Vec<CombinedRow>,
    pub per_n: Vec<NSummary>,
    /// Minimum of `combined` over `n` and the estimator grid.
    pub combined: f64,
    pub seed: u64,
}

impl RiskTable {
    /// `density_id,n,reps,mse,stderr,estimator_id`; an absent stderr is an empty field.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("density_id,n,reps,mse,stderr,estimator_id\n");
        for r in &self.rows {
            let se = r.stderr.map(|v| format!("{v:?}")).unwrap_or_default();
            s.push_str(&format!("{},{},{},{:?},{},{}\n", r.density_id, r.n, r.reps, r.mse, se, r.estimator_id));
        }
        s
    }

    pub fn all_above_certificate(&self) -> bool {
        self.combined_rows.iter().all(|r| r.above_certificate)
    }

    pub fn any_both_terms_small(&self) -> bool {
        self.combined_rows.iter().any(|r| r.both_terms_small)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    /// Family size parameter; chosen by the construction when absent (first construction only).
    pub kappa: Option<f64>,
    /// Required when `θ` lies in the sparse zone.
    pub delta: Option<f64>,
    /// Prior draws whose worst risk stands for the class `𝓕_ϑ`.
    pub y_draws: usize,
    pub alpha: Option<f64>,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions { kappa: None, delta: None, y_draws: 3, alpha: None }
    }
}

/// Builds the family the regime of `θ` calls for.
pub fn family_for_pair(theta: &ClassParams, theta_prime: &ClassParams, n: u64, opts: &ExperimentOptions) -> Result<PerturbationFamily> {
    let rel = compare_thetas(theta, theta_prime, opts.alpha)?;
    let fo = FamilyOptions { kappa: opts.kappa, alpha: opts.alpha, ..FamilyOptions::default() };
    match rel.regime_theta {
        Regime::ThetaPrime => build_family_i(theta, theta_prime, n, &fo),
        Regime::ThetaDoublePrime => match (opts.kappa, opts.delta) {
            (Some(k), Some(d)) => build_family_ii(theta, theta_prime, n, k, d, &fo),
            _ => Err(Error::Domain("the sparse-zone construction needs both kappa and delta".into())),
        },
        r => Err(Error::Regime(format!("no two-class construction for theta in {r:?}"))),
    }
}

/// Certificate with the exact χ² budget when the family admits it.
pub fn certificate_for(family: &PerturbationFamily, n: u64) -> Result<Certificate> {
    let mode = if family.prior == PriorSpec::Rademacher && family.derived.lambda_m == 0.0 {
        ChiMode::ExactEnum
    } else {
        ChiMode::GeneralBranchBound
    };
    let chi = chi_budget(family, n, mode, &ChiOptions::default())?;
    certificate(family, &chi)
}

/// For each `n`, risks of every spec under `f₀` and under `y_draws` prior draws, and the
/// two normalized terms. Samples are shared across specs.
pub fn two_class_experiment(
    theta: &ClassParams,
    theta_prime: &ClassParams,
    n_grid: &[u64],
    reps: usize,
    spec_grid: &[EstimatorSpec],
    opts: &ExperimentOptions,
    seed: u64,
) -> Result<RiskTable> {
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain(format!("n_grid must be non-empty and increasing, got {n_grid:?}")));
    }
    if opts.y_draws == 0 {
        return Err(Error::Domain("y_draws >= 1 required".into()));
    }
    let mut table = RiskTable { label: EVIDENCE_LABEL.into(), rows: vec![], combined_rows: vec![], per_n: vec![], combined: f64::INFINITY, seed };
    for (ni, &n) in n_grid.iter().enumerate() {
        let family = family_for_pair(theta, theta_prime, n, opts)?;
        let cert = certificate_for(&family, n)?;
        let nu = n as usize;
        let base = empirical_risk_many(&family, None, nu, reps, spec_grid, derive_seed(seed, &[ni as u64, 0]))?;
        let mut ydraw = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[ni as u64, u64::MAX]));
        let mut per_y = Vec::with_capacity(opts.y_draws);
        for k in 0..opts.y_draws {
            let y = family.prior.draw(&mut ydraw, family.m as usize);
            per_y.push(empirical_risk_many(&family, Some(&y), nu, reps, spec_grid, derive_seed(seed, &[ni as u64, k as u64 + 1]))?);
        }
        for r in &base {
            table.rows.push(row("f0", n, r));
        }
        for (k, rs) in per_y.iter().enumerate() {
            for r in rs {
                table.rows.push(row(&format!("f_y{k}"), n, r));
            }
        }

        let alpha = family.constants.alpha;
        let z = family.constants.z;
        let nf = n as f64;
        let w_prime = (2.0 * alpha * nf.ln()).exp();
        let w_theta = ((nf.ln().sqrt() / nf).ln() * (-2.0 * z)).exp();
        let w_psi = family.psi_n.powi(-2);
        let fin = cert.final_bound;
        let mut min_c = f64::INFINITY;
        for (s, spec) in spec_grid.iter().enumerate() {
            let worst = per_y.iter().map(|rs| &rs[s]).max_by(|a, b| a.mse.total_cmp(&b.mse)).expect("y_draws >= 1");
            let (se0, sey) = (base[s].stderr.unwrap_or(0.0), worst.stderr.unwrap_or(0.0));
            let term_prime = w_prime * base[s].mse;
            let term_theta = w_psi * worst.mse;
            let term_theta_display = w_theta * worst.mse;
            let combined = term_prime + term_theta;
            let combined_stderr = (w_prime * se0).hypot(w_psi * sey);
            let combined_display = term_prime + term_theta_display;
            let combined_display_stderr = (w_prime * se0).hypot(w_theta * sey);
            min_c = min_c.min(combined);
            table.combined_rows.push(CombinedRow {
                n,
                estimator_id: spec.id(),
                bandwidth: spec.bandwidth().to_vec(),
                term_prime,
                term_theta,
                combined,
                combined_stderr,
                term_theta_display,
                combined_display,
                combined_display_stderr,
                above_certificate: combined >= fin - 3.0 * combined_stderr,
                both_terms_small: term_prime <= 0.5 * fin && term_theta <= 0.5 * fin,
            });
        }
        table.combined = table.combined.min(min_c);
        table.per_n.push(NSummary { n, m: family.m, alpha, z_theta: z, psi_n: family.psi_n, certificate: cert, min_combined: min_c });
    }
    Ok(table)
}

fn row(density_id: &str, n: u64, r: &RiskEstimate) -> RiskRow {
    RiskRow {
        density_id: density_id.into(),
        estimator_id: r.estimator_id.clone(),
        n,
        reps: r.reps,
        mse: r.mse,
        stderr: r.stderr,
        truth: r.truth,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density_lab::build_family_nonneg;

    #[test]
    fn two_points_give_single_pair() {
        let s = Sample { d: 1, points: vec![0.1, 0.4] };
        let spec = EstimatorSpec::biweight(vec![0.5]).unwrap();
        let expect = Kernel1d::Biweight.eval(0.3 / 0.5) / 0.5;
        assert!((estimate_l2_squared(&s, &spec).unwrap() - expect).abs() < 1e-15);
        assert!(estimate_l2(&Sample { d: 1, points: vec![0.1] }, &spec).is_err());
    }

    #[test]
    fn single_rep_has_no_stderr() {
        let f = build_family_nonneg(1, 100, 10, 0.5, 0.9).unwrap();
        let spec = EstimatorSpec::biweight(vec![0.05]).unwrap();
        let r = empirical_risk(&f, None, 200, 1, &spec, 3).unwrap();
        assert!(r.stderr.is_none());
        let r2 = empirical_risk(&f, None, 200, 1, &spec, 3).unwrap();
        assert_eq!(r, r2);
    }

    #[test]
    fn batch_means_constant_series() {
        let (m, se) = batch_means(&[2.0; 40]);
        assert_eq!(m, 2.0);
        assert_eq!(se, Some(0.0));
    }
}
