//! Numerical membership in anisotropic Nikolskii balls: `‖G‖_{r_j} ≤ L_j` and
//! `‖Δ^{k_j}_{u,j} G‖_{r_j} ≤ L_j |u|^{β_j}` with `k_j = ⌊β_j⌋ + 1`, the
//! supremum over `u` taken on a log-spaced grid.
//!
//! Norms come from a [`DifferenceNorms`] source. Arbitrary functions go through
//! tensor Gauss–Legendre quadrature ([`Quadrature`], `d ≤ 3`); base densities
//! and bump sums use their separable structure.

use crate::density_lab::base::BaseDensity;
use crate::density_lab::bump::{difference_coefficients, BumpShape};
use crate::density_lab::family::{value_counts, PerturbationFamily};
use crate::error::{Error, Result};
use crate::numerics::quadrature::{log_space, merge_breaks, panel_nodes};
use crate::param_space::ClassParams;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Default relative slack on ratio comparisons; grid suprema bias downward.
pub const DEFAULT_TOLERANCE: f64 = 1e-2;

/// Grid density of the `u` search.
pub const U_POINTS_PER_DECADE: f64 = 40.0 / 3.0;

/// Overlapping bump rows are integrated exactly only up to this many shifted bumps.
pub const ROW_QUADRATURE_LIMIT: u64 = 20_000;

pub trait Evaluable {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;
    /// Sorted breakpoints along axis `j`; the function vanishes outside the outer two
    /// and is smooth between consecutive ones.
    fn breaks(&self, j: usize) -> Vec<f64>;
}

impl Evaluable for BaseDensity {
    fn dim(&self) -> usize {
        self.d
    }
    fn eval(&self, x: &[f64]) -> f64 {
        BaseDensity::eval(self, x)
    }
    fn breaks(&self, j: usize) -> Vec<f64> {
        BaseDensity::breaks(self, j)
    }
}

/// A closure with explicit breakpoints.
pub struct FnEvaluable<F: Fn(&[f64]) -> f64> {
    pub d: usize,
    pub f: F,
    pub breaks: Vec<Vec<f64>>,
}

impl<F: Fn(&[f64]) -> f64> Evaluable for FnEvaluable<F> {
    fn dim(&self) -> usize {
        self.d
    }
    fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
    fn breaks(&self, j: usize) -> Vec<f64> {
        self.breaks[j].clone()
    }
}

/// `x ↦ Σ_{l=0}^{k} (−1)^{l+k} binom(k, l) G(x + l·u·e_j)`.
pub struct FiniteDifference<'a, G: Evaluable + ?Sized> {
    g: &'a G,
    k: usize,
    u: f64,
    j: usize,
    coef: Vec<f64>,
}

pub fn finite_difference<G: Evaluable + ?Sized>(g: &G, k: usize, u: f64, j: usize) -> FiniteDifference<'_, G> {
    assert!(k >= 1 && j < g.dim(), "k >= 1 and j < d required");
    FiniteDifference { g, k, u, j, coef: difference_coefficients(k) }
}

impl<G: Evaluable + ?Sized> Evaluable for FiniteDifference<'_, G> {
    fn dim(&self) -> usize {
        self.g.dim()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        let mut p = x.to_vec();
        let mut s = 0.0;
        for (l, c) in self.coef.iter().enumerate() {
            p[self.j] = x[self.j] + l as f64 * self.u;
            s += c * self.g.eval(&p);
        }
        s
    }
    fn breaks(&self, j: usize) -> Vec<f64> {
        let b = self.g.breaks(j);
        if j != self.j {
            return b;
        }
        merge_breaks((0..=self.k).flat_map(|l| b.iter().map(move |x| x - l as f64 * self.u)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormMethod {
    TensorQuadrature,
    Separable,
    /// Shifted bumps stay disjoint; exact superposition formula.
    DisjointSuperposition,
    /// Shifted bumps overlap; each lattice row integrated in 1-D.
    RowQuadrature,
    /// Shifted bumps overlap; rigorous bound `2^k ‖F‖_r`.
    TriangleBound,
}

pub trait DifferenceNorms {
    fn dim(&self) -> usize;
    fn lr_norm(&self, r: f64) -> Result<f64>;
    fn difference_norm(&self, j: usize, k: usize, u: f64, r: f64) -> Result<(f64, NormMethod)>;
    /// Shortest feature length and support diameter along `j`.
    fn scales(&self, j: usize) -> (f64, f64);
    /// Extra `u` values the grid must contain (regime switches).
    fn extra_u(&self, _j: usize, _k: usize) -> Vec<f64> {
        Vec::new()
    }
}

/// Tensor Gauss–Legendre quadrature of an arbitrary [`Evaluable`]; `d ≤ 3`.
pub struct Quadrature<'a, G: Evaluable + ?Sized> {
    pub g: &'a G,
    /// Equal pieces per breakpoint panel, each with a 16-point rule.
    pub pieces: usize,
}

impl<'a, G: Evaluable + ?Sized> Quadrature<'a, G> {
    pub fn new(g: &'a G) -> Self {
        Quadrature { g, pieces: if g.dim() == 1 { 8 } else { 2 } }
    }
}

/// `‖G‖_r` by tensor quadrature over the breakpoint panels; `r = ∞` is the node maximum.
pub fn tensor_lr_norm<G: Evaluable + ?Sized>(g: &G, r: f64, pieces: usize) -> Result<f64> {
    let d = g.dim();
    if d > 3 {
        return Err(Error::Unsupported(format!("full-grid quadrature needs d <= 3, got {d}")));
    }
    let axes: Vec<Vec<(f64, f64)>> = (0..d).map(|j| panel_nodes(&g.breaks(j), pieces)).collect();
    if axes.iter().any(|a| a.is_empty()) {
        return Ok(0.0);
    }
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut acc = 0.0f64;
    loop {
        let mut w = 1.0;
        for j in 0..d {
            let (xj, wj) = axes[j][idx[j]];
            x[j] = xj;
            w *= wj;
        }
        let v = g.eval(&x).abs();
        if !v.is_finite() {
            return Err(Error::Numerical("non-finite integrand in tensor quadrature".into()));
        }
        if r.is_infinite() {
            acc = acc.max(v);
        } else {
            acc += w * v.powf(r);
        }
        let mut j = 0;
        loop {
            idx[j] += 1;
            if idx[j] < axes[j].len() {
                break;
            }
            idx[j] = 0;
            j += 1;
            if j == d {
                return Ok(if r.is_infinite() { acc } else { acc.powf(1.0 / r) });
            }
        }
    }
}

impl<G: Evaluable + ?Sized> DifferenceNorms for Quadrature<'_, G> {
    fn dim(&self) -> usize {
        self.g.dim()
    }
    fn lr_norm(&self, r: f64) -> Result<f64> {
        tensor_lr_norm(self.g, r, self.pieces)
    }
    fn difference_norm(&self, j: usize, k: usize, u: f64, r: f64) -> Result<(f64, NormMethod)> {
        let fd = finite_difference(self.g, k, u, j);
        Ok((tensor_lr_norm(&fd, r, self.pieces)?, NormMethod::TensorQuadrature))
    }
    fn scales(&self, j: usize) -> (f64, f64) {
        let b = self.g.breaks(j);
        let short = b.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let diam = b.last().copied().unwrap_or(0.0) - b.first().copied().unwrap_or(0.0);
        (short, diam)
    }
}

impl DifferenceNorms for BaseDensity {
    fn dim(&self) -> usize {
        self.d
    }
    fn lr_norm(&self, r: f64) -> Result<f64> {
        Ok(self.norm(r))
    }
    fn difference_norm(&self, j: usize, k: usize, u: f64, r: f64) -> Result<(f64, NormMethod)> {
        Ok((BaseDensity::difference_norm(self, j, k, u, r), NormMethod::Separable))
    }
    fn scales(&self, j: usize) -> (f64, f64) {
        self.feature_scale(j)
    }
}

/// The perturbation `F_y = Σ y_m A Λ((x − x_m)/σ)` of a family.
pub struct BumpSum<'a> {
    pub family: &'a PerturbationFamily,
    pub y: &'a [f64],
    /// Distinct `|y_m|` with multiplicities.
    abs_counts: Vec<(f64, u64)>,
}

impl<'a> BumpSum<'a> {
    pub fn new(family: &'a PerturbationFamily, y: &'a [f64]) -> Result<Self> {
        if y.len() as u64 != family.m {
            return Err(Error::Domain(format!("y has {} entries, family has M = {}", y.len(), family.m)));
        }
        let abs: Vec<f64> = y.iter().map(|v| v.abs()).collect();
        Ok(BumpSum { family, y, abs_counts: value_counts(&abs) })
    }

    /// `(Σ |y_m|^r)^{1/r}`, or `max |y_m|` for `r = ∞`.
    fn y_norm(&self, r: f64) -> f64 {
        if r.is_infinite() {
            self.abs_counts.last().map_or(0.0, |p| p.0)
        } else {
            self.abs_counts.iter().map(|&(v, c)| c as f64 * v.powf(r)).sum::<f64>().powf(1.0 / r)
        }
    }

    fn transverse(&self, j: usize, r: f64) -> f64 {
        let f = self.family;
        (0..f.d).filter(|&i| i != j).map(|i| f.shape.factor_norm(i, r)).product()
    }

    fn row_quadrature(&self, j: usize, k: usize, u: f64, r: f64) -> f64 {
        let f = self.family;
        let lat = &f.lattice;
        let sj = f.sigma[j];
        let mut rows: BTreeMap<Vec<u64>, Vec<(f64, f64)>> = BTreeMap::new();
        let mut c = vec![0.0; f.d];
        for m in 0..f.m {
            let idx = lat.multi_index(m);
            lat.center(m, &mut c);
            let key: Vec<u64> = idx.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, v)| *v).collect();
            rows.entry(key).or_default().push((c[j], self.y[m as usize]));
        }
        let coef = difference_coefficients(k);
        let fbreaks = f.shape.factor_breaks(j);
        let mut total = 0.0f64;
        for row in rows.values() {
            let row_eval = |t: f64| -> f64 {
                // centres ascend along the row
                let pos = row.partition_point(|(cj, _)| *cj + 0.5 * sj <= t);
                match row.get(pos) {
                    Some(&(cj, yv)) if t > cj - 0.5 * sj => yv * f.shape.factor(j, (t - cj) / sj),
                    _ => 0.0,
                }
            };
            let breaks = merge_breaks(row.iter().flat_map(|&(cj, _)| {
                let fb = &fbreaks;
                (0..=k).flat_map(move |l| fb.iter().map(move |b| cj + b * sj - l as f64 * u))
            }));
            let diff = |t: f64| -> f64 { coef.iter().enumerate().map(|(l, cf)| cf * row_eval(t + l as f64 * u)).sum() };
            let v = crate::density_lab::bump::lr_norm_1d(&breaks, diff, r);
            if r.is_infinite() {
                total = total.max(v);
            } else {
                total += v.powf(r);
            }
        }
        let other_vol: f64 = (0..f.d).filter(|&i| i != j).map(|i| f.sigma[i]).product();
        if r.is_infinite() {
            f.amplitude * total * self.transverse(j, r)
        } else {
            f.amplitude * total.powf(1.0 / r) * other_vol.powf(1.0 / r) * self.transverse(j, r)
        }
    }
}

impl DifferenceNorms for BumpSum<'_> {
    fn dim(&self) -> usize {
        self.family.d
    }
    fn lr_norm(&self, r: f64) -> Result<f64> {
        let f = self.family;
        let vol: f64 = f.sigma.iter().product();
        let s = if r.is_infinite() { 1.0 } else { vol.powf(1.0 / r) };
        Ok(f.amplitude * self.y_norm(r) * s * f.shape.norm(r))
    }
    fn difference_norm(&self, j: usize, k: usize, u: f64, r: f64) -> Result<(f64, NormMethod)> {
        let f = self.family;
        let gap = f.lattice.spacing[j] - f.sigma[j];
        if f.lattice.counts[j] == 1 || k as f64 * u <= gap {
            let vol: f64 = f.sigma.iter().product();
            let s = if r.is_infinite() { 1.0 } else { vol.powf(1.0 / r) };
            let along = f.shape.factor_difference_norm(j, k, u / f.sigma[j], r);
            return Ok((f.amplitude * self.y_norm(r) * s * along * self.transverse(j, r), NormMethod::DisjointSuperposition));
        }
        if f.m * (k as u64 + 1) <= ROW_QUADRATURE_LIMIT {
            return Ok((self.row_quadrature(j, k, u, r), NormMethod::RowQuadrature));
        }
        Ok(((1u64 << k) as f64 * self.lr_norm(r)?, NormMethod::TriangleBound))
    }
    fn scales(&self, j: usize) -> (f64, f64) {
        let f = self.family;
        let lat = &f.lattice;
        let diam = (lat.counts[j].saturating_sub(1)) as f64 * lat.spacing[j] + f.sigma[j];
        (0.5 * f.sigma[j], diam)
    }
    fn extra_u(&self, j: usize, k: usize) -> Vec<f64> {
        let f = self.family;
        let gap = f.lattice.spacing[j] - f.sigma[j];
        if gap > 0.0 {
            vec![gap / k as f64]
        } else {
            Vec::new()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MembershipOptions {
    pub tolerance: f64,
    pub points_per_decade: f64,
    /// Overrides the automatic `u` range.
    pub u_range: Option<(f64, f64)>,
}

impl Default for MembershipOptions {
    fn default() -> Self {
        MembershipOptions { tolerance: DEFAULT_TOLERANCE, points_per_decade: U_POINTS_PER_DECADE, u_range: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionReport {
    pub j: usize,
    /// Difference order `⌊β_j⌋ + 1`.
    pub k: usize,
    pub worst_ratio: f64,
    pub worst_u: f64,
    pub radius: f64,
    #[serde(with = "crate::serde_ext::ext")]
    pub r: f64,
    pub norm: f64,
    pub norm_ok: bool,
    pub ratio_ok: bool,
    pub u_points: usize,
    pub u_min: f64,
    pub u_max: f64,
    /// Every method used over the grid.
    pub methods: Vec<NormMethod>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MembershipReport {
    pub scale: f64,
    pub tolerance: f64,
    pub per_direction: Vec<DirectionReport>,
    pub verdict: bool,
    pub note: String,
}

impl MembershipReport {
    pub fn direction(&self, j: usize) -> &DirectionReport {
        &self.per_direction[j]
    }
}

/// Log grid with `points_per_decade` density, always containing `extra`.
pub fn u_grid(lo: f64, hi: f64, points_per_decade: f64, extra: &[f64]) -> Vec<f64> {
    let decades = (hi / lo).log10().max(0.0);
    let n = ((decades * points_per_decade).ceil() as usize + 1).max(40);
    let mut g = log_space(lo, hi, n);
    g.extend(extra.iter().copied().filter(|&u| u > 0.0 && u.is_finite()));
    merge_breaks(g)
}

/// Decides `G ∈ N_{r⃗,d}(β⃗, scale·L⃗)`.
pub fn membership_check(
    g: &dyn DifferenceNorms,
    theta: &ClassParams,
    scale: f64,
    opts: &MembershipOptions,
) -> Result<MembershipReport> {
    if g.dim() != theta.d {
        return Err(Error::Domain(format!("function has d = {}, class has d = {}", g.dim(), theta.d)));
    }
    let mut per = Vec::with_capacity(theta.d);
    for j in 0..theta.d {
        let k = theta.difference_order(j);
        let (beta, r, radius) = (theta.beta[j], theta.r[j], scale * theta.l[j]);
        let (feature, diam) = g.scales(j);
        let (lo, hi) = opts.u_range.unwrap_or(((1e-3f64).min(feature / 10.0), (1.0f64).max(diam)));
        let grid = u_grid(lo, hi, opts.points_per_decade, &g.extra_u(j, k));
        let (mut worst, mut worst_u) = (0.0f64, f64::NAN);
        let mut methods = Vec::new();
        for &u in &grid {
            let (v, m) = g.difference_norm(j, k, u, r)?;
            if !v.is_finite() {
                return Err(Error::Numerical(format!("non-finite difference norm at u = {u}")));
            }
            if !methods.contains(&m) {
                methods.push(m);
            }
            let ratio = v / u.powf(beta);
            if ratio > worst {
                worst = ratio;
                worst_u = u;
            }
        }
        let norm = g.lr_norm(r)?;
        let ratio_ok = worst <= radius * (1.0 + opts.tolerance);
        let norm_ok = norm <= radius;
        per.push(DirectionReport {
            j,
            k,
            worst_ratio: worst,
            worst_u,
            radius,
            r,
            norm,
            norm_ok,
            ratio_ok,
            u_points: grid.len(),
            u_min: lo,
            u_max: hi,
            methods,
        });
    }
    let verdict = per.iter().all(|p| p.norm_ok && p.ratio_ok);
    Ok(MembershipReport {
        scale,
        tolerance: opts.tolerance,
        per_direction: per,
        verdict,
        note: "difference order k_j = floor(beta_j) + 1; supremum over u taken on a log grid".into(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LqReport {
    #[serde(with = "crate::serde_ext::ext")]
    pub q: f64,
    pub norm: f64,
    pub radius: f64,
    pub pass: bool,
}

/// `‖G‖_q ≤ radius`.
pub fn lq_check(g: &dyn DifferenceNorms, q: f64, radius: f64) -> Result<LqReport> {
    let norm = g.lr_norm(q)?;
    Ok(LqReport { q, norm, radius, pass: norm <= radius })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BumpRatio {
    pub j: usize,
    pub k: usize,
    /// `sup_v ‖Δ^k_v φ_j‖_{r_j} / v^{β_j} · Π_{i≠j} ‖φ_i‖_{r_j}`.
    pub sup_ratio: f64,
    pub argmax_v: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct C1Calibration {
    /// `1 / (2 max_j K_j)`: bump sums with `A σ_j^{−β_j}(σM)^{1/r_j} ≤ C₁ L_j` land in the half ball.
    pub c1: f64,
    pub per_direction: Vec<BumpRatio>,
}

/// Sup of the normalized difference ratio of one bump factor, by log grid then golden section.
pub fn bump_ratio_constant(shape: &BumpShape, theta: &ClassParams, j: usize) -> BumpRatio {
    let (k, beta, r) = (theta.difference_order(j), theta.beta[j], theta.r[j]);
    let transverse: f64 = (0..shape.d).filter(|&i| i != j).map(|i| shape.factor_norm(i, r)).product();
    let h = |v: f64| shape.factor_difference_norm(j, k, v, r) / v.powf(beta);
    let grid = log_space(1e-4, 1.0, 400);
    let (mut best_i, mut best) = (0usize, f64::NEG_INFINITY);
    for (i, &v) in grid.iter().enumerate() {
        let val = h(v);
        if val > best {
            best = val;
            best_i = i;
        }
    }
    let (mut a, mut b) = (grid[best_i.saturating_sub(1)].ln(), grid[(best_i + 1).min(grid.len() - 1)].ln());
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let (mut fc, mut fd) = (h(c.exp()), h(d.exp()));
    for _ in 0..60 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = h(c.exp());
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = h(d.exp());
        }
    }
    let (v_star, f_star) = if fc > fd { (c.exp(), fc) } else { (d.exp(), fd) };
    let (v, f) = if f_star >= best { (v_star, f_star) } else { (grid[best_i], best) };
    BumpRatio { j, k, sup_ratio: f * transverse, argmax_v: v }
}

pub fn calibrate_c1(shape: &BumpShape, theta: &ClassParams) -> C1Calibration {
    let per: Vec<BumpRatio> = (0..theta.d).map(|j| bump_ratio_constant(shape, theta, j)).collect();
    let kmax = per.iter().map(|p| p.sup_ratio).fold(0.0f64, f64::max);
    C1Calibration { c1: 1.0 / (2.0 * kmax), per_direction: per }
}
