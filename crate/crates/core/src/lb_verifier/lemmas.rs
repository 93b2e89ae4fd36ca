//! Empirical checks of the pointwise sandwich and of the moment bound `W_{J,K}(b) ≤ 2`.

use crate::density_lab::family::PerturbationFamily;
use crate::error::{Error, Result};
use crate::numerics::quadrature::CompensatedSum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SandwichReport {
    pub zero_lambda: bool,
    pub draws: usize,
    /// Draws with `|ρ_y − Σ_M| ≤ 12𝒟_M`; only these are checked.
    pub filtered: usize,
    pub grid_points: usize,
    /// `min (1 − f_y/f*_y)` over grid points with `f*_y > 0`.
    pub worst_upper_margin: f64,
    /// `min (f_y/f*_y − e^{−1/n})` over the same points.
    pub worst_lower_margin: f64,
    /// `max |f*_y − f_y|` (zero-mean branch: should vanish).
    pub max_abs_diff: f64,
    pub pass: bool,
}

fn grid(family: &PerturbationFamily, points: usize) -> Vec<Vec<f64>> {
    let d = family.d;
    let per = ((points as f64).powf(1.0 / d as f64).ceil() as usize).max(2);
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let b = family.base.breaks(j);
            let (lo, hi) = (b[0], b[b.len() - 1]);
            let w = hi - lo;
            (0..per).map(|i| lo - 0.01 * w + 1.02 * w * i as f64 / (per - 1) as f64).collect()
        })
        .collect();
    let total = per.pow(d as u32);
    (0..total)
        .map(|mut i| {
            (0..d)
                .map(|j| {
                    let v = axes[j][i % per];
                    i /= per;
                    v
                })
                .collect()
        })
        .collect()
}

/// Draws `y` until `wanted` fall in `{|ρ_y − Σ_M| ≤ 12𝒟_M}` (at most `100·wanted` draws) and
/// checks `f*_y ≥ f_y ≥ e^{−1/n} f*_y` on a tensor grid covering the support of `f₀`,
/// plus every bump centre and box edge midpoint encountered.
pub fn check_lemma_sandwich(family: &PerturbationFamily, wanted: usize, grid_points: usize, seed: u64) -> Result<SandwichReport> {
    let zero = family.derived.lambda_m == 0.0;
    let mut pts = grid(family, grid_points);
    let mut c = vec![0.0; family.d];
    for m in 0..family.m.min(64) {
        family.lattice.center(m, &mut c);
        pts.push(c.clone());
        let mut q = c.clone();
        q[0] += 0.25 * family.sigma[0];
        pts.push(q);
    }
    let sig = family.derived.sigma_big_m;
    let dm = family.derived.frak_d_m;
    let shrink = (-1.0 / family.n as f64).exp();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut draws, mut filtered) = (0usize, 0usize);
    let (mut up, mut low, mut diff) = (f64::INFINITY, f64::INFINITY, 0.0f64);
    while filtered < wanted && draws < 100 * wanted.max(1) {
        draws += 1;
        let y = family.prior.draw(&mut rng, family.m as usize);
        let rho = family.rho(&y);
        let ups = rho - sig;
        if !zero && ups.abs() > 12.0 * dm {
            continue;
        }
        filtered += 1;
        let base_factor = (1.0 - sig) * (-ups / (1.0 - sig)).exp();
        for x in &pts {
            let bump = family.bump_at(x).map(|(m, b)| y[m as usize] * b).unwrap_or(0.0);
            let star = base_factor * family.base.eval(x) + bump;
            let fy = family.eval_with_rho(&y, rho, x);
            diff = diff.max((star - fy).abs());
            if star > 0.0 {
                let ratio = fy / star;
                up = up.min(1.0 - ratio);
                low = low.min(ratio - shrink);
            } else if fy > 0.0 {
                // f*_y vanishes where f_y does not: the upper bracket fails outright.
                up = f64::NEG_INFINITY;
            }
        }
    }
    let tol = 4.0 * f64::EPSILON;
    let pass = filtered > 0 && if zero { diff == 0.0 || up >= -tol && low >= -tol } else { up >= -tol && low >= -tol };
    Ok(SandwichReport {
        zero_lambda: zero,
        draws,
        filtered,
        grid_points: pts.len(),
        worst_upper_margin: up,
        worst_lower_margin: low,
        max_abs_diff: diff,
        pass,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WjkReport {
    pub j: u64,
    pub k: usize,
    pub b: f64,
    pub t: f64,
    /// `2bJ·D_K` with `D_K = 5T²A²_K K`; the bound is claimed only when `≤ 1`.
    pub premise: f64,
    pub w_hat: f64,
    pub stderr: f64,
    /// Exact `W` by enumerating the `2^K` sign patterns when `K ≤ 20`.
    pub exact: Option<f64>,
    pub pass: bool,
}

/// Monte-Carlo `W_{J,K}(b) = E[(1 + bχ²_K)^J]`, `χ_K = Σ a_k ζ_k`, `ζ_k = ±T` equiprobable.
pub fn check_lemma_wjk(j: u64, a: &[f64], b: f64, t: f64, reps: usize, seed: u64) -> Result<WjkReport> {
    let k = a.len();
    if k == 0 || j == 0 || !(b >= 0.0) || !(t > 0.0) || reps < 2 {
        return Err(Error::Domain("J, K >= 1, b >= 0, T > 0 and reps >= 2 required".into()));
    }
    let a_max = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let premise = 2.0 * b * j as f64 * 5.0 * t * t * a_max * a_max * k as f64;
    if premise > 1.0 + 1e-12 {
        return Err(Error::Domain(format!("2bJ D_K = {premise} > 1: the bound W <= 2 is not claimed here")));
    }
    let jf = j as f64;
    let w = |chi: f64| (jf * (b * chi * chi).ln_1p()).exp();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut s1, mut s2) = (CompensatedSum::default(), CompensatedSum::default());
    for _ in 0..reps {
        let chi: f64 = a.iter().map(|ak| if rng.gen::<bool>() { ak * t } else { -ak * t }).sum();
        let v = w(chi);
        s1.add(v);
        s2.add(v * v);
    }
    let mean = s1.value() / reps as f64;
    let var = ((s2.value() / reps as f64 - mean * mean) * reps as f64 / (reps - 1) as f64).max(0.0);
    let se = (var / reps as f64).sqrt();
    let exact = (k <= 20).then(|| {
        let mut acc = CompensatedSum::default();
        for mask in 0u32..(1u32 << k) {
            let chi: f64 = a.iter().enumerate().map(|(i, ak)| if mask >> i & 1 == 1 { ak * t } else { -ak * t }).sum();
            acc.add(w(chi));
        }
        acc.value() / (1u64 << k) as f64
    });
    Ok(WjkReport { j, k, b, t, premise, w_hat: mean, stderr: se, exact, pass: mean + 3.0 * se <= 2.0 })
}

/// One input `(J, a⃗, b, T)` of the moment check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WjkCase {
    pub j: u64,
    pub a: Vec<f64>,
    pub b: f64,
    pub t: f64,
}

/// `count` random cases with `J ≤ 6`, `K ≤ 24`, `T = 1`, `a_k ~ U(0, 1]` and `b` a uniform
/// fraction of the largest value allowed by `2bJ·D_K ≤ 1`.
pub fn draw_wjk_cases(count: usize, seed: u64) -> Vec<WjkCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let j = rng.gen_range(1..=6u64);
            let k = rng.gen_range(1..=24usize);
            let a: Vec<f64> = (0..k).map(|_| 1.0 - rng.gen::<f64>()).collect();
            let a_max = a.iter().fold(0.0f64, |m, v| m.max(*v));
            let b_max = 1.0 / (2.0 * j as f64 * 5.0 * a_max * a_max * k as f64);
            WjkCase { j, a, b: (1.0 - rng.gen::<f64>()) * b_max, t: 1.0 }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_b_is_one() {
        let r = check_lemma_wjk(5, &[0.3, 0.2], 0.0, 1.0, 100, 1).unwrap();
        assert_eq!(r.w_hat, 1.0);
        assert_eq!(r.exact, Some(1.0));
    }

    #[test]
    fn boundary_case_exact() {
        let r = check_lemma_wjk(1, &[1.0], 0.1, 1.0, 1000, 3).unwrap();
        assert!((r.w_hat - 1.1).abs() < 1e-15);
        assert!((r.exact.unwrap() - 1.1).abs() < 1e-15);
        assert!(r.pass);
        assert!(check_lemma_wjk(1, &[1.0], 0.11, 1.0, 1000, 3).is_err());
    }
}
