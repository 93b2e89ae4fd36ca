//! One-dimensional quadrature: adaptive Simpson for accuracy-driven integrals
//! and composite Gauss–Legendre over caller-supplied breakpoints for bulk work.

use crate::error::{Error, Result};
use gauss_quad::legendre::GaussLegendre;
use std::sync::OnceLock;

/// Absolute tolerance per 1-D adaptive integral.
pub const SIMPSON_ABS_TOL: f64 = 1e-8;

const MAX_DEPTH: u32 = 48;

/// Adaptive Simpson on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Numerical(format!("non-finite interval [{a}, {b}]")));
    }
    // Seed with a fixed split so functions vanishing at the three initial
    // nodes (compactly supported bumps) are still resolved.
    const SEED: usize = 16;
    let h = (b - a) / SEED as f64;
    let mut total = 0.0;
    let mut failed = false;
    for i in 0..SEED {
        let lo = a + h * i as f64;
        let hi = if i + 1 == SEED { b } else { lo + h };
        let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
        let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
        total += simpson_rec(&f, lo, hi, fa, fm, fb, whole, tol / SEED as f64, MAX_DEPTH, &mut failed);
    }
    if failed || !total.is_finite() {
        return Err(Error::Numerical(format!("adaptive Simpson did not converge on [{a}, {b}]")));
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    failed: &mut bool,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 {
        if delta.abs() > 15.0 * tol {
            *failed = true;
        }
        return left + right + delta / 15.0;
    }
    if delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, failed)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, failed)
}

/// Nodes and weights of the 16-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gl16() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let mut v = GaussLegendre::new(16)
            .expect("degree 16 is valid")
            .into_node_weight_pairs();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    })
}

/// Sorted, deduplicated copy of `points`.
pub fn merge_breaks(points: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = points.into_iter().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * (1.0 + b.abs()));
    v
}

/// Composite Gauss–Legendre nodes over consecutive breakpoints; every panel
/// is cut into `pieces` equal parts carrying a 16-point rule.
pub fn panel_nodes(breaks: &[f64], pieces: usize) -> Vec<(f64, f64)> {
    let rule = gl16();
    let mut out = Vec::with_capacity(breaks.len().saturating_sub(1) * pieces * rule.len());
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let h = (b - a) / pieces as f64;
        for p in 0..pieces {
            let lo = a + h * p as f64;
            let half = 0.5 * h;
            let mid = lo + half;
            for &(x, wt) in rule {
                out.push((mid + half * x, half * wt));
            }
        }
    }
    out
}

/// Composite Gauss–Legendre integral over the panels defined by `breaks`.
pub fn gl_panels<F: FnMut(f64) -> f64>(breaks: &[f64], pieces: usize, mut f: F) -> f64 {
    panel_nodes(breaks, pieces).into_iter().map(|(x, w)| w * f(x)).sum()
}

/// Kahan–Babuška summation, used wherever many terms of mixed sign are reduced.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    c: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }
    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// `ln Σ exp(xᵢ)` without overflow.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let mut s = CompensatedSum::default();
    for &x in xs {
        s.add((x - m).exp());
    }
    m + s.value().ln()
}

/// `n` log-spaced points on `[lo, hi]`, endpoints included.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomial_and_bump() {
        let v = adaptive_simpson(|x| x * x * x - x, 0.0, 2.0, 1e-10).unwrap();
        assert!((v - 2.0).abs() < 1e-9);
        let narrow = adaptive_simpson(
            |x| if (x - 0.7).abs() < 0.01 { 1.0 - ((x - 0.7) / 0.01).abs() } else { 0.0 },
            0.0,
            1.0,
            1e-10,
        )
        .unwrap();
        assert!((narrow - 0.01).abs() < 1e-8);
    }

    #[test]
    fn gl_panels_exact_for_polynomials() {
        let v = gl_panels(&[0.0, 0.5, 3.0], 2, |x| x.powi(7));
        assert!((v - 3f64.powi(8) / 8.0).abs() < 1e-9);
    }

    #[test]
    fn log_sum_exp_matches_direct() {
        let xs = [0.1, -2.0, 3.0];
        let direct: f64 = xs.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - direct).abs() < 1e-14);
    }
}
