//! Tensor-product bump shapes supported in `[−1/2, 1/2]^d` with `‖Λ‖_∞ = 1`.
//!
//! With `u₀(t) = exp(−1/(1 − 16t²))` on `|t| < 1/4`:
//!
//! | kind | factor on axis 1 | factor on axes ≥ 2 |
//! |------|------------------|--------------------|
//! | zero-mean | `e·(u₀(t − 1/4) − u₀(t + 1/4))` | `e·u₀(t)` |
//! | nonnegative | `e·u₀(2t)` | `e·u₀(2t)` |
//!
//! Every factor peaks at exactly `e·e^{−1} = 1`, so the product needs no
//! numerical rescaling. The zero-mean factor is odd, hence `∫Λ = 0` exactly.

use crate::numerics::quadrature::{adaptive_simpson, gl_panels, merge_breaks, SIMPSON_ABS_TOL};
use serde::{Deserialize, Serialize};

#[inline]
fn u0(t: f64) -> f64 {
    let s = 1.0 - 16.0 * t * t;
    if s <= 0.0 {
        0.0
    } else {
        (-1.0 / s).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BumpKind {
    ZeroMean,
    Nonnegative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpShape {
    pub id: String,
    pub d: usize,
    pub kind: BumpKind,
    pub nonnegative: bool,
    /// `‖Λ‖₂` by quadrature.
    pub l2_norm: f64,
    pub linf_norm: f64,
    /// `∫Λ` by quadrature; exactly zero in theory for the zero-mean kind.
    pub integral: f64,
    /// Per-axis `∫φⱼ`, `∫φⱼ²` by quadrature.
    factor_integral: Vec<f64>,
    factor_l2_sq: Vec<f64>,
}

pub fn make_bump(d: usize, nonnegative: bool) -> BumpShape {
    let kind = if nonnegative { BumpKind::Nonnegative } else { BumpKind::ZeroMean };
    let mut b = BumpShape {
        id: match kind {
            BumpKind::ZeroMean => "tensor-mollifier-odd-first-axis".into(),
            BumpKind::Nonnegative => "tensor-mollifier-half-width".into(),
        },
        d,
        kind,
        nonnegative,
        l2_norm: 0.0,
        linf_norm: 1.0,
        integral: 0.0,
        factor_integral: Vec::new(),
        factor_l2_sq: Vec::new(),
    };
    b.factor_integral = (0..d).map(|j| b.factor_power_integral(j, 1.0, false)).collect();
    b.factor_l2_sq = (0..d).map(|j| b.factor_power_integral(j, 2.0, true)).collect();
    b.l2_norm = b.factor_l2_sq.iter().product::<f64>().sqrt();
    b.integral = b.factor_integral.iter().product();
    b
}

impl BumpShape {
    /// One-dimensional factor `φⱼ`; each lies in `[−1, 1]`.
    #[inline]
    pub fn factor(&self, j: usize, t: f64) -> f64 {
        let e = std::f64::consts::E;
        let v = match (self.kind, j) {
            (BumpKind::ZeroMean, 0) => e * (u0(t - 0.25) - u0(t + 0.25)),
            (BumpKind::ZeroMean, _) => e * u0(t),
            (BumpKind::Nonnegative, _) => e * u0(2.0 * t),
        };
        v.clamp(-1.0, 1.0)
    }

    /// Points between which `φⱼ` is smooth; zero outside the outer two.
    pub fn factor_breaks(&self, j: usize) -> Vec<f64> {
        match (self.kind, j) {
            (BumpKind::ZeroMean, 0) => vec![-0.5, 0.0, 0.5],
            (BumpKind::ZeroMean, _) => vec![-0.25, 0.25],
            (BumpKind::Nonnegative, _) => vec![-0.125, 0.125],
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = 1.0;
        for (j, &t) in x.iter().enumerate() {
            v *= self.factor(j, t);
            if v == 0.0 {
                return 0.0;
            }
        }
        v
    }

    /// `∫|φⱼ|^p` (or `∫φⱼ^p` when `abs` is false and `p = 1`) by adaptive Simpson.
    fn factor_power_integral(&self, j: usize, p: f64, abs: bool) -> f64 {
        let br = self.factor_breaks(j);
        br.windows(2)
            .map(|w| {
                adaptive_simpson(
                    |t| {
                        let v = self.factor(j, t);
                        if abs || p != 1.0 {
                            v.abs().powf(p)
                        } else {
                            v
                        }
                    },
                    w[0],
                    w[1],
                    SIMPSON_ABS_TOL * 1e-4,
                )
                .expect("smooth bump factor")
            })
            .sum()
    }

    pub fn factor_integral(&self, j: usize) -> f64 {
        self.factor_integral[j]
    }

    /// `‖φⱼ‖_r`; `r = ∞` gives 1.
    pub fn factor_norm(&self, j: usize, r: f64) -> f64 {
        if r.is_infinite() {
            return 1.0;
        }
        if r == 2.0 {
            return self.factor_l2_sq[j].sqrt();
        }
        self.factor_power_integral(j, r, true).powf(1.0 / r)
    }

    /// `‖Λ‖_r = Π ‖φⱼ‖_r`.
    pub fn norm(&self, r: f64) -> f64 {
        (0..self.d).map(|j| self.factor_norm(j, r)).product()
    }

    /// `‖Δ^k_v φⱼ‖_r` for the one-dimensional factor, by composite Gauss–Legendre.
    pub fn factor_difference_norm(&self, j: usize, k: usize, v: f64, r: f64) -> f64 {
        let coef = difference_coefficients(k);
        let br = self.factor_breaks(j);
        let breaks = merge_breaks((0..=k).flat_map(|l| br.iter().map(move |b| b - l as f64 * v)));
        let diff = |x: f64| -> f64 {
            coef.iter()
                .enumerate()
                .map(|(l, c)| c * self.factor(j, x + l as f64 * v))
                .sum()
        };
        lr_norm_1d(&breaks, diff, r)
    }
}

/// `(−1)^{l+k} binom(k, l)` for `l = 0..=k`.
pub fn difference_coefficients(k: usize) -> Vec<f64> {
    let mut c = vec![0.0; k + 1];
    let mut binom = 1.0;
    for (l, slot) in c.iter_mut().enumerate() {
        if l > 0 {
            binom = binom * (k + 1 - l) as f64 / l as f64;
        }
        *slot = if (l + k) % 2 == 0 { binom } else { -binom };
    }
    c
}

/// `L_r` norm of a one-dimensional function over panels; `r = ∞` is the node maximum.
pub fn lr_norm_1d<F: Fn(f64) -> f64>(breaks: &[f64], f: F, r: f64) -> f64 {
    const PIECES: usize = 8;
    if r.is_infinite() {
        let nodes = crate::numerics::quadrature::panel_nodes(breaks, PIECES);
        return nodes
            .iter()
            .map(|(x, _)| f(*x).abs())
            .chain(breaks.iter().map(|&b| f(b).abs()))
            .fold(0.0, f64::max);
    }
    if r == 1.0 {
        return gl_panels(breaks, PIECES, |x| f(x).abs());
    }
    if r == 2.0 {
        return gl_panels(breaks, PIECES, |x| {
            let v = f(x);
            v * v
        })
        .sqrt();
    }
    gl_panels(breaks, PIECES, |x| f(x).abs().powf(r)).powf(1.0 / r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_mean_bump_properties() {
        for d in 1..=3 {
            let b = make_bump(d, false);
            assert!(b.integral.abs() < 1e-8);
            assert_eq!(b.linf_norm, 1.0);
        }
        let b = make_bump(1, false);
        assert_eq!(b.factor(0, 0.25), 1.0);
        assert_eq!(b.factor(0, -0.25), -1.0);
        assert_eq!(b.factor(0, 0.6), 0.0);
    }

    #[test]
    fn l2_norm_matches_riemann_sum() {
        let b = make_bump(1, false);
        let n = 1_000_000;
        let h = 1.0 / n as f64;
        let riemann: f64 = (0..n).map(|i| b.factor(0, -0.5 + (i as f64 + 0.5) * h).powi(2) * h).sum();
        assert!((b.l2_norm.powi(2) / riemann - 1.0).abs() < 1e-6);
    }

    #[test]
    fn difference_coefficient_signs() {
        assert_eq!(difference_coefficients(1), vec![-1.0, 1.0]);
        assert_eq!(difference_coefficients(2), vec![1.0, -2.0, 1.0]);
        assert_eq!(difference_coefficients(3), vec![-1.0, 3.0, -3.0, 1.0]);
    }

    #[test]
    fn difference_norm_beyond_support_is_translate_sum() {
        let b = make_bump(1, false);
        let far = b.factor_difference_norm(0, 1, 5.0, 2.0);
        assert!((far - 2f64.sqrt() * b.l2_norm).abs() < 1e-10, "{far} {}", 2f64.sqrt() * b.l2_norm);
    }
}
