//! Base densities `f₀`: the mollified uniform `f_{0,N,a}` and the shrunk
//! composite `f_{0,t}` built from a far mollifier and a rescaled plateau.
//!
//! Both are sums of separable components with pairwise disjoint supports.
//! With `g_N(s) = Φ(N + 1 − s) − Φ(1 − s)` (the 1-D convolution of the
//! mollifier density with `1_{[1, N+1]}`):
//!
//! - `Plateau`: `amp · Π g_N(a·x_j / h_j)`, equal to `amp` on `[2h_j/a, N h_j/a]`;
//! - `Mollifier`: `amp · Π φ(1 + a·x_j)`, the `N → 0` limit of `f_{0,N,a}(−x)`.

use crate::density_lab::bump::{difference_coefficients, lr_norm_1d};
use crate::error::{Error, Result};
use crate::numerics::mollifier;
use crate::numerics::quadrature::merge_breaks;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Component {
    Plateau { amp: f64, n_big: f64, a: f64, h: Vec<f64> },
    Mollifier { amp: f64, a: f64 },
}

impl Component {
    fn amp(&self) -> f64 {
        match self {
            Component::Plateau { amp, .. } | Component::Mollifier { amp, .. } => *amp,
        }
    }

    #[inline]
    pub fn factor(&self, j: usize, t: f64) -> f64 {
        match self {
            Component::Plateau { n_big, a, h, .. } => {
                let s = a * t / h[j];
                mollifier::cdf(n_big + 1.0 - s) - mollifier::cdf(1.0 - s)
            }
            Component::Mollifier { a, .. } => mollifier::density(1.0 + a * t),
        }
    }

    pub fn factor_breaks(&self, j: usize) -> Vec<f64> {
        match self {
            Component::Plateau { n_big, a, h, .. } => {
                let w = h[j] / a;
                merge_breaks([0.0, 1.0, 2.0, *n_big, n_big + 1.0, n_big + 2.0].map(|s| s * w))
            }
            Component::Mollifier { a, .. } => vec![-2.0 / a, -1.0 / a, 0.0],
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = self.amp();
        for (j, &t) in x.iter().enumerate() {
            v *= self.factor(j, t);
            if v == 0.0 {
                return 0.0;
            }
        }
        v
    }

    /// `∫` of the `j`-th factor, in closed form.
    fn factor_integral(&self, j: usize) -> f64 {
        match self {
            Component::Plateau { n_big, a, h, .. } => n_big * h[j] / a,
            Component::Mollifier { a, .. } => 1.0 / a,
        }
    }

    fn factor_norm(&self, j: usize, r: f64) -> f64 {
        if r.is_infinite() {
            return match self {
                Component::Plateau { .. } => 1.0,
                Component::Mollifier { .. } => mollifier::density(0.0),
            };
        }
        lr_norm_1d(&self.factor_breaks(j), |t| self.factor(j, t), r)
    }

    pub fn norm(&self, d: usize, r: f64) -> f64 {
        self.amp() * (0..d).map(|j| self.factor_norm(j, r)).product::<f64>()
    }

    pub fn integral(&self, d: usize) -> f64 {
        self.amp() * (0..d).map(|j| self.factor_integral(j)).product::<f64>()
    }

    /// `‖Δ^k_{u,j}` of this component alone`‖_r`, by separability.
    fn difference_norm(&self, d: usize, j: usize, k: usize, u: f64, r: f64) -> f64 {
        let coef = difference_coefficients(k);
        let br = self.factor_breaks(j);
        let breaks = merge_breaks((0..=k).flat_map(|l| br.iter().map(move |b| b - l as f64 * u)));
        let along = lr_norm_1d(
            &breaks,
            |t| coef.iter().enumerate().map(|(l, c)| c * self.factor(j, t + l as f64 * u)).sum(),
            r,
        );
        self.amp() * along * (0..d).filter(|&i| i != j).map(|i| self.factor_norm(i, r)).product::<f64>()
    }

    fn support(&self, j: usize) -> (f64, f64) {
        let b = self.factor_breaks(j);
        (b[0], b[b.len() - 1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BaseKind {
    MollifiedUniform { n_big: f64, a: f64 },
    /// The far component of the composite alone; only used to calibrate `a`.
    FarMollifier { a: f64 },
    ShrunkComposite { t: f64, c_const: f64, q: f64, h_vec: Vec<f64>, n_big: f64, a: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseDensity {
    pub d: usize,
    pub kind: BaseKind,
    pub components: Vec<Component>,
}

/// `f_{0,N,a}(x) = a^d N^{−d} Π [Φ(N + 1 − a x_j) − Φ(1 − a x_j)]`.
pub fn mollified_uniform(d: usize, n_big: f64, a: f64) -> Result<BaseDensity> {
    if d == 0 {
        return Err(Error::Domain("d >= 1 required".into()));
    }
    if !(n_big >= 1.0 && n_big.is_finite()) {
        return Err(Error::Domain(format!("N >= 1 required, got {n_big}")));
    }
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::Domain(format!("a in (0, 1] required, got {a}")));
    }
    let amp = (a / n_big).powi(d as i32);
    Ok(BaseDensity {
        d,
        kind: BaseKind::MollifiedUniform { n_big, a },
        components: vec![Component::Plateau { amp, n_big, a, h: vec![1.0; d] }],
    })
}

/// `a^d Π φ(1 + a x_j)` on its own. It has no plateau, so it is not a family base.
pub(crate) fn far_mollifier(d: usize, a: f64) -> Result<BaseDensity> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::Domain(format!("a in (0, 1] required, got {a}")));
    }
    Ok(BaseDensity {
        d,
        kind: BaseKind::FarMollifier { a },
        components: vec![Component::Mollifier { amp: a.powi(d as i32), a }],
    })
}

/// `f_{0,t}(x) = (1 − c t^{1−1/q}) f_{0,0,a}(−x) + c t^{−1/q} f_{0,N,a}(x/𝔥)`, where
/// `f_{0,0,a}` is the vanishing-width limit of the mollified uniform.
pub fn shrunk_composite(d: usize, t: f64, c_const: f64, q: f64, h_vec: Vec<f64>, n_big: f64, a: f64) -> Result<BaseDensity> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Domain(format!("t in (0, 1) required, got {t}")));
    }
    if h_vec.len() != d || h_vec.iter().any(|&h| !(h > 0.0 && h <= 1.0)) {
        return Err(Error::Domain("shrink vector must have d entries in (0, 1]".into()));
    }
    let far_weight = 1.0 - c_const * t.powf(1.0 - 1.0 / q);
    if !(c_const > 0.0 && far_weight > 0.0) {
        return Err(Error::Domain(format!("c in (0, t^(1/q - 1)) required, got {c_const}")));
    }
    let inner = mollified_uniform(d, n_big, a)?;
    let Component::Plateau { amp, .. } = inner.components[0].clone() else { unreachable!() };
    Ok(BaseDensity {
        d,
        kind: BaseKind::ShrunkComposite { t, c_const, q, h_vec: h_vec.clone(), n_big, a },
        components: vec![
            Component::Mollifier { amp: far_weight * a.powi(d as i32), a },
            Component::Plateau { amp: c_const * t.powf(-1.0 / q) * amp, n_big, a, h: h_vec },
        ],
    })
}

impl BaseDensity {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.components.iter().map(|c| c.eval(x)).sum()
    }

    /// Reference value by direct 1-D convolution quadrature (slow).
    pub fn eval_quadrature(&self, x: &[f64]) -> f64 {
        let conv = |n_big: f64, s: f64| {
            crate::numerics::quadrature::adaptive_simpson(
                |w| mollifier::density(w - s),
                (1.0f64).max(s - 1.0),
                (n_big + 1.0).min(s + 1.0),
                1e-13,
            )
            .unwrap_or(0.0)
        };
        self.components
            .iter()
            .map(|c| match c {
                Component::Plateau { amp, n_big, a, h } => {
                    let mut v = *amp;
                    for (j, &t) in x.iter().enumerate() {
                        let s = a * t / h[j];
                        if s <= 0.0 || s >= n_big + 2.0 {
                            return 0.0;
                        }
                        v *= conv(*n_big, s);
                    }
                    v
                }
                Component::Mollifier { .. } => c.eval(x),
            })
            .sum()
    }

    /// The plateau component: its box `[lo, hi]` per axis and constant height.
    pub fn plateau(&self) -> (Vec<(f64, f64)>, f64) {
        for c in &self.components {
            if let Component::Plateau { amp, n_big, a, h } = c {
                let b = h.iter().map(|hj| (2.0 * hj / a, n_big * hj / a)).collect();
                return (b, *amp);
            }
        }
        unreachable!("every base has a plateau component")
    }

    /// Shortest smooth piece and support diameter along axis `j`; used for u-grids.
    pub fn feature_scale(&self, j: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let (mut s_lo, mut s_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for c in &self.components {
            let b = c.factor_breaks(j);
            for w in b.windows(2) {
                lo = lo.min(w[1] - w[0]);
            }
            let (a, z) = c.support(j);
            s_lo = s_lo.min(a);
            s_hi = s_hi.max(z);
        }
        (lo, s_hi - s_lo)
    }

    /// Breakpoints of the `j`-th axis across components.
    pub fn breaks(&self, j: usize) -> Vec<f64> {
        merge_breaks(self.components.iter().flat_map(|c| c.factor_breaks(j)))
    }

    pub fn integral(&self) -> f64 {
        self.components.iter().map(|c| c.integral(self.d)).sum()
    }

    /// `‖f₀‖_r`; components have disjoint supports.
    pub fn norm(&self, r: f64) -> f64 {
        let parts = self.components.iter().map(|c| c.norm(self.d, r));
        if r.is_infinite() {
            parts.fold(0.0, f64::max)
        } else {
            parts.map(|v| v.powf(r)).sum::<f64>().powf(1.0 / r)
        }
    }

    pub fn sup(&self) -> f64 {
        self.norm(f64::INFINITY)
    }

    /// `‖Δ^k_{u,j} f₀‖_r`. For `d ≥ 2` the components' supports stay disjoint
    /// after shifting along `j` (they are separated in every other axis), so
    /// the norm splits; for `d = 1` the sum is integrated directly.
    pub fn difference_norm(&self, j: usize, k: usize, u: f64, r: f64) -> f64 {
        if self.components.len() == 1 || self.d >= 2 {
            let parts = self.components.iter().map(|c| c.difference_norm(self.d, j, k, u, r));
            return if r.is_infinite() {
                parts.fold(0.0, f64::max)
            } else {
                parts.map(|v| v.powf(r)).sum::<f64>().powf(1.0 / r)
            };
        }
        let coef = difference_coefficients(k);
        let br = self.breaks(0);
        let breaks = merge_breaks((0..=k).flat_map(|l| br.iter().map(move |b| b - l as f64 * u)));
        lr_norm_1d(
            &breaks,
            |t| coef.iter().enumerate().map(|(l, c)| c * self.eval(&[t + l as f64 * u])).sum(),
            r,
        )
    }

    /// One draw from `f₀`: `X = (V + W)/a` scaled by `𝔥` for the plateau part,
    /// `X = (V − 1)/a` for the far mollifier, `V` a product of mollifier draws.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let comp = if self.components.len() == 1 {
            &self.components[0]
        } else {
            let w0 = self.components[0].integral(self.d);
            if rng.gen::<f64>() < w0 {
                &self.components[0]
            } else {
                &self.components[1]
            }
        };
        match comp {
            Component::Plateau { n_big, a, h, .. } => {
                for (j, o) in out.iter_mut().enumerate() {
                    let w = rng.gen_range(1.0..(1.0 + n_big));
                    *o = h[j] * (mollifier::sample(rng) + w) / a;
                }
            }
            Component::Mollifier { a, .. } => {
                for o in out.iter_mut() {
                    *o = (mollifier::sample(rng) - 1.0) / a;
                }
            }
        }
    }

    /// `∫_{box} f₀` by separable quadrature per component.
    pub fn box_mass(&self, lo: &[f64], hi: &[f64]) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let mut v = c.amp();
                for j in 0..self.d {
                    let (s0, s1) = c.support(j);
                    let (a, b) = (lo[j].max(s0), hi[j].min(s1));
                    if a >= b {
                        return 0.0;
                    }
                    let br: Vec<f64> = merge_breaks(
                        std::iter::once(a)
                            .chain(c.factor_breaks(j).into_iter().filter(|&x| x > a && x < b))
                            .chain(std::iter::once(b)),
                    );
                    v *= crate::numerics::quadrature::gl_panels(&br, 8, |t| c.factor(j, t));
                }
                v
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_value_and_support() {
        let b = mollified_uniform(1, 8.0, 0.5).unwrap();
        let h = 0.5 / 8.0;
        for x in [4.0, 10.0, 16.0] {
            assert!((b.eval(&[x]) - h).abs() < 1e-15);
        }
        assert_eq!(b.eval(&[-0.1]), 0.0);
        assert_eq!(b.eval(&[20.1]), 0.0);
        assert!((b.integral() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn table_evaluation_matches_convolution_quadrature() {
        let b = mollified_uniform(2, 8.0, 0.7).unwrap();
        for x in [[0.3, 3.0], [1.2, 12.5], [13.9, 1.0], [2.8, 2.9]] {
            let (v, q) = (b.eval(&x), b.eval_quadrature(&x));
            assert!((v - q).abs() < 1e-12, "{x:?}: {v} vs {q}");
        }
    }

    #[test]
    fn young_bound_holds() {
        let (n_big, a) = (8.0, 0.6);
        let b = mollified_uniform(1, n_big, a).unwrap();
        for u in [1.5, 2.0, 3.0, 5.0] {
            let bound = a.powf(1.0 - 1.0 / u) * n_big.powf(-1.0 + 1.0 / u);
            assert!(b.norm(u) <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn composite_integrates_to_one() {
        let t = 0.2;
        let b = shrunk_composite(2, t, 0.3, 4.0, vec![t.sqrt(), t.sqrt()], 8.0, 0.9).unwrap();
        assert!((b.integral() - 1.0).abs() < 1e-14);
        let x_far = [-1.0 / 0.9, -1.0 / 0.9];
        assert!(b.eval(&x_far) > 0.0);
        let (bx, h) = b.plateau();
        let mid: Vec<f64> = bx.iter().map(|(l, u)| 0.5 * (l + u)).collect();
        assert!((b.eval(&mid) - h).abs() < 1e-15);
    }
}
