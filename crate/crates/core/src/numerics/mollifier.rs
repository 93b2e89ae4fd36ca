//! The one-dimensional mollifier density `φ(z) = e^{−1/(1−z²)}/R` on `(−1, 1)`
//! and its distribution function. Products of `φ` make up the kernel `U` of the
//! mollified-uniform base densities.

use super::quadrature::{adaptive_simpson, gl16};
use rand::Rng;
use std::sync::OnceLock;

/// Unnormalized mollifier `e^{−1/(1−z²)}`; exactly 0 for `|z| ≥ 1`.
#[inline]
pub fn raw(z: f64) -> f64 {
    let s = 1.0 - z * z;
    if s <= 0.0 {
        0.0
    } else {
        (-1.0 / s).exp()
    }
}

/// `R = ∫_{−1}^{1} e^{−1/(1−z²)} dz`.
pub fn mass() -> f64 {
    static R: OnceLock<f64> = OnceLock::new();
    *R.get_or_init(|| adaptive_simpson(raw, -1.0, 1.0, 1e-15).expect("smooth integrand"))
}

#[inline]
pub fn density(z: f64) -> f64 {
    raw(z) / mass()
}

const CELLS: usize = 4096;

struct CdfTable {
    h: f64,
    cum: Vec<f64>,
    dens: Vec<f64>,
}

fn table() -> &'static CdfTable {
    static T: OnceLock<CdfTable> = OnceLock::new();
    T.get_or_init(|| {
        let h = 2.0 / CELLS as f64;
        let rule = gl16();
        let mut cum = Vec::with_capacity(CELLS + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for i in 0..CELLS {
            let a = -1.0 + h * i as f64;
            let mid = a + 0.5 * h;
            acc += rule.iter().map(|&(x, w)| 0.5 * h * w * raw(mid + 0.5 * h * x)).sum::<f64>();
            cum.push(acc);
        }
        let total = acc;
        let cum: Vec<f64> = cum.into_iter().map(|c| c / total).collect();
        let dens = (0..=CELLS).map(|i| raw(-1.0 + h * i as f64) / total).collect();
        CdfTable { h, cum, dens }
    })
}

/// Distribution function `Φ(z) = ∫_{−1}^{z} φ`; exactly 0 below −1 and 1 above 1.
/// Cubic Hermite interpolation of a Gauss–Legendre cumulative table.
pub fn cdf(z: f64) -> f64 {
    if z <= -1.0 {
        return 0.0;
    }
    if z >= 1.0 {
        return 1.0;
    }
    let t = table();
    let s = (z + 1.0) / t.h;
    let i = (s.floor() as usize).min(CELLS - 1);
    let u = s - i as f64;
    let (p0, p1) = (t.cum[i], t.cum[i + 1]);
    let (m0, m1) = (t.dens[i] * t.h, t.dens[i + 1] * t.h);
    let u2 = u * u;
    let u3 = u2 * u;
    let v = (2.0 * u3 - 3.0 * u2 + 1.0) * p0
        + (u3 - 2.0 * u2 + u) * m0
        + (-2.0 * u3 + 3.0 * u2) * p1
        + (u3 - u2) * m1;
    v.clamp(0.0, 1.0)
}

/// Reference `Φ` by adaptive quadrature; slow, used to validate [`cdf`].
pub fn cdf_quadrature(z: f64) -> f64 {
    if z <= -1.0 {
        return 0.0;
    }
    if z >= 1.0 {
        return 1.0;
    }
    adaptive_simpson(raw, -1.0, z, 1e-14).expect("smooth integrand") / mass()
}

/// One draw from `φ` by rejection against the uniform envelope `e^{−1}`.
pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let z: f64 = rng.gen_range(-1.0..1.0);
        let u: f64 = rng.gen();
        if u * (-1.0f64).exp() < raw(z) {
            return z;
        }
    }
}
