//! The Airy function `Ai` and its derivative on the real line.
//!
//! Maclaurin series on `[-7, 1]`. For `1 < t ≤ 12` the series loses digits to
//! cancellation, so `Ai` comes from its Laplace-type integral
//! `e^{-ζ}/π ∫_0^∞ exp(−√t s²) cos(s³/3) ds` instead. Large-argument
//! asymptotic expansions cover the rest.

use std::f64::consts::{FRAC_PI_4, PI};

use crate::error::{Error, Result};
use crate::quadrature::integrate;

/// `Ai(0)`.
pub const AI0: f64 = 0.355_028_053_887_817_239_26;
/// `−Ai'(0)`.
pub const MINUS_AI1: f64 = 0.258_819_403_792_806_798_41;

const SERIES_LIMIT_POS: f64 = 1.0;
// where the series' rounding error meets the asymptotic truncation error
const SERIES_LIMIT_NEG: f64 = 7.0;
const INTEGRAL_LIMIT: f64 = 12.0;
const RANGE_LIMIT: f64 = 200.0;

/// Returns `(Ai(t), Ai'(t))`.
pub fn airy_ai(t: f64) -> Result<(f64, f64)> {
    if !t.is_finite() || t.abs() > RANGE_LIMIT {
        return Err(Error::OutOfRange(format!("Airy evaluation needs |t| ≤ {RANGE_LIMIT}, got {t}")));
    }
    Ok(if (-SERIES_LIMIT_NEG..=SERIES_LIMIT_POS).contains(&t) {
        maclaurin(t)
    } else if t < 0.0 {
        asymptotic_negative(-t)
    } else if t <= INTEGRAL_LIMIT {
        laplace_integral(t)
    } else {
        asymptotic_positive(t)
    })
}

fn maclaurin(t: f64) -> (f64, f64) {
    let t3 = t * t * t;
    // f = Σ t^{3k} / Π (3j−1)(3j),  g = Σ t^{3k+1} / Π (3j)(3j+1)
    let (mut f, mut fk) = (1.0, 1.0);
    let (mut g, mut gk) = (t, t);
    // derivatives: f' terms start at t²/2, g' terms start at 1
    let (mut df, mut dfk) = (0.0, t * t / 2.0);
    let (mut dg, mut dgk) = (1.0, 1.0);
    df += dfk;
    for k in 1..200 {
        let kf = k as f64;
        fk *= t3 / ((3.0 * kf - 1.0) * (3.0 * kf));
        gk *= t3 / ((3.0 * kf) * (3.0 * kf + 1.0));
        dfk *= t3 / ((3.0 * kf + 2.0) * (3.0 * kf));
        dgk *= t3 / ((3.0 * kf) * (3.0 * kf + 1.0)) * (3.0 * kf + 1.0) / (3.0 * kf - 2.0);
        f += fk;
        g += gk;
        df += dfk;
        dg += dgk;
        let small = |term: f64, sum: f64| term.abs() <= 1e-18 * sum.abs().max(1e-300);
        if small(fk, f) && small(gk, g) && small(dfk, df) && small(dgk, dg) {
            break;
        }
    }
    (AI0 * f - MINUS_AI1 * g, AI0 * df - MINUS_AI1 * dg)
}

fn laplace_integral(x: f64) -> (f64, f64) {
    let zeta = 2.0 / 3.0 * x * x.sqrt();
    let rx = x.sqrt();
    // the Gaussian factor is below e^{-80} past this point
    let top = (80.0 / rx).sqrt();
    let kernel = |s: f64| (-rx * s * s).exp() * (s * s * s / 3.0).cos();
    let i0 = integrate(kernel, 0.0, top, 1e-16, 1e-14, 400).value;
    let i2 = integrate(|s| s * s * kernel(s), 0.0, top, 1e-16, 1e-14, 400).value;
    let e = (-zeta).exp() / PI;
    let ai = e * i0;
    (ai, -rx * ai - e * i2 / (2.0 * rx))
}

/// Coefficients `u_k` and `v_k` of the asymptotic expansions.
fn coefficients(count: usize) -> (Vec<f64>, Vec<f64>) {
    let mut u = vec![1.0];
    for k in 1..count {
        let kf = k as f64;
        let prev = u[k - 1];
        u.push(prev * (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0) / (216.0 * kf * (2.0 * kf - 1.0)));
    }
    let v = u
        .iter()
        .enumerate()
        .map(|(k, &uk)| {
            let kf = k as f64;
            -(6.0 * kf + 1.0) / (6.0 * kf - 1.0) * uk
        })
        .collect();
    (u, v)
}

/// Sums `Σ sign_k c_k ζ^{-k}` over the given indices, stopping at the
/// smallest term.
fn truncated_sum(coeffs: &[f64], zeta: f64, indices: impl Iterator<Item = usize>, alternate: bool) -> f64 {
    let mut sum = 0.0;
    let mut last = f64::INFINITY;
    for (j, k) in indices.enumerate() {
        let term = coeffs[k] / zeta.powi(k as i32);
        if term.abs() > last {
            break;
        }
        last = term.abs();
        sum += if alternate && j % 2 == 1 { -term } else { term };
    }
    sum
}

const TERMS: usize = 40;

fn asymptotic_positive(x: f64) -> (f64, f64) {
    let (u, v) = coefficients(TERMS);
    let zeta = 2.0 / 3.0 * x * x.sqrt();
    let e = (-zeta).exp() / (2.0 * PI.sqrt());
    let q = x.powf(0.25);
    let su = truncated_sum(&u, zeta, 0..TERMS, true);
    let sv = truncated_sum(&v, zeta, 0..TERMS, true);
    (e / q * su, -q * e * sv)
}

fn asymptotic_negative(x: f64) -> (f64, f64) {
    let (u, v) = coefficients(TERMS);
    let zeta = 2.0 / 3.0 * x * x.sqrt();
    let (s, c) = (zeta - FRAC_PI_4).sin_cos();
    let q = x.powf(0.25);
    let even = |co: &[f64]| truncated_sum(co, zeta, (0..TERMS).step_by(2), true);
    let odd = |co: &[f64]| truncated_sum(co, zeta, (1..TERMS).step_by(2), true);
    let ai = (c * even(&u) + s * odd(&u)) / (PI.sqrt() * q);
    let dai = q * (s * even(&v) - c * odd(&v)) / PI.sqrt();
    (ai, dai)
}
