//! Marchenko–Pastur law: density, distribution function, Stieltjes
//! transform, and empirical checks of a spectrum against it.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature;
use crate::spectra::{count_in_interval, ComplexPoint, Interval, Spectrum, C64};

/// Aspect ratio `y ∈ (0, 1)` and support `[a, b] = [(1−√y)², (1+√y)²]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MpParams {
    pub y: f64,
    pub a: f64,
    pub b: f64,
}

pub fn mp_params(y: f64) -> Result<MpParams> {
    if !(y > 0.0 && y < 1.0) {
        return Err(Error::InvalidParameter(format!("aspect ratio must lie in (0,1), got {y}")));
    }
    let r = y.sqrt();
    Ok(MpParams { y, a: (1.0 - r).powi(2), b: (1.0 + r).powi(2) })
}

/// The finite-`(p, n)` law: `y` replaced by `p/n`, edges `λ±`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NonasymptoticMp {
    pub p: usize,
    pub n: usize,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    /// `(log p)^{log log p}`.
    pub phi: f64,
    pub law: MpParams,
}

pub fn nonasymptotic_params(p: usize, n: usize) -> Result<NonasymptoticMp> {
    if p == 0 || p >= n {
        return Err(Error::InvalidParameter(format!("need 1 ≤ p < n, got p={p}, n={n}")));
    }
    let law = mp_params(p as f64 / n as f64)?;
    let lp = (p as f64).ln();
    // log log p is negative for p < 3; φ is only meaningful for large p
    let phi = if lp > 0.0 { lp.powf(lp.ln()) } else { 1.0 };
    Ok(NonasymptoticMp { p, n, lambda_minus: law.a, lambda_plus: law.b, phi, law })
}

pub fn mp_density(x: f64, params: &MpParams) -> f64 {
    let MpParams { y, a, b } = *params;
    if x <= a || x >= b {
        return 0.0;
    }
    ((b - x) * (x - a)).sqrt() / (2.0 * PI * x * y)
}

pub fn mp_density_nonasym(x: f64, params: &NonasymptoticMp) -> f64 {
    mp_density(x, &params.law)
}

/// `∫_a^x ρ`, integrated in `θ` with `x = a + (b−a) sin²θ`, which turns the
/// square-root edges into a smooth integrand.
pub fn mp_cdf(x: f64, params: &MpParams) -> f64 {
    let MpParams { y, a, b } = *params;
    if x <= a {
        return 0.0;
    }
    if x >= b {
        return 1.0;
    }
    let width = b - a;
    let theta_x = ((x - a) / width).sqrt().min(1.0).asin();
    let integrand = |t: f64| {
        let (s, c) = t.sin_cos();
        let xt = a + width * s * s;
        width * width * s * s * c * c / (PI * xt * y)
    };
    let r = quadrature::integrate(integrand, 0.0, theta_x, 1e-15, 1e-14, 2000);
    r.value.clamp(0.0, 1.0)
}

/// Inverse of [`mp_cdf`] by bisection.
pub fn mp_quantile(u: f64, params: &MpParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::InvalidParameter(format!("quantile level {u} outside [0,1]")));
    }
    let (mut lo, mut hi) = (params.a, params.b);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mp_cdf(mid, params) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `s(z) = (1 − y − z + √((z−1−y)² − 4y)) / (2yz)` on the branch with
/// `Im s > 0`.
///
/// Both roots of `yz s² + (y+z−1) s + 1 = 0` are formed without
/// cancellation (the larger one directly, the smaller through the product
/// of roots) and the Herglotz root is kept.
pub fn mp_stieltjes(point: ComplexPoint, params: &MpParams) -> C64 {
    let y = params.y;
    let z = point.z();
    let one = C64::new(1.0, 0.0);
    let b = C64::new(y - 1.0, 0.0) + z;
    let disc = ((z - one - y) * (z - one - y) - 4.0 * y).sqrt();
    let q = if (b.conj() * disc).re >= 0.0 { -(b + disc) } else { -(b - disc) };
    let big = q / (2.0 * y * z);
    let small = one / (y * z * big);
    if small.im >= big.im {
        small
    } else {
        big
    }
}

pub fn mp_stieltjes_nonasym(point: ComplexPoint, params: &NonasymptoticMp) -> C64 {
    mp_stieltjes(point, &params.law)
}

/// `|s + 1/(y + z − 1 + yzs)|`.
pub fn self_consistency_residual(s: C64, point: ComplexPoint, params: &MpParams) -> f64 {
    let y = params.y;
    let z = point.z();
    (s + (C64::new(y - 1.0, 0.0) + z + y * z * s).inv()).norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalCheck {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub expected: f64,
    pub deviation: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalLawReport {
    pub checks: Vec<IntervalCheck>,
    pub pass_fraction: f64,
    /// Interval with the largest `deviation / bound`.
    pub worst: IntervalCheck,
}

/// `K² log⁷p / (δ⁹ p)` with `K = log² p`.
pub fn default_min_len(p: usize, delta: f64) -> f64 {
    let lp = (p as f64).ln();
    let k = lp * lp;
    k * k * lp.powi(7) / (delta.powi(9) * p as f64)
}

/// Compares eigenvalue counts on a grid of intervals inside `[a/2, 2b]` with
/// `p ∫_I ρ`, accepting an interval when `|N_I − p∫_I ρ| ≤ δ p |I|`.
///
/// The grid has `grid` intervals with equally spaced centres; interval `k`
/// has width `min_len · 2^(k mod 3)`.
pub fn local_law_report(
    s: &Spectrum,
    params: &MpParams,
    delta: f64,
    min_len: f64,
    grid: usize,
) -> Result<LocalLawReport> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidParameter(format!("δ must lie in (0, 1/2), got {delta}")));
    }
    if !(min_len > 0.0) || grid == 0 {
        return Err(Error::InvalidParameter("need min_len > 0 and grid ≥ 1".into()));
    }
    let (lo_all, hi_all) = (params.a / 2.0, 2.0 * params.b);
    let p = s.len() as f64;
    let mut checks = Vec::with_capacity(grid);
    for k in 0..grid {
        let width = (min_len * f64::from(1u32 << (k % 3))).min(hi_all - lo_all);
        let span = hi_all - lo_all - width;
        let frac = if grid == 1 { 0.5 } else { k as f64 / (grid - 1) as f64 };
        let lo = lo_all + frac * span;
        let interval = Interval::new(lo, lo + width)?;
        let count = count_in_interval(s, interval);
        let expected = p * (mp_cdf(interval.hi(), params) - mp_cdf(interval.lo(), params));
        let deviation = (count as f64 - expected).abs();
        let bound = delta * p * interval.len();
        checks.push(IntervalCheck {
            lo: interval.lo(),
            hi: interval.hi(),
            count,
            expected,
            deviation,
            bound,
            pass: deviation <= bound,
        });
    }
    let passed = checks.iter().filter(|c| c.pass).count();
    let worst =
        *checks.iter().max_by(|x, y| (x.deviation / x.bound).total_cmp(&(y.deviation / y.bound))).expect("grid ≥ 1");
    Ok(LocalLawReport { pass_fraction: passed as f64 / grid as f64, checks, worst })
}

/// `Λ = |s_p − s_W|`, `Λ_d = max_k |G_kk − s_W|`, `Λ_o = max_{k≠l} |G_kl|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GreenDiagnostics {
    pub lambda: f64,
    pub lambda_d: f64,
    pub lambda_o: f64,
}

pub fn lambda_diagnostics(g: &DMatrix<C64>, point: ComplexPoint, params: &NonasymptoticMp) -> GreenDiagnostics {
    let sw = mp_stieltjes_nonasym(point, params);
    let p = g.nrows();
    let sp = g.trace() / p as f64;
    let mut lambda_d = 0.0f64;
    let mut lambda_o = 0.0f64;
    for i in 0..p {
        for j in 0..p {
            if i == j {
                lambda_d = lambda_d.max((g[(i, i)] - sw).norm());
            } else {
                lambda_o = lambda_o.max(g[(i, j)].norm());
            }
        }
    }
    GreenDiagnostics { lambda: (sp - sw).norm(), lambda_d, lambda_o }
}
