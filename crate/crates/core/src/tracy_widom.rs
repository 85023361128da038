//! The Tracy–Widom law for real symmetric ensembles (β = 1).
//!
//! `F1(t) = exp(−½ ∫_t^∞ [q(x) + (x − t) q(x)²] dx)` where `q` is the
//! Hastings–McLeod solution of `q'' = t q + 2 q³`, `q ~ Ai` at `+∞`. The ODE
//! is solved on a uniform grid (see [`solve_painleve2`]) and the three inner
//! integrals are accumulated from the right so `F1` falls out on the same grid.

use std::fmt::Write as _;
use std::path::Path;

use crate::airy::airy_ai;
use crate::error::{Error, Result};
use crate::quadrature::integrate;

/// Past this magnitude the march has picked up the growing branch.
pub const BLOWUP_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PainleveConfig {
    pub t_plus: f64,
    pub t_min: f64,
    pub step: f64,
}

impl Default for PainleveConfig {
    fn default() -> Self {
        PainleveConfig { t_plus: 8.0, t_min: -10.0, step: 1e-3 }
    }
}

impl PainleveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_min.is_finite() && self.t_plus.is_finite() && self.t_min < 0.0 && 0.0 < self.t_plus) {
            return Err(Error::InvalidParameter(format!(
                "need t_min < 0 < t_plus, got t_min = {}, t_plus = {}",
                self.t_min, self.t_plus
            )));
        }
        if !(self.step > 0.0 && self.step.is_finite()) || self.step > self.t_plus - self.t_min {
            return Err(Error::InvalidParameter(format!(
                "step must be positive and below the span, got {}",
                self.step
            )));
        }
        Ok(())
    }

    /// Number of RK4 steps; the step is shrunk slightly so they tile the span.
    pub fn steps(&self) -> usize {
        ((self.t_plus - self.t_min) / self.step).round().max(1.0) as usize
    }

    pub fn halved(&self) -> Self {
        PainleveConfig { step: self.step / 2.0, ..*self }
    }
}

/// Solution on an ascending grid. `iq`, `iq2` and `ixq2` hold
/// `∫_t^{t_plus}` of `q`, `q²` and `x q²`.
#[derive(Debug, Clone, PartialEq)]
pub struct PainleveSolution {
    pub t: Vec<f64>,
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
    pub iq: Vec<f64>,
    pub iq2: Vec<f64>,
    pub ixq2: Vec<f64>,
}

type State = [f64; 2];

fn rhs(t: f64, s: &State) -> State {
    [s[1], t * s[0] + 2.0 * s[0].powi(3)]
}

fn axpy(s: &State, h: f64, k: &State) -> State {
    [s[0] + h * k[0], s[1] + h * k[1]]
}

/// Ascending grid `t_plus − k·h` with the left end pinned to `t_min`.
fn grid(cfg: &PainleveConfig) -> (Vec<f64>, f64) {
    let steps = cfg.steps();
    let h = (cfg.t_plus - cfg.t_min) / steps as f64;
    let t = (0..=steps).rev().map(|k| if k == steps { cfg.t_min } else { cfg.t_plus - k as f64 * h }).collect();
    (t, h)
}

/// Plain RK4 march from `(Ai, Ai')(t_plus)` down to `t_stop` on the
/// configured step, returned ascending as `(t, q, q')`.
///
/// Perturbations of the Hastings–McLeod solution grow like
/// `exp((2√2/3)|t|^{3/2})` in this direction, so in double precision the
/// march is only trustworthy to roughly `t ≈ −4`.
pub fn march_painleve2(cfg: &PainleveConfig, t_stop: f64) -> Result<Vec<(f64, f64, f64)>> {
    cfg.validate()?;
    let (t, h) = grid(cfg);
    let (ai, dai) = airy_ai(cfg.t_plus)?;
    let mut s: State = [ai, dai];
    let mut rows = vec![(cfg.t_plus, s[0], s[1])];
    for i in (0..t.len() - 1).rev() {
        if t[i + 1] <= t_stop {
            break;
        }
        let tk = t[i + 1];
        let k1 = rhs(tk, &s);
        let k2 = rhs(tk - h / 2.0, &axpy(&s, -h / 2.0, &k1));
        let k3 = rhs(tk - h / 2.0, &axpy(&s, -h / 2.0, &k2));
        let k4 = rhs(tk - h, &axpy(&s, -h, &k3));
        for j in 0..2 {
            s[j] -= h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if !s[0].is_finite() || s[0].abs() > BLOWUP_THRESHOLD {
            return Err(Error::Blowup { t: t[i], q: s[0] });
        }
        rows.push((t[i], s[0], s[1]));
    }
    rows.reverse();
    Ok(rows)
}

/// Left asymptote `√(−t/2)(1 + 1/(8t³) − 73/(128t⁶) + 10657/(1024t⁹))`.
pub fn hastings_mcleod_left(t: f64) -> f64 {
    let u = 1.0 / (t * t * t);
    (-t / 2.0).sqrt() * (1.0 + u * (1.0 / 8.0 + u * (-73.0 / 128.0 + u * 10657.0 / 1024.0)))
}

const MARCH_FLOOR: f64 = -4.0;
const NEWTON_ITERATIONS: usize = 40;

/// Hastings–McLeod solution on `[t_min, t_plus]`.
///
/// The RK4 march supplies the starting guess down to `t ≈ −4`; below that
/// the left asymptote does. Newton's method then solves the Numerov
/// discretisation `δ²q_i = h²/12 (f_{i−1} + 10 f_i + f_{i+1})`, `f = tq + 2q³`,
/// with Dirichlet data `Ai(t_plus)` and the left asymptote. The linearised
/// operator `−d² + t + 6q²` is positive, so unlike the march this is well
/// conditioned all the way to `t_min`.
pub fn solve_painleve2(cfg: &PainleveConfig) -> Result<PainleveSolution> {
    cfg.validate()?;
    let (t, h) = grid(cfg);
    let n = t.len();
    let march = march_painleve2(cfg, MARCH_FLOOR.max(cfg.t_min))?;
    let offset = n - march.len();
    let mut q: Vec<f64> =
        (0..n).map(|i| if i >= offset { march[i - offset].1 } else { hastings_mcleod_left(t[i]).max(0.0) }).collect();
    q[0] = hastings_mcleod_left(t[0]);
    q[n - 1] = airy_ai(cfg.t_plus)?.0;

    let c = h * h / 12.0;
    let f = |i: usize, q: &[f64]| t[i] * q[i] + 2.0 * q[i].powi(3);
    let df = |i: usize, q: &[f64]| t[i] + 6.0 * q[i] * q[i];
    // once the update is this small one more (quadratically convergent)
    // step reaches rounding level
    let mut polish = 2 * usize::from(n > 2);
    for _ in 0..NEWTON_ITERATIONS {
        if polish == 0 {
            break;
        }
        // tridiagonal Newton system on the interior unknowns
        let m = n - 2;
        let mut diag = vec![0.0; m];
        let mut off_lo = vec![0.0; m];
        let mut off_hi = vec![0.0; m];
        let mut r = vec![0.0; m];
        for k in 0..m {
            let i = k + 1;
            r[k] = -(q[i + 1] - 2.0 * q[i] + q[i - 1] - c * (f(i - 1, &q) + 10.0 * f(i, &q) + f(i + 1, &q)));
            diag[k] = -2.0 - 10.0 * c * df(i, &q);
            off_lo[k] = 1.0 - c * df(i - 1, &q);
            off_hi[k] = 1.0 - c * df(i + 1, &q);
        }
        let delta = thomas(&off_lo, &diag, &off_hi, &r);
        let mut worst = 0.0f64;
        for k in 0..m {
            q[k + 1] += delta[k];
            worst = worst.max(delta[k].abs());
        }
        if !worst.is_finite() {
            return Err(Error::NoConvergence { index: 0, iterations: NEWTON_ITERATIONS });
        }
        if worst <= 1e-11 || polish == 1 {
            polish -= 1;
        }
    }
    if polish > 0 {
        return Err(Error::NoConvergence { index: 0, iterations: NEWTON_ITERATIONS });
    }

    let dq = derivative(&q, h);
    let q2: Vec<f64> = q.iter().map(|x| x * x).collect();
    let dq2: Vec<f64> = (0..n).map(|i| 2.0 * q[i] * dq[i]).collect();
    let xq2: Vec<f64> = (0..n).map(|i| t[i] * q2[i]).collect();
    let dxq2: Vec<f64> = (0..n).map(|i| q2[i] + t[i] * dq2[i]).collect();
    Ok(PainleveSolution {
        iq: tail_integral(&q, &dq, h),
        iq2: tail_integral(&q2, &dq2, h),
        ixq2: tail_integral(&xq2, &dxq2, h),
        t,
        q,
        dq,
    })
}

/// Solves a tridiagonal system; `lo[0]` and `hi[m−1]` are ignored.
fn thomas(lo: &[f64], diag: &[f64], hi: &[f64], rhs: &[f64]) -> Vec<f64> {
    let m = diag.len();
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    c[0] = hi[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for k in 1..m {
        let denom = diag[k] - lo[k] * c[k - 1];
        c[k] = hi[k] / denom;
        d[k] = (rhs[k] - lo[k] * d[k - 1]) / denom;
    }
    let mut x = vec![0.0; m];
    x[m - 1] = d[m - 1];
    for k in (0..m - 1).rev() {
        x[k] = d[k] - c[k] * x[k + 1];
    }
    x
}

/// Fourth-order finite-difference derivative on a uniform grid.
fn derivative(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    if n < 5 {
        return (0..n)
            .map(|i| {
                let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
                (y[b] - y[a]) / ((b - a) as f64 * h)
            })
            .collect();
    }
    let mut d = vec![0.0; n];
    for i in 2..n - 2 {
        d[i] = (y[i - 2] - 8.0 * y[i - 1] + 8.0 * y[i + 1] - y[i + 2]) / (12.0 * h);
    }
    let fwd = |y0: f64, y1: f64, y2: f64, y3: f64, y4: f64| {
        (-25.0 * y0 + 48.0 * y1 - 36.0 * y2 + 16.0 * y3 - 3.0 * y4) / (12.0 * h)
    };
    d[0] = fwd(y[0], y[1], y[2], y[3], y[4]);
    d[1] = (-3.0 * y[0] - 10.0 * y[1] + 18.0 * y[2] - 6.0 * y[3] + y[4]) / (12.0 * h);
    d[n - 1] = -fwd(y[n - 1], y[n - 2], y[n - 3], y[n - 4], y[n - 5]);
    d[n - 2] = (3.0 * y[n - 1] + 10.0 * y[n - 2] - 18.0 * y[n - 3] + 6.0 * y[n - 4] - y[n - 5]) / (12.0 * h);
    d
}

/// `∫_{t_i}^{t_last} g` by the end-corrected trapezoid rule
/// `h/2 (g_i + g_{i+1}) − h²/12 (g'_{i+1} − g'_i)` summed from the right.
fn tail_integral(g: &[f64], dg: &[f64], h: f64) -> Vec<f64> {
    let n = g.len();
    let mut out = vec![0.0; n];
    for i in (0..n - 1).rev() {
        out[i] = out[i + 1] + h / 2.0 * (g[i] + g[i + 1]) - h * h / 12.0 * (dg[i + 1] - dg[i]);
    }
    out
}

/// `(∫q, ∫q², ∫xq²)` over `[t, ∞)` with `q` replaced by `Ai`; the cubic
/// correction is below `Ai(t)³`.
fn airy_tails(t: f64) -> Result<(f64, f64, f64)> {
    airy_ai(t)?;
    let end = (t + 30.0).min(200.0);
    let ai = |x: f64| airy_ai(x).expect("inside the Airy range").0;
    let i = |f: &dyn Fn(f64) -> f64| integrate(f, t, end, 1e-30, 1e-12, 200).value;
    Ok((i(&ai), i(&|x| ai(x).powi(2)), i(&|x| x * ai(x).powi(2))))
}

/// Where the table came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableSource {
    Solved,
    Imported,
}

impl TableSource {
    pub fn label(&self) -> &'static str {
        match self {
            TableSource::Solved => "solved",
            TableSource::Imported => "imported",
        }
    }
}

/// Tabulated `F1` with a monotone (Fritsch–Carlson) cubic interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct TW1Table {
    t: Vec<f64>,
    q: Vec<f64>,
    f1: Vec<f64>,
    slopes: Vec<f64>,
    source: TableSource,
}

pub fn tw1_cdf_table(cfg: &PainleveConfig) -> Result<TW1Table> {
    let sol = solve_painleve2(cfg)?;
    let (tq, tq2, txq2) = airy_tails(cfg.t_plus)?;
    let f1 = (0..sol.t.len())
        .map(|i| {
            let t = sol.t[i];
            let exponent = (sol.iq[i] + tq) + (sol.ixq2[i] + txq2) - t * (sol.iq2[i] + tq2);
            (-0.5 * exponent).exp().clamp(0.0, 1.0)
        })
        .collect();
    TW1Table::new(sol.t, sol.q, f1, TableSource::Solved)
}

pub fn tw1_quantile(alpha: f64, table: &TW1Table) -> Result<f64> {
    table.quantile(alpha)
}

pub fn tw1_pvalue(stat: f64, table: &TW1Table) -> Result<f64> {
    table.pvalue(stat)
}

impl TW1Table {
    pub fn new(t: Vec<f64>, q: Vec<f64>, f1: Vec<f64>, source: TableSource) -> Result<Self> {
        if t.len() < 2 || q.len() != t.len() || f1.len() != t.len() {
            return Err(Error::InvalidDimensions(format!(
                "table columns need equal length ≥ 2, got {}, {}, {}",
                t.len(),
                q.len(),
                f1.len()
            )));
        }
        if t.iter().any(|x| !x.is_finite()) || t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("t grid must be finite and strictly ascending".into()));
        }
        if f1.iter().any(|&f| !(0.0..=1.0).contains(&f)) || f1.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter("F1 column must be nondecreasing within [0, 1]".into()));
        }
        let slopes = pchip_slopes(&t, &f1);
        Ok(TW1Table { t, q, f1, slopes, source })
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn f1(&self) -> &[f64] {
        &self.f1
    }

    pub fn source(&self) -> TableSource {
        self.source
    }

    pub fn t_min(&self) -> f64 {
        self.t[0]
    }

    pub fn t_max(&self) -> f64 {
        self.t[self.t.len() - 1]
    }

    /// `F1(t)`. Outside the grid the left tail follows `exp(−|t|³/24)` and
    /// the right tail `½∫_t^∞ Ai` in leading order.
    pub fn cdf(&self, t: f64) -> f64 {
        let last = self.t.len() - 1;
        if t.is_nan() {
            return f64::NAN;
        }
        if t <= self.t[0] {
            let (a, b) = (self.t[0].abs().powi(3), t.abs().powi(3));
            return self.f1[0] * (-(b - a) / 24.0).exp();
        }
        if t >= self.t[last] {
            let tail_at = |x: f64| {
                let zeta = 2.0 / 3.0 * x * x.sqrt();
                (-zeta).exp() / (4.0 * std::f64::consts::PI.sqrt() * x.powf(0.75))
            };
            if t == self.t[last] || self.t[last] <= 0.0 {
                return self.f1[last];
            }
            let gap = 1.0 - self.f1[last];
            return 1.0 - gap.min(tail_at(self.t[last])) * (tail_at(t) / tail_at(self.t[last]));
        }
        let i = self.t.partition_point(|&x| x <= t) - 1;
        self.hermite(i, t).0
    }

    /// Derivative of the interpolant; zero outside the grid.
    pub fn density(&self, t: f64) -> f64 {
        let last = self.t.len() - 1;
        if !(t > self.t[0] && t < self.t[last]) {
            return 0.0;
        }
        let i = self.t.partition_point(|&x| x <= t) - 1;
        self.hermite(i, t).1
    }

    fn hermite(&self, i: usize, t: f64) -> (f64, f64) {
        let h = self.t[i + 1] - self.t[i];
        let s = (t - self.t[i]) / h;
        let (y0, y1) = (self.f1[i], self.f1[i + 1]);
        let (m0, m1) = (self.slopes[i], self.slopes[i + 1]);
        let s2 = s * s;
        let s3 = s2 * s;
        let value = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * h * m0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * h * m1;
        let deriv = ((6.0 * s2 - 6.0 * s) * y0 + (-6.0 * s2 + 6.0 * s) * y1) / h
            + (3.0 * s2 - 4.0 * s + 1.0) * m0
            + (3.0 * s2 - 2.0 * s) * m1;
        (value.clamp(y0.min(y1), y0.max(y1)), deriv)
    }

    /// Inverse of [`cdf`](Self::cdf), clamped to the grid ends.
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("quantile level must lie in (0, 1), got {alpha}")));
        }
        let last = self.t.len() - 1;
        if alpha <= self.f1[0] {
            return Ok(self.t[0]);
        }
        if alpha >= self.f1[last] {
            return Ok(self.t[last]);
        }
        // first node with F1 ≥ alpha brackets the root from the right
        let j = self.f1.partition_point(|&f| f < alpha);
        let (mut lo, mut hi) = (self.t[j - 1], self.t[j]);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < alpha {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// One-sided upper-tail p-value `1 − F1(stat)`.
    pub fn pvalue(&self, stat: f64) -> Result<f64> {
        if stat.is_nan() {
            return Err(Error::InvalidParameter("statistic is NaN".into()));
        }
        Ok((1.0 - self.cdf(stat)).clamp(0.0, 1.0))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.t.len() * 72);
        out.push_str("t,q,F1\n");
        for i in 0..self.t.len() {
            let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", self.t[i], self.q[i], self.f1[i]);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some(h) if h.trim() == "t,q,F1" => {}
            other => return Err(Error::Parse(format!("expected header t,q,F1, found {other:?}"))),
        }
        let (mut t, mut q, mut f1) = (vec![], vec![], vec![]);
        for (row, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!("row {}: expected 3 fields, found {}", row + 1, fields.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("row {}: {s:?}: {e}", row + 1)));
            t.push(num(fields[0])?);
            q.push(num(fields[1])?);
            f1.push(num(fields[2])?);
        }
        TW1Table::new(t, q, f1, TableSource::Imported)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        TW1Table::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Fritsch–Carlson slopes: harmonic-mean interior slopes, zero at extrema.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s * d0 <= 0.0 {
            0.0
        } else if d0 * d1 <= 0.0 && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    d[0] = end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}
