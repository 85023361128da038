//! Spectra, singular systems, resolvents and the deterministic identities
//! they satisfy (interlacing, Weyl, the singular-vector component formula,
//! Schur complements).

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::eigen;
use crate::ensembles::{gram, EntryDistribution, RowNormalizedMatrix};
use crate::error::{Error, Result};
use crate::rng;

pub type C64 = Complex<f64>;

/// Ascending eigenvalues with optional orthonormal eigenvectors (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: Option<DMatrix<f64>>,
}

impl Spectrum {
    pub fn from_values(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        Spectrum { values, vectors: None }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(f64::NAN)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(f64::NAN)
    }
}

pub fn symmetric_eigen(m: &DMatrix<f64>, want_vectors: bool) -> Result<Spectrum> {
    let e = eigen::symmetric_eigen(m, want_vectors)?;
    Ok(Spectrum { values: e.values, vectors: e.vectors })
}

/// Singular values `σ₁ ≤ … ≤ σ_p` of a `p × m` matrix (`p ≤ m`) with left
/// vectors `v_k` (columns of `left`, `p × p`) and right vectors `u_k`
/// (columns of `right`, `m × p`) such that `A u_k = σ_k v_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularSystem {
    pub sigmas: Vec<f64>,
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
}

/// Singular triplets of a row-normalised matrix.
pub fn singular_triplets(y: &RowNormalizedMatrix) -> Result<SingularSystem> {
    singular_system(&y.rows)
}

/// Thin SVD of a wide matrix computed from its `p × p` Gram matrix, with
/// `u_k = Aᵀ v_k / σ_k`. Right vectors for `σ_k < 1e-12` are completed to an
/// orthonormal set.
pub fn singular_system(a: &DMatrix<f64>) -> Result<SingularSystem> {
    let (p, m) = a.shape();
    if p > m {
        return Err(Error::InvalidDimensions(format!("singular_system expects p ≤ m, got {p}×{m}")));
    }
    let e = eigen::symmetric_eigen(&gram(a), true)?;
    let left = e.vectors.expect("vectors requested");
    let sigmas: Vec<f64> = e.values.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let mut right = a.transpose() * &left;
    let mut pending = Vec::new();
    for (k, &s) in sigmas.iter().enumerate() {
        if s < 1e-12 {
            pending.push(k);
        } else {
            right.column_mut(k).unscale_mut(s);
        }
    }
    if !pending.is_empty() {
        complete_basis(&mut right, &pending);
    }
    Ok(SingularSystem { sigmas, left, right })
}

/// Replaces the listed columns with unit vectors orthogonal to every other
/// column, by Gram–Schmidt on the standard basis.
fn complete_basis(q: &mut DMatrix<f64>, slots: &[usize]) {
    let (m, cols) = q.shape();
    let mut fixed: Vec<usize> = (0..cols).filter(|c| !slots.contains(c)).collect();
    let mut candidate = 0usize;
    for &slot in slots {
        loop {
            assert!(candidate < m, "cannot complete orthonormal basis");
            let mut x = DVector::zeros(m);
            x[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for &c in &fixed {
                    let proj = q.column(c).dot(&x);
                    x.axpy(-proj, &q.column(c), 1.0);
                }
            }
            let norm = x.norm();
            if norm > 1e-6 {
                q.set_column(slot, &(x / norm));
                fixed.push(slot);
                break;
            }
        }
    }
}

/// `z = E + iη` with `η > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexPoint {
    e: f64,
    eta: f64,
}

impl ComplexPoint {
    pub fn new(e: f64, eta: f64) -> Result<Self> {
        if !(eta > 0.0) || !e.is_finite() || !eta.is_finite() {
            return Err(Error::InvalidParameter(format!("need η > 0, got E={e}, η={eta}")));
        }
        Ok(ComplexPoint { e, eta })
    }

    pub fn e(&self) -> f64 {
        self.e
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn z(&self) -> C64 {
        C64::new(self.e, self.eta)
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::InvalidParameter(format!("interval [{lo}, {hi}] is empty")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Number of eigenvalues in `[lo, hi]`.
pub fn count_in_interval(s: &Spectrum, interval: Interval) -> usize {
    let lo = s.values.partition_point(|&x| x < interval.lo);
    let hi = s.values.partition_point(|&x| x <= interval.hi);
    hi - lo
}

/// `(1/p) Σ 1/(λ_k − z)`.
pub fn empirical_stieltjes(s: &Spectrum, point: ComplexPoint) -> C64 {
    let z = point.z();
    let sum: C64 = s.values.iter().map(|&l| (C64::new(l, 0.0) - z).inv()).sum();
    sum / s.values.len() as f64
}

/// `(M − z)⁻¹` by LU with partial pivoting.
pub fn green_matrix(m: &DMatrix<f64>, point: ComplexPoint) -> Result<DMatrix<C64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidDimensions("green_matrix needs a square matrix".into()));
    }
    resolvent(m, point.z())
}

fn resolvent(m: &DMatrix<f64>, z: C64) -> Result<DMatrix<C64>> {
    let n = m.nrows();
    let shifted = DMatrix::from_fn(n, n, |i, j| {
        let v = C64::new(m[(i, j)], 0.0);
        if i == j {
            v - z
        } else {
            v
        }
    });
    shifted.try_inverse().ok_or(Error::Singular)
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}

/// Residuals of the two Schur-complement identities for the first row of
/// `Y`:
///
/// * `r1 = |G₁₁ − 1/(1 − z − y₁ᵀ Y₁ᵀY₁ 𝒢₁ y₁)|`,
/// * `r2 = |Tr G − Tr G⁽¹⁾ + 1/z − z G₁₁ y₁ᵀ 𝒢₁² y₁|`,
///
/// where `Y₁` is `Y` without its first row, `G⁽¹⁾ = (Y₁Y₁ᵀ − z)⁻¹` and
/// `𝒢₁ = (Y₁ᵀY₁ − z)⁻¹`. Every resolvent is an independent dense inverse.
pub fn schur_identity_residuals(y: &RowNormalizedMatrix, point: ComplexPoint) -> Result<(f64, f64)> {
    schur_residuals_at(y, point.z())
}

fn schur_residuals_at(y: &RowNormalizedMatrix, z: C64) -> Result<(f64, f64)> {
    let p = y.rows.nrows();
    if p < 2 {
        return Err(Error::InvalidDimensions("Schur identities need p ≥ 2".into()));
    }
    let w = gram(&y.rows);
    let g = resolvent(&w, z)?;

    let y1 = y.rows.rows(1, p - 1).into_owned();
    let row1: DMatrix<C64> = DMatrix::from_fn(y.rows.ncols(), 1, |j, _| C64::new(y.rows[(0, j)], 0.0));
    let minor = gram(&y1);
    let g_minor = resolvent(&minor, z)?;
    let outer = y1.transpose() * &y1;
    let cal_g = resolvent(&outer, z)?;

    let outer_c = to_complex(&outer);
    let quad = (row1.transpose() * &outer_c * &cal_g * &row1)[(0, 0)];
    let r1 = (g[(0, 0)] - (C64::new(1.0, 0.0) - z - quad).inv()).norm();

    let cal_g2 = &cal_g * &cal_g;
    let quad2 = (row1.transpose() * cal_g2 * &row1)[(0, 0)];
    let lhs = g.trace() - g_minor.trace() + z.inv();
    let rhs = z * g[(0, 0)] * quad2;
    Ok((r1, (lhs - rhs).norm()))
}

/// Which pair of matrices an interlacing check compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterlacingKind {
    /// Eigenvalues of a Hermitian matrix and an `(n−1) × (n−1)` principal minor.
    HermitianMinor,
    /// Singular values of a `p × n` matrix and the `(p−1) × n` matrix with a row removed.
    RowDeleted,
    /// Singular values of a `p × n` matrix (`p < n`) and the `p × (n−1)`
    /// matrix with a column removed.
    ColumnDeleted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOutcome {
    pub pass: bool,
    /// Smallest `rhs − lhs` over all inequalities checked; negative means violated.
    pub worst_margin: f64,
}

pub const IDENTITY_SLACK: f64 = 1e-10;

pub fn interlacing_check(outer: &Spectrum, minor: &Spectrum, kind: InterlacingKind) -> Result<CheckOutcome> {
    let (a, b) = (&outer.values, &minor.values);
    let mut worst = f64::INFINITY;
    match kind {
        InterlacingKind::HermitianMinor | InterlacingKind::RowDeleted => {
            if a.len() != b.len() + 1 {
                return Err(Error::InvalidDimensions(format!(
                    "minor must have one fewer value: {} vs {}",
                    a.len(),
                    b.len()
                )));
            }
            for i in 0..b.len() {
                worst = worst.min(b[i] - a[i]).min(a[i + 1] - b[i]);
            }
        }
        InterlacingKind::ColumnDeleted => {
            if a.len() != b.len() {
                return Err(Error::InvalidDimensions(format!(
                    "column-deleted minor keeps p singular values: {} vs {}",
                    a.len(),
                    b.len()
                )));
            }
            for i in 0..b.len() {
                let below = if i == 0 { 0.0 } else { a[i - 1] };
                worst = worst.min(b[i] - below).min(a[i] - b[i]);
            }
        }
    }
    Ok(CheckOutcome { pass: worst >= -IDENTITY_SLACK, worst_margin: worst })
}

/// Ascending singular values of any matrix.
pub fn singular_values(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let g = if a.nrows() <= a.ncols() { gram(a) } else { gram(&a.transpose()) };
    Ok(eigen::symmetric_eigen(&g, false)?.values.into_iter().map(|l| l.max(0.0).sqrt()).collect())
}

pub fn operator_norm(a: &DMatrix<f64>) -> Result<f64> {
    Ok(singular_values(a)?.last().copied().unwrap_or(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeylOutcome {
    pub pass: bool,
    pub max_gap: f64,
    pub op_norm: f64,
}

/// `max_i |σ_i(M) − σ_i(N)| ≤ ‖M − N‖_op`.
pub fn weyl_check(m: &DMatrix<f64>, n: &DMatrix<f64>) -> Result<WeylOutcome> {
    if m.shape() != n.shape() {
        return Err(Error::InvalidDimensions(format!("{:?} vs {:?}", m.shape(), n.shape())));
    }
    let sm = singular_values(m)?;
    let sn = singular_values(n)?;
    let max_gap = sm.iter().zip(&sn).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let op_norm = operator_norm(&(m - n))?;
    Ok(WeylOutcome { pass: max_gap <= op_norm + IDENTITY_SLACK, max_gap, op_norm })
}

/// Minimum separation required between `σ_i(A)` and every singular value
/// of the minor.
pub const COMPONENT_SEPARATION: f64 = 1e-8;

/// Squared last component of the `i`-th right singular vector of `A`
/// (`p × n`, `p ≤ n`), predicted from the `p × (n−1)` minor `A'` and the
/// removed column `h`:
///
/// `|x|² = 1 / (1 + Σ_j σ_j(A')² |v_j(A')·h|² / (σ_j(A')² − σ_i(A)²)²)`.
///
/// Returns `(predicted, actual)`.
pub fn minor_component(a: &DMatrix<f64>, i: usize) -> Result<(f64, f64)> {
    let (p, n) = a.shape();
    if n < 2 || p > n || i >= p {
        return Err(Error::InvalidDimensions(format!("index {i} for {p}×{n} matrix")));
    }
    let full = singular_system(a)?;
    let sigma = full.sigmas[i];
    let minor = a.columns(0, n - 1).into_owned();
    let h = a.column(n - 1).into_owned();

    let e = eigen::symmetric_eigen(&gram(&minor), true)?;
    let vecs = e.vectors.expect("vectors requested");
    let nontrivial = p.min(n - 1);
    let mut sum = 0.0;
    for j in (p - nontrivial)..p {
        let s2 = e.values[j].max(0.0);
        let gap = (s2.sqrt() - sigma).abs();
        if gap <= COMPONENT_SEPARATION {
            return Err(Error::NearDegenerate { gap });
        }
        let proj = vecs.column(j).dot(&h);
        sum += s2 * proj * proj / (s2 - sigma * sigma).powi(2);
    }
    let predicted = 1.0 / (1.0 + sum);
    let actual = full.right[(n - 1, i)].powi(2);
    Ok((predicted, actual))
}

/// Row version: squared last component of the `i`-th left singular vector,
/// predicted from the `(p−1) × n` minor and the removed row `l`.
pub fn minor_component_left(a: &DMatrix<f64>, i: usize) -> Result<(f64, f64)> {
    let (p, n) = a.shape();
    if p < 2 || p > n || i >= p {
        return Err(Error::InvalidDimensions(format!("index {i} for {p}×{n} matrix")));
    }
    let full = singular_system(a)?;
    let sigma = full.sigmas[i];
    let minor = a.rows(0, p - 1).into_owned();
    let l = a.row(p - 1).transpose();

    let sys = singular_system(&minor)?;
    let mut sum = 0.0;
    for j in 0..(p - 1) {
        let s = sys.sigmas[j];
        let gap = (s - sigma).abs();
        if gap <= COMPONENT_SEPARATION {
            return Err(Error::NearDegenerate { gap });
        }
        if s < 1e-12 {
            continue;
        }
        let proj = sys.right.column(j).dot(&l);
        sum += s * s * proj * proj / (s * s - sigma * sigma).powi(2);
    }
    let predicted = 1.0 / (1.0 + sum);
    let actual = full.left[(p - 1, i)].powi(2);
    Ok((predicted, actual))
}

/// Largest absolute component over every left and right singular vector.
pub fn sup_norm_components(sys: &SingularSystem) -> f64 {
    sys.left.amax().max(sys.right.amax())
}

/// Smallest gap between adjacent eigenvalues (`+∞` for fewer than two).
pub fn min_gap(s: &Spectrum) -> f64 {
    s.values.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

/// Smallest distance between a value of `s1` and a value of `s2`.
pub fn shared_eigenvalue_gap(s1: &Spectrum, s2: &Spectrum) -> f64 {
    let (a, b) = (&s1.values, &s2.values);
    let (mut i, mut j) = (0, 0);
    let mut best = f64::INFINITY;
    while i < a.len() && j < b.len() {
        best = best.min((a[i] - b[j]).abs());
        if a[i] < b[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    best
}

/// One draw of `|‖π_H 𝒳‖ − √d|` for an `n`-vector `𝒳` with i.i.d. `dist`
/// entries and a uniformly random `d`-dimensional subspace `H`.
///
/// `H` is spanned by the thin-QR factor of an `n × d` Gaussian matrix, which
/// has the law of the first `d` columns of a Haar orthogonal matrix.
pub fn projection_concentration_trial(n: usize, d: usize, dist: EntryDistribution, seed: u64) -> Result<f64> {
    if d < 1 || d > n {
        return Err(Error::InvalidDimensions(format!("need 1 ≤ d ≤ n, got d={d}, n={n}")));
    }
    dist.validate()?;
    let mut rng_x = rng::stream(seed, 0);
    let x = DVector::from_fn(n, |_, _| dist.sample(&mut rng_x));
    let df = d as f64;
    if d == n {
        return Ok((x.norm() - df.sqrt()).abs());
    }
    let mut rng_h = rng::stream(seed, 1);
    let basis = DMatrix::from_fn(n, d, |_, _| rng_h.sample::<f64, _>(StandardNormal));
    let q = basis.qr().q();
    let proj = q.transpose() * x;
    Ok((proj.norm() - df.sqrt()).abs())
}
