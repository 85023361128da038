//! Entry distributions and the matrices built from a data matrix.
//!
//! A [`DataMatrix`] holds `p` variables (rows) observed `n` times (columns).
//! From it we build
//!
//! * the correlation matrix `W = YYᵀ`, with `Y` the row-normalised data,
//! * the centred correlation matrix `ℛ = RRᵀ`, with `R` the row-centred and
//!   row-normalised data,
//! * the covariance matrix `S = XXᵀ`, with `X = data/√n`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Untruncated standardised laws: mean 0, variance 1, symmetric about 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseDistribution {
    Rademacher,
    Gaussian,
    UniformSymmetric,
    Laplace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryDistribution {
    Rademacher,
    Gaussian,
    /// `U[-√3, √3]`.
    UniformSymmetric,
    /// Double exponential with scale `1/√2`.
    Laplace,
    /// `base` conditioned on `|x| ≤ cutoff`. Not re-standardised.
    Truncated {
        base: BaseDistribution,
        cutoff: f64,
    },
}

impl BaseDistribution {
    fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            BaseDistribution::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            BaseDistribution::Gaussian => rng.sample(StandardNormal),
            BaseDistribution::UniformSymmetric => rng.random_range(-SQRT3..SQRT3),
            BaseDistribution::Laplace => {
                // inverse CDF on u ∈ (-1/2, 1/2)
                let u: f64 = rng.random::<f64>() - 0.5;
                let scale = std::f64::consts::FRAC_1_SQRT_2;
                let mag = -scale * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln();
                if u < 0.0 {
                    -mag
                } else {
                    mag
                }
            }
        }
    }

    pub fn is_continuous(self) -> bool {
        !matches!(self, BaseDistribution::Rademacher)
    }

    pub fn name(self) -> &'static str {
        match self {
            BaseDistribution::Rademacher => "rademacher",
            BaseDistribution::Gaussian => "gaussian",
            BaseDistribution::UniformSymmetric => "uniform_symmetric",
            BaseDistribution::Laplace => "laplace",
        }
    }
}

impl EntryDistribution {
    /// Truncation at the default level `K = log²n`.
    pub fn truncated_default(base: BaseDistribution, n: usize) -> Self {
        let l = (n as f64).ln();
        EntryDistribution::Truncated { base, cutoff: l * l }
    }

    pub fn validate(&self) -> Result<()> {
        if let EntryDistribution::Truncated { base, cutoff } = *self {
            let floor = if base == BaseDistribution::Rademacher { 1.0 } else { 0.0 };
            if !(cutoff.is_finite() && cutoff > 0.0 && cutoff >= floor) {
                return Err(Error::InvalidParameter(format!(
                    "truncation cutoff {cutoff} leaves no mass for {}",
                    base.name()
                )));
            }
        }
        Ok(())
    }

    pub fn is_continuous(&self) -> bool {
        match *self {
            EntryDistribution::Rademacher => false,
            EntryDistribution::Truncated { base, .. } => base.is_continuous(),
            _ => true,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            EntryDistribution::Rademacher => BaseDistribution::Rademacher.sample(rng),
            EntryDistribution::Gaussian => BaseDistribution::Gaussian.sample(rng),
            EntryDistribution::UniformSymmetric => BaseDistribution::UniformSymmetric.sample(rng),
            EntryDistribution::Laplace => BaseDistribution::Laplace.sample(rng),
            EntryDistribution::Truncated { base, cutoff } => loop {
                let x = base.sample(rng);
                if x.abs() <= cutoff {
                    break x;
                }
            },
        }
    }

    /// Parses `rademacher`, `gaussian`, `uniform_symmetric`, `laplace` or
    /// `truncated:<base>:<cutoff>`.
    pub fn parse(s: &str) -> Result<Self> {
        let base = |name: &str| -> Result<BaseDistribution> {
            match name {
                "rademacher" | "bernoulli" => Ok(BaseDistribution::Rademacher),
                "gaussian" | "normal" => Ok(BaseDistribution::Gaussian),
                "uniform_symmetric" | "uniform" => Ok(BaseDistribution::UniformSymmetric),
                "laplace" => Ok(BaseDistribution::Laplace),
                other => Err(Error::Parse(format!("unknown distribution '{other}'"))),
            }
        };
        let parts: Vec<&str> = s.trim().split(':').collect();
        let dist = match parts.as_slice() {
            [name] => match base(name)? {
                BaseDistribution::Rademacher => EntryDistribution::Rademacher,
                BaseDistribution::Gaussian => EntryDistribution::Gaussian,
                BaseDistribution::UniformSymmetric => EntryDistribution::UniformSymmetric,
                BaseDistribution::Laplace => EntryDistribution::Laplace,
            },
            ["truncated", b, k] => EntryDistribution::Truncated {
                base: base(b)?,
                cutoff: k.parse().map_err(|_| Error::Parse(format!("bad truncation cutoff '{k}'")))?,
            },
            _ => return Err(Error::Parse(format!("cannot parse distribution '{s}'"))),
        };
        dist.validate()?;
        Ok(dist)
    }

    pub fn label(&self) -> String {
        match *self {
            EntryDistribution::Rademacher => "rademacher".into(),
            EntryDistribution::Gaussian => "gaussian".into(),
            EntryDistribution::UniformSymmetric => "uniform_symmetric".into(),
            EntryDistribution::Laplace => "laplace".into(),
            EntryDistribution::Truncated { base, cutoff } => {
                format!("truncated:{}:{}", base.name(), cutoff)
            }
        }
    }
}

/// Raw `p × n` data: row `i` holds the `n` observations of variable `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    pub entries: DMatrix<f64>,
    /// `None` for data that did not come from a generator (files, tests).
    pub dist: Option<EntryDistribution>,
    pub seed: u64,
}

impl DataMatrix {
    pub fn from_entries(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() < 1 || entries.ncols() < 2 {
            return Err(Error::InvalidDimensions(format!(
                "need p ≥ 1 and n ≥ 2, got {}×{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        Ok(DataMatrix { entries, dist: None, seed: 0 })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let p = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidDimensions("ragged rows".into()));
        }
        Self::from_entries(DMatrix::from_fn(p, n, |i, j| rows[i][j]))
    }

    pub fn p(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n(&self) -> usize {
        self.entries.ncols()
    }
}

/// Which normalisation produced the rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowForm {
    /// `y_ij = x_ij / ‖x_i‖`.
    W,
    /// `r_ij = (x_ij − x̄_i) / ‖x_i − x̄_i‖`.
    R,
}

/// Rows of unit Euclidean norm (and zero sum for [`RowForm::R`]).
#[derive(Debug, Clone, PartialEq)]
pub struct RowNormalizedMatrix {
    pub form: RowForm,
    pub rows: DMatrix<f64>,
}

impl RowNormalizedMatrix {
    pub fn p(&self) -> usize {
        self.rows.nrows()
    }

    pub fn m(&self) -> usize {
        self.rows.ncols()
    }

    pub fn gram(&self) -> DMatrix<f64> {
        gram(&self.rows)
    }
}

/// Draws stream 0 of `seed`.
pub fn sample_data_matrix(p: usize, n: usize, dist: EntryDistribution, seed: u64) -> Result<DataMatrix> {
    sample_data_matrix_stream(p, n, dist, seed, 0)
}

/// Entries are filled row by row from the `(seed, stream)` generator.
pub fn sample_data_matrix_stream(
    p: usize,
    n: usize,
    dist: EntryDistribution,
    seed: u64,
    stream: u64,
) -> Result<DataMatrix> {
    if p < 1 || n < 2 {
        return Err(Error::InvalidDimensions(format!("need p ≥ 1 and n ≥ 2, got p={p}, n={n}")));
    }
    dist.validate()?;
    let mut rng = rng::stream(seed, stream);
    let mut entries = DMatrix::zeros(p, n);
    for i in 0..p {
        for j in 0..n {
            entries[(i, j)] = dist.sample(&mut rng);
        }
    }
    Ok(DataMatrix { entries, dist: Some(dist), seed })
}

/// `M Mᵀ`, made exactly symmetric.
pub fn gram(m: &DMatrix<f64>) -> DMatrix<f64> {
    let g = m * m.transpose();
    symmetrize(g)
}

pub(crate) fn symmetrize(mut g: DMatrix<f64>) -> DMatrix<f64> {
    let p = g.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let v = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// Row-normalised data `Y` and `W = YYᵀ`.
pub fn build_w(data: &DataMatrix) -> Result<(RowNormalizedMatrix, DMatrix<f64>)> {
    let y = normalize_rows(&data.entries)?;
    let mut w = gram(&y.rows);
    for i in 0..w.nrows() {
        w[(i, i)] = 1.0;
    }
    Ok((y, w))
}

pub(crate) fn normalize_rows(x: &DMatrix<f64>) -> Result<RowNormalizedMatrix> {
    let mut rows = x.clone();
    for i in 0..rows.nrows() {
        let norm = rows.row(i).norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroRowNorm(i));
        }
        rows.row_mut(i).unscale_mut(norm);
    }
    Ok(RowNormalizedMatrix { form: RowForm::W, rows })
}

/// Centred and row-normalised data `R` and `ℛ = RRᵀ`.
pub fn build_r(data: &DataMatrix) -> Result<(RowNormalizedMatrix, DMatrix<f64>)> {
    let n = data.n() as f64;
    let mut rows = data.entries.clone();
    for i in 0..rows.nrows() {
        let mean = rows.row(i).sum() / n;
        rows.row_mut(i).add_scalar_mut(-mean);
        let norm = rows.row(i).norm();
        // a constant row centres to rounding noise, not to exact zero
        let scale = data.entries.row(i).amax();
        if norm <= 1e-13 * scale.max(f64::MIN_POSITIVE) * n.sqrt() || norm == 0.0 {
            return Err(Error::ZeroVariance(i));
        }
        rows.row_mut(i).unscale_mut(norm);
    }
    let r = RowNormalizedMatrix { form: RowForm::R, rows };
    let mut g = gram(&r.rows);
    for i in 0..g.nrows() {
        g[(i, i)] = 1.0;
    }
    Ok((r, g))
}

/// `X = data/√n` and `S = XXᵀ`.
pub fn covariance_rows(data: &DataMatrix) -> DMatrix<f64> {
    data.entries.unscale((data.n() as f64).sqrt())
}

pub fn build_s(data: &DataMatrix) -> DMatrix<f64> {
    gram(&covariance_rows(data))
}

/// The orthogonal matrix whose first row is `(1/√n, …, 1/√n)` and whose row
/// `k ≥ 2` is `(1, …, 1, −(k−1), 0, …, 0)/√(k(k−1))`.
pub fn helmert_matrix(n: usize) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(Error::InvalidDimensions(format!("Helmert matrix needs n ≥ 2, got {n}")));
    }
    let mut a = DMatrix::zeros(n, n);
    let first = 1.0 / (n as f64).sqrt();
    for j in 0..n {
        a[(0, j)] = first;
    }
    for k in 2..=n {
        let kf = k as f64;
        let c = 1.0 / (kf * (kf - 1.0)).sqrt();
        for j in 0..(k - 1) {
            a[(k - 1, j)] = c;
        }
        a[(k - 1, k - 1)] = -(kf - 1.0) * c;
    }
    Ok(a)
}

/// Applies the Helmert matrix to each centred row and drops the leading
/// (zero) coordinate, giving a `p × (n−1)` data matrix.
///
/// Uses the running-sum form of the Helmert rows, `O(n)` per row.
pub fn helmert_reduce(data: &DataMatrix) -> Result<DataMatrix> {
    let (p, n) = (data.p(), data.n());
    if n < 2 {
        return Err(Error::InvalidDimensions("Helmert reduction needs n ≥ 2".into()));
    }
    let mut out = DMatrix::zeros(p, n - 1);
    for i in 0..p {
        let mean = data.entries.row(i).sum() / n as f64;
        let mut prefix = 0.0;
        for k in 2..=n {
            let kf = k as f64;
            prefix += data.entries[(i, k - 2)] - mean;
            let last = data.entries[(i, k - 1)] - mean;
            out[(i, k - 2)] = (prefix - (kf - 1.0) * last) / (kf * (kf - 1.0)).sqrt();
        }
    }
    Ok(DataMatrix { entries: out, dist: data.dist, seed: data.seed })
}
