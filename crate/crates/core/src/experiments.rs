//! Monte Carlo drivers: edge fluctuations, Green-function comparison,
//! delocalisation and eigenvalue simplicity.
//!
//! Replica `r` always draws its data from generator stream `(master_seed, r)`
//! and results are collected into replica-indexed slots, so the output does
//! not depend on how rayon schedules the work.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::{
    build_r, build_s, build_w, covariance_rows, sample_data_matrix_stream, DataMatrix, EntryDistribution,
};
use crate::error::{Error, Result};
use crate::mp_law::nonasymptotic_params;
use crate::spectra::{
    empirical_stieltjes, min_gap, shared_eigenvalue_gap, singular_system, sup_norm_components, symmetric_eigen,
    ComplexPoint, Spectrum,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    Largest,
    Smallest,
}

impl Edge {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "largest" | "max" => Ok(Edge::Largest),
            "smallest" | "min" => Ok(Edge::Smallest),
            other => Err(Error::Parse(format!("unknown edge '{other}'"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Edge::Largest => "largest",
            Edge::Smallest => "smallest",
        }
    }
}

/// Which matrix the replica diagonalises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixForm {
    /// `W = YYᵀ`, mean known to be zero.
    W,
    /// `ℛ = RRᵀ`, mean unknown.
    R,
    /// `S = XXᵀ`, `X = data/√n`.
    S,
}

impl MatrixForm {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "w" | "W" | "w_form" => Ok(MatrixForm::W),
            "r" | "R" | "r_form" => Ok(MatrixForm::R),
            "s" | "S" | "s_form" => Ok(MatrixForm::S),
            other => Err(Error::Parse(format!("unknown matrix form '{other}'"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MatrixForm::W => "w",
            MatrixForm::R => "r",
            MatrixForm::S => "s",
        }
    }
}

/// Sample size entering the edge scaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    N,
    NMinus1,
}

impl Scaling {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "n" => Ok(Scaling::N),
            "n_minus_1" | "n-1" => Ok(Scaling::NMinus1),
            other => Err(Error::Parse(format!("unknown scaling '{other}'"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Scaling::N => "n",
            Scaling::NMinus1 => "n_minus_1",
        }
    }

    pub fn effective_n(self, n: usize) -> usize {
        match self {
            Scaling::N => n,
            Scaling::NMinus1 => n - 1,
        }
    }
}

/// `λ ↦ (n·λ − center)/scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingTransform {
    pub edge: Edge,
    pub center: f64,
    pub scale: f64,
    pub n: f64,
}

impl ScalingTransform {
    pub fn apply(&self, lambda: f64) -> f64 {
        (self.n * lambda - self.center) / self.scale
    }
}

pub fn scaling_transform(p: usize, n: usize, edge: Edge) -> Result<ScalingTransform> {
    if p == 0 || p >= n {
        return Err(Error::InvalidDimensions(format!("edge scaling needs 1 ≤ p < n, got p={p}, n={n}")));
    }
    let (rp, rn) = ((p as f64).sqrt(), (n as f64).sqrt());
    let (center, scale) = match edge {
        Edge::Largest => ((rp + rn).powi(2), (rn + rp) * (1.0 / rp + 1.0 / rn).cbrt()),
        Edge::Smallest => ((rp - rn).powi(2), (rn - rp) * (1.0 / rp - 1.0 / rn).cbrt()),
    };
    Ok(ScalingTransform { edge, center, scale, n: n as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub p: usize,
    pub n: usize,
    pub dist: EntryDistribution,
    pub form: MatrixForm,
    pub edge: Edge,
    pub replicas: usize,
    pub master_seed: u64,
    pub scaling: Scaling,
}

impl ExperimentConfig {
    pub fn new(
        p: usize,
        n: usize,
        dist: EntryDistribution,
        form: MatrixForm,
        edge: Edge,
        replicas: usize,
        master_seed: u64,
    ) -> Self {
        ExperimentConfig { p, n, dist, form, edge, replicas, master_seed, scaling: Scaling::N }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.p >= self.n {
            return Err(Error::InvalidDimensions(format!("need 1 ≤ p < n, got p={}, n={}", self.p, self.n)));
        }
        if self.scaling == Scaling::NMinus1 && self.p >= self.n - 1 {
            return Err(Error::InvalidDimensions(format!("n−1 scaling needs p < n−1, got p={}, n={}", self.p, self.n)));
        }
        if self.replicas == 0 {
            return Err(Error::InvalidParameter("need at least one replica".into()));
        }
        self.dist.validate()
    }

    /// True when the run sits outside the hypotheses of the limit theorems
    /// (the centred form is only covered for Gaussian entries).
    pub fn exploratory(&self) -> bool {
        self.form == MatrixForm::R && self.dist != EntryDistribution::Gaussian
    }

    pub fn data(&self, replica: u64) -> Result<DataMatrix> {
        sample_data_matrix_stream(self.p, self.n, self.dist, self.master_seed, replica)
    }
}

/// Sorted sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCDF {
    samples: Vec<f64>,
}

impl EmpiricalCDF {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter("empirical CDF of an empty sample".into()));
        }
        if samples.iter().any(|x| x.is_nan()) {
            return Err(Error::InvalidParameter("sample contains NaN".into()));
        }
        samples.sort_by(f64::total_cmp);
        Ok(EmpiricalCDF { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Fraction of samples `≤ x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.samples.partition_point(|&s| s <= x) as f64 / self.len() as f64
    }

    /// Lower empirical quantile `x_(⌈uM⌉)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let m = self.len();
        let k = ((u * m as f64).ceil() as usize).clamp(1, m);
        self.samples[k - 1]
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.len() as f64
    }

    pub fn reflected(&self) -> Self {
        let mut s: Vec<f64> = self.samples.iter().map(|x| -x).collect();
        s.reverse();
        EmpiricalCDF { samples: s }
    }
}

/// Kolmogorov–Smirnov distance between the sample and `cdf`.
pub fn ks_distance<F: Fn(f64) -> f64>(ecdf: &EmpiricalCDF, cdf: F) -> f64 {
    let m = ecdf.len() as f64;
    ecdf.samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i as f64 + 1.0) / m - f).abs().max((f - i as f64 / m).abs())
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub replica: u64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub stat_min: f64,
    pub stat_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortedReplica {
    pub replica: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeExperiment {
    pub config: ExperimentConfig,
    pub records: Vec<ReplicaRecord>,
    pub aborted: Vec<AbortedReplica>,
    /// Scaled statistics of the configured edge, as defined (no sign flip).
    pub ecdf: EmpiricalCDF,
}

impl EdgeExperiment {
    /// The statistic that should follow TW₁: the scaled largest eigenvalue,
    /// or the negated scaled smallest one.
    pub fn oriented(&self) -> EmpiricalCDF {
        match self.config.edge {
            Edge::Largest => self.ecdf.clone(),
            Edge::Smallest => self.ecdf.reflected(),
        }
    }
}

/// Abort budget: at most one replica in a thousand.
pub fn abort_limit(replicas: usize) -> usize {
    replicas / 1000
}

fn extreme_eigenvalues(data: &DataMatrix, form: MatrixForm) -> Result<(f64, f64)> {
    let m = match form {
        MatrixForm::W => build_w(data)?.1,
        MatrixForm::R => build_r(data)?.1,
        MatrixForm::S => build_s(data),
    };
    let s = symmetric_eigen(&m, false)?;
    Ok((s.min(), s.max()))
}

pub fn replica_record(cfg: &ExperimentConfig, replica: u64) -> Result<ReplicaRecord> {
    let data = cfg.data(replica)?;
    let (lambda_min, lambda_max) = extreme_eigenvalues(&data, cfg.form)?;
    let n = cfg.scaling.effective_n(cfg.n);
    let hi = scaling_transform(cfg.p, n, Edge::Largest)?;
    let lo = scaling_transform(cfg.p, n, Edge::Smallest)?;
    Ok(ReplicaRecord {
        replica,
        lambda_min,
        lambda_max,
        stat_min: lo.apply(lambda_min),
        stat_max: hi.apply(lambda_max),
    })
}

pub fn run_edge_experiment(cfg: &ExperimentConfig) -> Result<EdgeExperiment> {
    cfg.validate()?;
    let outcomes: Vec<Result<ReplicaRecord>> =
        (0..cfg.replicas as u64).into_par_iter().map(|r| replica_record(cfg, r)).collect();
    let mut records = Vec::with_capacity(cfg.replicas);
    let mut aborted = vec![];
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(rec) => records.push(rec),
            Err(e @ (Error::ZeroRowNorm(_) | Error::ZeroVariance(_))) => {
                aborted.push(AbortedReplica { replica: r as u64, reason: e.to_string() })
            }
            Err(e) => return Err(Error::ReplicaFailed { replica: r as u64, reason: e.to_string() }),
        }
    }
    if aborted.len() > abort_limit(cfg.replicas) || records.is_empty() {
        return Err(Error::TooManyAborts { aborted: aborted.len(), total: cfg.replicas });
    }
    let stats = records
        .iter()
        .map(|r| match cfg.edge {
            Edge::Largest => r.stat_max,
            Edge::Smallest => r.stat_min,
        })
        .collect();
    Ok(EdgeExperiment { config: *cfg, records, aborted, ecdf: EmpiricalCDF::new(stats)? })
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Test function `F(x) = Σ c_k x^k`, degree at most 4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub const MAX_DEGREE: usize = 4;

    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.len() > Self::MAX_DEGREE + 1 {
            return Err(Error::InvalidParameter(format!(
                "test function needs 1 to {} coefficients, got {}",
                Self::MAX_DEGREE + 1,
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("test function coefficients must be finite".into()));
        }
        Ok(Polynomial { coeffs })
    }

    pub fn identity() -> Self {
        Polynomial { coeffs: vec![0.0, 1.0] }
    }

    pub fn constant(c: f64) -> Self {
        Polynomial { coeffs: vec![c] }
    }

    /// `c0,c1,...` in increasing degree.
    pub fn parse(s: &str) -> Result<Self> {
        let coeffs = s
            .split(',')
            .map(|c| c.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad coefficient '{c}'"))))
            .collect::<Result<Vec<_>>>()?;
        Polynomial::new(coeffs)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn label(&self) -> String {
        self.coeffs.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenArm {
    pub dist: EntryDistribution,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenComparisonConfig {
    pub p: usize,
    pub n: usize,
    pub e: f64,
    pub epsilon: f64,
    pub test_fn: Polynomial,
    pub arm_v: GreenArm,
    pub arm_w: GreenArm,
    pub replicas: usize,
}

impl GreenComparisonConfig {
    /// `η = p^{−2/3−ε}`.
    pub fn eta(&self) -> f64 {
        (self.p as f64).powf(-2.0 / 3.0 - self.epsilon)
    }

    /// Largest admissible `|E − λ₊|`, `p^{−2/3+ε}`.
    pub fn window(&self) -> f64 {
        (self.p as f64).powf(-2.0 / 3.0 + self.epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        let mp = nonasymptotic_params(self.p, self.n)?;
        if !(self.epsilon > 0.0 && self.epsilon < 2.0 / 3.0) {
            return Err(Error::InvalidParameter(format!("ε must lie in (0, 2/3), got {}", self.epsilon)));
        }
        if !((self.e - mp.lambda_plus).abs() <= self.window()) {
            return Err(Error::InvalidParameter(format!(
                "E = {} is farther than p^(-2/3+ε) = {} from λ₊ = {}",
                self.e,
                self.window(),
                mp.lambda_plus
            )));
        }
        if self.replicas < 2 {
            return Err(Error::InvalidParameter("need at least two replicas per arm".into()));
        }
        self.arm_v.dist.validate()?;
        self.arm_w.dist.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenComparison {
    pub mean_v: f64,
    pub mean_w: f64,
    pub pooled_se: f64,
    pub diff: f64,
    pub values_v: Vec<f64>,
    pub values_w: Vec<f64>,
}

fn green_arm(cfg: &GreenComparisonConfig, arm: GreenArm, point: ComplexPoint) -> Result<Vec<f64>> {
    let p = cfg.p as f64;
    let eta = point.eta();
    (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let data = sample_data_matrix_stream(cfg.p, cfg.n, arm.dist, arm.seed, r)?;
            let s = symmetric_eigen(&build_w(&data)?.1, false)?;
            Ok(cfg.test_fn.eval(p * eta * empirical_stieltjes(&s, point).im))
        })
        .collect()
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let m = x.len() as f64;
    let mean = x.iter().sum::<f64>() / m;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, var)
}

/// Monte Carlo estimate of `E F(pη Im s_p(E + iη))` under both arms.
pub fn run_green_comparison(cfg: &GreenComparisonConfig) -> Result<GreenComparison> {
    cfg.validate()?;
    let point = ComplexPoint::new(cfg.e, cfg.eta())?;
    let values_v = green_arm(cfg, cfg.arm_v, point)?;
    let values_w = green_arm(cfg, cfg.arm_w, point)?;
    let (mean_v, var_v) = mean_var(&values_v);
    let (mean_w, var_w) = mean_var(&values_w);
    let m = cfg.replicas as f64;
    Ok(GreenComparison {
        mean_v,
        mean_w,
        pooled_se: (var_v / m + var_w / m).sqrt(),
        diff: (mean_v - mean_w).abs(),
        values_v,
        values_w,
    })
}

fn require_continuous(cfg: &ExperimentConfig) -> Result<()> {
    if !cfg.dist.is_continuous() {
        return Err(Error::Precondition(format!(
            "{} entries are discrete; the statement needs a continuous law",
            cfg.dist.label()
        )));
    }
    Ok(())
}

fn row_matrix(data: &DataMatrix, form: MatrixForm) -> Result<DMatrix<f64>> {
    Ok(match form {
        MatrixForm::W => build_w(data)?.0.rows,
        MatrixForm::R => build_r(data)?.0.rows,
        MatrixForm::S => covariance_rows(data),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelocalizationReport {
    pub per_replica: Vec<f64>,
    pub max: f64,
    /// `3·√(2 log p / p)`.
    pub bound: f64,
}

pub fn delocalization_bound(p: usize) -> f64 {
    let p = p as f64;
    3.0 * (2.0 * p.ln() / p).sqrt()
}

/// Largest component over all left and right singular vectors, per replica.
pub fn run_delocalization(cfg: &ExperimentConfig) -> Result<DelocalizationReport> {
    if cfg.p == 0 || cfg.p >= cfg.n || cfg.replicas == 0 {
        return Err(Error::InvalidDimensions(format!(
            "need 1 ≤ p < n and at least one replica, got p={}, n={}, M={}",
            cfg.p, cfg.n, cfg.replicas
        )));
    }
    require_continuous(cfg)?;
    let per_replica = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let rows = row_matrix(&cfg.data(r)?, cfg.form)?;
            Ok(sup_norm_components(&singular_system(&rows)?))
        })
        .collect::<Result<Vec<f64>>>()?;
    let max = per_replica.iter().copied().fold(0.0, f64::max);
    Ok(DelocalizationReport { per_replica, max, bound: delocalization_bound(cfg.p) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplicityGaps {
    pub min_gap: f64,
    /// Against `W^{(p)}`, the principal minor without the last variable.
    pub cross_gap_minor: f64,
    /// Against `Ŵ_(n)`, rebuilt from the first `n−1` observations.
    pub cross_gap_column: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplicityReport {
    pub per_replica: Vec<SimplicityGaps>,
    pub min: SimplicityGaps,
}

impl SimplicityReport {
    pub fn all_positive(&self) -> bool {
        self.min.min_gap > 0.0 && self.min.cross_gap_minor > 0.0 && self.min.cross_gap_column > 0.0
    }
}

pub fn simplicity_gaps(data: &DataMatrix) -> Result<SimplicityGaps> {
    let (p, n) = (data.p(), data.n());
    if n < 3 {
        return Err(Error::InvalidDimensions(format!("need n ≥ 3 to drop an observation, got {n}")));
    }
    let (_, w) = build_w(data)?;
    let full = symmetric_eigen(&w, false)?;
    let cross_gap_minor = if p >= 2 {
        let minor = w.view((0, 0), (p - 1, p - 1)).into_owned();
        shared_eigenvalue_gap(&full, &symmetric_eigen(&minor, false)?)
    } else {
        f64::INFINITY
    };
    let trimmed = DataMatrix::from_entries(data.entries.columns(0, n - 1).into_owned())?;
    let hat = symmetric_eigen(&build_w(&trimmed)?.1, false)?;
    Ok(SimplicityGaps {
        min_gap: min_gap(&full),
        cross_gap_minor,
        cross_gap_column: shared_eigenvalue_gap(&full, &hat),
    })
}

pub fn run_simplicity_check(cfg: &ExperimentConfig) -> Result<SimplicityReport> {
    if cfg.p == 0 || cfg.p >= cfg.n || cfg.replicas == 0 {
        return Err(Error::InvalidDimensions(format!(
            "need 1 ≤ p < n and at least one replica, got p={}, n={}, M={}",
            cfg.p, cfg.n, cfg.replicas
        )));
    }
    require_continuous(cfg)?;
    let per_replica =
        (0..cfg.replicas as u64).into_par_iter().map(|r| simplicity_gaps(&cfg.data(r)?)).collect::<Result<Vec<_>>>()?;
    let fold = |f: fn(&SimplicityGaps) -> f64| per_replica.iter().map(f).fold(f64::INFINITY, f64::min);
    let min = SimplicityGaps {
        min_gap: fold(|g| g.min_gap),
        cross_gap_minor: fold(|g| g.cross_gap_minor),
        cross_gap_column: fold(|g| g.cross_gap_column),
    };
    Ok(SimplicityReport { per_replica, min })
}

/// Spectrum of `ℛ` obtained through the Helmert reduction: the `W` matrix of
/// the `p × (n−1)` reduced data.
pub fn reduced_r_spectrum(data: &DataMatrix) -> Result<Spectrum> {
    let reduced = crate::ensembles::helmert_reduce(data)?;
    symmetric_eigen(&build_w(&reduced)?.1, false)
}
