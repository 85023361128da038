//! Deterministic identity suites over random instances: interlacing, Weyl,
//! the singular-vector component formula, Schur complements, the Helmert
//! reduction, the Rademacher W/S coincidence and the MP self-consistency
//! equation.

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::ensembles::{
    build_r, build_s, build_w, helmert_matrix, helmert_reduce, sample_data_matrix_stream, EntryDistribution,
};
use crate::error::{Error, Result};
use crate::mp_law::{mp_params, mp_stieltjes, self_consistency_residual};
use crate::rng;
use crate::spectra::{
    interlacing_check, minor_component, minor_component_left, schur_identity_residuals, singular_values,
    symmetric_eigen, weyl_check, ComplexPoint, InterlacingKind, Spectrum, IDENTITY_SLACK,
};

pub const COMPONENT_TOL: f64 = 1e-8;
pub const SCHUR_R1_TOL: f64 = 1e-8;
pub const SCHUR_R2_TOL: f64 = 1e-7;
pub const HELMERT_ORTHO_TOL: f64 = 1e-12;
pub const HELMERT_SPECTRUM_TOL: f64 = 1e-10;
pub const RADEMACHER_TOL: f64 = 1e-14;
pub const MP_RESIDUAL_TOL: f64 = 1e-12;

/// Outcome of one identity over all instances. `worst` is the largest
/// violation measure seen (a margin deficit or an absolute residual).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteCheck {
    pub name: &'static str,
    pub pass: bool,
    pub worst: f64,
    pub tolerance: f64,
    pub instances: usize,
    pub skipped: usize,
}

struct Tally {
    name: &'static str,
    tolerance: f64,
    worst: f64,
    instances: usize,
    skipped: usize,
}

impl Tally {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Tally { name, tolerance, worst: 0.0, instances: 0, skipped: 0 }
    }

    fn record(&mut self, v: f64) {
        // NaN must fail, so compare through `max` only when finite
        self.worst = if v.is_nan() { f64::INFINITY } else { self.worst.max(v) };
        self.instances += 1;
    }

    fn finish(self) -> SuiteCheck {
        SuiteCheck {
            name: self.name,
            pass: self.worst <= self.tolerance && self.instances > 0,
            worst: self.worst,
            tolerance: self.tolerance,
            instances: self.instances,
            skipped: self.skipped,
        }
    }
}

const CONTINUOUS: [EntryDistribution; 3] =
    [EntryDistribution::Gaussian, EntryDistribution::Laplace, EntryDistribution::UniformSymmetric];

fn entries_spectrum(m: &DMatrix<f64>) -> Spectrum {
    Spectrum::from_values(singular_values(m).expect("finite matrix"))
}

/// Runs every identity on `instances` random continuous instances with
/// `3 ≤ p ≤ 8` and `p < n ≤ p + 8`, all drawn from `seed`.
pub fn identity_suite(instances: usize, seed: u64) -> Result<Vec<SuiteCheck>> {
    let mut herm = Tally::new("interlacing_hermitian_minor", IDENTITY_SLACK);
    let mut rowdel = Tally::new("interlacing_row_deleted", IDENTITY_SLACK);
    let mut coldel = Tally::new("interlacing_column_deleted", IDENTITY_SLACK);
    let mut weyl = Tally::new("weyl", IDENTITY_SLACK);
    let mut comp_right = Tally::new("minor_component_right", COMPONENT_TOL);
    let mut comp_left = Tally::new("minor_component_left", COMPONENT_TOL);
    let mut schur1 = Tally::new("schur_r1", SCHUR_R1_TOL);
    let mut schur2 = Tally::new("schur_r2", SCHUR_R2_TOL);
    let mut h_ortho = Tally::new("helmert_orthogonality", HELMERT_ORTHO_TOL);
    let mut h_spec = Tally::new("helmert_spectrum", HELMERT_SPECTRUM_TOL);
    let mut rad = Tally::new("rademacher_w_equals_s", RADEMACHER_TOL);
    let mut mp = Tally::new("mp_self_consistency", MP_RESIDUAL_TOL);

    // dimensions come from their own stream so data streams stay 0..instances
    let mut dims = rng::stream(seed, u64::MAX);
    for k in 0..instances as u64 {
        let p = dims.random_range(3..=8usize);
        let n = dims.random_range(p + 1..=p + 8);
        let dist = CONTINUOUS[(k % 3) as usize];
        let data = sample_data_matrix_stream(p, n, dist, seed, k)?;
        let (y, w) = build_w(&data)?;

        let minor = w.view((0, 0), (p - 1, p - 1)).into_owned();
        let ws = symmetric_eigen(&w, false)?;
        let lack = |o: crate::spectra::CheckOutcome| (-o.worst_margin).max(0.0);
        herm.record(lack(interlacing_check(&ws, &symmetric_eigen(&minor, false)?, InterlacingKind::HermitianMinor)?));

        let full = entries_spectrum(&y.rows);
        let no_row = entries_spectrum(&y.rows.rows(0, p - 1).into_owned());
        rowdel.record(lack(interlacing_check(&full, &no_row, InterlacingKind::RowDeleted)?));
        let no_col = entries_spectrum(&y.rows.columns(0, n - 1).into_owned());
        coldel.record(lack(interlacing_check(&full, &no_col, InterlacingKind::ColumnDeleted)?));

        let mut noise = rng::stream(seed ^ 0x5eed, k);
        let perturbed = y.rows.map(|v| v + 0.1 * noise.sample::<f64, _>(rand_distr::StandardNormal));
        let wo = weyl_check(&y.rows, &perturbed)?;
        weyl.record((wo.max_gap - wo.op_norm).max(0.0));

        for i in 0..p {
            match minor_component(&y.rows, i) {
                Ok((pred, act)) => comp_right.record((pred - act).abs()),
                Err(Error::NearDegenerate { .. }) => comp_right.skipped += 1,
                Err(e) => return Err(e),
            }
            match minor_component_left(&y.rows, i) {
                Ok((pred, act)) => comp_left.record((pred - act).abs()),
                Err(Error::NearDegenerate { .. }) => comp_left.skipped += 1,
                Err(e) => return Err(e),
            }
        }

        let lp = (1.0 + (p as f64 / n as f64).sqrt()).powi(2);
        for point in [ComplexPoint::new(lp, 0.1)?, ComplexPoint::new(1.0, 0.5)?] {
            let (r1, r2) = schur_identity_residuals(&y, point)?;
            schur1.record(r1);
            schur2.record(r2);
        }

        let a = helmert_matrix(n)?;
        h_ortho.record((&a * a.transpose() - DMatrix::<f64>::identity(n, n)).amax());
        let r_spec = symmetric_eigen(&build_r(&data)?.1, false)?;
        let reduced = symmetric_eigen(&build_w(&helmert_reduce(&data)?)?.1, false)?;
        let gap = r_spec.values.iter().zip(&reduced.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        h_spec.record(gap);

        let bern = sample_data_matrix_stream(p, n, EntryDistribution::Rademacher, seed, k)?;
        rad.record((build_w(&bern)?.1 - build_s(&bern)).amax());
    }

    for y in [0.25, 0.5, 0.75] {
        let params = mp_params(y)?;
        for i in 0..10 {
            for j in 0..10 {
                let e = params.a / 2.0 + (2.0 * params.b - params.a / 2.0) * i as f64 / 9.0;
                let eta = 10f64.powf(-3.0 + 3.0 * j as f64 / 9.0);
                let point = ComplexPoint::new(e, eta)?;
                mp.record(self_consistency_residual(mp_stieltjes(point, &params), point, &params));
            }
        }
    }

    Ok([herm, rowdel, coldel, weyl, comp_right, comp_left, schur1, schur2, h_ortho, h_spec, rad, mp]
        .into_iter()
        .map(Tally::finish)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_and_is_reproducible() {
        let a = identity_suite(12, 3).unwrap();
        assert_eq!(a.len(), 12);
        for c in &a {
            assert!(c.pass, "{c:?}");
            assert!(c.instances > 0);
        }
        assert_eq!(a, identity_suite(12, 3).unwrap());
    }

    #[test]
    fn nan_fails_a_tally() {
        let mut t = Tally::new("x", 1.0);
        t.record(0.5);
        t.record(f64::NAN);
        assert!(!t.finish().pass);
        assert!(!Tally::new("empty", 1.0).finish().pass);
    }
}
