use std::sync::OnceLock;

use nalgebra::DMatrix;
use proptest::prelude::*;
use twcorr::ensembles::{
    build_r, build_s, build_w, helmert_matrix, helmert_reduce, sample_data_matrix, DataMatrix, EntryDistribution,
};
use twcorr::experiments::{
    run_edge_experiment, scaling_transform, with_workers, Edge, EmpiricalCDF, ExperimentConfig, MatrixForm,
};
use twcorr::mp_law::{mp_cdf, mp_params, mp_stieltjes};
use twcorr::spectra::{
    empirical_stieltjes, green_matrix, interlacing_check, singular_triplets, singular_values, symmetric_eigen,
    weyl_check, ComplexPoint, InterlacingKind, Spectrum,
};
use twcorr::tracy_widom::{tw1_cdf_table, PainleveConfig, TW1Table};

const CONTINUOUS: [EntryDistribution; 3] =
    [EntryDistribution::Gaussian, EntryDistribution::Laplace, EntryDistribution::UniformSymmetric];

fn table() -> &'static TW1Table {
    static T: OnceLock<TW1Table> = OnceLock::new();
    T.get_or_init(|| tw1_cdf_table(&PainleveConfig { step: 4e-3, ..PainleveConfig::default() }).unwrap())
}

/// (p, n, distribution, seed) with `2 ≤ p < n ≤ p + 12`.
fn shape() -> impl Strategy<Value = (usize, usize, EntryDistribution, u64)> {
    (2usize..9)
        .prop_flat_map(|p| (Just(p), p + 1..p + 13, 0usize..3, any::<u64>()))
        .prop_map(|(p, n, d, s)| (p, n, CONTINUOUS[d], s))
}

fn data((p, n, dist, seed): (usize, usize, EntryDistribution, u64)) -> DataMatrix {
    sample_data_matrix(p, n, dist, seed).unwrap()
}

fn spectrum_distance(a: &Spectrum, b: &Spectrum) -> f64 {
    a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn w_has_unit_diagonal_and_is_psd(s in shape()) {
        let (_, w) = build_w(&data(s)).unwrap();
        for i in 0..w.nrows() {
            prop_assert!((w[(i, i)] - 1.0).abs() <= 1e-12);
        }
        prop_assert!(symmetric_eigen(&w, false).unwrap().min() >= -1e-10);
    }

    #[test]
    fn w_ignores_row_scaling(s in shape(), row in 0usize..9, c in prop_oneof![-100.0..-0.01, 0.01..100.0f64]) {
        let d = data(s);
        let row = row % d.p();
        let mut scaled = d.entries.clone();
        scaled.row_mut(row).scale_mut(c);
        let a = build_w(&d).unwrap().1;
        let b = build_w(&DataMatrix::from_entries(scaled).unwrap()).unwrap().1;
        // a negative factor conjugates by a diagonal sign matrix
        let sign = |i: usize| if i == row { c.signum() } else { 1.0 };
        let expected = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| sign(i) * sign(j) * a[(i, j)]);
        prop_assert!((&expected - &b).amax() <= 1e-12);
        let sa = symmetric_eigen(&a, false).unwrap();
        prop_assert!(spectrum_distance(&sa, &symmetric_eigen(&b, false).unwrap()) <= 1e-12);
    }

    #[test]
    fn rademacher_w_equals_s(p in 2usize..9, extra in 1usize..12, bits in prop::collection::vec(any::<bool>(), 9 * 21)) {
        let n = p + extra;
        let m = DMatrix::from_fn(p, n, |i, j| if bits[i * n + j] { 1.0 } else { -1.0 });
        let d = DataMatrix::from_entries(m).unwrap();
        prop_assert!((build_w(&d).unwrap().1 - build_s(&d)).amax() <= 1e-14);
    }

    #[test]
    fn helmert_consistency(s in shape()) {
        let d = data(s);
        let n = d.n();
        let a = helmert_matrix(n).unwrap();
        let reduced = helmert_reduce(&d).unwrap();
        for i in 0..d.p() {
            let row = d.entries.row(i);
            let centred = row.add_scalar(-row.sum() / n as f64).transpose();
            let image = &a * &centred;
            prop_assert!(image[0].abs() <= 1e-12);
            prop_assert!((image.norm() - centred.norm()).abs() <= 1e-12 * centred.norm().max(1.0));
            for k in 1..n {
                prop_assert!((image[k] - reduced.entries[(i, k - 1)]).abs() <= 1e-12);
            }
        }
        let r = symmetric_eigen(&build_r(&d).unwrap().1, false).unwrap();
        let w = symmetric_eigen(&build_w(&reduced).unwrap().1, false).unwrap();
        prop_assert!(spectrum_distance(&r, &w) <= 1e-10);
    }

    #[test]
    fn gram_eigenvalues_are_squared_singular_values(s in shape()) {
        let (y, w) = build_w(&data(s)).unwrap();
        let eig = symmetric_eigen(&w, false).unwrap();
        let sv = singular_triplets(&y).unwrap();
        for (l, sigma) in eig.values.iter().zip(&sv.sigmas) {
            prop_assert!((l - sigma * sigma).abs() <= 1e-9);
        }
    }

    #[test]
    fn interlacing_and_weyl(s in shape(), noise in -1.0..1.0f64) {
        let d = data(s);
        let (p, n) = (d.p(), d.n());
        let (y, w) = build_w(&d).unwrap();
        let ws = symmetric_eigen(&w, false).unwrap();
        let minor = symmetric_eigen(&w.view((1, 1), (p - 1, p - 1)).into_owned(), false).unwrap();
        prop_assert!(interlacing_check(&ws, &minor, InterlacingKind::HermitianMinor).unwrap().pass);
        let sv = |m: DMatrix<f64>| Spectrum::from_values(singular_values(&m).unwrap());
        let full = sv(y.rows.clone());
        prop_assert!(interlacing_check(&full, &sv(y.rows.rows(1, p - 1).into_owned()), InterlacingKind::RowDeleted).unwrap().pass);
        prop_assert!(interlacing_check(&full, &sv(y.rows.columns(1, n - 1).into_owned()), InterlacingKind::ColumnDeleted).unwrap().pass);
        let perturbed = DMatrix::from_fn(p, n, |i, j| y.rows[(i, j)] + noise * ((i * 31 + j * 17) % 7) as f64 / 7.0);
        prop_assert!(weyl_check(&y.rows, &perturbed).unwrap().pass);
    }

    #[test]
    fn green_trace_is_stieltjes(s in shape(), e in 0.0..4.0f64, log_eta in -3.0..0.0f64) {
        let (_, w) = build_w(&data(s)).unwrap();
        let point = ComplexPoint::new(e, 10f64.powf(log_eta)).unwrap();
        let g = green_matrix(&w, point).unwrap();
        let trace = g.trace() / w.nrows() as f64;
        let st = empirical_stieltjes(&symmetric_eigen(&w, false).unwrap(), point);
        prop_assert!((trace - st).norm() <= 1e-10 * st.norm().max(1.0));
    }

    #[test]
    fn mp_stieltjes_is_herglotz(y in 0.01..0.99f64, e in -2.0..8.0f64, log_eta in -6.0..3.0f64) {
        let params = mp_params(y).unwrap();
        let s = mp_stieltjes(ComplexPoint::new(e, 10f64.powf(log_eta)).unwrap(), &params);
        prop_assert!(s.im > 0.0);
    }

    #[test]
    fn mp_cdf_is_monotone(y in 0.01..0.99f64, mut xs in prop::collection::vec(-1.0..5.0f64, 2..40)) {
        let params = mp_params(y).unwrap();
        xs.sort_by(f64::total_cmp);
        let values: Vec<f64> = xs.iter().map(|&x| mp_cdf(x, &params)).collect();
        prop_assert!(values.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn tw_cdf_and_pvalue_are_monotone(a in -12.0..10.0f64, b in -12.0..10.0f64) {
        let t = table();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(t.cdf(lo) <= t.cdf(hi));
        prop_assert!(t.pvalue(lo).unwrap() >= t.pvalue(hi).unwrap());
        let p = t.pvalue(a).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn tw_quantile_is_monotone(a in 1e-6..0.999999f64, b in 1e-6..0.999999f64) {
        let t = table();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(t.quantile(lo).unwrap() <= t.quantile(hi).unwrap());
    }

    #[test]
    fn edge_scales_are_positive(p in 1usize..500, extra in 1usize..500) {
        for edge in [Edge::Largest, Edge::Smallest] {
            let s = scaling_transform(p, p + extra, edge).unwrap();
            prop_assert!(s.scale > 0.0 && s.scale.is_finite());
        }
    }

    #[test]
    fn ecdf_is_sorted_and_bounded(xs in prop::collection::vec(-1e3..1e3f64, 1..50), probe in -2e3..2e3f64) {
        let e = EmpiricalCDF::new(xs).unwrap();
        prop_assert!(e.samples().windows(2).all(|w| w[0] <= w[1]));
        let v = e.eval(probe);
        prop_assert!((0.0..=1.0).contains(&v));
    }
}

#[test]
fn experiments_are_identical_across_worker_counts() {
    for (dist, form, edge) in [
        (EntryDistribution::Rademacher, MatrixForm::W, Edge::Largest),
        (EntryDistribution::Laplace, MatrixForm::R, Edge::Smallest),
        (EntryDistribution::Gaussian, MatrixForm::S, Edge::Largest),
    ] {
        let cfg = ExperimentConfig::new(12, 30, dist, form, edge, 40, 77);
        let runs: Vec<_> =
            [1, 4, 8].iter().map(|&k| with_workers(k, || run_edge_experiment(&cfg)).unwrap().unwrap()).collect();
        for r in &runs[1..] {
            assert_eq!(r.records, runs[0].records);
            assert_eq!(r.ecdf.samples(), runs[0].ecdf.samples());
        }
    }
}
