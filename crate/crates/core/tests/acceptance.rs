//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use twcorr::cli::{cmd_test_independence, execute, parse_config, CommandName, Flags, RunConfig};
use twcorr::ensembles::{build_w, sample_data_matrix, EntryDistribution};
use twcorr::experiments::{
    ks_distance, run_delocalization, run_edge_experiment, run_green_comparison, Edge, EmpiricalCDF, ExperimentConfig,
    GreenArm, GreenComparisonConfig, MatrixForm, Polynomial, Scaling,
};
use twcorr::mp_law::{
    local_law_report, mp_cdf, mp_density, mp_params, mp_quantile, mp_stieltjes, nonasymptotic_params,
    self_consistency_residual,
};
use twcorr::spectra::{symmetric_eigen, ComplexPoint, Spectrum};
use twcorr::tracy_widom::{tw1_cdf_table, PainleveConfig, TW1Table};
use twcorr::verify::identity_suite;

const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Double-exponential quadrature, independent of the library's
/// Gauss–Kronrod integrator and of its sin² edge substitution.
fn tanh_sinh<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    let h = 1.0 / 256.0;
    let r = 0.5 * (hi - lo);
    let mut sum = 0.0;
    for k in -(8 * 256)..=(8 * 256) {
        let t = k as f64 * h;
        let u = 0.5 * PI * t.sinh();
        let w = 0.5 * PI * t.cosh() / u.cosh().powi(2);
        if w < 1e-300 {
            continue;
        }
        let d = 2.0 * r / ((2.0 * u.abs()).exp() + 1.0);
        let pt = if u >= 0.0 { hi - d } else { lo + d };
        if pt <= lo || pt >= hi {
            continue;
        }
        sum += w * f(pt);
    }
    sum * r * h
}

fn ks_uniform(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / m - x).abs().max((x - i as f64 / m).abs()))
        .fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let checks = identity_suite(100, SEED).expect("identity suite runs");
    let secs = start.elapsed().as_secs_f64();
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{} worst {:.2e} > {:.0e}", c.name, c.worst, c.tolerance))
        .collect();
    let worst: Vec<String> = checks.iter().map(|c| format!("{}={:.1e}", c.name, c.worst)).collect();
    outcome(
        failed.is_empty() && secs < 30.0,
        format!(
            "identity suite, 100 instances, {secs:.1}s; {}",
            if failed.is_empty() { worst.join(" ") } else { failed.join("; ") }
        ),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut worst_mass: f64 = 0.0;
    let mut worst_cdf: f64 = 0.0;
    for y in [0.1, 0.25, 0.5, 0.75, 0.9] {
        let m = mp_params(y).unwrap();
        worst_mass = worst_mass.max((tanh_sinh(|x| mp_density(x, &m), m.a, m.b) - 1.0).abs());
        for k in 1..20 {
            let x = m.a + (m.b - m.a) * k as f64 / 20.0;
            worst_cdf = worst_cdf.max((mp_cdf(x, &m) - tanh_sinh(|t| mp_density(t, &m), m.a, x)).abs());
        }
    }
    let m = mp_params(0.5).unwrap();
    let mut worst_res: f64 = 0.0;
    for i in 0..10 {
        for j in 0..10 {
            let e = m.a / 2.0 + (2.0 * m.b - m.a / 2.0) * i as f64 / 9.0;
            let eta = 10f64.powf(-3.0 + 3.0 * j as f64 / 9.0);
            let z = ComplexPoint::new(e, eta).unwrap();
            worst_res = worst_res.max(self_consistency_residual(mp_stieltjes(z, &m), z, &m));
        }
    }
    let near_one = mp_params(1.0 - 1e-12).unwrap();
    let v = mp_cdf(2.0, &near_one);
    let oracle = tanh_sinh(|t| mp_density(t, &near_one), near_one.a, 2.0);
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_mass <= 1e-8
        && worst_res <= 1e-12
        && worst_cdf <= 1e-6
        && (v - 0.81831).abs() <= 1e-4
        && (v - oracle).abs() <= 1e-6
        && secs < 10.0;
    outcome(
        pass,
        format!(
            "MP mass err {worst_mass:.1e}, residual {worst_res:.1e}, cdf vs oracle {worst_cdf:.1e}, F(2; y≈1) = {v:.6} (oracle {oracle:.6}), {secs:.1}s"
        ),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let cfg = PainleveConfig::default();
    let coarse = tw1_cdf_table(&cfg).unwrap();
    let fine = tw1_cdf_table(&cfg.halved()).unwrap();
    let quarter = tw1_cdf_table(&cfg.halved().halved()).unwrap();
    let q0 = |t: &TW1Table| {
        let i = t.t_grid().iter().position(|&x| x.abs() < 1e-9).expect("0 on grid");
        t.q()[i]
    };
    let (qc, qf) = (q0(&coarse), q0(&fine));
    let halving =
        (0..=1400).map(|k| -8.0 + k as f64 * 0.01).map(|t| (coarse.cdf(t) - fine.cdf(t)).abs()).fold(0.0, f64::max);
    let monotone = coarse.f1().windows(2).all(|w| w[0] <= w[1]);
    let right_tail = 1.0 - coarse.cdf(8.0);
    let roundtrip = (1..1000)
        .map(|k| k as f64 / 1000.0)
        .map(|u| (coarse.cdf(coarse.quantile(u).unwrap()) - u).abs())
        .fold(0.0, f64::max);
    let q95 = coarse.quantile(0.95).unwrap();
    let q95_oracle = quarter.quantile(0.95).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = (qc - 0.36706).abs() <= 5e-4
        && (qf - 0.36706).abs() <= 5e-4
        && halving <= 1e-6
        && monotone
        && right_tail <= 1e-4
        && roundtrip <= 1e-6
        && (q95 - q95_oracle).abs() <= 2e-3
        && (q95_oracle - 0.979).abs() <= 2e-3
        && secs < 60.0;
    outcome(
        pass,
        format!(
            "q(0) = {qc:.7}/{qf:.7}, F1 halving gap {halving:.1e}, monotone {monotone}, 1-F1(8) = {right_tail:.1e}, roundtrip {roundtrip:.1e}, q95 = {q95:.5} (quarter step {q95_oracle:.5}), {secs:.1}s"
        ),
    )
}

fn table() -> TW1Table {
    tw1_cdf_table(&PainleveConfig::default()).unwrap()
}

/// KS distances of the reflected smallest statistic and the largest one.
fn edge_ks(cfg: &ExperimentConfig, t: &TW1Table) -> (f64, f64, f64) {
    let exp = run_edge_experiment(cfg).unwrap();
    let largest = EmpiricalCDF::new(exp.records.iter().map(|r| r.stat_max).collect()).unwrap();
    let smallest = EmpiricalCDF::new(exp.records.iter().map(|r| -r.stat_min).collect()).unwrap();
    (ks_distance(&largest, |x| t.cdf(x)), ks_distance(&smallest, |x| t.cdf(x)), largest.mean())
}

fn edge_criterion(dists: &[EntryDistribution], t: &TW1Table) -> (bool, Vec<String>) {
    let mut pass = true;
    let mut parts = vec![];
    for &dist in dists {
        let cfg = ExperimentConfig::new(100, 200, dist, MatrixForm::W, Edge::Largest, 1000, SEED);
        let (kl, ks, mean) = edge_ks(&cfg, t);
        pass &= kl <= 0.08 && ks <= 0.10;
        parts.push(format!("{} KS largest {kl:.3} (≤0.08), smallest {ks:.3} (≤0.10), mean {mean:.3}", dist.label()));
    }
    (pass, parts)
}

fn criterion_4(t: &TW1Table) -> Outcome {
    let (pass, parts) = edge_criterion(&[EntryDistribution::Rademacher], t);
    outcome(pass, format!("p=100 n=200 M=1000 W: {}", parts.join("; ")))
}

fn criterion_5(t: &TW1Table) -> Outcome {
    let (mut pass, mut parts) = edge_criterion(&[EntryDistribution::Gaussian, EntryDistribution::Laplace], t);
    let mut cfg =
        ExperimentConfig::new(100, 200, EntryDistribution::Gaussian, MatrixForm::R, Edge::Largest, 1000, SEED);
    cfg.scaling = Scaling::NMinus1;
    let (kl, _, mean) = edge_ks(&cfg, t);
    pass &= kl <= 0.08;
    parts.push(format!("gaussian R n−1 KS largest {kl:.3} (≤0.08), mean {mean:.3}"));
    outcome(pass, format!("p=100 n=200 M=1000: {}", parts.join("; ")))
}

fn criterion_6() -> Outcome {
    let (p, n) = (500, 1000);
    let data = sample_data_matrix(p, n, EntryDistribution::Gaussian, SEED).unwrap();
    let s = symmetric_eigen(&build_w(&data).unwrap().1, false).unwrap();
    let law = mp_params(p as f64 / n as f64).unwrap();
    let sampled = local_law_report(&s, &law, 0.1, 0.05, 100).unwrap();
    let exact =
        Spectrum::from_values((1..=p).map(|k| mp_quantile((k as f64 - 0.5) / p as f64, &law).unwrap()).collect());
    let synthetic = local_law_report(&exact, &law, 0.05, 0.05, 100).unwrap();
    outcome(
        sampled.pass_fraction >= 0.95 && synthetic.pass_fraction == 1.0,
        format!(
            "p=500 n=1000 gaussian W δ=0.1: pass fraction {:.3} (≥0.95); exact MP quantiles δ=0.05: {:.3} (=1)",
            sampled.pass_fraction, synthetic.pass_fraction
        ),
    )
}

fn criterion_7() -> Outcome {
    let small = run_delocalization(&ExperimentConfig::new(
        200,
        400,
        EntryDistribution::Gaussian,
        MatrixForm::W,
        Edge::Largest,
        20,
        SEED,
    ))
    .unwrap();
    let large = run_delocalization(&ExperimentConfig::new(
        400,
        800,
        EntryDistribution::Gaussian,
        MatrixForm::W,
        Edge::Largest,
        20,
        SEED,
    ))
    .unwrap();
    outcome(
        small.max <= small.bound && large.max < small.max,
        format!(
            "p=200 max component {:.4} (bound {:.4}); p=400 max {:.4} (must drop)",
            small.max, small.bound, large.max
        ),
    )
}

fn green_criterion_config(v: GreenArm, w: GreenArm) -> GreenComparisonConfig {
    let mp = nonasymptotic_params(200, 400).unwrap();
    GreenComparisonConfig {
        p: 200,
        n: 400,
        e: mp.lambda_plus,
        epsilon: 0.05,
        test_fn: Polynomial::identity(),
        arm_v: v,
        arm_w: w,
        replicas: 400,
    }
}

fn criterion_8() -> Outcome {
    let cfg = green_criterion_config(
        GreenArm { dist: EntryDistribution::Rademacher, seed: SEED },
        GreenArm { dist: EntryDistribution::Gaussian, seed: SEED + 1 },
    );
    let r = run_green_comparison(&cfg).unwrap();
    let same = green_criterion_config(
        GreenArm { dist: EntryDistribution::Gaussian, seed: SEED },
        GreenArm { dist: EntryDistribution::Gaussian, seed: SEED },
    );
    let s = run_green_comparison(&same).unwrap();
    outcome(
        r.diff <= 3.0 * r.pooled_se + 0.1 && s.diff == 0.0,
        format!(
            "rademacher vs gaussian |diff| {:.4} (≤ 3·{:.4} + 0.1); identical arms diff {:e}",
            r.diff, r.pooled_se, s.diff
        ),
    )
}

fn run_config(cmd: CommandName, pairs: &[(&str, String)]) -> RunConfig {
    let text: String = pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    parse_config(cmd, &Flags::default(), Some(&text)).unwrap()
}

fn criterion_9(dir: &Path) -> Outcome {
    let mut pvalues = Vec::with_capacity(500);
    for k in 0..500u64 {
        let data = sample_data_matrix(50, 150, EntryDistribution::Gaussian, SEED.wrapping_add(k)).unwrap();
        let path = dir.join(format!("null-{k}.csv"));
        let mut s = String::new();
        for i in 0..50 {
            let row: Vec<String> = (0..150).map(|j| format!("{:.17e}", data.entries[(i, j)])).collect();
            s += &row.join(",");
            s.push('\n');
        }
        std::fs::write(&path, s).unwrap();
        let cfg = run_config(CommandName::TestIndependence, &[("data", path.display().to_string())]);
        pvalues.push(cmd_test_independence(&cfg).unwrap().0.p_value);
    }
    let mean = pvalues.iter().sum::<f64>() / 500.0;
    let ks = ks_uniform(pvalues);
    outcome(ks <= 0.12, format!("500 gaussian null datasets p=50 n=150 (mean unknown, largest edge): KS to U(0,1) {ks:.3} (≤0.12), mean p-value {mean:.3}"))
}

fn criterion_10(dir: &Path) -> Outcome {
    let mut identical = true;
    let mut parts = vec![];
    let runs: [(&str, CommandName, Vec<(&str, String)>); 2] = [
        (
            "simulate",
            CommandName::Simulate,
            vec![
                ("p", "100".into()),
                ("n", "200".into()),
                ("dist", "rademacher".into()),
                ("replicas", "1000".into()),
                ("seed", SEED.to_string()),
            ],
        ),
        (
            "green",
            CommandName::GreenCompare,
            vec![
                ("p", "200".into()),
                ("n", "400".into()),
                ("dist", "rademacher".into()),
                ("dist-w", "gaussian".into()),
                ("replicas", "400".into()),
                ("seed", SEED.to_string()),
            ],
        ),
    ];
    for (name, cmd, pairs) in runs {
        let mut files = vec![];
        for workers in [1, 4, 8] {
            let mut pairs = pairs.clone();
            let out = dir.join(format!("{name}-{workers}.csv"));
            pairs.push(("workers", workers.to_string()));
            pairs.push(("output", out.display().to_string()));
            execute(&run_config(cmd, &pairs)).unwrap();
            files.push(std::fs::read(&out).unwrap());
        }
        let same = files.windows(2).all(|w| w[0] == w[1]);
        identical &= same;
        parts.push(format!("{name} {} bytes identical across 1/4/8 workers: {same}", files[0].len()));
    }
    outcome(identical, parts.join("; "))
}

fn main() {
    // libtest flags such as --nocapture are irrelevant here
    let dir = tempfile::tempdir().expect("temp dir");
    std::env::set_var("TWCORR_CACHE_DIR", dir.path().join("cache"));
    std::env::remove_var("TWCORR_SEED");

    let t = table();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("identity suite", Box::new(criterion_1)),
        ("MP analytics", Box::new(criterion_2)),
        ("TW1 solver", Box::new(criterion_3)),
        ("edge universality, Bernoulli", Box::new(|| criterion_4(&t))),
        ("edge universality, general", Box::new(|| criterion_5(&t))),
        ("local law", Box::new(criterion_6)),
        ("delocalization", Box::new(criterion_7)),
        ("Green comparison", Box::new(criterion_8)),
        ("null p-value calibration", Box::new(|| criterion_9(dir.path()))),
        ("determinism", Box::new(|| criterion_10(dir.path()))),
    ];
    let mut failed = vec![];
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {status} {name}: {} [{:.1}s]", k + 1, o.detail, start.elapsed().as_secs_f64());
        if !o.pass {
            failed.push(k + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
