//! Acceptance suite. Every test prints one `PASS`/`FAIL` line for its
//! criterion before asserting it.

use std::time::{Duration, Instant};

use mgp_bench::config::{ExperimentConfig, ExperimentName};
use mgp_bench::experiment::{run_experiment, shrinkage_fits};
use mgp_bench::models::ModelKind;
use mgp_core::kernels::{cross_cov, KernelSpec, SeKernel};
use mgp_core::numerics::{alloc_probe, finite_diff_grad, quadrature_cross_cov};
use mgp_core::objective::{nll, nll_arrowhead_factorized, nll_with_grad, penalty_value, PenaltyKind, PenaltySpec};
use mgp_core::predict::Predictor;
use mgp_core::structures::{
    make_arrowhead_spec, make_full_spec, make_pairwise_spec, Dataset, LatentTopology, MgpSpec, OutputSeries,
    PairwiseVariant,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, pass: bool, detail: &str, elapsed: Duration) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!(
        "criterion {id:>2} [{name}] {verdict}: {detail} ({:.1}s)",
        elapsed.as_secs_f64()
    );
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn random_se(rng: &mut ChaCha8Rng, shift: bool) -> KernelSpec {
    let alpha = rng.random_range(0.2..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let ell = rng.random_range(0.2..3.0);
    let s = if shift { rng.random_range(-1.0..1.0) } else { 0.0 };
    KernelSpec::Se(SeKernel::new(alpha, ell).with_shift(s, shift))
}

fn random_spectral(rng: &mut ChaCha8Rng) -> KernelSpec {
    KernelSpec::spectral(
        rng.random_range(-3.0..3.0),
        rng.random_range(0.3..2.0),
        rng.random_range(0.0..2.0),
    )
}

fn random_data(rng: &mut ChaCha8Rng, n: usize, max_p: usize) -> Dataset {
    let outputs = (0..n)
        .map(|_| {
            let p = rng.random_range(2..=max_p);
            let mut x: Vec<f64> = (0..p).map(|k| k as f64 * 0.7 + rng.random_range(0.0..0.5)).collect();
            x.sort_by(f64::total_cmp);
            let y = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
            OutputSeries::new(x, y)
        })
        .collect();
    Dataset::new(outputs).unwrap()
}

fn randomize(spec: &mut MgpSpec, rng: &mut ChaCha8Rng) {
    for k in spec.kernels.iter_mut().flatten().flatten() {
        *k = random_se(rng, false);
    }
    for s in spec.noise.iter_mut() {
        *s = rng.random_range(0.01..0.5);
    }
}

#[test]
fn criterion_01_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let lags = [0.0, 0.5, -0.5, 1.0, -1.0, 3.0];
    let mut worst: f64 = 0.0;
    for draw in 0..200 {
        let (ki, kj) = if draw % 2 == 0 {
            (random_se(&mut rng, true), random_se(&mut rng, true))
        } else {
            (random_spectral(&mut rng), random_spectral(&mut rng))
        };
        for &d in &lags {
            let closed = cross_cov(&ki, &kj, d).unwrap();
            let quad = quadrature_cross_cov(&ki, &kj, d).unwrap();
            // Relative to the pair's covariance scale so that values near a
            // zero crossing of a spectral kernel do not divide by ~0.
            let scale = (cross_cov(&ki, &ki, 0.0).unwrap() * cross_cov(&kj, &kj, 0.0).unwrap()).sqrt();
            worst = worst.max((closed - quad).abs() / scale);
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-6 && elapsed < Duration::from_secs(30);
    report(
        1,
        "oracle equivalence",
        pass,
        &format!("max relative error {worst:.2e} (tol 1e-6)"),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_02_collapse_identity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(2..=5);
        let target = rng.random_range(0..n);
        let data = random_data(&mut rng, n, 6);
        let mut spec = make_arrowhead_spec(n, target, &KernelSpec::se(1.0, 1.0), 1.0).unwrap();
        randomize(&mut spec, &mut rng);
        for row in spec.kernels.iter_mut().skip(1) {
            if let Some(k) = row[target].as_mut() {
                k.scale_amplitudes(0.0);
            }
        }
        let joint = Predictor::from_spec(&spec, &data).unwrap();
        let x0 = rng.random_range(0.0..4.0);
        for i in 0..n {
            let kernel = spec
                .kernels
                .iter()
                .filter_map(|r| r[i].as_ref())
                .find(|k| !k.is_identically_zero())
                .unwrap()
                .clone();
            let mut single = make_full_spec(1, 1, &kernel, spec.noise[i]).unwrap();
            single.kernels[0][0] = Some(kernel);
            let alone = Predictor::from_spec(&single, &data.subset(&[i]).unwrap()).unwrap();
            let (a, b) = (joint.predict(x0, i).unwrap(), alone.predict(x0, 0).unwrap());
            worst = worst.max((a.mean - b.mean).abs()).max((a.variance - b.variance).abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-8 && elapsed < Duration::from_secs(60);
    report(
        2,
        "collapse identity",
        pass,
        &format!("max deviation {worst:.2e} over 50 cases (tol 1e-8)"),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_03_arrowhead_factorization() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut dense_free = true;
    for _ in 0..50 {
        let n = rng.random_range(2..=6);
        let target = rng.random_range(0..n);
        let data = random_data(&mut rng, n, 6);
        let mut spec = make_arrowhead_spec(n, target, &KernelSpec::se(1.0, 1.0), 1.0).unwrap();
        randomize(&mut spec, &mut rng);
        let dense = nll(&spec, &data).unwrap();
        alloc_probe::reset();
        let factorized = nll_arrowhead_factorized(&spec, &data).unwrap();
        dense_free &= alloc_probe::largest_dimension() < data.total_len();
        worst = worst.max((dense - factorized).abs());
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-6 && dense_free && elapsed < Duration::from_secs(60);
    report(
        3,
        "arrowhead factorization",
        pass,
        &format!("max |dense - factorized| {worst:.2e} (tol 1e-6), no PxP allocation: {dense_free}"),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_04_table1_trend() {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::preset(ExperimentName::Table1Sines);
    cfg.replications = 5;
    let run = run_experiment(&cfg).unwrap();
    let m: Vec<f64> = run
        .report
        .models
        .iter()
        .map(|s| s.median_mse.unwrap_or(f64::NAN))
        .collect();
    let checks = [m[0] > 1.0, m[1] > 0.1, m[2] < 0.05, (m[3] - m[2]).abs() < 0.05];
    let elapsed = start.elapsed();
    let pass = checks.iter().all(|&c| c) && elapsed < Duration::from_secs(600);
    report(
        4,
        "table-1 trend",
        pass,
        &format!(
            "median MSE Q=1 {:.4} (>1: {}), Q=2 {:.4} (>0.1: {}), Q=3 {:.5} (<0.05: {}), |Q4-Q3| {:.5} (<0.05: {})",
            m[0],
            checks[0],
            m[1],
            checks[1],
            m[2],
            checks[2],
            (m[3] - m[2]).abs(),
            checks[3]
        ),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_05_table2_shrinkage() {
    let start = Instant::now();
    let cfg = ExperimentConfig::preset(ExperimentName::Table2Shrinkage);
    let mut target_amp = [Vec::new(), Vec::new()];
    let mut partner_amp = [Vec::new(), Vec::new()];
    let mut lambdas = Vec::new();
    for seed in 0..5 {
        let data = mgp_bench::data::gen_sines(seed, cfg.train_points, cfg.noise);
        let rows = shrinkage_fits(
            &ExperimentConfig {
                fit: cfg.fit.clone().with_seed(seed),
                ..cfg.clone()
            },
            0,
            &data,
        )
        .unwrap();
        for (k, (row, _)) in rows.iter().enumerate() {
            target_amp[k].push(row.alpha_shared_target.abs());
            partner_amp[k].push(row.alpha_shared_partner.abs());
            lambdas.push(row.lambda);
        }
    }
    let t: Vec<f64> = target_amp.iter().map(|v| median(v.clone())).collect();
    let p: Vec<f64> = partner_amp.iter().map(|v| median(v.clone())).collect();
    let shrunk = t.iter().all(|&a| a < 1e-3);
    let kept = p.iter().all(|&a| a > 0.1);
    let elapsed = start.elapsed();
    let pass = shrunk && kept && elapsed < Duration::from_secs(300);
    report(
        5,
        "table-2 shrinkage",
        pass,
        &format!(
            "median |a01| (y1,y2) {:.2e} (y1,y3) {:.2e} (<1e-3: {shrunk}); median |a0i| {:.2e} {:.2e} (>0.1: {kept}); CV lambdas {lambdas:?}",
            t[0], t[1], p[0], p[1]
        ),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_06_negative_transfer() {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::preset(ExperimentName::Table1Sines);
    cfg.models = vec![ModelKind::FullQ { q: 1 }];
    cfg.replications = 10;
    let run = run_experiment(&cfg).unwrap();
    let its: Vec<f64> = run
        .report
        .information_transfer
        .iter()
        .map(|r| r.report.it_value)
        .collect();
    let positive = its.iter().filter(|&&v| v > 0.0).count();
    let elapsed = start.elapsed();
    let pass = its.len() == 10 && positive >= 9 && elapsed < Duration::from_secs(600);
    report(
        6,
        "negative-transfer detection",
        pass,
        &format!(
            "IT > 0 in {positive} of {} seeds (need 9 of 10); median IT {:.4}",
            its.len(),
            median(its.clone())
        ),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_07_grouped_ordering() {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::preset(ExperimentName::LowdimGroups);
    cfg.models = vec![
        ModelKind::FullQ { q: 1 },
        ModelKind::PairwiseA,
        ModelKind::Arrowhead,
        ModelKind::Subset {
            outputs: Vec::new(),
            q: 1,
        },
    ];
    let run = run_experiment(&cfg).unwrap();
    let m: Vec<f64> = run
        .report
        .models
        .iter()
        .map(|s| s.median_mse.unwrap_or(f64::NAN))
        .collect();
    let checks = [m[1] <= m[0], m[2] <= m[0], m[3] <= m[0]];
    let elapsed = start.elapsed();
    let pass = checks.iter().all(|&c| c) && elapsed < Duration::from_secs(900);
    report(
        7,
        "grouped-output ordering",
        pass,
        &format!(
            "median y1 MSE: mgp_1 {:.5}, pairwise {:.5} ({}), arrowhead {:.5} ({}), mgp_sub {:.5} ({})",
            m[0], m[1], checks[0], m[2], checks[1], m[3], checks[2]
        ),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_08_gradient_correctness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for point in 0..20 {
        let mut spec = match point % 4 {
            0 => make_full_spec(3, 2, &KernelSpec::se(1.0, 1.0), 1.0).unwrap(),
            1 => make_arrowhead_spec(3, 1, &KernelSpec::se(1.0, 1.0), 1.0).unwrap(),
            2 => make_pairwise_spec(PairwiseVariant::TwoLatent, 0, 1, &KernelSpec::se(1.0, 1.0), 1.0).unwrap(),
            _ => {
                let proto = KernelSpec::Se(SeKernel::new(1.0, 1.0).with_shift(0.0, true));
                make_pairwise_spec(PairwiseVariant::SharedPrivate, 0, 1, &proto, 1.0).unwrap()
            }
        };
        let shifted = matches!(spec.topology, LatentTopology::PairwiseSharedPrivate { .. });
        for k in spec.kernels.iter_mut().flatten().flatten() {
            let free = k.as_se().is_some_and(|s| s.free_shift);
            *k = random_se(&mut rng, shifted && free);
        }
        for s in spec.noise.iter_mut() {
            *s = rng.random_range(0.05..0.5);
        }
        let data = random_data(&mut rng, spec.n_outputs, 7);
        let (_, analytic) = nll_with_grad(&spec, &data).unwrap();
        let numeric = finite_diff_grad(
            |p| nll(&spec.with_params(p).unwrap(), &data).unwrap(),
            &spec.to_params(),
        )
        .unwrap();
        let diff = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
        worst = worst.max(diff / norm);
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-4 && elapsed < Duration::from_secs(30);
    report(
        8,
        "gradient correctness",
        pass,
        &format!("max ||analytic - central FD|| / ||FD|| {worst:.2e} at 20 points (tol 1e-4)"),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_09_penalty_suite() {
    let start = Instant::now();
    let kinds = [
        PenaltyKind::Ridge,
        PenaltyKind::L1,
        PenaltyKind::Bridge { exponent: 0.3 },
        PenaltyKind::Bridge { exponent: 0.7 },
        PenaltyKind::Scad { gamma: 2.5 },
        PenaltyKind::Scad { gamma: 3.7 },
        PenaltyKind::Scad { gamma: 6.0 },
        PenaltyKind::GroupL2,
    ];
    let thetas: Vec<f64> = (0..=400).map(|k| k as f64 * 0.025).collect();
    let mut failures = Vec::new();
    for kind in kinds {
        for lambda in [0.0, 0.1, 0.5, 1.0, 2.5] {
            let pen = PenaltySpec::new(kind, lambda);
            let value = |t: f64| penalty_value(&pen, &[t]).unwrap();
            if value(0.0) != 0.0 || penalty_value(&pen, &[0.0, 0.0]).unwrap() != 0.0 {
                failures.push(format!("{kind:?} λ={lambda}: P(0) != 0"));
            }
            let mut prev = 0.0;
            for &t in &thetas {
                let (v, neg) = (value(t), value(-t));
                if v < 0.0 || v < prev - 1e-12 || (v - neg).abs() > 1e-12 {
                    failures.push(format!("{kind:?} λ={lambda}: not nonnegative/monotone/even at {t}"));
                    break;
                }
                prev = v;
            }
            if let PenaltyKind::Scad { gamma } = kind {
                for b in [lambda, gamma * lambda].into_iter().filter(|&b| b > 0.0) {
                    // Adjacent floats on either side of the breakpoint.
                    let (below, above) = (f64::from_bits(b.to_bits() - 1), f64::from_bits(b.to_bits() + 1));
                    let jump = (value(below) - value(above)).abs();
                    if jump > 1e-12 {
                        failures.push(format!("SCAD γ={gamma} λ={lambda}: jump {jump:e} at {b}"));
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(5);
    let detail = if failures.is_empty() {
        "P(0)=0, nonnegative, monotone, SCAD continuous at both breakpoints".to_string()
    } else {
        failures.join("; ")
    };
    report(9, "penalty suite", pass, &detail, elapsed);
    assert!(pass);
}

#[test]
fn criterion_10_determinism() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_mgp"))
            .args(["experiment", "table1_sines", "--seed", "7", "--out-dir"])
            .arg(&out)
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out.join("report.json")).unwrap()
    };
    let (a, b) = (run("first"), run("second"));
    let elapsed = start.elapsed();
    let pass = a == b && !a.is_empty();
    report(
        10,
        "determinism",
        pass,
        &format!(
            "two runs of `experiment table1_sines --seed 7`: {} bytes, identical: {}",
            a.len(),
            a == b
        ),
        elapsed,
    );
    assert!(pass);
}
