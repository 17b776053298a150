use mgp_core::infer::{fit, fit_from, FitOptions};
use mgp_core::kernels::{cross_cov, KernelSpec, SeKernel};
use mgp_core::numerics::{alloc_probe, chol_solve, cholesky_with_jitter, quadrature_cross_cov, SymMatrix};
use mgp_core::objective::{nll, nll_arrowhead_factorized, PenaltySpec};
use mgp_core::predict::{information_transfer, poe_combine, ModelTarget, PredictiveGaussian, Predictor};
use mgp_core::structures::{make_arrowhead_spec, make_full_spec, Dataset, MgpSpec, OutputSeries};
use proptest::prelude::*;

fn se() -> impl Strategy<Value = KernelSpec> {
    (-3.0..3.0f64, 0.2..3.0f64, -1.0..1.0f64)
        .prop_map(|(a, l, s)| KernelSpec::Se(SeKernel::new(a, l).with_shift(s, false)))
}

fn spectral() -> impl Strategy<Value = KernelSpec> {
    (-3.0..3.0f64, 0.3..2.0f64, 0.0..2.0f64).prop_map(|(a, s, m)| KernelSpec::spectral(a, s, m))
}

fn inputs(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..6.0f64, n).prop_map(|mut v| {
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        v
    })
}

/// Random arrowhead model and data with `n` outputs of 2..=5 points each.
fn arrowhead_case(n: usize) -> impl Strategy<Value = (MgpSpec, Dataset)> {
    let kernels = prop::collection::vec(se(), 2 * n - 1);
    let noise = prop::collection::vec(0.01..0.5f64, n);
    let data = prop::collection::vec(
        inputs(5).prop_flat_map(|x| {
            let p = x.len();
            (Just(x), prop::collection::vec(-3.0..3.0f64, p))
        }),
        n,
    );
    (0..n, kernels, noise, data).prop_map(move |(target, ks, noise, data)| {
        let mut spec = make_arrowhead_spec(n, target, &KernelSpec::se(1.0, 1.0), 1.0).unwrap();
        let mut it = ks.into_iter();
        for row in spec.kernels.iter_mut() {
            for k in row.iter_mut().flatten() {
                *k = it.next().unwrap();
            }
        }
        spec.noise = noise;
        let outputs = data.into_iter().map(|(x, y)| OutputSeries::new(x, y)).collect();
        (spec, Dataset::new(outputs).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cross_covariance_is_symmetric(ki in se(), kj in se(), d in -4.0..4.0f64) {
        let a = cross_cov(&ki, &kj, d).unwrap();
        let b = cross_cov(&kj, &ki, -d).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn spectral_cross_covariance_is_symmetric(ki in spectral(), kj in spectral(), d in -4.0..4.0f64) {
        let a = cross_cov(&ki, &kj, d).unwrap();
        let b = cross_cov(&kj, &ki, -d).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn cauchy_schwarz(ki in se(), kj in se(), d in -4.0..4.0f64) {
        let c = cross_cov(&ki, &kj, d).unwrap();
        let bound = cross_cov(&ki, &ki, 0.0).unwrap() * cross_cov(&kj, &kj, 0.0).unwrap();
        prop_assert!(c * c <= bound * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn zero_amplitude_gives_zero_cross_covariance(kj in se(), l in 0.2..3.0f64) {
        let zero = KernelSpec::se(0.0, l);
        for k in 0..100 {
            let d = -5.0 + 0.1 * k as f64;
            prop_assert_eq!(cross_cov(&zero, &kj, d).unwrap(), 0.0);
        }
    }

    #[test]
    fn nonzero_amplitudes_give_nonzero_cross_covariance(a in 0.1..3.0f64, b in 0.1..3.0f64, l in 0.2..3.0f64) {
        let c = cross_cov(&KernelSpec::se(a, l), &KernelSpec::se(b, l), 0.0).unwrap();
        prop_assert!(c > 0.0);
    }

    #[test]
    fn chol_solve_residual(rows in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 6), 6),
                           b in prop::collection::vec(-5.0..5.0f64, 6)) {
        // A = R Rᵀ + I is symmetric positive definite.
        let a = SymMatrix::from_fn(6, |i, j| {
            rows[i].iter().zip(&rows[j]).map(|(x, y)| x * y).sum::<f64>() + if i == j { 1.0 } else { 0.0 }
        });
        let f = cholesky_with_jitter(&a).unwrap();
        let x = chol_solve(&f, &b).unwrap();
        let r = a.mul_vec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            prop_assert!((ri - bi).abs() < 1e-10);
        }
    }

    #[test]
    fn poe_is_associative(m in prop::collection::vec(-3.0..3.0f64, 3), v in prop::collection::vec(0.05..4.0f64, 3)) {
        let g: Vec<PredictiveGaussian> = m.iter().zip(&v).map(|(&mean, &variance)| PredictiveGaussian { mean, variance }).collect();
        let all = poe_combine(&g, &[1.0; 3]).unwrap();
        let ab = poe_combine(&g[..2], &[1.0; 2]).unwrap();
        let nested = poe_combine(&[ab, g[2]], &[1.0; 2]).unwrap();
        prop_assert!((all.mean - nested.mean).abs() < 1e-12);
        prop_assert!((all.variance - nested.variance).abs() < 1e-12 * all.variance.max(1.0));
        let precision: f64 = v.iter().map(|x| 1.0 / x).sum();
        prop_assert!((all.variance - 1.0 / precision).abs() < 1e-12);
    }

    #[test]
    fn factorized_nll_matches_dense((spec, data) in (2usize..=4).prop_flat_map(arrowhead_case)) {
        let dense = nll(&spec, &data).unwrap();
        alloc_probe::reset();
        let factorized = nll_arrowhead_factorized(&spec, &data).unwrap();
        let largest = alloc_probe::largest_dimension();
        prop_assert!((dense - factorized).abs() <= 1e-6 * dense.abs().max(1.0), "{} vs {}", dense, factorized);
        let widest = data.outputs.iter().map(OutputSeries::len).max().unwrap();
        prop_assert!(largest <= widest && largest < data.total_len());
    }

    #[test]
    fn decoupled_outputs_predict_independently((spec, data) in (2usize..=4).prop_flat_map(arrowhead_case), x0 in 0.0..6.0f64) {
        let mut spec = spec;
        let target = match spec.topology {
            mgp_core::structures::LatentTopology::Arrowhead { target } => target,
            _ => unreachable!(),
        };
        for row in spec.kernels.iter_mut().skip(1) {
            if let Some(k) = row[target].as_mut() {
                k.scale_amplitudes(0.0);
            }
        }
        let joint = Predictor::from_spec(&spec, &data).unwrap();
        for i in 0..spec.n_outputs {
            let kernel = spec.kernels.iter().filter_map(|r| r[i].as_ref()).find(|k| !k.is_identically_zero());
            let Some(kernel) = kernel else { continue };
            let mut single = make_full_spec(1, 1, kernel, spec.noise[i]).unwrap();
            single.kernels[0][0] = Some(kernel.clone());
            let alone = Predictor::from_spec(&single, &data.subset(&[i]).unwrap()).unwrap();
            let a = joint.predict(x0, i).unwrap();
            let b = alone.predict(x0, 0).unwrap();
            prop_assert!((a.mean - b.mean).abs() <= 1e-8 * b.mean.abs().max(1.0));
            prop_assert!((a.variance - b.variance).abs() <= 1e-8 * b.variance.max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn se_matches_quadrature(ki in se(), kj in se(), d in -3.0..3.0f64) {
        let closed = cross_cov(&ki, &kj, d).unwrap();
        let quad = quadrature_cross_cov(&ki, &kj, d).unwrap();
        prop_assert!((closed - quad).abs() <= 1e-6 * closed.abs().max(1e-12), "{} vs {}", closed, quad);
    }

    #[test]
    fn spectral_matches_quadrature(ki in spectral(), kj in spectral(), d in -3.0..3.0f64) {
        let closed = cross_cov(&ki, &kj, d).unwrap();
        let quad = quadrature_cross_cov(&ki, &kj, d).unwrap();
        let scale = (cross_cov(&ki, &ki, 0.0).unwrap() * cross_cov(&kj, &kj, 0.0).unwrap()).sqrt();
        prop_assert!((closed - quad).abs() <= 1e-6 * scale.max(1e-12), "{} vs {}", closed, quad);
    }
}

fn sine_data(p: usize) -> Dataset {
    let x: Vec<f64> = (0..p).map(|k| k as f64 * 0.5).collect();
    Dataset::new(vec![
        OutputSeries::new(x.clone(), x.iter().map(|v| v.sin()).collect()),
        OutputSeries::new(x.clone(), x.iter().map(|v| v.sin() + 0.1 * v.cos()).collect()),
    ])
    .unwrap()
}

#[test]
fn information_transfer_is_antisymmetric() {
    let data = sine_data(10);
    let opts = FitOptions {
        restarts: 1,
        max_iters: 60,
        ..FitOptions::default()
    };
    let proto = KernelSpec::se(1.0, 1.0);
    let joint = fit(
        &make_full_spec(2, 1, &proto, 1.0).unwrap(),
        &data,
        &PenaltySpec::none(),
        &opts,
    )
    .unwrap();
    let alone = fit(
        &make_full_spec(1, 1, &proto, 1.0).unwrap(),
        &data.subset(&[0]).unwrap(),
        &PenaltySpec::none(),
        &opts,
    )
    .unwrap();
    let (a, b) = (
        ModelTarget::new(&joint, 0).unwrap(),
        ModelTarget::new(&alone, 0).unwrap(),
    );
    let test = OutputSeries::new(
        vec![0.25, 1.75, 3.25],
        vec![0.25f64.sin(), 1.75f64.sin(), 3.25f64.sin()],
    );
    let forward = information_transfer(&a, &b, &test, 0, vec![0]).unwrap();
    let backward = information_transfer(&b, &a, &test, 0, vec![0]).unwrap();
    assert_eq!(forward.it_value, -backward.it_value);
    assert_eq!(information_transfer(&a, &a, &test, 0, vec![0]).unwrap().it_value, 0.0);
}

#[test]
fn fit_from_never_worsens_its_start() {
    let data = sine_data(12);
    let opts = FitOptions {
        restarts: 1,
        max_iters: 30,
        ..FitOptions::default()
    };
    let spec = make_full_spec(2, 2, &KernelSpec::se(1.0, 1.0), 1.0).unwrap();
    let first = fit(&spec, &data, &PenaltySpec::none(), &opts).unwrap();
    let again = fit_from(&first.spec, &data, &PenaltySpec::none(), &opts).unwrap();
    assert!(again.final_objective.total <= first.final_objective.total + 1e-12);
    assert_eq!(again.restart_objectives.len(), 1);
}

#[test]
fn fit_is_bitwise_deterministic() {
    let data = sine_data(10);
    let opts = FitOptions {
        restarts: 3,
        max_iters: 40,
        seed: 11,
        ..FitOptions::default()
    };
    let spec = make_arrowhead_spec(2, 0, &KernelSpec::se(1.0, 1.0), 1.0).unwrap();
    let a = fit(&spec, &data, &PenaltySpec::none(), &opts).unwrap();
    let b = fit(&spec, &data, &PenaltySpec::none(), &opts).unwrap();
    assert_eq!(a.spec.to_params(), b.spec.to_params());
    assert_eq!(a.restart_objectives, b.restart_objectives);
}
