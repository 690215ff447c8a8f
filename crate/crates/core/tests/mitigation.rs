use proptest::prelude::*;
use rand::Rng;

use qaoa_darbo::mitigation::{
    self, learn_confusion, mitigate_counts, mitigate_readout, project_to_simplex, ConfusionMode, ConfusionSpec, ZneOrder,
    ZneSeries,
};
use qaoa_darbo::noise_sim::{self, FoldFactor, NoiseModel, ReadoutError};
use qaoa_darbo::problem::{QuboProblem, WeightedGraph};
use qaoa_darbo::seeding;
use qaoa_darbo::simulator::{self, QaoaParams};

fn random_dist(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

fn random_rates(n: usize, rng: &mut impl Rng) -> Vec<(f64, f64)> {
    (0..n).map(|_| (rng.random_range(0.0..0.2), rng.random_range(0.0..0.2))).collect()
}

fn global_from_local(rates: &[(f64, f64)]) -> ConfusionSpec {
    let n = rates.len();
    let dim = 1usize << n;
    let mut global = vec![vec![0.0; dim]; dim];
    for (read, row) in global.iter_mut().enumerate() {
        for (prep, cell) in row.iter_mut().enumerate() {
            *cell = rates
                .iter()
                .enumerate()
                .map(|(q, &(p01, p10))| match (prep >> q & 1, read >> q & 1) {
                    (0, 0) => 1.0 - p01,
                    (0, _) => p01,
                    (_, 0) => p10,
                    _ => 1.0 - p10,
                })
                .product();
        }
    }
    ConfusionSpec::Global { global }
}

#[test]
fn round_trip_local_and_global() {
    let mut rng = seeding::rng(31);
    for _ in 0..100 {
        let n = rng.random_range(1..=6);
        let dist = random_dist(1 << n, &mut rng);
        let rates = random_rates(n, &mut rng);
        for spec in [ConfusionSpec::from_flip_rates(&rates), global_from_local(&rates)] {
            let back = mitigate_readout(&spec.apply(&dist).unwrap(), &spec).unwrap();
            let err = back.iter().zip(&dist).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "n={n} err={err}");
        }
    }
}

#[test]
fn local_channel_matches_noise_simulator() {
    let mut rng = seeding::rng(3);
    let rates = random_rates(4, &mut rng);
    let dist = random_dist(16, &mut rng);
    let noise = NoiseModel { two_qubit_depol: 0.0, readout: rates.iter().map(|&(p01, p10)| ReadoutError { p01, p10 }).collect() };
    let a = noise_sim::apply_readout_channel(&dist, &noise).unwrap();
    let b = ConfusionSpec::from_flip_rates(&rates).apply(&dist).unwrap();
    let c = global_from_local(&rates).apply(&dist).unwrap();
    for i in 0..16 {
        assert!((a[i] - b[i]).abs() < 1e-14 && (a[i] - c[i]).abs() < 1e-14);
    }
}

#[test]
fn learns_synthetic_flip_rates() {
    let noise = NoiseModel::uniform(0.0, 0.1, 0.2);
    let m = 50_000;
    let cal = vec![
        (0, noise_sim::sample_prepared(3, 0, &noise, m, 1).unwrap()),
        (7, noise_sim::sample_prepared(3, 7, &noise, m, 2).unwrap()),
    ];
    let ConfusionSpec::Local { local } = learn_confusion(&cal, ConfusionMode::Local).unwrap() else {
        panic!("expected local spec");
    };
    for block in local {
        assert!((block[1][0] - 0.1).abs() < 3.0 * (0.1 * 0.9 / m as f64).sqrt());
        assert!((block[0][1] - 0.2).abs() < 3.0 * (0.2 * 0.8 / m as f64).sqrt());
    }
}

#[test]
fn global_learning_agrees_with_local_product() {
    let rates = [(0.05, 0.1), (0.15, 0.02)];
    let noise = NoiseModel { two_qubit_depol: 0.0, readout: rates.iter().map(|&(p01, p10)| ReadoutError { p01, p10 }).collect() };
    let m = 100_000;
    let cal: Vec<_> = (0..4).map(|s| (s, noise_sim::sample_prepared(2, s, &noise, m, 40 + s as u64).unwrap())).collect();
    let ConfusionSpec::Global { global } = learn_confusion(&cal, ConfusionMode::Global).unwrap() else {
        panic!("expected global spec");
    };
    let ConfusionSpec::Global { global: truth } = global_from_local(&rates) else { unreachable!() };
    for (r, t) in global.iter().zip(&truth) {
        for (a, b) in r.iter().zip(t) {
            assert!((a - b).abs() < 4.0 * (b * (1.0 - b) / m as f64).sqrt() + 1e-12);
        }
    }
}

#[test]
fn identity_confusion_is_a_no_op() {
    let mut rng = seeding::rng(9);
    let dist = random_dist(32, &mut rng);
    assert_eq!(mitigate_readout(&dist, &ConfusionSpec::identity_local(5)).unwrap(), dist);
}

#[test]
fn mitigated_single_edge_closer_than_raw() {
    let problem = QuboProblem::new(WeightedGraph::new(2, [(0, 1, 1.0)]).unwrap());
    let params = QaoaParams::new(vec![0.5], vec![0.3]).unwrap();
    let exact = simulator::exact_expectation(&problem, &params).unwrap();
    let noise = NoiseModel::uniform(0.0, 0.05, 0.08);
    let spec = ConfusionSpec::from_flip_rates(&[(0.05, 0.08); 2]);
    let mut closer = 0;
    for seed in 0..100 {
        let sample = noise_sim::sample_noisy(&problem, &params, &noise, FoldFactor::ONE, 10_000, seed).unwrap();
        let raw = simulator::shot_estimate(&problem, &sample).unwrap();
        let mitigated = simulator::distribution_expectation(&problem, &mitigate_counts(&sample, &spec).unwrap()).unwrap();
        if (mitigated - exact).abs() < (raw - exact).abs() {
            closer += 1;
        }
    }
    assert!(closer >= 95, "{closer}/100");
}

#[test]
fn simplex_projection_examples() {
    assert_eq!(project_to_simplex(&[0.5, 0.5]), vec![0.5, 0.5]);
    let p = project_to_simplex(&[1.2, -0.2]);
    assert!((p[0] - 1.0).abs() < 1e-15 && p[1].abs() < 1e-15);
    let q = project_to_simplex(&[0.6, 0.6, -0.2]);
    assert!((q[0] - 0.5).abs() < 1e-15 && (q[1] - 0.5).abs() < 1e-15 && q[2] == 0.0);
}

#[test]
fn zne_recovers_constant_and_line() {
    let factors = vec![1, 3, 5];
    let constant = ZneSeries { factors: factors.clone(), values: vec![0.7; 3], order: ZneOrder::Linear };
    assert!((mitigation::zne_extrapolate(&constant).unwrap() - 0.7).abs() < 1e-12);
    let quad = ZneSeries { factors: factors.clone(), values: vec![0.7; 3], order: ZneOrder::Quadratic };
    assert!((mitigation::zne_extrapolate(&quad).unwrap() - 0.7).abs() < 1e-12);
    let line = ZneSeries { factors, values: vec![2.0 - 0.3, 2.0 - 0.9, 2.0 - 1.5], order: ZneOrder::Linear };
    assert!((mitigation::zne_extrapolate(&line).unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn zne_pulls_toward_noiseless_value() {
    let problem = QuboProblem::five_variable_benchmark();
    let params = QaoaParams::new(vec![0.4], vec![0.35]).unwrap();
    let exact = simulator::exact_expectation(&problem, &params).unwrap();
    let noise = NoiseModel::uniform(0.01, 0.0, 0.0);
    let values: Vec<f64> = [1, 3, 5]
        .iter()
        .map(|&f| noise_sim::noisy_expectation(&problem, &params, &noise, FoldFactor::new(f).unwrap()).unwrap())
        .collect();
    let zne = mitigation::zne_extrapolate(&ZneSeries { factors: vec![1, 3, 5], values: values.clone(), order: ZneOrder::for_depth(1) })
        .unwrap();
    assert!((zne - exact).abs() < (values[0] - exact).abs());
}

proptest! {
    #[test]
    fn zne_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = seeding::rng(seed);
        for order in [ZneOrder::Linear, ZneOrder::Quadratic] {
            let factors = vec![1, 3, 5];
            let u: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let z = |values: Vec<f64>| mitigation::zne_extrapolate(&ZneSeries { factors: factors.clone(), values, order }).unwrap();
            let combined = z(u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect());
            prop_assert!((combined - (a * z(u.clone()) + b * z(v.clone()))).abs() < 1e-9);
        }
    }

    #[test]
    fn projection_lands_on_simplex(seed in any::<u64>(), dim in 1usize..40) {
        let mut rng = seeding::rng(seed);
        let quasi: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.5..1.0)).collect();
        let p = project_to_simplex(&quasi);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn mitigation_preserves_total_mass(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = seeding::rng(seed);
        let dist = random_dist(1 << n, &mut rng);
        let spec = ConfusionSpec::from_flip_rates(&random_rates(n, &mut rng));
        let q = mitigate_readout(&dist, &spec).unwrap();
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }
}
