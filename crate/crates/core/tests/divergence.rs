use geodetect_core::divergence::{
    chi2_truncated_mc, log_density_ratio_spiked, pair_interaction, tv_lower_bound_cdf_gap, Chi2Options,
};
use geodetect_core::harness::{run_experiment, ExperimentConfig, ExperimentKind};
use geodetect_core::oracle::{quadrature_pair_expectation, GaussHermite};
use geodetect_core::sampling::sample_gaussian_matrix;
use geodetect_core::{SeedSpec, SymMatrixSample};

#[test]
fn density_ratio_normalises_by_tensor_quadrature() {
    let rule = GaussHermite::new(80);
    let s2 = std::f64::consts::SQRT_2;
    let norm = std::f64::consts::PI.powf(-1.5);
    for (g, u) in [([1.0, -0.5, 2.0], 0.2), ([0.3, 0.3, -1.2], 0.6), ([0.0, 1.0, 1.0], 0.9)] {
        let mut total = 0.0;
        for (x, wx) in rule.nodes.iter().zip(&rule.weights) {
            for (y, wy) in rule.nodes.iter().zip(&rule.weights) {
                for (z, wz) in rule.nodes.iter().zip(&rule.weights) {
                    let a = SymMatrixSample::from_upper(3, vec![s2 * x, s2 * y, s2 * z]).unwrap();
                    total += wx * wy * wz * log_density_ratio_spiked(&a, &g, u).unwrap().exp();
                }
            }
        }
        let e = total * norm;
        assert!((e - 1.0).abs() < 1e-8, "g={g:?} u={u}: {e}");
    }
}

#[test]
fn density_ratio_normalises_by_monte_carlo() {
    let n = 10;
    let g: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.7).sin() * 1.5).collect();
    let u = 0.15;
    let reps = 200_000u64;
    let vals: Vec<f64> = (0..reps)
        .map(|r| log_density_ratio_spiked(&sample_gaussian_matrix(n, SeedSpec::new(61, r)), &g, u).unwrap().exp())
        .collect();
    let m = vals.iter().sum::<f64>() / reps as f64;
    let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (reps - 1) as f64;
    let se = (var / reps as f64).sqrt();
    assert!((m - 1.0).abs() <= 3.0 * se, "mean {m} se {se}");
}

#[test]
fn pair_interaction_matches_quadrature() {
    let rule = GaussHermite::new(200);
    let (g, h) = ([1.0, -0.5, 2.0], [0.3, 1.0, -1.0]);
    let q = quadrature_pair_expectation(&rule, &g, &h, 0.2).unwrap();
    let c = pair_interaction(&g, &h, 0.2).unwrap();
    assert!((q / c - 1.0).abs() <= 1e-8, "{q} vs {c}");
    let mut rng = SeedSpec::new(62, 0).rng();
    for _ in 0..20 {
        let n = 2 + (rng.uniform() * 5.0) as usize;
        let g: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
        let h: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
        let u = 0.3 * rng.uniform();
        let q = quadrature_pair_expectation(&rule, &g, &h, u).unwrap();
        let c = pair_interaction(&g, &h, u).unwrap();
        assert!((q / c - 1.0).abs() <= 1e-8, "n={n} u={u}: {q} vs {c}");
    }
}

/// Draw from N(0, I_n) conditioned on ‖g‖₂² ≤ (1+a)n and ‖g‖₄⁴ ≤ 3(1+a)n.
fn conditioned_gaussian(rng: &mut geodetect_core::rng::StreamRng, n: usize, a: f64) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
        let s2: f64 = g.iter().map(|x| x * x).sum();
        let s4: f64 = g.iter().map(|x| x.powi(4)).sum();
        if s2 <= (1.0 + a) * n as f64 && s4 <= 3.0 * (1.0 + a) * n as f64 {
            return g;
        }
    }
}

fn quadrature_chi2(n: usize, u: f64, a: f64, pairs: u64, seed: SeedSpec) -> (f64, f64) {
    let rule = GaussHermite::new(60);
    let mut rng = seed.rng();
    let vals: Vec<f64> = (0..pairs)
        .map(|_| {
            let g = conditioned_gaussian(&mut rng, n, a);
            let h = conditioned_gaussian(&mut rng, n, a);
            quadrature_pair_expectation(&rule, &g, &h, u).unwrap() - 1.0
        })
        .collect();
    let m = vals.iter().sum::<f64>() / pairs as f64;
    let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (pairs - 1) as f64;
    (m, (var / pairs as f64).sqrt())
}

#[test]
fn chi2_agrees_with_quadrature_estimate() {
    for (n, u, a) in [(3, 0.05, 2.0), (3, 0.3, 2.0), (5, 0.15, 1.0)] {
        let est = chi2_truncated_mc(n, u, Some(a), 400_000, SeedSpec::new(63, 0), Chi2Options {
            guard: 1.0,
            ..Default::default()
        })
        .unwrap();
        let (q, q_se) = quadrature_chi2(n, u, a, 20_000, SeedSpec::new(64, n as u64));
        let combined = (est.chi2_stderr.powi(2) + q_se.powi(2)).sqrt();
        assert!(
            (est.chi2 - q).abs() <= 3.0 * combined,
            "n={n} u={u}: mc {} ± {} vs quadrature {q} ± {q_se}",
            est.chi2,
            est.chi2_stderr
        );
        assert!(est.tv.bound <= 0.5 * est.chi2.max(0.0).sqrt() + 1e-15);
    }
}

#[test]
fn chi2_scales_as_sixth_power() {
    let n = 16;
    let u = 0.05;
    let opts = Chi2Options::default();
    let a = chi2_truncated_mc(n, u, None, 400_000, SeedSpec::new(65, 0), opts).unwrap();
    let b = chi2_truncated_mc(n, 2.0 * u, None, 400_000, SeedSpec::new(65, 1), opts).unwrap();
    let ratio = b.chi2 / a.chi2;
    assert!((32.0..=128.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn cdf_gap_separates_strong_signal() {
    let cfg = ExperimentConfig {
        experiment_kind: ExperimentKind::PowerCurve,
        spectrum_spec: "flat:32".into(),
        n_grid: vec![32],
        replicates: 1000,
        master_seed: 66,
        ..Default::default()
    };
    let out = run_experiment(&cfg).unwrap();
    let gap = out.summaries[0].tv_gap.unwrap();
    assert!(gap.bound >= 0.9, "{gap:?}");
    let same = tv_lower_bound_cdf_gap(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
    assert_eq!(same.bound, 0.0);
}
