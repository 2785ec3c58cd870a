use geodetect_core::normal;
use geodetect_core::sampling::{sample_er, sample_gaussian_matrix, threshold_graph};
use geodetect_core::statistics::{
    null_moments, report_for_value, run_test, signed_triangles, trace_cube, Sample, StatisticName,
};
use geodetect_core::SeedSpec;

const REPS: u64 = 10_000;

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
}

fn check_null(xs: &[f64], mean: f64, var: f64, label: &str) {
    let (m, v) = mean_var(xs);
    let se = (v / xs.len() as f64).sqrt();
    assert!((m - mean).abs() <= 4.0 * se, "{label}: mean {m} vs {mean} (se {se})");
    assert!((v / var - 1.0).abs() <= 0.05, "{label}: variance {v} vs {var}");
}

#[test]
fn signed_triangles_null_moments() {
    for n in [10usize, 30] {
        for p in [0.3, 0.5] {
            let xs: Vec<f64> = (0..REPS)
                .map(|r| signed_triangles(&sample_er(n, p, SeedSpec::new(41, r)).unwrap()))
                .collect();
            let (mean, var) = null_moments(StatisticName::SignedTriangles, n, Some(p)).unwrap();
            check_null(&xs, mean, var, &format!("n={n} p={p}"));
        }
    }
}

#[test]
fn trace_cube_null_moments() {
    for n in [10usize, 30] {
        let xs: Vec<f64> = (0..REPS)
            .map(|r| trace_cube(&sample_gaussian_matrix(n, SeedSpec::new(42, r))))
            .collect();
        let (mean, var) = null_moments(StatisticName::TraceCube, n, None).unwrap();
        check_null(&xs, mean, var, &format!("n={n}"));
    }
}

#[test]
fn thresholded_gaussian_matrix_is_erdos_renyi() {
    let (n, p) = (12, 0.3);
    let t = normal::inv_sf(p);
    let mut edges = 0usize;
    let xs: Vec<f64> = (0..REPS)
        .map(|r| {
            let g = threshold_graph(&sample_gaussian_matrix(n, SeedSpec::new(43, r)), t, p);
            edges += g.edge_count();
            signed_triangles(&g)
        })
        .collect();
    let pairs = (n * (n - 1) / 2) as f64 * REPS as f64;
    let density = edges as f64 / pairs;
    assert!((density - p).abs() <= 3.0 * (p * (1.0 - p) / pairs).sqrt(), "density {density}");
    let (mean, var) = null_moments(StatisticName::SignedTriangles, n, Some(p)).unwrap();
    check_null(&xs, mean, var, "thresholded M(n)");
}

#[test]
fn null_false_positive_rate() {
    let rejects = (0..REPS)
        .filter(|&r| {
            let g = sample_er(30, 0.5, SeedSpec::new(44, r)).unwrap();
            run_test(Sample::Graph(&g), StatisticName::SignedTriangles, 0.05).unwrap().reject
        })
        .count();
    let rate = rejects as f64 / REPS as f64;
    assert!((0.03..=0.07).contains(&rate), "rate {rate}");
}

#[test]
fn report_fields_are_consistent() {
    let g = sample_er(15, 0.4, SeedSpec::new(45, 0)).unwrap();
    let rep = run_test(Sample::Graph(&g), StatisticName::SignedTriangles, 0.1).unwrap();
    assert_eq!(rep.z_score, (rep.value - rep.null_mean) / rep.null_sd);
    assert_eq!(rep.reject, rep.z_score > rep.threshold_z);
    for fpr in [1e-6, 0.01, 0.2, 0.49] {
        assert!(!report_for_value(StatisticName::TraceCube, 0.0, 0.0, 1.0, fpr).unwrap().reject);
    }
    assert!(run_test(Sample::Graph(&g), StatisticName::TraceCube, 0.05).is_err());
    assert!(run_test(Sample::Graph(&g), StatisticName::SignedTriangles, 0.5).is_err());
}
