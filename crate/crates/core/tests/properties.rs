use geodetect_core::divergence::{in_truncation, pair_interaction, sample_truncated_gaussian, xy_values, TruncationSet};
use geodetect_core::io::{read_graph, read_matrix, write_graph, write_matrix};
use geodetect_core::quantile::solve_threshold_cf;
use geodetect_core::sampling::{
    pairs, sample_er, sample_gaussian_matrix, sample_rgg, sample_wishart, sample_wishart_bartlett,
    threshold_graph,
};
use geodetect_core::spectrum::REVERSE_CS_FLOOR;
use geodetect_core::statistics::{signed_triangles, signed_triangles_trace, trace_cube, trace_cube_triangles};
use geodetect_core::{SeedSpec, Spectrum};
use proptest::prelude::*;

fn weights(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..10.0, 1..=max_len)
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn effective_dimension_is_scale_invariant(w in weights(60), c in 1e-3f64..1e3) {
        let s = Spectrum::new(w).unwrap();
        let scaled = s.scaled(c).unwrap();
        prop_assert!(rel(s.effective_dimension(), scaled.effective_dimension()) <= 1e-12);
        prop_assert!(rel(s.comparison_dimension(), scaled.comparison_dimension()) <= 1e-12);
    }

    #[test]
    fn norms_are_ordered(w in weights(60)) {
        let s = Spectrum::new(w).unwrap();
        prop_assert!(s.l2() >= s.l3() * (1.0 - 1e-14));
        prop_assert!(s.l3() >= s.l4() * (1.0 - 1e-14));
        prop_assert!(s.effective_dimension() >= 1.0 - 1e-12);
        prop_assert!(s.comparison_dimension() >= 1.0 - 1e-12);
        prop_assert!(s.effective_dimension() <= s.dim() as f64 * (1.0 + 1e-12));
    }

    #[test]
    fn split_matches_linear_scan(w in weights(20)) {
        let s = Spectrum::new(w).unwrap();
        let sq: Vec<f64> = s.weights().iter().map(|x| x * x).collect();
        let total: f64 = sq.iter().sum();
        let mut r = 0;
        let mut prefix = 0.0;
        while 3.0 * prefix < total * (1.0 - 1e-13) {
            prefix += sq[r];
            r += 1;
        }
        let split = s.split();
        // The brute-force scan uses a relative slack; accept either side of an exact tie.
        let exact_tie = (3.0 * sq[..split.r.min(r)].iter().sum::<f64>() - total).abs() <= 1e-12 * total;
        prop_assert!(split.r == r || exact_tie, "split r={} scan r={}", split.r, r);
        let plus = split.alpha_plus.l2().powi(2);
        if split.degenerate {
            prop_assert_eq!(split.r, 1);
            prop_assert!(3.0 * plus > 2.0 * total * (1.0 - 1e-12));
        } else {
            prop_assert!(3.0 * plus >= total * (1.0 - 1e-12));
            prop_assert!(3.0 * plus <= 2.0 * total * (1.0 + 1e-12));
        }
    }

    #[test]
    fn peel_sequence_is_consistent(w in weights(40)) {
        let s = Spectrum::new(w).unwrap();
        let split = s.split();
        prop_assume!(!split.degenerate);
        let peel = split.peel_sequence().unwrap();
        prop_assert_eq!(peel.len(), split.r);
        let last = peel.spectrum_at(split.r).unwrap();
        prop_assert_eq!(last.weights(), s.weights());
        for step in peel.steps() {
            prop_assert!(step.u > 0.0 && step.u <= 1.0);
            let at = peel.spectrum_at(step.t).unwrap();
            let direct = s.weights()[step.t - 1] / at.l2();
            prop_assert!(rel(step.u, direct) <= 1e-12);
        }
        let proxy = split.peel_bound_proxy(10).unwrap();
        prop_assert!(proxy.sum_term <= proxy.l3_term * (1.0 + 1e-12));
    }

    #[test]
    fn reverse_cs_holds_with_calibrated_constant(w in weights(80)) {
        let split = Spectrum::new(w).unwrap().split();
        if let Some(ratio) = split.reverse_cs_ratio() {
            prop_assert!(ratio >= REVERSE_CS_FLOOR, "ratio {ratio}");
        }
    }

    #[test]
    fn samplers_are_deterministic(seed in any::<u64>(), stream in any::<u64>(), n in 2usize..12) {
        let s = Spectrum::new(vec![2.0, 1.0, 0.5]).unwrap();
        let sd = SeedSpec::new(seed, stream);
        prop_assert_eq!(sample_wishart(&s, n, sd), sample_wishart(&s, n, sd));
        prop_assert_eq!(sample_wishart_bartlett(&s, n, sd), sample_wishart_bartlett(&s, n, sd));
        prop_assert_eq!(sample_gaussian_matrix(n, sd), sample_gaussian_matrix(n, sd));
        prop_assert_eq!(sample_er(n, 0.3, sd).unwrap(), sample_er(n, 0.3, sd).unwrap());
    }

    #[test]
    fn coupling_identity(w in weights(12), n in 3usize..16, p in 0.05f64..0.95, seed in any::<u64>()) {
        let s = Spectrum::new(w).unwrap();
        let t = solve_threshold_cf(&s, p, 1e-9).unwrap().t;
        let sd = SeedSpec::new(seed, 0);
        let direct = sample_rgg(&s, n, p, t, sd);
        let coupled = threshold_graph(&sample_wishart(&s, n, sd), t / s.l2(), p);
        prop_assert_eq!(direct, coupled);
    }

    #[test]
    fn statistics_are_label_invariant(
        (n, perm) in (3usize..14).prop_flat_map(|n| (Just(n), permutation(n))),
        seed in any::<u64>(),
    ) {
        let g = sample_er(n, 0.5, SeedSpec::new(seed, 1)).unwrap();
        let gp = g.permuted(&perm);
        prop_assert_eq!(signed_triangles(&g), signed_triangles(&gp));
        prop_assert_eq!(signed_triangles_trace(&g), signed_triangles_trace(&gp));
        let m = sample_gaussian_matrix(n, SeedSpec::new(seed, 2));
        let a = trace_cube(&m);
        prop_assert!((a - trace_cube(&m.permuted(&perm))).abs() <= 1e-10 * a.abs().max(1.0));
        prop_assert!((a - trace_cube_triangles(&m)).abs() <= 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn pair_interaction_is_symmetric(
        gh in (2usize..30).prop_flat_map(|n| (prop::collection::vec(-3.0f64..3.0, n), prop::collection::vec(-3.0f64..3.0, n))),
        u in 0.0f64..0.5,
    ) {
        let (g, h) = gh;
        prop_assert_eq!(pair_interaction(&g, &h, u).unwrap(), pair_interaction(&h, &g, u).unwrap());
    }

    #[test]
    fn truncated_draws_respect_bounds(n in 2usize..40, a in 1.0f64..4.0, seed in any::<u64>()) {
        let ts = TruncationSet::new(a, n).unwrap();
        let (g, _) = sample_truncated_gaussian(&ts, SeedSpec::new(seed, 0)).unwrap();
        let (h, _) = sample_truncated_gaussian(&ts, SeedSpec::new(seed, 1)).unwrap();
        prop_assert!(in_truncation(&g, &ts).unwrap() && in_truncation(&h, &ts).unwrap());
        let (_, y) = xy_values(&g, &h).unwrap();
        let bound = (2.0 * a * n as f64).powi(2);
        prop_assert!(y.abs() <= bound);
        let mut quartic = 0.0;
        for (i, j) in pairs(n) {
            quartic += (g[i] * g[j] * h[i] * h[j]).powi(2);
        }
        prop_assert!(quartic <= 9.0 * bound);
    }

    #[test]
    fn file_formats_round_trip(n in 1usize..30, p in 0.01f64..0.99, seed in any::<u64>()) {
        let g = sample_er(n, p, SeedSpec::new(seed, 3)).unwrap();
        let mut buf = Vec::new();
        write_graph(&g, &mut buf).unwrap();
        prop_assert_eq!(read_graph(buf.as_slice()).unwrap(), g);
        let m = sample_gaussian_matrix(n, SeedSpec::new(seed, 4));
        let mut buf = Vec::new();
        write_matrix(&m, &mut buf).unwrap();
        prop_assert_eq!(read_matrix(&buf).unwrap(), m);
    }
}
