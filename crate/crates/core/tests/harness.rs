use std::fs;

use geodetect_core::harness::{
    meta_path, replicate_seed, run_experiment, run_peel_diagnostics, summarize, Arm, ExperimentConfig,
    ExperimentKind,
};
use geodetect_core::sampling::{sample_er, sample_wishart_via, threshold_graph, GramChannel};
use geodetect_core::statistics::signed_triangles;
use geodetect_core::Spectrum;

fn small_config(path: Option<std::path::PathBuf>) -> ExperimentConfig {
    ExperimentConfig {
        experiment_kind: ExperimentKind::PowerCurve,
        spectrum_spec: "power:40:0.5".into(),
        n_grid: vec![6, 10],
        p: 0.3,
        replicates: 25,
        master_seed: 7,
        output_path: path,
        ..Default::default()
    }
}

#[test]
fn resumes_from_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("runs.jsonl");
    let full = run_experiment(&small_config(None)).unwrap();

    let cfg = small_config(Some(path.clone()));
    let first = run_experiment(&cfg).unwrap();
    assert_eq!(first.resumed, 0);
    assert!(meta_path(&path).exists());

    // Keep a prefix of the file plus a torn line, as if the run had crashed.
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let keep = lines.len() / 3;
    let mut partial = lines[..keep].join("\n");
    partial.push('\n');
    partial.push_str(&lines[keep][..lines[keep].len() / 2]);
    fs::write(&path, partial).unwrap();

    let resumed = run_experiment(&cfg).unwrap();
    assert_eq!(resumed.resumed, keep);
    assert_eq!(resumed.summaries, full.summaries);
    assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), lines.len());

    // Rerunning a complete output recomputes nothing.
    let again = run_experiment(&cfg).unwrap();
    assert_eq!(again.resumed, lines.len());
    assert_eq!(again.summaries, full.summaries);
}

#[test]
fn output_of_another_config_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("runs.jsonl");
    run_experiment(&small_config(Some(path.clone()))).unwrap();
    let mut other = small_config(Some(path));
    other.replicates = 3;
    assert!(run_experiment(&other).is_err());
}

#[test]
fn aggregates_ignore_record_order() {
    let out = run_experiment(&small_config(None)).unwrap();
    let mut shuffled = out.records.clone();
    shuffled.reverse();
    shuffled.rotate_left(7);
    assert_eq!(summarize(&shuffled), out.summaries);
}

#[test]
fn record_reproducible_from_keys() {
    let cfg = small_config(None);
    let out = run_experiment(&cfg).unwrap();
    let s = Spectrum::power(40, 0.5).unwrap();
    let t = geodetect_core::harness::solve_threshold(&cfg, &s, 0).unwrap();
    for r in out.records.iter().filter(|r| r.replicate % 7 == 3) {
        let seed = replicate_seed(cfg.master_seed, r.point.index, r.replicate, r.arm);
        let g = match r.arm {
            Arm::Null => sample_er(r.point.n, cfg.p, seed).unwrap(),
            Arm::Alternative => {
                let channel = GramChannel::cheapest(&s, r.point.n);
                threshold_graph(&sample_wishart_via(channel, &s, r.point.n, seed), t / s.l2(), cfg.p)
            }
        };
        assert_eq!(signed_triangles(&g), r.statistic);
        assert_eq!(r.config_hash, cfg.config_hash());
        let signal = (r.point.n as f64).powi(3) / r.point.d_eff;
        assert!((signal - r.point.signal).abs() <= 1e-12 * signal);
    }
}

#[test]
fn chi2_scan_and_null_calibration() {
    let cfg = ExperimentConfig {
        experiment_kind: ExperimentKind::Chi2Scan,
        n_grid: vec![8],
        u_grid: vec![0.1, 0.15],
        replicates: 200_000,
        ..Default::default()
    };
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.summaries.len(), 2);
    assert!(out.summaries.iter().all(|s| s.chi2.is_some()));
    let cfg = ExperimentConfig {
        experiment_kind: ExperimentKind::NullCalibration,
        n_grid: vec![12],
        replicates: 50,
        ..Default::default()
    };
    let out = run_experiment(&cfg).unwrap();
    assert!(out.records.iter().all(|r| r.arm == Arm::Null));
    assert_eq!(out.records.len(), 50);
}

#[test]
fn phase_diagram_requires_parametric_family() {
    let text = "experiment_kind = phase_diagram\nspectrum_spec = flat:64\n";
    assert!(ExperimentConfig::parse(text).is_err());
    let text = "experiment_kind = phase_diagram\nspectrum_spec = power:{d}:{gamma}\nd_grid = 64\ngamma_grid =\n";
    assert!(ExperimentConfig::parse(text).is_err());
    let text = "experiment_kind = phase_diagram\nspectrum_spec = flat:{d}\nd_grid = 64, 256\nn_grid = 6, 12, 24\nreplicates = 40\n";
    let out = run_experiment(&ExperimentConfig::parse(text).unwrap()).unwrap();
    assert_eq!(out.summaries.len(), 6);
    assert_eq!(out.crossings.len(), 1);
    assert!(out.summaries.iter().all(|s| s.point.d_eff == s.point.d as f64));
}

#[test]
fn peel_diagnostics_are_deterministic() {
    let s = Spectrum::power(500, 0.4).unwrap();
    let a = run_peel_diagnostics(&s, &[4, 8, 16]).unwrap();
    let b = run_peel_diagnostics(&s, &[4, 8, 16]).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.u_sequence.len(), a.r);
}
