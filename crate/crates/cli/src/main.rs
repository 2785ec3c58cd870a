use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use geodetect_core::divergence::{chi2_truncated_mc, tv_lower_bound_cdf_gap, Chi2Options};
use geodetect_core::harness::{run_experiment, run_peel_diagnostics, ExperimentConfig};
use geodetect_core::io::{read_sample_file, read_stats, save_graph, save_matrix, SampleFile};
use geodetect_core::oracle::{run_suite, Suite};
use geodetect_core::quantile::{solve_threshold_cf, solve_threshold_mc, QuantileResult, DEFAULT_MC_SAMPLES};
use geodetect_core::sampling::{
    sample_er, sample_gaussian_matrix, sample_spiked, sample_wishart_via, threshold_graph, GramChannel,
};
use geodetect_core::statistics::{run_test, Sample, StatisticName};
use geodetect_core::{SeedSpec, Spectrum};

#[derive(Parser)]
#[command(name = "geodetect", version, about = "Detect latent geometry in random graphs and matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Mc,
    Cf,
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphModel {
    /// Anisotropic random geometric graph.
    Rgg,
    /// Erdős–Rényi G(n, p).
    Er,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatrixKind {
    Wishart,
    Gaussian,
    Spiked,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a key = value config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides output_path from the config.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sample a graph and write it in the rgg-graph text format.
    GenGraph {
        #[arg(long, default_value = "rgg")]
        model: GraphModel,
        #[arg(long, default_value = "flat:16")]
        spectrum: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Sample a symmetric matrix and write it in the symmat binary format.
    GenMatrix {
        #[arg(long, default_value = "wishart")]
        kind: MatrixKind,
        #[arg(long, default_value = "flat:16")]
        spectrum: String,
        #[arg(long)]
        n: usize,
        /// Spike strength for --kind spiked.
        #[arg(long, default_value_t = 0.0)]
        u: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Solve for the threshold t with P(⟨X, X'⟩ ≥ t) = p.
    Threshold {
        #[arg(long)]
        spectrum: String,
        #[arg(long)]
        p: f64,
        /// Defaults to cf up to dimension 10⁵ and mc above.
        #[arg(long)]
        method: Option<Method>,
        #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a test statistic on a graph or matrix file; prints one JSON line.
    Stat {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        statistic: String,
        #[arg(long, default_value_t = 0.05)]
        fpr: f64,
    },
    /// Monte Carlo truncated χ² between the spiked and plain Gaussian ensembles.
    Chi2 {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        u: f64,
        #[arg(long)]
        a: Option<f64>,
        #[arg(long, default_value_t = 100_000)]
        reps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Empirical-CDF gap between two statistic samples (one value per line).
    Tvgap {
        #[arg(long)]
        file0: PathBuf,
        #[arg(long)]
        file1: PathBuf,
    },
    /// Peel diagnostics of a spectrum over a grid of n.
    Peel {
        #[arg(long)]
        spectrum: String,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
        n_grid: Vec<usize>,
    },
    /// Run the numerical oracle suites; exits nonzero on any failure.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        /// JSON lines instead of a table.
        #[arg(long)]
        json: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn spectrum(spec: &str) -> Result<Spectrum> {
    Spectrum::from_spec(spec).with_context(|| format!("bad spectrum {spec:?}"))
}

macro_rules! print_json {
    ($value:expr) => {
        println!("{}", serde_json::to_string(&$value)?)
    };
}

fn solve(s: &Spectrum, p: f64, method: Method, samples: usize, tol: f64, seed: u64) -> Result<QuantileResult> {
    Ok(match method {
        Method::Cf => solve_threshold_cf(s, p, tol)?,
        Method::Mc => solve_threshold_mc(s, p, samples, SeedSpec::new(seed, 0))?,
    })
}

fn default_method(s: &Spectrum) -> Method {
    if s.dim() <= 100_000 {
        Method::Cf
    } else {
        Method::Mc
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, output } => {
            let mut cfg = ExperimentConfig::from_file(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            if output.is_some() {
                cfg.output_path = output;
            }
            let out = run_experiment(&cfg)?;
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            for s in &out.summaries {
                writeln!(w, "{}", serde_json::to_string(s)?)?;
            }
            for c in &out.crossings {
                writeln!(w, "{}", serde_json::to_string(c)?)?;
            }
        }
        Command::GenGraph { model, spectrum: spec, n, p, seed, output } => {
            let seed = SeedSpec::new(seed, 0);
            let g = match model {
                GraphModel::Er => sample_er(n, p, seed)?,
                GraphModel::Rgg => {
                    let s = spectrum(&spec)?;
                    let t = solve(&s, p, default_method(&s), DEFAULT_MC_SAMPLES, 1e-9, seed.master_seed)?.t;
                    let w = sample_wishart_via(GramChannel::cheapest(&s, n), &s, n, seed);
                    threshold_graph(&w, t / s.l2(), p)
                }
            };
            save_graph(&g, &output)?;
        }
        Command::GenMatrix { kind, spectrum: spec, n, u, seed, output } => {
            let seed = SeedSpec::new(seed, 0);
            let m = match kind {
                MatrixKind::Wishart => {
                    let s = spectrum(&spec)?;
                    sample_wishart_via(GramChannel::cheapest(&s, n), &s, n, seed)
                }
                MatrixKind::Gaussian => sample_gaussian_matrix(n, seed),
                MatrixKind::Spiked => sample_spiked(n, u, seed)?,
            };
            save_matrix(&m, &output)?;
        }
        Command::Threshold { spectrum: spec, p, method, samples, tol, seed } => {
            let s = spectrum(&spec)?;
            let method = method.unwrap_or_else(|| default_method(&s));
            println!("{}", solve(&s, p, method, samples, tol, seed)?.record_line());
        }
        Command::Stat { input, statistic, fpr } => {
            let stat: StatisticName = statistic.parse()?;
            let file = read_sample_file(&input).with_context(|| format!("reading {}", input.display()))?;
            let report = match &file {
                SampleFile::Graph(g) => run_test(Sample::Graph(g), stat, fpr)?,
                SampleFile::Matrix(m) => run_test(Sample::Matrix(m), stat, fpr)?,
            };
            print_json!(report);
        }
        Command::Chi2 { n, u, a, reps, seed } => {
            print_json!(chi2_truncated_mc(n, u, a, reps, SeedSpec::new(seed, 0), Chi2Options::default())?);
        }
        Command::Tvgap { file0, file1 } => {
            let s0 = read_stats(&file0).with_context(|| format!("reading {}", file0.display()))?;
            let s1 = read_stats(&file1).with_context(|| format!("reading {}", file1.display()))?;
            print_json!(tv_lower_bound_cdf_gap(&s0, &s1)?);
        }
        Command::Peel { spectrum: spec, n_grid } => {
            print_json!(run_peel_diagnostics(&spectrum(&spec)?, &n_grid)?);
        }
        Command::Verify { suite, json, seed } => {
            let suite: Suite = suite.parse()?;
            let reports = run_suite(suite, SeedSpec::new(seed, 0))?;
            for r in &reports {
                if json {
                    print_json!(r);
                } else {
                    println!("{r}");
                }
            }
            let failed = reports.iter().filter(|r| !r.passed).count();
            if !json {
                println!("{} checks, {failed} failed", reports.len());
            }
            if failed > 0 {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
