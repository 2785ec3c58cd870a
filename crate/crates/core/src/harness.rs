//! Experiment orchestration: power curves, phase diagrams, null calibration,
//! χ² scans and the Wishart-vs-Gaussian comparison.
//!
//! Every replicate draws from its own stream, keyed by (point, replicate,
//! arm), so records can be produced in any order and a partially written
//! output file can be resumed.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::divergence::{chi2_truncated_mc, tv_lower_bound_cdf_gap, Chi2Estimate, Chi2Options, TvEstimate};
use crate::error::{Error, Result};
use crate::quantile::{solve_threshold_cf, solve_threshold_mc, QuantileMethod, DEFAULT_MC_SAMPLES};
use crate::rng::{stable_hash, SeedSpec};
use crate::sampling::{
    sample_er, sample_gaussian_matrix, sample_wishart_via, threshold_graph, GramChannel,
};
use crate::spectrum::{Spectrum, SpectrumSpec};
use crate::statistics::{run_test, Sample, StatisticName};

/// Points above this dimension are recorded as skipped rather than run.
pub const MAX_DIMENSION: usize = 10_000_000;
pub const SKIPPED_BUDGET: &str = "skipped: desk-scale budget";
/// Largest dimension for which the automatic quantile choice is CF inversion.
const CF_MAX_DIM: usize = 100_000;
const QUANTILE_TOL: f64 = 1e-9;
/// "n³ ≪ d_eff" is read as n³ ≤ d_eff / 10 in peel diagnostics.
pub const SUFFICIENT_MARGIN: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    PowerCurve,
    PhaseDiagram,
    NullCalibration,
    Chi2Scan,
    WishartVsGaussian,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::PowerCurve => "power_curve",
            Self::PhaseDiagram => "phase_diagram",
            Self::NullCalibration => "null_calibration",
            Self::Chi2Scan => "chi2_scan",
            Self::WishartVsGaussian => "wishart_vs_gaussian",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Self::PowerCurve,
            Self::PhaseDiagram,
            Self::NullCalibration,
            Self::Chi2Scan,
            Self::WishartVsGaussian,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| Error::Config(format!("unknown experiment_kind {s:?}")))
    }
}

/// Experiment description. `spectrum_spec` may contain the placeholders
/// `{d}` and `{gamma}`, expanded over `d_grid` and `gamma_grid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment_kind: ExperimentKind,
    pub spectrum_spec: String,
    pub n_grid: Vec<usize>,
    pub p: f64,
    pub replicates: usize,
    pub false_positive_rate: f64,
    pub master_seed: u64,
    pub output_path: Option<PathBuf>,
    pub d_grid: Vec<usize>,
    pub gamma_grid: Vec<String>,
    /// Spike strengths for `chi2_scan`.
    pub u_grid: Vec<f64>,
    /// Truncation level for `chi2_scan`; default (u²n)^{−1/4} clamped at 1.
    pub truncation_a: Option<f64>,
    /// `None` picks automatically: exact symmetry at p = ½, CF inversion up
    /// to d = 10⁵, Monte Carlo beyond.
    pub quantile_method: Option<QuantileMethod>,
    pub quantile_samples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment_kind: ExperimentKind::PowerCurve,
            spectrum_spec: "flat:32".into(),
            n_grid: vec![32],
            p: 0.5,
            replicates: 100,
            false_positive_rate: 0.05,
            master_seed: 0,
            output_path: None,
            d_grid: Vec::new(),
            gamma_grid: Vec::new(),
            u_grid: Vec::new(),
            truncation_a: None,
            quantile_method: None,
            quantile_samples: DEFAULT_MC_SAMPLES,
        }
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {s:?}")))
        })
        .collect()
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl ExperimentConfig {
    /// Flat `key = value` text; `#` starts a comment, lists are comma
    /// separated. Unknown keys are an error.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", k + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "experiment_kind" => cfg.experiment_kind = value.parse()?,
                "spectrum_spec" => cfg.spectrum_spec = value.to_string(),
                "n_grid" => cfg.n_grid = parse_list(key, value)?,
                "p" => cfg.p = parse_one(key, value)?,
                "replicates" => cfg.replicates = parse_one(key, value)?,
                "false_positive_rate" => cfg.false_positive_rate = parse_one(key, value)?,
                "master_seed" => cfg.master_seed = parse_one(key, value)?,
                "output_path" => cfg.output_path = Some(PathBuf::from(value)),
                "d_grid" => cfg.d_grid = parse_list(key, value)?,
                "gamma_grid" => cfg.gamma_grid = parse_list(key, value)?,
                "u_grid" => cfg.u_grid = parse_list(key, value)?,
                "truncation_a" => cfg.truncation_a = Some(parse_one(key, value)?),
                "quantile_method" => {
                    cfg.quantile_method = match value {
                        "auto" => None,
                        "mc" => Some(QuantileMethod::MonteCarlo),
                        "cf" => Some(QuantileMethod::CfInversion),
                        _ => return Err(Error::Config(format!("quantile_method: {value:?}"))),
                    }
                }
                "quantile_samples" => cfg.quantile_samples = parse_one(key, value)?,
                _ => return Err(Error::Config(format!("line {}: unknown key {key:?}", k + 1))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.replicates < 1 {
            return fail("replicates must be at least 1");
        }
        if self.n_grid.is_empty() {
            return fail("n_grid is empty");
        }
        let min_n = if self.experiment_kind == ExperimentKind::Chi2Scan { 2 } else { 3 };
        if self.n_grid.iter().any(|&n| n < min_n) {
            return fail(&format!("every n must be at least {min_n}"));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return fail("p must lie in (0, 1)");
        }
        if !(self.false_positive_rate > 0.0 && self.false_positive_rate < 0.5) {
            return fail("false_positive_rate must lie in (0, 0.5)");
        }
        let has_d = self.spectrum_spec.contains("{d}");
        let has_gamma = self.spectrum_spec.contains("{gamma}");
        if has_d && self.d_grid.is_empty() {
            return fail("spectrum_spec uses {d} but d_grid is empty");
        }
        if has_gamma && self.gamma_grid.is_empty() {
            return fail("spectrum_spec uses {gamma} but gamma_grid is empty");
        }
        match self.experiment_kind {
            ExperimentKind::PhaseDiagram if !(has_d || has_gamma) => {
                fail("phase_diagram needs a parametric spectrum_spec with {d} and/or {gamma}")
            }
            ExperimentKind::Chi2Scan if self.u_grid.is_empty() => fail("u_grid is empty"),
            ExperimentKind::Chi2Scan if self.u_grid.iter().any(|u| !(*u > 0.0 && *u < 1.0)) => {
                fail("every u must lie in (0, 1)")
            }
            _ => Ok(()),
        }
    }

    /// Hex SHA-256 prefix of the canonical JSON form, ignoring the output path.
    pub fn config_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_path = None;
        let json = serde_json::to_vec(&canonical).expect("config serialises");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    /// Family labels (template with `{gamma}` filled in) and the concrete
    /// spectrum strings, in d-major order.
    fn expand_spectra(&self) -> Vec<(String, String)> {
        let ds: Vec<Option<usize>> = if self.spectrum_spec.contains("{d}") {
            self.d_grid.iter().copied().map(Some).collect()
        } else {
            vec![None]
        };
        let gammas: Vec<Option<&str>> = if self.spectrum_spec.contains("{gamma}") {
            self.gamma_grid.iter().map(|g| Some(g.as_str())).collect()
        } else {
            vec![None]
        };
        let mut out = Vec::new();
        for d in &ds {
            for g in &gammas {
                let mut family = self.spectrum_spec.clone();
                if let Some(g) = g {
                    family = family.replace("{gamma}", g);
                }
                let concrete = match d {
                    Some(d) => family.replace("{d}", &d.to_string()),
                    None => family.clone(),
                };
                out.push((family, concrete));
            }
        }
        out
    }
}

/// Coordinates of one experimental point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub index: usize,
    pub n: usize,
    /// Concrete spectrum string, or `spiked` for χ² points.
    pub spectrum: String,
    pub family: String,
    pub d: usize,
    pub d_eff: f64,
    /// n³ / d_eff.
    pub signal: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
}

impl Point {
    pub fn recomputed_signal(&self) -> f64 {
        (self.n as f64).powi(3) / self.d_eff
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Null,
    Alternative,
}

impl Arm {
    fn tag(self) -> u64 {
        match self {
            Self::Null => 0,
            Self::Alternative => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub config_hash: String,
    pub point: Point,
    pub replicate: usize,
    pub arm: Arm,
    pub statistic: f64,
    pub reject: bool,
    pub wall_time_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi2: Option<Chi2Estimate>,
}

/// Stream for one replicate: a pure function of the master seed and keys.
pub fn replicate_seed(master_seed: u64, point: usize, replicate: usize, arm: Arm) -> SeedSpec {
    SeedSpec::new(
        master_seed,
        stable_hash(&[point as u64, replicate as u64, arm.tag()]),
    )
}

/// Per-point aggregate over the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub point: Point,
    pub null_count: usize,
    pub alt_count: usize,
    pub fpr: Option<f64>,
    pub fpr_stderr: Option<f64>,
    pub power: Option<f64>,
    pub power_stderr: Option<f64>,
    pub null_mean: Option<f64>,
    pub null_var: Option<f64>,
    pub tv_gap: Option<TvEstimate>,
    pub chi2: Option<Chi2Estimate>,
    pub error: Option<String>,
}

fn proportion(hits: usize, count: usize) -> (Option<f64>, Option<f64>) {
    if count == 0 {
        return (None, None);
    }
    let p = hits as f64 / count as f64;
    (Some(p), Some((p * (1.0 - p) / count as f64).sqrt()))
}

/// Aggregate records per point. Records are sorted by key first, so the
/// result does not depend on the order they were produced in.
pub fn summarize(records: &[ExperimentRecord]) -> Vec<PointSummary> {
    let mut by_point: BTreeMap<usize, Vec<&ExperimentRecord>> = BTreeMap::new();
    for r in records {
        by_point.entry(r.point.index).or_default().push(r);
    }
    by_point
        .into_values()
        .map(|mut rs| {
            rs.sort_by_key(|r| (r.arm, r.replicate));
            let error = rs.iter().find_map(|r| r.error.clone());
            let ok: Vec<_> = rs.iter().filter(|r| r.error.is_none()).collect();
            let null: Vec<f64> = ok.iter().filter(|r| r.arm == Arm::Null).map(|r| r.statistic).collect();
            let alt: Vec<f64> = ok
                .iter()
                .filter(|r| r.arm == Arm::Alternative && r.chi2.is_none())
                .map(|r| r.statistic)
                .collect();
            let null_hits = ok.iter().filter(|r| r.arm == Arm::Null && r.reject).count();
            let alt_hits = ok
                .iter()
                .filter(|r| r.arm == Arm::Alternative && r.chi2.is_none() && r.reject)
                .count();
            let (fpr, fpr_stderr) = proportion(null_hits, null.len());
            let (power, power_stderr) = proportion(alt_hits, alt.len());
            let (null_mean, null_var) = if null.len() >= 2 {
                let m = null.iter().sum::<f64>() / null.len() as f64;
                let v = null.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (null.len() - 1) as f64;
                (Some(m), Some(v))
            } else {
                (None, None)
            };
            let tv_gap = if !null.is_empty() && !alt.is_empty() {
                tv_lower_bound_cdf_gap(&null, &alt).ok()
            } else {
                None
            };
            PointSummary {
                point: rs[0].point.clone(),
                null_count: null.len(),
                alt_count: alt.len(),
                fpr,
                fpr_stderr,
                power,
                power_stderr,
                null_mean,
                null_var,
                tv_gap,
                chi2: ok.iter().find_map(|r| r.chi2),
                error,
            }
        })
        .collect()
}

/// Logistic regression of reject on log(signal).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub intercept: f64,
    pub slope: f64,
    /// Signal at which the fitted power is ½.
    pub crossing_signal: f64,
}

/// Fit P(reject) = σ(b₀ + b₁·log signal) by Newton's method on the binomial
/// likelihood of (signal, rejections, trials) triples. A tiny ridge on the
/// slope keeps perfectly separated data finite.
pub fn fit_crossing(points: &[(f64, usize, usize)]) -> Result<LogisticFit> {
    let usable: Vec<_> = points.iter().filter(|p| p.2 > 0 && p.0 > 0.0).collect();
    if usable.len() < 2 {
        return Err(Error::NonConvergence("crossing fit needs two points with trials".into()));
    }
    let total: f64 = usable.iter().map(|p| p.2 as f64).sum();
    let centre = usable.iter().map(|p| p.0.ln() * p.2 as f64).sum::<f64>() / total;
    let ridge = 1e-6 * total;
    let (mut b0, mut b1) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let (mut g0, mut g1) = (0.0, -ridge * b1);
        let (mut h00, mut h01, mut h11) = (0.0, 0.0, ridge);
        for &&(s, k, m) in &usable {
            let x = s.ln() - centre;
            let mu = 1.0 / (1.0 + (-(b0 + b1 * x)).exp());
            let m = m as f64;
            let r = k as f64 - m * mu;
            g0 += r;
            g1 += r * x;
            let w = m * mu * (1.0 - mu);
            h00 += w;
            h01 += w * x;
            h11 += w * x * x;
        }
        let det = h00 * h11 - h01 * h01;
        if !(det.is_finite() && det > 0.0) {
            return Err(Error::NonConvergence("singular crossing fit".into()));
        }
        let d0 = (h11 * g0 - h01 * g1) / det;
        let d1 = (h00 * g1 - h01 * g0) / det;
        // Damp large steps; separated data pushes the slope towards infinity slowly.
        let scale = (1.0f64).min(5.0 / d0.abs().max(d1.abs()).max(1e-300));
        b0 += scale * d0;
        b1 += scale * d1;
        if d0.abs().max(d1.abs()) < 1e-10 {
            break;
        }
    }
    if !(b1 > 0.0) {
        return Err(Error::NonConvergence(format!(
            "fitted power is not increasing in signal (slope {b1})"
        )));
    }
    let intercept = b0 - b1 * centre;
    Ok(LogisticFit {
        intercept,
        slope: b1,
        crossing_signal: (-intercept / b1).exp(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyCrossing {
    pub family: String,
    pub fit: Option<LogisticFit>,
    pub error: Option<String>,
}

/// Crossing fit per family over the alternative-arm rejections.
pub fn family_crossings(summaries: &[PointSummary]) -> Vec<FamilyCrossing> {
    let mut families: BTreeMap<&str, Vec<(f64, usize, usize)>> = BTreeMap::new();
    for s in summaries {
        if let Some(power) = s.power {
            let hits = (power * s.alt_count as f64).round() as usize;
            families
                .entry(&s.point.family)
                .or_default()
                .push((s.point.signal, hits, s.alt_count));
        }
    }
    families
        .into_iter()
        .map(|(family, pts)| match fit_crossing(&pts) {
            Ok(fit) => FamilyCrossing {
                family: family.to_string(),
                fit: Some(fit),
                error: None,
            },
            Err(e) => FamilyCrossing {
                family: family.to_string(),
                fit: None,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub config_hash: String,
    pub records: Vec<ExperimentRecord>,
    pub summaries: Vec<PointSummary>,
    pub crossings: Vec<FamilyCrossing>,
    /// Records found in the output file and not recomputed.
    pub resumed: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    config_hash: String,
    config: ExperimentConfig,
    code_version: String,
}

pub fn meta_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Append-only JSON-lines store with a metadata sidecar.
struct Store {
    file: fs::File,
}

impl Store {
    fn open(path: &Path, cfg: &ExperimentConfig, hash: &str) -> Result<(Self, Vec<ExperimentRecord>)> {
        let meta = meta_path(path);
        if meta.exists() {
            let m: Meta = serde_json::from_slice(&fs::read(&meta)?)?;
            if m.config_hash != hash {
                return Err(Error::Config(format!(
                    "{} belongs to config {}, not {hash}",
                    path.display(),
                    m.config_hash
                )));
            }
        } else {
            let m = Meta {
                config_hash: hash.to_string(),
                config: cfg.clone(),
                code_version: env!("CARGO_PKG_VERSION").to_string(),
            };
            fs::write(&meta, serde_json::to_vec_pretty(&m)?)?;
        }
        let mut existing = Vec::new();
        if path.exists() {
            let lines: Vec<String> = BufReader::new(fs::File::open(path)?).lines().collect::<std::io::Result<_>>()?;
            let last = lines.len().saturating_sub(1);
            for (k, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<ExperimentRecord>(line) {
                    Ok(r) if r.config_hash == hash => existing.push(r),
                    Ok(_) => {}
                    // A crash can leave a torn final line; anything else is corruption.
                    Err(e) if k == last => warn!("ignoring torn final line of {}: {e}", path.display()),
                    Err(e) => return Err(Error::Parse(format!("{}:{}: {e}", path.display(), k + 1))),
                }
            }
            if lines.last().is_some_and(|l| serde_json::from_str::<ExperimentRecord>(l).is_err()) {
                // Rewrite without the torn line so appends start on a fresh line.
                let mut body = String::new();
                for l in &lines[..last] {
                    body.push_str(l);
                    body.push('\n');
                }
                fs::write(path, body)?;
            }
        }
        let file = fs::OpenOptions::new().create(true).append(true).open(path)?;
        Ok((Self { file }, existing))
    }

    fn append(&mut self, records: &[ExperimentRecord]) -> Result<()> {
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        self.file.write_all(&buf)?;
        self.file.flush()?;
        Ok(())
    }
}

/// Worker pool sized by `GEODETECT_THREADS`, defaulting to all cores.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("GEODETECT_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("GEODETECT_THREADS={v:?} is not a count")))?;
        b = b.num_threads(n.max(1));
    }
    b.build().map_err(|e| Error::Config(e.to_string()))
}

type Key = (usize, usize, Arm);

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    hash: String,
    store: Option<Store>,
    done: HashSet<Key>,
    records: Vec<ExperimentRecord>,
    resumed: usize,
    pool: rayon::ThreadPool,
}

impl<'a> Runner<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let hash = cfg.config_hash();
        let (store, existing) = match &cfg.output_path {
            Some(p) => {
                let (s, e) = Store::open(p, cfg, &hash)?;
                (Some(s), e)
            }
            None => (None, Vec::new()),
        };
        let done = existing
            .iter()
            .filter(|r| r.error.is_none())
            .map(|r| (r.point.index, r.replicate, r.arm))
            .collect();
        let resumed = existing.len();
        // Failed rows are retried, so they do not survive into the output.
        let records = existing.into_iter().filter(|r| r.error.is_none()).collect();
        Ok(Self {
            cfg,
            hash,
            store,
            done,
            records,
            resumed,
            pool: worker_pool()?,
        })
    }

    fn push(&mut self, new: Vec<ExperimentRecord>) -> Result<()> {
        if let Some(s) = &mut self.store {
            s.append(&new)?;
        }
        self.records.extend(new);
        Ok(())
    }

    fn error_row(&mut self, point: &Point, msg: String) -> Result<()> {
        warn!("point {} ({}, n={}): {msg}", point.index, point.spectrum, point.n);
        let row = ExperimentRecord {
            config_hash: self.hash.clone(),
            point: point.clone(),
            replicate: 0,
            arm: Arm::Alternative,
            statistic: 0.0,
            reject: false,
            wall_time_ms: 0,
            error: Some(msg),
            chi2: None,
        };
        self.push(vec![row])
    }

    /// Run the missing replicates of `arms` at `point`; `f` maps a seed and
    /// arm to (statistic, reject).
    fn replicates<F>(&mut self, point: &Point, arms: &[Arm], f: F) -> Result<()>
    where
        F: Fn(SeedSpec, Arm) -> Result<(f64, bool)> + Sync,
    {
        let todo: Vec<(usize, Arm)> = arms
            .iter()
            .flat_map(|&a| (0..self.cfg.replicates).map(move |r| (r, a)))
            .filter(|&(r, a)| !self.done.contains(&(point.index, r, a)))
            .collect();
        if todo.is_empty() {
            return Ok(());
        }
        let (master, hash) = (self.cfg.master_seed, &self.hash);
        let results: Vec<Result<ExperimentRecord>> = self.pool.install(|| {
            todo.par_iter()
                .map(|&(r, arm)| {
                    let start = Instant::now();
                    let (statistic, reject) = f(replicate_seed(master, point.index, r, arm), arm)?;
                    Ok(ExperimentRecord {
                        config_hash: hash.clone(),
                        point: point.clone(),
                        replicate: r,
                        arm,
                        statistic,
                        reject,
                        wall_time_ms: start.elapsed().as_millis() as u64,
                        error: None,
                        chi2: None,
                    })
                })
                .collect()
        });
        match results.into_iter().collect::<Result<Vec<_>>>() {
            Ok(rows) => self.push(rows),
            Err(e) => self.error_row(point, e.to_string()),
        }
    }

    fn finish(self) -> ExperimentOutput {
        let summaries = summarize(&self.records);
        let crossings = if self.cfg.experiment_kind == ExperimentKind::PhaseDiagram {
            family_crossings(&summaries)
        } else {
            Vec::new()
        };
        ExperimentOutput {
            config_hash: self.hash,
            records: self.records,
            summaries,
            crossings,
            resumed: self.resumed,
        }
    }
}

/// Points over (spectrum, n) in spectrum-major order. A spectrum that fails
/// to build becomes a point carrying its error.
fn spectral_points(cfg: &ExperimentConfig) -> Vec<(Point, std::result::Result<Spectrum, String>)> {
    let mut out = Vec::new();
    for (family, concrete) in cfg.expand_spectra() {
        let built = SpectrumSpec::parse(&concrete).and_then(|spec| {
            match spec.dim_hint() {
                Some(d) if d > MAX_DIMENSION => Err(Error::Config(SKIPPED_BUDGET.into())),
                _ => spec.build(),
            }
        });
        let built: std::result::Result<Spectrum, String> = built.map_err(|e| match e {
            Error::Config(m) if m == SKIPPED_BUDGET => m,
            e => e.to_string(),
        });
        let (d, d_eff) = match &built {
            Ok(s) => (s.dim(), s.effective_dimension()),
            Err(_) => (
                SpectrumSpec::parse(&concrete).ok().and_then(|s| s.dim_hint()).unwrap_or(0),
                f64::NAN,
            ),
        };
        for &n in &cfg.n_grid {
            let point = Point {
                index: out.len(),
                n,
                spectrum: concrete.clone(),
                family: family.clone(),
                d,
                d_eff: if d_eff.is_nan() { 0.0 } else { d_eff },
                signal: if d_eff.is_nan() { 0.0 } else { (n as f64).powi(3) / d_eff },
                u: None,
            };
            out.push((point, built.clone()));
        }
    }
    out
}

/// t_{p,α}: exact at p = ½ by symmetry of ⟨X, X'⟩, otherwise by the chosen
/// or automatically selected solver.
pub fn solve_threshold(cfg: &ExperimentConfig, s: &Spectrum, stream: u64) -> Result<f64> {
    if cfg.p == 0.5 && cfg.quantile_method.is_none() {
        return Ok(0.0);
    }
    let method = cfg.quantile_method.unwrap_or(if s.dim() <= CF_MAX_DIM {
        QuantileMethod::CfInversion
    } else {
        QuantileMethod::MonteCarlo
    });
    let r = match method {
        QuantileMethod::CfInversion => solve_threshold_cf(s, cfg.p, QUANTILE_TOL)?,
        QuantileMethod::MonteCarlo => solve_threshold_mc(
            s,
            cfg.p,
            cfg.quantile_samples,
            SeedSpec::new(cfg.master_seed, stable_hash(&[u64::MAX, stream])),
        )?,
    };
    Ok(r.t)
}

/// Signed-triangles test on G(n,p) against the RGG. The RGG sample is the
/// thresholded Wishart through the cheapest Gram channel, which has the
/// same law as thresholding latent inner products directly.
pub fn run_power_curve(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    graph_experiment(cfg, &[Arm::Null, Arm::Alternative])
}

/// Power over a grid of (n, family parameter); the output carries a
/// logistic crossing fit per family.
pub fn run_phase_diagram(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    if cfg.experiment_kind != ExperimentKind::PhaseDiagram {
        return Err(Error::Config("run_phase_diagram needs experiment_kind = phase_diagram".into()));
    }
    graph_experiment(cfg, &[Arm::Null, Arm::Alternative])
}

/// Signed-triangles statistic on G(n,p) only.
pub fn run_null_calibration(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    graph_experiment(cfg, &[Arm::Null])
}

fn graph_experiment(cfg: &ExperimentConfig, arms: &[Arm]) -> Result<ExperimentOutput> {
    let mut runner = Runner::new(cfg)?;
    let mut thresholds: HashMap<String, f64> = HashMap::new();
    let (p, fpr) = (cfg.p, cfg.false_positive_rate);
    let needs_alt = arms.contains(&Arm::Alternative);
    for (point, spectrum) in spectral_points(cfg) {
        info!("point {}: {} n={} signal={:.4}", point.index, point.spectrum, point.n, point.signal);
        let spectrum = match spectrum {
            Ok(s) => s,
            Err(_) if !needs_alt => Spectrum::flat(1)?,
            Err(e) => {
                runner.error_row(&point, e)?;
                continue;
            }
        };
        let t = if needs_alt {
            match thresholds.get(&point.spectrum) {
                Some(&t) => t,
                None => match solve_threshold(cfg, &spectrum, point.index as u64) {
                    Ok(t) => {
                        thresholds.insert(point.spectrum.clone(), t);
                        t
                    }
                    Err(e) => {
                        runner.error_row(&point, format!("quantile solve failed: {e}"))?;
                        continue;
                    }
                },
            }
        } else {
            0.0
        };
        let n = point.n;
        let channel = GramChannel::cheapest(&spectrum, n);
        let scaled_t = t / spectrum.l2();
        runner.replicates(&point, arms, |seed, arm| {
            let g = match arm {
                Arm::Null => sample_er(n, p, seed)?,
                Arm::Alternative => {
                    threshold_graph(&sample_wishart_via(channel, &spectrum, n, seed), scaled_t, p)
                }
            };
            let rep = run_test(Sample::Graph(&g), StatisticName::SignedTriangles, fpr)?;
            Ok((rep.value, rep.reject))
        })?;
    }
    Ok(runner.finish())
}

/// Trace-cube test of M(n) against W(n,α); summaries carry the cdf-gap TV
/// lower bound between the two statistic samples.
pub fn run_wishart_vs_gaussian(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut runner = Runner::new(cfg)?;
    let fpr = cfg.false_positive_rate;
    for (point, spectrum) in spectral_points(cfg) {
        let spectrum = match spectrum {
            Ok(s) => s,
            Err(e) => {
                runner.error_row(&point, e)?;
                continue;
            }
        };
        let n = point.n;
        let channel = GramChannel::cheapest(&spectrum, n);
        runner.replicates(&point, &[Arm::Null, Arm::Alternative], |seed, arm| {
            let m = match arm {
                Arm::Null => sample_gaussian_matrix(n, seed),
                Arm::Alternative => sample_wishart_via(channel, &spectrum, n, seed),
            };
            let rep = run_test(Sample::Matrix(&m), StatisticName::TraceCube, fpr)?;
            Ok((rep.value, rep.reject))
        })?;
    }
    Ok(runner.finish())
}

/// Truncated χ² between the spiked ensemble and M(n) over n_grid × u_grid,
/// `replicates` Monte Carlo pairs per point. Points carry d_eff = u⁻⁶ so that
/// signal = (u³n^{3/2})².
pub fn run_chi2_scan(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut runner = Runner::new(cfg)?;
    let mut index = 0;
    for &n in &cfg.n_grid {
        for &u in &cfg.u_grid {
            let d_eff = u.powi(-6);
            let point = Point {
                index,
                n,
                spectrum: "spiked".into(),
                family: "spiked".into(),
                d: 0,
                d_eff,
                signal: (n as f64).powi(3) / d_eff,
                u: Some(u),
            };
            index += 1;
            if runner.done.contains(&(point.index, 0, Arm::Alternative)) {
                continue;
            }
            let start = Instant::now();
            let seed = replicate_seed(cfg.master_seed, point.index, 0, Arm::Alternative);
            let est = runner.pool.install(|| {
                chi2_truncated_mc(n, u, cfg.truncation_a, cfg.replicates as u64, seed, Chi2Options::default())
            });
            match est {
                Ok(est) => {
                    let row = ExperimentRecord {
                        config_hash: runner.hash.clone(),
                        point,
                        replicate: 0,
                        arm: Arm::Alternative,
                        statistic: est.chi2,
                        reject: false,
                        wall_time_ms: start.elapsed().as_millis() as u64,
                        error: None,
                        chi2: Some(est),
                    };
                    runner.push(vec![row])?;
                }
                Err(e) => runner.error_row(&point, e.to_string())?,
            }
        }
    }
    Ok(runner.finish())
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    match cfg.experiment_kind {
        ExperimentKind::PowerCurve => run_power_curve(cfg),
        ExperimentKind::PhaseDiagram => run_phase_diagram(cfg),
        ExperimentKind::NullCalibration => run_null_calibration(cfg),
        ExperimentKind::Chi2Scan => run_chi2_scan(cfg),
        ExperimentKind::WishartVsGaussian => run_wishart_vs_gaussian(cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeelRow {
    pub n: usize,
    pub n_cubed: f64,
    pub sum_term: f64,
    pub l3_term: f64,
    pub minus_comparison_dim: f64,
    /// n³ ≤ d_eff / [`SUFFICIENT_MARGIN`].
    pub sufficient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeelReport {
    pub dim: usize,
    pub d_eff: f64,
    pub r: usize,
    pub degenerate: bool,
    pub u_sequence: Vec<f64>,
    pub rows: Vec<PeelRow>,
}

/// Deterministic table of the peel quantities per n. A degenerate split is
/// reported with empty rows rather than failing.
pub fn run_peel_diagnostics(s: &Spectrum, n_grid: &[usize]) -> Result<PeelReport> {
    let split = s.split();
    let d_eff = s.effective_dimension();
    let mut report = PeelReport {
        dim: s.dim(),
        d_eff,
        r: split.r,
        degenerate: split.degenerate,
        u_sequence: Vec::new(),
        rows: Vec::new(),
    };
    if split.degenerate {
        return Ok(report);
    }
    report.u_sequence = split.peel_sequence()?.steps().iter().map(|st| st.u).collect();
    for &n in n_grid {
        let proxy = split.peel_bound_proxy(n)?;
        let n_cubed = (n as f64).powi(3);
        report.rows.push(PeelRow {
            n,
            n_cubed,
            sum_term: proxy.sum_term,
            l3_term: proxy.l3_term,
            minus_comparison_dim: proxy.minus_comparison_dim,
            sufficient: n_cubed * SUFFICIENT_MARGIN <= d_eff,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: ExperimentKind) -> ExperimentConfig {
        ExperimentConfig {
            experiment_kind: kind,
            replicates: 20,
            n_grid: vec![8],
            spectrum_spec: "flat:8".into(),
            ..Default::default()
        }
    }

    #[test]
    fn config_parsing_and_validation() {
        let c = ExperimentConfig::parse(
            "experiment_kind = phase_diagram\nspectrum_spec = power:{d}:{gamma}\n\
             n_grid = 8, 16\nd_grid = 64\ngamma_grid = 1/3, 0.5 # comment\nreplicates = 5\n",
        )
        .unwrap();
        assert_eq!(c.n_grid, vec![8, 16]);
        assert_eq!(c.expand_spectra().len(), 2);
        assert_eq!(c.expand_spectra()[0].1, "power:64:1/3");
        let err = ExperimentConfig::parse(
            "experiment_kind = phase_diagram\nspectrum_spec = power:64:{gamma}\n",
        );
        assert!(matches!(err, Err(Error::Config(m)) if m.contains("gamma_grid")));
        assert!(ExperimentConfig::parse("replicates = 0").is_err());
        assert!(ExperimentConfig::parse("n_grid =").is_err());
        assert!(ExperimentConfig::parse("p = 1").is_err());
        assert!(ExperimentConfig::parse("colour = blue").is_err());
    }

    #[test]
    fn hash_ignores_output_path() {
        let mut a = cfg(ExperimentKind::PowerCurve);
        let h = a.config_hash();
        a.output_path = Some("x.jsonl".into());
        assert_eq!(a.config_hash(), h);
        a.replicates += 1;
        assert_ne!(a.config_hash(), h);
    }

    #[test]
    fn one_replicate_gives_one_record_per_arm() {
        let mut c = cfg(ExperimentKind::PowerCurve);
        c.replicates = 1;
        let out = run_experiment(&c).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.records[0].point.d_eff, 8.0);
        for r in &out.records {
            assert!((r.point.signal - r.point.recomputed_signal()).abs() <= 1e-12 * r.point.signal);
        }
    }

    #[test]
    fn records_reproducible_from_keys() {
        let c = cfg(ExperimentKind::WishartVsGaussian);
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        let strip = |o: &ExperimentOutput| -> Vec<(usize, Arm, f64)> {
            let mut v: Vec<_> = o.records.iter().map(|r| (r.replicate, r.arm, r.statistic)).collect();
            v.sort_by(|x, y| x.partial_cmp(y).unwrap());
            v
        };
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn oversized_points_are_skipped() {
        let mut c = cfg(ExperimentKind::PowerCurve);
        c.spectrum_spec = "flat:20000000".into();
        let out = run_experiment(&c).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].error.as_deref(), Some(SKIPPED_BUDGET));
    }

    #[test]
    fn logistic_fit_recovers_crossing() {
        let pts: Vec<(f64, usize, usize)> = [0.1f64, 0.3, 1.0, 3.0, 10.0]
            .iter()
            .map(|&s| {
                let pr = 1.0 / (1.0 + (-2.0 * s.ln()).exp());
                (s, (pr * 10_000.0).round() as usize, 10_000)
            })
            .collect();
        let fit = fit_crossing(&pts).unwrap();
        assert!((fit.crossing_signal - 1.0).abs() < 1e-3, "{fit:?}");
        assert!((fit.slope - 2.0).abs() < 1e-2);
        let separated = [(0.1, 0, 100), (1.0, 0, 100), (10.0, 100, 100)];
        let fit = fit_crossing(&separated).unwrap();
        assert!(fit.crossing_signal > 1.0 && fit.crossing_signal < 10.0);
        assert!(fit_crossing(&[(1.0, 3, 10)]).is_err());
    }

    #[test]
    fn peel_report_flat() {
        let s = Spectrum::flat(300).unwrap();
        let r = run_peel_diagnostics(&s, &[2, 8]).unwrap();
        assert_eq!(r.r, 100);
        // u_t = (200 + t)^{-1/2}: within a factor √1.5 of d^{-1/2}.
        let base = 300f64.powf(-0.5);
        assert!(r.u_sequence.iter().all(|&u| u >= base - 1e-15 && u <= base * 1.5f64.sqrt() + 1e-15));
        assert!(r.rows.iter().all(|row| row.sum_term <= row.l3_term));
        assert!(r.rows[0].sufficient && !r.rows[1].sufficient);
        let deg = run_peel_diagnostics(&Spectrum::new(vec![10.0, 0.1]).unwrap(), &[4]).unwrap();
        assert!(deg.degenerate && deg.rows.is_empty());
    }
}
