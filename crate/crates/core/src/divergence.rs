//! Divergence machinery for the spiked ensemble and empirical TV bounds.
//!
//! The truncated χ² of the mixture M(n,u,μ_S) against M(n) reduces to
//! E_{g,h∼μ_S}[F(g,h)] − 1 where F is the closed-form pair interaction
//! (1−u⁴)^{−n(n−1)/4} exp(u²/(1−u⁴)·X − u⁴/(1−u⁴)·Y). All arithmetic on F is
//! kept in log space until the final `expm1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedSpec;
use crate::sampling::{pairs, SymMatrixSample};
use crate::spectrum::KahanSum;

/// S(a) = { g ∈ ℝⁿ : ‖g‖₂² ≤ (1+a)n, ‖g‖₄⁴ ≤ 3(1+a)n }.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationSet {
    a: f64,
    n: usize,
}

impl TruncationSet {
    pub fn new(a: f64, n: usize) -> Result<Self> {
        if !(a >= 1.0) {
            return Err(Error::OutOfRange {
                name: "a",
                value: a,
                expected: "must be at least 1",
            });
        }
        Ok(Self { a, n })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l2_sq_bound(&self) -> f64 {
        (1.0 + self.a) * self.n as f64
    }

    pub fn l4_4_bound(&self) -> f64 {
        3.0 * (1.0 + self.a) * self.n as f64
    }

    fn contains_unchecked(&self, g: &[f64]) -> bool {
        let (mut s2, mut s4) = (0.0, 0.0);
        for &x in g {
            let x2 = x * x;
            s2 += x2;
            s4 += x2 * x2;
        }
        s2 <= self.l2_sq_bound() && s4 <= self.l4_4_bound()
    }
}

/// Membership in S(a); both inequalities are inclusive.
pub fn in_truncation(g: &[f64], ts: &TruncationSet) -> Result<bool> {
    check_len(ts.n, g.len())?;
    Ok(ts.contains_unchecked(g))
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::LengthMismatch { expected, got });
    }
    Ok(())
}

pub const MAX_REJECTIONS: u64 = 1_000_000;

/// A draw from μ_{S(a)}: standard Gaussian vectors are drawn from one stream
/// until the first lands in S(a). Returns the vector and the attempt count.
pub fn sample_truncated_gaussian(ts: &TruncationSet, seed: SeedSpec) -> Result<(Vec<f64>, u64)> {
    let mut rng = seed.rng();
    let mut g = vec![0.0; ts.n];
    for attempt in 1..=MAX_REJECTIONS {
        rng.fill_gaussian(&mut g);
        if ts.contains_unchecked(&g) {
            return Ok((g, attempt));
        }
    }
    Err(Error::RejectionExhausted {
        attempts: MAX_REJECTIONS,
    })
}

fn check_u_below_one(u: f64) -> Result<()> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::OutOfRange {
            name: "u",
            value: u,
            expected: "must lie in [0, 1)",
        });
    }
    Ok(())
}

/// log dM(n,u,g)/dM(n) at A:
/// Σ_{i<j} [ −log√(1−u²) − (A_ij − u g_i g_j)²/(2(1−u²)) + A_ij²/2 ].
pub fn log_density_ratio_spiked(a: &SymMatrixSample, g: &[f64], u: f64) -> Result<f64> {
    check_u_below_one(u)?;
    check_len(a.n(), g.len())?;
    let v = 1.0 - u * u;
    let half_log = -0.5 * v.ln();
    let mut acc = KahanSum::new();
    for ((i, j), &aij) in pairs(a.n()).zip(a.entries()) {
        let r = aij - u * g[i] * g[j];
        acc.add(half_log - r * r / (2.0 * v) + 0.5 * aij * aij);
    }
    Ok(acc.value())
}

/// X = Σ_{i<j} g_i g_j h_i h_j and Y = ½ Σ_{i<j} (g_i²g_j² + h_i²h_j²),
/// evaluated in O(n) through X = ½(⟨g,h⟩² − Σ g_i²h_i²) and the analogous
/// identity for Y.
pub fn xy_values(g: &[f64], h: &[f64]) -> Result<(f64, f64)> {
    check_len(g.len(), h.len())?;
    Ok(xy_unchecked(g, h))
}

#[inline]
fn xy_unchecked(g: &[f64], h: &[f64]) -> (f64, f64) {
    let (mut gh, mut gh2, mut g2, mut g4, mut h2, mut h4) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in g.iter().zip(h) {
        let (x2, y2) = (x * x, y * y);
        gh += x * y;
        gh2 += x2 * y2;
        g2 += x2;
        g4 += x2 * x2;
        h2 += y2;
        h4 += y2 * y2;
    }
    let x = 0.5 * (gh * gh - gh2);
    let y = 0.25 * ((g2 * g2 - g4) + (h2 * h2 - h4));
    (x, y)
}

/// log of E_{A∼M(n)} [dM(n,u,g)/dM(n) · dM(n,u,h)/dM(n)] in closed form:
/// −n(n−1)/4·log(1−u⁴) + u²/(1−u⁴)·X − u⁴/(1−u⁴)·Y.
pub fn log_pair_interaction(g: &[f64], h: &[f64], u: f64) -> Result<f64> {
    check_u_below_one(u)?;
    let (x, y) = xy_values(g, h)?;
    Ok(log_pair_from_xy(g.len(), x, y, u))
}

#[inline]
fn log_pair_from_xy(n: usize, x: f64, y: f64, u: f64) -> f64 {
    let u2 = u * u;
    let u4 = u2 * u2;
    let denom = 1.0 - u4;
    let pairs = (n * n.saturating_sub(1)) as f64 / 4.0;
    -pairs * (-u4).ln_1p() + u2 / denom * x - u4 / denom * y
}

/// The pair interaction itself; `+∞` when the exponent overflows, in which
/// case [`log_pair_interaction`] still carries the value.
pub fn pair_interaction(g: &[f64], h: &[f64], u: f64) -> Result<f64> {
    log_pair_interaction(g, h, u).map(f64::exp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TvMethod {
    StatisticCdfGap,
    Chi2Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Lower,
    Upper,
}

/// An empirical total-variation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvEstimate {
    /// Point value of the bound, in [0, 1].
    pub bound: f64,
    pub kind: BoundKind,
    /// DKW 95% radius for the cdf gap; delta-method stderr for χ².
    pub stderr: f64,
    pub method: TvMethod,
    pub replicates: u64,
}

impl TvEstimate {
    /// For a lower bound: bound − stderr, floored at 0.
    pub fn certified(&self) -> f64 {
        match self.kind {
            BoundKind::Lower => (self.bound - self.stderr).max(0.0),
            BoundKind::Upper => (self.bound + self.stderr).min(1.0),
        }
    }
}

const DKW_ALPHA: f64 = 0.05;

/// sup_t |P̂₀(T > t) − P̂₁(T > t)| over all thresholds, a lower bound on the
/// TV distance between the generating laws. The reported stderr is the sum of
/// the two 95% DKW radii √(ln(2/0.05)/(2m)).
pub fn tv_lower_bound_cdf_gap(samples0: &[f64], samples1: &[f64]) -> Result<TvEstimate> {
    if samples0.is_empty() || samples1.is_empty() {
        return Err(Error::LengthMismatch {
            expected: 1,
            got: 0,
        });
    }
    if samples0.iter().chain(samples1).any(|x| x.is_nan()) {
        return Err(Error::Parse("samples contain NaN".into()));
    }
    let mut a = samples0.to_vec();
    let mut b = samples1.to_vec();
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut gap: f64 = 0.0;
    while i < a.len() || j < b.len() {
        // advance past every copy of the next distinct value
        let t = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        gap = gap.max((i as f64 / na - j as f64 / nb).abs());
    }
    let radius = |m: f64| ((2.0 / DKW_ALPHA).ln() / (2.0 * m)).sqrt();
    Ok(TvEstimate {
        bound: gap,
        kind: BoundKind::Lower,
        stderr: radius(na) + radius(nb),
        method: TvMethod::StatisticCdfGap,
        replicates: (a.len() + b.len()) as u64,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct Chi2Options {
    /// Operating regime: estimates with u²n above this are flagged unguarded.
    pub guard: f64,
    /// Relative stderr above which the estimate is rejected.
    pub max_rel_stderr: f64,
    pub block: usize,
}

impl Default for Chi2Options {
    fn default() -> Self {
        Self {
            guard: 0.1,
            max_rel_stderr: 0.5,
            block: 4096,
        }
    }
}

/// Result of [`chi2_truncated_mc`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chi2Estimate {
    pub n: usize,
    pub u: f64,
    pub a: f64,
    pub chi2: f64,
    pub chi2_stderr: f64,
    /// TV ≤ ½√χ².
    pub tv: TvEstimate,
    /// Whether u²n respected the guard.
    pub guarded: bool,
    /// Mean rejection-sampler attempts per accepted draw.
    pub attempts_per_draw: f64,
}

/// Default truncation level (u²n)^{−1/4}, clamped to at least 1.
pub fn default_truncation(n: usize, u: f64) -> f64 {
    (u * u * n as f64).powf(-0.25).max(1.0)
}

#[derive(Default, Clone, Copy)]
struct Moments {
    sum: KahanSum,
    sum_sq: KahanSum,
    attempts: u64,
    count: u64,
}

impl Moments {
    fn merge(mut self, other: &Moments) -> Self {
        self.sum.merge(&other.sum);
        self.sum_sq.merge(&other.sum_sq);
        self.attempts += other.attempts;
        self.count += other.count;
        self
    }
}

/// Monte Carlo estimate of χ²(M(n,u,μ_{S(a)}), M(n)) = E_{g,h∼μ_S} F(g,h) − 1.
///
/// Replicate r draws g and h from the sub-streams `seed.derive(r).derive(0|1)`.
/// Each term F − 1 is corrected by the control variate β·X with
/// β = u²/(1−u⁴)·(1−u⁴)^{−n(n−1)/4}; E_{μ_S} X = 0 exactly because S(a) is
/// invariant under coordinate sign flips, so the estimator stays unbiased.
pub fn chi2_truncated_mc(
    n: usize,
    u: f64,
    a: Option<f64>,
    replicates: u64,
    seed: SeedSpec,
    opts: Chi2Options,
) -> Result<Chi2Estimate> {
    check_u_below_one(u)?;
    if n < 2 {
        return Err(Error::OutOfRange {
            name: "n",
            value: n as f64,
            expected: "at least 2",
        });
    }
    if replicates < 2 {
        return Err(Error::OutOfRange {
            name: "replicates",
            value: replicates as f64,
            expected: "at least 2",
        });
    }
    let a = a.unwrap_or_else(|| default_truncation(n, u));
    let ts = TruncationSet::new(a, n)?;
    let guarded = u * u * n as f64 <= opts.guard;
    if !guarded {
        log::warn!(
            "u²n = {:.4} exceeds the guard {}; estimate flagged unguarded",
            u * u * n as f64,
            opts.guard
        );
    }
    let u4 = u.powi(4);
    let beta = u * u / (1.0 - u4) * (-((n * (n - 1)) as f64) / 4.0 * (-u4).ln_1p()).exp();
    let block = opts.block.max(1) as u64;
    let blocks = replicates.div_ceil(block);
    let per_block: Vec<Result<Moments>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut m = Moments::default();
            for r in b * block..((b + 1) * block).min(replicates) {
                let rs = seed.derive(r);
                let (g, ag) = sample_truncated_gaussian(&ts, rs.derive(0))?;
                let (h, ah) = sample_truncated_gaussian(&ts, rs.derive(1))?;
                let (x, y) = xy_unchecked(&g, &h);
                let term = log_pair_from_xy(n, x, y, u).exp_m1() - beta * x;
                m.sum.add(term);
                m.sum_sq.add(term * term);
                m.attempts += ag + ah;
                m.count += 1;
            }
            Ok(m)
        })
        .collect();
    let mut total = Moments::default();
    for m in per_block {
        total = total.merge(&m?);
    }
    let k = total.count as f64;
    let chi2 = total.sum.value() / k;
    let var = ((total.sum_sq.value() / k - chi2 * chi2) * k / (k - 1.0)).max(0.0);
    let chi2_stderr = (var / k).sqrt();
    if !chi2.is_finite() || !chi2_stderr.is_finite() {
        return Err(Error::UnstableEstimate {
            rel_stderr: f64::INFINITY,
            limit: opts.max_rel_stderr,
        });
    }
    if chi2_stderr > 0.0 {
        let rel = chi2_stderr / chi2.abs();
        if rel > opts.max_rel_stderr {
            return Err(Error::UnstableEstimate {
                rel_stderr: rel,
                limit: opts.max_rel_stderr,
            });
        }
    }
    let root = chi2.max(0.0).sqrt();
    let tv_stderr = if root > 0.0 {
        chi2_stderr / (4.0 * root)
    } else {
        0.5 * chi2_stderr.sqrt()
    };
    Ok(Chi2Estimate {
        n,
        u,
        a,
        chi2,
        chi2_stderr,
        tv: TvEstimate {
            bound: (0.5 * root).min(1.0),
            kind: BoundKind::Upper,
            stderr: tv_stderr,
            method: TvMethod::Chi2Mc,
            replicates,
        },
        guarded,
        attempts_per_draw: total.attempts as f64 / (2.0 * k),
    })
}
