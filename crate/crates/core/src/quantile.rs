//! The edge threshold t_{p,α}: the upper p-quantile of ⟨X₁,X₂⟩ = Σ α_i Z_i Z′_i.
//!
//! Two independent solvers are provided. The Monte Carlo solver scales to any
//! dimension; the characteristic-function solver gives a high-precision
//! reference at moderate dimension.

use std::f64::consts::PI;

use rand_distr::{ChiSquared, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_open_unit, Error, Result};
use crate::normal;
use crate::quadrature::{adaptive, wynn_epsilon, GaussLegendre};
use crate::rng::SeedSpec;
use crate::spectrum::Spectrum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileMethod {
    MonteCarlo,
    CfInversion,
}

impl QuantileMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::MonteCarlo => "mc",
            Self::CfInversion => "cf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileResult {
    pub t: f64,
    pub achieved_p: f64,
    pub method: QuantileMethod,
    /// Standard error (MC) or quadrature/tolerance bound (cf) on the
    /// probability scale.
    pub err: f64,
    /// The same uncertainty propagated to the t scale through the density.
    pub t_err: f64,
    pub samples_or_nodes: u64,
}

impl QuantileResult {
    /// `t=<t> achieved_p=<p̂> err=<e> method=<m>`
    pub fn record_line(&self) -> String {
        format!(
            "t={} achieved_p={} err={} method={}",
            self.t,
            self.achieved_p,
            self.err,
            self.method.as_str()
        )
    }
}

pub const DEFAULT_MC_SAMPLES: usize = 2_000_000;
const MC_BLOCK: usize = 1 << 16;

/// Draws of ⟨X₁,X₂⟩. A block of m equal weights w contributes
/// w·√χ²_m·N(0,1), which has the law of w·Σ_{i≤m} Z_i Z′_i by rotation
/// invariance; singleton weights use the product Z·Z′ directly.
pub fn sample_inner_products(s: &Spectrum, count: usize, seed: SeedSpec) -> Vec<f64> {
    let chis: Vec<Option<ChiSquared<f64>>> = s
        .groups()
        .iter()
        .map(|&(_, m)| (m > 1).then(|| ChiSquared::new(m as f64).expect("m > 1")))
        .collect();
    let blocks = count.div_ceil(MC_BLOCK);
    (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let len = MC_BLOCK.min(count - b * MC_BLOCK);
            let mut rng = seed.derive(b as u64).rng();
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                let mut acc = 0.0;
                for (&(w, _), chi) in s.groups().iter().zip(&chis) {
                    let term = match chi {
                        None => rng.gaussian() * rng.gaussian(),
                        Some(chi) => chi.sample(rng.raw()).sqrt() * rng.gaussian(),
                    };
                    acc += w * term;
                }
                out.push(acc);
            }
            out
        })
        .collect()
}

/// Empirical (1−p)-quantile of `n_samples` draws, at order statistic
/// ceil((1−p)·N). The t-scale error is stderr(p)/f̂(t) with f̂ a central
/// difference over the ±0.5% quantile window.
pub fn solve_threshold_mc(
    s: &Spectrum,
    p: f64,
    n_samples: usize,
    seed: SeedSpec,
) -> Result<QuantileResult> {
    check_open_unit("p", p)?;
    if n_samples < 1000 {
        return Err(Error::OutOfRange {
            name: "n_samples",
            value: n_samples as f64,
            expected: "at least 1000",
        });
    }
    let mut draws = sample_inner_products(s, n_samples, seed);
    draws.sort_unstable_by(f64::total_cmp);
    let n = n_samples as f64;
    let order = |q: f64| -> usize { ((q * n).ceil() as usize).clamp(1, n_samples) - 1 };
    let k = order(1.0 - p);
    let t = draws[k];
    let achieved_p = (n_samples - k) as f64 / n;
    let err = (p * (1.0 - p) / n).sqrt();
    let lo_q = (1.0 - p - 0.005).max(0.0);
    let hi_q = (1.0 - p + 0.005).min(1.0);
    let spread = draws[order(hi_q)] - draws[order(lo_q)];
    let t_err = if spread > 0.0 {
        err * spread / (hi_q - lo_q)
    } else {
        0.0
    };
    Ok(QuantileResult {
        t,
        achieved_p,
        method: QuantileMethod::MonteCarlo,
        err,
        t_err,
        samples_or_nodes: n_samples as u64,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct CfOptions {
    /// Largest supported dimension.
    pub max_dim: usize,
    /// Truncate the integral where |φ| drops below this.
    pub cf_floor: f64,
    pub max_half_periods: usize,
}

impl Default for CfOptions {
    fn default() -> Self {
        Self {
            max_dim: 100_000,
            cf_floor: 1e-12,
            max_half_periods: 4000,
        }
    }
}

/// Tail probabilities P(⟨X₁,X₂⟩ ≥ t) by Gil-Pelaez inversion of
/// φ(s) = Π_i (1 + α_i² s²)^{-1/2}:
///
/// P(T ≥ t) = 1/2 − (1/π) ∫₀^∞ sin(st) φ(s)/s ds.
///
/// The integral is split at the zeros kπ/|t| of sin(st). The resulting series
/// alternates with decreasing terms, so it is truncated once φ falls below
/// the floor, or summed with Wynn's epsilon when φ decays slowly.
pub struct CfTail<'a> {
    spectrum: &'a Spectrum,
    rule: GaussLegendre,
    opts: CfOptions,
    /// φ(s) < cf_floor for s ≥ cutoff.
    cutoff: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct TailValue {
    pub prob: f64,
    pub error: f64,
}

impl<'a> CfTail<'a> {
    pub fn new(spectrum: &'a Spectrum, opts: CfOptions) -> Result<Self> {
        if spectrum.dim() > opts.max_dim {
            return Err(Error::OutOfRange {
                name: "d",
                value: spectrum.dim() as f64,
                expected: "exceeds the characteristic-function dimension cap",
            });
        }
        let mut me = Self {
            spectrum,
            rule: GaussLegendre::new(20),
            opts,
            cutoff: 0.0,
            evaluations: 0,
        };
        let floor = opts.cf_floor.ln();
        let mut hi = 1.0 / spectrum.linf();
        while me.log_cf(hi) > floor {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if me.log_cf(mid) > floor {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-10 * hi {
                break;
            }
        }
        me.cutoff = hi;
        Ok(me)
    }

    pub fn log_cf(&self, s: f64) -> f64 {
        -0.5 * self
            .spectrum
            .groups()
            .iter()
            .map(|&(w, m)| m as f64 * (w * w * s * s).ln_1p())
            .sum::<f64>()
    }

    pub fn cf(&self, s: f64) -> f64 {
        self.log_cf(s).exp()
    }

    /// P(T ≥ t) with an absolute error target `tol`.
    pub fn tail(&mut self, t: f64, tol: f64) -> Result<TailValue> {
        if t == 0.0 {
            return Ok(TailValue {
                prob: 0.5,
                error: 0.0,
            });
        }
        let a = t.abs();
        let half = PI / a;
        let panel_tol = tol * PI * 1e-3;
        let mut partial = Vec::new();
        let mut sum = 0.0;
        let mut err = 0.0;
        let mut evals = 0;
        let mut result = None;
        for k in 0..self.opts.max_half_periods {
            let lo = k as f64 * half;
            let hi = lo + half;
            let mut f = |s: f64| {
                if s == 0.0 {
                    a
                } else {
                    (s * a).sin() * self.cf(s) / s
                }
            };
            let piece = adaptive(&self.rule, &mut f, lo, hi, panel_tol, 30);
            evals += piece.evaluations;
            sum += piece.value;
            err += piece.error;
            partial.push(sum);
            if hi >= self.cutoff {
                // alternating tail bounded by the next half-period term
                let next = half * self.cf(hi) / hi;
                result = Some((sum, err + next));
                break;
            }
            if partial.len() >= 12 {
                let window = &partial[partial.len().saturating_sub(40)..];
                let (est, diff) = wynn_epsilon(window);
                if diff < panel_tol && est.is_finite() {
                    result = Some((est, err + diff));
                    break;
                }
            }
        }
        self.evaluations += evals;
        let (integral, ierr) = result.ok_or_else(|| {
            Error::NonConvergence(format!(
                "tail at t = {t}: series not settled after {} half periods (partial sum {sum}, cutoff s = {})",
                self.opts.max_half_periods, self.cutoff
            ))
        })?;
        let signed = if t > 0.0 { integral } else { -integral };
        Ok(TailValue {
            prob: 0.5 - signed / PI,
            error: ierr / PI,
        })
    }
}

/// Bisection on the cf tail until |P(T ≥ t) − p| ≤ tol.
pub fn solve_threshold_cf(s: &Spectrum, p: f64, tol: f64) -> Result<QuantileResult> {
    solve_threshold_cf_with(s, p, tol, CfOptions::default())
}

pub fn solve_threshold_cf_with(
    s: &Spectrum,
    p: f64,
    tol: f64,
    opts: CfOptions,
) -> Result<QuantileResult> {
    check_open_unit("p", p)?;
    if !(tol > 0.0) {
        return Err(Error::OutOfRange {
            name: "tol",
            value: tol,
            expected: "must be positive",
        });
    }
    let mut tail = CfTail::new(s, opts)?;
    let inner_tol = 0.1 * tol;
    let scale = s.l2();
    let guess = scale * normal::inv_sf(p);
    let (mut lo, mut hi) = (guess - scale, guess + scale);
    let mut p_lo = tail.tail(lo, inner_tol)?.prob;
    let mut p_hi = tail.tail(hi, inner_tol)?.prob;
    let mut widen = scale;
    while p_lo < p {
        widen *= 2.0;
        lo -= widen;
        p_lo = tail.tail(lo, inner_tol)?.prob;
        if widen > 1e6 * scale {
            return Err(Error::NonConvergence("could not bracket the quantile from below".into()));
        }
    }
    widen = scale;
    while p_hi > p {
        widen *= 2.0;
        hi += widen;
        p_hi = tail.tail(hi, inner_tol)?.prob;
        if widen > 1e6 * scale {
            return Err(Error::NonConvergence("could not bracket the quantile from above".into()));
        }
    }
    let mut best = None;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = tail.tail(mid, inner_tol)?;
        if (v.prob - p).abs() <= tol {
            best = Some((mid, v));
            break;
        }
        if v.prob > p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * mid.abs().max(scale) {
            break;
        }
    }
    let (t, v) = best.ok_or_else(|| {
        Error::NonConvergence(format!(
            "bisection bracket [{lo}, {hi}] collapsed before |P − p| ≤ {tol}"
        ))
    })?;
    let h = 1e-3 * scale;
    let density = (tail.tail(t - h, inner_tol)?.prob - tail.tail(t + h, inner_tol)?.prob) / (2.0 * h);
    let err = tol.max(v.error);
    let t_err = if density > 0.0 { err / density } else { 0.0 };
    Ok(QuantileResult {
        t,
        achieved_p: v.prob,
        method: QuantileMethod::CfInversion,
        err,
        t_err,
        samples_or_nodes: tail.evaluations as u64,
    })
}
