//! The weight vector α of an anisotropic latent Gaussian model.
//!
//! A [`Spectrum`] holds nonnegative weights sorted nonincreasing together with
//! cached norms. Everything downstream (effective dimension, the large/small
//! split and the peel interpolation) is derived from those cached values.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{SeedSpec, StreamRng};

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &KahanSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Nonnegative weights, sorted nonincreasing, with cached norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    weights: Vec<f64>,
    l2: f64,
    l3: f64,
    l4: f64,
    linf: f64,
    /// Run-length encoding of the nonzero weights: (value, multiplicity).
    groups: Vec<(f64, usize)>,
}

fn power_sum(weights: &[f64], k: i32) -> f64 {
    weights.iter().map(|&w| w.powi(k)).collect::<KahanSum>().value()
}

impl Spectrum {
    /// Builds a spectrum from weights in any order.
    pub fn new(mut weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidSpectrum("no weights".into()));
        }
        if let Some(bad) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidSpectrum(format!(
                "weights must be finite and nonnegative, found {bad}"
            )));
        }
        weights.sort_by(|a, b| b.total_cmp(a));
        if weights[0] == 0.0 {
            return Err(Error::InvalidSpectrum("all weights are zero".into()));
        }
        let l2 = power_sum(&weights, 2).sqrt();
        let l3 = power_sum(&weights, 3).cbrt();
        let l4 = power_sum(&weights, 4).sqrt().sqrt();
        let linf = weights[0];
        let mut groups: Vec<(f64, usize)> = Vec::new();
        for &w in weights.iter().take_while(|w| **w > 0.0) {
            match groups.last_mut() {
                Some((v, m)) if *v == w => *m += 1,
                _ => groups.push((w, 1)),
            }
        }
        Ok(Self {
            weights,
            l2,
            l3,
            l4,
            linf,
            groups,
        })
    }

    /// α = 1^d.
    pub fn flat(d: usize) -> Result<Self> {
        Self::new(vec![1.0; d])
    }

    /// α_i = i^{-gamma}, i = 1..d.
    pub fn power(d: usize, gamma: f64) -> Result<Self> {
        Self::new((1..=d).map(|i| (i as f64).powf(-gamma)).collect())
    }

    /// α_i = rho^{i-1}, i = 1..d.
    pub fn geometric(d: usize, rho: f64) -> Result<Self> {
        Self::new((0..d).map(|i| rho.powi(i as i32)).collect())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn l3(&self) -> f64 {
        self.l3
    }

    pub fn l4(&self) -> f64 {
        self.l4
    }

    pub fn linf(&self) -> f64 {
        self.linf
    }

    /// Distinct nonzero weights with their multiplicities, largest first.
    pub fn groups(&self) -> &[(f64, usize)] {
        &self.groups
    }

    pub fn is_flat(&self) -> bool {
        self.groups.len() == 1 && self.groups[0].1 == self.weights.len()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.weights.iter().map(|w| w * c).collect())
    }

    /// (‖α‖₂/‖α‖₃)⁶, the dimension governing triangle-based detection.
    pub fn effective_dimension(&self) -> f64 {
        if self.is_flat() {
            return self.dim() as f64;
        }
        (self.l2 / self.l3).powi(6)
    }

    /// (‖α‖₂/‖α‖₄)⁴, the weaker dimension proxy from total-variation comparison.
    pub fn comparison_dimension(&self) -> f64 {
        if self.is_flat() {
            return self.dim() as f64;
        }
        (self.l2 / self.l4).powi(4)
    }

    /// Splits off the shortest prefix carrying at least a third of ‖α‖₂².
    pub fn split(&self) -> SpectrumSplit {
        let total = self.weights.iter().map(|w| w * w).collect::<KahanSum>().value();
        let mut prefix = KahanSum::new();
        let mut r = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            prefix.add(w * w);
            r = i + 1;
            if 3.0 * prefix.value() >= total {
                break;
            }
        }
        let plus_sq = prefix.value();
        let degenerate = 3.0 * plus_sq > 2.0 * total;
        let alpha_plus = Spectrum::new(self.weights[..r].to_vec())
            .expect("prefix of a valid spectrum contains its largest weight");
        let alpha_minus = Spectrum::new(self.weights[r..].to_vec()).ok();
        SpectrumSplit {
            r,
            alpha_plus,
            alpha_minus,
            degenerate,
            full: self.clone(),
        }
    }

    /// Writes the one-weight-per-line text format.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.weights.len() * 20);
        for w in &self.weights {
            out.push_str(&format!("{w:e}\n"));
        }
        out
    }

    /// Parses the one-weight-per-line text format. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut weights = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let w: f64 = line.parse().map_err(|_| {
                Error::Parse(format!("line {}: not a number: {line:?}", lineno + 1))
            })?;
            weights.push(w);
        }
        Self::new(weights)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Parses a generator shorthand: `flat:<d>`, `power:<d>:<gamma>`,
    /// `geometric:<d>:<rho>` or `file:<path>`. Real parameters accept a
    /// fraction such as `1/3`.
    pub fn from_spec(spec: &str) -> Result<Self> {
        SpectrumSpec::parse(spec)?.build()
    }
}

/// A parsed spectrum generator string.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumSpec {
    Flat { d: usize },
    Power { d: usize, gamma: f64 },
    Geometric { d: usize, rho: f64 },
    File { path: String },
}

pub(crate) fn parse_real(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a real number: {s:?}"));
    if let Some((num, den)) = s.split_once('/') {
        let num: f64 = num.trim().parse().map_err(|_| bad())?;
        let den: f64 = den.trim().parse().map_err(|_| bad())?;
        if den == 0.0 {
            return Err(bad());
        }
        Ok(num / den)
    } else {
        s.parse().map_err(|_| bad())
    }
}

fn parse_dim(s: &str) -> Result<usize> {
    let d: usize = s
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("not a dimension: {s:?}")))?;
    if d == 0 {
        return Err(Error::InvalidSpectrum("dimension must be positive".into()));
    }
    Ok(d)
}

impl SpectrumSpec {
    pub fn parse(spec: &str) -> Result<Self> {
        let (kind, rest) = spec
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("missing generator kind in {spec:?}")))?;
        let parts: Vec<&str> = rest.split(':').collect();
        match (kind, parts.as_slice()) {
            ("flat", [d]) => Ok(Self::Flat { d: parse_dim(d)? }),
            ("power", [d, g]) => Ok(Self::Power {
                d: parse_dim(d)?,
                gamma: parse_real(g)?,
            }),
            ("geometric", [d, r]) => Ok(Self::Geometric {
                d: parse_dim(d)?,
                rho: parse_real(r)?,
            }),
            ("file", _) => Ok(Self::File {
                path: rest.to_string(),
            }),
            _ => Err(Error::Parse(format!("unrecognised spectrum spec {spec:?}"))),
        }
    }

    pub fn dim_hint(&self) -> Option<usize> {
        match self {
            Self::Flat { d } | Self::Power { d, .. } | Self::Geometric { d, .. } => Some(*d),
            Self::File { .. } => None,
        }
    }

    pub fn build(&self) -> Result<Spectrum> {
        match self {
            Self::Flat { d } => Spectrum::flat(*d),
            Self::Power { d, gamma } => Spectrum::power(*d, *gamma),
            Self::Geometric { d, rho } => {
                if !(*rho > 0.0 && *rho <= 1.0) {
                    return Err(Error::OutOfRange {
                        name: "rho",
                        value: *rho,
                        expected: "must lie in (0, 1]",
                    });
                }
                Spectrum::geometric(*d, *rho)
            }
            Self::File { path } => Spectrum::from_file(Path::new(path)),
        }
    }
}

impl fmt::Display for SpectrumSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Flat { d } => write!(f, "flat:{d}"),
            Self::Power { d, gamma } => write!(f, "power:{d}:{gamma}"),
            Self::Geometric { d, rho } => write!(f, "geometric:{d}:{rho}"),
            Self::File { path } => write!(f, "file:{path}"),
        }
    }
}

/// Partition α = (α⁺, α⁻) at the smallest prefix with ‖α⁺‖₂² ≥ ‖α‖₂²/3.
#[derive(Debug, Clone)]
pub struct SpectrumSplit {
    pub r: usize,
    pub alpha_plus: Spectrum,
    /// `None` when the remainder is empty or identically zero.
    pub alpha_minus: Option<Spectrum>,
    /// Set when ‖α⁺‖₂² > (2/3)‖α‖₂²; then r = 1 and one weight dominates.
    pub degenerate: bool,
    full: Spectrum,
}

/// One step of the peel interpolation α^t = (α₁..α_t, α_{r+1}..α_d).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeelStep {
    pub t: usize,
    /// ‖α^t‖₂².
    pub norm_sq: f64,
    /// α_t / ‖α^t‖₂.
    pub u: f64,
}

/// Peel interpolation for a non-degenerate split. Steps are stored compactly;
/// [`PeelSequence::spectrum_at`] materialises α^t on demand.
#[derive(Debug, Clone)]
pub struct PeelSequence {
    split: SpectrumSplit,
    steps: Vec<PeelStep>,
}

impl SpectrumSplit {
    pub fn full(&self) -> &Spectrum {
        &self.full
    }

    fn require_nondegenerate(&self) -> Result<()> {
        if self.degenerate {
            let total = self.full.l2 * self.full.l2;
            return Err(Error::DegenerateSplit {
                ratio: self.alpha_plus.l2 * self.alpha_plus.l2 / total,
            });
        }
        Ok(())
    }

    pub fn peel_sequence(&self) -> Result<PeelSequence> {
        self.require_nondegenerate()?;
        let minus_sq = self
            .alpha_minus
            .as_ref()
            .map_or(0.0, |m| m.l2 * m.l2);
        let mut acc = KahanSum::new();
        acc.add(minus_sq);
        let steps = self.full.weights[..self.r]
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                acc.add(w * w);
                let norm_sq = acc.value();
                PeelStep {
                    t: i + 1,
                    norm_sq,
                    u: w / norm_sq.sqrt(),
                }
            })
            .collect();
        Ok(PeelSequence {
            split: self.clone(),
            steps,
        })
    }

    /// Diagnostic quantities of the peel argument at sample size `n`,
    /// constants omitted.
    pub fn peel_bound_proxy(&self, n: usize) -> Result<PeelBoundProxy> {
        self.require_nondegenerate()?;
        let l2 = self.full.l2;
        let n32 = (n as f64).powf(1.5);
        let sum_term = self.full.weights[..self.r]
            .iter()
            .map(|w| (w / l2).powi(3))
            .collect::<KahanSum>()
            .value()
            * n32;
        let l3_term = (self.full.l3 / l2).powi(3) * n32;
        let minus_comparison_dim = self
            .alpha_minus
            .as_ref()
            .map_or(0.0, Spectrum::comparison_dimension);
        Ok(PeelBoundProxy {
            sum_term,
            l3_term,
            minus_comparison_dim,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeelBoundProxy {
    /// Σ_{t≤r} (α_t/‖α‖₂)³ n^{3/2}.
    pub sum_term: f64,
    /// (‖α‖₃/‖α‖₂)³ n^{3/2}.
    pub l3_term: f64,
    /// (‖α⁻‖₂/‖α⁻‖₄)⁴.
    pub minus_comparison_dim: f64,
}

impl PeelSequence {
    pub fn steps(&self) -> &[PeelStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// α^t for t in 0..=r; α^0 = α⁻ (`None` if empty) and α^r = α.
    pub fn spectrum_at(&self, t: usize) -> Option<Spectrum> {
        assert!(t <= self.split.r, "peel index {t} exceeds r = {}", self.split.r);
        let w = &self.split.full.weights;
        let mut v = Vec::with_capacity(t + w.len() - self.split.r);
        v.extend_from_slice(&w[..t]);
        v.extend_from_slice(&w[self.split.r..]);
        Spectrum::new(v).ok()
    }
}

/// Random spectrum drawn from a mix of shapes: uniform weights, power
/// laws, geometric decay, a few spikes over a flat floor.
pub fn random_spectrum(rng: &mut StreamRng, max_dim: usize) -> Spectrum {
    let d = 2 + (rng.uniform() * (max_dim - 1) as f64) as usize;
    let weights: Vec<f64> = match (rng.uniform() * 4.0) as u32 {
        0 => (0..d).map(|_| rng.uniform()).collect(),
        1 => {
            let gamma = 2.0 * rng.uniform();
            (1..=d).map(|i| (i as f64).powf(-gamma)).collect()
        }
        2 => {
            let rho = 0.5 + 0.5 * rng.uniform();
            (0..d).map(|i| rho.powi(i as i32)).collect()
        }
        _ => {
            let spikes = 1 + (rng.uniform() * 4.0) as usize;
            let height = 1.0 + 10.0 * rng.uniform();
            (0..d).map(|i| if i < spikes { height } else { 1.0 }).collect()
        }
    };
    Spectrum::new(weights).expect("generated weights are positive")
}

impl SpectrumSplit {
    /// minus_comparison_dim / effective_dimension(α); the constant in the
    /// reverse Cauchy–Schwarz comparison. `None` for degenerate splits or an
    /// empty remainder.
    pub fn reverse_cs_ratio(&self) -> Option<f64> {
        if self.degenerate {
            return None;
        }
        let minus = self.alpha_minus.as_ref()?;
        Some(minus.comparison_dimension() / self.full.effective_dimension())
    }
}

/// Empirical lower bound on [`SpectrumSplit::reverse_cs_ratio`]. Sweeps of
/// 3·10⁵ random spectra and a grid of spike-over-floor spectra bottom out
/// near 1/3 (spikes dominating a one-element remainder).
pub const REVERSE_CS_FLOOR: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReverseCsCalibration {
    /// Smallest observed ratio; the empirical constant c.
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub tested: usize,
    pub skipped: usize,
}

/// Sweep `count` random spectra and report the range of the reverse-CS ratio.
pub fn calibrate_reverse_cs(count: usize, max_dim: usize, seed: SeedSpec) -> ReverseCsCalibration {
    let mut rng = seed.rng();
    let mut cal = ReverseCsCalibration {
        min_ratio: f64::INFINITY,
        max_ratio: 0.0,
        tested: 0,
        skipped: 0,
    };
    for _ in 0..count {
        match random_spectrum(&mut rng, max_dim).split().reverse_cs_ratio() {
            Some(r) => {
                cal.min_ratio = cal.min_ratio.min(r);
                cal.max_ratio = cal.max_ratio.max(r);
                cal.tested += 1;
            }
            None => cal.skipped += 1,
        }
    }
    cal
}
