//! Independent numerical oracles for the closed forms used elsewhere.
//!
//! Nothing here calls into the formula code it checks: the quadrature oracle
//! integrates the Gaussian densities directly, the enumeration oracle walks
//! every graph in exact rational arithmetic, and the moment suite evaluates
//! X and Y by explicit double loops.

use std::fmt;

use num::{BigInt, BigRational, One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceKind {
    Absolute,
    Relative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub check_name: String,
    pub computed: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub tolerance_kind: ToleranceKind,
    pub passed: bool,
}

impl OracleReport {
    pub fn new(
        check_name: impl Into<String>,
        computed: f64,
        reference: f64,
        tolerance: f64,
        tolerance_kind: ToleranceKind,
    ) -> Self {
        let diff = (computed - reference).abs();
        let passed = match tolerance_kind {
            ToleranceKind::Absolute => diff <= tolerance,
            ToleranceKind::Relative => diff <= tolerance * reference.abs(),
        };
        Self {
            check_name: check_name.into(),
            computed,
            reference,
            tolerance,
            tolerance_kind,
            passed,
        }
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.tolerance_kind {
            ToleranceKind::Absolute => "abs",
            ToleranceKind::Relative => "rel",
        };
        write!(
            f,
            "{:<6} {:<58} computed={:<24.16e} reference={:<24.16e} tol={:.1e} ({kind})",
            if self.passed { "PASS" } else { "FAIL" },
            self.check_name,
            self.computed,
            self.reference,
            self.tolerance
        )
    }
}

/// Gauss–Hermite rule for the weight e^{−x²}.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Roots of H_n bracketed by sign changes of the orthonormal Hermite
    /// recurrence on a fine grid, then polished by Newton.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let nf = n as f64;
        let eval = |z: f64| -> (f64, f64) {
            let (mut p1, mut p2) = (std::f64::consts::PI.powf(-0.25), 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            (p1, (2.0 * nf).sqrt() * p2)
        };
        let half = n / 2;
        let limit = (2.0 * nf + 1.0).sqrt() + 1.0;
        let mut cells = 64 * n;
        let roots = loop {
            let h = limit / cells as f64;
            let mut found = Vec::with_capacity(half);
            let mut lo = 1e-300_f64.max(h * 1e-9);
            let mut flo = eval(lo).0;
            for k in 1..=cells {
                let hi = k as f64 * h;
                let fhi = eval(hi).0;
                if flo.signum() != fhi.signum() {
                    found.push((lo, hi));
                }
                lo = hi;
                flo = fhi;
            }
            if found.len() == half || cells > 1 << 22 {
                break found;
            }
            cells *= 4;
        };
        assert_eq!(roots.len(), half, "Hermite root bracketing failed for n = {n}");
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for (mut a, mut b) in roots {
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if eval(a).0.signum() == eval(m).0.signum() {
                    a = m;
                } else {
                    b = m;
                }
                if b - a < 1e-6 * b {
                    break;
                }
            }
            let mut z = 0.5 * (a + b);
            for _ in 0..4 {
                let (p, dp) = eval(z);
                z -= p / dp;
            }
            let dp = eval(z).1;
            nodes.push(z);
            weights.push(2.0 / (dp * dp));
        }
        if n % 2 == 1 {
            let dp = eval(0.0).1;
            nodes.push(0.0);
            weights.push(2.0 / (dp * dp));
        }
        let mirrored: Vec<(f64, f64)> = nodes
            .iter()
            .zip(&weights)
            .filter(|(x, _)| **x > 0.0)
            .map(|(x, w)| (-x, *w))
            .collect();
        for (x, w) in mirrored {
            nodes.push(x);
            weights.push(w);
        }
        Self { nodes, weights }
    }

    /// E f(Z) for Z ∼ N(0, 1).
    pub fn expect_standard_normal(&self, f: impl Fn(f64) -> f64) -> f64 {
        let s2 = std::f64::consts::SQRT_2;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(s2 * x))
            .sum::<f64>()
            / std::f64::consts::PI.sqrt()
    }
}

pub const HERMITE_NODES: usize = 200;

fn check_u(u: f64, max: f64) -> Result<()> {
    if !(0.0..=max).contains(&u) {
        return Err(Error::OutOfRange {
            name: "u",
            value: u,
            expected: "quadrature oracle needs u in [0, 0.9]",
        });
    }
    Ok(())
}

/// Per-entry factor of the pair interaction, computed two ways.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryIntegral {
    /// E_{A∼N(0,1)} exp(−(A−u·gg)²/(2(1−u²)) − (A−u·hh)²/(2(1−u²)) + A²) by quadrature.
    pub quadrature: f64,
    /// √((1−u²)/(1+u²))·exp(u²/(1−u⁴)·gg·hh − u⁴/(2(1−u⁴))·(gg² + hh²)).
    pub closed_form: f64,
}

pub fn quadrature_entry_integral(gi_gj: f64, hi_hj: f64, u: f64) -> Result<EntryIntegral> {
    quadrature_entry_integral_with(&GaussHermite::new(HERMITE_NODES), gi_gj, hi_hj, u)
}

pub fn quadrature_entry_integral_with(
    rule: &GaussHermite,
    gi_gj: f64,
    hi_hj: f64,
    u: f64,
) -> Result<EntryIntegral> {
    check_u(u, 0.9)?;
    let v = 1.0 - u * u;
    let (a, b) = (u * gi_gj, u * hi_hj);
    let quadrature = rule.expect_standard_normal(|x| {
        (-(x - a) * (x - a) / (2.0 * v) - (x - b) * (x - b) / (2.0 * v) + x * x).exp()
    });
    let u2 = u * u;
    let u4 = u2 * u2;
    let closed_form = ((1.0 - u2) / (1.0 + u2)).sqrt()
        * (u2 / (1.0 - u4) * gi_gj * hi_hj - u4 / (2.0 * (1.0 - u4)) * (gi_gj * gi_gj + hi_hj * hi_hj))
            .exp();
    Ok(EntryIntegral {
        quadrature,
        closed_form,
    })
}

/// E_{A∼M(n)} [dM(n,u,g)/dM(n) · dM(n,u,h)/dM(n)] as a product over the
/// entries of (1−u²)⁻¹ times the quadrature of each entry integral.
pub fn quadrature_pair_expectation(rule: &GaussHermite, g: &[f64], h: &[f64], u: f64) -> Result<f64> {
    if g.len() != h.len() {
        return Err(Error::LengthMismatch {
            expected: g.len(),
            got: h.len(),
        });
    }
    let n = g.len();
    let mut log_acc = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let e = quadrature_entry_integral_with(rule, g[i] * g[j], h[i] * h[j], u)?;
            log_acc += e.quadrature.ln() - (1.0 - u * u).ln();
        }
    }
    Ok(log_acc.exp())
}

/// E_{A∼M(n)} dM(n,u,g)/dM(n) by tensor quadrature over the entries, with
/// the ratio built from the two Gaussian densities directly; equals 1.
pub fn quadrature_density_normalisation(rule: &GaussHermite, g: &[f64], u: f64) -> Result<f64> {
    check_u(u, 0.9)?;
    let n = g.len();
    let v = 1.0 - u * u;
    let mut acc = 1.0;
    for i in 0..n {
        for j in i + 1..n {
            let m = u * g[i] * g[j];
            acc *= rule.expect_standard_normal(|x| {
                let spiked = (-(x - m) * (x - m) / (2.0 * v)).exp() / v.sqrt();
                let null = (-x * x / 2.0).exp();
                spiked / null
            });
        }
    }
    Ok(acc)
}

/// Closed form (1−u⁴)^{−n(n−1)/4} exp(u²/(1−u⁴)·X − u⁴/(1−u⁴)·Y),
/// transcribed here independently with X, Y by double loops.
fn pair_closed_form(g: &[f64], h: &[f64], u: f64) -> f64 {
    let n = g.len();
    let (mut x, mut y) = (0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            x += g[i] * g[j] * h[i] * h[j];
            y += 0.5 * (g[i] * g[i] * g[j] * g[j] + h[i] * h[i] * h[j] * h[j]);
        }
    }
    let u4 = u.powi(4);
    (1.0 - u4).powf(-((n * (n - 1)) as f64) / 4.0) * (u * u / (1.0 - u4) * x - u4 / (1.0 - u4) * y).exp()
}

fn binom(n: usize, k: usize) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// Exact mean and variance of θ under G(n,p) by enumerating all 2^{C(n,2)}
/// graphs with product-measure weights, in rational arithmetic.
pub fn enumerate_signed_triangles_null(n: usize, p: &BigRational) -> Result<(BigRational, BigRational)> {
    if n > 5 {
        return Err(Error::OutOfRange {
            name: "n",
            value: n as f64,
            expected: "enumeration supports n ≤ 5",
        });
    }
    if !(p.is_positive() && *p < BigRational::one()) {
        return Err(Error::Parse(format!("p = {p} outside (0, 1)")));
    }
    let q = BigRational::one() - p;
    let pair_list: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let m = pair_list.len();
    let index = |i: usize, j: usize| pair_list.iter().position(|&e| e == (i, j)).expect("pair");
    let triples: Vec<[usize; 3]> = (0..n)
        .flat_map(|i| (i + 1..n).flat_map(move |j| (j + 1..n).map(move |k| [i, j, k])))
        .collect();
    let triple_edges: Vec<[usize; 3]> = triples
        .iter()
        .map(|&[i, j, k]| [index(i, j), index(i, k), index(j, k)])
        .collect();
    let centred = [-p.clone(), q.clone()];
    let mut mean = BigRational::zero();
    let mut second = BigRational::zero();
    for mask in 0u32..(1u32 << m) {
        let k = mask.count_ones() as i32;
        let weight = pow(p, k) * pow(&q, m as i32 - k);
        let mut theta = BigRational::zero();
        for e in &triple_edges {
            let f = |x: usize| &centred[(mask >> x & 1) as usize];
            theta += f(e[0]) * f(e[1]) * f(e[2]);
        }
        mean += &weight * &theta;
        second += &weight * &theta * &theta;
    }
    let var = &second - &mean * &mean;
    Ok((mean, var))
}

fn pow(x: &BigRational, k: i32) -> BigRational {
    num::pow(x.clone(), k as usize)
}

/// Closed-form reference C(n,3)(p(1−p))³ in exact arithmetic.
pub fn signed_triangles_variance_formula(n: usize, p: &BigRational) -> BigRational {
    let pq = p * (BigRational::one() - p);
    BigRational::from_integer(BigInt::from(binom(n, 3))) * &pq * &pq * &pq
}

fn rational_to_f64(x: &BigRational) -> f64 {
    use num::ToPrimitive;
    x.to_f64().unwrap_or(f64::NAN)
}

struct Running {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Running {
    fn new() -> Self {
        Self {
            n: 0.0,
            mean: 0.0,
            m2: 0.0,
        }
    }

    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn stderr(&self) -> f64 {
        (self.m2 / (self.n - 1.0) / self.n).sqrt()
    }
}

fn xy_double_loop(g: &[f64], h: &[f64]) -> (f64, f64) {
    let n = g.len();
    let (mut x, mut y) = (0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            x += g[i] * g[j] * h[i] * h[j];
            y += 0.5 * (g[i] * g[i] * g[j] * g[j] + h[i] * h[i] * h[j] * h[j]);
        }
    }
    (x, y)
}

fn in_s(g: &[f64], a: f64) -> bool {
    let n = g.len() as f64;
    let s2: f64 = g.iter().map(|x| x * x).sum();
    let s4: f64 = g.iter().map(|x| x.powi(4)).sum();
    s2 <= (1.0 + a) * n && s4 <= 3.0 * (1.0 + a) * n
}

fn truncated_draw(rng: &mut crate::rng::StreamRng, g: &mut [f64], a: f64) {
    loop {
        rng.fill_gaussian(g);
        if in_s(g, a) {
            return;
        }
    }
}

/// Moment identities of X and Y: unconditioned Gaussian means of X², Y, X³
/// and the sign-symmetry zeros E X, E XY under μ_{S(1)}.
pub fn mc_moment_suite(n: usize, draws: u64, seed: SeedSpec) -> Result<Vec<OracleReport>> {
    if draws < 100_000 {
        return Err(Error::OutOfRange {
            name: "draws",
            value: draws as f64,
            expected: "at least 1e5",
        });
    }
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let (mut x2, mut y1, mut x3) = (Running::new(), Running::new(), Running::new());
    let mut rng = seed.derive(1).rng();
    for _ in 0..draws {
        rng.fill_gaussian(&mut g);
        rng.fill_gaussian(&mut h);
        let (x, y) = xy_double_loop(&g, &h);
        x2.push(x * x);
        y1.push(y);
        x3.push(x * x * x);
    }
    let (mut xs, mut xys) = (Running::new(), Running::new());
    let mut rng = seed.derive(2).rng();
    for _ in 0..draws {
        truncated_draw(&mut rng, &mut g, 1.0);
        truncated_draw(&mut rng, &mut h, 1.0);
        let (x, y) = xy_double_loop(&g, &h);
        xs.push(x);
        xys.push(x * y);
    }
    let nf = n as f64;
    let half_pairs = nf * (nf - 1.0) / 2.0;
    let x3_ref = nf * (nf - 1.0) * (nf - 2.0);
    let tag = |s: &str| format!("moments n={n}: {s}");
    let mut out = vec![
        OracleReport::new(tag("E X^2 = n(n-1)/2"), x2.mean, half_pairs, 0.02, ToleranceKind::Relative),
        OracleReport::new(tag("E Y = n(n-1)/2"), y1.mean, half_pairs, 0.02, ToleranceKind::Relative),
    ];
    out.push(if x3_ref == 0.0 {
        OracleReport::new(tag("E X^3 = 0"), x3.mean, 0.0, 4.0 * x3.stderr(), ToleranceKind::Absolute)
    } else {
        OracleReport::new(tag("E X^3 = n(n-1)(n-2)"), x3.mean, x3_ref, 0.05, ToleranceKind::Relative)
    });
    out.push(OracleReport::new(
        tag("E_S X = 0 (4 stderr)"),
        xs.mean,
        0.0,
        4.0 * xs.stderr(),
        ToleranceKind::Absolute,
    ));
    out.push(OracleReport::new(
        tag("E_S XY = 0 (4 stderr)"),
        xys.mean,
        0.0,
        4.0 * xys.stderr(),
        ToleranceKind::Absolute,
    ));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub n: usize,
    pub a: f64,
    pub exceed_prob: f64,
    pub stderr: f64,
}

/// Empirical P(g ∉ S(a)). For each n one set of draws is shared across the
/// a grid, so the curve in a is monotone draw by draw.
pub fn truncation_tail_curve(
    n_list: &[usize],
    a_list: &[f64],
    draws: u64,
    seed: SeedSpec,
) -> Result<Vec<TailPoint>> {
    if draws < 100_000 {
        return Err(Error::OutOfRange {
            name: "draws",
            value: draws as f64,
            expected: "at least 1e5",
        });
    }
    let mut out = Vec::new();
    for &n in n_list {
        let mut misses = vec![0u64; a_list.len()];
        let mut rng = seed.derive(n as u64).rng();
        let mut g = vec![0.0; n];
        for _ in 0..draws {
            rng.fill_gaussian(&mut g);
            let s2: f64 = g.iter().map(|x| x * x).sum();
            let s4: f64 = g.iter().map(|x| x.powi(4)).sum();
            for (k, &a) in a_list.iter().enumerate() {
                let nf = n as f64;
                if s2 > (1.0 + a) * nf || s4 > 3.0 * (1.0 + a) * nf {
                    misses[k] += 1;
                }
            }
        }
        for (k, &a) in a_list.iter().enumerate() {
            let pr = misses[k] as f64 / draws as f64;
            out.push(TailPoint {
                n,
                a,
                exceed_prob: pr,
                stderr: (pr * (1.0 - pr) / draws as f64).sqrt(),
            });
        }
    }
    Ok(out)
}

/// Named groups of checks runnable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    All,
    LemmaInner,
    Moments,
    Tails,
    Triangles,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Self::All),
            "lemma-inner" => Ok(Self::LemmaInner),
            "moments" => Ok(Self::Moments),
            "tails" => Ok(Self::Tails),
            "triangles" => Ok(Self::Triangles),
            _ => Err(Error::Parse(format!("unknown suite {s:?}"))),
        }
    }
}

pub const GRID_TOLERANCE: f64 = 1e-8;

/// The 5×5×3 grid of entry integrals plus full-product spot checks and a
/// node-doubling convergence check.
pub fn lemma_inner_checks() -> Result<Vec<OracleReport>> {
    let rule = GaussHermite::new(HERMITE_NODES);
    let mut out = Vec::new();
    let vals = [-2.0, -1.0, 0.0, 1.0, 2.0];
    for &u in &[0.1, 0.2, 0.3] {
        for &gg in &vals {
            for &hh in &vals {
                let e = quadrature_entry_integral_with(&rule, gg, hh, u)?;
                out.push(OracleReport::new(
                    format!("entry integral gg={gg:+} hh={hh:+} u={u}"),
                    e.quadrature,
                    e.closed_form,
                    GRID_TOLERANCE,
                    ToleranceKind::Relative,
                ));
            }
        }
    }
    let doubled = GaussHermite::new(2 * HERMITE_NODES);
    for &(gg, hh, u) in &[(1.0, -2.0, 0.2), (2.0, 2.0, 0.9), (0.0, 0.0, 0.9)] {
        let a = quadrature_entry_integral_with(&rule, gg, hh, u)?;
        let b = quadrature_entry_integral_with(&doubled, gg, hh, u)?;
        out.push(OracleReport::new(
            format!("node doubling 200 vs 400 gg={gg:+} hh={hh:+} u={u}"),
            a.quadrature,
            b.quadrature,
            1e-12,
            ToleranceKind::Relative,
        ));
    }
    let cases: [(&[f64], &[f64], f64); 3] = [
        (&[1.0, -0.5, 2.0], &[0.3, 1.0, -1.0], 0.2),
        (&[0.7, 1.1, -0.4, 0.2], &[-1.3, 0.5, 0.9, 2.0], 0.3),
        (&[1.0, 1.0], &[1.0, -1.0], 0.5),
    ];
    for (g, h, u) in cases {
        out.push(OracleReport::new(
            format!("pair expectation n={} u={u}", g.len()),
            quadrature_pair_expectation(&rule, g, h, u)?,
            pair_closed_form(g, h, u),
            GRID_TOLERANCE,
            ToleranceKind::Relative,
        ));
    }
    for (g, u) in [(&[0.5, -1.5][..], 0.4), (&[1.0, 2.0, -0.3][..], 0.25)] {
        out.push(OracleReport::new(
            format!("density ratio normalisation n={} u={u}", g.len()),
            quadrature_density_normalisation(&rule, g, u)?,
            1.0,
            GRID_TOLERANCE,
            ToleranceKind::Relative,
        ));
    }
    Ok(out)
}

pub fn triangle_checks() -> Result<Vec<OracleReport>> {
    let mut out = Vec::new();
    for n in 3..=5 {
        for den in [4i64, 2] {
            let p = BigRational::new(BigInt::from(1), BigInt::from(den));
            let (mean, var) = enumerate_signed_triangles_null(n, &p)?;
            let formula = signed_triangles_variance_formula(n, &p);
            let exact = var == formula;
            let mut r = OracleReport::new(
                format!("enumerated Var θ n={n} p=1/{den} (exact rational)"),
                rational_to_f64(&var),
                rational_to_f64(&formula),
                0.0,
                ToleranceKind::Absolute,
            );
            r.passed = exact;
            out.push(r);
            let mut r = OracleReport::new(
                format!("enumerated E θ n={n} p=1/{den} (exact rational)"),
                rational_to_f64(&mean),
                0.0,
                0.0,
                ToleranceKind::Absolute,
            );
            r.passed = mean.is_zero();
            out.push(r);
        }
    }
    Ok(out)
}

pub const MOMENT_SUITE_N: usize = 10;
pub const MOMENT_SUITE_DRAWS: u64 = 1_000_000;

pub fn tail_checks(seed: SeedSpec) -> Result<Vec<OracleReport>> {
    let a_list = [1.0, 2.0, 4.0, 10.0];
    let curve = truncation_tail_curve(&[20, 50], &a_list, 1_000_000, seed)?;
    let mut out = Vec::new();
    for w in curve.windows(2) {
        if w[0].n == w[1].n {
            out.push(OracleReport::new(
                format!("tail n={} non-increasing a={} -> a={}", w[0].n, w[0].a, w[1].a),
                (w[1].exceed_prob - w[0].exceed_prob).max(0.0),
                0.0,
                0.0,
                ToleranceKind::Absolute,
            ));
        }
    }
    for p in curve.iter().filter(|p| p.n == 50 && p.a == 10.0) {
        out.push(OracleReport::new(
            "tail n=50 a=10 below resolution",
            p.exceed_prob,
            0.0,
            0.0,
            ToleranceKind::Absolute,
        ));
    }
    Ok(out)
}

pub fn run_suite(suite: Suite, seed: SeedSpec) -> Result<Vec<OracleReport>> {
    let mut out = Vec::new();
    if matches!(suite, Suite::All | Suite::LemmaInner) {
        out.extend(lemma_inner_checks()?);
    }
    if matches!(suite, Suite::All | Suite::Triangles) {
        out.extend(triangle_checks()?);
    }
    if matches!(suite, Suite::All | Suite::Moments) {
        out.extend(mc_moment_suite(MOMENT_SUITE_N, MOMENT_SUITE_DRAWS, seed)?);
    }
    if matches!(suite, Suite::All | Suite::Tails) {
        out.extend(tail_checks(seed)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_rule_moments() {
        let rule = GaussHermite::new(HERMITE_NODES);
        let sp = std::f64::consts::PI.sqrt();
        let w: f64 = rule.weights.iter().sum();
        assert!((w - sp).abs() < 1e-13);
        let m2: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x * x).sum();
        assert!((m2 - sp / 2.0).abs() < 1e-13);
        assert!((rule.expect_standard_normal(|x| x.powi(4)) - 3.0).abs() < 1e-12);
        assert!((rule.expect_standard_normal(|x| x.cos()) - (-0.5f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn entry_integral_examples() {
        let e = quadrature_entry_integral(0.0, 0.0, 0.0).unwrap();
        assert!((e.quadrature - 1.0).abs() < 1e-14 && e.closed_form == 1.0);
        let u: f64 = 0.3;
        let e = quadrature_entry_integral(0.0, 0.0, u).unwrap();
        let expect = ((1.0 - u * u) / (1.0 + u * u)).sqrt();
        assert!((e.quadrature - expect).abs() < 1e-10);
        assert!((e.closed_form - expect).abs() < 1e-15);
        let e = quadrature_entry_integral(1.0, -2.0, 0.2).unwrap();
        assert!((e.quadrature - e.closed_form).abs() < 1e-8);
        assert!(quadrature_entry_integral(1.0, 1.0, 0.95).is_err());
    }

    #[test]
    fn inner_grid_passes() {
        let reports = lemma_inner_checks().unwrap();
        assert!(reports.len() >= 75);
        for r in &reports {
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn enumeration_examples() {
        let half = BigRational::new(BigInt::from(1), BigInt::from(2));
        let (m, v) = enumerate_signed_triangles_null(3, &half).unwrap();
        assert!(m.is_zero());
        assert_eq!(v, BigRational::new(BigInt::from(1), BigInt::from(64)));
        let (_, v) = enumerate_signed_triangles_null(4, &half).unwrap();
        assert_eq!(v, BigRational::new(BigInt::from(4), BigInt::from(64)));
        assert!(enumerate_signed_triangles_null(6, &half).is_err());
        for r in triangle_checks().unwrap() {
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn moment_suite_small_n() {
        let reports = mc_moment_suite(2, 100_000, SeedSpec::new(5, 0)).unwrap();
        let x3 = reports.iter().find(|r| r.check_name.contains("X^3")).unwrap();
        assert_eq!(x3.reference, 0.0);
        assert!(mc_moment_suite(5, 10, SeedSpec::new(5, 0)).is_err());
    }

    #[test]
    fn tail_curve_monotone_in_a() {
        let c = truncation_tail_curve(&[20], &[1.0, 4.0], 200_000, SeedSpec::new(1, 0)).unwrap();
        assert!(c[1].exceed_prob <= c[0].exceed_prob);
    }

    #[test]
    fn report_tolerance_kinds() {
        assert!(OracleReport::new("a", 1.01, 1.0, 0.02, ToleranceKind::Relative).passed);
        assert!(!OracleReport::new("a", 1.03, 1.0, 0.02, ToleranceKind::Relative).passed);
        assert!(OracleReport::new("a", 0.5, 0.0, 0.5, ToleranceKind::Absolute).passed);
    }
}
