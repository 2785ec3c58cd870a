//! Reproducible samplers for the five ensembles: Erdős–Rényi G(n,p), the
//! anisotropic geometric graph G(n,p,α), the anisotropic Wishart W(n,α), the
//! Gaussian ensemble M(n) and the spiked ensemble M(n,u).
//!
//! Every sampler is a pure function of its parameters and a [`SeedSpec`].

use rand_distr::{ChiSquared, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedSpec;
use crate::spectrum::{KahanSum, Spectrum};

/// Sub-stream tags for the components of a compound draw.
pub const SPIKE_TAG: u64 = 0x5350_494B;
pub const NOISE_TAG: u64 = 0x4E4F_4953;
const BARTLETT_TAG: u64 = 0x4241_5254;

/// Number of unordered pairs i < j among n vertices.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Position of pair (i, j), i < j, in row-major upper-triangular order.
#[inline]
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// Iterates pairs (i, j), i < j, in row-major order.
pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

/// Simple undirected graph stored as a packed bitset over the upper triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSample {
    n: usize,
    p: f64,
    bits: Vec<u64>,
}

impl GraphSample {
    pub fn empty(n: usize, p: f64) -> Self {
        Self {
            n,
            p,
            bits: vec![0; pair_count(n).div_ceil(64)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let k = pair_index(self.n, a, b);
        self.bits[k / 64] >> (k % 64) & 1 == 1
    }

    pub fn set_edge(&mut self, i: usize, j: usize, present: bool) {
        assert!(i != j, "self-loops are not representable");
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let k = pair_index(self.n, a, b);
        if present {
            self.bits[k / 64] |= 1 << (k % 64);
        } else {
            self.bits[k / 64] &= !(1 << (k % 64));
        }
    }

    pub(crate) fn set_pair_bit(&mut self, k: usize) {
        self.bits[k / 64] |= 1 << (k % 64);
    }

    pub fn edge_count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Edges (i, j), i < j, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        pairs(self.n)
            .enumerate()
            .filter(|(k, _)| self.bits[k / 64] >> (k % 64) & 1 == 1)
            .map(|(_, e)| e)
    }

    pub fn from_edges(n: usize, p: f64, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(n, p);
        for &(i, j) in edges {
            if i == j || i >= n || j >= n {
                return Err(Error::Parse(format!("invalid edge ({i}, {j}) for n = {n}")));
            }
            g.set_edge(i, j, true);
        }
        Ok(g)
    }

    /// Full adjacency rows as bitsets of `n.div_ceil(64)` words each.
    pub fn adjacency_rows(&self) -> Vec<Vec<u64>> {
        let words = self.n.div_ceil(64);
        let mut rows = vec![vec![0u64; words]; self.n];
        for (i, j) in self.edges() {
            rows[i][j / 64] |= 1 << (j % 64);
            rows[j][i / 64] |= 1 << (i % 64);
        }
        rows
    }

    /// Relabels vertices: vertex v becomes `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut g = Self::empty(self.n, self.p);
        for (i, j) in self.edges() {
            g.set_edge(perm[i], perm[j], true);
        }
        g
    }
}

/// Symmetric real matrix with zero diagonal, stored as its strict upper triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrixSample {
    n: usize,
    entries: Vec<f64>,
}

impl SymMatrixSample {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![0.0; pair_count(n)],
        }
    }

    pub fn from_upper(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != pair_count(n) {
            return Err(Error::LengthMismatch {
                expected: pair_count(n),
                got: entries.len(),
            });
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parse("matrix entries must be finite".into()));
        }
        Ok(Self { n, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Upper-triangular entries in pair order (0,1),(0,2),…,(n-2,n-1).
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.entries[pair_index(self.n, i, j)],
            std::cmp::Ordering::Greater => self.entries[pair_index(self.n, j, i)],
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(i != j, "diagonal is identically zero");
        let k = if i < j {
            pair_index(self.n, i, j)
        } else {
            pair_index(self.n, j, i)
        };
        self.entries[k] = v;
    }

    /// Dense row-major n×n copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for ((i, j), &v) in pairs(n).zip(&self.entries) {
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
        out
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut m = Self::zeros(self.n);
        for ((i, j), &v) in pairs(self.n).zip(&self.entries) {
            m.set(perm[i], perm[j], v);
        }
        m
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n: self.n,
            entries: self.entries.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// d×n matrix of latent vectors; column i is X_i, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMatrix {
    d: usize,
    n: usize,
    values: Vec<f64>,
}

impl LatentMatrix {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Draw X₁..X_n i.i.d. N(0, diag(α)). Draw `i·d + j` feeds coordinate j of column i.
pub fn sample_latent(s: &Spectrum, n: usize, seed: SeedSpec) -> LatentMatrix {
    let d = s.dim();
    let scales: Vec<f64> = s.weights().iter().map(|w| w.sqrt()).collect();
    let mut rng = seed.rng();
    let mut values = vec![0.0; d * n];
    for col in values.chunks_exact_mut(d) {
        for (x, sc) in col.iter_mut().zip(&scales) {
            *x = sc * rng.gaussian();
        }
    }
    LatentMatrix { d, n, values }
}

/// Controls how inner products of long latent columns are accumulated.
#[derive(Debug, Clone, Copy)]
pub struct GramOptions {
    /// Above this d·n² the blocked compensated path is used.
    pub compensated_above: usize,
    pub block: usize,
}

impl Default for GramOptions {
    fn default() -> Self {
        Self {
            compensated_above: 1 << 20,
            block: 512,
        }
    }
}

#[inline]
fn plain_dot(a: &[f64], b: &[f64]) -> f64 {
    // four fixed lanes; the summation order does not depend on scheduling
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * c + l] * b[4 * c + l];
        }
    }
    let mut tail = 0.0;
    for k in 4 * chunks..a.len() {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn blocked_dot(a: &[f64], b: &[f64], block: usize) -> f64 {
    let mut acc = KahanSum::new();
    for (x, y) in a.chunks(block).zip(b.chunks(block)) {
        acc.add(plain_dot(x, y));
    }
    acc.value()
}

/// Off-diagonal Gram entries ⟨X_i, X_j⟩, i < j.
pub fn gram_offdiag(x: &LatentMatrix, opts: GramOptions) -> SymMatrixSample {
    let n = x.n;
    let compensated = x.d.saturating_mul(n * n) > opts.compensated_above;
    let dot = |i: usize, j: usize| {
        if compensated {
            blocked_dot(x.column(i), x.column(j), opts.block)
        } else {
            plain_dot(x.column(i), x.column(j))
        }
    };
    let rows: Vec<Vec<f64>> = if x.d * n * n > (1 << 22) {
        (0..n)
            .into_par_iter()
            .map(|i| (i + 1..n).map(|j| dot(i, j)).collect())
            .collect()
    } else {
        (0..n).map(|i| (i + 1..n).map(|j| dot(i, j)).collect()).collect()
    };
    SymMatrixSample {
        n,
        entries: rows.into_iter().flatten().collect(),
    }
}

/// W(n,α) = ‖α‖₂⁻¹ (XᵀX − diag XᵀX) from explicitly sampled latents.
pub fn sample_wishart(s: &Spectrum, n: usize, seed: SeedSpec) -> SymMatrixSample {
    wishart_from_latent(s, &sample_latent(s, n, seed))
}

pub fn wishart_from_latent(s: &Spectrum, x: &LatentMatrix) -> SymMatrixSample {
    let l2 = s.l2();
    gram_offdiag(x, GramOptions::default()).map(|v| v / l2)
}

/// How the Gram matrix of a Wishart draw is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramChannel {
    /// Sample the d×n latent matrix and multiply.
    Latent,
    /// Sum one Bartlett-factored Wishart draw per distinct weight. Same law as
    /// `Latent`, cost independent of the multiplicities.
    Bartlett,
}

impl GramChannel {
    /// Bartlett when it is cheaper than touching all d·n latent coordinates.
    pub fn cheapest(s: &Spectrum, n: usize) -> Self {
        let bartlett: usize = s
            .groups()
            .iter()
            .map(|&(_, m)| m.min(n) * n * n / 2 + n)
            .sum();
        if bartlett < s.dim() * n {
            Self::Bartlett
        } else {
            Self::Latent
        }
    }
}

pub fn sample_wishart_via(
    channel: GramChannel,
    s: &Spectrum,
    n: usize,
    seed: SeedSpec,
) -> SymMatrixSample {
    match channel {
        GramChannel::Latent => sample_wishart(s, n, seed),
        GramChannel::Bartlett => sample_wishart_bartlett(s, n, seed),
    }
}

/// W(n,α) in distribution, via Σ_k w_k·Wishart_n(m_k, I) over the distinct
/// weights w_k with multiplicities m_k. A block with m_k ≥ n uses the
/// Bartlett factor L (L_ii² ~ χ²_{m_k−i}, L_ij ~ N(0,1) below the diagonal);
/// smaller blocks are sampled as m_k explicit latent rows.
pub fn sample_wishart_bartlett(s: &Spectrum, n: usize, seed: SeedSpec) -> SymMatrixSample {
    let mut acc = vec![0.0; pair_count(n)];
    let mut rng = seed.derive(BARTLETT_TAG).rng();
    let mut lower = vec![0.0; n * n];
    for &(w, m) in s.groups() {
        if m >= n {
            for i in 0..n {
                for j in 0..i {
                    lower[i * n + j] = rng.gaussian();
                }
                let chi = ChiSquared::new((m - i) as f64).expect("positive degrees of freedom");
                lower[i * n + i] = chi.sample(rng.raw()).sqrt();
            }
            for (k, (i, j)) in pairs(n).enumerate() {
                let (ri, rj) = (&lower[i * n..i * n + i + 1], &lower[j * n..j * n + i + 1]);
                acc[k] += w * plain_dot(ri, rj);
            }
        } else {
            let mut rows = vec![0.0; m * n];
            rng.fill_gaussian(&mut rows);
            for (k, (i, j)) in pairs(n).enumerate() {
                let g: f64 = (0..m).map(|r| rows[r * n + i] * rows[r * n + j]).sum();
                acc[k] += w * g;
            }
        }
    }
    let l2 = s.l2();
    SymMatrixSample {
        n,
        entries: acc.into_iter().map(|v| v / l2).collect(),
    }
}

/// G(n,p): pair k is an edge iff the k-th uniform draw falls below p.
pub fn sample_er(n: usize, p: f64, seed: SeedSpec) -> Result<GraphSample> {
    crate::error::check_open_unit("p", p)?;
    let mut g = GraphSample::empty(n, p);
    let mut rng = seed.rng();
    for k in 0..pair_count(n) {
        if rng.uniform() < p {
            g.set_pair_bit(k);
        }
    }
    Ok(g)
}

/// G(n,p,α) with the threshold t = t_{p,α} supplied by the caller.
///
/// Computed as the threshold of the latent Wishart draw at t/‖α‖₂, so it
/// coincides edge-for-edge with [`threshold_graph`] applied to
/// [`sample_wishart`] under the same seed.
pub fn sample_rgg(s: &Spectrum, n: usize, p: f64, t: f64, seed: SeedSpec) -> GraphSample {
    let w = sample_wishart(s, n, seed);
    threshold_graph(&w, t / s.l2(), p)
}

/// M(n): i.i.d. standard Gaussians above the diagonal.
pub fn sample_gaussian_matrix(n: usize, seed: SeedSpec) -> SymMatrixSample {
    let mut rng = seed.rng();
    let mut entries = vec![0.0; pair_count(n)];
    rng.fill_gaussian(&mut entries);
    SymMatrixSample { n, entries }
}

/// Δ(g) = ggᵀ with the diagonal removed.
pub fn rank_one_deleted(g: &[f64]) -> SymMatrixSample {
    let n = g.len();
    SymMatrixSample {
        n,
        entries: pairs(n).map(|(i, j)| g[i] * g[j]).collect(),
    }
}

/// M(n,u) = u·Δ(g) + √(1−u²)·M′ with g and M′ drawn from the sub-streams
/// `seed.derive(SPIKE_TAG)` and `seed.derive(NOISE_TAG)`.
pub fn sample_spiked(n: usize, u: f64, seed: SeedSpec) -> Result<SymMatrixSample> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::OutOfRange {
            name: "u",
            value: u,
            expected: "must lie in [0, 1]",
        });
    }
    let mut g = vec![0.0; n];
    seed.derive(SPIKE_TAG).rng().fill_gaussian(&mut g);
    let noise = sample_gaussian_matrix(n, seed.derive(NOISE_TAG));
    Ok(spiked_from_parts(&g, &noise, u))
}

pub(crate) fn spiked_from_parts(g: &[f64], noise: &SymMatrixSample, u: f64) -> SymMatrixSample {
    let c = (1.0 - u * u).sqrt();
    let spike = rank_one_deleted(g);
    SymMatrixSample {
        n: noise.n,
        entries: spike
            .entries
            .iter()
            .zip(&noise.entries)
            .map(|(s, m)| u * s + c * m)
            .collect(),
    }
}

/// Entrywise threshold: edge (i,j) iff m_ij ≥ t.
///
/// With t = t_{p,α}/‖α‖₂ on W(n,α) this is the map H_{p,α} to G(n,p,α); with
/// t = Φ̄⁻¹(p) on M(n) it is K_p, whose image is G(n,p).
pub fn threshold_graph(m: &SymMatrixSample, t: f64, p: f64) -> GraphSample {
    let mut g = GraphSample::empty(m.n, p);
    for (k, &v) in m.entries.iter().enumerate() {
        if v >= t {
            g.set_pair_bit(k);
        }
    }
    g
}
