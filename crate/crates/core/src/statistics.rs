//! Detection statistics: signed triangles for graphs and tr(M³) for matrices,
//! their exact null moments, and the one-sided z-test built on them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;
use crate::sampling::{GraphSample, SymMatrixSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticName {
    SignedTriangles,
    TraceCube,
}

impl fmt::Display for StatisticName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SignedTriangles => "signed-triangles",
            Self::TraceCube => "trace-cube",
        })
    }
}

impl FromStr for StatisticName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed-triangles" | "signed_triangles" => Ok(Self::SignedTriangles),
            "trace-cube" | "trace_cube" => Ok(Self::TraceCube),
            _ => Err(Error::Parse(format!("unknown statistic {s:?}"))),
        }
    }
}

/// Number of vertex triples spanning exactly k edges, k = 0..=3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TriadCounts(pub [u64; 4]);

impl TriadCounts {
    /// Σ_triples Π (G_e − p): a triple with k edges contributes (1−p)^k (−p)^{3−k}.
    pub fn signed_sum(&self, p: f64) -> f64 {
        let q = 1.0 - p;
        let [n0, n1, n2, n3] = self.0.map(|c| c as f64);
        n3 * q * q * q - n2 * q * q * p + n1 * q * p * p - n0 * p * p * p
    }
}

pub fn choose3(n: usize) -> u64 {
    let n = n as u64;
    if n < 3 {
        0
    } else {
        n * (n - 1) * (n - 2) / 6
    }
}

/// Triad census from the trace of A³ and the degree sequence.
///
/// With N_k the triples spanning k edges, m the edge count and w = Σ_v C(deg v, 2)
/// the number of two-paths:
///   N₃ = tr(A³)/6,  N₂ = w − 3N₃,  N₁ = m(n−2) − 2N₂ − 3N₃,  N₀ = C(n,3) − N₁ − N₂ − N₃.
/// tr(A³)/6 is counted exactly with bitset row intersections.
pub fn triad_counts(g: &GraphSample) -> TriadCounts {
    let n = g.n();
    let rows = g.adjacency_rows();
    let mut closed = 0u64;
    let mut degree = vec![0u64; n];
    let mut m = 0u64;
    for (i, j) in g.edges() {
        m += 1;
        degree[i] += 1;
        degree[j] += 1;
        // common neighbours k > j, so each triangle is counted once
        let (ri, rj) = (&rows[i], &rows[j]);
        let first = (j + 1) / 64;
        for w in first..ri.len() {
            let mut both = ri[w] & rj[w];
            if w == first {
                let shift = (j + 1) % 64;
                both &= !0u64 << shift;
            }
            closed += u64::from(both.count_ones());
        }
    }
    let wedges: u64 = degree.iter().map(|&d| d * d.saturating_sub(1) / 2).sum();
    let n3 = closed;
    let n2 = wedges - 3 * n3;
    let n1 = m * (n as u64).saturating_sub(2) - 2 * n2 - 3 * n3;
    let n0 = choose3(n) - n1 - n2 - n3;
    TriadCounts([n0, n1, n2, n3])
}

/// θ(G) = Σ_{i<j<k} (G_ij − p)(G_ik − p)(G_jk − p) with p from the sample.
pub fn signed_triangles(g: &GraphSample) -> f64 {
    triad_counts(g).signed_sum(g.p())
}

/// θ(G) through the dense centred matrix B′ = A − pJ (diagonal −p).
///
/// tr(B′³) contains repeated-index terms from the diagonal. With B = B′ + pI
/// (zero diagonal) every repeated-index term of tr(B³) vanishes, so
/// θ = tr(B³)/6 and
///   tr(B³) = tr(B′³) + 3p·tr(B′²) + 3p²·tr(B′) + n·p³.
pub fn signed_triangles_trace(g: &GraphSample) -> f64 {
    let n = g.n();
    let p = g.p();
    let mut b = vec![-p; n * n];
    for (i, j) in g.edges() {
        b[i * n + j] = 1.0 - p;
        b[j * n + i] = 1.0 - p;
    }
    let sq = matmul(&b, &b, n);
    let tr1 = -p * n as f64;
    let tr2: f64 = (0..n).map(|i| sq[i * n + i]).sum();
    let tr3: f64 = (0..n)
        .map(|i| (0..n).map(|j| b[i * n + j] * sq[j * n + i]).sum::<f64>())
        .sum();
    let corrected = tr3 + 3.0 * p * tr2 + 3.0 * p * p * tr1 + n as f64 * p * p * p;
    corrected / 6.0
}

fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            let row = &b[k * n..(k + 1) * n];
            for (o, bkj) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
                *o += aik * bkj;
            }
        }
    }
    out
}

/// tr(M³) by dense matrix products (production path).
pub fn trace_cube(m: &SymMatrixSample) -> f64 {
    let n = m.n();
    let dense = m.to_dense();
    let sq = matmul(&dense, &dense, n);
    dense.iter().zip(&sq).map(|(a, b)| a * b).sum()
}

/// 6·Σ_{i<j<k} M_ij M_jk M_ik, equal to tr(M³) because the diagonal is zero.
pub fn trace_cube_triangles(m: &SymMatrixSample) -> f64 {
    let n = m.n();
    let mut acc = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let mij = m.get(i, j);
            for k in j + 1..n {
                acc += mij * m.get(j, k) * m.get(i, k);
            }
        }
    }
    6.0 * acc
}

/// Exact null mean and variance: θ under G(n,p) has variance C(n,3)(p(1−p))³;
/// tr(M³) under M(n) has variance 36·C(n,3). Both have mean zero.
pub fn null_moments(stat: StatisticName, n: usize, p: Option<f64>) -> Result<(f64, f64)> {
    if n < 3 {
        return Err(Error::OutOfRange {
            name: "n",
            value: n as f64,
            expected: "at least 3",
        });
    }
    let triples = choose3(n) as f64;
    match stat {
        StatisticName::SignedTriangles => {
            let p = p.ok_or_else(|| Error::Config("signed triangles need p".into()))?;
            crate::error::check_open_unit("p", p)?;
            Ok((0.0, triples * (p * (1.0 - p)).powi(3)))
        }
        StatisticName::TraceCube => Ok((0.0, 36.0 * triples)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic_name: StatisticName,
    pub value: f64,
    pub null_mean: f64,
    pub null_sd: f64,
    pub z_score: f64,
    pub threshold_z: f64,
    pub reject: bool,
}

/// A sample the test can be run on.
#[derive(Debug, Clone, Copy)]
pub enum Sample<'a> {
    Graph(&'a GraphSample),
    Matrix(&'a SymMatrixSample),
}

impl Sample<'_> {
    fn n(&self) -> usize {
        match self {
            Self::Graph(g) => g.n(),
            Self::Matrix(m) => m.n(),
        }
    }
}

pub fn evaluate(sample: Sample<'_>, stat: StatisticName) -> Result<f64> {
    match (sample, stat) {
        (Sample::Graph(g), StatisticName::SignedTriangles) => Ok(signed_triangles(g)),
        (Sample::Matrix(m), StatisticName::TraceCube) => Ok(trace_cube(m)),
        (Sample::Graph(_), StatisticName::TraceCube) => {
            Err(Error::Config("trace-cube needs a matrix sample".into()))
        }
        (Sample::Matrix(_), StatisticName::SignedTriangles) => {
            Err(Error::Config("signed-triangles needs a graph sample".into()))
        }
    }
}

/// One-sided Gaussian-approximation test: reject when the standardised
/// statistic exceeds Φ̄⁻¹(fpr).
pub fn run_test(sample: Sample<'_>, stat: StatisticName, fpr: f64) -> Result<TestReport> {
    let value = evaluate(sample, stat)?;
    let p = match sample {
        Sample::Graph(g) => Some(g.p()),
        Sample::Matrix(_) => None,
    };
    let (mean, var) = null_moments(stat, sample.n(), p)?;
    report_for_value(stat, value, mean, var.sqrt(), fpr)
}

pub fn report_for_value(
    stat: StatisticName,
    value: f64,
    null_mean: f64,
    null_sd: f64,
    fpr: f64,
) -> Result<TestReport> {
    if !(fpr > 0.0 && fpr < 0.5) {
        return Err(Error::OutOfRange {
            name: "false_positive_rate",
            value: fpr,
            expected: "must lie in (0, 0.5)",
        });
    }
    let threshold_z = normal::inv_sf(fpr);
    let z_score = (value - null_mean) / null_sd;
    Ok(TestReport {
        statistic_name: stat,
        value,
        null_mean,
        null_sd,
        z_score,
        threshold_z,
        reject: z_score > threshold_z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedSpec;
    use crate::sampling::{sample_er, sample_gaussian_matrix};

    /// Direct O(n³) enumeration in floating point.
    fn enumerate(g: &GraphSample) -> f64 {
        let p = g.p();
        let e = |i, j| if g.has_edge(i, j) { 1.0 - p } else { -p };
        let n = g.n();
        let mut acc = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    acc += e(i, j) * e(i, k) * e(j, k);
                }
            }
        }
        acc
    }

    #[test]
    fn three_vertex_examples() {
        let empty = GraphSample::empty(3, 0.5);
        assert_eq!(signed_triangles(&empty), -0.125);
        let k3 = GraphSample::from_edges(3, 0.5, &[(0, 1), (0, 2), (1, 2)]).unwrap();
        assert_eq!(signed_triangles(&k3), 0.125);
        assert_eq!(signed_triangles(&GraphSample::empty(2, 0.5)), 0.0);
    }

    #[test]
    fn matrix_paths_match_enumeration() {
        for r in 0..100 {
            let p = 0.1 + 0.8 * (r as f64 / 100.0);
            let g = sample_er(6 + r as usize % 60, p, SeedSpec::new(31, r)).unwrap();
            let direct = enumerate(&g);
            let scale = choose3(g.n()) as f64;
            assert!((signed_triangles(&g) - direct).abs() < 1e-12 * scale, "case {r}");
            assert!((signed_triangles_trace(&g) - direct).abs() < 1e-10 * scale, "case {r}");
        }
    }

    #[test]
    fn triad_counts_sum_to_triples() {
        let g = sample_er(130, 0.4, SeedSpec::new(2, 2)).unwrap();
        let c = triad_counts(&g);
        assert_eq!(c.0.iter().sum::<u64>(), choose3(130));
    }

    #[test]
    fn trace_cube_examples() {
        assert_eq!(trace_cube(&SymMatrixSample::zeros(5)), 0.0);
        let tri = SymMatrixSample::from_upper(3, vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(trace_cube(&tri), 6.0);
        assert_eq!(trace_cube_triangles(&tri), 6.0);
        for r in 0..100 {
            let m = sample_gaussian_matrix(7, SeedSpec::new(40, r));
            let (a, b) = (trace_cube(&m), trace_cube_triangles(&m));
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{a} {b}");
        }
    }

    #[test]
    fn null_moment_values() {
        assert_eq!(null_moments(StatisticName::SignedTriangles, 3, Some(0.5)).unwrap().1, 0.015625);
        let v = null_moments(StatisticName::SignedTriangles, 4, Some(0.3)).unwrap().1;
        assert!((v - 4.0 * 0.21f64.powi(3)).abs() < 1e-15);
        assert_eq!(null_moments(StatisticName::TraceCube, 3, None).unwrap(), (0.0, 36.0));
        assert!(null_moments(StatisticName::TraceCube, 2, None).is_err());
        assert!(null_moments(StatisticName::SignedTriangles, 5, None).is_err());
    }

    #[test]
    fn report_at_null_mean_does_not_reject() {
        for fpr in [0.01, 0.2, 0.49] {
            let r = report_for_value(StatisticName::TraceCube, 0.0, 0.0, 3.0, fpr).unwrap();
            assert!(!r.reject);
            assert_eq!(r.z_score, 0.0);
        }
        assert!(report_for_value(StatisticName::TraceCube, 0.0, 0.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn mismatched_sample_kind_is_error() {
        let g = GraphSample::empty(4, 0.5);
        assert!(run_test(Sample::Graph(&g), StatisticName::TraceCube, 0.05).is_err());
    }

    #[test]
    fn names_round_trip() {
        for s in [StatisticName::SignedTriangles, StatisticName::TraceCube] {
            assert_eq!(s.to_string().parse::<StatisticName>().unwrap(), s);
        }
    }
}
