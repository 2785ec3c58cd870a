//! On-disk formats for graphs, matrices and statistic samples.
//!
//! Graphs are text: a header `rgg-graph v1 n=<n> p=<p>` followed by one
//! 1-indexed `i j` edge per line in ascending order. Matrices are a text
//! header `symmat v1 n=<n>` followed by the upper triangle as little-endian
//! f64 in pair order (1,2),(1,3),…,(n−1,n).

use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sampling::{pair_count, GraphSample, SymMatrixSample};

const GRAPH_MAGIC: &str = "rgg-graph v1";
const MATRIX_MAGIC: &str = "symmat v1";

fn header_field<'a>(header: &'a str, key: &str) -> Result<&'a str> {
    header
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .ok_or_else(|| Error::Parse(format!("header {header:?} lacks {key}=")))
}

fn parse_n(header: &str) -> Result<usize> {
    header_field(header, "n")?
        .parse()
        .map_err(|e| Error::Parse(format!("bad n in header: {e}")))
}

pub fn write_graph(g: &GraphSample, w: &mut impl Write) -> Result<()> {
    writeln!(w, "{GRAPH_MAGIC} n={} p={}", g.n(), g.p())?;
    for (i, j) in g.edges() {
        writeln!(w, "{} {}", i + 1, j + 1)?;
    }
    Ok(())
}

pub fn read_graph(r: impl BufRead) -> Result<GraphSample> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty graph file".into()))??;
    if !header.starts_with(GRAPH_MAGIC) {
        return Err(Error::Parse(format!("not a graph file: {header:?}")));
    }
    let n = parse_n(&header)?;
    let p: f64 = header_field(&header, "p")?
        .parse()
        .map_err(|e| Error::Parse(format!("bad p in header: {e}")))?;
    let mut edges = Vec::new();
    let mut last = None;
    for (k, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace().map(str::parse::<usize>);
        let (i, j) = match (it.next(), it.next(), it.next()) {
            (Some(Ok(i)), Some(Ok(j)), None) => (i, j),
            _ => return Err(Error::Parse(format!("line {}: expected `i j`, got {line:?}", k + 2))),
        };
        if i == 0 || j > n || i >= j {
            return Err(Error::Parse(format!("line {}: need 1 ≤ i < j ≤ {n}, got {i} {j}", k + 2)));
        }
        if last.is_some_and(|prev| prev >= (i, j)) {
            return Err(Error::Parse(format!("line {}: edges not strictly ascending", k + 2)));
        }
        last = Some((i, j));
        edges.push((i - 1, j - 1));
    }
    GraphSample::from_edges(n, p, &edges)
}

pub fn write_matrix(m: &SymMatrixSample, w: &mut impl Write) -> Result<()> {
    writeln!(w, "{MATRIX_MAGIC} n={}", m.n())?;
    let mut buf = Vec::with_capacity(8 * m.entries().len());
    for v in m.entries() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_matrix(bytes: &[u8]) -> Result<SymMatrixSample> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Parse("matrix file has no header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|e| Error::Parse(e.to_string()))?;
    if !header.starts_with(MATRIX_MAGIC) {
        return Err(Error::Parse(format!("not a matrix file: {header:?}")));
    }
    let n = parse_n(header)?;
    let body = &bytes[nl + 1..];
    let want = pair_count(n);
    if body.len() != 8 * want {
        return Err(Error::LengthMismatch {
            expected: 8 * want,
            got: body.len(),
        });
    }
    let entries = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    SymMatrixSample::from_upper(n, entries)
}

/// A sample file of either kind, told apart by its header.
#[derive(Debug, Clone)]
pub enum SampleFile {
    Graph(GraphSample),
    Matrix(SymMatrixSample),
}

pub fn read_sample_file(path: &Path) -> Result<SampleFile> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(GRAPH_MAGIC.as_bytes()) {
        read_graph(bytes.as_slice()).map(SampleFile::Graph)
    } else if bytes.starts_with(MATRIX_MAGIC.as_bytes()) {
        read_matrix(&bytes).map(SampleFile::Matrix)
    } else {
        Err(Error::Parse(format!("{}: unrecognised sample file header", path.display())))
    }
}

pub fn save_graph(g: &GraphSample, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    write_graph(g, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn save_matrix(m: &SymMatrixSample, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    write_matrix(m, &mut w)?;
    w.flush()?;
    Ok(())
}

/// One decimal per line; blank lines and `#` comments are skipped.
pub fn parse_stats(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(k, l)| {
            l.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse(format!("line {}: not a finite number: {l:?}", k + 1)))
        })
        .collect()
}

pub fn read_stats(path: &Path) -> Result<Vec<f64>> {
    parse_stats(&fs::read_to_string(path)?)
}

pub fn write_stats(values: &[f64], w: &mut impl Write) -> Result<()> {
    for v in values {
        writeln!(w, "{v}")?;
    }
    Ok(())
}
