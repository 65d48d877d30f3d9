//! Embedding matrices and the embedders that produce them.

mod node2vec;
mod spectral;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numeric::fmt_f64;

pub use node2vec::{node2vec_lite, Node2vecConfig};
pub use spectral::{spectral_decomposition, spectral_embed};

/// An `N x D` matrix whose row `i` embeds node `i`. Stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    num_nodes: usize,
    dim: usize,
    values: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(num_nodes: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_nodes * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {num_nodes}x{dim} embedding",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite entry at row {}, column {}",
                pos / dim.max(1),
                pos % dim.max(1)
            )));
        }
        Ok(Self { num_nodes, dim, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.num_nodes, self.dim)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact panics on a zero chunk size; a zero-dim matrix has empty rows.
        let dim = self.dim;
        (0..self.num_nodes).map(move |i| &self.values[i * dim..(i + 1) * dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.num_nodes, self.dim, &self.values)
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Result<Self> {
        let (n, d) = m.shape();
        let mut values = Vec::with_capacity(n * d);
        for i in 0..n {
            values.extend(m.row(i).iter().copied());
        }
        Self::new(n, d, values)
    }

    /// Frobenius norm of `self - other`.
    pub fn frobenius_distance(&self, other: &Self) -> Result<f64> {
        check_same_shape(self, other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

pub(crate) fn check_same_shape(a: &EmbeddingMatrix, b: &EmbeddingMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "embeddings have shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

const EMBEDDING_MAGIC: &str = "EMB1";

/// Writes `EMB1 <N> <D>` followed by one `<index> <v1> .. <vD>` line per node.
/// Values use 17 significant digits so reading back is bit-exact.
pub fn write_embedding(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "{EMBEDDING_MAGIC} {} {}", matrix.num_nodes, matrix.dim)?;
        for (i, row) in matrix.rows().enumerate() {
            write!(w, "{i}")?;
            for &v in row {
                write!(w, " {}", fmt_f64(v))?;
            }
            writeln!(w)?;
        }
        w.flush()
    };
    body().map_err(|e| Error::io(path, e))
}

pub fn read_embedding(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (n, d) = parse_header(path, lines.next(), EMBEDDING_MAGIC)?;
    let mut values = Vec::with_capacity(n * d);
    let mut rows = 0;
    for (idx, line) in lines {
        let lineno = idx + 1;
        if rows == n {
            return Err(Error::parse(path, lineno, format!("more than the declared {n} rows")));
        }
        let mut tokens = line.split_whitespace();
        let node: usize = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::parse(path, lineno, "missing node index"))?;
        if node != rows {
            return Err(Error::parse(path, lineno, format!("expected node index {rows}, got {node}")));
        }
        let before = values.len();
        parse_floats(path, lineno, tokens, &mut values)?;
        if values.len() - before != d {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {d} values, got {}", values.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::parse(path, 1, format!("header declares {n} rows, file has {rows}")));
    }
    EmbeddingMatrix::new(n, d, values)
}

pub(crate) fn parse_header(
    path: &Path,
    line: Option<(usize, &str)>,
    magic: &str,
) -> Result<(usize, usize)> {
    let (idx, line) = line.ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let tokens: Vec<&str> = line.split_whitespace().collect();
    match tokens.as_slice() {
        [m, a, b] if *m == magic => match (a.parse(), b.parse()) {
            (Ok(a), Ok(b)) => Ok((a, b)),
            _ => Err(Error::parse(path, idx + 1, format!("bad {magic} header {line:?}"))),
        },
        _ => Err(Error::parse(path, idx + 1, format!("expected `{magic} <rows> <cols>` header, got {line:?}"))),
    }
}

pub(crate) fn parse_floats<'a>(
    path: &Path,
    lineno: usize,
    tokens: impl Iterator<Item = &'a str>,
    out: &mut Vec<f64>,
) -> Result<()> {
    for t in tokens {
        let v: f64 = t
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad number {t:?}")))?;
        if !v.is_finite() {
            return Err(Error::parse(path, lineno, format!("non-finite value {t:?}")));
        }
        out.push(v);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn round_trip_is_bit_exact() {
        let m = EmbeddingMatrix::new(2, 2, vec![0.1, -1.0 / 3.0, 1e-300, 12345.678901234567]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_embedding(&m, f.path()).unwrap();
        let back = read_embedding(f.path()).unwrap();
        let bits = |m: &EmbeddingMatrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&m), bits(&back));
    }

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn short_file_rejected() {
        let f = file("EMB1 3 4\n0 1 2 3 4\n1 1 2 3 4\n");
        assert!(matches!(read_embedding(f.path()), Err(Error::Parse { .. })));
    }

    #[test]
    fn malformed_inputs_rejected() {
        for text in [
            "EMB2 1 1\n0 1\n",
            "EMB1 1 2\n0 1\n",
            "EMB1 1 1\n0 NaN\n",
            "EMB1 1 1\n0 inf\n",
            "EMB1 2 1\n1 0.5\n0 0.5\n",
            "EMB1 1 1\n0 1\n1 1\n",
        ] {
            assert!(read_embedding(file(text).path()).is_err(), "{text:?}");
        }
    }

    #[test]
    fn large_external_shape() {
        let (n, d) = (2708, 128);
        let mut text = format!("EMB1 {n} {d}\n");
        for i in 0..n {
            text.push_str(&i.to_string());
            for j in 0..d {
                text.push_str(&format!(" {}", (i * d + j) as f64 * 1e-3));
            }
            text.push('\n');
        }
        let m = read_embedding(file(&text).path()).unwrap();
        assert_eq!(m.shape(), (2708, 128));
    }

    #[test]
    fn non_finite_construction_fails() {
        assert!(EmbeddingMatrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(EmbeddingMatrix::new(1, 2, vec![1.0]).is_err());
    }
}
