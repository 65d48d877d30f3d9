//! Deterministic spectral embedding of the symmetric normalized adjacency
//! `D^{-1/2} A D^{-1/2}`. Identical inputs always give identical outputs, so
//! it serves as a perfectly stable reference embedder.

use nalgebra::{DMatrix, SymmetricEigen};

use super::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Eigenpairs of the normalized adjacency ordered by decreasing magnitude
/// (ties: larger eigenvalue first). Eigenvectors are the columns, each with
/// its largest-magnitude entry made positive.
pub fn spectral_decomposition(graph: &Graph) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = graph.num_nodes();
    let inv_sqrt_deg: Vec<f64> = graph
        .degrees()
        .iter()
        .map(|&d| if d == 0 { 0.0 } else { 1.0 / (d as f64).sqrt() })
        .collect();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for &(u, v) in graph.edges() {
        let w = inv_sqrt_deg[u] * inv_sqrt_deg[v];
        a[(u, v)] = w;
        a[(v, u)] = w;
    }
    let eig = SymmetricEigen::try_new(a, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("symmetric eigendecomposition did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (eig.eigenvalues[i], eig.eigenvalues[j]);
        b.abs().total_cmp(&a.abs()).then(b.total_cmp(&a)).then(i.cmp(&j))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        let pivot = col
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (k, v)| if v.abs() > best.1.abs() { (k, *v) } else { best });
        if pivot.1 < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    Ok((values, vectors))
}

pub fn spectral_embed(graph: &Graph, dim: usize) -> Result<EmbeddingMatrix> {
    let n = graph.num_nodes();
    if dim > n {
        return Err(Error::InvalidArgument(format!("dim {dim} exceeds node count {n}")));
    }
    if dim == 0 {
        return Err(Error::InvalidArgument("dim must be positive".into()));
    }
    let (_, vectors) = spectral_decomposition(graph)?;
    EmbeddingMatrix::from_dmatrix(&vectors.columns(0, dim).into_owned())
}
