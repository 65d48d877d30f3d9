//! Representational similarity between two embeddings of the same nodes.
//!
//! Global measures: aligned cosine similarity (after orthogonal Procrustes
//! alignment) and distance correlation of double-centered Euclidean
//! distance matrices. Local measures: k-NN Jaccard similarity and
//! second-order cosine similarity over cosine nearest neighbors.
//!
//! Conventions: cosine with a zero vector is 0; zero-norm rows rank last in
//! neighbor lists; neighbor ties go to the smaller node index; a node is
//! never its own neighbor.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::embed::{check_same_shape, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, cosine, dot, norm, CompensatedSum};

/// Neighborhood size used when none is given.
pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsmKind {
    EuclideanDistance,
    Cosine,
}

/// Dense `N x N` matrix of pairwise instance similarities or distances.
#[derive(Debug, Clone, PartialEq)]
pub struct RsmMatrix {
    n: usize,
    values: Vec<f64>,
    centered: bool,
}

impl RsmMatrix {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Subtracts row means and column means and adds back the grand mean.
    pub fn double_centered(&self) -> RsmMatrix {
        let n = self.n;
        if n == 0 {
            return RsmMatrix { n, values: Vec::new(), centered: true };
        }
        let inv = 1.0 / n as f64;
        let row_means: Vec<f64> = (0..n).map(|i| compensated_sum(self.row(i).iter().copied()) * inv).collect();
        let col_means: Vec<f64> = (0..n)
            .map(|j| compensated_sum((0..n).map(|i| self.get(i, j))) * inv)
            .collect();
        let grand = compensated_sum(row_means.iter().copied()) * inv;
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(self.get(i, j) - row_means[i] - col_means[j] + grand);
            }
        }
        RsmMatrix { n, values, centered: true }
    }
}

pub fn build_rsm(z: &EmbeddingMatrix, kind: RsmKind) -> RsmMatrix {
    let n = z.num_nodes();
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let zi = z.row(i);
            (0..n).map(move |j| {
                let zj = z.row(j);
                match kind {
                    RsmKind::EuclideanDistance => euclidean(zi, zj),
                    RsmKind::Cosine => cosine(zi, zj),
                }
            })
        })
        .collect();
    RsmMatrix { n, values, centered: false }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Orthogonal `D x D` matrix mapping one embedding onto another.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMatrix {
    q: DMatrix<f64>,
}

impl AlignmentMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// Largest entry of `|QᵀQ - I|`.
    pub fn orthogonality_error(&self) -> f64 {
        let d = self.q.nrows();
        (self.q.transpose() * &self.q - DMatrix::<f64>::identity(d, d)).abs().max()
    }

    pub fn apply(&self, z: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        if z.dim() != self.q.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "alignment is {0}x{0}, embedding has dim {1}",
                self.q.nrows(),
                z.dim()
            )));
        }
        EmbeddingMatrix::from_dmatrix(&(z.to_dmatrix() * &self.q))
    }
}

/// Solves `argmin_{Q in O(D)} ||Z Q - Z2||_F` as `Q = U Vᵀ` from the SVD
/// `Zᵀ Z2 = U Σ Vᵀ`. Reflections are allowed.
pub fn procrustes_align(z: &EmbeddingMatrix, z2: &EmbeddingMatrix) -> Result<AlignmentMatrix> {
    check_same_shape(z, z2)?;
    let cross = z.to_dmatrix().transpose() * z2.to_dmatrix();
    if cross.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite cross-covariance in Procrustes alignment".into()));
    }
    let svd = cross
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Numeric("SVD factors missing".into())),
    };
    Ok(AlignmentMatrix { q: u * v_t })
}

/// Mean cosine similarity between `z_i Q*` and `z2_i`.
pub fn aligned_cosine_similarity(z: &EmbeddingMatrix, z2: &EmbeddingMatrix) -> Result<f64> {
    let q = procrustes_align(z, z2)?;
    let aligned = q.apply(z)?;
    let n = z.num_nodes();
    if n == 0 {
        return Err(Error::InvalidData("empty embedding".into()));
    }
    let sims: Vec<f64> = (0..n).map(|i| cosine(aligned.row(i), z2.row(i))).collect();
    Ok(compensated_sum(sims) / n as f64)
}

/// Squared sample distance covariance of two double-centered matrices.
pub fn dcov2(a: &RsmMatrix, b: &RsmMatrix) -> f64 {
    let n = a.size() as f64;
    let acc: CompensatedSum = a.values.iter().zip(&b.values).map(|(x, y)| x * y).collect();
    acc.value() / (n * n)
}

/// Distance correlation between the Euclidean distance structures of two
/// embeddings with the same node count (dimensions may differ).
pub fn distance_correlation(z: &EmbeddingMatrix, z2: &EmbeddingMatrix) -> Result<f64> {
    if z.num_nodes() != z2.num_nodes() {
        return Err(Error::ShapeMismatch(format!(
            "node counts differ: {} vs {}",
            z.num_nodes(),
            z2.num_nodes()
        )));
    }
    if z.num_nodes() < 2 {
        return Err(Error::InvalidData("distance correlation needs at least two nodes".into()));
    }
    let a = build_rsm(z, RsmKind::EuclideanDistance).double_centered();
    let b = build_rsm(z2, RsmKind::EuclideanDistance).double_centered();
    let (aa, bb) = (dcov2(&a, &a), dcov2(&b, &b));
    if aa <= 0.0 || bb <= 0.0 {
        return Err(Error::ZeroSelfCovariance { measure: "dist_corr" });
    }
    let ab = dcov2(&a, &b).max(0.0);
    Ok((ab / (aa * bb).sqrt()).sqrt())
}

/// Exact k nearest neighbors of every node under cosine similarity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborIndex {
    k: usize,
    lists: Vec<Vec<usize>>,
}

impl NeighborIndex {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_nodes(&self) -> usize {
        self.lists.len()
    }

    /// Neighbors of `i`, most similar first.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.lists[i]
    }
}

fn rank_key(dot_ij: f64, ni: f64, nj: f64) -> f64 {
    if ni == 0.0 || nj == 0.0 {
        f64::NEG_INFINITY
    } else {
        dot_ij / (ni * nj)
    }
}

fn by_similarity_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

pub fn knn_index(z: &EmbeddingMatrix, k: usize) -> Result<NeighborIndex> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let n = z.num_nodes();
    let norms: Vec<f64> = z.rows().map(norm).collect();
    let take = k.min(n.saturating_sub(1));
    let lists = (0..n)
        .into_par_iter()
        .map(|i| {
            let zi = z.row(i);
            let mut cands: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (rank_key(dot(zi, z.row(j)), norms[i], norms[j]), j))
                .collect();
            if take < cands.len() && take > 0 {
                cands.select_nth_unstable_by(take - 1, by_similarity_then_index);
                cands.truncate(take);
            }
            cands.sort_unstable_by(by_similarity_then_index);
            cands.truncate(take);
            cands.into_iter().map(|(_, j)| j).collect()
        })
        .collect();
    Ok(NeighborIndex { k, lists })
}

fn check_same_nodes(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!("node counts differ: {a} vs {b}")));
    }
    if a < 2 {
        return Err(Error::InvalidData("neighborhood measures need at least two nodes".into()));
    }
    Ok(())
}

fn sorted_union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut u: Vec<usize> = a.iter().chain(b).copied().collect();
    u.sort_unstable();
    u.dedup();
    u
}

pub fn knn_jaccard(z: &EmbeddingMatrix, z2: &EmbeddingMatrix, k: usize) -> Result<f64> {
    check_same_nodes(z.num_nodes(), z2.num_nodes())?;
    knn_jaccard_from_indices(&knn_index(z, k)?, &knn_index(z2, k)?)
}

/// k-NN Jaccard similarity from precomputed neighbor indices.
pub fn knn_jaccard_from_indices(a: &NeighborIndex, b: &NeighborIndex) -> Result<f64> {
    check_same_nodes(a.num_nodes(), b.num_nodes())?;
    let n = a.num_nodes();
    let per_node = (0..n).map(|i| {
        let union = sorted_union(a.neighbors(i), b.neighbors(i)).len();
        let inter = a.neighbors(i).len() + b.neighbors(i).len() - union;
        inter as f64 / union as f64
    });
    Ok(compensated_sum(per_node) / n as f64)
}

pub fn second_order_cosine(z: &EmbeddingMatrix, z2: &EmbeddingMatrix, k: usize) -> Result<f64> {
    check_same_nodes(z.num_nodes(), z2.num_nodes())?;
    second_order_cosine_with_indices(z, z2, &knn_index(z, k)?, &knn_index(z2, k)?)
}

/// Second-order cosine similarity: per node, compare the two embeddings'
/// cosine-similarity profiles over the ascending union of both neighbor
/// sets. A node whose profile is all zeros in either embedding contributes 0.
pub fn second_order_cosine_with_indices(
    z: &EmbeddingMatrix,
    z2: &EmbeddingMatrix,
    a: &NeighborIndex,
    b: &NeighborIndex,
) -> Result<f64> {
    check_same_nodes(z.num_nodes(), z2.num_nodes())?;
    check_same_nodes(a.num_nodes(), z.num_nodes())?;
    check_same_nodes(b.num_nodes(), z.num_nodes())?;
    let n = z.num_nodes();
    let per_node: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let union = sorted_union(a.neighbors(i), b.neighbors(i));
            let p1: Vec<f64> = union.iter().map(|&j| cosine(z.row(i), z.row(j))).collect();
            let p2: Vec<f64> = union.iter().map(|&j| cosine(z2.row(i), z2.row(j))).collect();
            cosine(&p1, &p2)
        })
        .collect();
    Ok(compensated_sum(per_node) / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(rows: &[&[f64]]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn rotation2(theta: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
    }

    fn transform(z: &EmbeddingMatrix, r: &DMatrix<f64>) -> EmbeddingMatrix {
        EmbeddingMatrix::from_dmatrix(&(z.to_dmatrix() * r)).unwrap()
    }

    #[test]
    fn procrustes_recovers_rotation() {
        let z = emb(&[&[1.0, 2.0], &[-0.5, 0.3], &[2.0, -1.0], &[0.1, 0.7]]);
        let r = rotation2(0.7);
        let z2 = transform(&z, &r);
        let q = procrustes_align(&z, &z2).unwrap();
        assert!(q.orthogonality_error() < 1e-12);
        assert!(q.apply(&z).unwrap().frobenius_distance(&z2).unwrap() < 1e-12);
    }

    #[test]
    fn procrustes_self_is_identity() {
        let z = emb(&[&[1.0, 2.0], &[-0.5, 0.3], &[2.0, -1.0]]);
        let q = procrustes_align(&z, &z).unwrap();
        assert!((q.matrix() - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-12);
    }

    #[test]
    fn aligned_cos_sign_flip() {
        let z = emb(&[&[1.0, 2.0], &[-0.5, 0.3], &[2.0, -1.0]]);
        let neg = transform(&z, &(-DMatrix::<f64>::identity(2, 2)));
        assert!((aligned_cosine_similarity(&z, &neg).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn aligned_cos_hand_case_matches_angle_grid() {
        // Z = I, Z2 rows both e1. ZᵀZ2 = [[1,0],[1,0]]; best map sends both rows
        // as close to e1 as possible.
        let z = emb(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let z2 = emb(&[&[1.0, 0.0], &[1.0, 0.0]]);
        let value = aligned_cosine_similarity(&z, &z2).unwrap();
        // Oracle: scan rotations and reflections of O(2) on a fine grid,
        // choosing Q by Frobenius fit and reporting the mean cosine.
        let mut best = (f64::INFINITY, 0.0);
        let steps = (2.0 * std::f64::consts::PI / 1e-4) as usize;
        for s in 0..=steps {
            let t = s as f64 * 1e-4;
            let (c, sn) = (t.cos(), t.sin());
            for q in [[c, -sn, sn, c], [c, sn, sn, -c]] {
                // rows of ZQ are the rows of Q since Z = I
                let rows = [[q[0], q[1]], [q[2], q[3]]];
                let fit: f64 = rows.iter().map(|r| (r[0] - 1.0).powi(2) + r[1].powi(2)).sum();
                if fit < best.0 {
                    let cos: f64 = rows.iter().map(|r| r[0] / (r[0].hypot(r[1]))).sum::<f64>() / 2.0;
                    best = (fit, cos);
                }
            }
        }
        assert!((value - best.1).abs() < 1e-7, "{value} vs {}", best.1);
        assert!((value - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn rsm_entries() {
        let z = emb(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 2.0]]);
        let d = build_rsm(&z, RsmKind::EuclideanDistance);
        assert_eq!(d.get(0, 1), 0.0);
        assert!((d.get(0, 2) - 5f64.sqrt()).abs() < 1e-15);
        let c = build_rsm(&z, RsmKind::Cosine);
        for i in 0..3 {
            assert!((c.get(i, i) - 1.0).abs() < 1e-15);
        }
        assert_eq!(c.get(0, 2), 0.0);
        assert_eq!(d.max_asymmetry(), 0.0);
    }

    #[test]
    fn double_centering_zeroes_means() {
        let z = emb(&[&[0.3, 1.0], &[-2.0, 0.5], &[4.0, 4.0], &[1.0, -1.0]]);
        let c = build_rsm(&z, RsmKind::EuclideanDistance).double_centered();
        assert!(c.is_centered());
        for i in 0..4 {
            let row: f64 = c.row(i).iter().sum();
            let col: f64 = (0..4).map(|r| c.get(r, i)).sum();
            assert!(row.abs() < 1e-12 && col.abs() < 1e-12);
        }
    }

    #[test]
    fn dist_corr_self_and_similarity_transform() {
        let z = emb(&[&[0.3, 1.0], &[-2.0, 0.5], &[4.0, 4.0], &[1.0, -1.0], &[0.0, 0.2]]);
        assert!((distance_correlation(&z, &z).unwrap() - 1.0).abs() < 1e-10);
        let r = rotation2(1.1) * 3.5;
        let moved = transform(&z, &r);
        let shifted: Vec<Vec<f64>> = moved.rows().map(|r| vec![r[0] + 10.0, r[1] - 4.0]).collect();
        let z2 = EmbeddingMatrix::from_rows(&shifted).unwrap();
        assert!((distance_correlation(&z, &z2).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn dist_corr_coincident_points_error() {
        let z = emb(&[&[1.0], &[1.0], &[1.0]]);
        let z2 = emb(&[&[0.0], &[1.0], &[2.0]]);
        assert!(matches!(distance_correlation(&z, &z2), Err(Error::ZeroSelfCovariance { .. })));
    }

    #[test]
    fn knn_basic_rules() {
        let z = emb(&[&[1.0, 0.1], &[1.0, 0.2], &[1.0, 1.0]]);
        let idx = knn_index(&z, 1).unwrap();
        assert_eq!(idx.neighbors(0), &[1]);
        assert_eq!(idx.neighbors(1), &[0]);
        assert_eq!(idx.neighbors(2), &[1]);
        let all = knn_index(&z, 5).unwrap();
        assert_eq!(all.neighbors(0), &[1, 2]);
        assert_eq!(all.neighbors(2), &[1, 0]);
    }

    #[test]
    fn knn_ties_and_zero_rows() {
        let z = emb(&[&[1.0, 1.0], &[0.0, 0.0], &[2.0, 0.0], &[2.0, 0.0], &[1.0, 0.0]]);
        let idx = knn_index(&z, 4).unwrap();
        assert_eq!(idx.neighbors(0), &[2, 3, 4, 1]);
        assert_eq!(idx.neighbors(4), &[2, 3, 0, 1]);
        assert_eq!(idx.neighbors(1), &[0, 2, 3, 4]);
        assert!(knn_index(&z, 0).is_err());
    }

    #[test]
    fn jaccard_disjoint_is_zero() {
        // Two pairs of near-identical directions; second embedding swaps the pairing.
        let z = emb(&[&[1.0, 0.0], &[1.0, 0.01], &[0.0, 1.0], &[0.01, 1.0]]);
        let z2 = emb(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.01], &[0.01, 1.0]]);
        assert_eq!(knn_jaccard(&z, &z2, 1).unwrap(), 0.0);
        assert_eq!(knn_jaccard(&z, &z, 1).unwrap(), 1.0);
    }

    #[test]
    fn second_order_self_and_rotation() {
        let z = emb(&[&[0.3, 1.0], &[-2.0, 0.5], &[4.0, 4.0], &[1.0, -1.0], &[0.0, 0.2]]);
        assert!((second_order_cosine(&z, &z, 2).unwrap() - 1.0).abs() < 1e-12);
        let z2 = transform(&z, &rotation2(2.0));
        assert!((second_order_cosine(&z, &z2, 2).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn shape_checks() {
        let a = emb(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let b = emb(&[&[1.0], &[0.5]]);
        assert!(matches!(aligned_cosine_similarity(&a, &b), Err(Error::ShapeMismatch(_))));
        assert!(distance_correlation(&a, &b).is_ok());
        let c = emb(&[&[1.0], &[0.5], &[0.2]]);
        assert!(matches!(knn_jaccard(&a, &c, 1), Err(Error::ShapeMismatch(_))));
    }
}
