//! Compressed sparse row storage for relation adjacencies and their
//! row-normalized propagation operators.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Binary square adjacency in CSR form. Column indices are sorted and unique
/// within each row; every stored entry has weight one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjacency {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            row_ptr: vec![0; n + 1],
            col_idx: Vec::new(),
        }
    }

    /// Undirected adjacency from an edge list: symmetrized, deduplicated,
    /// self-loops dropped.
    pub fn from_undirected_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut directed = Vec::with_capacity(edges.len() * 2);
        for &(u, v) in edges {
            for idx in [u, v] {
                if idx >= n {
                    return Err(Error::NodeOutOfRange {
                        index: idx,
                        n_nodes: n,
                    });
                }
            }
            if u != v {
                directed.push((u, v));
                directed.push((v, u));
            }
        }
        Ok(Self::from_directed_pairs(n, directed))
    }

    /// Pairs must already be in range and loop-free.
    fn from_directed_pairs(n: usize, mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        pairs.dedup();
        let mut row_ptr = vec![0usize; n + 1];
        for &(u, _) in &pairs {
            row_ptr[u + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = pairs.into_iter().map(|(_, v)| v).collect();
        Self {
            n,
            row_ptr,
            col_idx,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    /// Number of stored (directed) entries; twice the undirected edge count.
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn n_undirected_edges(&self) -> usize {
        self.nnz() / 2
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&j).is_ok()
    }

    /// Undirected edges `(u, v)` with `u < v`, in row order.
    pub fn undirected_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .filter(move |&&v| u < v)
                .map(move |&v| (u, v))
        })
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.neighbors(i).iter().all(|&j| self.contains(j, i)))
    }

    pub fn has_self_loops(&self) -> bool {
        (0..self.n).any(|i| self.contains(i, i))
    }

    /// Indicator of the union of several adjacencies over the same node set.
    pub fn union(layers: &[&Adjacency]) -> Result<Self> {
        let n = layers.first().map_or(0, |a| a.n);
        if layers.iter().any(|a| a.n != n) {
            return Err(Error::Shape("relations differ in node count".into()));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut scratch = Vec::new();
        for i in 0..n {
            scratch.clear();
            for a in layers {
                scratch.extend_from_slice(a.neighbors(i));
            }
            scratch.sort_unstable();
            scratch.dedup();
            col_idx.extend_from_slice(&scratch);
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
        })
    }

    pub fn to_weighted(&self) -> CsrMatrix {
        CsrMatrix {
            n_rows: self.n,
            n_cols: self.n,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: vec![1.0; self.col_idx.len()],
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        self.to_weighted().to_dense()
    }
}

/// Real-valued sparse matrix in CSR form with sorted column indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicate positions are summed.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        for &(r, c, _) in &sorted {
            if r >= n_rows || c >= n_cols {
                return Err(Error::Shape(format!(
                    "entry ({r}, {c}) outside {n_rows}x{n_cols}"
                )));
            }
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().expect("entry pushed for previous triplet") += v;
                continue;
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut row_ptr = Vec::with_capacity(m.rows() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..m.rows() {
            for (j, &v) in m.row(i).iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n_rows: m.rows(),
            n_cols: m.cols(),
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).1.iter().sum()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out.set(i, j, v);
            }
        }
        out
    }

    /// Sparse-dense product `self * x`. Rows are evaluated independently, so
    /// the result does not depend on scheduling.
    pub fn matmul_dense(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_cols != x.rows() {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} sparse by {}x{} dense",
                self.n_rows,
                self.n_cols,
                x.rows(),
                x.cols()
            )));
        }
        let d = x.cols();
        let mut out = vec![0.0; self.n_rows * d];
        if d > 0 {
            out.par_chunks_mut(d).enumerate().for_each(|(i, dst)| {
                let (cols, vals) = self.row(i);
                for (&j, &w) in cols.iter().zip(vals) {
                    for (o, &xv) in dst.iter_mut().zip(x.row(j)) {
                        *o += w * xv;
                    }
                }
            });
        }
        DenseMatrix::from_vec(self.n_rows, d, out)
    }
}

/// Row-stochastic propagation operator `D^-1 A`. Rows of isolated nodes stay
/// entirely zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    matrix: CsrMatrix,
}

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn n_nodes(&self) -> usize {
        self.matrix.n_rows
    }
}

pub fn row_normalize(adj: &CsrMatrix) -> NormalizedAdjacency {
    let mut matrix = adj.clone();
    for i in 0..matrix.n_rows {
        let span = matrix.row_ptr[i]..matrix.row_ptr[i + 1];
        let sum: f64 = matrix.values[span.clone()].iter().sum();
        if sum > 0.0 {
            for v in &mut matrix.values[span] {
                *v /= sum;
            }
        }
    }
    NormalizedAdjacency { matrix }
}

pub fn degrees(adj: &Adjacency) -> Vec<usize> {
    (0..adj.n).map(|i| adj.neighbors(i).len()).collect()
}

/// One propagation step `Ã X`.
pub fn propagate(norm_adj: &NormalizedAdjacency, x: &DenseMatrix) -> Result<DenseMatrix> {
    norm_adj.matrix.matmul_dense(x)
}

/// First- and second-order neighborhood aggregates `(Ã X, Ã² X)`.
pub fn propagate_two_hop(
    norm_adj: &NormalizedAdjacency,
    x: &DenseMatrix,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let h1 = propagate(norm_adj, x)?;
    let h2 = propagate(norm_adj, &h1)?;
    Ok((h1, h2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Adjacency {
        Adjacency::from_undirected_edges(3, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn symmetrizes_single_edge() {
        let a = Adjacency::from_undirected_edges(2, &[(0, 1)]).unwrap();
        assert!(a.contains(0, 1) && a.contains(1, 0));
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn drops_self_loop() {
        let a = Adjacency::from_undirected_edges(1, &[(0, 0)]).unwrap();
        assert_eq!(a.nnz(), 0);
    }

    #[test]
    fn dedups_repeated_edges() {
        let a = Adjacency::from_undirected_edges(2, &[(0, 1), (0, 1), (1, 0)]).unwrap();
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn rejects_out_of_range() {
        let err = Adjacency::from_undirected_edges(2, &[(0, 2)]).unwrap_err();
        assert!(matches!(err, Error::NodeOutOfRange { index: 2, .. }));
    }

    #[test]
    fn degree_examples() {
        assert_eq!(degrees(&path3()), vec![1, 2, 1]);
        assert_eq!(degrees(&Adjacency::empty(3)), vec![0, 0, 0]);
        let k4: Vec<_> = (0..4)
            .flat_map(|u| (u + 1..4).map(move |v| (u, v)))
            .collect();
        let k4 = Adjacency::from_undirected_edges(4, &k4).unwrap();
        assert_eq!(degrees(&k4), vec![3, 3, 3, 3]);
    }

    #[test]
    fn normalize_keeps_zero_row() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 1, 2.0)]).unwrap();
        let n = row_normalize(&m).matrix.to_dense();
        assert_eq!(n.as_slice(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn normalize_splits_equally() {
        let a = Adjacency::from_undirected_edges(3, &[(0, 1), (0, 2)]).unwrap();
        let n = row_normalize(&a.to_weighted()).matrix.to_dense();
        assert_eq!(n.row(0), &[0.0, 0.5, 0.5]);
    }

    #[test]
    fn normalize_empty_is_zero() {
        let n = row_normalize(&Adjacency::empty(3).to_weighted());
        assert!(n.matrix.to_dense().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn propagate_path_scalar() {
        let n = row_normalize(&path3().to_weighted());
        let x = DenseMatrix::column(vec![1.0, 2.0, 3.0]);
        let h1 = propagate(&n, &x).unwrap();
        assert_eq!(h1.as_slice(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn propagate_isolated_row_is_zero() {
        let a = Adjacency::from_undirected_edges(3, &[(0, 1)]).unwrap();
        let n = row_normalize(&a.to_weighted());
        let x = DenseMatrix::column(vec![5.0, 7.0, 9.0]);
        let h1 = propagate(&n, &x).unwrap();
        assert_eq!(h1.get(2, 0), 0.0);
    }

    #[test]
    fn propagate_shape_mismatch() {
        let n = row_normalize(&path3().to_weighted());
        let x = DenseMatrix::zeros(2, 1);
        assert!(matches!(propagate(&n, &x), Err(Error::Shape(_))));
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(1, 2, &[(0, 1, 1.0), (0, 1, 2.5)]).unwrap();
        assert_eq!(m.to_dense().as_slice(), &[0.0, 3.5]);
    }
}
