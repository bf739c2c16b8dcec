//! Centered truncated SVD subspaces, shared by the reconstruction evidence and
//! the per-relation projections of the detector bank.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::matrix::DenseMatrix;

/// Singular values at or below this fraction of the largest one are treated
/// as numerically zero.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipalSubspace {
    center: Vec<f64>,
    /// Orthonormal basis vectors, one per retained direction, ordered by
    /// decreasing singular value.
    basis: Vec<Vec<f64>>,
}

impl PrincipalSubspace {
    /// Fits the top `max_rank` right singular directions of the mean-centered
    /// rows of `x`. The rank is further capped by the number of rows, the
    /// dimension and the numerical rank of the centered data.
    pub fn fit(x: &DenseMatrix, max_rank: usize) -> Self {
        let (n, d) = (x.rows(), x.cols());
        let mut center = vec![0.0; d];
        if n > 0 {
            for i in 0..n {
                for (c, v) in center.iter_mut().zip(x.row(i)) {
                    *c += v;
                }
            }
            for c in &mut center {
                *c /= n as f64;
            }
        }
        let cap = max_rank.min(d).min(n);
        if cap == 0 {
            return Self {
                center,
                basis: Vec::new(),
            };
        }

        let centered = DMatrix::from_fn(n, d, |i, j| x.get(i, j) - center[j]);
        let svd = centered.svd(false, true);
        let v_t = svd.v_t.expect("right singular vectors requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| {
            svd.singular_values[b]
                .total_cmp(&svd.singular_values[a])
                .then(a.cmp(&b))
        });
        let top = order.first().map_or(0.0, |&k| svd.singular_values[k]);
        let basis = order
            .into_iter()
            .take(cap)
            .filter(|&k| {
                let s = svd.singular_values[k];
                s > 0.0 && s > RANK_TOLERANCE * top
            })
            .map(|k| {
                let mut v: Vec<f64> = v_t.row(k).iter().copied().collect();
                canonical_sign(&mut v);
                v
            })
            .collect();
        Self { center, basis }
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// Coordinates of `x - center` along each basis vector.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.basis
            .iter()
            .map(|b| {
                b.iter()
                    .zip(x.iter().zip(&self.center))
                    .map(|(bj, (xj, cj))| bj * (xj - cj))
                    .sum()
            })
            .collect()
    }

    /// `center + B Bᵀ (x - center)`, optionally using only the leading `rank`
    /// basis vectors.
    pub fn reconstruct_with_rank(&self, x: &[f64], rank: usize) -> Vec<f64> {
        let coords = self.project(x);
        let mut out = self.center.clone();
        for (b, c) in self.basis.iter().zip(coords).take(rank) {
            for (o, bj) in out.iter_mut().zip(b) {
                *o += c * bj;
            }
        }
        out
    }

    pub fn reconstruct(&self, x: &[f64]) -> Vec<f64> {
        self.reconstruct_with_rank(x, self.rank())
    }
}

/// Flips `v` so that its largest-magnitude entry is positive.
fn canonical_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (j, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = j;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}
