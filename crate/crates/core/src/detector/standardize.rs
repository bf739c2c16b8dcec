use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::matrix::DenseMatrix;

/// Per-column affine scaling fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation per column. Columns whose
    /// deviation does not exceed `eps` keep unit scale.
    pub fn fit(x: &DenseMatrix, eps: f64) -> Self {
        let (n, p) = (x.rows(), x.cols());
        let mut mean = vec![0.0; p];
        let mut var = vec![0.0; p];
        if n > 0 {
            for i in 0..n {
                for (m, v) in mean.iter_mut().zip(x.row(i)) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n as f64);
            for i in 0..n {
                for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                    *s += (v - m).powi(2);
                }
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = if n > 0 { (s / n as f64).sqrt() } else { 0.0 };
                if sd > eps {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.scale.len() == self.mean.len()
            && self.mean.iter().all(|v| v.is_finite())
            && self.scale.iter().all(|s| s.is_finite() && *s > 0.0)
    }

    pub fn transform(&self, x: &DenseMatrix) -> DenseMatrix {
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}

/// Row permutation that sorts `(row, label)` pairs lexicographically, so that
/// fitting is independent of the order rows were supplied in.
pub(crate) fn canonical_order(x: &DenseMatrix, y: &[bool]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.rows()).collect();
    order.sort_by(|&a, &b| {
        for (u, v) in x.row(a).iter().zip(x.row(b)) {
            match u.total_cmp(v) {
                Ordering::Equal => continue,
                other => return other,
            }
        }
        y[a].cmp(&y[b])
    });
    order
}

/// Per-row weights `n / (2 n_c)` that give both classes equal total mass.
pub(crate) fn balanced_weights(y: &[bool]) -> Vec<f64> {
    let n = y.len() as f64;
    let pos = y.iter().filter(|&&v| v).count() as f64;
    let neg = n - pos;
    y.iter()
        .map(|&v| if v { n / (2.0 * pos) } else { n / (2.0 * neg) })
        .collect()
}

#[inline]
/// Logistic function; an undefined margin maps to one half.
pub(crate) fn sigmoid(m: f64) -> f64 {
    if m.is_nan() {
        0.5
    } else if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(m))` without overflow.
#[inline]
pub(crate) fn softplus(m: f64) -> f64 {
    if m > 0.0 {
        m + (-m).exp().ln_1p()
    } else {
        m.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_variance_column_keeps_unit_scale() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 3.0], vec![1.0, 5.0]]).unwrap();
        let s = Standardizer::fit(&x, 1e-12);
        let t = s.transform(&x);
        assert_eq!(t.column_values(0), vec![0.0, 0.0]);
        assert_eq!(t.column_values(1), vec![-1.0, 1.0]);
    }

    #[test]
    fn balanced_weights_equal_mass() {
        let w = balanced_weights(&[true, false, false, false]);
        assert_eq!(w, vec![2.0, 2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0]);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
        assert!((softplus(-800.0)).abs() < 1e-300);
        assert!((softplus(800.0) - 800.0).abs() < 1e-9);
    }
}
