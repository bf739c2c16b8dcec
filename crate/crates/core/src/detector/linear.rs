//! Class-balanced L2-regularized logistic regression fitted by damped Newton
//! iterations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::standardize::{balanced_weights, canonical_order, sigmoid, softplus, Standardizer};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearConfig {
    pub l2: f64,
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            max_iter: 1000,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    standardizer: Standardizer,
    weights: Vec<f64>,
    bias: f64,
    iterations: usize,
}

impl LinearModel {
    /// Untrained model: zero weights and bias, scores 0.5 everywhere.
    pub fn zeros(width: usize) -> Self {
        let identity = Standardizer::fit(&DenseMatrix::zeros(0, width), 0.0);
        Self {
            standardizer: identity,
            weights: vec![0.0; width],
            bias: 0.0,
            iterations: 0,
        }
    }

    pub fn width(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn fit(x: &DenseMatrix, y: &[bool], config: &LinearConfig, eps: f64) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::Shape(format!(
                "{} rows but {} labels",
                x.rows(),
                y.len()
            )));
        }
        if x.rows() == 0 {
            return Err(Error::EmptyTrainingSet);
        }
        if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
            return Err(Error::SingleClass);
        }
        let order = canonical_order(x, y);
        let x = x.select_rows(&order);
        let y: Vec<bool> = order.iter().map(|&i| y[i]).collect();

        let standardizer = Standardizer::fit(&x, eps);
        let xs = standardizer.transform(&x);
        let (weights, bias, iterations) = newton(&xs, &y, config);
        Ok(Self {
            standardizer,
            weights,
            bias,
            iterations,
        })
    }

    pub fn score(&self, x: &DenseMatrix) -> Result<Vec<f64>> {
        if x.cols() != self.width() || self.standardizer.width() != self.width() {
            return Err(Error::Shape(format!(
                "linear detector fitted on width {}, got {}",
                self.width(),
                x.cols()
            )));
        }
        let xs = self.standardizer.transform(x);
        Ok((0..xs.rows())
            .map(|i| sigmoid(margin(&self.weights, self.bias, xs.row(i))))
            .collect())
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.standardizer.width() != self.width() {
            return Err(Error::Blob("standardizer width mismatch".into()));
        }
        if !self.standardizer.is_finite()
            || !self.bias.is_finite()
            || self.weights.iter().any(|w| !w.is_finite())
        {
            return Err(Error::Blob("non-finite linear parameters".into()));
        }
        Ok(())
    }
}

#[inline]
fn margin(w: &[f64], b: f64, row: &[f64]) -> f64 {
    b + w.iter().zip(row).map(|(a, c)| a * c).sum::<f64>()
}

fn objective(xs: &DenseMatrix, y: &[bool], cw: &[f64], w: &[f64], b: f64, l2: f64) -> f64 {
    let n = xs.rows() as f64;
    let data: f64 = (0..xs.rows())
        .map(|i| {
            let m = margin(w, b, xs.row(i));
            cw[i] * (softplus(m) - if y[i] { m } else { 0.0 })
        })
        .sum();
    data / n + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
}

/// Minimizes the weighted mean log-loss plus `l2/2 |w|^2` (bias unpenalized).
/// Returns `(weights, bias, iterations)`.
fn newton(xs: &DenseMatrix, y: &[bool], config: &LinearConfig) -> (Vec<f64>, f64, usize) {
    let (n, p) = (xs.rows(), xs.cols());
    let nf = n as f64;
    let cw = balanced_weights(y);
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let mut f = objective(xs, y, &cw, &w, b, config.l2);
    let mut iterations = 0;

    while iterations < config.max_iter {
        let mut grad = DVector::<f64>::zeros(p + 1);
        let mut hess = DMatrix::<f64>::zeros(p + 1, p + 1);
        for i in 0..n {
            let row = xs.row(i);
            let prob = sigmoid(margin(&w, b, row));
            let r = cw[i] * (prob - if y[i] { 1.0 } else { 0.0 }) / nf;
            let h = cw[i] * prob * (1.0 - prob) / nf;
            for j in 0..p {
                grad[j] += r * row[j];
            }
            grad[p] += r;
            if h > 0.0 {
                for j in 0..p {
                    let hj = h * row[j];
                    for k in 0..=j {
                        hess[(j, k)] += hj * row[k];
                    }
                    hess[(p, j)] += hj;
                }
                hess[(p, p)] += h;
            }
        }
        for j in 0..p {
            grad[j] += config.l2 * w[j];
            hess[(j, j)] += config.l2;
            for k in 0..j {
                hess[(k, j)] = hess[(j, k)];
            }
            hess[(j, p)] = hess[(p, j)];
        }
        if grad.norm() <= config.tolerance {
            break;
        }
        iterations += 1;

        let step = solve_damped(&hess, &grad);
        let slope = -grad.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let w_new: Vec<f64> = w.iter().enumerate().map(|(j, v)| v + t * step[j]).collect();
            let b_new = b + t * step[p];
            let f_new = objective(xs, y, &cw, &w_new, b_new, config.l2);
            if f_new <= f - 1e-4 * t * slope.abs() || (f_new < f && t < 1e-6) {
                w = w_new;
                b = b_new;
                f = f_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (w, b, iterations)
}

/// Solves `(H + δI) s = -g`, raising `δ` until the system is positive definite.
fn solve_damped(hess: &DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    let dim = hess.nrows();
    let mut delta = 1e-10;
    loop {
        let mut h = hess.clone();
        for j in 0..dim {
            h[(j, j)] += delta;
        }
        if let Some(chol) = h.cholesky() {
            return -chol.solve(grad);
        }
        delta *= 100.0;
        if delta > 1e6 {
            return -grad.clone();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (DenseMatrix, Vec<bool>) {
        let rows = vec![
            vec![0.0, 0.1],
            vec![0.2, 0.3],
            vec![0.1, 0.5],
            vec![1.0, 1.2],
            vec![1.3, 0.9],
            vec![1.1, 1.4],
        ];
        let y = vec![false, false, false, true, true, true];
        (DenseMatrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn untrained_scores_half() {
        let m = LinearModel::zeros(3);
        let s = m.score(&DenseMatrix::from_vec(2, 3, vec![1.0, -4.0, 2.0, 0.0, 7.0, 1.0]).unwrap()).unwrap();
        assert_eq!(s, vec![0.5, 0.5]);
    }

    #[test]
    fn separable_toy_is_fit_exactly() {
        let (x, y) = toy();
        let m = LinearModel::fit(&x, &y, &LinearConfig::default(), 1e-12).unwrap();
        let s = m.score(&x).unwrap();
        for (p, &label) in s.iter().zip(&y) {
            assert_eq!(*p >= 0.5, label);
        }
    }

    #[test]
    fn converges_within_tolerance() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0], vec![1.5]];
        let y = vec![false, true, false, true, true];
        let x = DenseMatrix::from_rows(&rows).unwrap();
        let m = LinearModel::fit(&x, &y, &LinearConfig::default(), 1e-12).unwrap();
        assert!(m.iterations() < 100);
    }

    #[test]
    fn single_class_rejected() {
        let (x, _) = toy();
        let y = vec![true; 6];
        assert!(matches!(
            LinearModel::fit(&x, &y, &LinearConfig::default(), 1e-12),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn standardized_zero_row_scores_sigmoid_bias() {
        let (x, y) = toy();
        let m = LinearModel::fit(&x, &y, &LinearConfig::default(), 1e-12).unwrap();
        let mean_row: Vec<f64> = (0..2)
            .map(|j| x.column_values(j).iter().sum::<f64>() / 6.0)
            .collect();
        let s = m.score(&DenseMatrix::from_rows(&[mean_row]).unwrap()).unwrap();
        assert!((s[0] - sigmoid(m.bias())).abs() < 1e-12);
    }

    #[test]
    fn width_mismatch_rejected() {
        let (x, y) = toy();
        let m = LinearModel::fit(&x, &y, &LinearConfig::default(), 1e-12).unwrap();
        assert!(m.score(&DenseMatrix::zeros(1, 3)).is_err());
    }
}
