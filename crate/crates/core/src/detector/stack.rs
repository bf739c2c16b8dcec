//! Stratified cross-fitting of the base detectors and the stacked
//! meta-detector.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linear::LinearModel;
use super::standardize::canonical_order;
use super::tree::BoostedTrees;
use super::DetectorConfig;
use crate::error::Result;
use crate::matrix::DenseMatrix;

/// Score used for held-out rows whose fold model saw a single class.
pub const UNINFORMATIVE_SCORE: f64 = 0.5;

/// The two base detectors whose scores form `ψ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasePair {
    pub linear: LinearModel,
    pub tree: BoostedTrees,
}

impl BasePair {
    pub fn fit(x: &DenseMatrix, y: &[bool], config: &DetectorConfig) -> Result<Self> {
        Ok(Self {
            linear: LinearModel::fit(x, y, &config.linear, config.epsilon)?,
            tree: BoostedTrees::fit(x, y, &config.tree)?,
        })
    }

    /// `N x 2` matrix `[linear | tree]`.
    pub fn score(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let lin = DenseMatrix::column(self.linear.score(x)?);
        let tree = DenseMatrix::column(self.tree.score(x)?);
        lin.hconcat(&tree)
    }
}

/// Which training rows each fold model was fitted on, for leakage audits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossFitRecord {
    /// Fold of each training row, in the caller's row order.
    pub fold_of_row: Vec<usize>,
    /// Rows (caller's order) each fold model was trained on.
    pub fold_train_rows: Vec<Vec<usize>>,
}

pub struct CrossFit {
    /// Out-of-fold base scores for every training row, `n_train x 2`.
    pub oof: DenseMatrix,
    pub full: BasePair,
    pub record: CrossFitRecord,
}

pub fn fold_count(y: &[bool], max_folds: usize) -> usize {
    let pos = y.iter().filter(|&&v| v).count();
    let min_class = pos.min(y.len() - pos);
    max_folds.min(min_class).max(2)
}

/// Stratified fold ids for rows in canonical order. Each class is shuffled
/// with `seed` and dealt round-robin.
fn stratified_folds(y: &[bool], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; y.len()];
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            folds[i] = pos % k;
        }
    }
    folds
}

/// Cross-fits linear and tree base detectors on `x`/`y` (training rows only)
/// and refits both on all rows.
pub fn cross_fit(
    x: &DenseMatrix,
    y: &[bool],
    seed: u64,
    config: &DetectorConfig,
) -> Result<CrossFit> {
    let full = BasePair::fit(x, y, config)?;
    let order = canonical_order(x, y);
    let y_canon: Vec<bool> = order.iter().map(|&i| y[i]).collect();
    let k = fold_count(y, config.folds);
    let canon_folds = stratified_folds(&y_canon, k, seed);
    let mut fold_of_row = vec![0; y.len()];
    for (c, &row) in order.iter().enumerate() {
        fold_of_row[row] = canon_folds[c];
    }

    let mut oof = DenseMatrix::zeros(y.len(), 2);
    let mut fold_train_rows = Vec::with_capacity(k);
    for fold in 0..k {
        let train: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&r| fold_of_row[r] != fold)
            .collect();
        let held: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&r| fold_of_row[r] == fold)
            .collect();
        let y_fold: Vec<bool> = train.iter().map(|&r| y[r]).collect();
        let single_class = y_fold.iter().all(|&v| v) || y_fold.iter().all(|&v| !v);
        if single_class {
            for &r in &held {
                oof.set(r, 0, UNINFORMATIVE_SCORE);
                oof.set(r, 1, UNINFORMATIVE_SCORE);
            }
        } else {
            let pair = BasePair::fit(&x.select_rows(&train), &y_fold, config)?;
            let scores = pair.score(&x.select_rows(&held))?;
            for (k, &r) in held.iter().enumerate() {
                oof.set(r, 0, scores.get(k, 0));
                oof.set(r, 1, scores.get(k, 1));
            }
        }
        fold_train_rows.push(train);
    }
    Ok(CrossFit {
        oof,
        full,
        record: CrossFitRecord {
            fold_of_row,
            fold_train_rows,
        },
    })
}

/// Stacked features `ψ` for every row of `z`: out-of-fold scores on the
/// training rows, full-train base scores elsewhere.
pub fn build_stacked_features(
    z: &DenseMatrix,
    train_ids: &[usize],
    y_train: &[bool],
    seed: u64,
    config: &DetectorConfig,
) -> Result<(DenseMatrix, CrossFitRecord)> {
    let cf = cross_fit(&z.select_rows(train_ids), y_train, seed, config)?;
    let mut psi = cf.full.score(z)?;
    for (k, &i) in train_ids.iter().enumerate() {
        psi.set(i, 0, cf.oof.get(k, 0));
        psi.set(i, 1, cf.oof.get(k, 1));
    }
    Ok((psi, cf.record))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedModel {
    pub base: BasePair,
    pub meta: LinearModel,
}

impl StackedModel {
    pub fn fit(x: &DenseMatrix, y: &[bool], seed: u64, config: &DetectorConfig) -> Result<Self> {
        let cf = cross_fit(x, y, seed, config)?;
        let rho = x.hconcat(&cf.oof)?;
        let meta = LinearModel::fit(&rho, y, &config.linear, config.epsilon)?;
        Ok(Self { base: cf.full, meta })
    }

    /// `ρ = [z | ψ]` with full-train base scores.
    pub fn rho(&self, z: &DenseMatrix) -> Result<DenseMatrix> {
        z.hconcat(&self.base.score(z)?)
    }

    pub fn score(&self, z: &DenseMatrix) -> Result<Vec<f64>> {
        self.meta.score(&self.rho(z)?)
    }
}
