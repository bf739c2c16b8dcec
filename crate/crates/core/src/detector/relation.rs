//! Relation-aware branch: per extra relation, a compact projection of the
//! relation's context encoding plus relation-specific base detector scores.

use serde::{Deserialize, Serialize};

use super::linear::LinearModel;
use super::stack::{cross_fit, BasePair};
use super::standardize::canonical_order;
use super::DetectorConfig;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::subspace::PrincipalSubspace;

/// Centered truncated SVD projection with output padded to a fixed width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationProjection {
    subspace: PrincipalSubspace,
    width: usize,
}

impl RelationProjection {
    /// Fits on the training rows of `φ^(r)`.
    pub fn fit(phi_train: &DenseMatrix, q_dim: usize) -> Self {
        let order = canonical_order(phi_train, &vec![false; phi_train.rows()]);
        Self {
            subspace: PrincipalSubspace::fit(&phi_train.select_rows(&order), q_dim),
            width: q_dim,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn effective_rank(&self) -> usize {
        self.subspace.rank()
    }

    pub fn input_width(&self) -> usize {
        self.subspace.dim()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let sub = &self.subspace;
        let finite = sub.center().iter().all(|v| v.is_finite())
            && sub.basis().iter().flatten().all(|v| v.is_finite());
        if !finite
            || sub.rank() > self.width
            || sub.basis().iter().any(|b| b.len() != sub.dim())
        {
            return Err(Error::Blob("inconsistent relation projection".into()));
        }
        Ok(())
    }

    /// `N x width` coordinates; directions beyond the effective rank are zero.
    pub fn project(&self, phi: &DenseMatrix) -> Result<DenseMatrix> {
        if phi.cols() != self.subspace.dim() {
            return Err(Error::Shape(format!(
                "projection fitted on width {}, got {}",
                self.subspace.dim(),
                phi.cols()
            )));
        }
        let mut out = DenseMatrix::zeros(phi.rows(), self.width);
        for i in 0..phi.rows() {
            let coords = self.subspace.project(phi.row(i));
            out.row_mut(i)[..coords.len()].copy_from_slice(&coords);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationBranch {
    pub projection: RelationProjection,
    pub base: BasePair,
}

impl RelationBranch {
    /// `χ^(r) = [q | linear | tree]` using the full-train relation detectors.
    pub fn chi(&self, phi: &DenseMatrix) -> Result<DenseMatrix> {
        self.projection.project(phi)?.hconcat(&self.base.score(phi)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationAwareModel {
    pub base: BasePair,
    pub branches: Vec<RelationBranch>,
    pub head: LinearModel,
}

/// Fits the branch on training rows. Score columns of the training `ξ` are
/// out-of-fold.
fn fit_relation_aware(
    z: &DenseMatrix,
    relation_phis: &[DenseMatrix],
    y: &[bool],
    seed: u64,
    config: &DetectorConfig,
) -> Result<RelationAwareModel> {
    if relation_phis.is_empty() {
        return Err(Error::SingleRelation);
    }
    let stacked = cross_fit(z, y, seed, config)?;
    let mut blocks = vec![z.clone(), stacked.oof];
    let mut branches = Vec::with_capacity(relation_phis.len());
    for phi in relation_phis {
        if phi.rows() != z.rows() {
            return Err(Error::Shape(format!(
                "relation encoding has {} rows, expected {}",
                phi.rows(),
                z.rows()
            )));
        }
        let projection = RelationProjection::fit(phi, config.q_dim);
        let cf = cross_fit(phi, y, seed, config)?;
        blocks.push(projection.project(phi)?);
        blocks.push(cf.oof);
        branches.push(RelationBranch {
            projection,
            base: cf.full,
        });
    }
    let refs: Vec<&DenseMatrix> = blocks.iter().collect();
    let xi_train = DenseMatrix::hconcat_all(&refs)?;
    let head = LinearModel::fit(&xi_train, y, &config.linear, config.epsilon)?;
    Ok(RelationAwareModel {
        base: stacked.full,
        branches,
        head,
    })
}

impl RelationAwareModel {
    pub fn fit(
        z: &DenseMatrix,
        relation_phis: &[DenseMatrix],
        y: &[bool],
        seed: u64,
        config: &DetectorConfig,
    ) -> Result<Self> {
        fit_relation_aware(z, relation_phis, y, seed, config)
    }

    /// `ξ = [z | ψ | χ^(1) | ... | χ^(R)]`.
    pub fn xi(&self, z: &DenseMatrix, relation_phis: &[DenseMatrix]) -> Result<DenseMatrix> {
        if relation_phis.len() != self.branches.len() {
            return Err(Error::Shape(format!(
                "detector fitted on {} relations, got {}",
                self.branches.len(),
                relation_phis.len()
            )));
        }
        let mut blocks = vec![z.clone(), self.base.score(z)?];
        for (branch, phi) in self.branches.iter().zip(relation_phis) {
            blocks.push(branch.chi(phi)?);
        }
        let refs: Vec<&DenseMatrix> = blocks.iter().collect();
        DenseMatrix::hconcat_all(&refs)
    }

    pub fn score(&self, z: &DenseMatrix, relation_phis: &[DenseMatrix]) -> Result<Vec<f64>> {
        self.head.score(&self.xi(z, relation_phis)?)
    }
}
