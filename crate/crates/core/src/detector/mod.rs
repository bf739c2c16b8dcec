//! Detector bank: four detector kinds behind one train/score interface.

mod linear;
mod relation;
mod stack;
mod standardize;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use linear::{LinearConfig, LinearModel};
pub use relation::{RelationAwareModel, RelationBranch, RelationProjection};
pub use stack::{
    build_stacked_features, cross_fit, fold_count, BasePair, CrossFit, CrossFitRecord,
    StackedModel, UNINFORMATIVE_SCORE,
};
pub use standardize::Standardizer;
pub use tree::{BoostedTrees, TreeConfig};

use crate::error::{Error, Result};
use crate::evidence::EPSILON;
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Linear,
    Tree,
    Stacked,
    RelationAware,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 4] = [
        DetectorKind::Linear,
        DetectorKind::Tree,
        DetectorKind::Stacked,
        DetectorKind::RelationAware,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::Linear => "linear",
            DetectorKind::Tree => "tree",
            DetectorKind::Stacked => "stacked",
            DetectorKind::RelationAware => "relation_aware",
        }
    }

    /// Complexity tier used by the selection penalty.
    pub fn tier(self) -> usize {
        match self {
            DetectorKind::Linear => 0,
            DetectorKind::Tree => 1,
            DetectorKind::Stacked => 2,
            DetectorKind::RelationAware => 3,
        }
    }

    pub fn is_valid_for(self, n_extra_relations: usize) -> bool {
        self != DetectorKind::RelationAware || n_extra_relations >= 1
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DetectorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidWorkflow(format!("unknown detector {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub linear: LinearConfig,
    pub tree: TreeConfig,
    /// Upper bound on cross-fitting folds.
    pub folds: usize,
    /// Width of each relation projection.
    pub q_dim: usize,
    pub epsilon: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            linear: LinearConfig::default(),
            tree: TreeConfig::default(),
            folds: 5,
            q_dim: 8,
            epsilon: EPSILON,
        }
    }
}

/// Encoded rows a detector is trained on or scores. `relation_phis` holds
/// `φ^(r)` for every extra relation and is only read by the relation-aware
/// detector.
#[derive(Debug, Clone, Copy)]
pub struct DetectorInput<'a> {
    pub z: &'a DenseMatrix,
    pub relation_phis: &'a [DenseMatrix],
}

impl<'a> DetectorInput<'a> {
    pub fn new(z: &'a DenseMatrix, relation_phis: &'a [DenseMatrix]) -> Self {
        Self { z, relation_phis }
    }

    pub fn rows(&self) -> usize {
        self.z.rows()
    }

    fn select_rows(&self, ids: &[usize]) -> (DenseMatrix, Vec<DenseMatrix>) {
        (
            self.z.select_rows(ids),
            self.relation_phis.iter().map(|p| p.select_rows(ids)).collect(),
        )
    }

    fn check(&self) -> Result<()> {
        for phi in self.relation_phis {
            if phi.rows() != self.z.rows() {
                return Err(Error::Shape(format!(
                    "relation encoding has {} rows, expected {}",
                    phi.rows(),
                    self.z.rows()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DetectorModel {
    Linear(LinearModel),
    Tree(BoostedTrees),
    Stacked(StackedModel),
    RelationAware(RelationAwareModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedDetector {
    pub kind: DetectorKind,
    pub seed: u64,
    /// Width of `z` the detector was fitted on.
    pub input_width: usize,
    pub model: DetectorModel,
}

pub const BLOB_MAGIC: &[u8; 4] = b"SGDT";
pub const BLOB_VERSION: u16 = 1;

impl TrainedDetector {
    /// Fits `kind` on the rows `train_ids` of `input`, labelled by `y_train`.
    pub fn fit(
        kind: DetectorKind,
        input: DetectorInput<'_>,
        train_ids: &[usize],
        y_train: &[bool],
        seed: u64,
        config: &DetectorConfig,
    ) -> Result<Self> {
        input.check()?;
        if train_ids.len() != y_train.len() {
            return Err(Error::Shape(format!(
                "{} training rows but {} labels",
                train_ids.len(),
                y_train.len()
            )));
        }
        if let Some(&bad) = train_ids.iter().find(|&&i| i >= input.rows()) {
            return Err(Error::NodeOutOfRange {
                index: bad,
                n_nodes: input.rows(),
            });
        }
        let (z, phis) = input.select_rows(train_ids);
        let model = match kind {
            DetectorKind::Linear => {
                DetectorModel::Linear(LinearModel::fit(&z, y_train, &config.linear, config.epsilon)?)
            }
            DetectorKind::Tree => DetectorModel::Tree(BoostedTrees::fit(&z, y_train, &config.tree)?),
            DetectorKind::Stacked => {
                DetectorModel::Stacked(StackedModel::fit(&z, y_train, seed, config)?)
            }
            DetectorKind::RelationAware => DetectorModel::RelationAware(RelationAwareModel::fit(
                &z, &phis, y_train, seed, config,
            )?),
        };
        Ok(Self {
            kind,
            seed,
            input_width: input.z.cols(),
            model,
        })
    }

    /// Scores every row of `input`.
    pub fn score(&self, input: DetectorInput<'_>) -> Result<Vec<f64>> {
        input.check()?;
        if input.z.cols() != self.input_width {
            return Err(Error::Shape(format!(
                "detector fitted on width {}, got {}",
                self.input_width,
                input.z.cols()
            )));
        }
        match &self.model {
            DetectorModel::Linear(m) => m.score(input.z),
            DetectorModel::Tree(m) => m.score(input.z),
            DetectorModel::Stacked(m) => m.score(input.z),
            DetectorModel::RelationAware(m) => m.score(input.z, input.relation_phis),
        }
    }

    /// `SGDT` magic, little-endian format version, postcard payload.
    pub fn to_blob(&self) -> Result<Vec<u8>> {
        let mut out = BLOB_MAGIC.to_vec();
        out.extend_from_slice(&BLOB_VERSION.to_le_bytes());
        let payload = postcard::to_stdvec(self).map_err(|e| Error::Blob(e.to_string()))?;
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_blob(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 6 || &bytes[..4] != BLOB_MAGIC {
            return Err(Error::Blob("missing detector blob header".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != BLOB_VERSION {
            return Err(Error::Blob(format!("unsupported blob version {version}")));
        }
        let det: TrainedDetector =
            postcard::from_bytes(&bytes[6..]).map_err(|e| Error::Blob(e.to_string()))?;
        det.validate()?;
        Ok(det)
    }

    /// Checks that a decoded detector is internally consistent, so scoring it
    /// cannot panic.
    pub fn validate(&self) -> Result<()> {
        let w = self.input_width;
        let bad = |what: &str| Err(Error::Blob(format!("inconsistent {what}")));
        let check_pair = |p: &BasePair, width: usize| -> Result<()> {
            p.linear.validate()?;
            p.tree.validate()?;
            if p.linear.width() != width || p.tree.width() != width {
                return bad("base detector widths");
            }
            Ok(())
        };
        match (&self.model, self.kind) {
            (DetectorModel::Linear(m), DetectorKind::Linear) => {
                m.validate()?;
                if m.width() != w {
                    return bad("linear width");
                }
            }
            (DetectorModel::Tree(m), DetectorKind::Tree) => {
                m.validate()?;
                if m.width() != w {
                    return bad("tree width");
                }
            }
            (DetectorModel::Stacked(m), DetectorKind::Stacked) => {
                check_pair(&m.base, w)?;
                m.meta.validate()?;
                if m.meta.width() != w + 2 {
                    return bad("meta width");
                }
            }
            (DetectorModel::RelationAware(m), DetectorKind::RelationAware) => {
                check_pair(&m.base, w)?;
                if m.branches.is_empty() {
                    return bad("relation branches");
                }
                let mut xi = w + 2;
                for b in &m.branches {
                    check_pair(&b.base, b.projection.input_width())?;
                    b.projection.validate()?;
                    xi += b.projection.width() + 2;
                }
                m.head.validate()?;
                if m.head.width() != xi {
                    return bad("relation head width");
                }
            }
            _ => return bad("detector kind"),
        }
        Ok(())
    }
}

/// Width of `ξ` for a `z` of width `z_width` and `n_relations` extra relations.
pub fn xi_width(z_width: usize, n_relations: usize, q_dim: usize) -> usize {
    z_width + 2 + n_relations * (q_dim + 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (DenseMatrix, Vec<DenseMatrix>, Vec<bool>) {
        let z: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let t = i as f64;
                let s = if i % 5 == 0 { 1.0 } else { 0.0 };
                vec![(t * 0.7).sin() + s, (t * 0.3).cos(), s + (t * 1.7).sin() * 0.3]
            })
            .collect();
        let phi: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let t = i as f64;
                vec![(t * 0.2).sin(), (t * 0.4).cos(), t / 40.0, ((i % 5 == 0) as u8) as f64 * 0.5]
            })
            .collect();
        let y = (0..40).map(|i| i % 5 == 0).collect();
        (
            DenseMatrix::from_rows(&z).unwrap(),
            vec![DenseMatrix::from_rows(&phi).unwrap()],
            y,
        )
    }

    #[test]
    fn kind_strings_roundtrip() {
        for k in DetectorKind::ALL {
            assert_eq!(k.as_str().parse::<DetectorKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{k}\""));
        }
        assert!("gnn".parse::<DetectorKind>().is_err());
        assert!(!DetectorKind::RelationAware.is_valid_for(0));
    }

    #[test]
    fn xi_width_arithmetic() {
        assert_eq!(xi_width(5 * 4 + 1 + 4, 2, 8), 47);
    }

    #[test]
    fn every_kind_scores_in_range_and_roundtrips() {
        let (z, phis, y_all) = data();
        let input = DetectorInput::new(&z, &phis);
        let train: Vec<usize> = (0..40).filter(|i| i % 2 == 0).collect();
        let y: Vec<bool> = train.iter().map(|&i| y_all[i]).collect();
        for kind in DetectorKind::ALL {
            let det =
                TrainedDetector::fit(kind, input, &train, &y, 7, &DetectorConfig::default()).unwrap();
            let s = det.score(input).unwrap();
            assert_eq!(s.len(), 40);
            assert!(s.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
            assert_eq!(s, det.score(input).unwrap());
            let back = TrainedDetector::from_blob(&det.to_blob().unwrap()).unwrap();
            assert_eq!(back, det);
            assert_eq!(back.score(input).unwrap(), s);
        }
    }

    #[test]
    fn relation_aware_requires_relations() {
        let (z, _, y_all) = data();
        let train: Vec<usize> = (0..40).collect();
        let err = TrainedDetector::fit(
            DetectorKind::RelationAware,
            DetectorInput::new(&z, &[]),
            &train,
            &y_all,
            1,
            &DetectorConfig::default(),
        );
        assert!(matches!(err, Err(Error::SingleRelation)));
    }

    #[test]
    fn width_mismatch_on_score() {
        let (z, phis, y) = data();
        let train: Vec<usize> = (0..40).collect();
        let det = TrainedDetector::fit(
            DetectorKind::Linear,
            DetectorInput::new(&z, &phis),
            &train,
            &y,
            1,
            &DetectorConfig::default(),
        )
        .unwrap();
        let narrow = DenseMatrix::zeros(3, 2);
        assert!(det.score(DetectorInput::new(&narrow, &[])).is_err());
    }

    #[test]
    fn corrupt_blobs_rejected() {
        assert!(TrainedDetector::from_blob(b"").is_err());
        assert!(TrainedDetector::from_blob(b"SGDT\x02\x00").is_err());
        assert!(TrainedDetector::from_blob(b"SGDT\x01\x00\xff\xff").is_err());
    }
}
