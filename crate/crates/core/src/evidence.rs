//! Closed-form per-node anomaly evidence and its assembly into the evidence
//! matrix appended to graph-context encodings.
//!
//! Every evidence function produces one raw score per node. Raw scores are
//! min-max normalized over the full node set before use. Degree statistics for
//! [`degree_anomaly`] and the reconstruction subspace are fitted on the labeled
//! training nodes only.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    degrees, propagate, row_normalize, AttributedGraph, TopologyChoice,
};
use crate::matrix::DenseMatrix;
use crate::subspace::PrincipalSubspace;

/// Stabilizer added to every denominator that may vanish.
pub const EPSILON: f64 = 1e-12;

/// Default cap on the reconstruction subspace rank.
pub const DEFAULT_SVD_RANK: usize = 16;

/// Largest value strictly below one.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceKind {
    DegreeAnomaly,
    RelationDegreeProfile,
    RelationDisagreement,
    NeighborFeatureDeviation,
    FeatureSmoothness,
    ReconstructionResidual,
}

impl EvidenceKind {
    pub const ALL: [EvidenceKind; 6] = [
        EvidenceKind::DegreeAnomaly,
        EvidenceKind::RelationDegreeProfile,
        EvidenceKind::RelationDisagreement,
        EvidenceKind::NeighborFeatureDeviation,
        EvidenceKind::FeatureSmoothness,
        EvidenceKind::ReconstructionResidual,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EvidenceKind::DegreeAnomaly => "degree_anomaly",
            EvidenceKind::RelationDegreeProfile => "relation_degree_profile",
            EvidenceKind::RelationDisagreement => "relation_disagreement",
            EvidenceKind::NeighborFeatureDeviation => "neighbor_feature_deviation",
            EvidenceKind::FeatureSmoothness => "feature_smoothness",
            EvidenceKind::ReconstructionResidual => "reconstruction_residual",
        }
    }

    pub fn requires_extra_relations(self) -> bool {
        matches!(
            self,
            EvidenceKind::RelationDegreeProfile | EvidenceKind::RelationDisagreement
        )
    }

    pub fn is_valid_for(self, n_extra_relations: usize) -> bool {
        !self.requires_extra_relations() || n_extra_relations >= 1
    }

    /// Whether the raw score depends on the workflow topology.
    pub fn depends_on_topology(self) -> bool {
        matches!(
            self,
            EvidenceKind::DegreeAnomaly
                | EvidenceKind::NeighborFeatureDeviation
                | EvidenceKind::FeatureSmoothness
        )
    }
}

impl fmt::Display for EvidenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EvidenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EvidenceKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidEvidence(format!("unknown evidence kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidenceConfig {
    pub epsilon: f64,
    pub svd_rank: usize,
}

impl Default for EvidenceConfig {
    fn default() -> Self {
        Self {
            epsilon: EPSILON,
            svd_rank: DEFAULT_SVD_RANK,
        }
    }
}

/// Normalized evidence, one column per kind, every entry in `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceMatrix {
    values: DenseMatrix,
    kinds: Vec<EvidenceKind>,
}

impl EvidenceMatrix {
    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn kinds(&self) -> &[EvidenceKind] {
        &self.kinds
    }

    pub fn k(&self) -> usize {
        self.kinds.len()
    }
}

/// Absolute z-score of each node's degree against the training nodes.
pub fn degree_anomaly(
    graph: &AttributedGraph,
    topology: TopologyChoice,
    train_ids: &[usize],
    eps: f64,
) -> Result<Vec<f64>> {
    let deg: Vec<f64> = degrees(graph.topology(topology)?)
        .into_iter()
        .map(|d| d as f64)
        .collect();
    degree_z_scores(&deg, train_ids, eps)
}

/// Shared core of [`degree_anomaly`]: population mean and standard deviation
/// over `train_ids`, then `|d - mu| / (sigma + eps)` for every node.
pub fn degree_z_scores(deg: &[f64], train_ids: &[usize], eps: f64) -> Result<Vec<f64>> {
    if train_ids.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let n = train_ids.len() as f64;
    let mu = train_ids.iter().map(|&i| deg[i]).sum::<f64>() / n;
    let var = train_ids
        .iter()
        .map(|&i| (deg[i] - mu).powi(2))
        .sum::<f64>()
        / n;
    let sigma = var.sqrt();
    Ok(deg.iter().map(|d| ((d - mu) / (sigma + eps)).abs()).collect())
}

/// Per-relation degrees, min-max normalized within each relation. Index 0 is
/// the base relation.
pub fn normalized_relation_degrees(graph: &AttributedGraph, eps: f64) -> Vec<Vec<f64>> {
    graph
        .relations()
        .iter()
        .map(|adj| {
            let deg: Vec<f64> = degrees(adj).into_iter().map(|d| d as f64).collect();
            min_max(&deg, eps)
        })
        .collect()
}

/// Population standard deviation of each node's normalized degree profile
/// across all relations.
pub fn relation_degree_profile(graph: &AttributedGraph, eps: f64) -> Result<Vec<f64>> {
    if graph.n_extra_relations() == 0 {
        return Err(Error::SingleRelation);
    }
    let per_rel = normalized_relation_degrees(graph, eps);
    Ok((0..graph.n_nodes())
        .map(|i| {
            let profile: Vec<f64> = per_rel.iter().map(|r| r[i]).collect();
            population_std(&profile)
        })
        .collect())
}

/// `|d̄⁰ - mean(d̄¹..d̄ᴿ)|` on normalized relation degrees.
pub fn relation_disagreement(graph: &AttributedGraph, eps: f64) -> Result<Vec<f64>> {
    let r = graph.n_extra_relations();
    if r == 0 {
        return Err(Error::SingleRelation);
    }
    let per_rel = normalized_relation_degrees(graph, eps);
    Ok((0..graph.n_nodes())
        .map(|i| {
            let extra = per_rel[1..].iter().map(|d| d[i]).sum::<f64>() / r as f64;
            (per_rel[0][i] - extra).abs()
        })
        .collect())
}

pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn first_hop(graph: &AttributedGraph, topology: TopologyChoice) -> Result<DenseMatrix> {
    let norm = row_normalize(&graph.topology(topology)?.to_weighted());
    propagate(&norm, graph.features())
}

/// Euclidean distance between each node's features and its first-hop mean.
pub fn neighbor_feature_deviation(
    graph: &AttributedGraph,
    topology: TopologyChoice,
) -> Result<Vec<f64>> {
    let h1 = first_hop(graph, topology)?;
    Ok(neighbor_deviation_l2(graph.features(), &h1))
}

/// Mean absolute per-dimension deviation from the first-hop mean.
pub fn feature_smoothness(graph: &AttributedGraph, topology: TopologyChoice) -> Result<Vec<f64>> {
    let h1 = first_hop(graph, topology)?;
    Ok(neighbor_deviation_mean_abs(graph.features(), &h1))
}

pub fn neighbor_deviation_l2(x: &DenseMatrix, h1: &DenseMatrix) -> Vec<f64> {
    (0..x.rows())
        .map(|i| {
            x.row(i)
                .iter()
                .zip(h1.row(i))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

pub fn neighbor_deviation_mean_abs(x: &DenseMatrix, h1: &DenseMatrix) -> Vec<f64> {
    let d = x.cols();
    (0..x.rows())
        .map(|i| {
            if d == 0 {
                return 0.0;
            }
            x.row(i)
                .iter()
                .zip(h1.row(i))
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / d as f64
        })
        .collect()
}

/// Low-rank model of the training attributes used by the reconstruction
/// residual evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionModel {
    subspace: PrincipalSubspace,
    fitted_on: Vec<usize>,
}

impl ReconstructionModel {
    pub fn rank(&self) -> usize {
        self.subspace.rank()
    }

    pub fn subspace(&self) -> &PrincipalSubspace {
        &self.subspace
    }

    pub fn fitted_on(&self) -> &[usize] {
        &self.fitted_on
    }
}

/// Fits a centered rank-`min(max_rank, d, n_train)` subspace on training rows.
pub fn fit_reconstruction(
    x_train: &DenseMatrix,
    fitted_on: Vec<usize>,
    max_rank: usize,
) -> Result<ReconstructionModel> {
    if x_train.rows() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    Ok(ReconstructionModel {
        subspace: PrincipalSubspace::fit(x_train, max_rank),
        fitted_on,
    })
}

/// `‖x - x̂‖₂` per row, where `x̂` is the subspace reconstruction.
pub fn reconstruction_residual(model: &ReconstructionModel, x: &DenseMatrix) -> Result<Vec<f64>> {
    if x.cols() != model.subspace.dim() {
        return Err(Error::Shape(format!(
            "reconstruction model fitted on {} features, got {}",
            model.subspace.dim(),
            x.cols()
        )));
    }
    Ok((0..x.rows())
        .map(|i| {
            let row = x.row(i);
            model
                .subspace
                .reconstruct(row)
                .iter()
                .zip(row)
                .map(|(r, v)| (v - r).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

/// `(e - min) / (max - min + eps)` with min and max over all entries. Results
/// are kept strictly below one even where the stabilizer is lost to rounding.
pub fn normalize_scores(raw: &[f64], eps: f64) -> Vec<f64> {
    min_max(raw, eps)
}

fn min_max(raw: &[f64], eps: f64) -> Vec<f64> {
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let denom = hi - lo + eps;
    raw.iter()
        .map(|&v| {
            let s = (v - lo) / denom;
            if s >= 1.0 {
                BELOW_ONE
            } else {
                s
            }
        })
        .collect()
}

/// Raw (unnormalized) score of one evidence kind for every node.
pub fn raw_evidence(
    graph: &AttributedGraph,
    topology: TopologyChoice,
    kind: EvidenceKind,
    train_ids: &[usize],
    config: &EvidenceConfig,
) -> Result<Vec<f64>> {
    let eps = config.epsilon;
    match kind {
        EvidenceKind::DegreeAnomaly => degree_anomaly(graph, topology, train_ids, eps),
        EvidenceKind::RelationDegreeProfile => relation_degree_profile(graph, eps),
        EvidenceKind::RelationDisagreement => relation_disagreement(graph, eps),
        EvidenceKind::NeighborFeatureDeviation => neighbor_feature_deviation(graph, topology),
        EvidenceKind::FeatureSmoothness => feature_smoothness(graph, topology),
        EvidenceKind::ReconstructionResidual => {
            if train_ids.is_empty() {
                return Err(Error::EmptyTrainingSet);
            }
            let x_train = graph.features().select_rows(train_ids);
            let model = fit_reconstruction(&x_train, train_ids.to_vec(), config.svd_rank)?;
            reconstruction_residual(&model, graph.features())
        }
    }
}

/// Checks a kind list against the graph's relation count and for duplicates.
pub fn validate_kinds(kinds: &[EvidenceKind], n_extra_relations: usize) -> Result<()> {
    for (i, k) in kinds.iter().enumerate() {
        if kinds[..i].contains(k) {
            return Err(Error::InvalidEvidence(format!("duplicate evidence kind {k}")));
        }
        if !k.is_valid_for(n_extra_relations) {
            return Err(Error::InvalidEvidence(format!(
                "{k} requires at least one extra relation"
            )));
        }
    }
    Ok(())
}

/// Normalized evidence columns for `kinds`, in order.
pub fn assemble_evidence(
    graph: &AttributedGraph,
    topology: TopologyChoice,
    kinds: &[EvidenceKind],
    train_ids: &[usize],
    config: &EvidenceConfig,
) -> Result<EvidenceMatrix> {
    validate_kinds(kinds, graph.n_extra_relations())?;
    let columns = kinds
        .iter()
        .map(|&k| {
            raw_evidence(graph, topology, k, train_ids, config)
                .map(|raw| DenseMatrix::column(normalize_scores(&raw, config.epsilon)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(from_normalized_columns(graph.n_nodes(), kinds.to_vec(), columns))
}

/// Assembles an evidence matrix from already normalized columns.
pub(crate) fn from_normalized_columns(
    n_nodes: usize,
    kinds: Vec<EvidenceKind>,
    columns: Vec<DenseMatrix>,
) -> EvidenceMatrix {
    let values = if columns.is_empty() {
        DenseMatrix::zeros(n_nodes, 0)
    } else {
        let refs: Vec<&DenseMatrix> = columns.iter().collect();
        DenseMatrix::hconcat_all(&refs).expect("evidence columns share the node count")
    };
    EvidenceMatrix { values, kinds }
}
