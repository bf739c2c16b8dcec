//! Multi-relation attributed graphs.
//!
//! Relation 0 is the base relation; relations `1..=R` are the extra relations.
//! All adjacencies are undirected, binary and loop-free.

mod csr;

use serde::{Deserialize, Serialize};

pub use csr::{
    degrees, propagate, propagate_two_hop, row_normalize, Adjacency, CsrMatrix,
    NormalizedAdjacency,
};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Normal,
    Anomaly,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        match self {
            Label::Normal => 0.0,
            Label::Anomaly => 1.0,
        }
    }

    pub fn is_anomaly(self) -> bool {
        self == Label::Anomaly
    }

    pub fn from_bool(anomaly: bool) -> Self {
        if anomaly {
            Label::Anomaly
        } else {
            Label::Normal
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Node ids of the three labeled subsets.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSets {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Which adjacency a workflow propagates over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyChoice {
    Base,
    Fused,
}

impl TopologyChoice {
    pub const ALL: [TopologyChoice; 2] = [TopologyChoice::Base, TopologyChoice::Fused];

    pub fn as_str(self) -> &'static str {
        match self {
            TopologyChoice::Base => "base",
            TopologyChoice::Fused => "fused",
        }
    }

    pub fn is_valid_for(self, n_extra_relations: usize) -> bool {
        self == TopologyChoice::Base || n_extra_relations >= 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    features: DenseMatrix,
    relations: Vec<Adjacency>,
    fused: Option<Adjacency>,
    labels: Vec<Option<Label>>,
    splits: Vec<Option<Split>>,
}

/// Raw inputs for [`build_graph`].
#[derive(Debug, Clone)]
pub struct GraphInput {
    pub n_nodes: usize,
    /// One edge list per relation; index 0 is the base relation.
    pub edge_lists: Vec<Vec<(usize, usize)>>,
    pub features: DenseMatrix,
    pub labels: Vec<Option<Label>>,
    pub splits: SplitSets,
}

pub fn build_graph(input: GraphInput) -> Result<AttributedGraph> {
    let n = input.n_nodes;
    if input.edge_lists.is_empty() {
        return Err(Error::Shape("at least the base relation is required".into()));
    }
    if input.features.rows() != n {
        return Err(Error::Shape(format!(
            "feature matrix has {} rows for {n} nodes",
            input.features.rows()
        )));
    }
    if let Some((row, col)) = input.features.first_non_finite() {
        return Err(Error::NonFinite { row, col });
    }
    if input.labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for {n} nodes",
            input.labels.len()
        )));
    }
    let relations = input
        .edge_lists
        .iter()
        .map(|edges| Adjacency::from_undirected_edges(n, edges))
        .collect::<Result<Vec<_>>>()?;

    let mut splits = vec![None; n];
    for (split, ids) in [
        (Split::Train, &input.splits.train),
        (Split::Val, &input.splits.val),
        (Split::Test, &input.splits.test),
    ] {
        for &i in ids {
            if i >= n {
                return Err(Error::NodeOutOfRange {
                    index: i,
                    n_nodes: n,
                });
            }
            if splits[i].is_some() {
                return Err(Error::OverlappingSplits(i));
            }
            if input.labels[i].is_none() {
                return Err(Error::UnlabeledSplitNode(i));
            }
            splits[i] = Some(split);
        }
    }
    if let Some(i) = (0..n).find(|&i| input.labels[i].is_some() && splits[i].is_none()) {
        return Err(Error::UnassignedLabeledNode(i));
    }

    let fused = if relations.len() > 1 {
        let refs: Vec<&Adjacency> = relations.iter().collect();
        Some(Adjacency::union(&refs)?)
    } else {
        None
    };
    Ok(AttributedGraph {
        features: input.features,
        relations,
        fused,
        labels: input.labels,
        splits,
    })
}

/// Indicator union of the base relation and every extra relation.
pub fn fuse_relations(graph: &AttributedGraph) -> Result<Adjacency> {
    graph.fused.clone().ok_or(Error::SingleRelation)
}

impl AttributedGraph {
    pub fn n_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    /// Number of extra relations `R` (the base relation is not counted).
    pub fn n_extra_relations(&self) -> usize {
        self.relations.len() - 1
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn base_adj(&self) -> &Adjacency {
        &self.relations[0]
    }

    pub fn extra_adjs(&self) -> &[Adjacency] {
        &self.relations[1..]
    }

    /// All relations, base first.
    pub fn relations(&self) -> &[Adjacency] {
        &self.relations
    }

    pub fn topology(&self, choice: TopologyChoice) -> Result<&Adjacency> {
        match choice {
            TopologyChoice::Base => Ok(self.base_adj()),
            TopologyChoice::Fused => self.fused.as_ref().ok_or(Error::SingleRelation),
        }
    }

    pub fn labels(&self) -> &[Option<Label>] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> Option<Label> {
        self.labels[i]
    }

    pub fn splits(&self) -> &[Option<Split>] {
        &self.splits
    }

    pub fn split_ids(&self, split: Split) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&i| self.splits[i] == Some(split))
            .collect()
    }

    pub fn split_sets(&self) -> SplitSets {
        SplitSets {
            train: self.split_ids(Split::Train),
            val: self.split_ids(Split::Val),
            test: self.split_ids(Split::Test),
        }
    }

    /// Binary labels for the given ids. Panics on an unlabeled id; split ids
    /// are always labeled.
    pub fn labels_for(&self, ids: &[usize]) -> Vec<bool> {
        ids.iter()
            .map(|&i| {
                self.labels[i]
                    .expect("split nodes are labeled by construction")
                    .is_anomaly()
            })
            .collect()
    }

    /// Copy of this graph with a different split assignment.
    pub fn with_splits(&self, splits: SplitSets) -> Result<AttributedGraph> {
        build_graph(GraphInput {
            n_nodes: self.n_nodes(),
            edge_lists: self
                .relations
                .iter()
                .map(|a| a.undirected_edges().collect())
                .collect(),
            features: self.features.clone(),
            labels: self.labels.clone(),
            splits,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(n: usize, edge_lists: Vec<Vec<(usize, usize)>>) -> GraphInput {
        GraphInput {
            n_nodes: n,
            edge_lists,
            features: DenseMatrix::zeros(n, 1),
            labels: vec![None; n],
            splits: SplitSets::default(),
        }
    }

    #[test]
    fn fuse_with_empty_relation() {
        let g = build_graph(input(2, vec![vec![(0, 1)], vec![]])).unwrap();
        let f = fuse_relations(&g).unwrap();
        assert_eq!(f.to_dense().as_slice(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn fuse_caps_at_one() {
        let g = build_graph(input(2, vec![vec![(0, 1)], vec![(0, 1)]])).unwrap();
        let f = fuse_relations(&g).unwrap();
        assert_eq!(f.to_dense().as_slice(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn fuse_union_from_extra_only() {
        let g = build_graph(input(3, vec![vec![], vec![(1, 2)]])).unwrap();
        let f = fuse_relations(&g).unwrap();
        let pairs: Vec<_> = f.undirected_edges().collect();
        assert_eq!(pairs, vec![(1, 2)]);
        assert!(f.is_symmetric() && !f.has_self_loops());
    }

    #[test]
    fn fuse_rejects_single_relation() {
        let g = build_graph(input(2, vec![vec![(0, 1)]])).unwrap();
        assert!(matches!(fuse_relations(&g), Err(Error::SingleRelation)));
        assert!(g.topology(TopologyChoice::Fused).is_err());
    }

    #[test]
    fn rejects_bad_feature_rows() {
        let mut inp = input(3, vec![vec![]]);
        inp.features = DenseMatrix::zeros(2, 1);
        assert!(matches!(build_graph(inp), Err(Error::Shape(_))));
    }

    #[test]
    fn rejects_non_finite_feature() {
        let mut inp = input(2, vec![vec![]]);
        inp.features = DenseMatrix::from_vec(2, 1, vec![0.0, f64::NAN]).unwrap();
        assert!(matches!(
            build_graph(inp),
            Err(Error::NonFinite { row: 1, col: 0 })
        ));
    }

    #[test]
    fn rejects_overlapping_splits() {
        let mut inp = input(2, vec![vec![]]);
        inp.labels = vec![Some(Label::Normal), Some(Label::Anomaly)];
        inp.splits = SplitSets {
            train: vec![0, 1],
            val: vec![1],
            test: vec![],
        };
        assert!(matches!(build_graph(inp), Err(Error::OverlappingSplits(1))));
    }

    #[test]
    fn rejects_unlabeled_split_member() {
        let mut inp = input(2, vec![vec![]]);
        inp.splits.train = vec![0];
        assert!(matches!(
            build_graph(inp),
            Err(Error::UnlabeledSplitNode(0))
        ));
    }

    #[test]
    fn split_ids_roundtrip() {
        let mut inp = input(3, vec![vec![(0, 2)]]);
        inp.labels = vec![Some(Label::Normal), None, Some(Label::Anomaly)];
        inp.splits = SplitSets {
            train: vec![2],
            val: vec![],
            test: vec![0],
        };
        let g = build_graph(inp).unwrap();
        assert_eq!(g.split_ids(Split::Train), vec![2]);
        assert_eq!(g.labels_for(&[0, 2]), vec![false, true]);
        assert_eq!(g.n_extra_relations(), 0);
    }
}
