//! Graph statistics, task descriptors and candidate workflow enumeration.

mod llm;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use llm::{
    build_prompt, parse_plan_response, plan_llm, HttpChatClient, PlanOutcome, PlanSource,
    PlannerClient, API_KEY_ENV, DEFAULT_TIMEOUT_SECS, PLAN_SCHEMA, PLAN_SCHEMA_VERSION,
};

use crate::detector::DetectorKind;
use crate::error::{Error, Result};
use crate::evidence::EvidenceKind;
use crate::graph::{degrees, AttributedGraph, Split, TopologyChoice};

/// Default size of the candidate workflow pool.
pub const DEFAULT_N_WORKFLOWS: usize = 20;

/// Order in which evidence functions enter the rule-based grid.
pub const EVIDENCE_PRIORITY: [EvidenceKind; 6] = [
    EvidenceKind::NeighborFeatureDeviation,
    EvidenceKind::ReconstructionResidual,
    EvidenceKind::DegreeAnomaly,
    EvidenceKind::FeatureSmoothness,
    EvidenceKind::RelationDisagreement,
    EvidenceKind::RelationDegreeProfile,
];

/// Evidence prefix sizes enumerated by the rule-based planner.
pub const EVIDENCE_PREFIX_SIZES: [usize; 4] = [0, 2, 4, 6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub n_nodes: usize,
    pub n_extra_relations: usize,
    /// Undirected edge count per relation, base first.
    pub n_edges_per_relation: Vec<usize>,
    pub feature_dim: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub train_anomaly_rate: f64,
    pub mean_degree: f64,
    pub degree_std: f64,
    /// Base-relation edges over ordered node pairs, `|E| / (N (N - 1))`.
    pub density: f64,
    /// Fraction of base edges between two training nodes whose labels agree.
    pub train_homophily: f64,
}

pub fn compute_graph_stats(graph: &AttributedGraph) -> GraphStats {
    let n = graph.n_nodes();
    let base = graph.base_adj();
    let deg: Vec<f64> = degrees(base).into_iter().map(|d| d as f64).collect();
    let (mean_degree, degree_std) = if n == 0 {
        (0.0, 0.0)
    } else {
        let mean = deg.iter().sum::<f64>() / n as f64;
        let var = deg.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
        (mean, var.sqrt())
    };
    let n_edges = base.n_undirected_edges();
    let density = if n < 2 {
        0.0
    } else {
        n_edges as f64 / (n as f64 * (n as f64 - 1.0))
    };

    let train = graph.split_ids(Split::Train);
    let anomalies = graph
        .labels_for(&train)
        .into_iter()
        .filter(|&a| a)
        .count();
    let train_anomaly_rate = if train.is_empty() {
        0.0
    } else {
        anomalies as f64 / train.len() as f64
    };

    let is_train = |i: usize| graph.splits()[i] == Some(Split::Train);
    let (mut same, mut total) = (0usize, 0usize);
    for (u, v) in base.undirected_edges() {
        if is_train(u) && is_train(v) {
            total += 1;
            if graph.label(u) == graph.label(v) {
                same += 1;
            }
        }
    }
    let train_homophily = if total == 0 {
        0.0
    } else {
        same as f64 / total as f64
    };

    GraphStats {
        n_nodes: n,
        n_extra_relations: graph.n_extra_relations(),
        n_edges_per_relation: graph
            .relations()
            .iter()
            .map(|a| a.n_undirected_edges())
            .collect(),
        feature_dim: graph.n_features(),
        n_train: train.len(),
        n_val: graph.split_ids(Split::Val).len(),
        n_test: graph.split_ids(Split::Test).len(),
        train_anomaly_rate,
        mean_degree,
        degree_std,
        density,
        train_homophily,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDescriptor {
    pub task_text: String,
    pub stats: GraphStats,
    /// Number of labeled training nodes.
    pub supervision_budget: usize,
}

pub fn build_task_descriptor(task_text: &str, graph: &AttributedGraph) -> TaskDescriptor {
    let stats = compute_graph_stats(graph);
    TaskDescriptor {
        task_text: task_text.to_string(),
        supervision_budget: stats.n_train,
        stats,
    }
}

/// One candidate workflow: topology, evidence set and detector, plus the
/// threshold once calibrated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowSpec {
    pub topology: TopologyChoice,
    pub evidence: Vec<EvidenceKind>,
    pub detector: DetectorKind,
    pub threshold: Option<f64>,
    pub planner_rank: usize,
}

impl WorkflowSpec {
    pub fn new(topology: TopologyChoice, evidence: Vec<EvidenceKind>, detector: DetectorKind) -> Self {
        Self {
            topology,
            evidence,
            detector,
            threshold: None,
            planner_rank: 0,
        }
    }

    /// Equality of the design choices, ignoring rank and threshold.
    pub fn same_design(&self, other: &WorkflowSpec) -> bool {
        self.topology == other.topology
            && self.evidence == other.evidence
            && self.detector == other.detector
    }

    pub fn label(&self) -> String {
        let ev: Vec<&str> = self.evidence.iter().map(|k| k.as_str()).collect();
        format!(
            "{}/{}/[{}]",
            self.detector,
            self.topology.as_str(),
            ev.join(",")
        )
    }
}

/// Every rule the spec breaks on a graph with `n_extra_relations` extra
/// relations; empty when valid.
pub fn validate_spec(spec: &WorkflowSpec, n_extra_relations: usize) -> Vec<String> {
    let mut violations = Vec::new();
    if !spec.topology.is_valid_for(n_extra_relations) {
        violations.push(format!(
            "topology {} requires at least one extra relation",
            spec.topology.as_str()
        ));
    }
    if !spec.detector.is_valid_for(n_extra_relations) {
        violations.push(format!(
            "detector {} requires at least one extra relation",
            spec.detector
        ));
    }
    if spec.evidence.len() > EvidenceKind::ALL.len() {
        violations.push(format!("{} evidence kinds given", spec.evidence.len()));
    }
    for (i, k) in spec.evidence.iter().enumerate() {
        if spec.evidence[..i].contains(k) {
            violations.push(format!("duplicate evidence kind {k}"));
        } else if !k.is_valid_for(n_extra_relations) {
            violations.push(format!("evidence {k} requires at least one extra relation"));
        }
    }
    if let Some(t) = spec.threshold {
        if !(0.0..=1.0).contains(&t) {
            violations.push(format!("threshold {t} outside [0, 1]"));
        }
    }
    violations
}

/// The full rule-based grid in (detector, topology, prefix size) order.
pub fn rule_based_grid(n_extra_relations: usize) -> Vec<WorkflowSpec> {
    let valid: Vec<EvidenceKind> = EVIDENCE_PRIORITY
        .into_iter()
        .filter(|k| k.is_valid_for(n_extra_relations))
        .collect();
    let mut sizes: Vec<usize> = EVIDENCE_PREFIX_SIZES
        .iter()
        .map(|&s| s.min(valid.len()))
        .collect();
    sizes.dedup();
    let mut grid = Vec::new();
    for detector in DetectorKind::ALL {
        if !detector.is_valid_for(n_extra_relations) {
            continue;
        }
        for topology in TopologyChoice::ALL {
            if !topology.is_valid_for(n_extra_relations) {
                continue;
            }
            for &size in &sizes {
                let mut spec = WorkflowSpec::new(topology, valid[..size].to_vec(), detector);
                spec.planner_rank = grid.len();
                grid.push(spec);
            }
        }
    }
    grid
}

pub fn plan_rule_based(descriptor: &TaskDescriptor, n_workflows: usize) -> Result<Vec<WorkflowSpec>> {
    if n_workflows < 1 {
        return Err(Error::InvalidWorkflow("n_workflows must be at least 1".into()));
    }
    let mut grid = rule_based_grid(descriptor.stats.n_extra_relations);
    grid.truncate(n_workflows);
    Ok(grid)
}

/// Appends rule-based specs not already present until `n_workflows` specs
/// exist, then renumbers planner ranks.
pub(crate) fn pad_with_rule_based(
    mut specs: Vec<WorkflowSpec>,
    n_extra_relations: usize,
    n_workflows: usize,
) -> Vec<WorkflowSpec> {
    for spec in rule_based_grid(n_extra_relations) {
        if specs.len() >= n_workflows {
            break;
        }
        if !specs.iter().any(|s| s.same_design(&spec)) {
            specs.push(spec);
        }
    }
    specs.truncate(n_workflows);
    for (rank, s) in specs.iter_mut().enumerate() {
        s.planner_rank = rank;
    }
    specs
}

/// True when no two specs share a design.
pub fn designs_unique(specs: &[WorkflowSpec]) -> bool {
    let mut seen = HashSet::new();
    specs
        .iter()
        .all(|s| seen.insert((s.topology, s.evidence.clone(), s.detector)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, GraphInput, Label, SplitSets};
    use crate::matrix::DenseMatrix;

    fn graph(n: usize, edge_lists: Vec<Vec<(usize, usize)>>, labels: Vec<bool>, train: Vec<usize>) -> AttributedGraph {
        build_graph(GraphInput {
            n_nodes: n,
            edge_lists,
            features: DenseMatrix::zeros(n, 2),
            labels: labels.into_iter().map(|l| Some(Label::from_bool(l))).collect(),
            splits: SplitSets {
                test: (0..n).filter(|i| !train.contains(i)).collect(),
                train,
                ..Default::default()
            },
        })
        .unwrap()
    }

    #[test]
    fn empty_edges_stats() {
        let g = graph(3, vec![vec![]], vec![true, false, false], vec![0, 1]);
        let s = compute_graph_stats(&g);
        assert_eq!(s.mean_degree, 0.0);
        assert_eq!(s.train_homophily, 0.0);
        assert_eq!(s.train_anomaly_rate, 0.5);
    }

    #[test]
    fn path_density_and_homophily() {
        let g = graph(3, vec![vec![(0, 1), (1, 2)]], vec![false; 3], vec![0, 1, 2]);
        let s = compute_graph_stats(&g);
        assert!((s.density - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.train_homophily, 1.0);
        assert_eq!(s.n_edges_per_relation, vec![2]);
    }

    #[test]
    fn budget_equals_train_size() {
        let g = graph(4, vec![vec![]], vec![true, false, false, false], vec![0, 2]);
        let d = build_task_descriptor("", &g);
        assert_eq!(d.supervision_budget, 2);
        assert!(d.task_text.is_empty());
    }

    #[test]
    fn single_relation_grid_has_no_relation_choices() {
        let grid = rule_based_grid(0);
        assert_eq!(grid.len(), 9);
        for s in &grid {
            assert!(validate_spec(s, 0).is_empty());
            assert_eq!(s.topology, TopologyChoice::Base);
        }
        assert!(designs_unique(&grid));
    }

    #[test]
    fn default_plan_with_relations() {
        let g = graph(4, vec![vec![(0, 1)], vec![(1, 2)]], vec![true, false, false, false], vec![0, 1]);
        let d = build_task_descriptor("t", &g);
        let plan = plan_rule_based(&d, DEFAULT_N_WORKFLOWS).unwrap();
        assert_eq!(plan.len(), 20);
        assert_eq!(plan, plan_rule_based(&d, 20).unwrap());
        assert_eq!(plan[0].evidence.len(), 0);
        assert_eq!(plan[3].evidence.len(), 6);
        assert_eq!(plan[4].topology, TopologyChoice::Fused);
        assert_eq!(plan[8].detector, DetectorKind::Tree);
        assert!(plan.iter().enumerate().all(|(i, s)| s.planner_rank == i));
        assert!(plan_rule_based(&d, 0).is_err());
    }

    #[test]
    fn violations() {
        let fused = WorkflowSpec::new(TopologyChoice::Fused, vec![], DetectorKind::Linear);
        assert_eq!(validate_spec(&fused, 0).len(), 1);
        let dup = WorkflowSpec::new(
            TopologyChoice::Base,
            vec![EvidenceKind::DegreeAnomaly, EvidenceKind::DegreeAnomaly],
            DetectorKind::Tree,
        );
        assert_eq!(validate_spec(&dup, 2).len(), 1);
        let ok = WorkflowSpec::new(TopologyChoice::Base, vec![EvidenceKind::DegreeAnomaly], DetectorKind::Tree);
        assert!(validate_spec(&ok, 0).is_empty());
    }
}
