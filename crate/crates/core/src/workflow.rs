//! Shared, cached inputs for evaluating many workflows on one graph.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::detector::{DetectorConfig, DetectorInput};
use crate::encoding::{context_encoding, evidence_aware_encoding, graph_context_encoding, NodeEncoding};
use crate::error::Result;
use crate::evidence::{
    from_normalized_columns, normalize_scores, raw_evidence, validate_kinds, EvidenceConfig,
    EvidenceKind,
};
use crate::graph::{AttributedGraph, Split, TopologyChoice};
use crate::matrix::DenseMatrix;

type Cache<K, V> = Mutex<HashMap<K, Arc<V>>>;

/// Graph, label splits and lazily computed encodings. Evidence statistics are
/// always fitted on the training split. Safe to share across threads.
pub struct Workbench<'g> {
    graph: &'g AttributedGraph,
    pub train_ids: Vec<usize>,
    pub val_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    pub evidence_config: EvidenceConfig,
    pub detector_config: DetectorConfig,
    phis: Cache<TopologyChoice, DenseMatrix>,
    columns: Cache<(TopologyChoice, EvidenceKind), DenseMatrix>,
    encodings: Cache<(TopologyChoice, Vec<EvidenceKind>), NodeEncoding>,
    relation_phis: OnceLock<Vec<DenseMatrix>>,
}

fn cached<K, V>(cache: &Cache<K, V>, key: K, make: impl FnOnce() -> Result<V>) -> Result<Arc<V>>
where
    K: std::hash::Hash + Eq,
{
    if let Some(v) = cache.lock().expect("cache lock").get(&key) {
        return Ok(Arc::clone(v));
    }
    // built outside the lock; concurrent builders produce identical values
    let value = Arc::new(make()?);
    Ok(Arc::clone(
        cache.lock().expect("cache lock").entry(key).or_insert(value),
    ))
}

impl<'g> Workbench<'g> {
    pub fn new(
        graph: &'g AttributedGraph,
        evidence_config: EvidenceConfig,
        detector_config: DetectorConfig,
    ) -> Self {
        Self {
            graph,
            train_ids: graph.split_ids(Split::Train),
            val_ids: graph.split_ids(Split::Val),
            test_ids: graph.split_ids(Split::Test),
            evidence_config,
            detector_config,
            phis: Mutex::default(),
            columns: Mutex::default(),
            encodings: Mutex::default(),
            relation_phis: OnceLock::new(),
        }
    }

    pub fn graph(&self) -> &AttributedGraph {
        self.graph
    }

    pub fn labels(&self, ids: &[usize]) -> Vec<bool> {
        self.graph.labels_for(ids)
    }

    fn phi(&self, topology: TopologyChoice) -> Result<Arc<DenseMatrix>> {
        cached(&self.phis, topology, || {
            graph_context_encoding(self.graph, topology)
        })
    }

    fn column(&self, topology: TopologyChoice, kind: EvidenceKind) -> Result<Arc<DenseMatrix>> {
        let key_topology = if kind.depends_on_topology() {
            topology
        } else {
            TopologyChoice::Base
        };
        cached(&self.columns, (key_topology, kind), || {
            let raw = raw_evidence(
                self.graph,
                key_topology,
                kind,
                &self.train_ids,
                &self.evidence_config,
            )?;
            Ok(DenseMatrix::column(normalize_scores(
                &raw,
                self.evidence_config.epsilon,
            )))
        })
    }

    /// `φ` and `z` for a topology and evidence list.
    pub fn encoding(
        &self,
        topology: TopologyChoice,
        kinds: &[EvidenceKind],
    ) -> Result<Arc<NodeEncoding>> {
        cached(&self.encodings, (topology, kinds.to_vec()), || {
            validate_kinds(kinds, self.graph.n_extra_relations())?;
            self.graph.topology(topology)?;
            let phi = self.phi(topology)?;
            let columns = kinds
                .iter()
                .map(|&k| self.column(topology, k).map(|c| (*c).clone()))
                .collect::<Result<Vec<_>>>()?;
            let evidence = from_normalized_columns(self.graph.n_nodes(), kinds.to_vec(), columns);
            let z = evidence_aware_encoding(&phi, &evidence)?;
            Ok(NodeEncoding {
                phi: (*phi).clone(),
                z,
                topology,
                evidence_kinds: kinds.to_vec(),
            })
        })
    }

    /// `φ^(r)` for every extra relation.
    pub fn relation_phis(&self) -> Result<&[DenseMatrix]> {
        if let Some(p) = self.relation_phis.get() {
            return Ok(p);
        }
        let phis = self
            .graph
            .extra_adjs()
            .iter()
            .map(|adj| context_encoding(adj, self.graph.features()))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.relation_phis.get_or_init(|| phis))
    }

    pub fn detector_input<'a>(&'a self, encoding: &'a NodeEncoding) -> Result<DetectorInput<'a>> {
        Ok(DetectorInput::new(&encoding.z, self.relation_phis()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidence::assemble_evidence;
    use crate::graph::{build_graph, GraphInput, Label, SplitSets};

    #[test]
    fn cached_encoding_matches_direct_assembly() {
        let n = 12;
        let features: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let g = build_graph(GraphInput {
            n_nodes: n,
            edge_lists: vec![
                (0..n - 1).map(|i| (i, i + 1)).collect(),
                vec![(0, 5), (2, 9), (3, 11)],
            ],
            features: DenseMatrix::from_rows(&features).unwrap(),
            labels: (0..n).map(|i| Some(Label::from_bool(i % 4 == 0))).collect(),
            splits: SplitSets {
                train: (0..6).collect(),
                val: (6..9).collect(),
                test: (9..12).collect(),
            },
        })
        .unwrap();
        let bench = Workbench::new(&g, EvidenceConfig::default(), DetectorConfig::default());
        let kinds = [
            EvidenceKind::ReconstructionResidual,
            EvidenceKind::DegreeAnomaly,
            EvidenceKind::RelationDisagreement,
        ];
        for topology in TopologyChoice::ALL {
            let cached = bench.encoding(topology, &kinds).unwrap();
            let ev = assemble_evidence(&g, topology, &kinds, &bench.train_ids, &EvidenceConfig::default())
                .unwrap();
            let direct = NodeEncoding::new(&g, topology, &ev).unwrap();
            assert_eq!(*cached, direct);
        }
        assert_eq!(bench.relation_phis().unwrap().len(), 1);
    }
}
