//! Planted-anomaly graph generator.
//!
//! Normal nodes belong to Gaussian feature communities and link mostly inside
//! their community. Anomalies get a feature offset of fixed length in a random
//! direction and, in every relation, replace a share of their links with
//! links to uniformly random nodes. In the base relation they also create
//! proportionally more links. With zero offset and zero rewiring anomalies
//! are drawn from the same distribution as normal nodes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, AttributedGraph, GraphInput, Label, SplitSets};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_nodes: usize,
    pub feature_dim: usize,
    pub anomaly_rate: f64,
    pub n_extra_relations: usize,
    /// Probability that a normal link stays inside the community.
    pub homophily: f64,
    /// Euclidean length of the anomaly feature offset.
    pub feature_shift: f64,
    /// Share of anomaly links redirected to random nodes.
    pub rewiring_rate: f64,
    /// Mean number of links created per node in each relation, times two.
    pub avg_degree: f64,
    pub n_communities: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_nodes: 2000,
            feature_dim: 16,
            anomaly_rate: 0.05,
            n_extra_relations: 2,
            homophily: 0.9,
            feature_shift: 4.0,
            rewiring_rate: 0.6,
            avg_degree: 8.0,
            n_communities: 4,
            seed: 0,
        }
    }
}

/// Extra links per anomaly link at full rewiring in the base relation.
const DEGREE_INFLATION: f64 = 1.0;

impl SyntheticSpec {
    pub fn n_anomalies(&self) -> usize {
        (self.n_nodes as f64 * self.anomaly_rate).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("synthetic: {m}")));
        if self.n_nodes < 10 {
            return fail("n_nodes must be at least 10");
        }
        if self.feature_dim < 1 || self.n_communities < 1 {
            return fail("feature_dim and n_communities must be at least 1");
        }
        if !(self.anomaly_rate > 0.0 && self.anomaly_rate < 1.0) {
            return fail("anomaly_rate must lie in (0, 1)");
        }
        let a = self.n_anomalies();
        if a == 0 || a >= self.n_nodes {
            return fail("anomaly count must be between 1 and n_nodes - 1");
        }
        if !(0.0..=1.0).contains(&self.homophily) || !(0.0..=1.0).contains(&self.rewiring_rate) {
            return fail("homophily and rewiring_rate must lie in [0, 1]");
        }
        if !(self.feature_shift >= 0.0 && self.feature_shift.is_finite()) {
            return fail("feature_shift must be finite and nonnegative");
        }
        if !(self.avg_degree >= 0.0 && self.avg_degree < self.n_nodes as f64) {
            return fail("avg_degree must lie in [0, n_nodes)");
        }
        Ok(())
    }
}

/// A generated graph before any split is assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub edge_lists: Vec<Vec<(usize, usize)>>,
    pub features: DenseMatrix,
    pub anomalies: Vec<bool>,
}

impl SyntheticData {
    pub fn labels(&self) -> Vec<Option<Label>> {
        self.anomalies.iter().map(|&a| Some(Label::from_bool(a))).collect()
    }

    pub fn into_graph(self, splits: SplitSets) -> Result<AttributedGraph> {
        let labels = self.labels();
        build_graph(GraphInput {
            n_nodes: self.anomalies.len(),
            edge_lists: self.edge_lists,
            features: self.features,
            labels,
            splits,
        })
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn relation_edges(
    spec: &SyntheticSpec,
    community: &[usize],
    members: &[Vec<usize>],
    anomalies: &[bool],
    inflate: bool,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    let n = spec.n_nodes;
    let per_node = spec.avg_degree / 2.0;
    let mut edges = Vec::new();
    for i in 0..n {
        let mut links = per_node;
        if anomalies[i] && inflate {
            links *= 1.0 + DEGREE_INFLATION * spec.rewiring_rate;
        }
        // integer part plus a Bernoulli draw for the fraction
        let whole = links.floor();
        let count = whole as usize + usize::from(rng.random::<f64>() < links - whole);
        for _ in 0..count {
            let random_link = if anomalies[i] {
                rng.random::<f64>() < spec.rewiring_rate
                    || rng.random::<f64>() >= spec.homophily
            } else {
                rng.random::<f64>() >= spec.homophily
            };
            let j = if random_link {
                rng.random_range(0..n)
            } else {
                let group = &members[community[i]];
                group[rng.random_range(0..group.len())]
            };
            if j != i {
                edges.push((i.min(j), i.max(j)));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    edges
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, d) = (spec.n_nodes, spec.feature_dim);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut anomalies = vec![false; n];
    for &i in &order[..spec.n_anomalies()] {
        anomalies[i] = true;
    }

    let community: Vec<usize> = (0..n).map(|_| rng.random_range(0..spec.n_communities)).collect();
    let mut members = vec![Vec::new(); spec.n_communities];
    for (i, &c) in community.iter().enumerate() {
        members[c].push(i);
    }
    // an empty community cannot receive links; fall back to all nodes
    let everyone: Vec<usize> = (0..n).collect();
    for m in &mut members {
        if m.is_empty() {
            *m = everyone.clone();
        }
    }

    let centers: Vec<Vec<f64>> = (0..spec.n_communities)
        .map(|_| (0..d).map(|_| gaussian(&mut rng)).collect())
        .collect();
    let mut features = DenseMatrix::zeros(n, d);
    for i in 0..n {
        let row = features.row_mut(i);
        for (v, c) in row.iter_mut().zip(&centers[community[i]]) {
            *v = c + gaussian(&mut rng);
        }
        if anomalies[i] && spec.feature_shift > 0.0 {
            let dir: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            for (v, u) in row.iter_mut().zip(&dir) {
                *v += spec.feature_shift * u / norm;
            }
        }
    }

    let edge_lists = (0..=spec.n_extra_relations)
        .map(|r| relation_edges(spec, &community, &members, &anomalies, r == 0, &mut rng))
        .collect();
    Ok(SyntheticData {
        edge_lists,
        features,
        anomalies,
    })
}
