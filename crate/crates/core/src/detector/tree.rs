//! Gradient-boosted regression trees on the class-weighted logistic loss.
//!
//! Each round fits a depth-limited tree to the second-order expansion of the
//! loss (gradient `c(p - y)`, hessian `c p (1 - p)`) with exact greedy splits.

use serde::{Deserialize, Serialize};

use super::standardize::{balanced_weights, canonical_order, sigmoid};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    /// L2 penalty on leaf values.
    pub lambda: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            rounds: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_samples_leaf: 2,
            lambda: 1.0,
        }
    }
}

const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] < threshold { left } else { right },
            }
        }
    }

    fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTrees {
    width: usize,
    base_margin: f64,
    learning_rate: f64,
    trees: Vec<Tree>,
}

struct Grower<'a> {
    x: &'a DenseMatrix,
    /// Row indices sorted by each feature's value.
    sorted: &'a [Vec<usize>],
    grad: &'a [f64],
    hess: &'a [f64],
    config: &'a TreeConfig,
    in_node: Vec<bool>,
}

impl Grower<'_> {
    fn leaf_value(&self, rows: &[usize]) -> f64 {
        let g: f64 = rows.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = rows.iter().map(|&i| self.hess[i]).sum();
        -g / (h + self.config.lambda)
    }

    /// Best `(gain, feature, threshold)` over all features for `rows`.
    fn best_split(&mut self, rows: &[usize]) -> Option<(f64, usize, f64)> {
        let lambda = self.config.lambda;
        let min_leaf = self.config.min_samples_leaf.max(1);
        if rows.len() < 2 * min_leaf {
            return None;
        }
        for &i in rows {
            self.in_node[i] = true;
        }
        let g_tot: f64 = rows.iter().map(|&i| self.grad[i]).sum();
        let h_tot: f64 = rows.iter().map(|&i| self.hess[i]).sum();
        let parent = g_tot * g_tot / (h_tot + lambda);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut ordered = Vec::with_capacity(rows.len());
        for f in 0..self.x.cols() {
            ordered.clear();
            ordered.extend(self.sorted[f].iter().copied().filter(|&i| self.in_node[i]));
            let (mut gl, mut hl) = (0.0, 0.0);
            for k in 0..ordered.len() - 1 {
                let i = ordered[k];
                gl += self.grad[i];
                hl += self.hess[i];
                let left_n = k + 1;
                if left_n < min_leaf || ordered.len() - left_n < min_leaf {
                    continue;
                }
                let (v, next) = (self.x.get(i, f), self.x.get(ordered[k + 1], f));
                if v == next {
                    continue;
                }
                let (gr, hr) = (g_tot - gl, h_tot - hl);
                let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
                if gain > MIN_GAIN && best.is_none_or(|(bg, _, _)| gain > bg) {
                    let mut threshold = v + (next - v) / 2.0;
                    if threshold <= v {
                        threshold = next;
                    }
                    best = Some((gain, f, threshold));
                }
            }
        }
        for &i in rows {
            self.in_node[i] = false;
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize, nodes: &mut Vec<Node>) -> usize {
        let at = nodes.len();
        nodes.push(Node::Leaf(self.leaf_value(&rows)));
        if depth >= self.config.max_depth {
            return at;
        }
        let Some((_, feature, threshold)) = self.best_split(&rows) else {
            return at;
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| self.x.get(i, feature) < threshold);
        let left = self.grow(l, depth + 1, nodes);
        let right = self.grow(r, depth + 1, nodes);
        nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }
}

impl BoostedTrees {
    pub fn fit(x: &DenseMatrix, y: &[bool], config: &TreeConfig) -> Result<Self> {
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
        let n = x.rows();
        let cw = balanced_weights(&y);

        let pos: f64 = cw.iter().zip(&y).filter(|(_, &l)| l).map(|(c, _)| c).sum();
        let neg: f64 = cw.iter().zip(&y).filter(|(_, &l)| !l).map(|(c, _)| c).sum();
        let base_margin = (pos / neg).ln();

        let sorted: Vec<Vec<usize>> = (0..x.cols())
            .map(|f| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)).then(a.cmp(&b)));
                idx
            })
            .collect();

        let mut margins = vec![base_margin; n];
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        let mut trees = Vec::with_capacity(config.rounds);
        for _ in 0..config.rounds {
            for i in 0..n {
                let p = sigmoid(margins[i]);
                grad[i] = cw[i] * (p - if y[i] { 1.0 } else { 0.0 });
                hess[i] = cw[i] * p * (1.0 - p);
            }
            let mut grower = Grower {
                x: &x,
                sorted: &sorted,
                grad: &grad,
                hess: &hess,
                config,
                in_node: vec![false; n],
            };
            let mut nodes = Vec::new();
            grower.grow((0..n).collect(), 0, &mut nodes);
            let tree = Tree { nodes };
            for (i, m) in margins.iter_mut().enumerate() {
                *m += config.learning_rate * tree.predict(x.row(i));
            }
            trees.push(tree);
        }
        Ok(Self {
            width: x.cols(),
            base_margin,
            learning_rate: config.learning_rate,
            trees,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn max_depth(&self) -> usize {
        self.trees.iter().map(Tree::depth).max().unwrap_or(0)
    }

    pub fn margin(&self, row: &[f64]) -> f64 {
        self.base_margin
            + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn score(&self, x: &DenseMatrix) -> Result<Vec<f64>> {
        if x.cols() != self.width {
            return Err(Error::Shape(format!(
                "tree detector fitted on width {}, got {}",
                self.width,
                x.cols()
            )));
        }
        Ok((0..x.rows()).map(|i| sigmoid(self.margin(x.row(i)))).collect())
    }

    /// Checks structural consistency of a deserialized model.
    pub(crate) fn validate(&self) -> Result<()> {
        if !self.base_margin.is_finite() || !self.learning_rate.is_finite() {
            return Err(Error::Blob("non-finite tree parameters".into()));
        }
        for t in &self.trees {
            if t.nodes.is_empty() {
                return Err(Error::Blob("empty tree".into()));
            }
            for (at, node) in t.nodes.iter().enumerate() {
                if let Node::Leaf(v) = *node {
                    if !v.is_finite() {
                        return Err(Error::Blob("non-finite leaf".into()));
                    }
                }
                if let Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } = *node
                {
                    // children always follow their parent, so walks terminate
                    if feature >= self.width
                        || threshold.is_nan()
                        || left <= at
                        || right <= at
                        || left >= t.nodes.len()
                        || right >= t.nodes.len()
                    {
                        return Err(Error::Blob("malformed tree node".into()));
                    }
                }
            }
        }
        let bound = self.base_margin.abs()
            + self.learning_rate.abs()
                * self
                    .trees
                    .iter()
                    .map(|t| {
                        t.nodes
                            .iter()
                            .map(|n| match n {
                                Node::Leaf(v) => v.abs(),
                                Node::Split { .. } => 0.0,
                            })
                            .fold(0.0, f64::max)
                    })
                    .sum::<f64>();
        if !bound.is_finite() {
            return Err(Error::Blob("tree margins overflow".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::auc;

    #[test]
    fn perfect_split_feature_gives_training_auc_one() {
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![((i * 7) % 5) as f64, if i < 4 { 2.0 } else { -1.0 }])
            .collect();
        let y: Vec<bool> = (0..12).map(|i| i < 4).collect();
        let x = DenseMatrix::from_rows(&rows).unwrap();
        let m = BoostedTrees::fit(&x, &y, &TreeConfig::default()).unwrap();
        let s = m.score(&x).unwrap();
        assert_eq!(auc(&s, &y).unwrap().value, 1.0);
        assert!(m.max_depth() <= 3);
        assert_eq!(m.n_trees(), 100);
    }

    #[test]
    fn permutation_invariant() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![(i as f64 * 1.3).sin(), (i as f64 * 0.7).cos(), (i % 3) as f64])
            .collect();
        let y: Vec<bool> = (0..20).map(|i| i % 4 == 0 || i == 7).collect();
        let x = DenseMatrix::from_rows(&rows).unwrap();
        let a = BoostedTrees::fit(&x, &y, &TreeConfig::default()).unwrap();
        let perm: Vec<usize> = (0..20).rev().collect();
        let xp = x.select_rows(&perm);
        let yp: Vec<bool> = perm.iter().map(|&i| y[i]).collect();
        let b = BoostedTrees::fit(&xp, &yp, &TreeConfig::default()).unwrap();
        assert_eq!(a.score(&x).unwrap(), b.score(&x).unwrap());
    }

    #[test]
    fn constant_features_give_identical_scores() {
        let x = DenseMatrix::from_rows(&vec![vec![1.0, 2.0]; 6]).unwrap();
        let y = vec![true, false, false, true, false, false];
        let m = BoostedTrees::fit(&x, &y, &TreeConfig::default()).unwrap();
        let s = m.score(&x).unwrap();
        assert!(s.iter().all(|&v| v == s[0]));
        // balanced weights put the weighted prior at one half
        assert!((s[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn min_leaf_respected() {
        // a single positive cannot be isolated with two samples per leaf
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let y = vec![false, false, false, false, true];
        let x = DenseMatrix::from_rows(&rows).unwrap();
        let m = BoostedTrees::fit(&x, &y, &TreeConfig::default()).unwrap();
        let s = m.score(&x).unwrap();
        assert_eq!(s[3], s[4]);
    }
}
