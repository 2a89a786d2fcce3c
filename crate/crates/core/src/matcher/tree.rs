//! CART trees over dense row-major feature matrices.
//!
//! One grower serves both classification (Gini on weighted 0/1 targets,
//! leaves hold the positive fraction) and the gradient-boosting regression
//! trees (squared-error gain on gradients, Newton-step leaves).

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub max_depth: usize,
}

impl DecisionTree {
    /// Leaf value reached by `row` (`x <= threshold` goes left).
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn leaf_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value } => Some(*value),
            Node::Split { .. } => None,
        })
    }

    pub fn depth(&self) -> usize {
        fn rec(t: &DecisionTree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + rec(t, left).max(rec(t, right)),
            }
        }
        rec(self, 0)
    }

    /// Split features and thresholds in preorder.
    pub fn splits(&self) -> Vec<(usize, f64)> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split {
                    feature, threshold, ..
                } => Some((*feature, *threshold)),
                Node::Leaf { .. } => None,
            })
            .collect()
    }
}

/// Dense feature matrix, one row per sample.
#[derive(Debug, Clone, Copy)]
pub struct Matrix<'a> {
    pub data: &'a [f64],
    pub n_features: usize,
}

impl<'a> Matrix<'a> {
    pub fn new(data: &'a [f64], n_features: usize) -> Self {
        debug_assert!(n_features > 0 && data.len() % n_features == 0);
        Self { data, n_features }
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.n_features
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.n_features..(i + 1) * self.n_features]
    }

    fn at(&self, i: usize, f: usize) -> f64 {
        self.data[i * self.n_features + f]
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Criterion<'a> {
    /// Targets are 0/1 labels.
    Gini,
    /// Targets are gradients; leaves take `sum(g) / sum(hessian)`.
    Newton { hessian: &'a [f64] },
}

#[derive(Debug, Clone, Copy)]
pub struct GrowParams {
    pub max_depth: usize,
    pub min_samples_split: f64,
    pub min_samples_leaf: f64,
    /// Features examined per split; `None` means all.
    pub max_features: Option<usize>,
}

const MIN_GAIN: f64 = 1e-12;

/// Weighted node statistics: total weight and weighted target sum.
#[derive(Debug, Clone, Copy, Default)]
struct Stats {
    w: f64,
    s: f64,
}

impl Stats {
    fn impurity(&self, c: &Criterion) -> f64 {
        if self.w <= 0.0 {
            return 0.0;
        }
        match c {
            // W * 2p(1-p)
            Criterion::Gini => 2.0 * self.s * (self.w - self.s) / self.w,
            // sum g^2 - S^2/W, dropping the constant term
            Criterion::Newton { .. } => -self.s * self.s / self.w,
        }
    }
}

struct Grower<'a, R> {
    x: Matrix<'a>,
    target: &'a [f64],
    weight: &'a [f64],
    criterion: Criterion<'a>,
    params: GrowParams,
    rng: &'a mut R,
    nodes: Vec<Node>,
    importance: Vec<f64>,
}

impl<R: Rng> Grower<'_, R> {
    fn stats(&self, idx: &[usize]) -> Stats {
        idx.iter().fold(Stats::default(), |acc, &i| Stats {
            w: acc.w + self.weight[i],
            s: acc.s + self.weight[i] * self.target[i],
        })
    }

    fn leaf_value(&self, idx: &[usize], st: Stats) -> f64 {
        match self.criterion {
            Criterion::Gini => {
                if st.w > 0.0 {
                    (st.s / st.w).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            }
            Criterion::Newton { hessian } => {
                let h: f64 = idx.iter().map(|&i| self.weight[i] * hessian[i]).sum();
                st.s / h.max(1e-12)
            }
        }
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.x.n_features;
        match self.params.max_features {
            Some(m) if m < d => {
                let mut f = sample(self.rng, d, m.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    /// Best `(gain, feature, threshold)` over the examined features.
    fn best_split(&mut self, idx: &[usize], parent: Stats) -> Option<(f64, usize, f64)> {
        let parent_imp = parent.impurity(&self.criterion);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for f in self.candidate_features() {
            order.sort_by(|&a, &b| self.x.at(a, f).total_cmp(&self.x.at(b, f)).then(a.cmp(&b)));
            let mut left = Stats::default();
            for k in 0..order.len() - 1 {
                let i = order[k];
                left.w += self.weight[i];
                left.s += self.weight[i] * self.target[i];
                let (lo, hi) = (self.x.at(i, f), self.x.at(order[k + 1], f));
                if lo >= hi {
                    continue;
                }
                let right = Stats {
                    w: parent.w - left.w,
                    s: parent.s - left.s,
                };
                if left.w < self.params.min_samples_leaf || right.w < self.params.min_samples_leaf {
                    continue;
                }
                let gain = parent_imp - left.impurity(&self.criterion) - right.impurity(&self.criterion);
                if gain > MIN_GAIN && best.is_none_or(|(g, _, _)| gain > g) {
                    let mid = 0.5 * (lo + hi);
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some((gain, f, threshold));
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let st = self.stats(&idx);
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: self.leaf_value(&idx, st),
        });
        let pure = match self.criterion {
            Criterion::Gini => st.s <= 0.0 || st.s >= st.w,
            Criterion::Newton { .. } => false,
        };
        if depth >= self.params.max_depth || pure || st.w < self.params.min_samples_split || idx.len() < 2 {
            return at;
        }
        let Some((gain, feature, threshold)) = self.best_split(&idx, st) else {
            return at;
        };
        self.importance[feature] += gain;
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| self.x.at(i, feature) <= threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }
}

/// Grows one tree on the rows with positive weight. Returns the tree and the
/// total impurity decrease per feature.
pub fn grow_tree<R: Rng>(
    x: Matrix<'_>,
    target: &[f64],
    weight: &[f64],
    criterion: Criterion<'_>,
    params: GrowParams,
    rng: &mut R,
) -> (DecisionTree, Vec<f64>) {
    let idx: Vec<usize> = (0..x.n_rows()).filter(|&i| weight[i] > 0.0).collect();
    let mut g = Grower {
        x,
        target,
        weight,
        criterion,
        params,
        rng,
        nodes: Vec::new(),
        importance: vec![0.0; x.n_features],
    };
    g.grow(idx, 0);
    (
        DecisionTree {
            nodes: g.nodes,
            max_depth: params.max_depth,
        },
        g.importance,
    )
}
