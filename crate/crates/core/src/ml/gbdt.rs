//! Gradient-boosted regression trees.
//!
//! Each round fits a depth-limited regression tree to the negative gradient of
//! the loss, choosing splits greedily by weighted variance reduction over the
//! exact sorted feature values. Leaves take a regularized Newton step
//! `sum(w * r) / (sum(w * h) + l2_reg)`; a leaf whose step would raise its
//! own training loss is halved until it does not, so the training loss never
//! increases from one round to the next.
//!
//! Prediction for a sample is `base_score + learning_rate * sum(leaf values)`,
//! passed through a sigmoid for the logistic loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ml::{sigmoid, Matrix};

pub const GBDT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Loss {
    Logistic,
    Squared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtConfig {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub l2_reg: f64,
    /// Weight positives by the negative/positive count ratio (logistic only).
    pub balance_classes: bool,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            n_trees: 100,
            learning_rate: 0.3,
            max_depth: 6,
            min_samples_leaf: 1,
            l2_reg: 1.0,
            balance_classes: true,
        }
    }
}

impl GbdtConfig {
    pub fn with_trees(n_trees: usize) -> Self {
        GbdtConfig {
            n_trees,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.max_depth == 0 {
            return Err(Error::Config("max_depth must be positive".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("min_samples_leaf must be positive".into()));
        }
        if self.l2_reg < 0.0 || !self.l2_reg.is_finite() {
            return Err(Error::Config("l2_reg must be non-negative".into()));
        }
        Ok(())
    }
}

/// A regression tree node. Samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn leaf_value(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn check(&self, n_features: usize) -> Result<()> {
        match self {
            TreeNode::Leaf { value } if value.is_finite() => Ok(()),
            TreeNode::Leaf { .. } => Err(Error::Model("non-finite leaf value".into())),
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if *feature >= n_features {
                    return Err(Error::Model(format!(
                        "split feature {feature} out of range for {n_features} features"
                    )));
                }
                if !threshold.is_finite() {
                    return Err(Error::Model("non-finite split threshold".into()));
                }
                left.check(n_features)?;
                right.check(n_features)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub version: u32,
    pub loss: Loss,
    pub base_score: f64,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub n_trees: usize,
    pub feature_names: Vec<String>,
    pub trees: Vec<TreeNode>,
    /// Set when the training targets held a single class.
    #[serde(default)]
    pub degenerate: bool,
    /// Weighted training loss after the base score and after every round.
    #[serde(default)]
    pub train_loss: Vec<f64>,
}

impl GbdtModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Raw additive score before any link function.
    pub fn margin(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.leaf_value(x)).sum();
        self.base_score + self.learning_rate * sum
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let m = self.margin(x);
        match self.loss {
            Loss::Logistic => sigmoid(m),
            Loss::Squared => m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != GBDT_FORMAT_VERSION {
            return Err(Error::Model(format!("unsupported gbdt version {}", self.version)));
        }
        if self.n_trees != self.trees.len() {
            return Err(Error::Model(format!(
                "n_trees {} disagrees with {} stored trees",
                self.n_trees,
                self.trees.len()
            )));
        }
        if !self.base_score.is_finite() || !self.learning_rate.is_finite() {
            return Err(Error::Model("non-finite base score or learning rate".into()));
        }
        let f = self.n_features();
        self.trees.iter().try_for_each(|t| t.check(f))
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let m: GbdtModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }
}

pub fn predict_gbdt(model: &GbdtModel, features: &Matrix) -> Result<Vec<f64>> {
    if features.cols() != model.n_features() {
        return Err(Error::ShapeMismatch(format!(
            "model expects {} features, input has {}",
            model.n_features(),
            features.cols()
        )));
    }
    Ok(features.rows_iter().map(|r| model.predict_row(r)).collect())
}

/// Feature matrix with per-feature sort orders precomputed, so several models
/// (e.g. one per class) can be fitted on the same rows without re-sorting.
pub struct GbdtTrainer<'a> {
    x: &'a Matrix,
    sorted: Vec<Vec<u32>>,
}

impl<'a> GbdtTrainer<'a> {
    pub fn new(x: &'a Matrix) -> Result<Self> {
        if x.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Value("non-finite feature value".into()));
        }
        let sorted = (0..x.cols())
            .map(|f| {
                let mut idx: Vec<u32> = (0..x.rows() as u32).collect();
                idx.sort_by(|&a, &b| x.get(a as usize, f).total_cmp(&x.get(b as usize, f)));
                idx
            })
            .collect();
        Ok(GbdtTrainer { x, sorted })
    }

    pub fn fit(
        &self,
        targets: &[f64],
        loss: Loss,
        cfg: &GbdtConfig,
        feature_names: Vec<String>,
    ) -> Result<GbdtModel> {
        cfg.validate()?;
        let n = self.x.rows();
        if targets.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} targets for {} rows",
                targets.len(),
                n
            )));
        }
        if n < 2 {
            return Err(Error::InsufficientData("gbdt needs at least 2 rows".into()));
        }
        if feature_names.len() != self.x.cols() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                self.x.cols()
            )));
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::Value("non-finite target".into()));
        }
        let weights = match loss {
            Loss::Logistic => {
                if targets.iter().any(|&t| t != 0.0 && t != 1.0) {
                    return Err(Error::Value("logistic targets must be 0 or 1".into()));
                }
                let pos = targets.iter().filter(|&&t| t == 1.0).count();
                let neg = n - pos;
                if pos == 0 || neg == 0 {
                    log::warn!("degenerate logistic training set: single class");
                    let p: f64 = if pos == 0 { 1e-6 } else { 1.0 - 1e-6 };
                    return Ok(GbdtModel {
                        version: GBDT_FORMAT_VERSION,
                        loss,
                        base_score: (p / (1.0 - p)).ln(),
                        learning_rate: cfg.learning_rate,
                        max_depth: cfg.max_depth,
                        n_trees: 0,
                        feature_names,
                        trees: Vec::new(),
                        degenerate: true,
                        train_loss: Vec::new(),
                    });
                }
                let wpos = if cfg.balance_classes {
                    neg as f64 / pos as f64
                } else {
                    1.0
                };
                targets
                    .iter()
                    .map(|&t| if t == 1.0 { wpos } else { 1.0 })
                    .collect::<Vec<f64>>()
            }
            Loss::Squared => vec![1.0; n],
        };
        let wsum: f64 = weights.iter().sum();
        let base_score = match loss {
            Loss::Logistic => {
                let p = weights
                    .iter()
                    .zip(targets)
                    .map(|(w, t)| w * t)
                    .sum::<f64>()
                    / wsum;
                (p / (1.0 - p)).ln()
            }
            Loss::Squared => {
                weights
                    .iter()
                    .zip(targets)
                    .map(|(w, t)| w * t)
                    .sum::<f64>()
                    / wsum
            }
        };
        let mut margin = vec![base_score; n];
        let mut train_loss = vec![mean_loss(loss, &margin, targets, &weights)];
        let mut trees = Vec::with_capacity(cfg.n_trees);
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        for _ in 0..cfg.n_trees {
            for i in 0..n {
                let (g, h) = match loss {
                    Loss::Logistic => {
                        let p = sigmoid(margin[i]);
                        (targets[i] - p, p * (1.0 - p))
                    }
                    Loss::Squared => (targets[i] - margin[i], 1.0),
                };
                grad[i] = g;
                hess[i] = h;
            }
            let tree = self.grow(&grad, &hess, &weights, &margin, targets, loss, cfg);
            for (i, m) in margin.iter_mut().enumerate() {
                *m += cfg.learning_rate * tree.leaf_value(self.x.row(i));
            }
            train_loss.push(mean_loss(loss, &margin, targets, &weights));
            trees.push(tree);
        }
        Ok(GbdtModel {
            version: GBDT_FORMAT_VERSION,
            loss,
            base_score,
            learning_rate: cfg.learning_rate,
            max_depth: cfg.max_depth,
            n_trees: trees.len(),
            feature_names,
            trees,
            degenerate: false,
            train_loss,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn grow(
        &self,
        grad: &[f64],
        hess: &[f64],
        weights: &[f64],
        margin: &[f64],
        targets: &[f64],
        loss: Loss,
        cfg: &GbdtConfig,
    ) -> TreeNode {
        let n = self.x.rows();
        let mut nodes: Vec<BuildNode> = vec![BuildNode::root(grad, weights, n)];
        let mut node_of: Vec<u32> = vec![0; n];
        let mut frontier: Vec<usize> = vec![0];
        for _depth in 0..cfg.max_depth {
            let active: Vec<usize> = frontier
                .iter()
                .copied()
                .filter(|&id| nodes[id].count >= 2 * cfg.min_samples_leaf)
                .collect();
            if active.is_empty() {
                break;
            }
            let mut slot_of = vec![u32::MAX; nodes.len()];
            for (s, &id) in active.iter().enumerate() {
                slot_of[id] = s as u32;
            }
            let mut best: Vec<Option<(f64, usize, f64)>> = vec![None; active.len()];
            let mut scan = vec![ScanState::default(); active.len()];
            for f in 0..self.x.cols() {
                scan.iter_mut().for_each(|s| *s = ScanState::default());
                for &i in &self.sorted[f] {
                    let i = i as usize;
                    let slot = slot_of[node_of[i] as usize];
                    if slot == u32::MAX {
                        continue;
                    }
                    let slot = slot as usize;
                    let node = &nodes[active[slot]];
                    let v = self.x.get(i, f);
                    let st = &mut scan[slot];
                    if st.count > 0 && v > st.last {
                        let right = node.count - st.count;
                        if st.count >= cfg.min_samples_leaf && right >= cfg.min_samples_leaf {
                            let (sr, wr) = (node.sum_wg - st.sum_wg, node.sum_w - st.sum_w);
                            let gain = st.sum_wg * st.sum_wg / st.sum_w + sr * sr / wr
                                - node.sum_wg * node.sum_wg / node.sum_w;
                            if gain > best[slot].map_or(1e-12, |b| b.0) {
                                let mut thr = st.last + (v - st.last) / 2.0;
                                if thr >= v {
                                    thr = st.last;
                                }
                                best[slot] = Some((gain, f, thr));
                            }
                        }
                    }
                    st.count += 1;
                    st.sum_wg += weights[i] * grad[i];
                    st.sum_w += weights[i];
                    st.last = v;
                }
            }
            let mut next = Vec::new();
            let mut child_of: Vec<Option<(usize, usize, usize, f64)>> = vec![None; nodes.len()];
            for (slot, &id) in active.iter().enumerate() {
                if let Some((_, f, thr)) = best[slot] {
                    let l = nodes.len();
                    nodes.push(BuildNode::default());
                    nodes.push(BuildNode::default());
                    nodes[id].split = Some((f, thr, l, l + 1));
                    child_of[id] = Some((f, l, l + 1, thr));
                    next.push(l);
                    next.push(l + 1);
                }
            }
            if next.is_empty() {
                break;
            }
            for i in 0..n {
                if let Some(Some((f, l, r, thr))) = child_of.get(node_of[i] as usize) {
                    let child = if self.x.get(i, *f) <= *thr { *l } else { *r };
                    node_of[i] = child as u32;
                    let c = &mut nodes[child];
                    c.count += 1;
                    c.sum_wg += weights[i] * grad[i];
                    c.sum_w += weights[i];
                }
            }
            frontier = next;
        }
        // Leaf values with a per-leaf safeguard against loss increase.
        let mut leaf_h = vec![0.0; nodes.len()];
        let mut members: Vec<Vec<u32>> = vec![Vec::new(); nodes.len()];
        for i in 0..n {
            leaf_h[node_of[i] as usize] += weights[i] * hess[i];
            members[node_of[i] as usize].push(i as u32);
        }
        let mut values = vec![0.0; nodes.len()];
        for (id, node) in nodes.iter().enumerate() {
            if node.split.is_some() || node.count == 0 {
                continue;
            }
            let mut v = node.sum_wg / (leaf_h[id] + cfg.l2_reg);
            if !v.is_finite() {
                v = 0.0;
            }
            let before = leaf_loss(loss, &members[id], margin, targets, weights, 0.0);
            let mut tries = 0;
            while v != 0.0
                && leaf_loss(loss, &members[id], margin, targets, weights, cfg.learning_rate * v)
                    > before
            {
                v *= 0.5;
                tries += 1;
                if tries > 60 {
                    v = 0.0;
                }
            }
            values[id] = v;
        }
        to_tree(&nodes, &values, 0)
    }
}

pub fn fit_gbdt(
    features: &Matrix,
    targets: &[f64],
    loss: Loss,
    cfg: &GbdtConfig,
    feature_names: Vec<String>,
) -> Result<GbdtModel> {
    GbdtTrainer::new(features)?.fit(targets, loss, cfg, feature_names)
}

#[derive(Debug, Clone, Default)]
struct BuildNode {
    count: usize,
    sum_wg: f64,
    sum_w: f64,
    split: Option<(usize, f64, usize, usize)>,
}

impl BuildNode {
    fn root(grad: &[f64], weights: &[f64], n: usize) -> Self {
        BuildNode {
            count: n,
            sum_wg: grad.iter().zip(weights).map(|(g, w)| g * w).sum(),
            sum_w: weights.iter().sum(),
            split: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct ScanState {
    count: usize,
    sum_wg: f64,
    sum_w: f64,
    last: f64,
}

fn to_tree(nodes: &[BuildNode], values: &[f64], id: usize) -> TreeNode {
    match nodes[id].split {
        Some((feature, threshold, l, r)) => TreeNode::Split {
            feature,
            threshold,
            left: Box::new(to_tree(nodes, values, l)),
            right: Box::new(to_tree(nodes, values, r)),
        },
        None => TreeNode::Leaf { value: values[id] },
    }
}

fn point_loss(loss: Loss, margin: f64, target: f64) -> f64 {
    match loss {
        // log(1 + e^m) - t*m, computed without overflow.
        Loss::Logistic => margin.max(0.0) + (-margin.abs()).exp().ln_1p() - target * margin,
        Loss::Squared => 0.5 * (target - margin) * (target - margin),
    }
}

fn leaf_loss(
    loss: Loss,
    members: &[u32],
    margin: &[f64],
    targets: &[f64],
    weights: &[f64],
    delta: f64,
) -> f64 {
    members
        .iter()
        .map(|&i| {
            let i = i as usize;
            weights[i] * point_loss(loss, margin[i] + delta, targets[i])
        })
        .sum()
}

fn mean_loss(loss: Loss, margin: &[f64], targets: &[f64], weights: &[f64]) -> f64 {
    let total: f64 = (0..margin.len())
        .map(|i| weights[i] * point_loss(loss, margin[i], targets[i]))
        .sum();
    total / weights.iter().sum::<f64>()
}
