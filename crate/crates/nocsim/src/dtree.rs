//! Binary decision trees for the congestion signal.
//!
//! Trees are trained offline by greedy recursive partitioning on weighted
//! Gini impurity, with split thresholds at midpoints between consecutive
//! distinct feature values. Inference is a plain root-to-leaf descent:
//! go left when `feature < threshold`. Leaves carry the {0, 1} congestion
//! decision, with weighted ties resolved to 1 (the throttle side).
//!
//! The model file is a versioned JSON document listing the feature names in
//! canonical order, the node array with explicit child indices, and the
//! training metadata. Thresholds survive a round trip bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, FEATURE_COUNT, FEATURE_NAMES};
use crate::labeling::LabeledSample;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// One node of the tree. Children are indices into the node array and
/// always come after their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    #[serde(rename = "split")]
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    #[serde(rename = "leaf")]
    Leaf(u8),
}

/// A trained depth-capped binary decision tree.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<TreeNode>,
    max_depth: usize,
}

/// How training weighs the two classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ClassWeighting {
    /// Every sample counts the same.
    Uniform,
    /// Each class's total weight is equalized, compensating for rare
    /// label-1 samples at low load.
    #[default]
    InverseFrequency,
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub weighting: ClassWeighting,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            max_depth: 4,
            min_leaf: 8,
            weighting: ClassWeighting::default(),
        }
    }
}

/// Per-class validation accuracy, the paper-style framing of recall.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccuracyReport {
    /// Percentage of true label-0 samples predicted 0.
    pub acc_label0: f64,
    /// Percentage of true label-1 samples predicted 1.
    pub acc_label1: f64,
    /// confusion[true_label][predicted_label]
    pub confusion: [[usize; 2]; 2],
    pub depth: usize,
}

fn gini_from_weights(w0: f64, w1: f64) -> f64 {
    let total = w0 + w1;
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - (w0 / total).powi(2) - (w1 / total).powi(2)
}

/// Gini impurity of a set of labels with per-sample weights.
pub fn gini_impurity(labels: &[u8], weights: &[f64]) -> f64 {
    let mut w = [0.0f64; 2];
    for (&l, &wt) in labels.iter().zip(weights) {
        w[l as usize] += wt;
    }
    gini_from_weights(w[0], w[1])
}

struct Builder<'a> {
    dataset: &'a [LabeledSample],
    weights: Vec<f64>,
    min_leaf: usize,
    nodes: Vec<TreeNode>,
}

impl<'a> Builder<'a> {
    fn leaf_label(&self, idx: &[usize]) -> u8 {
        let mut w = [0.0f64; 2];
        for &i in idx {
            w[self.dataset[i].label as usize] += self.weights[i];
        }
        u8::from(w[1] >= w[0])
    }

    /// Best (feature, threshold, score) over all candidate splits, or None
    /// when no split satisfies the min-leaf constraint on distinct values.
    fn best_split(&self, idx: &[usize]) -> Option<(usize, f64, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        let mut order: Vec<usize> = idx.to_vec();
        for feature in 0..FEATURE_COUNT {
            order.sort_by(|&a, &b| {
                self.dataset[a].features[feature]
                    .partial_cmp(&self.dataset[b].features[feature])
                    .unwrap()
            });
            let total: [f64; 2] = order.iter().fold([0.0; 2], |mut acc, &i| {
                acc[self.dataset[i].label as usize] += self.weights[i];
                acc
            });
            let mut left = [0.0f64; 2];
            let mut left_count = 0usize;
            for pos in 0..order.len() - 1 {
                let i = order[pos];
                left[self.dataset[i].label as usize] += self.weights[i];
                left_count += 1;
                let v = self.dataset[i].features[feature];
                let next = self.dataset[order[pos + 1]].features[feature];
                if v == next {
                    continue;
                }
                if left_count < self.min_leaf || order.len() - left_count < self.min_leaf {
                    continue;
                }
                let threshold = v + (next - v) / 2.0;
                let right = [total[0] - left[0], total[1] - left[1]];
                let wl = left[0] + left[1];
                let wr = right[0] + right[1];
                let score = (wl * gini_from_weights(left[0], left[1])
                    + wr * gini_from_weights(right[0], right[1]))
                    / (wl + wr);
                let better = match best {
                    None => true,
                    Some((_, _, s)) => score < s - 1e-12,
                };
                if better {
                    best = Some((feature, threshold, score));
                }
            }
        }
        best
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize, max_depth: usize) -> usize {
        let me = self.nodes.len();
        self.nodes.push(TreeNode::Leaf(0)); // placeholder

        let n1 = idx.iter().filter(|&&i| self.dataset[i].label == 1).count();
        let pure = n1 == 0 || n1 == idx.len();
        let mut done = depth >= max_depth || pure || idx.len() < 2 * self.min_leaf;

        let mut chosen = None;
        if !done {
            let parent = {
                let mut w = [0.0f64; 2];
                for &i in &idx {
                    w[self.dataset[i].label as usize] += self.weights[i];
                }
                gini_from_weights(w[0], w[1])
            };
            chosen = self.best_split(&idx);
            match chosen {
                Some((_, _, score)) if score < parent - 1e-12 => {}
                _ => done = true,
            }
        }

        if done {
            self.nodes[me] = TreeNode::Leaf(self.leaf_label(&idx));
            return me;
        }

        let (feature, threshold, _) = chosen.unwrap();
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| self.dataset[i].features[feature] < threshold);
        let left = self.build(left_idx, depth + 1, max_depth);
        let right = self.build(right_idx, depth + 1, max_depth);
        self.nodes[me] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        me
    }
}

/// Trains a tree by greedy Gini partitioning.
pub fn train(dataset: &[LabeledSample], options: TrainOptions) -> Result<DecisionTree> {
    if dataset.is_empty() {
        return Err(Error::Training("cannot train on an empty dataset".into()));
    }
    if options.max_depth == 0 {
        return Err(Error::Training("max depth must be at least 1".into()));
    }
    let min_leaf = options.min_leaf.max(1);

    let n1 = dataset.iter().filter(|s| s.label == 1).count();
    let n0 = dataset.len() - n1;
    let weights: Vec<f64> = match options.weighting {
        ClassWeighting::Uniform => vec![1.0; dataset.len()],
        ClassWeighting::InverseFrequency => {
            let n = dataset.len() as f64;
            let per_class = [
                if n0 > 0 { n / (2.0 * n0 as f64) } else { 0.0 },
                if n1 > 0 { n / (2.0 * n1 as f64) } else { 0.0 },
            ];
            dataset
                .iter()
                .map(|s| per_class[s.label as usize])
                .collect()
        }
    };

    let mut builder = Builder {
        dataset,
        weights,
        min_leaf,
        nodes: Vec::new(),
    };
    builder.build((0..dataset.len()).collect(), 0, options.max_depth);
    DecisionTree::from_nodes(builder.nodes, options.max_depth)
}

impl DecisionTree {
    /// A single-leaf tree with a constant decision.
    pub fn leaf(label: u8) -> DecisionTree {
        DecisionTree {
            nodes: vec![TreeNode::Leaf(label)],
            max_depth: 1,
        }
    }

    /// Builds a tree from an explicit node array, validating shape:
    /// non-empty, child indices in range and strictly increasing (so the
    /// array encodes a proper binary tree rooted at node 0), feature
    /// indices valid, labels binary.
    pub fn from_nodes(nodes: Vec<TreeNode>, max_depth: usize) -> Result<DecisionTree> {
        if nodes.is_empty() {
            return Err(Error::Model("model has no nodes".into()));
        }
        for (i, node) in nodes.iter().enumerate() {
            match *node {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= FEATURE_COUNT {
                        return Err(Error::Model(format!(
                            "node {i}: feature index {feature} out of range"
                        )));
                    }
                    if !threshold.is_finite() {
                        return Err(Error::Model(format!("node {i}: non-finite threshold")));
                    }
                    if left <= i || right <= i || left >= nodes.len() || right >= nodes.len() {
                        return Err(Error::Model(format!(
                            "node {i}: invalid child indices {left}/{right}"
                        )));
                    }
                }
                TreeNode::Leaf(label) => {
                    if label > 1 {
                        return Err(Error::Model(format!("node {i}: label must be 0 or 1")));
                    }
                }
            }
        }
        Ok(DecisionTree { nodes, max_depth })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    /// Depth actually reached (a single leaf has depth 0).
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Leaf(_) => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, left).max(walk(nodes, right))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn is_constant(&self) -> Option<u8> {
        match self.nodes[..] {
            [TreeNode::Leaf(label)] => Some(label),
            _ => None,
        }
    }

    /// Root-to-leaf descent; left when `feature < threshold`.
    pub fn predict(&self, features: &FeatureVector) -> u8 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf(label) => return label,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if features[feature] < threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }
}

/// Fraction of `dataset` the tree classifies correctly.
pub fn resubstitution_accuracy(tree: &DecisionTree, dataset: &[LabeledSample]) -> f64 {
    if dataset.is_empty() {
        return 1.0;
    }
    let correct = dataset
        .iter()
        .filter(|s| tree.predict(&s.features) == s.label)
        .count();
    correct as f64 / dataset.len() as f64
}

/// Per-class accuracy on a validation set.
///
/// A class with no validation samples reports 100% by convention (no
/// prediction of that class can be wrong); the confusion matrix makes the
/// absence visible.
pub fn evaluate(tree: &DecisionTree, validation: &[LabeledSample]) -> AccuracyReport {
    let mut confusion = [[0usize; 2]; 2];
    for s in validation {
        confusion[s.label as usize][tree.predict(&s.features) as usize] += 1;
    }
    let acc = |label: usize| {
        let total = confusion[label][0] + confusion[label][1];
        if total == 0 {
            100.0
        } else {
            100.0 * confusion[label][label] as f64 / total as f64
        }
    };
    AccuracyReport {
        acc_label0: acc(0),
        acc_label1: acc(1),
        confusion,
        depth: tree.depth(),
    }
}

/// Result of sweeping tree depth on a fixed train/validation split.
#[derive(Debug, Clone)]
pub struct DepthSweep {
    pub reports: Vec<AccuracyReport>,
    /// Depth with the highest label-1 accuracy, ties to the smaller depth.
    pub recommended_depth: usize,
    pub swept_depths: Vec<usize>,
}

/// Trains one tree per depth on the same stratified split and recommends
/// the depth that predicts label-1 best.
pub fn depth_sweep(
    dataset: &[LabeledSample],
    depths: &[usize],
    split_fraction: f64,
    seed: u64,
    base: TrainOptions,
) -> Result<DepthSweep> {
    if depths.is_empty() {
        return Err(Error::Training("depth sweep needs at least one depth".into()));
    }
    let split = crate::labeling::split_dataset(dataset, split_fraction, seed)?;
    let mut reports = Vec::with_capacity(depths.len());
    for &depth in depths {
        let tree = train(
            &split.train,
            TrainOptions {
                max_depth: depth,
                ..base
            },
        )?;
        let mut report = evaluate(&tree, &split.validation);
        report.depth = depth;
        reports.push(report);
    }
    let mut best = 0;
    for i in 1..reports.len() {
        let gain = reports[i].acc_label1 - reports[best].acc_label1;
        if gain > 1e-12 || (gain.abs() <= 1e-12 && depths[i] < depths[best]) {
            best = i;
        }
    }
    Ok(DepthSweep {
        recommended_depth: depths[best],
        reports,
        swept_depths: depths.to_vec(),
    })
}

/// On-disk model document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub max_depth: usize,
    pub nodes: Vec<TreeNode>,
    pub metadata: ModelMetadata,
}

/// Provenance recorded next to the tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub delta: i64,
    pub alpha: f64,
    pub depth: usize,
    pub split_seed: u64,
}

/// Serializes a tree with its training metadata.
pub fn serialize(tree: &DecisionTree, metadata: &ModelMetadata) -> Result<String> {
    let doc = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        max_depth: tree.max_depth,
        nodes: tree.nodes.clone(),
        metadata: metadata.clone(),
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Model(e.to_string()))
}

/// Parses and validates a serialized model.
pub fn deserialize(text: &str) -> Result<(DecisionTree, ModelMetadata)> {
    if text.trim().is_empty() {
        return Err(Error::Model("model file is empty".into()));
    }
    let doc: ModelFile =
        serde_json::from_str(text).map_err(|e| Error::Model(format!("malformed model: {e}")))?;
    if doc.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Model(format!(
            "unsupported model format version {} (expected {})",
            doc.format_version, MODEL_FORMAT_VERSION
        )));
    }
    if doc.feature_names != FEATURE_NAMES {
        return Err(Error::Model("model feature list does not match".into()));
    }
    let tree = DecisionTree::from_nodes(doc.nodes, doc.max_depth)?;
    Ok((tree, doc.metadata))
}

pub fn save_model(path: &Path, tree: &DecisionTree, metadata: &ModelMetadata) -> Result<()> {
    std::fs::write(path, serialize(tree, metadata)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(DecisionTree, ModelMetadata)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Model(format!("cannot read model {}: {e}", path.display())))?;
    deserialize(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::F_OCCUPANCY;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(values: &[(usize, f64)], label: u8) -> LabeledSample {
        let mut f = [0.0; FEATURE_COUNT];
        for &(i, v) in values {
            f[i] = v;
        }
        LabeledSample {
            features: FeatureVector(f),
            t: 0,
            label,
        }
    }

    fn one_feature_dataset(points: &[(f64, u8)]) -> Vec<LabeledSample> {
        points.iter().map(|&(x, l)| sample(&[(0, x)], l)).collect()
    }

    fn uniform(max_depth: usize) -> TrainOptions {
        TrainOptions {
            max_depth,
            min_leaf: 1,
            weighting: ClassWeighting::Uniform,
        }
    }

    /// Exhaustive search over every (feature, midpoint threshold) stump,
    /// minimizing the same weighted Gini objective by direct recomputation.
    /// Independent of the trainer's incremental scan.
    pub fn best_stump_gini(dataset: &[LabeledSample]) -> f64 {
        let weights = vec![1.0; dataset.len()];
        let mut best = {
            let labels: Vec<u8> = dataset.iter().map(|s| s.label).collect();
            gini_impurity(&labels, &weights)
        };
        for feature in 0..FEATURE_COUNT {
            let mut values: Vec<f64> = dataset.iter().map(|s| s.features[feature]).collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            values.dedup();
            for pair in values.windows(2) {
                let threshold = pair[0] + (pair[1] - pair[0]) / 2.0;
                let (mut l, mut r) = (Vec::new(), Vec::new());
                for s in dataset {
                    if s.features[feature] < threshold {
                        l.push(s.label);
                    } else {
                        r.push(s.label);
                    }
                }
                if l.is_empty() || r.is_empty() {
                    continue;
                }
                let score = (l.len() as f64 * gini_impurity(&l, &vec![1.0; l.len()])
                    + r.len() as f64 * gini_impurity(&r, &vec![1.0; r.len()]))
                    / dataset.len() as f64;
                if score < best {
                    best = score;
                }
            }
        }
        best
    }

    fn tree_training_gini(tree: &DecisionTree, dataset: &[LabeledSample]) -> f64 {
        // Weighted Gini of the depth-1 partition the tree induces.
        match tree.nodes()[0] {
            TreeNode::Leaf(_) => {
                let labels: Vec<u8> = dataset.iter().map(|s| s.label).collect();
                gini_impurity(&labels, &vec![1.0; labels.len()])
            }
            TreeNode::Split {
                feature, threshold, ..
            } => {
                let (l, r): (Vec<u8>, Vec<u8>) = {
                    let mut l = Vec::new();
                    let mut r = Vec::new();
                    for s in dataset {
                        if s.features[feature] < threshold {
                            l.push(s.label);
                        } else {
                            r.push(s.label);
                        }
                    }
                    (l, r)
                };
                (l.len() as f64 * gini_impurity(&l, &vec![1.0; l.len()])
                    + r.len() as f64 * gini_impurity(&r, &vec![1.0; r.len()]))
                    / dataset.len() as f64
            }
        }
    }

    #[test]
    fn linearly_separable_data_needs_one_split() {
        let dataset = one_feature_dataset(&[
            (1.0, 0),
            (2.0, 0),
            (3.0, 0),
            (4.0, 0),
            (6.0, 1),
            (7.0, 1),
            (8.0, 1),
        ]);
        let tree = train(&dataset, uniform(4)).unwrap();
        assert_eq!(tree.depth(), 1);
        assert_eq!(resubstitution_accuracy(&tree, &dataset), 1.0);
    }

    #[test]
    fn pure_dataset_trains_to_single_leaf() {
        let dataset = one_feature_dataset(&[(1.0, 1), (2.0, 1), (3.0, 1)]);
        let tree = train(&dataset, uniform(4)).unwrap();
        assert_eq!(tree.is_constant(), Some(1));
    }

    #[test]
    fn empty_dataset_is_a_training_error() {
        assert!(train(&[], uniform(4)).is_err());
    }

    #[test]
    fn depth1_matches_exhaustive_stump_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = rng.random_range(10..=200);
            let dataset: Vec<LabeledSample> = (0..n)
                .map(|_| {
                    sample(
                        &[(0, rng.random_range(0.0..10.0)), (1, rng.random_range(0.0..10.0))],
                        u8::from(rng.random_bool(0.5)),
                    )
                })
                .collect();
            let tree = train(&dataset, uniform(1)).unwrap();
            let got = tree_training_gini(&tree, &dataset);
            let want = best_stump_gini(&dataset);
            assert!(
                (got - want).abs() < 1e-9,
                "trained stump gini {got} differs from oracle {want}"
            );
        }
    }

    #[test]
    fn single_leaf_tree_predicts_its_label() {
        let tree = DecisionTree::leaf(0);
        assert_eq!(tree.predict(&FeatureVector::zeros()), 0);
    }

    #[test]
    fn occupancy_stump_routes_by_threshold() {
        let tree = DecisionTree::from_nodes(
            vec![
                TreeNode::Split {
                    feature: F_OCCUPANCY,
                    threshold: 16.0,
                    left: 1,
                    right: 2,
                },
                TreeNode::Leaf(0),
                TreeNode::Leaf(1),
            ],
            1,
        )
        .unwrap();
        let mut f = [0.0; FEATURE_COUNT];
        f[F_OCCUPANCY] = 20.0;
        assert_eq!(tree.predict(&FeatureVector(f)), 1);
        f[F_OCCUPANCY] = 3.0;
        assert_eq!(tree.predict(&FeatureVector(f)), 0);
    }

    #[test]
    fn resubstitution_bounds_labeled_windows() {
        // Train on a small fixture and check predictions on the training
        // rows: the tree can only do at least as well as the majority class.
        let dataset = one_feature_dataset(&[
            (8.0, 1),
            (9.0, 1),
            (10.0, 1),
            (3.0, 0),
            (4.0, 0),
            (12.0, 0),
        ]);
        let tree = train(&dataset, uniform(3)).unwrap();
        assert!(resubstitution_accuracy(&tree, &dataset) >= 0.5);
    }

    #[test]
    fn evaluate_perfect_and_degenerate_classifiers() {
        let dataset = one_feature_dataset(&[(1.0, 0), (2.0, 0), (8.0, 1), (9.0, 1)]);
        let perfect = train(&dataset, uniform(2)).unwrap();
        let report = evaluate(&perfect, &dataset);
        assert_eq!(report.acc_label0, 100.0);
        assert_eq!(report.acc_label1, 100.0);

        let always1 = DecisionTree::leaf(1);
        let report = evaluate(&always1, &dataset);
        assert_eq!(report.acc_label0, 0.0);
        assert_eq!(report.acc_label1, 100.0);
        assert_eq!(report.confusion[0][1], 2);
    }

    #[test]
    fn gini_of_pure_and_balanced_nodes() {
        assert_eq!(gini_impurity(&[0, 0, 0], &[1.0; 3]), 0.0);
        assert!((gini_impurity(&[0, 1, 0, 1], &[1.0; 4]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn accuracy_non_decreasing_in_depth() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let dataset: Vec<LabeledSample> = (0..150)
            .map(|_| {
                let x: f64 = rng.random_range(0.0..10.0);
                let y: f64 = rng.random_range(0.0..10.0);
                let noisy = rng.random_bool(0.1);
                let label = u8::from((x + y > 10.0) ^ noisy);
                sample(&[(0, x), (1, y)], label)
            })
            .collect();
        let mut prev = 0.0;
        for depth in 1..=8 {
            let tree = train(&dataset, uniform(depth)).unwrap();
            let acc = resubstitution_accuracy(&tree, &dataset);
            assert!(
                acc >= prev - 1e-12,
                "depth {depth} accuracy {acc} dropped below {prev}"
            );
            prev = acc;
        }
    }

    #[test]
    fn depth_sweep_recommends_single_depth_and_ignores_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dataset: Vec<LabeledSample> = (0..200)
            .map(|_| {
                let x: f64 = rng.random_range(0.0..10.0);
                sample(&[(0, x)], u8::from(x > 6.0))
            })
            .collect();
        let single = depth_sweep(&dataset, &[3], 0.7, 9, uniform(3)).unwrap();
        assert_eq!(single.recommended_depth, 3);

        let fwd = depth_sweep(&dataset, &[2, 3, 4, 5], 0.7, 9, uniform(3)).unwrap();
        let rev = depth_sweep(&dataset, &[5, 4, 3, 2], 0.7, 9, uniform(3)).unwrap();
        assert_eq!(fwd.recommended_depth, rev.recommended_depth);
    }

    #[test]
    fn model_round_trip_and_bad_files() {
        let dataset = one_feature_dataset(&[(1.0, 0), (2.0, 0), (8.0, 1), (9.0, 1)]);
        let tree = train(&dataset, uniform(2)).unwrap();
        let meta = ModelMetadata {
            delta: 5,
            alpha: 1.0 / 16.0,
            depth: 2,
            split_seed: 1,
        };
        let text = serialize(&tree, &meta).unwrap();
        let (back, back_meta) = deserialize(&text).unwrap();
        assert_eq!(back, tree);
        assert_eq!(back_meta, meta);

        assert!(deserialize("").is_err());
        assert!(deserialize("{not json").is_err());
        let wrong_version = text.replace(
            "\"format_version\": 1",
            "\"format_version\": 99",
        );
        assert!(deserialize(&wrong_version).is_err());
    }

    #[test]
    fn hand_written_stump_file_loads_and_predicts() {
        let names: Vec<String> = FEATURE_NAMES.iter().map(|s| format!("\"{s}\"")).collect();
        let text = format!(
            r#"{{
  "format_version": 1,
  "feature_names": [{}],
  "max_depth": 1,
  "nodes": [
    {{"split": {{"feature": 8, "threshold": 16.0, "left": 1, "right": 2}}}},
    {{"leaf": 0}},
    {{"leaf": 1}}
  ],
  "metadata": {{"delta": 5, "alpha": 0.0625, "depth": 1, "split_seed": 0}}
}}"#,
            names.join(", ")
        );
        let (tree, _) = deserialize(&text).unwrap();
        let mut f = [0.0; FEATURE_COUNT];
        f[8] = 17.0;
        assert_eq!(tree.predict(&FeatureVector(f)), 1);
        f[8] = 15.0;
        assert_eq!(tree.predict(&FeatureVector(f)), 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn round_trip_predicts_identically(
            points in proptest::collection::vec((0.0f64..10.0, 0.0f64..10.0, any::<bool>()), 8..60),
            probes in proptest::collection::vec(
                proptest::collection::vec(-5.0f64..15.0, FEATURE_COUNT..=FEATURE_COUNT),
                20,
            ),
        ) {
            let dataset: Vec<LabeledSample> = points
                .iter()
                .map(|&(x, y, l)| sample(&[(0, x), (1, y)], u8::from(l)))
                .collect();
            let tree = train(&dataset, uniform(4)).unwrap();
            let meta = ModelMetadata { delta: 5, alpha: 0.0625, depth: 4, split_seed: 0 };
            let (back, _) = deserialize(&serialize(&tree, &meta).unwrap()).unwrap();
            for probe in probes {
                let fv = FeatureVector(probe.try_into().unwrap());
                prop_assert_eq!(tree.predict(&fv), back.predict(&fv));
            }
        }

        #[test]
        fn prediction_is_pure(
            points in proptest::collection::vec((0.0f64..10.0, any::<bool>()), 4..40),
            probe in proptest::collection::vec(-5.0f64..15.0, FEATURE_COUNT..=FEATURE_COUNT),
        ) {
            let dataset = one_feature_dataset(
                &points.iter().map(|&(x, l)| (x, u8::from(l))).collect::<Vec<_>>(),
            );
            let tree = train(&dataset, uniform(3)).unwrap();
            let fv = FeatureVector(probe.clone().try_into().unwrap());
            prop_assert_eq!(tree.predict(&fv), tree.predict(&fv));
        }
    }
}
