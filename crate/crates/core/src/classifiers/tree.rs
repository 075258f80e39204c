use std::collections::BTreeMap;

use rand::seq::index::sample;

use super::{prepare, Classifier, FeatureSubsample, TrainConfig};
use crate::corpus::SentimentLabel;
use crate::error::Result;
use crate::features::SparseVector;
use crate::seed::{self, Rng};

/// Gains closer than this are treated as ties.
const GAIN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    /// Samples with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { class_counts: Vec<usize> },
}

/// A binary CART tree. Node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
    pub class_order: Vec<SentimentLabel>,
    pub dim: usize,
}

/// Entropy `-sum p ln p` of a class histogram.
pub fn entropy(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

impl DecisionTree {
    pub fn leaf_for(&self, x: &SparseVector) -> &[usize] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Split { feature, threshold, left, right } => {
                    at = if x.get(*feature) <= *threshold { *left } else { *right };
                }
                TreeNode::Leaf { class_counts } => return class_counts,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }
}

impl Classifier for DecisionTree {
    fn class_order(&self) -> &[SentimentLabel] {
        &self.class_order
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn scores(&self, x: &SparseVector) -> Vec<f64> {
        let counts = self.leaf_for(x);
        let total: usize = counts.iter().sum();
        counts.iter().map(|&c| c as f64 / total as f64).collect()
    }
}

/// Grows a tree on all samples, considering every feature at each split
/// unless the config asks for subsampling.
pub fn train_decision_tree(x: &[SparseVector], y: &[SentimentLabel], cfg: &TrainConfig) -> Result<DecisionTree> {
    let (class_order, targets, dim) = prepare(x, y)?;
    let samples: Vec<usize> = (0..x.len()).collect();
    let subsample = cfg.feature_subsample.unwrap_or(FeatureSubsample::All);
    let mut rng = seed::rng(cfg.seed);
    Ok(grow(x, &targets, class_order, dim, samples, cfg, subsample, &mut rng))
}

struct Candidate {
    /// Weighted child entropy; lower is better.
    impurity: f64,
    feature: usize,
    threshold: f64,
}

#[allow(clippy::too_many_arguments)]
pub(super) fn grow(
    x: &[SparseVector],
    targets: &[usize],
    class_order: Vec<SentimentLabel>,
    dim: usize,
    root_samples: Vec<usize>,
    cfg: &TrainConfig,
    subsample: FeatureSubsample,
    rng: &mut Rng,
) -> DecisionTree {
    let k = class_order.len();
    let mut nodes = vec![TreeNode::Leaf { class_counts: Vec::new() }];
    // (node index, samples, depth)
    let mut stack = vec![(0usize, root_samples, 0usize)];
    while let Some((at, samples, depth)) = stack.pop() {
        let mut counts = vec![0usize; k];
        for &i in &samples {
            counts[targets[i]] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = cfg.max_depth.is_some_and(|m| depth >= m);
        let split = if pure || depth_capped || samples.len() < cfg.min_samples_split {
            None
        } else {
            best_split(x, targets, k, dim, &samples, &counts, subsample, rng)
        };
        match split {
            None => nodes[at] = TreeNode::Leaf { class_counts: counts },
            Some(c) => {
                let (left, right): (Vec<usize>, Vec<usize>) =
                    samples.iter().partition(|&&i| x[i].get(c.feature) <= c.threshold);
                let l = nodes.len();
                nodes.push(TreeNode::Leaf { class_counts: Vec::new() });
                nodes.push(TreeNode::Leaf { class_counts: Vec::new() });
                nodes[at] = TreeNode::Split { feature: c.feature, threshold: c.threshold, left: l, right: l + 1 };
                // Left is popped first, so RNG draws happen in preorder.
                stack.push((l + 1, right, depth + 1));
                stack.push((l, left, depth + 1));
            }
        }
    }
    DecisionTree { nodes, class_order, dim }
}

#[allow(clippy::too_many_arguments)]
fn best_split(
    x: &[SparseVector],
    targets: &[usize],
    k: usize,
    dim: usize,
    samples: &[usize],
    totals: &[usize],
    subsample: FeatureSubsample,
    rng: &mut Rng,
) -> Option<Candidate> {
    // Nonzero values per feature among this node's samples. Features that
    // never appear are zero everywhere here and cannot split.
    let mut by_feature: BTreeMap<usize, Vec<(f64, usize)>> = BTreeMap::new();
    for &i in samples {
        for &(f, v) in x[i].entries() {
            by_feature.entry(f).or_default().push((v, targets[i]));
        }
    }
    let n = samples.len();
    let mut candidates: Vec<(usize, Vec<(f64, usize)>)> = by_feature
        .into_iter()
        .filter(|(_, vals)| {
            vals.len() < n || vals.iter().any(|&(v, _)| v != vals[0].0)
        })
        .collect();
    if candidates.is_empty() {
        return None;
    }
    if let FeatureSubsample::Sqrt = subsample {
        let wanted = (dim as f64).sqrt().ceil() as usize;
        if wanted < candidates.len() {
            let mut picked = sample(rng, candidates.len(), wanted).into_vec();
            picked.sort_unstable();
            let mut taken: Vec<Option<_>> = candidates.into_iter().map(Some).collect();
            candidates = picked.into_iter().map(|p| taken[p].take().expect("distinct")).collect();
        }
    }

    let mut best: Option<Candidate> = None;
    for (feature, mut vals) in candidates {
        // Fold the implicit zeros in as one block.
        let zeros = n - vals.len();
        let mut zero_counts = totals.to_vec();
        for &(_, c) in &vals {
            zero_counts[c] -= 1;
        }
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut blocks: Vec<(f64, Vec<usize>)> = Vec::new();
        let mut zero_placed = zeros == 0;
        for &(v, c) in &vals {
            if !zero_placed && v > 0.0 {
                blocks.push((0.0, zero_counts.clone()));
                zero_placed = true;
            }
            match blocks.last_mut() {
                Some((bv, counts)) if *bv == v => counts[c] += 1,
                _ => {
                    let mut counts = vec![0; k];
                    counts[c] += 1;
                    blocks.push((v, counts));
                }
            }
        }
        if !zero_placed {
            blocks.push((0.0, zero_counts));
        }

        let mut left = vec![0usize; k];
        let mut n_left = 0usize;
        for w in blocks.windows(2) {
            let (lo, lo_counts) = &w[0];
            let hi = w[1].0;
            for c in 0..k {
                left[c] += lo_counts[c];
            }
            n_left += lo_counts.iter().sum::<usize>();
            let right: Vec<usize> = totals.iter().zip(&left).map(|(t, l)| t - l).collect();
            let n_right = n - n_left;
            let impurity = (n_left as f64 * entropy(&left) + n_right as f64 * entropy(&right)) / n as f64;
            let mut threshold = lo + (hi - lo) / 2.0;
            if threshold >= hi {
                threshold = *lo;
            }
            let better = match &best {
                None => true,
                Some(b) => impurity < b.impurity - GAIN_EPS,
            };
            if better {
                best = Some(Candidate { impurity, feature, threshold });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn entropy_extremes() {
        assert_eq!(entropy(&[5, 0, 0]), 0.0);
        assert!((entropy(&[4, 4, 4]) - 3f64.ln()).abs() < 1e-15);
        assert!((entropy(&[1, 1]) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn pure_input_is_a_single_leaf() {
        let (x, _) = separable_toy();
        let y = vec![NEG; x.len()];
        let t = train_decision_tree(&x, &y, &TrainConfig::default()).unwrap();
        assert_eq!(t.nodes.len(), 1);
    }

    #[test]
    fn xor_needs_depth_two() {
        let x: Vec<_> = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]
            .iter()
            .map(|p| SparseVector::from_dense(p))
            .collect();
        let y = vec![NEG, POS, POS, NEG];
        let t = train_decision_tree(&x, &y, &TrainConfig::default()).unwrap();
        assert_eq!(t.depth(), 2);
        assert_eq!(accuracy(&t, &x, &y), 1.0);
        // The zero-gain root split goes to the lowest feature.
        assert!(matches!(t.nodes[0], TreeNode::Split { feature: 0, threshold, .. } if threshold == 0.5));
    }

    #[test]
    fn identical_inputs_with_conflicting_labels_stop() {
        let x = vec![SparseVector::from_dense(&[1.0]); 3];
        let y = vec![POS, NEG, NEG];
        let t = train_decision_tree(&x, &y, &TrainConfig::default()).unwrap();
        assert_eq!(t.nodes.len(), 1);
        let p = t.predict(&x[0]).unwrap();
        assert_eq!(p.label, NEG);
        assert!((p.scores[0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn negative_values_and_zero_blocks() {
        let x: Vec<_> = [-2.0, -1.0, 0.0, 0.0, 1.0, 2.0]
            .iter()
            .map(|&v| SparseVector::from_dense(&[v]))
            .collect();
        let y = vec![POS, POS, NEG, NEG, NEU, NEU];
        let t = train_decision_tree(&x, &y, &TrainConfig::default()).unwrap();
        assert_eq!(accuracy(&t, &x, &y), 1.0);
        assert_eq!(t.n_leaves(), 3);
    }

    #[test]
    fn min_samples_split_and_depth_limit() {
        let (x, y) = noisy_clusters(2, 40, 0.2);
        let cfg = TrainConfig { max_depth: Some(1), ..Default::default() };
        assert_eq!(train_decision_tree(&x, &y, &cfg).unwrap().depth(), 1);
        let cfg = TrainConfig { min_samples_split: 100, ..Default::default() };
        assert_eq!(train_decision_tree(&x, &y, &cfg).unwrap().nodes.len(), 1);
    }

    #[test]
    fn empty_training_set_is_an_error() {
        assert!(train_decision_tree(&[], &[], &TrainConfig::default()).is_err());
    }

    fn consistent_dataset() -> impl Strategy<Value = (Vec<SparseVector>, Vec<SentimentLabel>)> {
        prop::collection::btree_map(
            prop::collection::vec(0u8..4, 3),
            0usize..3,
            1..60,
        )
        .prop_map(|m| {
            let x = m.keys().map(|k| SparseVector::from_dense(&k.iter().map(|&v| v as f64).collect::<Vec<_>>())).collect();
            let y = m.values().map(|&c| SentimentLabel::from_index(c).unwrap()).collect();
            (x, y)
        })
    }

    proptest! {
        #[test]
        fn consistent_data_is_memorized((x, y) in consistent_dataset()) {
            let t = train_decision_tree(&x, &y, &TrainConfig::default()).unwrap();
            for (xi, yi) in x.iter().zip(&y) {
                prop_assert_eq!(t.predict(xi).unwrap().label, *yi);
            }
        }
    }
}
