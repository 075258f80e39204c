//! Classical classifiers over TF-IDF vectors: multinomial logistic
//! regression, one-vs-rest linear SVM, CART decision tree and random forest.
//! All of them share the [`Classifier`] prediction contract.

mod forest;
mod io;
mod logreg;
pub mod optim;
mod svm;
mod tree;

use serde::{Deserialize, Serialize};

use crate::corpus::SentimentLabel;
use crate::error::{Error, Result};
use crate::features::SparseVector;

pub use forest::{train_random_forest, RandomForest};
pub use io::{load_model, save_model, ModelFile};
pub use logreg::{softmax_objective, train_logreg, SoftmaxObjective};
pub use svm::train_linear_svm;
pub use tree::{entropy, train_decision_tree, DecisionTree, TreeNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSubsample {
    /// `ceil(sqrt(d))` candidate features per split.
    Sqrt,
    All,
}

/// Hyperparameters shared by the classical learners. Each learner reads the
/// fields that apply to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// L2 penalty on the weights. `None` picks the learner's default:
    /// `1 / n` against the SVM's averaged hinge loss, `1 / 2` against
    /// logistic regression's summed loss (the usual `C = 1`).
    pub l2_strength: Option<f64>,
    pub max_iter: usize,
    /// Gradient infinity-norm threshold for logistic regression.
    pub tol: f64,
    pub seed: u64,
    pub criterion: Criterion,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
    /// `None` picks the learner's default: all features for a single tree,
    /// `Sqrt` for forests.
    pub feature_subsample: Option<FeatureSubsample>,
    pub n_estimators: usize,
    pub bootstrap: bool,
    /// Worker threads for forest training; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            l2_strength: None,
            max_iter: 1000,
            tol: 1e-4,
            seed: 0,
            criterion: Criterion::Entropy,
            min_samples_split: 2,
            max_depth: None,
            feature_subsample: None,
            n_estimators: 30,
            bootstrap: true,
            threads: None,
        }
    }
}

impl TrainConfig {
    pub(crate) fn l2_for(&self, n: usize) -> f64 {
        self.l2_strength.unwrap_or(1.0 / n as f64)
    }

    pub(crate) fn logreg_l2(&self) -> f64 {
        self.l2_strength.unwrap_or(0.5)
    }
}

/// Output of a classifier for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: SentimentLabel,
    /// One score per entry of the model's class order.
    pub scores: Vec<f64>,
}

/// Index of the largest score; ties go to the earliest class.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub trait Classifier {
    fn class_order(&self) -> &[SentimentLabel];

    /// Number of input features the model expects.
    fn dim(&self) -> usize;

    fn scores(&self, x: &SparseVector) -> Vec<f64>;

    fn predict(&self, x: &SparseVector) -> Result<Prediction> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.dim() });
        }
        let scores = self.scores(x);
        let label = self.class_order()[argmax(&scores)];
        Ok(Prediction { label, scores })
    }
}

/// A linear model: one weight row and bias per class.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub class_order: Vec<SentimentLabel>,
}

impl LinearModel {
    pub fn zeros(class_order: Vec<SentimentLabel>, dim: usize) -> Self {
        let k = class_order.len();
        LinearModel { weights: vec![vec![0.0; dim]; k], bias: vec![0.0; k], class_order }
    }

    pub fn decision_values(&self, x: &SparseVector) -> Vec<f64> {
        self.weights.iter().zip(&self.bias).map(|(w, b)| x.dot_dense(w) + b).collect()
    }
}

impl Classifier for LinearModel {
    fn class_order(&self) -> &[SentimentLabel] {
        &self.class_order
    }

    fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    fn scores(&self, x: &SparseVector) -> Vec<f64> {
        self.decision_values(x)
    }
}

/// Any trained classical model.
#[derive(Debug, Clone, PartialEq)]
pub enum SentimentModel {
    LogReg(LinearModel),
    Svm(LinearModel),
    Tree(DecisionTree),
    Forest(RandomForest),
}

impl SentimentModel {
    pub fn kind(&self) -> &'static str {
        match self {
            SentimentModel::LogReg(_) => "logreg",
            SentimentModel::Svm(_) => "svm",
            SentimentModel::Tree(_) => "tree",
            SentimentModel::Forest(_) => "forest",
        }
    }

    fn inner(&self) -> &dyn Classifier {
        match self {
            SentimentModel::LogReg(m) | SentimentModel::Svm(m) => m,
            SentimentModel::Tree(m) => m,
            SentimentModel::Forest(m) => m,
        }
    }
}

impl Classifier for SentimentModel {
    fn class_order(&self) -> &[SentimentLabel] {
        self.inner().class_order()
    }

    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn scores(&self, x: &SparseVector) -> Vec<f64> {
        self.inner().scores(x)
    }
}

/// Validates a training set and maps labels to positions in the class order
/// (the labels present, in canonical order).
pub(crate) fn prepare(x: &[SparseVector], y: &[SentimentLabel]) -> Result<(Vec<SentimentLabel>, Vec<usize>, usize)> {
    if x.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    let dim = x[0].dim();
    if let Some(bad) = x.iter().find(|v| v.dim() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: bad.dim() });
    }
    let mut class_order: Vec<SentimentLabel> = y.to_vec();
    class_order.sort();
    class_order.dedup();
    let targets = y
        .iter()
        .map(|l| class_order.binary_search(l).expect("collected above"))
        .collect();
    Ok((class_order, targets, dim))
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::Rng;

    pub use SentimentLabel::{Negative as NEG, Neutral as NEU, Positive as POS};

    /// 20 points per class on either side of `x1 = 0`, at least 1 away from
    /// it, so the margin is at least 1.
    pub fn separable_toy() -> (Vec<SparseVector>, Vec<SentimentLabel>) {
        let mut rng = crate::seed::rng(17);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let side = if i % 2 == 0 { 1.0 } else { -1.0 };
            let x1 = side * rng.gen_range(1.0..3.0);
            let x2 = rng.gen_range(-2.0..2.0);
            x.push(SparseVector::from_dense(&[x1, x2]));
            y.push(if side > 0.0 { POS } else { NEG });
        }
        (x, y)
    }

    pub fn accuracy(model: &dyn Classifier, x: &[SparseVector], y: &[SentimentLabel]) -> f64 {
        let hits = x.iter().zip(y).filter(|(xi, yi)| model.predict(xi).unwrap().label == **yi).count();
        hits as f64 / y.len() as f64
    }

    /// Two clusters in 6 dense features with a share of labels flipped.
    pub fn noisy_clusters(seed: u64, n: usize, flip: f64) -> (Vec<SparseVector>, Vec<SentimentLabel>) {
        let mut rng = crate::seed::rng(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let class = i % 2;
            let center = if class == 0 { 1.0 } else { -1.0 };
            let v: Vec<f64> = (0..6)
                .map(|j| if j < 2 { center + rng.gen_range(-1.5..1.5) } else { rng.gen_range(-1.5..1.5) })
                .collect();
            let mut label = if class == 0 { POS } else { NEG };
            if rng.gen_bool(flip) {
                label = if label == POS { NEG } else { POS };
            }
            x.push(SparseVector::from_dense(&v));
            y.push(label);
        }
        (x, y)
    }
}
