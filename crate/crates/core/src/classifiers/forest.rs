use rand::Rng as _;
use rayon::prelude::*;

use super::tree::{grow, DecisionTree};
use super::{argmax, prepare, Classifier, FeatureSubsample, TrainConfig};
use crate::corpus::SentimentLabel;
use crate::error::{Error, Result};
use crate::features::SparseVector;
use crate::seed;

/// A bagged ensemble of entropy trees voting by majority.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub per_tree_seeds: Vec<u64>,
    pub class_order: Vec<SentimentLabel>,
    pub dim: usize,
}

impl RandomForest {
    pub fn tree_seed(master: u64, index: usize) -> u64 {
        seed::derive(master, index as u64)
    }
}

/// Trains `n_estimators` trees, each on its own bootstrap sample with
/// `sqrt` feature subsampling per split (unless configured otherwise). Tree
/// `t` depends only on the data and `derive(seed, t)`, so the forest is
/// identical for any number of worker threads.
pub fn train_random_forest(x: &[SparseVector], y: &[SentimentLabel], cfg: &TrainConfig) -> Result<RandomForest> {
    let (class_order, targets, dim) = prepare(x, y)?;
    if cfg.n_estimators == 0 {
        return Err(Error::InvalidArgument("a forest needs at least one tree".into()));
    }
    let subsample = cfg.feature_subsample.unwrap_or(FeatureSubsample::Sqrt);
    let seeds: Vec<u64> = (0..cfg.n_estimators).map(|t| RandomForest::tree_seed(cfg.seed, t)).collect();
    let n = x.len();

    let build = |&tree_seed: &u64| {
        let mut rng = seed::rng(tree_seed);
        let samples: Vec<usize> = if cfg.bootstrap {
            (0..n).map(|_| rng.gen_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        grow(x, &targets, class_order.clone(), dim, samples, cfg, subsample, &mut rng)
    };

    let trees: Vec<DecisionTree> = match cfg.threads {
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            pool.install(|| seeds.par_iter().map(build).collect())
        }
        None => seeds.par_iter().map(build).collect(),
    };
    Ok(RandomForest { trees, per_tree_seeds: seeds, class_order, dim })
}

impl Classifier for RandomForest {
    fn class_order(&self) -> &[SentimentLabel] {
        &self.class_order
    }

    fn dim(&self) -> usize {
        self.dim
    }

    /// Fraction of trees voting for each class.
    fn scores(&self, x: &SparseVector) -> Vec<f64> {
        let mut votes = vec![0.0; self.class_order.len()];
        for tree in &self.trees {
            votes[argmax(&tree.scores(x))] += 1.0;
        }
        let n = self.trees.len() as f64;
        votes.iter_mut().for_each(|v| *v /= n);
        votes
    }
}
