//! JSON model files. Every float is written as a decimal string in Rust's
//! shortest round-trip form, so loading a saved model reproduces it bit for
//! bit.
//!
//! ```json
//! {"kind": "logreg", "class_order": ["positive", "negative", "neutral"],
//!  "dim": 2, "weights": [["0.5", "-1"], ...], "bias": ["0.1", ...],
//!  "tfidf": {"n_docs": 3, "vocab": [...]}, "strip_emoji": true}
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DecisionTree, LinearModel, RandomForest, SentimentModel, TreeNode};
use crate::corpus::SentimentLabel;
use crate::error::{Error, Result};
use crate::features::{TfidfJson, TfidfModel};

fn enc(v: f64) -> String {
    format!("{v:?}")
}

fn dec(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|e| Error::Model(format!("bad number {s:?}: {e}")))
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NodeJson {
    Split { feature: usize, threshold: String, left: usize, right: usize },
    Leaf { class_counts: Vec<usize> },
}

#[derive(Serialize, Deserialize)]
struct TreeJson {
    nodes: Vec<NodeJson>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ParamsJson {
    Logreg { weights: Vec<Vec<String>>, bias: Vec<String> },
    Svm { weights: Vec<Vec<String>>, bias: Vec<String> },
    Tree { nodes: Vec<NodeJson> },
    Forest { per_tree_seeds: Vec<u64>, trees: Vec<TreeJson> },
}

#[derive(Serialize, Deserialize)]
struct FileJson {
    class_order: Vec<SentimentLabel>,
    dim: usize,
    #[serde(flatten)]
    params: ParamsJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tfidf: Option<TfidfJson>,
    #[serde(default)]
    strip_emoji: bool,
}

/// A trained classical model with the vectorizer it was trained against.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: SentimentModel,
    pub tfidf: Option<TfidfModel>,
    /// Whether emoji were stripped from the training text.
    pub strip_emoji: bool,
}

fn nodes_to_json(nodes: &[TreeNode]) -> Vec<NodeJson> {
    nodes
        .iter()
        .map(|n| match n {
            TreeNode::Split { feature, threshold, left, right } => NodeJson::Split {
                feature: *feature,
                threshold: enc(*threshold),
                left: *left,
                right: *right,
            },
            TreeNode::Leaf { class_counts } => NodeJson::Leaf { class_counts: class_counts.clone() },
        })
        .collect()
}

fn nodes_from_json(nodes: Vec<NodeJson>, k: usize) -> Result<Vec<TreeNode>> {
    let len = nodes.len();
    let out = nodes
        .into_iter()
        .enumerate()
        .map(|(i, n)| match n {
            NodeJson::Split { feature, threshold, left, right } => {
                // Children always come after their parent, which rules out cycles.
                if left <= i || right <= i || left >= len || right >= len {
                    return Err(Error::Model(format!("node {i} has invalid children")));
                }
                Ok(TreeNode::Split { feature, threshold: dec(&threshold)?, left, right })
            }
            NodeJson::Leaf { class_counts } => {
                if class_counts.len() != k || class_counts.iter().sum::<usize>() == 0 {
                    return Err(Error::Model(format!("leaf {i} has invalid class counts")));
                }
                Ok(TreeNode::Leaf { class_counts })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    if out.is_empty() {
        return Err(Error::Model("tree without nodes".into()));
    }
    Ok(out)
}

fn linear_to_json(m: &LinearModel) -> (Vec<Vec<String>>, Vec<String>) {
    (
        m.weights.iter().map(|row| row.iter().copied().map(enc).collect()).collect(),
        m.bias.iter().copied().map(enc).collect(),
    )
}

fn linear_from_json(
    weights: Vec<Vec<String>>,
    bias: Vec<String>,
    class_order: Vec<SentimentLabel>,
    dim: usize,
) -> Result<LinearModel> {
    if weights.len() != class_order.len() || bias.len() != class_order.len() {
        return Err(Error::Model("weights do not match the class order".into()));
    }
    let weights = weights
        .iter()
        .map(|row| {
            if row.len() != dim {
                return Err(Error::Model("weight row has the wrong length".into()));
            }
            row.iter().map(|s| dec(s)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let bias = bias.iter().map(|s| dec(s)).collect::<Result<Vec<_>>>()?;
    if weights.iter().flatten().chain(&bias).any(|v| !v.is_finite()) {
        return Err(Error::Model("non-finite parameter".into()));
    }
    Ok(LinearModel { weights, bias, class_order })
}

impl ModelFile {
    fn to_json(&self) -> FileJson {
        let (class_order, dim, params) = match &self.model {
            SentimentModel::LogReg(m) => {
                let (weights, bias) = linear_to_json(m);
                (m.class_order.clone(), m.weights.first().map_or(0, Vec::len), ParamsJson::Logreg { weights, bias })
            }
            SentimentModel::Svm(m) => {
                let (weights, bias) = linear_to_json(m);
                (m.class_order.clone(), m.weights.first().map_or(0, Vec::len), ParamsJson::Svm { weights, bias })
            }
            SentimentModel::Tree(t) => {
                (t.class_order.clone(), t.dim, ParamsJson::Tree { nodes: nodes_to_json(&t.nodes) })
            }
            SentimentModel::Forest(f) => (
                f.class_order.clone(),
                f.dim,
                ParamsJson::Forest {
                    per_tree_seeds: f.per_tree_seeds.clone(),
                    trees: f.trees.iter().map(|t| TreeJson { nodes: nodes_to_json(&t.nodes) }).collect(),
                },
            ),
        };
        FileJson {
            class_order,
            dim,
            params,
            tfidf: self.tfidf.as_ref().map(TfidfModel::to_json),
            strip_emoji: self.strip_emoji,
        }
    }

    fn from_json(json: FileJson) -> Result<Self> {
        let FileJson { class_order, dim, params, tfidf, strip_emoji } = json;
        let k = class_order.len();
        if k == 0 || class_order.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Model("class_order must be non-empty and canonical".into()));
        }
        let model = match params {
            ParamsJson::Logreg { weights, bias } => {
                SentimentModel::LogReg(linear_from_json(weights, bias, class_order, dim)?)
            }
            ParamsJson::Svm { weights, bias } => SentimentModel::Svm(linear_from_json(weights, bias, class_order, dim)?),
            ParamsJson::Tree { nodes } => {
                SentimentModel::Tree(DecisionTree { nodes: nodes_from_json(nodes, k)?, class_order, dim })
            }
            ParamsJson::Forest { per_tree_seeds, trees } => {
                if per_tree_seeds.len() != trees.len() || trees.is_empty() {
                    return Err(Error::Model("forest seeds do not match its trees".into()));
                }
                let trees = trees
                    .into_iter()
                    .map(|t| {
                        Ok(DecisionTree { nodes: nodes_from_json(t.nodes, k)?, class_order: class_order.clone(), dim })
                    })
                    .collect::<Result<Vec<_>>>()?;
                SentimentModel::Forest(RandomForest { trees, per_tree_seeds, class_order, dim })
            }
        };
        let tfidf = tfidf.map(TfidfModel::from_json).transpose()?;
        if let Some(t) = &tfidf {
            if t.dim() != dim {
                return Err(Error::Model(format!("vectorizer has {} features, model expects {dim}", t.dim())));
            }
        }
        Ok(ModelFile { model, tfidf, strip_emoji })
    }
}

pub fn save_model(file: &ModelFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string(&file.to_json()).expect("serializable");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let json: FileJson = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
    ModelFile::from_json(json)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::super::*;
    use super::*;
    use crate::features::fit_tfidf;

    #[test]
    fn every_kind_round_trips_bit_for_bit() {
        let (x, mut y) = noisy_clusters(12, 50, 0.1);
        y[3] = NEU;
        y[9] = NEU;
        let cfg = TrainConfig { n_estimators: 4, ..Default::default() };
        let tfidf = fit_tfidf(&[vec!["a", "b", "c", "d", "e", "f"]]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let models = [
            SentimentModel::LogReg(train_logreg(&x, &y, &cfg).unwrap()),
            SentimentModel::Svm(train_linear_svm(&x, &y, &cfg).unwrap()),
            SentimentModel::Tree(train_decision_tree(&x, &y, &cfg).unwrap()),
            SentimentModel::Forest(train_random_forest(&x, &y, &cfg).unwrap()),
        ];
        for model in models {
            let file = ModelFile { model, tfidf: Some(tfidf.clone()), strip_emoji: true };
            let path = dir.path().join(format!("{}.json", file.model.kind()));
            save_model(&file, &path).unwrap();
            let back = load_model(&path).unwrap();
            assert_eq!(back, file);
        }
    }

    #[test]
    fn rejects_cyclic_trees() {
        let json = r#"{"kind":"tree","class_order":["positive"],"dim":1,
            "nodes":[{"feature":0,"threshold":"0.5","left":0,"right":1},{"class_counts":[1]}]}"#;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        fs::write(&path, json).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Model(_))));
    }
}
