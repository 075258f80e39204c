use super::{prepare, LinearModel, TrainConfig};
use crate::corpus::SentimentLabel;
use crate::error::{Error, Result};
use crate::features::SparseVector;

/// One-vs-rest linear SVM. For each class `k` it minimizes
/// `(1/n) sum_i max(0, 1 - s_i (w_k . x_i + b_k)) + l2 * ||w_k||^2`
/// with `s_i = +1` for members of `k` and `-1` otherwise.
///
/// The bias is learned as the weight of a constant unit feature and shares
/// the penalty. Optimization is full-batch projected subgradient descent with
/// step `1 / (2 l2 t)` for `max_iter` steps, returning the average of the
/// second half of the iterates.
pub fn train_linear_svm(x: &[SparseVector], y: &[SentimentLabel], cfg: &TrainConfig) -> Result<LinearModel> {
    let (class_order, targets, dim) = prepare(x, y)?;
    let l2 = cfg.l2_for(x.len());
    if l2.is_nan() || l2 <= 0.0 {
        return Err(Error::InvalidArgument("the SVM needs a positive l2 strength".into()));
    }
    let mut model = LinearModel::zeros(class_order, dim);
    for k in 0..model.class_order.len() {
        let signs: Vec<f64> = targets.iter().map(|&t| if t == k { 1.0 } else { -1.0 }).collect();
        let (w, b) = fit_binary(x, &signs, dim, l2, cfg.max_iter.max(2));
        if !b.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { stage: "SVM training".into() });
        }
        model.weights[k] = w;
        model.bias[k] = b;
    }
    Ok(model)
}

fn fit_binary(x: &[SparseVector], signs: &[f64], dim: usize, l2: f64, iterations: usize) -> (Vec<f64>, f64) {
    let n = x.len() as f64;
    let radius = 1.0 / (2.0 * l2).sqrt();
    // Weights with the bias as the last coordinate.
    let mut w = vec![0.0; dim + 1];
    let mut avg = vec![0.0; dim + 1];
    let mut averaged = 0usize;
    let mut step_dir = vec![0.0; dim + 1];
    let burn_in = iterations / 2;

    for t in 1..=iterations {
        step_dir.iter_mut().for_each(|g| *g = 0.0);
        for (xi, &s) in x.iter().zip(signs) {
            let margin = s * (xi.dot_dense(&w[..dim]) + w[dim]);
            if margin < 1.0 {
                for &(j, v) in xi.entries() {
                    step_dir[j] += s * v;
                }
                step_dir[dim] += s;
            }
        }
        let eta = 1.0 / (2.0 * l2 * t as f64);
        let shrink = 1.0 - eta * 2.0 * l2;
        for (wj, gj) in w.iter_mut().zip(&step_dir) {
            *wj = shrink * *wj + eta * gj / n;
        }
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > radius {
            let f = radius / norm;
            w.iter_mut().for_each(|v| *v *= f);
        }
        if t > burn_in {
            averaged += 1;
            let a = 1.0 / averaged as f64;
            for (m, wj) in avg.iter_mut().zip(&w) {
                *m += a * (wj - *m);
            }
        }
    }
    let b = avg.pop().expect("bias coordinate");
    (avg, b)
}
