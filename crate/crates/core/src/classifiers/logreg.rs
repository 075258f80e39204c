use super::optim::{minimize, LbfgsOptions, Objective};
use super::{prepare, LinearModel, TrainConfig};
use crate::corpus::SentimentLabel;
use crate::error::{Error, Result};
use crate::features::SparseVector;

/// Multinomial cross-entropy with an L2 penalty on the weights:
/// `sum_i -ln softmax(W x_i + b)[y_i] + l2 * ||W||_F^2`.
///
/// Parameters are packed as the `K x d` weights row by row, then the `K`
/// biases.
pub struct SoftmaxObjective<'a> {
    x: &'a [SparseVector],
    targets: Vec<usize>,
    classes: usize,
    dim: usize,
    l2: f64,
}

/// Builds the objective for inspection or custom optimization.
pub fn softmax_objective<'a>(
    x: &'a [SparseVector],
    targets: Vec<usize>,
    classes: usize,
    l2: f64,
) -> SoftmaxObjective<'a> {
    let dim = x.first().map_or(0, SparseVector::dim);
    SoftmaxObjective { x, targets, classes, dim, l2 }
}

impl SoftmaxObjective<'_> {
    pub fn unpack(&self, theta: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let d = self.dim;
        let weights = (0..self.classes).map(|c| theta[c * d..(c + 1) * d].to_vec()).collect();
        (weights, theta[self.classes * d..].to_vec())
    }
}

impl Objective for SoftmaxObjective<'_> {
    fn dim(&self) -> usize {
        self.classes * (self.dim + 1)
    }

    fn value_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let (k, d) = (self.classes, self.dim);
        let (w, b) = theta.split_at(k * d);
        let (gw, gb) = grad.split_at_mut(k * d);
        gw.iter_mut().zip(w).for_each(|(g, wi)| *g = 2.0 * self.l2 * wi);
        gb.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = self.l2 * w.iter().map(|v| v * v).sum::<f64>();

        let mut logits = vec![0.0; k];
        for (xi, &yi) in self.x.iter().zip(&self.targets) {
            for c in 0..k {
                logits[c] = b[c] + xi.dot_dense(&w[c * d..(c + 1) * d]);
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
            let log_norm = max + sum.ln();
            loss += log_norm - logits[yi];
            for c in 0..k {
                let residual = (logits[c] - log_norm).exp() - if c == yi { 1.0 } else { 0.0 };
                gb[c] += residual;
                let row = &mut gw[c * d..(c + 1) * d];
                for &(j, v) in xi.entries() {
                    row[j] += residual * v;
                }
            }
        }
        loss
    }
}

/// Multinomial logistic regression fitted with L-BFGS from a zero start.
pub fn train_logreg(x: &[SparseVector], y: &[SentimentLabel], cfg: &TrainConfig) -> Result<LinearModel> {
    let (class_order, targets, _) = prepare(x, y)?;
    let l2 = cfg.logreg_l2();
    let objective = softmax_objective(x, targets, class_order.len(), l2);
    let start = vec![0.0; objective.dim()];
    let out = minimize(
        &objective,
        start,
        LbfgsOptions { max_iter: cfg.max_iter, tol: cfg.tol, ..Default::default() },
    )?;
    if !out.value.is_finite() || out.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { stage: "logistic regression training".into() });
    }
    if !out.converged {
        log::debug!(
            "logistic regression stopped after {} iterations with gradient norm {:.3e}",
            out.iterations,
            out.grad_inf_norm
        );
    }
    let (weights, bias) = objective.unpack(&out.x);
    Ok(LinearModel { weights, bias, class_order })
}
