use serde::{Deserialize, Serialize};

use crate::seed::Rng;
use rand::Rng as _;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
        Matrix { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out += self * v`
    fn mul_add(&self, v: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o += dot(self.row(r), v);
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4 * 4;
    for (ca, cb) in a[..chunks].chunks_exact(4).zip(b[..chunks].chunks_exact(4)) {
        for k in 0..4 {
            acc[k] += ca[k] * cb[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in a[chunks..].iter().zip(&b[chunks..]) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += a * x`
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One LSTM direction. Gate rows are stacked as input `i`, forget `f`,
/// candidate `g`, output `o`, each `hidden` rows tall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    /// `4H x I`
    pub input: Matrix,
    /// `4H x H`
    pub recurrent: Matrix,
    /// `4H`
    pub bias: Vec<f64>,
}

/// Per-position activations of one cell run, indexed by sequence position
/// regardless of direction.
#[derive(Debug, Clone)]
pub(crate) struct CellTrace {
    /// Activated gates `[i, f, g, o]`.
    pub gates: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub tanh_c: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
}

impl LstmCell {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmCell {
            input: Matrix::zeros(4 * hidden, input),
            recurrent: Matrix::zeros(4 * hidden, hidden),
            bias: vec![0.0; 4 * hidden],
        }
    }

    /// Uniform weights in `±1/sqrt(H)` and a forget-gate bias of one.
    pub fn init(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let s = 1.0 / (hidden as f64).sqrt();
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].iter_mut().for_each(|b| *b = 1.0);
        LstmCell {
            input: Matrix::uniform(4 * hidden, input, s, rng),
            recurrent: Matrix::uniform(4 * hidden, hidden, s, rng),
            bias,
        }
    }

    pub fn hidden(&self) -> usize {
        self.recurrent.cols
    }

    pub fn input_size(&self) -> usize {
        self.input.cols
    }

    fn order(n: usize, reverse: bool) -> impl DoubleEndedIterator<Item = (usize, Option<usize>)> {
        (0..n).map(move |k| {
            if reverse {
                let t = n - 1 - k;
                (t, (k > 0).then_some(t + 1))
            } else {
                (k, k.checked_sub(1))
            }
        })
    }

    /// Runs the cell over `xs` from zero states. On a non-finite hidden state
    /// returns the offending position.
    pub(crate) fn forward(&self, xs: &[Vec<f64>], reverse: bool) -> Result<CellTrace, usize> {
        let n = xs.len();
        let h_dim = self.hidden();
        let mut tr = CellTrace {
            gates: vec![Vec::new(); n],
            c: vec![Vec::new(); n],
            tanh_c: vec![Vec::new(); n],
            h: vec![Vec::new(); n],
        };
        for (t, prev) in Self::order(n, reverse) {
            let mut z = self.bias.clone();
            self.input.mul_add(&xs[t], &mut z);
            if let Some(p) = prev {
                self.recurrent.mul_add(&tr.h[p], &mut z);
            }
            for (r, v) in z.iter_mut().enumerate() {
                *v = if (2 * h_dim..3 * h_dim).contains(&r) { v.tanh() } else { sigmoid(*v) };
            }
            let (i, rest) = z.split_at(h_dim);
            let (f, rest) = rest.split_at(h_dim);
            let (g, o) = rest.split_at(h_dim);
            let c: Vec<f64> = (0..h_dim)
                .map(|j| i[j] * g[j] + prev.map_or(0.0, |p| f[j] * tr.c[p][j]))
                .collect();
            let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
            let h: Vec<f64> = o.iter().zip(&tanh_c).map(|(o, t)| o * t).collect();
            if h.iter().chain(&c).any(|v| !v.is_finite()) {
                return Err(t);
            }
            tr.gates[t] = z;
            tr.c[t] = c;
            tr.tanh_c[t] = tanh_c;
            tr.h[t] = h;
        }
        Ok(tr)
    }

    /// Backpropagation through time. `dh_ext[t]` is the loss gradient with
    /// respect to `h_t` from outside the cell. Parameter gradients are added
    /// into `grad`; the gradients with respect to the inputs are returned.
    pub(crate) fn backward(
        &self,
        tr: &CellTrace,
        xs: &[Vec<f64>],
        dh_ext: &[Vec<f64>],
        reverse: bool,
        grad: &mut LstmCell,
    ) -> Vec<Vec<f64>> {
        let n = xs.len();
        let h_dim = self.hidden();
        let mut dxs = vec![vec![0.0; self.input_size()]; n];
        let mut dh_next = vec![0.0; h_dim];
        let mut dc_next = vec![0.0; h_dim];
        let mut dz = vec![0.0; 4 * h_dim];
        for (t, prev) in Self::order(n, reverse).rev() {
            let gates = &tr.gates[t];
            for j in 0..h_dim {
                let (i, f, g, o) = (gates[j], gates[h_dim + j], gates[2 * h_dim + j], gates[3 * h_dim + j]);
                let dh = dh_ext[t][j] + dh_next[j];
                let tc = tr.tanh_c[t][j];
                let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
                let c_prev = prev.map_or(0.0, |p| tr.c[p][j]);
                dz[j] = dc * g * i * (1.0 - i);
                dz[h_dim + j] = dc * c_prev * f * (1.0 - f);
                dz[2 * h_dim + j] = dc * i * (1.0 - g * g);
                dz[3 * h_dim + j] = dh * tc * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            axpy(1.0, &dz, &mut grad.bias);
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for (r, &d) in dz.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                axpy(d, &xs[t], grad.input.row_mut(r));
                axpy(d, self.input.row(r), &mut dxs[t]);
                if let Some(p) = prev {
                    axpy(d, &tr.h[p], grad.recurrent.row_mut(r));
                    axpy(d, self.recurrent.row(r), &mut dh_next);
                }
            }
        }
        dxs
    }
}
