//! One feed-forward tower: categorical embedding tables concatenated with
//! dense inputs, ReLU hidden layers, a linear output layer and L2
//! normalization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hgnn::forward::normalize_output;
use crate::linalg::{l2, matmul_nn, matmul_nt, matmul_tn_acc, Matrix, Parameters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tower {
    /// One `vocab × width` table per categorical field.
    pub tables: Vec<Matrix>,
    /// `out × in` per dense layer.
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    pub dense_dim: usize,
}

/// A batch of tower inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TowerInput {
    /// Per row, one vocabulary index per categorical field.
    pub categorical: Vec<Vec<usize>>,
    pub dense: Matrix,
}

impl TowerInput {
    pub fn rows(&self) -> usize {
        self.dense.rows
    }
}

#[derive(Debug, Clone)]
pub struct TowerForward {
    acts: Vec<Matrix>,
    norms: Vec<f64>,
    fallback: Vec<bool>,
    pub out: Matrix,
}

impl TowerForward {
    /// Norm of each output row before normalization.
    pub fn norms(&self) -> &[f64] {
        &self.norms
    }
}

impl Tower {
    pub fn init<R: Rng + ?Sized>(
        vocab_sizes: &[usize],
        categorical_width: usize,
        dense_dim: usize,
        widths: &[usize],
        rng: &mut R,
    ) -> Self {
        let tables = vocab_sizes
            .iter()
            .map(|&v| Matrix::glorot(v, categorical_width, rng))
            .collect();
        let mut d_in = vocab_sizes.len() * categorical_width + dense_dim;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for &w in widths {
            weights.push(Matrix::glorot(w, d_in, rng));
            biases.push(vec![0.0; w]);
            d_in = w;
        }
        Tower {
            tables,
            weights,
            biases,
            dense_dim,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut t = self.clone();
        for tensor in t.tensors_mut() {
            tensor.fill(0.0);
        }
        t
    }

    pub fn input_dim(&self) -> usize {
        self.tables.iter().map(|t| t.cols).sum::<usize>() + self.dense_dim
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().map_or(0, |w| w.rows)
    }

    fn assemble(&self, input: &TowerInput) -> Result<Matrix> {
        if input.dense.cols != self.dense_dim {
            return Err(Error::Dimension {
                expected: self.dense_dim,
                got: input.dense.cols,
                context: "tower dense input".into(),
            });
        }
        let n = input.rows();
        let mut x = Matrix::zeros(n, self.input_dim());
        for r in 0..n {
            let cats = &input.categorical[r];
            if cats.len() != self.tables.len() {
                return Err(Error::Dimension {
                    expected: self.tables.len(),
                    got: cats.len(),
                    context: "categorical fields".into(),
                });
            }
            let row = x.row_mut(r);
            let mut at = 0;
            for (table, &idx) in self.tables.iter().zip(cats) {
                let idx = if idx < table.rows { idx } else { 0 };
                row[at..at + table.cols].copy_from_slice(table.row(idx));
                at += table.cols;
            }
            row[at..].copy_from_slice(input.dense.row(r));
        }
        Ok(x)
    }

    pub fn forward(&self, input: &TowerInput) -> Result<TowerForward> {
        let mut acts = vec![self.assemble(input)?];
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut pre = matmul_nt(&acts[l], w);
            for r in 0..pre.rows {
                for (v, bb) in pre.row_mut(r).iter_mut().zip(b) {
                    *v += bb;
                }
            }
            if l < last {
                pre.data.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(pre);
        }
        let h = acts.last().expect("at least one layer");
        let mut out = Matrix::zeros(h.rows, h.cols);
        let mut norms = Vec::with_capacity(h.rows);
        let mut fallback = Vec::with_capacity(h.rows);
        for r in 0..h.rows {
            let (z, n, fb) = normalize_output(h.row(r));
            out.row_mut(r).copy_from_slice(&z);
            norms.push(n);
            fallback.push(fb);
        }
        Ok(TowerForward {
            acts,
            norms,
            fallback,
            out,
        })
    }

    /// Accumulates parameter gradients for `d_out` (gradient w.r.t. the
    /// normalized outputs) into `grads`.
    pub fn backward(&self, input: &TowerInput, fwd: &TowerForward, d_out: &Matrix, grads: &mut Tower) {
        let n = d_out.rows;
        let last = self.weights.len() - 1;
        let mut dh = Matrix::zeros(n, d_out.cols);
        for r in 0..n {
            if !fwd.fallback[r] {
                let g = l2::backward(fwd.out.row(r), fwd.norms[r], d_out.row(r));
                dh.row_mut(r).copy_from_slice(&g);
            }
        }
        for l in (0..=last).rev() {
            if l < last {
                for (g, a) in dh.data.iter_mut().zip(&fwd.acts[l + 1].data) {
                    if *a <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            matmul_tn_acc(&dh, &fwd.acts[l], &mut grads.weights[l]);
            for r in 0..n {
                for (gb, g) in grads.biases[l].iter_mut().zip(dh.row(r)) {
                    *gb += g;
                }
            }
            dh = matmul_nn(&dh, &self.weights[l]);
        }
        for r in 0..n {
            let mut at = 0;
            for (t, &idx) in input.categorical[r].iter().enumerate() {
                let width = self.tables[t].cols;
                let idx = if idx < self.tables[t].rows { idx } else { 0 };
                for (g, d) in grads.tables[t].row_mut(idx).iter_mut().zip(&dh.row(r)[at..at + width]) {
                    *g += d;
                }
                at += width;
            }
        }
    }
}

impl Parameters for Tower {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.tables.iter().map(|t| t.data.as_slice()).collect();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(&w.data);
            out.push(b);
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.tables.iter_mut().map(|t| t.data.as_mut_slice()).collect();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(&mut w.data);
            out.push(b);
        }
        out
    }
}

/// The user tower followed by the item tower, as one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Towers {
    pub user: Tower,
    pub item: Tower,
}

impl Towers {
    pub fn zeros_like(&self) -> Self {
        Towers {
            user: self.user.zeros_like(),
            item: self.item.zeros_like(),
        }
    }
}

impl Parameters for Towers {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.user.tensors();
        t.extend(self.item.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.user.tensors_mut();
        t.extend(self.item.tensors_mut());
        t
    }
}
