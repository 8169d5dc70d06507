//! Margin contrastive loss over (anchor, positive, negatives) triples.

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

/// Mean over negatives of `max(0, z_a·z_n − z_a·z_p + margin)`.
pub fn hinge_loss(z_a: &[f64], z_p: &[f64], z_negs: &[&[f64]], margin: f64) -> Result<f64> {
    if z_negs.is_empty() {
        return Err(Error::Empty("hinge loss needs at least one negative".into()));
    }
    let pos = dot(z_a, z_p);
    let total: f64 = z_negs
        .iter()
        .map(|z_n| (dot(z_a, z_n) - pos + margin).max(0.0))
        .sum();
    Ok(total / z_negs.len() as f64)
}

/// Rows of an embedding matrix forming one training example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triple {
    pub anchor: usize,
    pub positive: usize,
    pub negatives: Vec<usize>,
}

/// Mean hinge loss over `triples` and its gradient with respect to every
/// row of `z`.
pub fn batch_hinge(z: &Matrix, triples: &[Triple], margin: f64) -> Result<(f64, Matrix)> {
    if triples.is_empty() {
        return Err(Error::Empty("no training pairs in batch".into()));
    }
    let mut dz = Matrix::zeros(z.rows, z.cols);
    let mut total = 0.0;
    let scale_pairs = 1.0 / triples.len() as f64;
    for t in triples {
        if t.negatives.is_empty() {
            return Err(Error::Empty("hinge loss needs at least one negative".into()));
        }
        let za = z.row(t.anchor).to_vec();
        let zp = z.row(t.positive).to_vec();
        let pos = dot(&za, &zp);
        let w = scale_pairs / t.negatives.len() as f64;
        let mut sum = 0.0;
        for &n in &t.negatives {
            let zn = z.row(n).to_vec();
            let term = dot(&za, &zn) - pos + margin;
            if term > 0.0 {
                sum += term;
                for d in 0..z.cols {
                    dz.data[t.anchor * z.cols + d] += w * (zn[d] - zp[d]);
                    dz.data[n * z.cols + d] += w * za[d];
                    dz.data[t.positive * z.cols + d] -= w * za[d];
                }
            }
        }
        total += sum / t.negatives.len() as f64;
    }
    Ok((total * scale_pairs, dz))
}
