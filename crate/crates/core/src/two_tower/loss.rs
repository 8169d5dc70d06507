use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

/// Weighted in-batch loss for one user: the weighted mean over negatives of
/// `o_u·o_n − o_u·o_a`.
pub fn loss_2t(o_u: &[f64], o_a: &[f64], negatives: &[(&[f64], f64)]) -> Result<f64> {
    if negatives.is_empty() {
        return Err(Error::Empty("in-batch loss needs at least one negative".into()));
    }
    let pos = dot(o_u, o_a);
    let sum: f64 = negatives.iter().map(|(o_n, w)| w * (dot(o_u, o_n) - pos)).sum();
    Ok(sum / negatives.len() as f64)
}

/// Inverse-frequency weights for the items at each batch position,
/// rescaled to mean 1 over the batch. Equal frequencies give exactly 1.
pub fn batch_weights(frequencies: &[f64]) -> Vec<f64> {
    if frequencies.is_empty() {
        return Vec::new();
    }
    let inv: Vec<f64> = frequencies.iter().map(|f| 1.0 / f).collect();
    let max = inv.iter().copied().fold(f64::MIN, f64::max);
    let r: Vec<f64> = inv.iter().map(|v| v / max).collect();
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    r.iter().map(|v| v / mean).collect()
}

/// Loss and output gradients of a batch of (user, positive item) pairs.
#[derive(Debug, Clone)]
pub struct InBatchLoss {
    pub loss: f64,
    /// Pairs that had at least one negative.
    pub pairs: usize,
    pub d_users: Matrix,
    pub d_items: Matrix,
}

/// `users` holds one row per batch position; `items` one row per distinct
/// item, with `item_of[i]` the row of position `i`'s positive. Negatives of
/// position `i` are the items at every other position whose item differs
/// from `i`'s.
pub fn in_batch_loss(users: &Matrix, items: &Matrix, item_of: &[usize], weights: &[f64]) -> InBatchLoss {
    let b = users.rows;
    let d = users.cols;
    let mut d_users = Matrix::zeros(b, d);
    let mut d_items = Matrix::zeros(items.rows, d);
    let counted: Vec<usize> = (0..b)
        .map(|i| (0..b).filter(|&j| item_of[j] != item_of[i]).count())
        .collect();
    let pairs = counted.iter().filter(|&&c| c > 0).count();
    let mut total = 0.0;
    for i in 0..b {
        if counted[i] == 0 {
            continue;
        }
        let o_u = users.row(i);
        let a = item_of[i];
        let o_a = items.row(a);
        let pos = dot(o_u, o_a);
        let scale = 1.0 / (pairs as f64 * counted[i] as f64);
        let mut sum = 0.0;
        for j in 0..b {
            let n = item_of[j];
            if n == a {
                continue;
            }
            let w = weights[j];
            let o_n = items.row(n);
            sum += w * (dot(o_u, o_n) - pos);
            let c = scale * w;
            for k in 0..d {
                d_users.data[i * d + k] += c * (o_n[k] - o_a[k]);
                d_items.data[n * d + k] += c * o_u[k];
                d_items.data[a * d + k] -= c * o_u[k];
            }
        }
        total += sum / counted[i] as f64;
    }
    InBatchLoss {
        loss: if pairs == 0 { 0.0 } else { total / pairs as f64 },
        pairs,
        d_users,
        d_items,
    }
}
