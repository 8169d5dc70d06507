//! Single-node forms of the aggregation and update operators. The batched
//! forward pass computes the same thing over whole sampled blocks; these
//! are also what the full-graph reference forward is built from.

use std::collections::BTreeMap;

use super::params::HgnnParams;
use crate::data::ItemType;
use crate::error::{Error, Result};
use crate::graph::Relation;
use crate::linalg::{add_assign, matvec, relu_inplace};

/// Elementwise max over `relu(W_r h + b_r)` for each neighbor state `h`.
/// An empty neighborhood pools to the zero vector.
pub fn aggregate_relation(
    layer: usize,
    relation: Relation,
    params: &HgnnParams,
    neighbor_states: &[&[f64]],
) -> Result<Vec<f64>> {
    let l = &params.layers[layer];
    let w = &l.rel_weight[relation.index()];
    let b = &l.rel_bias[relation.index()];
    let mut pooled = vec![0.0; w.rows];
    for (i, h) in neighbor_states.iter().enumerate() {
        if h.len() != w.cols {
            return Err(Error::Dimension {
                expected: w.cols,
                got: h.len(),
                context: format!("neighbor state {i} at layer {layer}"),
            });
        }
        let mut m = matvec(w, h);
        add_assign(&mut m, b);
        relu_inplace(&mut m);
        if i == 0 {
            pooled = m;
        } else {
            for (p, v) in pooled.iter_mut().zip(&m) {
                if *v > *p {
                    *p = *v;
                }
            }
        }
    }
    Ok(pooled)
}

/// Relations whose messages arrive at a node of type `ty`, in summation order.
pub fn incoming_relations(ty: ItemType) -> [Relation; 2] {
    [
        Relation::new(ItemType::Audiobook, ty),
        Relation::new(ItemType::Podcast, ty),
    ]
}

/// `relu(W_self h_prev + Σ_r pooled[r])` over the relations incoming to `ty`.
pub fn update_node(
    layer: usize,
    node_type: ItemType,
    params: &HgnnParams,
    h_prev: &[f64],
    pooled: &BTreeMap<Relation, Vec<f64>>,
) -> Result<Vec<f64>> {
    let w = &params.layers[layer].self_weight[node_type.index()];
    if h_prev.len() != w.cols {
        return Err(Error::Dimension {
            expected: w.cols,
            got: h_prev.len(),
            context: format!("h_prev at layer {layer}"),
        });
    }
    let mut acc = matvec(w, h_prev);
    for rel in incoming_relations(node_type) {
        let p = pooled
            .get(&rel)
            .ok_or_else(|| Error::Invalid(format!("missing pooled entry for {rel:?}")))?;
        if p.len() != acc.len() {
            return Err(Error::Dimension {
                expected: acc.len(),
                got: p.len(),
                context: format!("pooled {rel:?}"),
            });
        }
        add_assign(&mut acc, p);
    }
    relu_inplace(&mut acc);
    Ok(acc)
}
