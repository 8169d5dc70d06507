//! Batched forward and backward passes over a sampled computation graph,
//! plus an unsampled full-graph forward built from the single-node
//! operators.

use std::collections::BTreeMap;

use super::layers::{aggregate_relation, incoming_relations, update_node};
use super::params::HgnnParams;
use super::sampling::SampledNeighborhood;
use crate::data::ItemType;
use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, Relation};
use crate::linalg::{l2, matmul_nn, matmul_nt, matmul_tn_acc, Matrix};

/// Norms below this produce the basis fallback embedding.
pub const NORM_EPS: f64 = 1e-12;

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct RelCache {
    /// Positions (in the level below) whose messages were computed.
    used: Vec<usize>,
    /// Position → row of `used`, or `NONE`.
    row_of: Vec<u32>,
    x: Matrix,
    pre: Matrix,
    msg: Matrix,
}

#[derive(Debug, Clone)]
struct HopCache {
    /// Target positions by node type.
    groups: [Vec<usize>; 2],
    rels: Vec<Option<RelCache>>,
    /// Per target and source type, the winning neighbor position per
    /// output dimension, or `NONE` for an empty neighborhood.
    argmax: Vec<[Vec<u32>; 2]>,
    pre: Matrix,
}

/// Activations of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BlockForward {
    hs: Vec<Matrix>,
    hops: Vec<HopCache>,
    norms: Vec<f64>,
    /// Unit-norm output per node of the top level.
    pub z: Matrix,
    /// Nodes whose final state was (numerically) zero.
    pub fallback: Vec<bool>,
}

fn basis(dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[0] = 1.0;
    v
}

/// Normalizes `h`, returning the basis fallback for a vanishing norm.
pub fn normalize_output(h: &[f64]) -> (Vec<f64>, f64, bool) {
    let (z, n) = l2::normalize(h);
    if n < NORM_EPS {
        (basis(h.len()), n, true)
    } else {
        (z, n, false)
    }
}

pub fn forward_block(
    graph: &HeteroGraph,
    params: &HgnnParams,
    block: &SampledNeighborhood,
) -> Result<BlockForward> {
    let depth = block.depth();
    if depth != params.num_layers() {
        return Err(Error::Invalid(format!(
            "neighborhood depth {depth} does not match {} layers",
            params.num_layers()
        )));
    }
    if graph.feature_dim() != params.in_dim() {
        return Err(Error::Dimension {
            expected: params.in_dim(),
            got: graph.feature_dim(),
            context: "node features vs first layer".into(),
        });
    }
    let mut h0 = Matrix::zeros(block.levels[0].len(), graph.feature_dim());
    for (i, &g) in block.levels[0].iter().enumerate() {
        h0.row_mut(i).copy_from_slice(graph.feature(g));
    }
    let mut hs = vec![h0];
    let mut hops = Vec::with_capacity(depth);

    for k in 0..depth {
        let layer = &params.layers[k];
        let d_out = layer.out_dim();
        let h = &hs[k];
        let below = block.levels[k].len();
        let targets = &block.levels[k + 1];
        let hop = &block.hops[k];

        let mut groups: [Vec<usize>; 2] = Default::default();
        for (i, &g) in targets.iter().enumerate() {
            groups[graph.node_type(g).index()].push(i);
        }

        let mut rels: Vec<Option<RelCache>> = vec![None; Relation::COUNT];
        for rel in Relation::ALL {
            let mut used: Vec<usize> = groups[rel.dst.index()]
                .iter()
                .flat_map(|&i| hop.neighbors[i][rel.src.index()].iter().map(|&p| p as usize))
                .collect();
            if used.is_empty() {
                continue;
            }
            used.sort_unstable();
            used.dedup();
            let mut row_of = vec![NONE; below];
            for (r, &p) in used.iter().enumerate() {
                row_of[p] = r as u32;
            }
            let x = h.gather_rows(&used);
            let mut pre = matmul_nt(&x, &layer.rel_weight[rel.index()]);
            let b = &layer.rel_bias[rel.index()];
            for r in 0..pre.rows {
                for (v, bb) in pre.row_mut(r).iter_mut().zip(b) {
                    *v += bb;
                }
            }
            let mut msg = pre.clone();
            msg.data.iter_mut().for_each(|v| {
                if *v < 0.0 {
                    *v = 0.0
                }
            });
            rels[rel.index()] = Some(RelCache {
                used,
                row_of,
                x,
                pre,
                msg,
            });
        }

        let mut pre_out = Matrix::zeros(targets.len(), d_out);
        let mut argmax = vec![[Vec::new(), Vec::new()]; targets.len()];
        for t in ItemType::ALL {
            let rows = &groups[t.index()];
            if rows.is_empty() {
                continue;
            }
            let s = h.gather_rows(rows);
            let self_part = matmul_nt(&s, &layer.self_weight[t.index()]);
            for (gi, &i) in rows.iter().enumerate() {
                let mut acc = self_part.row(gi).to_vec();
                for rel in incoming_relations(t) {
                    let neigh = &hop.neighbors[i][rel.src.index()];
                    let mut pooled = vec![0.0; d_out];
                    let mut arg = vec![NONE; d_out];
                    if let (Some(rc), false) = (&rels[rel.index()], neigh.is_empty()) {
                        for (n, &p) in neigh.iter().enumerate() {
                            let m = rc.msg.row(rc.row_of[p as usize] as usize);
                            for d in 0..d_out {
                                if n == 0 || m[d] > pooled[d] {
                                    pooled[d] = m[d];
                                    arg[d] = p;
                                }
                            }
                        }
                    }
                    for (a, p) in acc.iter_mut().zip(&pooled) {
                        *a += p;
                    }
                    argmax[i][rel.src.index()] = arg;
                }
                pre_out.row_mut(i).copy_from_slice(&acc);
            }
        }
        let mut h_next = pre_out.clone();
        h_next.data.iter_mut().for_each(|v| {
            if *v < 0.0 {
                *v = 0.0
            }
        });
        hs.push(h_next);
        hops.push(HopCache {
            groups,
            rels,
            argmax,
            pre: pre_out,
        });
    }

    let top = &hs[depth];
    let mut z = Matrix::zeros(top.rows, top.cols);
    let mut norms = Vec::with_capacity(top.rows);
    let mut fallback = Vec::with_capacity(top.rows);
    for i in 0..top.rows {
        let (zi, n, fb) = normalize_output(top.row(i));
        z.row_mut(i).copy_from_slice(&zi);
        norms.push(n);
        fallback.push(fb);
    }
    Ok(BlockForward {
        hs,
        hops,
        norms,
        z,
        fallback,
    })
}

/// Gradients of a scalar loss with respect to every parameter, given the
/// loss gradient `dz` at the normalized outputs (rows aligned with the top
/// level of the block).
pub fn backward_block(
    params: &HgnnParams,
    block: &SampledNeighborhood,
    fwd: &BlockForward,
    dz: &Matrix,
) -> HgnnParams {
    let depth = block.depth();
    let mut grads = params.zeros_like();
    let top = &fwd.hs[depth];
    let mut dh = Matrix::zeros(top.rows, top.cols);
    for i in 0..top.rows {
        if fwd.fallback[i] {
            continue;
        }
        let g = l2::backward(fwd.z.row(i), fwd.norms[i], dz.row(i));
        dh.row_mut(i).copy_from_slice(&g);
    }

    for k in (0..depth).rev() {
        let layer = &params.layers[k];
        let cache = &fwd.hops[k];
        let glayer = &mut grads.layers[k];
        let h_below = &fwd.hs[k];
        let mut dpre = dh;
        for (d, p) in dpre.data.iter_mut().zip(&cache.pre.data) {
            if *p <= 0.0 {
                *d = 0.0;
            }
        }
        let mut dh_below = if k > 0 {
            Some(Matrix::zeros(h_below.rows, h_below.cols))
        } else {
            None
        };

        for t in ItemType::ALL {
            let rows = &cache.groups[t.index()];
            if rows.is_empty() {
                continue;
            }
            let dp = dpre.gather_rows(rows);
            let s = h_below.gather_rows(rows);
            matmul_tn_acc(&dp, &s, &mut glayer.self_weight[t.index()]);
            if let Some(dhb) = dh_below.as_mut() {
                let ds = matmul_nn(&dp, &layer.self_weight[t.index()]);
                for (gi, &i) in rows.iter().enumerate() {
                    for (a, b) in dhb.row_mut(i).iter_mut().zip(ds.row(gi)) {
                        *a += b;
                    }
                }
            }
        }

        for rel in Relation::ALL {
            let Some(rc) = &cache.rels[rel.index()] else {
                continue;
            };
            let d_out = rc.pre.cols;
            let mut dmsg = Matrix::zeros(rc.used.len(), d_out);
            for &i in &cache.groups[rel.dst.index()] {
                let arg = &cache.argmax[i][rel.src.index()];
                let g = dpre.row(i);
                for d in 0..d_out {
                    let p = arg[d];
                    if p != NONE {
                        let r = rc.row_of[p as usize] as usize;
                        dmsg.data[r * d_out + d] += g[d];
                    }
                }
            }
            for (d, p) in dmsg.data.iter_mut().zip(&rc.pre.data) {
                if *p <= 0.0 {
                    *d = 0.0;
                }
            }
            matmul_tn_acc(&dmsg, &rc.x, &mut glayer.rel_weight[rel.index()]);
            let db = &mut glayer.rel_bias[rel.index()];
            for r in 0..dmsg.rows {
                for (a, b) in db.iter_mut().zip(dmsg.row(r)) {
                    *a += b;
                }
            }
            if let Some(dhb) = dh_below.as_mut() {
                let dx = matmul_nn(&dmsg, &layer.rel_weight[rel.index()]);
                for (r, &p) in rc.used.iter().enumerate() {
                    for (a, b) in dhb.row_mut(p).iter_mut().zip(dx.row(r)) {
                        *a += b;
                    }
                }
            }
        }
        match dh_below {
            Some(m) => dh = m,
            None => break,
        }
    }
    grads
}

/// Output embedding of one seed node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeOutput {
    pub node: usize,
    pub z: Vec<f64>,
    pub fallback: bool,
}

/// Embeds the seeds of each neighborhood.
pub fn forward(
    graph: &HeteroGraph,
    params: &HgnnParams,
    neighborhoods: &[SampledNeighborhood],
) -> Result<Vec<NodeOutput>> {
    let mut out = Vec::new();
    for nb in neighborhoods {
        let f = forward_block(graph, params, nb)?;
        for (&node, &p) in nb.seeds.iter().zip(&nb.seed_pos) {
            out.push(NodeOutput {
                node,
                z: f.z.row(p).to_vec(),
                fallback: f.fallback[p],
            });
        }
    }
    Ok(out)
}

/// Unsampled forward over every node with its complete neighborhood, one
/// node at a time. Returns `(z, fallback)` per global node id.
pub fn full_graph_forward(graph: &HeteroGraph, params: &HgnnParams) -> Result<Vec<(Vec<f64>, bool)>> {
    let n = graph.num_nodes();
    let mut h: Vec<Vec<f64>> = (0..n).map(|g| graph.feature(g).to_vec()).collect();
    for k in 0..params.num_layers() {
        let mut next = Vec::with_capacity(n);
        for g in 0..n {
            let ty = graph.node_type(g);
            let mut pooled = BTreeMap::new();
            for rel in incoming_relations(ty) {
                let states: Vec<&[f64]> = graph.neighbors(g, rel.src).map(|c| h[c].as_slice()).collect();
                pooled.insert(rel, aggregate_relation(k, rel, params, &states)?);
            }
            next.push(update_node(k, ty, params, &h[g], &pooled)?);
        }
        h = next;
    }
    Ok(h
        .iter()
        .map(|x| {
            let (z, _, fb) = normalize_output(x);
            (z, fb)
        })
        .collect())
}

/// Embedding of a node with no neighbors, from its content features alone.
pub fn isolated_forward(params: &HgnnParams, ty: ItemType, features: &[f64]) -> Result<(Vec<f64>, bool)> {
    let mut h = features.to_vec();
    for k in 0..params.num_layers() {
        let d_out = params.layers[k].out_dim();
        let pooled = incoming_relations(ty)
            .into_iter()
            .map(|r| (r, vec![0.0; d_out]))
            .collect();
        h = update_node(k, ty, params, &h, &pooled)?;
    }
    let (z, _, fb) = normalize_output(&h);
    Ok((z, fb))
}
