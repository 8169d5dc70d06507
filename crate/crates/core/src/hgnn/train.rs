//! HGNN training: balanced edge sampling per epoch, both orientations of
//! every edge as (anchor, positive), rejection-sampled negatives, Adam, and
//! early stopping on a held-out edge set.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embed::{embed_all, NodeEmbeddingTable};
use super::forward::{backward_block, forward_block};
use super::loss::{batch_hinge, Triple};
use super::params::{HgnnConfig, HgnnParams};
use super::sampling::{all_edges, balanced_edge_sample, balanced_sample_lists, sample_block, sample_negatives};
use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeKind, HeteroGraph};
use crate::linalg::{Adam, AdamConfig, Parameters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_time_s: f64,
    /// Training edges drawn this epoch per relation.
    pub sampled: BTreeMap<EdgeKind, usize>,
}

#[derive(Debug, Clone)]
pub struct HgnnTrainOutput {
    /// Parameters from the epoch with the lowest validation loss.
    pub params: HgnnParams,
    pub embeddings: NodeEmbeddingTable,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Splits off `fraction` of each relation's edges for validation, keeping
/// at least one training edge in every non-empty relation.
pub fn validation_edges<R: Rng + ?Sized>(graph: &HeteroGraph, fraction: f64, rng: &mut R) -> [Vec<Edge>; 3] {
    let mut out: [Vec<Edge>; 3] = Default::default();
    for kind in EdgeKind::ALL {
        let mut edges = graph.edges(kind).to_vec();
        if edges.len() < 2 {
            continue;
        }
        let n = ((fraction * edges.len() as f64).round() as usize).min(edges.len() - 1);
        edges.shuffle(rng);
        edges.truncate(n);
        edges.sort_unstable();
        out[kind.index()] = edges;
    }
    out
}

/// Loss of one batch of edges.
#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub loss: f64,
    /// (anchor, positive) pairs that contributed; zero if every anchor was
    /// adjacent to the whole graph.
    pub pairs: usize,
    pub grads: Option<HgnnParams>,
}

/// Forward, loss and (optionally) gradients for one batch of edges. Anchors
/// adjacent to every other node have no negatives and are skipped.
#[allow(clippy::too_many_arguments)]
pub fn edge_batch_loss<R: Rng + ?Sized>(
    message_graph: &HeteroGraph,
    negative_graph: &HeteroGraph,
    edges: &[(Edge, EdgeKind)],
    params: &HgnnParams,
    config: &HgnnConfig,
    rng: &mut R,
    with_grad: bool,
) -> Result<BatchLoss> {
    let saturated = negative_graph.num_nodes().saturating_sub(1);
    let mut seeds = Vec::new();
    let mut triples_by_seed = Vec::new();
    for (e, _) in edges {
        for (a, p) in [(e.u, e.v), (e.v, e.u)] {
            if negative_graph.degree(a) >= saturated {
                continue;
            }
            let negs = sample_negatives(negative_graph, a, config.negatives, rng)?;
            let base = seeds.len();
            seeds.push(a);
            seeds.push(p);
            seeds.extend_from_slice(&negs);
            triples_by_seed.push((base, base + 1, (base + 2..base + 2 + negs.len()).collect::<Vec<_>>()));
        }
    }
    if triples_by_seed.is_empty() {
        return Ok(BatchLoss {
            loss: 0.0,
            pairs: 0,
            grads: None,
        });
    }
    let block = sample_block(message_graph, &seeds, &config.fanouts, rng);
    let fwd = forward_block(message_graph, params, &block)?;
    let row = |i: usize| block.seed_pos[i];
    let triples: Vec<Triple> = triples_by_seed
        .into_iter()
        .map(|(a, p, ns)| Triple {
            anchor: row(a),
            positive: row(p),
            negatives: ns.into_iter().map(row).collect(),
        })
        .collect();
    let (loss, dz) = batch_hinge(&fwd.z, &triples, config.margin)?;
    Ok(BatchLoss {
        loss,
        pairs: triples.len(),
        grads: with_grad.then(|| backward_block(params, &block, &fwd, &dz)),
    })
}

/// Trains from `params_init`. Deterministic for a fixed `seed`.
pub fn train_hgnn(
    graph: &HeteroGraph,
    params_init: HgnnParams,
    config: &HgnnConfig,
    seed: u64,
) -> Result<HgnnTrainOutput> {
    config.validate()?;
    if graph.num_edges() == 0 {
        return Err(Error::Empty("graph has no edges to train on".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let val = validation_edges(graph, config.validation_fraction, &mut rng);
    let removed: BTreeSet<Edge> = val.iter().flatten().copied().collect();
    let train_graph = graph.without_edges(&removed)?;
    let val_seed: u64 = rng.gen();

    let mut params = params_init;
    let mut best = params.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut opt = Adam::new(
        AdamConfig {
            lr: config.lr,
            ..Default::default()
        },
        &params,
    );
    let mut log = Vec::new();

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        let mut edges = if config.balanced_sampler {
            balanced_edge_sample(&train_graph, &mut rng)?
        } else {
            all_edges(&train_graph)
        };
        let mut sampled = BTreeMap::new();
        for (_, k) in &edges {
            *sampled.entry(*k).or_insert(0) += 1;
        }
        edges.shuffle(&mut rng);

        let mut train_sum = 0.0;
        let mut train_n = 0usize;
        for (b, chunk) in edges.chunks(config.batch_size).enumerate() {
            let batch = edge_batch_loss(&train_graph, &train_graph, chunk, &params, config, &mut rng, true)?;
            if !batch.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            let Some(grads) = batch.grads else { continue };
            opt.step(&mut params, &grads);
            if !params.all_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            train_sum += batch.loss * batch.pairs as f64;
            train_n += batch.pairs;
        }
        let train_loss = train_sum / train_n.max(1) as f64;

        let val_loss = if removed.is_empty() {
            train_loss
        } else {
            let mut vrng = ChaCha8Rng::seed_from_u64(val_seed);
            let vedges = balanced_sample_lists([&val[0], &val[1], &val[2]], &mut vrng)?;
            let mut sum = 0.0;
            let mut n = 0usize;
            for chunk in vedges.chunks(config.batch_size) {
                let batch = edge_batch_loss(&train_graph, graph, chunk, &params, config, &mut vrng, false)?;
                sum += batch.loss * batch.pairs as f64;
                n += batch.pairs;
            }
            if n == 0 {
                train_loss
            } else {
                sum / n as f64
            }
        };
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: usize::MAX });
        }

        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            wall_time_s: started.elapsed().as_secs_f64(),
            sampled,
        });
        if val_loss < best_loss {
            best_loss = val_loss;
            best = params.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    let embeddings = embed_all(graph, &best, config)?;
    Ok(HgnnTrainOutput {
        params: best,
        embeddings,
        log,
        best_epoch,
    })
}
