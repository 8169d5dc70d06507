use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::ItemType;
use crate::error::{Error, Result};
use crate::graph::{EdgeKind, HeteroGraph};
use crate::linalg::cosine;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Audiobooks joined by an edge.
    CoListened,
    /// Audiobooks without an edge that share a podcast neighbor.
    SharedPodcastOnly,
    /// Any two distinct audiobooks.
    Random,
}

impl Pairing {
    pub const ALL: [Pairing; 3] = [Pairing::CoListened, Pairing::SharedPodcastOnly, Pairing::Random];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub pairing: Pairing,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

/// Every eligible audiobook pair (global node ids, `u < v`).
pub fn eligible_pairs(graph: &HeteroGraph, pairing: Pairing) -> Vec<(usize, usize)> {
    let books: Vec<usize> = (0..graph.num_of_type(ItemType::Audiobook))
        .map(|i| graph.global(ItemType::Audiobook, i))
        .collect();
    match pairing {
        Pairing::CoListened => graph.edges(EdgeKind::Aa).iter().map(|e| (e.u, e.v)).collect(),
        Pairing::Random => books
            .iter()
            .enumerate()
            .flat_map(|(i, &u)| books[i + 1..].iter().map(move |&v| (u, v)))
            .collect(),
        Pairing::SharedPodcastOnly => {
            let podcasts: Vec<BTreeSet<usize>> = books
                .iter()
                .map(|&b| graph.neighbors(b, ItemType::Podcast).collect())
                .collect();
            let mut out = Vec::new();
            for i in 0..books.len() {
                for j in i + 1..books.len() {
                    let (u, v) = (books[i], books[j]);
                    if !graph.is_adjacent(u, v) && !podcasts[i].is_disjoint(&podcasts[j]) {
                        out.push((u, v));
                    }
                }
            }
            out
        }
    }
}

/// Cosine similarity of up to `n_pairs` pairs drawn without replacement.
pub fn pair_similarity_probe<'a, R: Rng + ?Sized>(
    graph: &HeteroGraph,
    vectors: impl Fn(&str) -> Option<&'a [f64]>,
    pairing: Pairing,
    n_pairs: usize,
    rng: &mut R,
) -> Result<ProbeSummary> {
    let pairs = eligible_pairs(graph, pairing);
    if pairs.is_empty() {
        return Err(Error::Empty(format!("no eligible pairs for {pairing:?}")));
    }
    let take = n_pairs.min(pairs.len());
    let mut picked = index::sample(rng, pairs.len(), take).into_vec();
    picked.sort_unstable();
    let mut sims = Vec::with_capacity(take);
    for i in picked {
        let (u, v) = pairs[i];
        let (a, b) = (graph.id(u), graph.id(v));
        let va = vectors(a).ok_or_else(|| Error::Invalid(format!("no vector for {a}")))?;
        let vb = vectors(b).ok_or_else(|| Error::Invalid(format!("no vector for {b}")))?;
        sims.push(cosine(va, vb));
    }
    let n = sims.len() as f64;
    let mean = sims.iter().sum::<f64>() / n;
    let var = sims.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Ok(ProbeSummary {
        pairing,
        n: sims.len(),
        mean,
        std: var.sqrt(),
    })
}
