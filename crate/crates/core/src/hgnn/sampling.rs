//! Neighborhood, edge and negative sampling.

use std::collections::HashMap;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::ItemType;
use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeKind, HeteroGraph};

/// One message-passing hop of a sampled computation graph. Targets are the
/// first `targets.len()` entries of the level below, so a target's own
/// previous state sits at the same position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hop {
    /// Per target, sampled neighbor positions in the level below, indexed
    /// by source node type (audiobook, podcast).
    pub neighbors: Vec<[Vec<u32>; 2]>,
}

/// A sampled `l`-hop computation graph rooted at one or more seed nodes.
///
/// `levels[0]` holds the nodes whose raw features enter the first layer and
/// `levels[l]` the deduplicated seeds. Every level is a prefix of the one
/// below it. `hops[k]` describes how `levels[k + 1]` is computed from
/// `levels[k]`. Each node gets one neighborhood sample per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledNeighborhood {
    pub seeds: Vec<usize>,
    /// Position of each requested seed in `levels[l]`.
    pub seed_pos: Vec<usize>,
    pub levels: Vec<Vec<usize>>,
    pub hops: Vec<Hop>,
}

impl SampledNeighborhood {
    pub fn depth(&self) -> usize {
        self.hops.len()
    }

    /// Sampled neighbor ids of `levels[k + 1][target]` from type `src`.
    pub fn neighbor_ids(&self, k: usize, target: usize, src: ItemType) -> Vec<usize> {
        self.hops[k].neighbors[target][src.index()]
            .iter()
            .map(|&p| self.levels[k][p as usize])
            .collect()
    }
}

/// Uniform sample without replacement of `min(degree, fanout)` neighbors
/// per relation; takes every neighbor (without touching the rng) when the
/// degree fits.
fn sample_list<R: Rng + ?Sized>(all: &[u32], fanout: usize, rng: &mut R) -> Vec<u32> {
    if all.len() <= fanout {
        return all.to_vec();
    }
    let mut picked: Vec<u32> = index::sample(rng, all.len(), fanout)
        .into_iter()
        .map(|i| all[i])
        .collect();
    picked.sort_unstable();
    picked
}

/// Samples a shared computation graph for a batch of seeds. `fanouts[0]`
/// applies to the seeds' own neighbors, `fanouts[1]` one hop further, and
/// so on.
pub fn sample_block<R: Rng + ?Sized>(
    graph: &HeteroGraph,
    seeds: &[usize],
    fanouts: &[usize],
    rng: &mut R,
) -> SampledNeighborhood {
    let depth = fanouts.len();
    let mut top = Vec::new();
    let mut pos_of: HashMap<usize, usize> = HashMap::new();
    let seed_pos = seeds
        .iter()
        .map(|&s| {
            *pos_of.entry(s).or_insert_with(|| {
                top.push(s);
                top.len() - 1
            })
        })
        .collect();

    let mut levels = vec![Vec::new(); depth + 1];
    let mut hops = vec![
        Hop {
            neighbors: Vec::new()
        };
        depth
    ];
    levels[depth] = top;
    for k in (0..depth).rev() {
        let fanout = fanouts[depth - 1 - k];
        let targets = levels[k + 1].clone();
        let mut below = targets.clone();
        let mut pos: HashMap<usize, usize> = below.iter().enumerate().map(|(i, &g)| (g, i)).collect();
        let mut neighbors = Vec::with_capacity(targets.len());
        for &t in &targets {
            let mut per_src: [Vec<u32>; 2] = Default::default();
            for src in ItemType::ALL {
                let picked = sample_list(graph.neighbors_local(t, src), fanout, rng);
                per_src[src.index()] = picked
                    .into_iter()
                    .map(|l| {
                        let g = graph.global(src, l as usize);
                        *pos.entry(g).or_insert_with(|| {
                            below.push(g);
                            below.len() - 1
                        }) as u32
                    })
                    .collect();
            }
            neighbors.push(per_src);
        }
        hops[k] = Hop { neighbors };
        levels[k] = below;
    }
    SampledNeighborhood {
        seeds: seeds.to_vec(),
        seed_pos,
        levels,
        hops,
    }
}

/// Per-seed neighborhood sample.
pub fn sample_neighborhood<R: Rng + ?Sized>(
    graph: &HeteroGraph,
    node: usize,
    fanouts: &[usize],
    rng: &mut R,
) -> SampledNeighborhood {
    sample_block(graph, &[node], fanouts, rng)
}

/// Draws the same number of edges from every non-empty relation: the size
/// of the smallest non-empty one. Relations without edges are skipped.
pub fn balanced_edge_sample<R: Rng + ?Sized>(
    graph: &HeteroGraph,
    rng: &mut R,
) -> Result<Vec<(Edge, EdgeKind)>> {
    balanced_sample_lists(
        [
            graph.edges(EdgeKind::Aa),
            graph.edges(EdgeKind::Ap),
            graph.edges(EdgeKind::Pp),
        ],
        rng,
    )
}

/// [`balanced_edge_sample`] over explicit per-relation edge lists
/// (aa, ap, pp).
pub fn balanced_sample_lists<R: Rng + ?Sized>(
    lists: [&[Edge]; 3],
    rng: &mut R,
) -> Result<Vec<(Edge, EdgeKind)>> {
    let n = lists
        .iter()
        .map(|l| l.len())
        .filter(|&c| c > 0)
        .min()
        .ok_or_else(|| Error::Empty("graph has no edges to sample".into()))?;
    let mut out = Vec::with_capacity(3 * n);
    for kind in EdgeKind::ALL {
        let edges = lists[kind.index()];
        if edges.is_empty() {
            continue;
        }
        let mut picked: Vec<usize> = index::sample(rng, edges.len(), n).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| (edges[i], kind)));
    }
    Ok(out)
}

/// Every edge once, grouped by relation.
pub fn all_edges(graph: &HeteroGraph) -> Vec<(Edge, EdgeKind)> {
    EdgeKind::ALL
        .iter()
        .flat_map(|&k| graph.edges(k).iter().map(move |&e| (e, k)))
        .collect()
}

/// `n_neg` nodes drawn uniformly (with replacement) from the whole graph,
/// rejecting the anchor and its neighbors.
pub fn sample_negatives<R: Rng + ?Sized>(
    graph: &HeteroGraph,
    anchor: usize,
    n_neg: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = graph.num_nodes();
    if n <= graph.degree(anchor) + 1 {
        return Err(Error::Invalid(format!(
            "node {} is adjacent to every other node; no negatives exist",
            graph.id(anchor)
        )));
    }
    let budget = 1000 * n_neg.max(1);
    let mut out = Vec::with_capacity(n_neg);
    let mut draws = 0;
    while out.len() < n_neg {
        draws += 1;
        if draws > budget {
            return Err(Error::Invalid(format!(
                "negative sampling for {} exceeded {budget} draws",
                graph.id(anchor)
            )));
        }
        let c = rng.gen_range(0..n);
        if c != anchor && !graph.is_adjacent(anchor, c) {
            out.push(c);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    /// `n_a` audiobooks and `n_p` podcasts with the given global-id edges.
    pub(crate) fn graph(n_a: usize, n_p: usize, edges: &[(usize, usize)]) -> HeteroGraph {
        let ids = [
            (0..n_a).map(|i| format!("a{i:03}")).collect(),
            (0..n_p).map(|i| format!("p{i:03}")).collect(),
        ];
        let features = [
            Matrix::from_vec(n_a, 2, (0..2 * n_a).map(|x| x as f64).collect()),
            Matrix::from_vec(n_p, 2, (0..2 * n_p).map(|x| -(x as f64)).collect()),
        ];
        HeteroGraph::from_parts(ids, features, edges.iter().map(|&(a, b)| Edge::new(a, b))).unwrap()
    }

    #[test]
    fn low_degree_takes_everything() {
        let g = graph(3, 0, &[(0, 1), (0, 2)]);
        for seed in 0..5 {
            let s = sample_neighborhood(&g, 0, &[5, 5], &mut ChaCha8Rng::seed_from_u64(seed));
            assert_eq!(s.neighbor_ids(1, 0, ItemType::Audiobook), vec![1, 2]);
        }
    }

    #[test]
    fn high_degree_is_capped_at_fanout() {
        let edges: Vec<_> = (1..=20).map(|i| (0, i)).collect();
        let g = graph(21, 0, &edges);
        let s = sample_neighborhood(&g, 0, &[5, 3], &mut ChaCha8Rng::seed_from_u64(3));
        let n = s.neighbor_ids(1, 0, ItemType::Audiobook);
        assert_eq!(n.len(), 5);
        assert_eq!(n.iter().collect::<BTreeSet<_>>().len(), 5);
        assert!(n.iter().all(|&x| g.is_adjacent(0, x)));
        let again = sample_neighborhood(&g, 0, &[5, 3], &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(again, s);
    }

    #[test]
    fn levels_are_prefixes() {
        let g = graph(4, 3, &[(0, 1), (1, 2), (2, 4), (4, 5), (5, 6), (3, 6)]);
        let s = sample_block(&g, &[0, 5, 0], &[2, 2], &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(s.levels[2], vec![0, 5]);
        assert_eq!(s.seed_pos, vec![0, 1, 0]);
        for k in 0..2 {
            assert_eq!(&s.levels[k][..s.levels[k + 1].len()], &s.levels[k + 1][..]);
        }
    }

    fn counts(sample: &[(Edge, EdgeKind)]) -> [usize; 3] {
        let mut c = [0; 3];
        for (_, k) in sample {
            c[k.index()] += 1;
        }
        c
    }

    /// Graph with exactly `aa`, `ap`, `pp` edges among 8 audiobooks and 8 podcasts.
    fn graph_with_counts(aa: usize, ap: usize, pp: usize) -> HeteroGraph {
        let mut e = Vec::new();
        let pairs = |lo: usize, hi: usize| {
            let mut v = Vec::new();
            for i in lo..hi {
                for j in i + 1..hi {
                    v.push((i, j));
                }
            }
            v
        };
        e.extend(pairs(0, 8).into_iter().take(aa));
        e.extend((0..8).flat_map(|a| (8..16).map(move |p| (a, p))).take(ap));
        e.extend(pairs(8, 16).into_iter().take(pp));
        graph(8, 8, &e)
    }

    #[test]
    fn balanced_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(counts(&balanced_edge_sample(&graph_with_counts(3, 10, 7), &mut rng).unwrap()), [3, 3, 3]);
        assert_eq!(counts(&balanced_edge_sample(&graph_with_counts(5, 5, 5), &mut rng).unwrap()), [5, 5, 5]);
        assert_eq!(counts(&balanced_edge_sample(&graph_with_counts(0, 4, 9), &mut rng).unwrap()), [0, 4, 4]);
        assert!(balanced_edge_sample(&graph(2, 2, &[]), &mut rng).is_err());
    }

    #[test]
    fn balanced_sample_is_fresh_each_call() {
        let g = graph_with_counts(2, 30, 20);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = balanced_edge_sample(&g, &mut rng).unwrap();
        let b = balanced_edge_sample(&g, &mut rng).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn negatives_avoid_anchor_and_neighbors() {
        let g = graph(5, 0, &[(0, 1)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let n = sample_negatives(&g, 0, 2, &mut rng).unwrap();
            assert_eq!(n.len(), 2);
            assert!(n.iter().all(|x| [2, 3, 4].contains(x)));
        }
        let lonely = graph(4, 0, &[]);
        let n = sample_negatives(&lonely, 2, 50, &mut rng).unwrap();
        assert_eq!(n.iter().copied().collect::<BTreeSet<_>>(), BTreeSet::from([0, 1, 3]));
        let a = sample_negatives(&g, 0, 5, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = sample_negatives(&g, 0, 5, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn negatives_fail_on_saturated_anchor() {
        let g = graph(3, 0, &[(0, 1), (0, 2)]);
        assert!(sample_negatives(&g, 0, 1, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
