//! The heterogeneous co-listening graph.
//!
//! Nodes are catalog items with at least one qualifying train interaction,
//! indexed per type in lexicographic id order. Global node ids put all
//! audiobooks first, then podcasts. Adjacency is stored per directed
//! relation `src → dst` as CSR keyed by the destination's local index.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec;
use crate::data::{Catalog, InteractionRecord, ItemType, Signal};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Undirected relation class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Aa,
    Ap,
    Pp,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 3] = [EdgeKind::Aa, EdgeKind::Ap, EdgeKind::Pp];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn between(a: ItemType, b: ItemType) -> EdgeKind {
        match (a, b) {
            (ItemType::Audiobook, ItemType::Audiobook) => EdgeKind::Aa,
            (ItemType::Podcast, ItemType::Podcast) => EdgeKind::Pp,
            _ => EdgeKind::Ap,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Aa => "aa",
            EdgeKind::Ap => "ap",
            EdgeKind::Pp => "pp",
        }
    }
}

/// Directed message relation: messages flow from `src`-typed neighbors into
/// a `dst`-typed node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Relation {
    pub src: ItemType,
    pub dst: ItemType,
}

impl Relation {
    pub const COUNT: usize = 4;

    pub const ALL: [Relation; 4] = [
        Relation::new(ItemType::Audiobook, ItemType::Audiobook),
        Relation::new(ItemType::Podcast, ItemType::Audiobook),
        Relation::new(ItemType::Audiobook, ItemType::Podcast),
        Relation::new(ItemType::Podcast, ItemType::Podcast),
    ];

    pub const fn new(src: ItemType, dst: ItemType) -> Self {
        Relation { src, dst }
    }

    #[inline]
    pub fn index(self) -> usize {
        self.dst.index() * 2 + self.src.index()
    }

    pub fn kind(self) -> EdgeKind {
        EdgeKind::between(self.src, self.dst)
    }
}

/// An undirected edge between two global node ids, `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
}

impl Edge {
    pub fn new(a: usize, b: usize) -> Self {
        if a <= b {
            Edge { u: a, v: b }
        } else {
            Edge { u: b, v: a }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct Csr {
    offsets: Vec<u32>,
    targets: Vec<u32>,
}

impl Csr {
    fn from_lists(lists: Vec<Vec<u32>>) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for mut l in lists {
            l.sort_unstable();
            targets.extend(l);
            offsets.push(targets.len() as u32);
        }
        Csr { offsets, targets }
    }

    fn row(&self, i: usize) -> &[u32] {
        &self.targets[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }
}

/// Which undirected relations to keep, plus the edge-support filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphBuildConfig {
    pub min_co_users: usize,
    /// Count weak signals as co-listening evidence too. Off by default.
    pub include_weak_signals: bool,
    pub keep_aa: bool,
    pub keep_ap: bool,
    pub keep_pp: bool,
}

impl Default for GraphBuildConfig {
    fn default() -> Self {
        GraphBuildConfig {
            min_co_users: 1,
            include_weak_signals: false,
            keep_aa: true,
            keep_ap: true,
            keep_pp: true,
        }
    }
}

impl GraphBuildConfig {
    pub fn keeps(&self, kind: EdgeKind) -> bool {
        match kind {
            EdgeKind::Aa => self.keep_aa,
            EdgeKind::Ap => self.keep_ap,
            EdgeKind::Pp => self.keep_pp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeteroGraph {
    ids: [Vec<String>; 2],
    features: [Matrix; 2],
    adj: [Csr; 4],
    edges: [Vec<Edge>; 3],
    index: BTreeMap<String, usize>,
}

const MAGIC: &[u8; 8] = b"HGRAPH\0\0";
const VERSION: u32 = 1;

impl HeteroGraph {
    /// Assembles a graph from per-type node ids, their features and an
    /// undirected edge list over global ids. Duplicates and self-loops are
    /// dropped.
    pub fn from_parts(
        ids: [Vec<String>; 2],
        features: [Matrix; 2],
        edges: impl IntoIterator<Item = Edge>,
    ) -> Result<Self> {
        for t in 0..2 {
            if features[t].rows != ids[t].len() {
                return Err(Error::Dimension {
                    expected: ids[t].len(),
                    got: features[t].rows,
                    context: "feature rows per node type".into(),
                });
            }
        }
        if !ids[0].is_empty() && !ids[1].is_empty() && features[0].cols != features[1].cols {
            return Err(Error::Dimension {
                expected: features[0].cols,
                got: features[1].cols,
                context: "feature width across node types".into(),
            });
        }
        let n_a = ids[0].len();
        let n = n_a + ids[1].len();
        let type_of = |g: usize| {
            if g < n_a {
                ItemType::Audiobook
            } else {
                ItemType::Podcast
            }
        };
        let local = |g: usize| if g < n_a { g } else { g - n_a };

        let mut sets: [BTreeSet<Edge>; 3] = Default::default();
        for e in edges {
            if e.u == e.v {
                continue;
            }
            if e.u >= n || e.v >= n {
                return Err(Error::Invalid(format!("edge {e:?} out of range for {n} nodes")));
            }
            let e = Edge::new(e.u, e.v);
            sets[EdgeKind::between(type_of(e.u), type_of(e.v)).index()].insert(e);
        }

        let mut lists: [Vec<Vec<u32>>; 4] = Default::default();
        for rel in Relation::ALL {
            lists[rel.index()] = vec![Vec::new(); ids[rel.dst.index()].len()];
        }
        for set in &sets {
            for e in set {
                for (a, b) in [(e.u, e.v), (e.v, e.u)] {
                    let rel = Relation::new(type_of(b), type_of(a));
                    lists[rel.index()][local(a)].push(local(b) as u32);
                }
            }
        }
        let adj = lists.map(Csr::from_lists);
        let edges = sets.map(|s| s.into_iter().collect::<Vec<_>>());
        let mut index = BTreeMap::new();
        for (t, list) in ids.iter().enumerate() {
            for (i, id) in list.iter().enumerate() {
                let g = if t == 0 { i } else { n_a + i };
                if index.insert(id.clone(), g).is_some() {
                    return Err(Error::Invalid(format!("duplicate node id {id:?}")));
                }
            }
        }
        Ok(HeteroGraph {
            ids,
            features,
            adj,
            edges,
            index,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.ids[0].len() + self.ids[1].len()
    }

    pub fn num_of_type(&self, ty: ItemType) -> usize {
        self.ids[ty.index()].len()
    }

    pub fn feature_dim(&self) -> usize {
        if self.ids[0].is_empty() {
            self.features[1].cols
        } else {
            self.features[0].cols
        }
    }

    /// `(type, local index)` of a global node id.
    #[inline]
    pub fn node(&self, g: usize) -> (ItemType, usize) {
        let n_a = self.ids[0].len();
        if g < n_a {
            (ItemType::Audiobook, g)
        } else {
            (ItemType::Podcast, g - n_a)
        }
    }

    #[inline]
    pub fn node_type(&self, g: usize) -> ItemType {
        self.node(g).0
    }

    #[inline]
    pub fn global(&self, ty: ItemType, local: usize) -> usize {
        match ty {
            ItemType::Audiobook => local,
            ItemType::Podcast => self.ids[0].len() + local,
        }
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, g: usize) -> &str {
        let (t, l) = self.node(g);
        &self.ids[t.index()][l]
    }

    pub fn ids_of_type(&self, ty: ItemType) -> &[String] {
        &self.ids[ty.index()]
    }

    pub fn features(&self, ty: ItemType) -> &Matrix {
        &self.features[ty.index()]
    }

    pub fn feature(&self, g: usize) -> &[f64] {
        let (t, l) = self.node(g);
        self.features[t.index()].row(l)
    }

    /// Local indices (in the `src` type) of neighbors of `g` via `src → type(g)`.
    pub fn neighbors_local(&self, g: usize, src: ItemType) -> &[u32] {
        let (t, l) = self.node(g);
        self.adj[Relation::new(src, t).index()].row(l)
    }

    /// Global ids of all neighbors of `g` of type `src`.
    pub fn neighbors(&self, g: usize, src: ItemType) -> impl Iterator<Item = usize> + '_ {
        self.neighbors_local(g, src)
            .iter()
            .map(move |&l| self.global(src, l as usize))
    }

    pub fn degree(&self, g: usize) -> usize {
        ItemType::ALL
            .iter()
            .map(|&s| self.neighbors_local(g, s).len())
            .sum()
    }

    pub fn is_adjacent(&self, a: usize, b: usize) -> bool {
        let tb = self.node_type(b);
        let lb = self.node(b).1 as u32;
        self.neighbors_local(a, tb).binary_search(&lb).is_ok()
    }

    pub fn edges(&self, kind: EdgeKind) -> &[Edge] {
        &self.edges[kind.index()]
    }

    pub fn num_edges(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.num_nodes()).map(|g| self.degree(g)).max().unwrap_or(0)
    }

    /// Same nodes and features, without the listed edges.
    pub fn without_edges(&self, removed: &BTreeSet<Edge>) -> Result<HeteroGraph> {
        let kept = self
            .edges
            .iter()
            .flatten()
            .filter(|e| !removed.contains(e))
            .copied()
            .collect::<Vec<_>>();
        HeteroGraph::from_parts(self.ids.clone(), self.features.clone(), kept)
    }

    /// Same nodes and features, keeping only edges of the given kinds.
    pub fn restricted_to(&self, keep: impl Fn(EdgeKind) -> bool) -> Result<HeteroGraph> {
        let kept = EdgeKind::ALL
            .into_iter()
            .filter(|k| keep(*k))
            .flat_map(|k| self.edges[k.index()].iter().copied())
            .collect::<Vec<_>>();
        HeteroGraph::from_parts(self.ids.clone(), self.features.clone(), kept)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        codec::encode(MAGIC, VERSION, self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        codec::decode(MAGIC, VERSION, bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        codec::write(path, MAGIC, VERSION, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        codec::read(path, MAGIC, VERSION)
    }
}

/// Builds the co-listening graph: an edge joins two items whenever at least
/// `min_co_users` distinct users streamed both in the train window.
pub fn build_colisten_graph(
    train: &[InteractionRecord],
    catalog: &Catalog,
    config: &GraphBuildConfig,
) -> Result<HeteroGraph> {
    if train.is_empty() {
        return Err(Error::Empty("no train interactions to build a graph from".into()));
    }
    if config.min_co_users == 0 {
        return Err(Error::Config("min_co_users must be at least 1".into()));
    }
    for r in train {
        if !catalog.contains(&r.item_id) {
            return Err(Error::UnknownItem {
                item_id: r.item_id.clone(),
                user_id: r.user_id.clone(),
                timestamp: r.timestamp,
            });
        }
    }
    let qualifies = |r: &&InteractionRecord| config.include_weak_signals || r.signal == Signal::Stream;

    let mut node_ids: [BTreeSet<&str>; 2] = Default::default();
    for r in train.iter().filter(qualifies) {
        let ty = catalog.get(&r.item_id).expect("checked").item_type;
        node_ids[ty.index()].insert(&r.item_id);
    }
    let ids: [Vec<String>; 2] = node_ids
        .clone()
        .map(|s| s.into_iter().map(str::to_owned).collect());
    let n_a = ids[0].len();
    let mut lookup: HashMap<&str, usize> = HashMap::new();
    for (t, set) in node_ids.iter().enumerate() {
        for (i, id) in set.iter().enumerate() {
            lookup.insert(id, if t == 0 { i } else { n_a + i });
        }
    }
    let features = [0, 1].map(|t| {
        let rows: Vec<Vec<f64>> = ids[t]
            .iter()
            .map(|id| catalog.get(id).expect("checked").content_vector.clone())
            .collect();
        if rows.is_empty() {
            Matrix::zeros(0, catalog.dim())
        } else {
            Matrix::from_rows(&rows)
        }
    });

    let mut per_user: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for r in train.iter().filter(qualifies) {
        per_user.entry(&r.user_id).or_default().insert(lookup[r.item_id.as_str()]);
    }
    let type_of = |g: usize| if g < n_a { ItemType::Audiobook } else { ItemType::Podcast };
    let mut support: HashMap<Edge, usize> = HashMap::new();
    for items in per_user.values() {
        let items: Vec<usize> = items.iter().copied().collect();
        for i in 0..items.len() {
            for j in i + 1..items.len() {
                if config.keeps(EdgeKind::between(type_of(items[i]), type_of(items[j]))) {
                    *support.entry(Edge::new(items[i], items[j])).or_default() += 1;
                }
            }
        }
    }
    let edges = support
        .into_iter()
        .filter(|(_, n)| *n >= config.min_co_users)
        .map(|(e, _)| e);
    HeteroGraph::from_parts(ids, features, edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegreeSummary {
    pub min: usize,
    pub mean: f64,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub audiobooks: usize,
    pub podcasts: usize,
    pub aa: usize,
    pub ap: usize,
    pub pp: usize,
    /// Per relation, over the nodes whose type takes part in it.
    pub degree: BTreeMap<EdgeKind, DegreeSummary>,
}

impl GraphStats {
    pub fn edge_count(&self, kind: EdgeKind) -> usize {
        match kind {
            EdgeKind::Aa => self.aa,
            EdgeKind::Ap => self.ap,
            EdgeKind::Pp => self.pp,
        }
    }
}

pub fn graph_stats(graph: &HeteroGraph) -> GraphStats {
    let mut degree = BTreeMap::new();
    for kind in EdgeKind::ALL {
        let mut degs = Vec::new();
        for g in 0..graph.num_nodes() {
            let t = graph.node_type(g);
            let d: usize = ItemType::ALL
                .iter()
                .filter(|&&s| EdgeKind::between(s, t) == kind)
                .map(|&s| graph.neighbors_local(g, s).len())
                .sum();
            let participates = match kind {
                EdgeKind::Aa => t == ItemType::Audiobook,
                EdgeKind::Pp => t == ItemType::Podcast,
                EdgeKind::Ap => true,
            };
            if participates {
                degs.push(d);
            }
        }
        let summary = if degs.is_empty() {
            DegreeSummary { min: 0, mean: 0.0, max: 0 }
        } else {
            DegreeSummary {
                min: *degs.iter().min().unwrap(),
                mean: degs.iter().sum::<usize>() as f64 / degs.len() as f64,
                max: *degs.iter().max().unwrap(),
            }
        };
        degree.insert(kind, summary);
    }
    GraphStats {
        audiobooks: graph.num_of_type(ItemType::Audiobook),
        podcasts: graph.num_of_type(ItemType::Podcast),
        aa: graph.edges(EdgeKind::Aa).len(),
        ap: graph.edges(EdgeKind::Ap).len(),
        pp: graph.edges(EdgeKind::Pp).len(),
        degree,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CatalogItem;

    pub(crate) fn toy_catalog(ids: &[&str]) -> Catalog {
        Catalog::from_items(ids.iter().enumerate().map(|(i, id)| CatalogItem {
            item_id: id.to_string(),
            item_type: if id.starts_with('A') {
                ItemType::Audiobook
            } else {
                ItemType::Podcast
            },
            content_vector: vec![i as f64, 1.0],
            language: "en".into(),
            genre: "g".into(),
        }))
        .unwrap()
    }

    fn stream(u: &str, i: &str) -> InteractionRecord {
        let ty = if i.starts_with('A') { ItemType::Audiobook } else { ItemType::Podcast };
        InteractionRecord::new(u, i, ty, Signal::Stream, 1)
    }

    fn edge_ids(g: &HeteroGraph) -> BTreeSet<(String, String)> {
        EdgeKind::ALL
            .iter()
            .flat_map(|&k| g.edges(k).iter())
            .map(|e| {
                let (a, b) = (g.id(e.u).to_string(), g.id(e.v).to_string());
                if a < b { (a, b) } else { (b, a) }
            })
            .collect()
    }

    #[test]
    fn two_users_example() {
        let cat = toy_catalog(&["A1", "P1", "P2"]);
        let train = vec![stream("U1", "A1"), stream("U1", "P1"), stream("U2", "P1"), stream("U2", "P2")];
        let g = build_colisten_graph(&train, &cat, &GraphBuildConfig::default()).unwrap();
        let want: BTreeSet<_> = [("A1", "P1"), ("P1", "P2")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        assert_eq!(edge_ids(&g), want);
        let s = graph_stats(&g);
        assert_eq!((s.aa, s.ap, s.pp), (0, 1, 1));
    }

    #[test]
    fn single_item_user_has_no_edges() {
        let cat = toy_catalog(&["A1"]);
        let g = build_colisten_graph(&[stream("U1", "A1")], &cat, &GraphBuildConfig::default()).unwrap();
        assert_eq!(g.num_edges(), 0);
        let s = graph_stats(&g);
        assert!(s.degree.values().all(|d| d.max == 0));
    }

    #[test]
    fn min_co_users_filters_support() {
        let cat = toy_catalog(&["A1", "A2"]);
        let train = vec![stream("U1", "A1"), stream("U1", "A2"), stream("U2", "A1"), stream("U2", "A2")];
        let with = |n| {
            build_colisten_graph(&train, &cat, &GraphBuildConfig { min_co_users: n, ..Default::default() })
                .unwrap()
                .num_edges()
        };
        assert_eq!(with(2), 1);
        assert_eq!(with(3), 0);
    }

    #[test]
    fn triangle_stats() {
        let cat = toy_catalog(&["A1", "A2", "A3"]);
        let train = vec![
            stream("U1", "A1"), stream("U1", "A2"),
            stream("U2", "A2"), stream("U2", "A3"),
            stream("U3", "A1"), stream("U3", "A3"),
        ];
        let g = build_colisten_graph(&train, &cat, &GraphBuildConfig::default()).unwrap();
        let s = graph_stats(&g);
        assert_eq!(s.aa, 3);
        let d = s.degree[&EdgeKind::Aa];
        assert_eq!((d.min, d.max), (2, 2));
    }

    #[test]
    fn weak_signals_do_not_make_edges_by_default() {
        let cat = toy_catalog(&["A1", "A2"]);
        let train = vec![
            stream("U1", "A1"),
            InteractionRecord::new("U1", "A2", ItemType::Audiobook, Signal::Follow, 1),
        ];
        let g = build_colisten_graph(&train, &cat, &GraphBuildConfig::default()).unwrap();
        assert_eq!(g.num_edges(), 0);
        assert_eq!(g.num_nodes(), 1);
        let wide = GraphBuildConfig { include_weak_signals: true, ..Default::default() };
        assert_eq!(build_colisten_graph(&train, &cat, &wide).unwrap().num_edges(), 1);
    }

    #[test]
    fn unknown_item_and_empty_train_are_fatal() {
        let cat = toy_catalog(&["A1"]);
        assert!(matches!(
            build_colisten_graph(&[stream("U1", "A9")], &cat, &GraphBuildConfig::default()),
            Err(Error::UnknownItem { .. })
        ));
        assert!(build_colisten_graph(&[], &cat, &GraphBuildConfig::default()).is_err());
    }

    #[test]
    fn adjacency_is_symmetric_and_serializes() {
        let cat = toy_catalog(&["A1", "A2", "P1", "P2"]);
        let train = vec![
            stream("U1", "A1"), stream("U1", "P1"), stream("U1", "P2"),
            stream("U2", "A2"), stream("U2", "A1"),
        ];
        let g = build_colisten_graph(&train, &cat, &GraphBuildConfig::default()).unwrap();
        for a in 0..g.num_nodes() {
            for s in ItemType::ALL {
                for b in g.neighbors(a, s) {
                    assert!(g.is_adjacent(b, a));
                    assert_ne!(a, b);
                }
            }
        }
        let bytes = g.to_bytes().unwrap();
        let back = HeteroGraph::from_bytes(&bytes).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }
}
