use std::collections::{BTreeMap, BTreeSet};

use crate::data::{Catalog, InteractionRecord, ItemType, Signal, SECONDS_PER_DAY};
use crate::error::{Error, Result};
use crate::hgnn::NodeEmbeddingTable;
use crate::index::{build_raw_index, RecIndex};
use crate::linalg::norm;

pub trait Recommender {
    fn name(&self) -> &str;

    /// Up to `n` items for `user`, best first, none of them in `exclude`.
    fn recommend(&self, user: &str, n: usize, exclude: &BTreeSet<String>) -> Result<Vec<String>>;
}

/// One global ranking by stream count in the window, ties by id. Every
/// target-type catalog item is ranked, unstreamed ones last.
#[derive(Debug, Clone, PartialEq)]
pub struct Popularity {
    ranking: Vec<String>,
}

impl Popularity {
    pub fn from_train(
        train: &[InteractionRecord],
        catalog: &Catalog,
        target: ItemType,
        window_end: i64,
        window_days: i64,
    ) -> Self {
        let start = window_end - window_days * SECONDS_PER_DAY;
        let mut counts: BTreeMap<&str, usize> = catalog.ids_of_type(target).into_iter().map(|id| (id, 0)).collect();
        for r in train {
            if r.signal == Signal::Stream && r.item_type == target && r.timestamp >= start && r.timestamp < window_end {
                *counts.entry(r.item_id.as_str()).or_insert(0) += 1;
            }
        }
        Popularity::from_counts(counts.into_iter().map(|(k, v)| (k.to_string(), v)))
    }

    pub fn from_counts(counts: impl IntoIterator<Item = (String, usize)>) -> Self {
        let mut v: Vec<(String, usize)> = counts.into_iter().collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Popularity {
            ranking: v.into_iter().map(|(id, _)| id).collect(),
        }
    }

    pub fn ranking(&self) -> &[String] {
        &self.ranking
    }

    fn top(&self, n: usize, exclude: &BTreeSet<String>) -> Vec<String> {
        self.ranking
            .iter()
            .filter(|i| !exclude.contains(*i))
            .take(n)
            .cloned()
            .collect()
    }
}

impl Recommender for Popularity {
    fn name(&self) -> &str {
        "popularity"
    }

    fn recommend(&self, _user: &str, n: usize, exclude: &BTreeSet<String>) -> Result<Vec<String>> {
        Ok(self.top(n, exclude))
    }
}

/// Ranks items by dot product with a per-user query vector. Users without
/// a (nonzero) query get the fallback ranking when there is one.
#[derive(Debug, Clone)]
pub struct VectorRecommender {
    pub name: String,
    pub queries: BTreeMap<String, Vec<f64>>,
    pub index: RecIndex,
    pub fallback: Option<Popularity>,
}

impl Recommender for VectorRecommender {
    fn name(&self) -> &str {
        &self.name
    }

    fn recommend(&self, user: &str, n: usize, exclude: &BTreeSet<String>) -> Result<Vec<String>> {
        match (self.queries.get(user), &self.fallback) {
            (Some(q), _) if norm(q) > 0.0 => Ok(self
                .index
                .query_topk(q, n, exclude)?
                .into_iter()
                .map(|(id, _)| id)
                .collect()),
            (_, Some(p)) => Ok(p.top(n, exclude)),
            (_, None) => Err(Error::Invalid(format!("{}: no query vector for user {user}", self.name))),
        }
    }
}

/// Mean of `lookup` over the distinct items each user touched in the window
/// and for which `keep` holds. Users with no such item are absent.
pub fn mean_history_vectors<'a>(
    train: &[InteractionRecord],
    window_end: i64,
    window_days: i64,
    keep: impl Fn(&InteractionRecord) -> bool,
    lookup: impl Fn(&str) -> Option<&'a [f64]>,
) -> BTreeMap<String, Vec<f64>> {
    let start = window_end - window_days * SECONDS_PER_DAY;
    let mut touched: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in train {
        if r.timestamp >= start && r.timestamp < window_end && keep(r) {
            touched.entry(&r.user_id).or_default().insert(&r.item_id);
        }
    }
    let mut out = BTreeMap::new();
    for (user, items) in touched {
        let vecs: Vec<&[f64]> = items.iter().filter_map(|i| lookup(i)).collect();
        if vecs.is_empty() {
            continue;
        }
        let mut acc = vec![0.0; vecs[0].len()];
        for v in &vecs {
            for (a, x) in acc.iter_mut().zip(v.iter()) {
                *a += x;
            }
        }
        acc.iter_mut().for_each(|a| *a /= vecs.len() as f64);
        out.insert(user.to_string(), acc);
    }
    out
}

/// Mean content vector of each user's target-type items (streams and weak
/// signals) against raw content vectors.
pub fn content_knn(
    train: &[InteractionRecord],
    catalog: &Catalog,
    target: ItemType,
    window_end: i64,
    window_days: i64,
    fallback: Popularity,
) -> Result<VectorRecommender> {
    let queries = mean_history_vectors(
        train,
        window_end,
        window_days,
        |r| r.item_type == target,
        |id| catalog.get(id).map(|it| it.content_vector.as_slice()),
    );
    let index = build_raw_index(
        catalog
            .iter()
            .filter(|it| it.item_type == target)
            .map(|it| (it.item_id.clone(), it.content_vector.clone())),
    )?;
    Ok(VectorRecommender {
        name: "content_knn".into(),
        queries,
        index,
        fallback: Some(fallback),
    })
}

/// Mean HGNN embedding of everything each user touched in the window
/// against the target-type embeddings.
pub fn hgnn_knn(
    train: &[InteractionRecord],
    embeddings: &NodeEmbeddingTable,
    target: ItemType,
    window_end: i64,
    window_days: i64,
    fallback: Popularity,
) -> Result<VectorRecommender> {
    let queries = mean_history_vectors(train, window_end, window_days, |_| true, |id| embeddings.get(id));
    let index = build_raw_index(
        embeddings
            .ids(target)
            .iter()
            .zip(0..)
            .map(|(id, r)| (id.clone(), embeddings.matrix(target).row(r).to_vec())),
    )?;
    Ok(VectorRecommender {
        name: "hgnn_only".into(),
        queries,
        index,
        fallback: Some(fallback),
    })
}

/// Fixed lists per user, for tests and precomputed results.
#[derive(Debug, Clone, Default)]
pub struct FixedLists {
    pub name: String,
    pub lists: BTreeMap<String, Vec<String>>,
}

impl Recommender for FixedLists {
    fn name(&self) -> &str {
        &self.name
    }

    fn recommend(&self, user: &str, n: usize, exclude: &BTreeSet<String>) -> Result<Vec<String>> {
        Ok(self
            .lists
            .get(user)
            .map(|l| l.iter().filter(|i| !exclude.contains(*i)).take(n).cloned().collect())
            .unwrap_or_default())
    }
}
