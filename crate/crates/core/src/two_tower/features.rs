use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::tower::TowerInput;
use super::vocab::Vocab;
use crate::data::{Catalog, InteractionRecord, ItemType, Signal, UserProfile, SECONDS_PER_DAY};
use crate::hgnn::NodeEmbeddingTable;
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub window_days: i64,
    /// Follows, previews and intent-to-pay enter the user's audiobook mean
    /// and counts. Off, only streams do.
    pub weak_signals: bool,
    /// Off, every HGNN slot is zero.
    pub hgnn: bool,
    pub target: ItemType,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            window_days: 90,
            weak_signals: true,
            hgnn: true,
            target: ItemType::Audiobook,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserFeatures {
    pub user_id: String,
    pub country: String,
    pub age_bucket: String,
    pub music_vector: Vec<f64>,
    pub mean_audiobook_embedding: Vec<f64>,
    pub mean_podcast_embedding: Vec<f64>,
    /// Counts per signal, in [`Signal::ALL`] order.
    pub interaction_counts: [u32; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemFeatures {
    pub item_id: String,
    pub language: String,
    pub genre: String,
    pub content_vector: Vec<f64>,
    pub hgnn_embedding: Vec<f64>,
    pub inductive: bool,
}

fn mean_of<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    let mut n = 0usize;
    for r in rows {
        for (a, x) in acc.iter_mut().zip(r) {
            *a += x;
        }
        n += 1;
    }
    if n > 0 {
        acc.iter_mut().for_each(|a| *a /= n as f64);
    }
    acc
}

/// Features of one user from their records in the `window_days` before
/// `window_end`. Records of other users are ignored.
pub fn assemble_user_features(
    user_id: &str,
    history: &[&InteractionRecord],
    window_end: i64,
    embeddings: &NodeEmbeddingTable,
    profile: Option<&UserProfile>,
    music_dim: usize,
    config: &FeatureConfig,
) -> UserFeatures {
    let start = window_end - config.window_days * SECONDS_PER_DAY;
    let mut audiobooks = BTreeSet::new();
    let mut podcasts = BTreeSet::new();
    let mut counts = [0u32; 4];
    for r in history {
        if r.user_id != user_id || r.timestamp < start || r.timestamp >= window_end {
            continue;
        }
        if r.signal.is_weak() && !config.weak_signals {
            continue;
        }
        counts[r.signal.index()] += 1;
        match r.item_type {
            ItemType::Audiobook => {
                audiobooks.insert(r.item_id.as_str());
            }
            ItemType::Podcast if r.signal == Signal::Stream => {
                podcasts.insert(r.item_id.as_str());
            }
            ItemType::Podcast => {}
        }
    }
    let d = embeddings.dim();
    let (mean_a, mean_p) = if config.hgnn {
        (
            mean_of(audiobooks.iter().filter_map(|id| embeddings.get(id)), d),
            mean_of(podcasts.iter().filter_map(|id| embeddings.get(id)), d),
        )
    } else {
        (vec![0.0; d], vec![0.0; d])
    };
    let music_vector = match profile {
        Some(p) if p.music_vector.len() == music_dim => p.music_vector.clone(),
        _ => vec![0.0; music_dim],
    };
    UserFeatures {
        user_id: user_id.to_string(),
        country: profile.map_or_else(String::new, |p| p.country.clone()),
        age_bucket: profile.map_or_else(String::new, |p| p.age_bucket.clone()),
        music_vector,
        mean_audiobook_embedding: mean_a,
        mean_podcast_embedding: mean_p,
        interaction_counts: counts,
    }
}

/// [`assemble_user_features`] for every user in `user_ids`.
pub fn assemble_all_users(
    user_ids: &BTreeSet<String>,
    train: &[InteractionRecord],
    window_end: i64,
    embeddings: &NodeEmbeddingTable,
    profiles: &BTreeMap<String, UserProfile>,
    music_dim: usize,
    config: &FeatureConfig,
) -> BTreeMap<String, UserFeatures> {
    let mut by_user: BTreeMap<&str, Vec<&InteractionRecord>> = BTreeMap::new();
    for r in train {
        if user_ids.contains(&r.user_id) {
            by_user.entry(r.user_id.as_str()).or_default().push(r);
        }
    }
    user_ids
        .iter()
        .map(|u| {
            let history = by_user.get(u.as_str()).map_or(&[][..], |v| v.as_slice());
            let f = assemble_user_features(u, history, window_end, embeddings, profiles.get(u), music_dim, config);
            (u.clone(), f)
        })
        .collect()
}

/// Features of every catalog item of the target type. Items missing from
/// `embeddings` get a zero HGNN slot and are flagged inductive.
pub fn assemble_item_features(
    catalog: &Catalog,
    embeddings: &NodeEmbeddingTable,
    config: &FeatureConfig,
) -> BTreeMap<String, ItemFeatures> {
    let d = embeddings.dim();
    catalog
        .iter()
        .filter(|it| it.item_type == config.target)
        .map(|it| {
            let found = embeddings.get(&it.item_id);
            let hgnn_embedding = match (config.hgnn, found) {
                (true, Some(z)) => z.to_vec(),
                _ => vec![0.0; d],
            };
            let f = ItemFeatures {
                item_id: it.item_id.clone(),
                language: it.language.clone(),
                genre: it.genre.clone(),
                content_vector: it.content_vector.clone(),
                hgnn_embedding,
                inductive: found.is_none() || embeddings.is_inductive(&it.item_id),
            };
            (it.item_id.clone(), f)
        })
        .collect()
}

/// Distinct (user, target item) pairs streamed inside the window, sorted.
pub fn training_pairs(train: &[InteractionRecord], window_end: i64, config: &FeatureConfig) -> Vec<(String, String)> {
    let start = window_end - config.window_days * SECONDS_PER_DAY;
    let set: BTreeSet<(String, String)> = train
        .iter()
        .filter(|r| {
            r.signal == Signal::Stream
                && r.item_type == config.target
                && r.timestamp >= start
                && r.timestamp < window_end
        })
        .map(|r| (r.user_id.clone(), r.item_id.clone()))
        .collect();
    set.into_iter().collect()
}

/// Widths of the dense parts of both tower inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDims {
    pub music: usize,
    pub content: usize,
    pub hgnn: usize,
}

impl InputDims {
    pub fn user_dense(&self) -> usize {
        self.music + 2 * self.hgnn + 4
    }

    pub fn item_dense(&self) -> usize {
        self.content + self.hgnn
    }
}

fn checked_extend(row: &mut Vec<f64>, values: &[f64], width: usize) {
    if values.len() == width {
        row.extend_from_slice(values);
    } else {
        row.extend(std::iter::repeat_n(0.0, width));
    }
}

pub fn user_input(users: &[&UserFeatures], vocabs: &[Vocab; 2], dims: &InputDims) -> TowerInput {
    let mut data = Vec::with_capacity(users.len() * dims.user_dense());
    let mut categorical = Vec::with_capacity(users.len());
    for u in users {
        categorical.push(vec![vocabs[0].index(&u.country), vocabs[1].index(&u.age_bucket)]);
        checked_extend(&mut data, &u.music_vector, dims.music);
        checked_extend(&mut data, &u.mean_audiobook_embedding, dims.hgnn);
        checked_extend(&mut data, &u.mean_podcast_embedding, dims.hgnn);
        data.extend(u.interaction_counts.iter().map(|&c| (c as f64).ln_1p()));
    }
    TowerInput {
        categorical,
        dense: Matrix::from_vec(users.len(), dims.user_dense(), data),
    }
}

pub fn item_input(items: &[&ItemFeatures], vocabs: &[Vocab; 2], dims: &InputDims) -> TowerInput {
    let mut data = Vec::with_capacity(items.len() * dims.item_dense());
    let mut categorical = Vec::with_capacity(items.len());
    for it in items {
        categorical.push(vec![vocabs[0].index(&it.language), vocabs[1].index(&it.genre)]);
        checked_extend(&mut data, &it.content_vector, dims.content);
        checked_extend(&mut data, &it.hgnn_embedding, dims.hgnn);
    }
    TowerInput {
        categorical,
        dense: Matrix::from_vec(items.len(), dims.item_dense(), data),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hgnn::EmbeddingRow;

    fn table() -> NodeEmbeddingTable {
        let row = |id: &str, ty, e: Vec<f64>| EmbeddingRow {
            item_id: id.into(),
            item_type: ty,
            embedding: e,
            inductive: false,
            fallback: false,
        };
        NodeEmbeddingTable::from_rows(
            2,
            vec![
                row("a1", ItemType::Audiobook, vec![1.0, 0.0]),
                row("a2", ItemType::Audiobook, vec![0.0, 1.0]),
                row("p1", ItemType::Podcast, vec![0.6, 0.8]),
            ],
        )
        .unwrap()
    }

    fn rec(i: &str, ty: ItemType, s: Signal, t: i64) -> InteractionRecord {
        InteractionRecord::new("u", i, ty, s, t)
    }

    fn features(records: &[InteractionRecord], cfg: &FeatureConfig) -> UserFeatures {
        let refs: Vec<&InteractionRecord> = records.iter().collect();
        assemble_user_features("u", &refs, 100 * SECONDS_PER_DAY, &table(), None, 3, cfg)
    }

    #[test]
    fn audiobook_mean() {
        let f = features(
            &[
                rec("a1", ItemType::Audiobook, Signal::Stream, 50 * SECONDS_PER_DAY),
                rec("a2", ItemType::Audiobook, Signal::Stream, 51 * SECONDS_PER_DAY),
            ],
            &FeatureConfig::default(),
        );
        assert_eq!(f.mean_audiobook_embedding, vec![0.5, 0.5]);
        assert_eq!(f.mean_podcast_embedding, vec![0.0, 0.0]);
        assert_eq!(f.music_vector, vec![0.0; 3]);
    }

    #[test]
    fn no_audiobooks_gives_zero_mean() {
        let f = features(
            &[rec("p1", ItemType::Podcast, Signal::Stream, 50 * SECONDS_PER_DAY)],
            &FeatureConfig::default(),
        );
        assert_eq!(f.mean_audiobook_embedding, vec![0.0, 0.0]);
        assert_eq!(f.mean_podcast_embedding, vec![0.6, 0.8]);
    }

    #[test]
    fn follow_alone_enters_the_mean_unless_weak_signals_are_off() {
        let records = [rec("a2", ItemType::Audiobook, Signal::Follow, 60 * SECONDS_PER_DAY)];
        let f = features(&records, &FeatureConfig::default());
        assert_eq!(f.mean_audiobook_embedding, vec![0.0, 1.0]);
        assert_eq!(f.interaction_counts[Signal::Follow.index()], 1);
        let off = features(
            &records,
            &FeatureConfig {
                weak_signals: false,
                ..FeatureConfig::default()
            },
        );
        assert_eq!(off.mean_audiobook_embedding, vec![0.0, 0.0]);
        assert_eq!(off.interaction_counts, [0; 4]);
    }

    #[test]
    fn records_outside_window_are_ignored() {
        let f = features(
            &[
                rec("a1", ItemType::Audiobook, Signal::Stream, 5 * SECONDS_PER_DAY),
                rec("a2", ItemType::Audiobook, Signal::Stream, 100 * SECONDS_PER_DAY),
            ],
            &FeatureConfig::default(),
        );
        assert_eq!(f.mean_audiobook_embedding, vec![0.0, 0.0]);
    }
}
