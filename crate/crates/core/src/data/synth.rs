//! Seeded synthetic interaction logs with latent cluster structure.
//!
//! Users and items get a latent cluster. Stream counts are Poisson with the
//! rate multiplied by `affinity` when the user and item clusters match.
//! Content vectors are cluster centroids plus isotropic noise, so co-listened
//! items end up closer in content space than random pairs. A configurable
//! share of first audiobook streams is preceded by a weak signal (follow,
//! preview or intent to pay), and a handful of audiobooks are released only
//! at the end of the log so they never reach the training graph.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::types::{
    Catalog, CatalogItem, InteractionRecord, ItemType, Signal, UserProfile, SECONDS_PER_DAY,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_podcasts: usize,
    pub n_audiobooks: usize,
    pub n_clusters: usize,
    pub content_dim: usize,
    pub music_dim: usize,
    pub days: i64,
    pub holdout_days: i64,
    /// Rate multiplier for same-cluster (user, item) pairs.
    pub affinity: f64,
    /// Expected podcast streams per user over the whole log.
    pub podcast_streams_per_user: f64,
    /// Expected audiobook streams per user over the whole log.
    pub audiobook_streams_per_user: f64,
    /// Log-normal sigma of per-item popularity.
    pub popularity_skew: f64,
    /// Log-normal sigma of per-user activity.
    pub activity_skew: f64,
    /// Norm of the noise added to a unit cluster centroid.
    pub content_noise: f64,
    pub music_noise: f64,
    /// Probability that a streamed audiobook had a weak signal beforehand.
    pub weak_signal_prob: f64,
    /// Expected weak signals per user that never turn into a stream.
    pub weak_noise_per_user: f64,
    pub weak_lead_days_max: f64,
    /// Mix of follow / preview / intent_to_pay among weak signals.
    pub weak_mix: [f64; 3],
    /// Share of audiobooks released at the start of the holdout window.
    pub late_release_fraction: f64,
    /// Probability that an item's genre encodes its cluster.
    pub genre_cluster_prob: f64,
    pub n_countries: usize,
    pub n_age_buckets: usize,
    pub n_languages: usize,
    pub n_genres: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 500,
            n_podcasts: 200,
            n_audiobooks: 80,
            n_clusters: 5,
            content_dim: 32,
            music_dim: 16,
            days: 90,
            holdout_days: 14,
            affinity: 8.0,
            podcast_streams_per_user: 12.0,
            audiobook_streams_per_user: 3.0,
            popularity_skew: 0.7,
            activity_skew: 0.5,
            content_noise: 0.8,
            music_noise: 2.0,
            weak_signal_prob: 0.5,
            weak_noise_per_user: 0.3,
            weak_lead_days_max: 21.0,
            weak_mix: [0.5, 0.3, 0.2],
            late_release_fraction: 0.05,
            genre_cluster_prob: 0.6,
            n_countries: 8,
            n_age_buckets: 6,
            n_languages: 3,
            n_genres: 10,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 {
            return Err(Error::Config("n_clusters must be positive".into()));
        }
        let lim = self.n_users.min(self.n_audiobooks);
        if self.n_clusters > lim {
            return Err(Error::Config(format!(
                "n_clusters = {} exceeds min(n_users, n_audiobooks) = {lim}",
                self.n_clusters
            )));
        }
        if self.content_dim == 0 {
            return Err(Error::Config("content_dim must be positive".into()));
        }
        if self.days <= self.holdout_days || self.holdout_days < 0 {
            return Err(Error::Config("days must exceed holdout_days".into()));
        }
        if self.affinity <= 0.0 || !self.affinity.is_finite() {
            return Err(Error::Config("affinity must be positive".into()));
        }
        Ok(())
    }
}

/// A generated dataset plus the latent assignment that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDataset {
    pub interactions: Vec<InteractionRecord>,
    pub catalog: Catalog,
    pub users: Vec<UserProfile>,
    pub user_cluster: BTreeMap<String, usize>,
    pub item_cluster: BTreeMap<String, usize>,
}

fn balanced_assignment(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).map(|i| i % k).collect();
    v.shuffle(rng);
    v
}

fn unit_gaussian(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn noisy(centroid: &[f64], noise: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sd = noise / (centroid.len() as f64).sqrt();
    let normal = Normal::new(0.0, sd.max(0.0)).expect("valid normal");
    centroid.iter().map(|c| c + normal.sample(rng)).collect()
}

fn lognormal_weights(n: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, sigma.max(0.0)).expect("valid normal");
    let w: Vec<f64> = (0..n).map(|_| normal.sample(rng).exp()).collect();
    let mean = w.iter().sum::<f64>() / n.max(1) as f64;
    w.into_iter().map(|x| x / mean).collect()
}

fn poisson(rate: f64, rng: &mut ChaCha8Rng) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("positive rate").sample(rng) as u64
}

struct ItemSpec {
    id: String,
    ty: ItemType,
    cluster: usize,
    popularity: f64,
    release: i64,
}

/// Generates a dataset. Identical `(config, seed)` gives identical output.
pub fn synth_generate(config: &SynthConfig, seed: u64) -> Result<SynthDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = config.n_clusters;
    let end = config.days * SECONDS_PER_DAY;
    let holdout_start = end - config.holdout_days * SECONDS_PER_DAY;

    let centroids: Vec<Vec<f64>> = (0..k).map(|_| unit_gaussian(config.content_dim, &mut rng)).collect();
    let music_centroids: Vec<Vec<f64>> = (0..k)
        .map(|_| unit_gaussian(config.music_dim.max(1), &mut rng))
        .collect();

    // Items.
    let mut items: Vec<ItemSpec> = Vec::new();
    let mut catalog_items = Vec::new();
    for (ty, n, prefix) in [
        (ItemType::Podcast, config.n_podcasts, "p"),
        (ItemType::Audiobook, config.n_audiobooks, "a"),
    ] {
        let clusters = balanced_assignment(n, k, &mut rng);
        let pop = lognormal_weights(n, config.popularity_skew, &mut rng);
        let n_late = if ty == ItemType::Audiobook {
            (config.late_release_fraction * n as f64).round() as usize
        } else {
            0
        };
        let mut late: Vec<usize> = (0..n).collect();
        late.shuffle(&mut rng);
        late.truncate(n_late);
        for i in 0..n {
            let id = format!("{prefix}{i:04}");
            let cluster = clusters[i];
            let genre = if rng.gen_bool(config.genre_cluster_prob.clamp(0.0, 1.0)) {
                cluster % config.n_genres.max(1)
            } else {
                rng.gen_range(0..config.n_genres.max(1))
            };
            let language = rng.gen_range(0..config.n_languages.max(1));
            catalog_items.push(CatalogItem {
                item_id: id.clone(),
                item_type: ty,
                content_vector: noisy(&centroids[cluster], config.content_noise, &mut rng),
                language: format!("lang{language}"),
                genre: format!("genre{genre:02}"),
            });
            items.push(ItemSpec {
                id,
                ty,
                cluster,
                popularity: pop[i],
                release: if late.contains(&i) { holdout_start } else { 0 },
            });
        }
    }
    let catalog = Catalog::from_items(catalog_items)?;

    // Users.
    let user_clusters = balanced_assignment(config.n_users, k, &mut rng);
    let activity = lognormal_weights(config.n_users, config.activity_skew, &mut rng);
    let mut users = Vec::with_capacity(config.n_users);
    let mut user_cluster = BTreeMap::new();
    let mut interactions = Vec::new();
    let audiobooks: Vec<&ItemSpec> = items.iter().filter(|i| i.ty == ItemType::Audiobook).collect();

    for u in 0..config.n_users {
        let uid = format!("u{u:04}");
        let cu = user_clusters[u];
        user_cluster.insert(uid.clone(), cu);
        let music = if config.music_dim == 0 {
            Vec::new()
        } else {
            noisy(&music_centroids[cu], config.music_noise, &mut rng)
        };
        users.push(UserProfile {
            user_id: uid.clone(),
            country: format!("c{}", rng.gen_range(0..config.n_countries.max(1))),
            age_bucket: format!("age{}", rng.gen_range(0..config.n_age_buckets.max(1))),
            music_vector: music,
        });

        for (ty, per_user) in [
            (ItemType::Podcast, config.podcast_streams_per_user),
            (ItemType::Audiobook, config.audiobook_streams_per_user),
        ] {
            let weight = |it: &ItemSpec| {
                it.popularity * if it.cluster == cu { config.affinity } else { 1.0 }
            };
            let z: f64 = items.iter().filter(|i| i.ty == ty).map(weight).sum();
            for it in items.iter().filter(|i| i.ty == ty) {
                let rate = per_user * activity[u] * weight(it) / z;
                let count = poisson(rate, &mut rng);
                if count == 0 {
                    continue;
                }
                let mut first = i64::MAX;
                for _ in 0..count {
                    let t = rng.gen_range(it.release..end);
                    first = first.min(t);
                    interactions.push(InteractionRecord::new(&uid, &it.id, ty, Signal::Stream, t));
                }
                if ty == ItemType::Audiobook && rng.gen_bool(config.weak_signal_prob.clamp(0.0, 1.0)) {
                    let lead = rng.gen_range(1.0..config.weak_lead_days_max.max(1.0 + 1e-9));
                    let t = first - (lead * SECONDS_PER_DAY as f64) as i64;
                    if t >= it.release.max(0) {
                        let signal = pick_weak(&config.weak_mix, &mut rng);
                        interactions.push(InteractionRecord::new(&uid, &it.id, ty, signal, t));
                    }
                }
            }
        }

        // Weak signals that never convert, drawn with the same cluster bias.
        let n_noise = poisson(config.weak_noise_per_user * activity[u], &mut rng);
        if n_noise > 0 && !audiobooks.is_empty() {
            let w: Vec<f64> = audiobooks
                .iter()
                .map(|it| it.popularity * if it.cluster == cu { config.affinity } else { 1.0 })
                .collect();
            let dist = rand_distr::WeightedIndex::new(&w).expect("positive weights");
            for _ in 0..n_noise {
                let it = audiobooks[dist.sample(&mut rng)];
                let t = rng.gen_range(it.release..end);
                let signal = pick_weak(&config.weak_mix, &mut rng);
                interactions.push(InteractionRecord::new(&uid, &it.id, ItemType::Audiobook, signal, t));
            }
        }
    }

    interactions.sort_by(|a, b| {
        (a.timestamp, &a.user_id, &a.item_id, a.signal).cmp(&(b.timestamp, &b.user_id, &b.item_id, b.signal))
    });
    let item_cluster = items.iter().map(|i| (i.id.clone(), i.cluster)).collect();
    Ok(SynthDataset {
        interactions,
        catalog,
        users,
        user_cluster,
        item_cluster,
    })
}

fn pick_weak(mix: &[f64; 3], rng: &mut ChaCha8Rng) -> Signal {
    let total: f64 = mix.iter().sum();
    let mut x = rng.gen_range(0.0..total.max(1e-12));
    for (i, w) in mix.iter().enumerate() {
        if x < *w {
            return Signal::WEAK[i];
        }
        x -= w;
    }
    Signal::Follow
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::io::to_jsonl;
    use crate::linalg::cosine;
    use std::collections::{BTreeSet, HashMap};

    fn small() -> SynthConfig {
        SynthConfig {
            n_users: 120,
            n_podcasts: 40,
            n_audiobooks: 20,
            n_clusters: 4,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = synth_generate(&small(), 7).unwrap();
        let b = synth_generate(&small(), 7).unwrap();
        assert_eq!(
            to_jsonl(&a.interactions).unwrap(),
            to_jsonl(&b.interactions).unwrap()
        );
        assert_eq!(
            to_jsonl(a.catalog.iter()).unwrap(),
            to_jsonl(b.catalog.iter()).unwrap()
        );
        let c = synth_generate(&small(), 8).unwrap();
        assert_ne!(a.interactions, c.interactions);
    }

    #[test]
    fn too_many_clusters_is_fatal() {
        let cfg = SynthConfig {
            n_audiobooks: 3,
            n_clusters: 4,
            ..small()
        };
        assert!(matches!(synth_generate(&cfg, 1), Err(Error::Config(_))));
    }

    #[test]
    fn records_are_valid_and_catalog_complete() {
        let d = synth_generate(&small(), 3).unwrap();
        for r in &d.interactions {
            r.validate().unwrap();
            assert!(d.catalog.contains(&r.item_id));
        }
        assert_eq!(d.catalog.len(), 60);
        assert!(d.interactions.iter().any(|r| r.signal == Signal::Follow));
    }

    #[test]
    fn late_releases_have_no_train_activity() {
        let cfg = SynthConfig::default();
        let d = synth_generate(&cfg, 11).unwrap();
        let holdout_start = (cfg.days - cfg.holdout_days) * SECONDS_PER_DAY;
        let early: BTreeSet<&str> = d
            .interactions
            .iter()
            .filter(|r| r.timestamp < holdout_start)
            .map(|r| r.item_id.as_str())
            .collect();
        let unseen = d
            .catalog
            .ids_of_type(ItemType::Audiobook)
            .into_iter()
            .filter(|id| !early.contains(id))
            .count();
        assert!(unseen >= 4, "expected late releases, got {unseen}");
    }

    #[test]
    fn single_cluster_has_no_affinity_signal() {
        // With one cluster every pair is "matched"; split users and items
        // into arbitrary halves and the stream rates agree.
        let cfg = SynthConfig {
            n_clusters: 1,
            popularity_skew: 0.0,
            activity_skew: 0.0,
            podcast_streams_per_user: 20.0,
            ..Default::default()
        };
        let d = synth_generate(&cfg, 5).unwrap();
        let mut counts = [[0u64; 2]; 2];
        for r in d.interactions.iter().filter(|r| r.item_type == ItemType::Podcast) {
            let u: usize = r.user_id[1..].parse().unwrap();
            let i: usize = r.item_id[1..].parse().unwrap();
            counts[u % 2][i % 2] += 1;
        }
        let same = (counts[0][0] + counts[1][1]) as f64;
        let cross = (counts[0][1] + counts[1][0]) as f64;
        assert!((same / cross - 1.0).abs() < 0.1, "same {same} cross {cross}");
    }

    /// Exhaustive pair enumeration: mean content cosine over co-listened
    /// audiobook pairs vs over all audiobook pairs.
    #[test]
    fn colistened_audiobooks_are_closer_in_content_space() {
        let d = synth_generate(&SynthConfig::default(), 7).unwrap();
        let mut by_user: HashMap<&str, BTreeSet<&str>> = HashMap::new();
        for r in &d.interactions {
            if r.signal == Signal::Stream && r.item_type == ItemType::Audiobook {
                by_user.entry(&r.user_id).or_default().insert(&r.item_id);
            }
        }
        let mut colistened = BTreeSet::new();
        for set in by_user.values() {
            let v: Vec<_> = set.iter().collect();
            for i in 0..v.len() {
                for j in i + 1..v.len() {
                    colistened.insert((*v[i], *v[j]));
                }
            }
        }
        let ids = d.catalog.ids_of_type(ItemType::Audiobook);
        let vec_of = |id: &str| &d.catalog.get(id).unwrap().content_vector;
        let mut all_sum = 0.0;
        let mut all_n = 0usize;
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                all_sum += cosine(vec_of(ids[i]), vec_of(ids[j]));
                all_n += 1;
            }
        }
        let co_mean = colistened
            .iter()
            .map(|(a, b)| cosine(vec_of(a), vec_of(b)))
            .sum::<f64>()
            / colistened.len() as f64;
        let all_mean = all_sum / all_n as f64;
        assert!(co_mean > all_mean + 0.05, "co {co_mean} vs random {all_mean}");
    }

    fn co_stream_rates(d: &SynthDataset) -> (f64, f64) {
        let mut by_user: HashMap<&str, BTreeSet<&str>> = HashMap::new();
        for r in &d.interactions {
            if r.signal == Signal::Stream {
                by_user.entry(&r.user_id).or_default().insert(&r.item_id);
            }
        }
        let mut pairs = BTreeSet::new();
        for set in by_user.values() {
            let v: Vec<_> = set.iter().collect();
            for i in 0..v.len() {
                for j in i + 1..v.len() {
                    pairs.insert((*v[i], *v[j]));
                }
            }
        }
        let ids: Vec<&String> = d.item_cluster.keys().collect();
        let (mut wi, mut wn, mut ci, mut cn) = (0usize, 0usize, 0usize, 0usize);
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                let hit = pairs.contains(&(ids[i].as_str(), ids[j].as_str()));
                if d.item_cluster[ids[i]] == d.item_cluster[ids[j]] {
                    wn += 1;
                    wi += hit as usize;
                } else {
                    cn += 1;
                    ci += hit as usize;
                }
            }
        }
        (wi as f64 / wn as f64, ci as f64 / cn as f64)
    }

    #[test]
    fn within_cluster_co_stream_rate_dominates_across_seeds() {
        let cfg = SynthConfig {
            affinity: 5.0,
            ..small()
        };
        for seed in 0..10 {
            let d = synth_generate(&cfg, seed).unwrap();
            let (within, cross) = co_stream_rates(&d);
            assert!(within > cross, "seed {seed}: within {within} cross {cross}");
        }
    }

    #[test]
    fn determinism_across_seeds() {
        for seed in 100..110 {
            assert_eq!(
                synth_generate(&small(), seed).unwrap(),
                synth_generate(&small(), seed).unwrap()
            );
        }
    }
}
