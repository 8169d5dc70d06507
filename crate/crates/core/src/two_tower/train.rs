use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{item_input, user_input, FeatureConfig, InputDims, ItemFeatures, UserFeatures};
use super::loss::{batch_weights, in_batch_loss};
use super::tower::{Tower, Towers};
use super::vocab::Vocab;
use crate::codec;
use crate::error::{Error, Result};
use crate::linalg::{Adam, AdamConfig, Matrix, Parameters};

const MAGIC: &[u8; 8] = b"TWOTOWER";
const VERSION: u32 = 1;
const INFERENCE_CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoTowerConfig {
    pub widths: Vec<usize>,
    pub categorical_width: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub features: FeatureConfig,
}

impl Default for TwoTowerConfig {
    fn default() -> Self {
        TwoTowerConfig {
            widths: vec![512, 256, 128],
            categorical_width: 8,
            batch_size: 128,
            epochs: 10,
            lr: 1e-3,
            features: FeatureConfig::default(),
        }
    }
}

impl TwoTowerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Config("tower widths must be nonempty and positive".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2 for in-batch negatives".into()));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::Config("lr must be positive".into()));
        }
        Ok(())
    }
}

/// Trained towers with the vocabularies and item frequencies they were
/// trained against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoTowerModel {
    pub config: TwoTowerConfig,
    pub dims: InputDims,
    /// Country and age bucket.
    pub user_vocabs: [Vocab; 2],
    /// Language and genre.
    pub item_vocabs: [Vocab; 2],
    pub towers: Towers,
    /// Training pairs per item.
    pub item_frequency: BTreeMap<String, u64>,
}

impl TwoTowerModel {
    pub fn init(
        config: TwoTowerConfig,
        dims: InputDims,
        user_vocabs: [Vocab; 2],
        item_vocabs: [Vocab; 2],
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cw = config.categorical_width;
        let user = Tower::init(
            &[user_vocabs[0].len(), user_vocabs[1].len()],
            cw,
            dims.user_dense(),
            &config.widths,
            &mut rng,
        );
        let item = Tower::init(
            &[item_vocabs[0].len(), item_vocabs[1].len()],
            cw,
            dims.item_dense(),
            &config.widths,
            &mut rng,
        );
        Ok(TwoTowerModel {
            config,
            dims,
            user_vocabs,
            item_vocabs,
            towers: Towers { user, item },
            item_frequency: BTreeMap::new(),
        })
    }

    pub fn output_dim(&self) -> usize {
        self.towers.user.output_dim()
    }

    pub fn user_vectors(&self, users: &[&UserFeatures]) -> Result<Matrix> {
        let mut out = Matrix::zeros(users.len(), self.output_dim());
        for (c, chunk) in users.chunks(INFERENCE_CHUNK).enumerate() {
            let f = self.towers.user.forward(&user_input(chunk, &self.user_vocabs, &self.dims))?;
            let start = c * INFERENCE_CHUNK * out.cols;
            out.data[start..start + f.out.data.len()].copy_from_slice(&f.out.data);
        }
        Ok(out)
    }

    pub fn item_vectors(&self, items: &[&ItemFeatures]) -> Result<Matrix> {
        let mut out = Matrix::zeros(items.len(), self.output_dim());
        for (c, chunk) in items.chunks(INFERENCE_CHUNK).enumerate() {
            let f = self.towers.item.forward(&item_input(chunk, &self.item_vocabs, &self.dims))?;
            let start = c * INFERENCE_CHUNK * out.cols;
            out.data[start..start + f.out.data.len()].copy_from_slice(&f.out.data);
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        codec::write(path, MAGIC, VERSION, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        codec::read(path, MAGIC, VERSION)
    }

    pub fn checksum(&self) -> String {
        self.towers.checksum()
    }
}

/// Loss and gradients of one batch of (user, item) pairs.
pub fn batch_loss_and_grads(
    model: &TwoTowerModel,
    batch: &[(&UserFeatures, &ItemFeatures)],
) -> Result<(f64, usize, Towers)> {
    let users: Vec<&UserFeatures> = batch.iter().map(|(u, _)| *u).collect();
    let mut item_rows: BTreeMap<&str, usize> = BTreeMap::new();
    let mut items: Vec<&ItemFeatures> = Vec::new();
    let mut item_of = Vec::with_capacity(batch.len());
    for (_, it) in batch {
        let row = *item_rows.entry(it.item_id.as_str()).or_insert_with(|| {
            items.push(it);
            items.len() - 1
        });
        item_of.push(row);
    }
    let freqs: Vec<f64> = batch
        .iter()
        .map(|(_, it)| model.item_frequency.get(&it.item_id).copied().unwrap_or(1).max(1) as f64)
        .collect();
    let weights = batch_weights(&freqs);

    let u_in = user_input(&users, &model.user_vocabs, &model.dims);
    let i_in = item_input(&items, &model.item_vocabs, &model.dims);
    let uf = model.towers.user.forward(&u_in)?;
    let itf = model.towers.item.forward(&i_in)?;
    let l = in_batch_loss(&uf.out, &itf.out, &item_of, &weights);
    let mut grads = model.towers.zeros_like();
    if l.pairs > 0 {
        model.towers.user.backward(&u_in, &uf, &l.d_users, &mut grads.user);
        model.towers.item.backward(&i_in, &itf, &l.d_items, &mut grads.item);
    }
    Ok((l.loss, l.pairs, grads))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoTowerEpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct TwoTowerTrainOutput {
    pub model: TwoTowerModel,
    pub log: Vec<TwoTowerEpochLog>,
}

/// Trains both towers on `pairs` of (user id, item id). Vocabularies come
/// from the supplied features.
pub fn train_2t(
    pairs: &[(String, String)],
    users: &BTreeMap<String, UserFeatures>,
    items: &BTreeMap<String, ItemFeatures>,
    config: &TwoTowerConfig,
    dims: InputDims,
    seed: u64,
) -> Result<TwoTowerTrainOutput> {
    if pairs.is_empty() {
        return Err(Error::Empty("no training pairs for the two-tower model".into()));
    }
    let mut resolved = Vec::with_capacity(pairs.len());
    for (u, i) in pairs {
        let uf = users
            .get(u)
            .ok_or_else(|| Error::Invalid(format!("no features for user {u}")))?;
        let itf = items
            .get(i)
            .ok_or_else(|| Error::Invalid(format!("no features for item {i}")))?;
        resolved.push((uf, itf));
    }
    let user_vocabs = [
        Vocab::build(users.values().map(|u| u.country.as_str())),
        Vocab::build(users.values().map(|u| u.age_bucket.as_str())),
    ];
    let item_vocabs = [
        Vocab::build(items.values().map(|i| i.language.as_str())),
        Vocab::build(items.values().map(|i| i.genre.as_str())),
    ];
    let mut model = TwoTowerModel::init(config.clone(), dims, user_vocabs, item_vocabs, seed)?;
    for (_, i) in pairs {
        *model.item_frequency.entry(i.clone()).or_insert(0) += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x2707_0e1e);
    let mut opt = Adam::new(
        AdamConfig {
            lr: config.lr,
            ..Default::default()
        },
        &model.towers,
    );
    let mut order: Vec<usize> = (0..resolved.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut n = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<(&UserFeatures, &ItemFeatures)> = chunk.iter().map(|&i| resolved[i]).collect();
            let (loss, pairs, grads) = batch_loss_and_grads(&model, &batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            if pairs == 0 {
                continue;
            }
            opt.step(&mut model.towers, &grads);
            if !model.towers.all_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            sum += loss * pairs as f64;
            n += pairs;
        }
        log.push(TwoTowerEpochLog {
            epoch,
            train_loss: if n == 0 { 0.0 } else { sum / n as f64 },
            wall_time_s: started.elapsed().as_secs_f64(),
        });
    }
    Ok(TwoTowerTrainOutput { model, log })
}

/// One output vector per item, keyed by id.
pub fn export_item_vectors(
    model: &TwoTowerModel,
    items: &BTreeMap<String, ItemFeatures>,
) -> Result<BTreeMap<String, Vec<f64>>> {
    let list: Vec<&ItemFeatures> = items.values().collect();
    let m = model.item_vectors(&list)?;
    Ok(list
        .iter()
        .enumerate()
        .map(|(r, it)| (it.item_id.clone(), m.row(r).to_vec()))
        .collect())
}

/// One output vector per user in `ids` that has features.
pub fn export_user_vectors(
    model: &TwoTowerModel,
    users: &BTreeMap<String, UserFeatures>,
    ids: &BTreeSet<String>,
) -> Result<BTreeMap<String, Vec<f64>>> {
    let list: Vec<&UserFeatures> = ids.iter().filter_map(|u| users.get(u)).collect();
    let m = model.user_vectors(&list)?;
    Ok(list
        .iter()
        .enumerate()
        .map(|(r, u)| (u.user_id.clone(), m.row(r).to_vec()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gradient_check;
    use rand::Rng;

    fn toy(rng: &mut ChaCha8Rng, n_users: usize, n_items: usize) -> (BTreeMap<String, UserFeatures>, BTreeMap<String, ItemFeatures>) {
        let dims = toy_dims();
        let mut v = |n: usize| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        let users = (0..n_users)
            .map(|i| {
                let id = format!("u{i}");
                let f = UserFeatures {
                    user_id: id.clone(),
                    country: ["se", "de", "us"][i % 3].into(),
                    age_bucket: ["18-24", "25-34"][i % 2].into(),
                    music_vector: v(dims.music),
                    mean_audiobook_embedding: v(dims.hgnn),
                    mean_podcast_embedding: v(dims.hgnn),
                    interaction_counts: [i as u32, 1, 0, 2],
                };
                (id, f)
            })
            .collect();
        let items = (0..n_items)
            .map(|i| {
                let id = format!("a{i}");
                let f = ItemFeatures {
                    item_id: id.clone(),
                    language: ["en", "sv"][i % 2].into(),
                    genre: ["crime", "history", "sci-fi"][i % 3].into(),
                    content_vector: v(dims.content),
                    hgnn_embedding: v(dims.hgnn),
                    inductive: false,
                };
                (id, f)
            })
            .collect();
        (users, items)
    }

    fn toy_dims() -> InputDims {
        InputDims {
            music: 3,
            content: 4,
            hgnn: 3,
        }
    }

    fn toy_config() -> TwoTowerConfig {
        TwoTowerConfig {
            widths: vec![8, 4, 2],
            categorical_width: 3,
            batch_size: 4,
            epochs: 3,
            ..TwoTowerConfig::default()
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let eps = 1e-4;
        let mut checked = 0;
        for seed in 0.. {
            if checked == 20 {
                break;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (users, items) = toy(&mut rng, 4, 4);
            let pairs: Vec<(String, String)> = (0..4).map(|i| (format!("u{i}"), format!("a{}", (i * 3 + seed as usize) % 4))).collect();
            let mut model = train_2t(&pairs, &users, &items, &TwoTowerConfig { epochs: 0, ..toy_config() }, toy_dims(), seed)
                .unwrap()
                .model;
            model.item_frequency.insert("a0".into(), 3);
            let batch: Vec<(&UserFeatures, &ItemFeatures)> = pairs.iter().map(|(u, i)| (&users[u], &items[i])).collect();
            let us: Vec<&UserFeatures> = batch.iter().map(|b| b.0).collect();
            let its: Vec<&ItemFeatures> = batch.iter().map(|b| b.1).collect();
            let u_norms = model.towers.user.forward(&user_input(&us, &model.user_vocabs, &model.dims)).unwrap();
            let i_norms = model.towers.item.forward(&item_input(&its, &model.item_vocabs, &model.dims)).unwrap();
            if u_norms.norms().iter().chain(i_norms.norms()).any(|&n| n < 1e-2) {
                continue;
            }
            let (_, _, grads) = batch_loss_and_grads(&model, &batch).unwrap();
            let check = gradient_check(&model.towers, &grads, eps, |t| {
                let m = TwoTowerModel {
                    towers: t.clone(),
                    ..model.clone()
                };
                batch_loss_and_grads(&m, &batch).unwrap().0
            });
            if check.kinks > 0 {
                continue;
            }
            checked += 1;
            assert!(check.max_relative_error < 1e-3, "seed {seed}: {check:?}");
        }
    }

    #[test]
    fn training_is_deterministic_and_lowers_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (users, items) = toy(&mut rng, 40, 12);
        let pairs: Vec<(String, String)> = (0..40).map(|i| (format!("u{i}"), format!("a{}", i % 12))).collect();
        let cfg = TwoTowerConfig {
            widths: vec![32, 16, 8],
            batch_size: 16,
            epochs: 30,
            lr: 1e-2,
            ..toy_config()
        };
        let a = train_2t(&pairs, &users, &items, &cfg, toy_dims(), 4).unwrap();
        let b = train_2t(&pairs, &users, &items, &cfg, toy_dims(), 4).unwrap();
        assert_eq!(a.model.checksum(), b.model.checksum());
        assert!(a.log.last().unwrap().train_loss < a.log[0].train_loss);
    }

    #[test]
    fn locality_and_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mut users, mut items) = toy(&mut rng, 6, 5);
        let pairs: Vec<(String, String)> = (0..6).map(|i| (format!("u{i}"), format!("a{}", i % 5))).collect();
        let model = train_2t(&pairs, &users, &items, &toy_config(), toy_dims(), 1).unwrap().model;
        let ids: BTreeSet<String> = users.keys().cloned().collect();
        let iv = export_item_vectors(&model, &items).unwrap();
        let uv = export_user_vectors(&model, &users, &ids).unwrap();
        for v in iv.values().chain(uv.values()) {
            assert!((crate::linalg::norm(v) - 1.0).abs() < 1e-6);
        }
        users.get_mut("u0").unwrap().mean_podcast_embedding = vec![9.0, 9.0, 9.0];
        assert_eq!(export_item_vectors(&model, &items).unwrap(), iv);
        items.get_mut("a0").unwrap().genre = "poetry".into();
        assert_eq!(export_user_vectors(&model, &users, &ids).unwrap()["u1"], uv["u1"]);
        assert_ne!(export_user_vectors(&model, &users, &ids).unwrap()["u0"], uv["u0"]);
    }

    #[test]
    fn checkpoint_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (users, items) = toy(&mut rng, 4, 3);
        let pairs: Vec<(String, String)> = (0..4).map(|i| (format!("u{i}"), format!("a{}", i % 3))).collect();
        let model = train_2t(&pairs, &users, &items, &toy_config(), toy_dims(), 2).unwrap().model;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("towers.bin");
        model.save(&path).unwrap();
        assert_eq!(TwoTowerModel::load(&path).unwrap(), model);
    }

    #[test]
    fn unseen_country_matches_oov_token() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (mut users, items) = toy(&mut rng, 4, 3);
        let pairs: Vec<(String, String)> = (0..4).map(|i| (format!("u{i}"), format!("a{}", i % 3))).collect();
        let model = train_2t(&pairs, &users, &items, &toy_config(), toy_dims(), 3).unwrap().model;
        let ids: BTreeSet<String> = ["u0".to_string()].into();
        users.get_mut("u0").unwrap().country = "zz".into();
        let unseen = export_user_vectors(&model, &users, &ids).unwrap();
        users.get_mut("u0").unwrap().country = super::super::vocab::OOV_TOKEN.into();
        assert_eq!(export_user_vectors(&model, &users, &ids).unwrap(), unseen);
    }
}
