//! In-memory pipeline: the same steps the staged commands run, without the
//! files in between.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use crate::data::{
    default_split_time, synth_generate, timeline_split, user_segments, Catalog, DatasetSplit, InteractionRecord,
    SynthDataset, UserProfile, UserSegments,
};
use crate::error::Result;
use crate::eval::{
    content_knn, evaluate_lists, hgnn_knn, recommend_all, EvalContext, MetricsReport, Popularity, Recommendations,
    Recommender, VectorRecommender,
};
use crate::graph::{build_colisten_graph, HeteroGraph};
use crate::hgnn::{embed_catalog, train_hgnn, HgnnParams, HgnnTrainOutput, NodeEmbeddingTable};
use crate::index::build_index;
use crate::two_tower::{
    assemble_all_users, assemble_item_features, export_item_vectors, export_user_vectors, train_2t, training_pairs,
    FeatureConfig, InputDims, TwoTowerConfig, TwoTowerModel,
};

/// Raw inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub interactions: Vec<InteractionRecord>,
    pub catalog: Catalog,
    pub users: BTreeMap<String, UserProfile>,
}

impl From<SynthDataset> for Dataset {
    fn from(d: SynthDataset) -> Self {
        Dataset {
            interactions: d.interactions,
            catalog: d.catalog,
            users: d.users.into_iter().map(|u| (u.user_id.clone(), u)).collect(),
        }
    }
}

impl Dataset {
    pub fn music_dim(&self) -> usize {
        self.users.values().map(|u| u.music_vector.len()).max().unwrap_or(0)
    }

    /// Every user id seen in the log or the profiles.
    pub fn user_ids(&self) -> BTreeSet<String> {
        self.interactions
            .iter()
            .map(|r| r.user_id.clone())
            .chain(self.users.keys().cloned())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: Dataset,
    pub split: DatasetSplit,
    pub segments: UserSegments,
    pub graph: HeteroGraph,
}

pub fn resolve_split_time(records: &[InteractionRecord], config: &PipelineConfig) -> Option<i64> {
    config
        .split
        .split_time
        .or_else(|| default_split_time(records, config.split.holdout_days))
}

pub fn prepare(dataset: Dataset, config: &PipelineConfig) -> Result<Prepared> {
    let split = timeline_split(&dataset.interactions, resolve_split_time(&dataset.interactions, config))?;
    let segments = user_segments(&split);
    let graph = build_colisten_graph(&split.train, &dataset.catalog, &config.graph)?;
    Ok(Prepared {
        dataset,
        split,
        segments,
        graph,
    })
}

/// Trains the HGNN and embeds the whole catalog.
pub fn hgnn_embeddings(prep: &Prepared, config: &PipelineConfig, seed: u64) -> Result<(HgnnTrainOutput, NodeEmbeddingTable)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = HgnnParams::init(prep.graph.feature_dim(), &config.hgnn, &mut rng);
    let out = train_hgnn(&prep.graph, init, &config.hgnn, seed)?;
    let table = embed_catalog(&prep.graph, &out.params, &prep.dataset.catalog, &config.hgnn)?;
    Ok((out, table))
}

/// A trained two-tower model with its exported vectors.
#[derive(Debug, Clone)]
pub struct TwoTowerRun {
    pub model: TwoTowerModel,
    pub user_vectors: BTreeMap<String, Vec<f64>>,
    pub item_vectors: BTreeMap<String, Vec<f64>>,
    pub inductive_items: BTreeSet<String>,
}

impl TwoTowerRun {
    pub fn recommender(&self, name: &str) -> Result<VectorRecommender> {
        Ok(VectorRecommender {
            name: name.to_string(),
            queries: self.user_vectors.clone(),
            index: build_index(self.item_vectors.clone())?,
            fallback: None,
        })
    }
}

pub fn two_tower(
    prep: &Prepared,
    embeddings: &NodeEmbeddingTable,
    config: &TwoTowerConfig,
    seed: u64,
) -> Result<TwoTowerRun> {
    let f = &config.features;
    let window_end = prep.split.split_time;
    let ids = prep.dataset.user_ids();
    let music_dim = prep.dataset.music_dim();
    let users = assemble_all_users(&ids, &prep.split.train, window_end, embeddings, &prep.dataset.users, music_dim, f);
    let items = assemble_item_features(&prep.dataset.catalog, embeddings, f);
    let pairs = training_pairs(&prep.split.train, window_end, f);
    let dims = InputDims {
        music: music_dim,
        content: prep.dataset.catalog.dim(),
        hgnn: embeddings.dim(),
    };
    let model = train_2t(&pairs, &users, &items, config, dims, seed)?.model;
    let item_vectors = export_item_vectors(&model, &items)?;
    let user_vectors = export_user_vectors(&model, &users, &ids)?;
    Ok(TwoTowerRun {
        model,
        user_vectors,
        item_vectors,
        inductive_items: items.values().filter(|i| i.inductive).map(|i| i.item_id.clone()).collect(),
    })
}

pub const MODEL_POPULARITY: &str = "popularity";
pub const MODEL_CONTENT_KNN: &str = "content_knn";
pub const MODEL_HGNN_ONLY: &str = "hgnn_only";
pub const MODEL_2T: &str = "2t";
pub const MODEL_2T_HGNN: &str = "2t_hgnn";
pub const MODEL_2T_HGNN_NO_WEAK: &str = "2t_hgnn_no_weak_signals";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub seed: u64,
    pub reports: Vec<MetricsReport>,
    /// Top-100 lists per model and user.
    #[serde(skip)]
    pub recommendations: BTreeMap<String, Recommendations>,
    /// Catalog items of the target type that were embedded from content
    /// alone.
    pub inductive_items: BTreeSet<String>,
    /// Largest |‖v‖ − 1| over HGNN embeddings and tower outputs.
    pub max_norm_error: f64,
}

impl BenchmarkResult {
    pub fn metric(&self, model: &str, segment: crate::eval::Segment) -> Option<&MetricsReport> {
        self.reports.iter().find(|r| r.model == model && r.segment == segment)
    }
}

fn max_norm_error<'a>(vectors: impl Iterator<Item = &'a [f64]>) -> f64 {
    vectors
        .map(|v| (crate::linalg::norm(v) - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Generates the synthetic dataset for `seed`, trains the HGNN once and
/// three two-tower variants (with HGNN inputs, without, and without weak
/// signals), and scores them next to the popularity, content-KNN and
/// HGNN-only baselines.
pub fn run_benchmark(config: &PipelineConfig, seed: u64) -> Result<BenchmarkResult> {
    config.validate()?;
    let dataset: Dataset = synth_generate(&config.synth, seed)?.into();
    let prep = prepare(dataset, config)?;
    let target = config.eval.target;
    let ctx = EvalContext::new(&prep.split, &prep.segments, &prep.dataset.catalog, target, config.eval.k);
    let window_end = prep.split.split_time;
    let window_days = config.split.window_days;
    let popularity = Popularity::from_train(&prep.split.train, &prep.dataset.catalog, target, window_end, window_days);

    let (_, embeddings) = hgnn_embeddings(&prep, config, seed)?;
    let rows: Vec<_> = embeddings.rows().collect();
    let mut norm_error = max_norm_error(rows.iter().map(|r| r.embedding.as_slice()));

    let mut recommenders: Vec<Box<dyn Recommender>> = vec![
        Box::new(popularity.clone()),
        Box::new(content_knn(&prep.split.train, &prep.dataset.catalog, target, window_end, window_days, popularity.clone())?),
        Box::new(hgnn_knn(&prep.split.train, &embeddings, target, window_end, window_days, popularity.clone())?),
    ];
    let variants = [
        (MODEL_2T_HGNN, FeatureConfig { target, ..config.two_tower.features.clone() }),
        (MODEL_2T, FeatureConfig { target, hgnn: false, ..config.two_tower.features.clone() }),
        (MODEL_2T_HGNN_NO_WEAK, FeatureConfig { target, weak_signals: false, ..config.two_tower.features.clone() }),
    ];
    let mut inductive_items = BTreeSet::new();
    for (i, (name, features)) in variants.into_iter().enumerate() {
        let cfg = TwoTowerConfig { features, ..config.two_tower.clone() };
        let run = two_tower(&prep, &embeddings, &cfg, seed.wrapping_add(1 + i as u64))?;
        norm_error = norm_error
            .max(max_norm_error(run.user_vectors.values().map(|v| v.as_slice())))
            .max(max_norm_error(run.item_vectors.values().map(|v| v.as_slice())));
        if name == MODEL_2T_HGNN {
            inductive_items = run.inductive_items.clone();
        }
        recommenders.push(Box::new(run.recommender(name)?));
    }

    let mut reports = Vec::new();
    let mut recommendations = BTreeMap::new();
    for rec in &recommenders {
        let lists = recommend_all(rec.as_ref(), &ctx)?;
        reports.extend(evaluate_lists(rec.name(), &lists, &ctx)?);
        recommendations.insert(rec.name().to_string(), lists);
    }
    Ok(BenchmarkResult {
        seed,
        reports,
        recommendations,
        inductive_items,
        max_norm_error: norm_error,
    })
}
