//! File-backed pipeline stages. Each stage reads the artifacts of earlier
//! stages from the output directory, writes its own, and records a manifest
//! next to every artifact.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::config::PipelineConfig;
use super::run::{
    hgnn_embeddings, prepare, resolve_split_time, two_tower, Dataset, Prepared, MODEL_2T, MODEL_2T_HGNN,
};
use crate::data::io::write_jsonl;
use crate::data::{
    parse_catalog, parse_interactions, parse_users, synth_generate, user_segments, DatasetSplit, Diagnostic, Signal,
    UserSegments,
};
use crate::error::{Error, Result};
use crate::eval::{
    content_knn, evaluate, evaluate_lists, hgnn_knn, metrics_csv, pair_similarity_probe, recommend_all,
    tiered_metrics, weak_signal_analysis, write_json, EvalContext, MetricsReport, Pairing, Popularity,
    ProbeSummary, Recommender, TierReport, VectorRecommender,
};
use crate::graph::{build_colisten_graph, graph_stats, HeteroGraph};
use crate::hgnn::{embed_catalog, train_hgnn, HgnnParams, NodeEmbeddingTable};
use crate::index::{build_index, RecIndex};
use crate::two_tower::{assemble_user_features, FeatureConfig, TwoTowerConfig, TwoTowerModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Synth,
    Split,
    BuildGraph,
    TrainHgnn,
    Embed,
    TrainTwoTower,
    BuildIndex,
    Recommend,
    Evaluate,
    Ablate,
    WeakSignals,
    Probe,
}

impl Stage {
    pub const ALL: [Stage; 12] = [
        Stage::Synth,
        Stage::Split,
        Stage::BuildGraph,
        Stage::TrainHgnn,
        Stage::Embed,
        Stage::TrainTwoTower,
        Stage::BuildIndex,
        Stage::Recommend,
        Stage::Evaluate,
        Stage::Ablate,
        Stage::WeakSignals,
        Stage::Probe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Split => "split",
            Stage::BuildGraph => "build-graph",
            Stage::TrainHgnn => "train-hgnn",
            Stage::Embed => "embed",
            Stage::TrainTwoTower => "train-2t",
            Stage::BuildIndex => "build-index",
            Stage::Recommend => "recommend",
            Stage::Evaluate => "evaluate",
            Stage::Ablate => "ablate",
            Stage::WeakSignals => "weak-signals",
            Stage::Probe => "probe",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

/// Where every artifact lives under the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn at(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn interactions(&self) -> PathBuf {
        self.at("data/interactions.jsonl")
    }
    pub fn catalog(&self) -> PathBuf {
        self.at("data/catalog.jsonl")
    }
    pub fn users(&self) -> PathBuf {
        self.at("data/users.jsonl")
    }
    pub fn train(&self) -> PathBuf {
        self.at("split/train.jsonl")
    }
    pub fn holdout(&self) -> PathBuf {
        self.at("split/holdout.jsonl")
    }
    pub fn split_summary(&self) -> PathBuf {
        self.at("split/split.json")
    }
    pub fn graph(&self) -> PathBuf {
        self.at("graph/graph.bin")
    }
    pub fn graph_stats(&self) -> PathBuf {
        self.at("graph/stats.json")
    }
    pub fn hgnn_params(&self) -> PathBuf {
        self.at("hgnn/params.bin")
    }
    pub fn hgnn_log(&self) -> PathBuf {
        self.at("hgnn/train_log.jsonl")
    }
    pub fn embeddings(&self) -> PathBuf {
        self.at("embed/embeddings.jsonl")
    }
    pub fn two_tower_model(&self) -> PathBuf {
        self.at("two_tower/model.bin")
    }
    pub fn user_vectors(&self) -> PathBuf {
        self.at("two_tower/user_vectors.jsonl")
    }
    pub fn item_vectors(&self) -> PathBuf {
        self.at("two_tower/item_vectors.jsonl")
    }
    pub fn index(&self) -> PathBuf {
        self.at("index/index.bin")
    }
    pub fn eval_report(&self) -> PathBuf {
        self.at("eval/report.json")
    }
    pub fn eval_csv(&self) -> PathBuf {
        self.at("eval/metrics.csv")
    }
    pub fn ablation_variants(&self) -> PathBuf {
        self.at("ablate/variants.json")
    }
    pub fn ablation_report(&self) -> PathBuf {
        self.at("ablate/ablation.json")
    }
    pub fn ablation_csv(&self) -> PathBuf {
        self.at("ablate/ablation.csv")
    }
    pub fn ablation_cache(&self, key: &str) -> PathBuf {
        self.at(&format!("ablate/cache/{key}.json"))
    }
    pub fn weak_signals(&self) -> PathBuf {
        self.at("weak_signals/report.json")
    }
    pub fn probe(&self) -> PathBuf {
        self.at("probe/report.json")
    }
    pub fn resolved_config(&self) -> PathBuf {
        self.at("config.resolved.json")
    }

    /// `graph/graph.bin` → `graph/graph.bin.manifest.json`.
    pub fn manifest_of(path: &Path) -> PathBuf {
        let mut name = path.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        path.with_file_name(name)
    }

    fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.root)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }
}

/// Provenance written next to each artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub artifact: String,
    pub stage: String,
    pub sha256: String,
    /// Hash of the stage, config, seed and input hashes. Equal keys mean
    /// equal artifacts.
    pub key: String,
    pub inputs: BTreeMap<String, String>,
    pub config_hash: String,
    pub seed: u64,
    pub created_at_unix: u64,
}

impl ArtifactManifest {
    pub fn load(artifact: &Path) -> Result<Self> {
        let path = Layout::manifest_of(artifact);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn sha256_str(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub split_time: i64,
    pub n_train: usize,
    pub n_holdout: usize,
    pub warnings: Vec<String>,
    /// Input lines that failed to parse.
    pub diagnostics: Vec<Diagnostic>,
    pub segments: UserSegments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorRow {
    pub id: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub item_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub seed: u64,
    pub k: usize,
    pub split_time: i64,
    pub metrics: Vec<MetricsReport>,
    pub tiers: Vec<TierReport>,
}

/// One ablation row: a name and the config overrides it applies, as a JSON
/// merge patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationVariant {
    pub name: String,
    pub overrides: Value,
}

pub fn default_ablation_variants() -> Vec<AblationVariant> {
    let v = |name: &str, overrides: Value| AblationVariant {
        name: name.to_string(),
        overrides,
    };
    vec![
        v("full", serde_json::json!({})),
        v("no-balanced-sampler", serde_json::json!({"hgnn": {"balanced_sampler": false}})),
        v("no-weak-signals", serde_json::json!({"two_tower": {"features": {"weak_signals": false}}})),
        v("no-pp-edges", serde_json::json!({"graph": {"keep_pp": false}})),
        v("no-aa-edges", serde_json::json!({"graph": {"keep_aa": false}})),
        v("aa-only", serde_json::json!({"graph": {"keep_ap": false, "keep_pp": false}})),
        v("pp-only-inductive", serde_json::json!({"graph": {"keep_aa": false, "keep_ap": false}})),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub overrides: Value,
    pub config_hash: String,
    pub metrics: Vec<MetricsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub config_hash: String,
    pub seed: u64,
    pub rows: Vec<AblationRow>,
}

/// Fails when `patch` names a key the config does not have, so a typo in an
/// override cannot silently fall back to the default.
fn check_override_keys(base: &Value, patch: &Value, path: &str) -> Result<()> {
    let Value::Object(p) = patch else {
        return Ok(());
    };
    for (k, v) in p {
        let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
        match base.get(k) {
            None => return Err(Error::Config(format!("unknown override key {here}"))),
            Some(b) if b.is_object() => check_override_keys(b, v, &here)?,
            _ => {}
        }
    }
    Ok(())
}

/// `base` with `overrides` merged in.
pub fn apply_overrides(base: &PipelineConfig, overrides: &Value) -> Result<PipelineConfig> {
    let mut doc = serde_json::to_value(base)?;
    check_override_keys(&doc, overrides, "")?;
    json_patch::merge(&mut doc, overrides);
    let cfg: PipelineConfig = serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    /// "hgnn" or "content".
    pub vectors: String,
    pub pairing: Pairing,
    pub summary: Option<ProbeSummary>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub n_pairs: usize,
    pub rows: Vec<ProbeRow>,
}

/// Per-invocation arguments beyond the config.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StageArgs {
    pub user: Option<String>,
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StageOutcome {
    pub artifacts: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub recommendations: Vec<ScoredItem>,
}

/// A validated config bound to an output directory.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    layout: Layout,
}

impl Pipeline {
    /// `seed` and `out_dir`, when given, override the config.
    pub fn new(mut config: PipelineConfig, seed: Option<u64>, out_dir: Option<PathBuf>) -> Result<Self> {
        if let Some(s) = seed {
            config.seed = s;
        }
        if let Some(o) = out_dir {
            config.paths.out_dir = Some(o);
        }
        config.validate()?;
        let root = config
            .paths
            .out_dir
            .clone()
            .ok_or_else(|| Error::Config("no output directory: set paths.out_dir or pass --out".into()))?;
        Ok(Pipeline {
            config,
            layout: Layout::new(root),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn run(&self, stage: Stage, args: &StageArgs) -> Result<StageOutcome> {
        fs::create_dir_all(self.layout.root()).map_err(|e| Error::io(self.layout.root(), e))?;
        write_json(self.layout.resolved_config(), &self.config)?;
        match stage {
            Stage::Synth => self.synth(),
            Stage::Split => self.split(),
            Stage::BuildGraph => self.build_graph(),
            Stage::TrainHgnn => self.train_hgnn(),
            Stage::Embed => self.embed(),
            Stage::TrainTwoTower => self.train_two_tower(),
            Stage::BuildIndex => self.build_index(),
            Stage::Recommend => {
                let user = args
                    .user
                    .as_deref()
                    .ok_or_else(|| Error::Config("recommend needs --user".into()))?;
                Ok(StageOutcome {
                    recommendations: self.recommend(user, args.k.unwrap_or(self.config.eval.k))?,
                    ..Default::default()
                })
            }
            Stage::Evaluate => self.evaluate(),
            Stage::Ablate => self.ablate(),
            Stage::WeakSignals => self.weak_signals(),
            Stage::Probe => self.probe(),
        }
    }

    fn require(&self, path: &Path, stage: Stage) -> Result<PathBuf> {
        if path.is_file() {
            Ok(path.to_path_buf())
        } else {
            Err(Error::MissingArtifact {
                path: path.to_path_buf(),
                stage: stage.name().to_string(),
            })
        }
    }

    fn input_hashes(&self, inputs: &[PathBuf]) -> Result<BTreeMap<String, String>> {
        inputs
            .iter()
            .map(|p| Ok((self.layout.relative(p), sha256_file(p)?)))
            .collect()
    }

    fn key(&self, stage: Stage, inputs: &BTreeMap<String, String>) -> String {
        let mut parts = vec![stage.name().to_string(), self.config.hash(), self.seed().to_string()];
        for (k, v) in inputs {
            parts.push(format!("{k}={v}"));
        }
        sha256_str(&parts.iter().map(String::as_str).collect::<Vec<_>>())
    }

    fn prepare_dir(path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        Ok(())
    }

    /// Writes manifests for artifacts a stage has just produced.
    fn publish(&self, stage: Stage, artifacts: &[PathBuf], inputs: &[PathBuf]) -> Result<StageOutcome> {
        let inputs = self.input_hashes(inputs)?;
        let key = self.key(stage, &inputs);
        let created_at_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        for a in artifacts {
            let m = ArtifactManifest {
                artifact: self.layout.relative(a),
                stage: stage.name().to_string(),
                sha256: sha256_file(a)?,
                key: key.clone(),
                inputs: inputs.clone(),
                config_hash: self.config.hash(),
                seed: self.seed(),
                created_at_unix,
            };
            write_json(Layout::manifest_of(a), &m)?;
        }
        Ok(StageOutcome {
            artifacts: artifacts.to_vec(),
            ..Default::default()
        })
    }

    /// Interactions, catalog and optional users file: from the config when
    /// set, otherwise the `synth` output.
    fn data_paths(&self) -> Result<(PathBuf, PathBuf, Option<PathBuf>)> {
        let p = &self.config.paths;
        match (&p.interactions, &p.catalog) {
            (Some(i), Some(c)) => Ok((i.clone(), c.clone(), p.users.clone())),
            (Some(_), None) | (None, Some(_)) => Err(Error::Config(
                "paths.interactions and paths.catalog must be set together".into(),
            )),
            (None, None) => {
                let i = self.require(&self.layout.interactions(), Stage::Synth)?;
                let c = self.require(&self.layout.catalog(), Stage::Synth)?;
                let u = self.layout.users();
                Ok((i, c, u.is_file().then_some(u)))
            }
        }
    }

    fn data_inputs(&self) -> Result<Vec<PathBuf>> {
        let (i, c, u) = self.data_paths()?;
        Ok([Some(i), Some(c), u].into_iter().flatten().collect())
    }

    fn load_dataset(&self) -> Result<(Dataset, Vec<Diagnostic>)> {
        let (i, c, u) = self.data_paths()?;
        let parsed = parse_interactions(&i)?;
        let catalog = parse_catalog(&c)?;
        let users = match u {
            Some(u) => parse_users(&u)?,
            None => BTreeMap::new(),
        };
        Ok((
            Dataset {
                interactions: parsed.records,
                catalog,
                users,
            },
            parsed.diagnostics,
        ))
    }

    fn load_split(&self) -> Result<DatasetSplit> {
        let train = self.require(&self.layout.train(), Stage::Split)?;
        let holdout = self.require(&self.layout.holdout(), Stage::Split)?;
        let summary = self.require(&self.layout.split_summary(), Stage::Split)?;
        let s: SplitSummary = serde_json::from_str(&fs::read_to_string(&summary).map_err(|e| Error::io(&summary, e))?)?;
        Ok(DatasetSplit {
            train: strict_records(&train)?,
            holdout: strict_records(&holdout)?,
            split_time: s.split_time,
            warnings: s.warnings,
        })
    }

    fn load_graph(&self) -> Result<HeteroGraph> {
        HeteroGraph::load(self.require(&self.layout.graph(), Stage::BuildGraph)?)
    }

    fn load_embeddings(&self) -> Result<NodeEmbeddingTable> {
        NodeEmbeddingTable::read_jsonl(self.require(&self.layout.embeddings(), Stage::Embed)?)
    }

    fn load_prepared(&self) -> Result<Prepared> {
        let split = self.load_split()?;
        let graph = self.load_graph()?;
        let (dataset, _) = self.load_dataset()?;
        Ok(Prepared {
            segments: user_segments(&split),
            dataset,
            split,
            graph,
        })
    }

    fn features(&self) -> FeatureConfig {
        FeatureConfig {
            target: self.config.eval.target,
            ..self.config.two_tower.features.clone()
        }
    }

    fn synth(&self) -> Result<StageOutcome> {
        let d = synth_generate(&self.config.synth, self.seed())?;
        let paths = [self.layout.interactions(), self.layout.catalog(), self.layout.users()];
        Self::prepare_dir(&paths[0])?;
        write_jsonl(&paths[0], &d.interactions)?;
        write_jsonl(&paths[1], d.catalog.iter())?;
        write_jsonl(&paths[2], &d.users)?;
        self.publish(Stage::Synth, &paths, &[])
    }

    fn split(&self) -> Result<StageOutcome> {
        let inputs = self.data_inputs()?;
        let (dataset, diagnostics) = self.load_dataset()?;
        let split = crate::data::timeline_split(
            &dataset.interactions,
            resolve_split_time(&dataset.interactions, &self.config),
        )?;
        let summary = SplitSummary {
            split_time: split.split_time,
            n_train: split.train.len(),
            n_holdout: split.holdout.len(),
            warnings: split.warnings.clone(),
            diagnostics: diagnostics.clone(),
            segments: user_segments(&split),
        };
        let paths = [self.layout.train(), self.layout.holdout(), self.layout.split_summary()];
        Self::prepare_dir(&paths[0])?;
        write_jsonl(&paths[0], &split.train)?;
        write_jsonl(&paths[1], &split.holdout)?;
        write_json(&paths[2], &summary)?;
        let mut out = self.publish(Stage::Split, &paths, &inputs)?;
        out.warnings = split.warnings;
        if let Some(first) = diagnostics.first() {
            out.warnings.push(format!(
                "{} malformed interaction lines skipped (first at line {}: {})",
                diagnostics.len(),
                first.line,
                first.message
            ));
        }
        Ok(out)
    }

    fn build_graph(&self) -> Result<StageOutcome> {
        let split = self.load_split()?;
        let (_, catalog, _) = self.data_paths()?;
        let graph = build_colisten_graph(&split.train, &parse_catalog(&catalog)?, &self.config.graph)?;
        let paths = [self.layout.graph(), self.layout.graph_stats()];
        Self::prepare_dir(&paths[0])?;
        graph.save(&paths[0])?;
        write_json(&paths[1], &graph_stats(&graph))?;
        self.publish(Stage::BuildGraph, &paths, &[self.layout.train(), catalog])
    }

    fn train_hgnn(&self) -> Result<StageOutcome> {
        let graph = self.load_graph()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed());
        let init = HgnnParams::init(graph.feature_dim(), &self.config.hgnn, &mut rng);
        let out = train_hgnn(&graph, init, &self.config.hgnn, self.seed())?;
        let params = self.layout.hgnn_params();
        Self::prepare_dir(&params)?;
        out.params.save(&params)?;
        // Wall times differ between runs, so the log has no manifest.
        write_jsonl(self.layout.hgnn_log(), &out.log)?;
        self.publish(Stage::TrainHgnn, &[params], &[self.layout.graph()])
    }

    fn embed(&self) -> Result<StageOutcome> {
        let graph = self.load_graph()?;
        let params = HgnnParams::load(self.require(&self.layout.hgnn_params(), Stage::TrainHgnn)?)?;
        let (_, catalog, _) = self.data_paths()?;
        let table = embed_catalog(&graph, &params, &parse_catalog(&catalog)?, &self.config.hgnn)?;
        let path = self.layout.embeddings();
        Self::prepare_dir(&path)?;
        table.write_jsonl(&path)?;
        self.publish(
            Stage::Embed,
            &[path],
            &[self.layout.graph(), self.layout.hgnn_params(), catalog],
        )
    }

    fn train_two_tower(&self) -> Result<StageOutcome> {
        let embeddings = self.load_embeddings()?;
        let prep = self.load_prepared()?;
        let cfg = TwoTowerConfig {
            features: self.features(),
            ..self.config.two_tower.clone()
        };
        let run = two_tower(&prep, &embeddings, &cfg, self.seed().wrapping_add(1))?;
        let paths = [self.layout.two_tower_model(), self.layout.user_vectors(), self.layout.item_vectors()];
        Self::prepare_dir(&paths[0])?;
        run.model.save(&paths[0])?;
        write_vectors(&paths[1], &run.user_vectors)?;
        write_vectors(&paths[2], &run.item_vectors)?;
        let mut inputs = vec![self.layout.embeddings(), self.layout.train(), self.layout.holdout()];
        inputs.extend(self.data_inputs()?);
        self.publish(Stage::TrainTwoTower, &paths, &inputs)
    }

    fn build_index(&self) -> Result<StageOutcome> {
        let items = read_vectors(&self.require(&self.layout.item_vectors(), Stage::TrainTwoTower)?)?;
        let index = build_index(items)?;
        let path = self.layout.index();
        Self::prepare_dir(&path)?;
        index.save(&path)?;
        self.publish(Stage::BuildIndex, &[path], &[self.layout.item_vectors()])
    }

    fn load_index(&self) -> Result<RecIndex> {
        RecIndex::load(self.require(&self.layout.index(), Stage::BuildIndex)?)
    }

    /// Top `k` target items for `user`, skipping items they streamed in
    /// train. Users without history or profile go through the user tower
    /// with empty features.
    pub fn recommend(&self, user: &str, k: usize) -> Result<Vec<ScoredItem>> {
        let model = TwoTowerModel::load(self.require(&self.layout.two_tower_model(), Stage::TrainTwoTower)?)?;
        let index = self.load_index()?;
        let embeddings = self.load_embeddings()?;
        let split = self.load_split()?;
        let (dataset, _) = self.load_dataset()?;
        let features = &model.config.features;
        let history: Vec<_> = split.train.iter().filter(|r| r.user_id == user).collect();
        let consumed: BTreeSet<String> = history
            .iter()
            .filter(|r| r.signal == Signal::Stream && r.item_type == features.target)
            .map(|r| r.item_id.clone())
            .collect();
        let uf = assemble_user_features(
            user,
            &history,
            split.split_time,
            &embeddings,
            dataset.users.get(user),
            model.dims.music,
            features,
        );
        let q = model.user_vectors(&[&uf])?;
        Ok(index
            .query_topk(q.row(0), k, &consumed)?
            .into_iter()
            .map(|(item_id, score)| ScoredItem { item_id, score })
            .collect())
    }

    fn evaluate(&self) -> Result<StageOutcome> {
        let embeddings = self.load_embeddings()?;
        let user_vectors = read_vectors(&self.require(&self.layout.user_vectors(), Stage::TrainTwoTower)?)?;
        let index = self.load_index()?;
        let prep = self.load_prepared()?;
        let (target, window_days) = (self.config.eval.target, self.config.split.window_days);
        let (train, window_end) = (&prep.split.train, prep.split.split_time);
        let ctx = EvalContext::new(&prep.split, &prep.segments, &prep.dataset.catalog, target, self.config.eval.k);
        let popularity = Popularity::from_train(train, &prep.dataset.catalog, target, window_end, window_days);
        let without_hgnn = TwoTowerConfig {
            features: FeatureConfig {
                hgnn: false,
                ..self.features()
            },
            ..self.config.two_tower.clone()
        };
        let recommenders: Vec<Box<dyn Recommender>> = vec![
            Box::new(popularity.clone()),
            Box::new(content_knn(train, &prep.dataset.catalog, target, window_end, window_days, popularity.clone())?),
            Box::new(hgnn_knn(train, &embeddings, target, window_end, window_days, popularity)?),
            Box::new(VectorRecommender {
                name: MODEL_2T_HGNN.into(),
                queries: user_vectors,
                index,
                fallback: None,
            }),
            Box::new(two_tower(&prep, &embeddings, &without_hgnn, self.seed().wrapping_add(2))?.recommender(MODEL_2T)?),
        ];
        let users: BTreeSet<String> = ctx.users().cloned().collect();
        let mut metrics = Vec::new();
        let mut tiers = Vec::new();
        for rec in &recommenders {
            let lists = recommend_all(rec.as_ref(), &ctx)?;
            metrics.extend(evaluate_lists(rec.name(), &lists, &ctx)?);
            tiers.push(tiered_metrics(rec.name(), &lists, &ctx, train, &users)?);
        }
        let report = EvalReport {
            config_hash: self.config.hash(),
            seed: self.seed(),
            k: self.config.eval.k,
            split_time: window_end,
            metrics,
            tiers,
        };
        let paths = [self.layout.eval_report(), self.layout.eval_csv()];
        Self::prepare_dir(&paths[0])?;
        write_json(&paths[0], &report)?;
        write_file(&paths[1], &metrics_csv(&report.metrics, &report.config_hash)?)?;
        let mut inputs = vec![
            self.layout.embeddings(),
            self.layout.user_vectors(),
            self.layout.index(),
            self.layout.train(),
            self.layout.holdout(),
            self.layout.graph(),
        ];
        inputs.extend(self.data_inputs()?);
        self.publish(Stage::Evaluate, &paths, &inputs)
    }

    fn ablation_variants(&self) -> Result<Vec<AblationVariant>> {
        match &self.config.paths.ablation {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
            }
            None => Ok(default_ablation_variants()),
        }
    }

    /// Runs every ablation variant in memory on the same inputs. Rows are
    /// cached under `ablate/cache/` by variant config and input hashes.
    fn ablate(&self) -> Result<StageOutcome> {
        let variants = self.ablation_variants()?;
        let configs = variants
            .iter()
            .map(|v| apply_overrides(&self.config, &v.overrides))
            .collect::<Result<Vec<_>>>()?;
        let inputs = self.data_inputs()?;
        let hashes = self.input_hashes(&inputs)?;
        let (dataset, _) = self.load_dataset()?;
        let mut rows = Vec::with_capacity(variants.len());
        for (v, cfg) in variants.iter().zip(&configs) {
            let mut parts = vec![cfg.hash()];
            parts.extend(hashes.values().cloned());
            let key = sha256_str(&parts.iter().map(String::as_str).collect::<Vec<_>>());
            let cached = self.layout.ablation_cache(&key);
            let metrics = match fs::read_to_string(&cached) {
                Ok(text) => serde_json::from_str(&text)?,
                Err(_) => {
                    let metrics = ablation_metrics(dataset.clone(), cfg)?;
                    Self::prepare_dir(&cached)?;
                    write_json(&cached, &metrics)?;
                    metrics
                }
            };
            rows.push(AblationRow {
                variant: v.name.clone(),
                overrides: v.overrides.clone(),
                config_hash: cfg.hash(),
                metrics,
            });
        }
        let report = AblationReport {
            config_hash: self.config.hash(),
            seed: self.seed(),
            rows,
        };
        let csv_rows: Vec<MetricsReport> = report
            .rows
            .iter()
            .flat_map(|r| {
                r.metrics.iter().map(|m| MetricsReport {
                    model: r.variant.clone(),
                    ..m.clone()
                })
            })
            .collect();
        let paths = [self.layout.ablation_variants(), self.layout.ablation_report(), self.layout.ablation_csv()];
        Self::prepare_dir(&paths[0])?;
        write_json(&paths[0], &variants)?;
        write_json(&paths[1], &report)?;
        write_file(&paths[2], &metrics_csv(&csv_rows, &report.config_hash)?)?;
        self.publish(Stage::Ablate, &paths, &inputs)
    }

    fn weak_signals(&self) -> Result<StageOutcome> {
        let inputs = self.data_inputs()?;
        let (dataset, _) = self.load_dataset()?;
        let cutoff = resolve_split_time(&dataset.interactions, &self.config)
            .ok_or_else(|| Error::Empty("no interactions".into()))?;
        let report = weak_signal_analysis(&dataset.interactions, cutoff)?;
        let path = self.layout.weak_signals();
        Self::prepare_dir(&path)?;
        write_json(&path, &report)?;
        self.publish(Stage::WeakSignals, &[path], &inputs)
    }

    fn probe(&self) -> Result<StageOutcome> {
        let graph = self.load_graph()?;
        let embeddings = self.load_embeddings()?;
        let (_, catalog_path, _) = self.data_paths()?;
        let catalog = parse_catalog(&catalog_path)?;
        let n_pairs = self.config.eval.probe_pairs;
        let mut rows = Vec::new();
        for vectors in ["hgnn", "content"] {
            for pairing in [Pairing::CoListened, Pairing::SharedPodcastOnly, Pairing::Random] {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed());
                let result = match vectors {
                    "hgnn" => pair_similarity_probe(&graph, |id| embeddings.get(id), pairing, n_pairs, &mut rng),
                    _ => pair_similarity_probe(
                        &graph,
                        |id| catalog.get(id).map(|it| it.content_vector.as_slice()),
                        pairing,
                        n_pairs,
                        &mut rng,
                    ),
                };
                let (summary, skipped) = match result {
                    Ok(s) => (Some(s), None),
                    Err(Error::Empty(reason)) => (None, Some(reason)),
                    Err(e) => return Err(e),
                };
                rows.push(ProbeRow {
                    vectors: vectors.to_string(),
                    pairing,
                    summary,
                    skipped,
                });
            }
        }
        let path = self.layout.probe();
        Self::prepare_dir(&path)?;
        write_json(&path, &ProbeReport { n_pairs, rows })?;
        self.publish(
            Stage::Probe,
            &[path],
            &[self.layout.graph(), self.layout.embeddings(), catalog_path],
        )
    }
}

/// The 2T-HGNN metrics of one ablation variant, trained from scratch.
fn ablation_metrics(dataset: Dataset, config: &PipelineConfig) -> Result<Vec<MetricsReport>> {
    let prep = prepare(dataset, config)?;
    let (_, embeddings) = hgnn_embeddings(&prep, config, config.seed)?;
    let cfg = TwoTowerConfig {
        features: FeatureConfig {
            target: config.eval.target,
            ..config.two_tower.features.clone()
        },
        ..config.two_tower.clone()
    };
    let run = two_tower(&prep, &embeddings, &cfg, config.seed.wrapping_add(1))?;
    let ctx = EvalContext::new(&prep.split, &prep.segments, &prep.dataset.catalog, config.eval.target, config.eval.k);
    evaluate(&run.recommender(MODEL_2T_HGNN)?, &ctx)
}

/// Pipeline-written record files must parse cleanly.
fn strict_records(path: &Path) -> Result<Vec<crate::data::InteractionRecord>> {
    let parsed = parse_interactions(path)?;
    if let Some(d) = parsed.diagnostics.first() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: d.line,
            message: d.message.clone(),
        });
    }
    Ok(parsed.records)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_vectors(path: &Path, vectors: &BTreeMap<String, Vec<f64>>) -> Result<()> {
    let rows: Vec<VectorRow> = vectors
        .iter()
        .map(|(id, v)| VectorRow {
            id: id.clone(),
            vector: v.clone(),
        })
        .collect();
    write_jsonl(path, &rows)
}

pub fn read_vectors(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row: VectorRow = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.insert(row.id, row.vector);
    }
    Ok(out)
}
