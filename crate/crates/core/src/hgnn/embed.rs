use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forward::{forward_block, isolated_forward};
use super::params::{HgnnConfig, HgnnParams};
use super::sampling::sample_block;
use crate::data::io::write_jsonl;
use crate::data::{Catalog, ItemType};
use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::linalg::Matrix;

/// One exported embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub item_id: String,
    pub item_type: ItemType,
    pub embedding: Vec<f64>,
    /// Computed from content features alone (node absent from the graph).
    #[serde(default)]
    pub inductive: bool,
    /// Final state vanished; the embedding is the first basis vector.
    #[serde(default)]
    pub fallback: bool,
}

/// Output embeddings per node type, row-aligned with a per-type id list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEmbeddingTable {
    dim: usize,
    ids: [Vec<String>; 2],
    rows: [Matrix; 2],
    inductive: [Vec<bool>; 2],
    fallback: [Vec<bool>; 2],
    index: BTreeMap<String, (ItemType, usize)>,
}

impl NodeEmbeddingTable {
    pub fn from_rows(dim: usize, rows: impl IntoIterator<Item = EmbeddingRow>) -> Result<Self> {
        let mut per_type: [Vec<EmbeddingRow>; 2] = Default::default();
        for r in rows {
            if r.embedding.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: r.embedding.len(),
                    context: format!("embedding of {}", r.item_id),
                });
            }
            per_type[r.item_type.index()].push(r);
        }
        let mut table = NodeEmbeddingTable {
            dim,
            ids: Default::default(),
            rows: [Matrix::zeros(0, dim), Matrix::zeros(0, dim)],
            inductive: Default::default(),
            fallback: Default::default(),
            index: BTreeMap::new(),
        };
        for ty in ItemType::ALL {
            let t = ty.index();
            let mut list = std::mem::take(&mut per_type[t]);
            list.sort_by(|a, b| a.item_id.cmp(&b.item_id));
            let mut data = Vec::with_capacity(list.len() * dim);
            for (i, r) in list.into_iter().enumerate() {
                if table.index.insert(r.item_id.clone(), (ty, i)).is_some() {
                    return Err(Error::Invalid(format!("duplicate embedding for {}", r.item_id)));
                }
                data.extend_from_slice(&r.embedding);
                table.ids[t].push(r.item_id);
                table.inductive[t].push(r.inductive);
                table.fallback[t].push(r.fallback);
            }
            table.rows[t] = Matrix::from_vec(table.ids[t].len(), dim, data);
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index
            .get(id)
            .map(|&(t, i)| self.rows[t.index()].row(i))
    }

    pub fn is_inductive(&self, id: &str) -> bool {
        self.index
            .get(id)
            .is_some_and(|&(t, i)| self.inductive[t.index()][i])
    }

    pub fn ids(&self, ty: ItemType) -> &[String] {
        &self.ids[ty.index()]
    }

    pub fn matrix(&self, ty: ItemType) -> &Matrix {
        &self.rows[ty.index()]
    }

    pub fn rows(&self) -> impl Iterator<Item = EmbeddingRow> + '_ {
        ItemType::ALL.into_iter().flat_map(move |ty| {
            let t = ty.index();
            (0..self.ids[t].len()).map(move |i| EmbeddingRow {
                item_id: self.ids[t][i].clone(),
                item_type: ty,
                embedding: self.rows[t].row(i).to_vec(),
                inductive: self.inductive[t][i],
                fallback: self.fallback[t][i],
            })
        })
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let rows: Vec<EmbeddingRow> = self.rows().collect();
        write_jsonl(path, &rows)
    }

    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: EmbeddingRow = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            rows.push(r);
        }
        let dim = rows.first().map_or(0, |r| r.embedding.len());
        NodeEmbeddingTable::from_rows(dim, rows)
    }
}

/// Embeds every graph node. Neighborhoods up to `inference_degree_cap`
/// are used whole; larger ones are sampled with the fixed inference seed.
pub fn embed_all(graph: &HeteroGraph, params: &HgnnParams, config: &HgnnConfig) -> Result<NodeEmbeddingTable> {
    let seeds: Vec<usize> = (0..graph.num_nodes()).collect();
    let fanouts = vec![config.inference_degree_cap.max(1); params.num_layers()];
    let mut rng = ChaCha8Rng::seed_from_u64(config.inference_seed);
    let block = sample_block(graph, &seeds, &fanouts, &mut rng);
    let f = forward_block(graph, params, &block)?;
    let rows = seeds.iter().map(|&g| {
        let p = block.seed_pos[g];
        EmbeddingRow {
            item_id: graph.id(g).to_string(),
            item_type: graph.node_type(g),
            embedding: f.z.row(p).to_vec(),
            inductive: false,
            fallback: f.fallback[p],
        }
    });
    NodeEmbeddingTable::from_rows(params.out_dim(), rows.collect::<Vec<_>>())
}

/// [`embed_all`] plus content-only embeddings for catalog items that are
/// not in the graph.
pub fn embed_catalog(
    graph: &HeteroGraph,
    params: &HgnnParams,
    catalog: &Catalog,
    config: &HgnnConfig,
) -> Result<NodeEmbeddingTable> {
    let mut rows: Vec<EmbeddingRow> = embed_all(graph, params, config)?.rows().collect();
    for item in catalog.iter() {
        if graph.index_of(&item.item_id).is_some() {
            continue;
        }
        let (z, fallback) = isolated_forward(params, item.item_type, &item.content_vector)?;
        rows.push(EmbeddingRow {
            item_id: item.item_id.clone(),
            item_type: item.item_type,
            embedding: z,
            inductive: true,
            fallback,
        });
    }
    NodeEmbeddingTable::from_rows(params.out_dim(), rows)
}
