use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec;
use crate::error::{Error, Result};
use crate::graph::Relation;
use crate::linalg::{Matrix, Parameters};

/// HGNN architecture and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HgnnConfig {
    pub layers: usize,
    pub hidden_dim: usize,
    pub out_dim: usize,
    pub margin: f64,
    /// Neighbors sampled per relation, starting at the hop nearest the seed.
    pub fanouts: Vec<usize>,
    pub negatives: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    /// Undersample majority relations every epoch.
    pub balanced_sampler: bool,
    /// At inference, nodes with degree up to this cap use their full
    /// neighborhood; larger neighborhoods are sampled down to it.
    pub inference_degree_cap: usize,
    pub inference_seed: u64,
}

impl Default for HgnnConfig {
    fn default() -> Self {
        HgnnConfig {
            layers: 2,
            hidden_dim: 64,
            out_dim: 64,
            margin: 0.4,
            fanouts: vec![15, 10],
            negatives: 10,
            lr: 1e-3,
            batch_size: 256,
            max_epochs: 50,
            patience: 10,
            validation_fraction: 0.1,
            balanced_sampler: true,
            inference_degree_cap: 64,
            inference_seed: 0x5eed,
        }
    }
}

impl HgnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("hgnn.layers must be positive".into()));
        }
        if self.fanouts.len() != self.layers || self.fanouts.contains(&0) {
            return Err(Error::Config(format!(
                "hgnn.fanouts needs {} positive entries, got {:?}",
                self.layers, self.fanouts
            )));
        }
        if self.hidden_dim == 0 || self.out_dim == 0 {
            return Err(Error::Config("hgnn dimensions must be positive".into()));
        }
        if self.margin < 0.0 {
            return Err(Error::Config("hgnn.margin must be non-negative".into()));
        }
        if self.negatives == 0 || self.batch_size == 0 {
            return Err(Error::Config("hgnn.negatives and batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("hgnn.validation_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Layer widths from the input features to the output embedding.
    pub fn dims(&self, in_dim: usize) -> Vec<usize> {
        let mut d = vec![in_dim];
        d.extend(std::iter::repeat_n(self.hidden_dim, self.layers - 1));
        d.push(self.out_dim);
        d
    }
}

/// One message-passing layer: per directed relation an aggregation
/// transform `W_r`, `b_r`, and per destination node type a self transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HgnnLayer {
    pub rel_weight: Vec<Matrix>,
    pub rel_bias: Vec<Vec<f64>>,
    pub self_weight: Vec<Matrix>,
}

impl HgnnLayer {
    fn zeros(d_in: usize, d_out: usize) -> Self {
        HgnnLayer {
            rel_weight: vec![Matrix::zeros(d_out, d_in); Relation::COUNT],
            rel_bias: vec![vec![0.0; d_out]; Relation::COUNT],
            self_weight: vec![Matrix::zeros(d_out, d_in); 2],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.self_weight[0].cols
    }

    pub fn out_dim(&self) -> usize {
        self.self_weight[0].rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HgnnParams {
    pub layers: Vec<HgnnLayer>,
}

const MAGIC: &[u8; 8] = b"HGNNCKPT";
const VERSION: u32 = 1;

impl HgnnParams {
    /// Glorot-uniform weights and zero biases.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, config: &HgnnConfig, rng: &mut R) -> Self {
        let dims = config.dims(in_dim);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (d_in, d_out) = (w[0], w[1]);
                HgnnLayer {
                    rel_weight: (0..Relation::COUNT)
                        .map(|_| Matrix::glorot(d_out, d_in, rng))
                        .collect(),
                    rel_bias: vec![vec![0.0; d_out]; Relation::COUNT],
                    self_weight: (0..2).map(|_| Matrix::glorot(d_out, d_in, rng)).collect(),
                }
            })
            .collect();
        HgnnParams { layers }
    }

    pub fn zeros_like(&self) -> Self {
        HgnnParams {
            layers: self
                .layers
                .iter()
                .map(|l| HgnnLayer::zeros(l.in_dim(), l.out_dim()))
                .collect(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").out_dim()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
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

impl Parameters for HgnnParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.rel_weight.iter().map(|m| m.data.as_slice()));
            out.extend(l.rel_bias.iter().map(Vec::as_slice));
            out.extend(l.self_weight.iter().map(|m| m.data.as_slice()));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.extend(l.rel_weight.iter_mut().map(|m| m.data.as_mut_slice()));
            out.extend(l.rel_bias.iter_mut().map(Vec::as_mut_slice));
            out.extend(l.self_weight.iter_mut().map(|m| m.data.as_mut_slice()));
        }
        out
    }
}
