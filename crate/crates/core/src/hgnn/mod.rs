//! Heterogeneous GraphSAGE over the co-listening graph.

pub mod embed;
pub mod forward;
pub mod layers;
pub mod loss;
pub mod params;
pub mod sampling;
pub mod train;

pub use embed::{embed_all, embed_catalog, EmbeddingRow, NodeEmbeddingTable};
pub use forward::{backward_block, forward, forward_block, full_graph_forward, isolated_forward, NodeOutput};
pub use layers::{aggregate_relation, update_node};
pub use loss::{batch_hinge, hinge_loss, Triple};
pub use params::{HgnnConfig, HgnnParams};
pub use sampling::{
    balanced_edge_sample, sample_block, sample_negatives, sample_neighborhood, SampledNeighborhood,
};
pub use train::{train_hgnn, EpochLog, HgnnTrainOutput};
