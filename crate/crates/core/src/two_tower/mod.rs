//! Two-tower retrieval model over user and item features.

pub mod features;
pub mod loss;
pub mod tower;
pub mod train;
pub mod vocab;

pub use features::{
    assemble_all_users, assemble_item_features, assemble_user_features, training_pairs, FeatureConfig, InputDims,
    ItemFeatures, UserFeatures,
};
pub use loss::{batch_weights, in_batch_loss, loss_2t};
pub use tower::{Tower, TowerInput, Towers};
pub use train::{
    export_item_vectors, export_user_vectors, train_2t, TwoTowerConfig, TwoTowerEpochLog, TwoTowerModel,
    TwoTowerTrainOutput,
};
pub use vocab::{Vocab, OOV_TOKEN};
