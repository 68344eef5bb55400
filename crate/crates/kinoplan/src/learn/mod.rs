//! Imitation of the curation process with a small feedforward network.
//!
//! Three encoders embed the vehicle state, the local occupancy grid, and
//! the local heuristic grid. Head 0 predicts the exploitative maneuver from
//! all three embeddings; each later head k predicts one exploratory
//! maneuver from the state and occupancy embeddings plus the maneuvers
//! already predicted (the heuristic embedding is dropped there, since it
//! carries no signal for coverage-seeking controls). Training, gradients,
//! and the optimizer are implemented from scratch so they can be verified
//! against finite differences.

mod dataset;
mod net;
mod provider;
mod train;

pub use dataset::{
    encode_record, environment_for_id, generate_dataset, load_dataset, normalize_maneuver,
    record_curation_seed, record_is_valid, revalidate_record, save_dataset, state_features,
    Dataset, DatasetGenConfig, DatasetMeta, DatasetRecord, EncodeConfig,
};
pub use net::{
    denormalize_maneuver, forward, forward_outputs, load_model, save_model, DataError, ModelDims,
    ModelParams, NetInput, Trace, MANEUVER_DIM,
};
pub use provider::{LearnedMode, LearnedProvider};
pub use train::{backward_batch, loss_batch, masked_mse, train, TrainConfig, TrainError, TrainReport};
