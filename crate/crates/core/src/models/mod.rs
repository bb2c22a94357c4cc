//! The three active-user detection systems and their training.
//!
//! * preamble-based: trainable preamble table + detector on `y_p`;
//! * data-aided joint: trainable table + extraction network on the data
//!   observations + detector on `[alpha | y_p]`;
//! * data-aided independent: the same receiver on a frozen preamble set.

mod independent;
mod system;
mod table;
mod train;

pub use independent::{gen_independent_preambles, with_association, zadoff_chu, PreambleKind};
pub use system::{
    audn_data_aided_forward, audn_preamble_forward, data_features, front_end_scale, hard_decision, network_specs,
    preamble_features, uaen_forward, AudSystem, PreambleSource, Variant, DECISION_THRESHOLD, NOISE_STD_FLOOR,
};
pub use table::{pgn_forward, preamble_matrix, PreambleTable};
pub use train::{
    raw_data_batch, raw_preamble_batch, train, LossEvaluation, SystemGradients, TrainBatch, TrainConfig, TrainingLog,
};
