//! Visit encoding: missingness masks, train-fitted imputation, one-hot and
//! z-score encoding, modality cases, and horizon-conditioned tokens.

pub mod cache;
mod encode;
mod schema;
mod stats;
mod table;
mod tokens;

pub use encode::{append_horizon, apply_modality_case, encode_visit, EncodedVisit, ModalityCase};
pub use schema::{FeatureDescriptor, FeatureKind, FeatureSchema, Modality};
pub use stats::{fit_imputation_stats, FeatureStats, ImputationStats};
pub use table::VisitTable;
pub use tokens::{build_token_sequence, TokenBatch, TokenSequence, MAX_HISTORY_TOKENS};
