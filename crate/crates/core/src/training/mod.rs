//! Training: expansion of subjects into (reference visit, target year)
//! samples, visit-drop augmentation, cell re-weighting, weighted
//! cross-entropy with an L2 penalty, Adam, and early stopping on the mean
//! validation loss over all history scenarios.

mod adam;
mod augment;
mod loss;
mod samples;
mod scenarios;
mod train;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState};
pub use augment::augment_sequence;
pub use loss::{cross_entropy_logit_grad, weighted_cross_entropy, weighted_loss};
pub use samples::{
    compute_sample_weights, expand_dataset, expand_dataset_ablated, expansion_ratio, SampleGroup, TrajectorySample,
    MAX_HORIZON, MAX_LOOKBACK,
};
pub use scenarios::{enumerate_history_scenarios, HistoryScenario};
pub use train::{predict_histories, train_model, validation_criterion, EpochLog, EpochRecord, TrainingSet};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub augment_apply_prob: f64,
    pub visit_drop_prob: f64,
    /// Whether augmentation may also drop the reference visit.
    pub drop_reference_visit: bool,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            l2: 1e-4,
            batch_size: 32,
            augment_apply_prob: 0.8,
            visit_drop_prob: 0.5,
            drop_reference_visit: true,
            max_epochs: 100,
            patience: 10,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(self.l2 >= 0.0) {
            return Err(Error::Config(format!("l2 weight {} must be nonnegative", self.l2)));
        }
        if !(0.0..=1.0).contains(&self.augment_apply_prob) {
            return Err(Error::Config(format!("augmentation probability {} outside [0, 1]", self.augment_apply_prob)));
        }
        if !(0.0..1.0).contains(&self.visit_drop_prob) {
            return Err(Error::Config(format!("visit drop probability {} outside [0, 1)", self.visit_drop_prob)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch size and max epochs must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
