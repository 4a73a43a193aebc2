use rand::Rng;

use super::{TrainingConfig, TrajectorySample};

/// Randomly drops visits from a sample's history.
///
/// With probability `augment_apply_prob` each droppable visit is removed
/// independently with probability `visit_drop_prob`; draws that leave no visit
/// are redrawn. Otherwise the sample is returned unchanged.
pub fn augment_sequence<R: Rng>(sample: &TrajectorySample, cfg: &TrainingConfig, rng: &mut R) -> TrajectorySample {
    let mut out = sample.clone();
    if !(rng.random::<f64>() < cfg.augment_apply_prob) {
        return out;
    }
    let droppable = |y: u32| cfg.drop_reference_visit || y != sample.now_year;
    if sample.history.iter().all(|&y| !droppable(y)) {
        return out;
    }
    loop {
        out.history.clear();
        for &y in &sample.history {
            if !droppable(y) || rng.random::<f64>() >= cfg.visit_drop_prob {
                out.history.push(y);
            }
        }
        if !out.history.is_empty() {
            return out;
        }
    }
}
