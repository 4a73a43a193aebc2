use ndarray::Array2;

use crate::cohort::Diagnosis;
use crate::model::ModelParams;

const MIN_PROB: f64 = 1e-12;

/// Weighted mean cross-entropy plus `l2 * sum(theta^2)` over every learnable value.
pub fn weighted_loss(probs: &Array2<f64>, targets: &[Diagnosis], weights: &[f64], params: &ModelParams, l2: f64) -> f64 {
    let data = weighted_cross_entropy(probs, targets, weights);
    if l2 == 0.0 {
        data
    } else {
        data + l2 * params.squared_norm()
    }
}

pub fn weighted_cross_entropy(probs: &Array2<f64>, targets: &[Diagnosis], weights: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut wsum = 0.0;
    for (i, (&y, &w)) in targets.iter().zip(weights).enumerate() {
        let mut p = probs[[i, y.index()]];
        if p < MIN_PROB {
            log::warn!("probability {p:e} for the true class clamped to {MIN_PROB:e}");
            p = MIN_PROB;
        }
        total -= w * p.ln();
        wsum += w;
    }
    total / wsum
}

/// Gradient of [`weighted_cross_entropy`] w.r.t. the logits.
pub fn cross_entropy_logit_grad(probs: &Array2<f64>, targets: &[Diagnosis], weights: &[f64]) -> Array2<f64> {
    let wsum: f64 = weights.iter().sum();
    let mut g = probs.clone();
    for (i, (&y, &w)) in targets.iter().zip(weights).enumerate() {
        g[[i, y.index()]] -= 1.0;
        g.row_mut(i).mapv_inplace(|v| v * w / wsum);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ClassifierShape, ModelConfig};
    use ndarray::array;
    use Diagnosis::*;

    fn params() -> ModelParams {
        init_params(&ModelConfig::new(3, 4, 1, 1, ClassifierShape::Linear), 0).unwrap()
    }

    #[test]
    fn perfect_and_uniform() {
        let p = params();
        let perfect = array![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(weighted_loss(&perfect, &[CN, AD], &[1.0, 3.0], &p, 0.0), 0.0);
        let uniform = Array2::from_elem((2, 3), 1.0 / 3.0);
        assert!((weighted_loss(&uniform, &[CN, MCI], &[1.0, 2.0], &p, 0.0) - 3f64.ln()).abs() < 1e-15);
        let with_l2 = weighted_loss(&uniform, &[CN, MCI], &[1.0, 2.0], &p, 0.5);
        assert!((with_l2 - 3f64.ln() - 0.5 * p.squared_norm()).abs() < 1e-12);
    }

    #[test]
    fn duplicate_with_half_weight_is_invariant() {
        let probs = array![[0.2, 0.5, 0.3], [0.6, 0.3, 0.1]];
        let dup = array![[0.2, 0.5, 0.3], [0.6, 0.3, 0.1], [0.6, 0.3, 0.1]];
        let a = weighted_cross_entropy(&probs, &[MCI, CN], &[1.0, 2.0]);
        let b = weighted_cross_entropy(&dup, &[MCI, CN, CN], &[1.0, 1.0, 1.0]);
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn zero_probability_is_clamped() {
        let probs = array![[0.0, 1.0, 0.0]];
        assert!((weighted_cross_entropy(&probs, &[CN], &[1.0]) + 1e-12f64.ln()).abs() < 1e-9);
    }
}
