use serde::{Deserialize, Serialize};

use crate::model::ModelConfig;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub config: ModelConfig,
    /// Mean validation criterion over folds; `None` if the point failed.
    pub criterion: Option<f64>,
}

/// Scores every grid point by its mean validation criterion over `n_folds`
/// folds and returns the lowest-scoring configuration. `train(point, fold)`
/// returns the best validation criterion reached on that fold. Points whose
/// training fails on any fold are excluded.
pub fn run_grid_search<F>(points: &[ModelConfig], n_folds: usize, mut train: F) -> Result<(ModelConfig, Vec<GridScore>)>
where
    F: FnMut(&ModelConfig, usize) -> Result<f64>,
{
    if points.is_empty() {
        return Err(Error::Config("the architecture grid is empty".into()));
    }
    if points.len() == 1 {
        return Ok((points[0].clone(), vec![GridScore { config: points[0].clone(), criterion: None }]));
    }
    let mut scores = Vec::with_capacity(points.len());
    for p in points {
        let mut total = 0.0;
        let mut failed = false;
        for fold in 0..n_folds {
            match train(p, fold) {
                Ok(c) if c.is_finite() => total += c,
                Ok(c) => {
                    log::warn!("grid point {p:?} fold {fold}: criterion {c}; point excluded");
                    failed = true;
                    break;
                }
                Err(e) => {
                    log::warn!("grid point {p:?} fold {fold} failed: {e}; point excluded");
                    failed = true;
                    break;
                }
            }
        }
        let criterion = (!failed).then(|| total / n_folds as f64);
        scores.push(GridScore { config: p.clone(), criterion });
    }
    let best = scores
        .iter()
        .filter_map(|s| s.criterion.map(|c| (c, &s.config)))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c.clone())
        .ok_or_else(|| Error::Config("every grid point failed to train".into()))?;
    Ok((best, scores))
}
