use std::path::PathBuf;

use ndarray::Array2;

use crate::features::VisitTable;
use crate::model::checkpoint::load_checkpoint;
use crate::model::ModelParams;
use crate::training::predict_histories;
use crate::{Error, Result};

/// Model snapshots whose softmax outputs are averaged.
#[derive(Clone, Debug)]
pub struct Ensemble {
    members: Vec<ModelParams>,
    schema_hash: String,
}

impl Ensemble {
    pub fn new(members: Vec<ModelParams>, schema_hash: impl Into<String>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Config("an ensemble needs at least one model".into()));
        }
        Ok(Self { members, schema_hash: schema_hash.into() })
    }

    /// Loads checkpoints that must all share one schema hash (and match
    /// `expected_schema_hash` when given).
    pub fn from_checkpoints(stems: &[PathBuf], expected_schema_hash: Option<&str>) -> Result<Self> {
        let mut members = Vec::with_capacity(stems.len());
        let mut hash: Option<String> = expected_schema_hash.map(str::to_string);
        for stem in stems {
            let ckpt = load_checkpoint(stem, hash.as_deref())?;
            hash.get_or_insert(ckpt.manifest.schema_hash);
            members.push(ckpt.params);
        }
        Self::new(members, hash.unwrap_or_default())
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[ModelParams] {
        &self.members
    }

    pub fn schema_hash(&self) -> &str {
        &self.schema_hash
    }
}

/// Mean class probabilities over the ensemble for each request.
pub fn ensemble_predict(
    ensemble: &Ensemble,
    table: &VisitTable,
    requests: &[(&str, &[u32], u32, u32)],
) -> Result<Array2<f64>> {
    if table.schema_hash() != ensemble.schema_hash {
        return Err(Error::SchemaMismatch {
            expected: ensemble.schema_hash.clone(),
            found: table.schema_hash().to_string(),
        });
    }
    let mut sum: Option<Array2<f64>> = None;
    for m in &ensemble.members {
        let p = predict_histories(m, table, requests)?;
        match &mut sum {
            Some(s) => *s += &p,
            None => sum = Some(p),
        }
    }
    let mut mean = sum.expect("nonempty ensemble");
    mean /= ensemble.members.len() as f64;
    Ok(mean)
}
