use std::fmt::Write as _;

use ndarray::Array2;
use rand::seq::SliceRandom;

use super::{
    adam_step, augment_sequence, cross_entropy_logit_grad, enumerate_history_scenarios, weighted_cross_entropy,
    AdamState, HistoryScenario, TrainingConfig, TrajectorySample,
};
use crate::cohort::Diagnosis;
use crate::features::{TokenBatch, TokenSequence, VisitTable, MAX_HISTORY_TOKENS};
use crate::model::{backward, forward, init_params, ModelConfig, ModelParams, Mode};
use crate::seed::{derive_seed, rng_for, stream};
use crate::{Error, Result};

/// Histories are scored in chunks of this many sequences.
const PREDICT_CHUNK: usize = 512;

/// Class probabilities for each `(subject, history years, now, target)` request.
pub fn predict_histories(
    params: &ModelParams,
    table: &VisitTable,
    requests: &[(&str, &[u32], u32, u32)],
) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((requests.len(), crate::model::N_CLASSES));
    for (c, chunk) in requests.chunks(PREDICT_CHUNK).enumerate() {
        let seqs = chunk
            .iter()
            .map(|&(id, years, now, target)| table.sequence(id, years, now, target))
            .collect::<Result<Vec<TokenSequence>>>()?;
        let refs: Vec<&TokenSequence> = seqs.iter().collect();
        let batch = TokenBatch::from_sequences(&refs, None)?;
        let (probs, _) = forward(params, &batch, Mode::Eval)?;
        out.slice_mut(ndarray::s![c * PREDICT_CHUNK..c * PREDICT_CHUNK + chunk.len(), ..]).assign(&probs);
    }
    Ok(out)
}

/// Weighted validation loss under each history scenario, and their mean over
/// the scenarios that retained at least one sample.
pub fn validation_criterion(
    params: &ModelParams,
    table: &VisitTable,
    samples: &[TrajectorySample],
    scenarios: &[HistoryScenario],
) -> Result<(f64, Vec<f64>)> {
    let mut per_scenario = Vec::with_capacity(scenarios.len());
    for scenario in scenarios {
        let kept: Vec<(Vec<u32>, &TrajectorySample)> = samples
            .iter()
            .map(|s| (scenario.restrict(&s.history, s.now_year), s))
            .filter(|(h, _)| !h.is_empty())
            .collect();
        if kept.is_empty() {
            log::warn!("scenario {scenario} leaves no validation sample");
            per_scenario.push(f64::NAN);
            continue;
        }
        let requests: Vec<(&str, &[u32], u32, u32)> =
            kept.iter().map(|(h, s)| (s.subject_id.as_str(), h.as_slice(), s.now_year, s.target_year)).collect();
        let probs = predict_histories(params, table, &requests)?;
        let targets: Vec<Diagnosis> = kept.iter().map(|(_, s)| s.target).collect();
        let weights: Vec<f64> = kept.iter().map(|(_, s)| s.weight).collect();
        per_scenario.push(weighted_cross_entropy(&probs, &targets, &weights));
    }
    let valid: Vec<f64> = per_scenario.iter().copied().filter(|x| !x.is_nan()).collect();
    if valid.is_empty() {
        return Err(Error::Config("no validation scenario has an evaluable sample".into()));
    }
    Ok((valid.iter().sum::<f64>() / valid.len() as f64, per_scenario))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub scenario_losses: Vec<f64>,
    pub criterion: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpochLog {
    pub records: Vec<EpochRecord>,
    /// Index into `records` of the returned snapshot.
    pub best: usize,
}

impl EpochLog {
    pub fn to_csv(&self) -> String {
        let n = self.records.first().map_or(0, |r| r.scenario_losses.len());
        let mut out = String::from("epoch,train_loss");
        for k in 1..=n {
            write!(out, ",val_scenario_{k:02}").unwrap();
        }
        out.push_str(",criterion\n");
        for r in &self.records {
            write!(out, "{},{}", r.epoch, r.train_loss).unwrap();
            for l in &r.scenario_losses {
                write!(out, ",{l}").unwrap();
            }
            writeln!(out, ",{}", r.criterion).unwrap();
        }
        out
    }
}

/// Encoded visits plus the train/validation samples drawn from them.
pub struct TrainingSet<'a> {
    pub table: &'a VisitTable,
    pub train: &'a [TrajectorySample],
    pub val: &'a [TrajectorySample],
    /// Age standardization of the training data.
    pub age_center: f64,
    pub age_scale: f64,
}

/// Trains one network and returns the snapshot with the lowest validation
/// criterion together with the per-epoch log.
pub fn train_model(
    data: &TrainingSet<'_>,
    model_cfg: &ModelConfig,
    cfg: &TrainingConfig,
    seed: u64,
) -> Result<(ModelParams, EpochLog)> {
    cfg.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::Config("training and validation samples must be nonempty".into()));
    }
    let mut params = init_params(model_cfg, derive_seed(seed, &[stream::INIT]))?;
    params.set_age_scaling(data.age_center, data.age_scale);
    let mut adam = AdamState::new(params.n_params());
    let mut shuffle_rng = rng_for(seed, &[stream::SHUFFLE]);
    let mut augment_rng = rng_for(seed, &[stream::AUGMENT]);
    let mut dropout_rng = rng_for(seed, &[stream::DROPOUT]);
    let scenarios = enumerate_history_scenarios(MAX_HISTORY_TOKENS);

    let mut log = EpochLog::default();
    let mut best = params.clone();
    let mut best_criterion = f64::INFINITY;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut weight_sum = 0.0;
        for batch_idx in order.chunks(cfg.batch_size) {
            let samples: Vec<TrajectorySample> =
                batch_idx.iter().map(|&i| augment_sequence(&data.train[i], cfg, &mut augment_rng)).collect();
            let seqs = samples
                .iter()
                .map(|s| data.table.sequence(&s.subject_id, &s.history, s.now_year, s.target_year))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&TokenSequence> = seqs.iter().collect();
            let batch = TokenBatch::from_sequences(&refs, None)?;
            let (probs, trace) = forward(&params, &batch, Mode::Train(&mut dropout_rng))?;
            let targets: Vec<Diagnosis> = samples.iter().map(|s| s.target).collect();
            let weights: Vec<f64> = samples.iter().map(|s| s.weight).collect();
            let norm = params.squared_norm();
            let loss = weighted_cross_entropy(&probs, &targets, &weights) + cfg.l2 * norm;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, reason: format!("training loss {loss}") });
            }
            let mut grads = backward(&params, &trace, &cross_entropy_logit_grad(&probs, &targets, &weights))?;
            if cfg.l2 != 0.0 {
                for (g, (_, p)) in grads.slices_mut().into_iter().zip(params.named_slices()) {
                    for (gi, pi) in g.iter_mut().zip(p) {
                        *gi += 2.0 * cfg.l2 * pi;
                    }
                }
            }
            adam_step(&mut params, &grads, &mut adam, cfg.learning_rate)
                .map_err(|e| Error::Diverged { epoch, reason: e.to_string() })?;
            let w: f64 = weights.iter().sum();
            loss_sum += loss * w;
            weight_sum += w;
        }
        let (criterion, scenario_losses) = validation_criterion(&params, data.table, data.val, &scenarios)?;
        if !criterion.is_finite() {
            return Err(Error::Diverged { epoch, reason: format!("validation criterion {criterion}") });
        }
        log.records.push(EpochRecord { epoch, train_loss: loss_sum / weight_sum, scenario_losses, criterion });
        log::debug!("epoch {epoch}: train {:.5} criterion {criterion:.5}", loss_sum / weight_sum);
        if criterion < best_criterion {
            best_criterion = criterion;
            best = params.clone();
            log.best = log.records.len() - 1;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > cfg.patience {
                break;
            }
        }
    }
    Ok((best, log))
}
