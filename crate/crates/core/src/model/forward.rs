use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{ClassifierShape, EncoderLayerParams, LayerNorm, Linear, ModelConfig, ModelParams, LAYER_NORM_EPS, N_CLASSES};
use crate::features::TokenBatch;
use crate::{Error, Result};

/// Dropout is active only in training mode, with inverted scaling.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

impl Mode<'_> {
    fn mask(&mut self, shape: (usize, usize), p: f64) -> Option<Array2<f64>> {
        match self {
            Mode::Train(rng) if p > 0.0 => {
                let keep = 1.0 / (1.0 - p);
                Some(Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < p { 0.0 } else { keep }))
            }
            _ => None,
        }
    }
}

pub(crate) struct LayerCache {
    pub input: Array2<f64>,
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    /// `[seq][head][query][key]`, flattened.
    pub attn: Vec<f64>,
    pub concat: Array2<f64>,
    pub drop_attn: Option<Array2<f64>>,
    pub xhat1: Array2<f64>,
    pub rstd1: Array1<f64>,
    pub h1: Array2<f64>,
    pub ff_pre: Array2<f64>,
    pub ff_act: Array2<f64>,
    pub drop_ff: Option<Array2<f64>>,
    pub xhat2: Array2<f64>,
    pub rstd2: Array1<f64>,
}

/// Activations kept from one forward pass for [`backward`](super::backward).
pub struct ForwardTrace {
    pub(crate) version: u64,
    pub(crate) n_seq: usize,
    pub(crate) max_len: usize,
    pub(crate) valid: Vec<bool>,
    pub(crate) positions: Vec<usize>,
    pub(crate) age_z: Vec<f64>,
    pub(crate) inputs: Array2<f64>,
    pub(crate) layers: Vec<LayerCache>,
    pub(crate) pooled: Array2<f64>,
    pub(crate) cls_pre: Option<Array2<f64>>,
    pub(crate) cls_in: Array2<f64>,
    pub(crate) drop_cls: Option<Array2<f64>>,
    pub logits: Array2<f64>,
    pub probs: Array2<f64>,
}

fn affine(x: &Array2<f64>, l: &Linear) -> Array2<f64> {
    x.dot(&l.w) + &l.b
}

fn layer_norm(x: &Array2<f64>, ln: &LayerNorm) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in xhat.rows_mut().into_iter().zip(rstd.iter_mut()) {
        let mean = row.sum() / d;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
        *r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        row.mapv_inplace(|v| (v - mean) * *r);
    }
    let y = &xhat * &ln.gain + &ln.bias;
    (y, xhat, rstd)
}

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|z| (z - max).exp());
        let s = row.sum();
        row /= s;
    }
    p
}

fn check_positions(params: &ModelParams, positions: &[usize]) -> Result<()> {
    match positions.iter().find(|&&p| p >= params.config.max_positions) {
        Some(&p) => Err(Error::PositionOutOfRange(p)),
        None => Ok(()),
    }
}

/// Projected tokens plus position and age encodings, one row per slot.
pub fn embed_sequence(params: &ModelParams, batch: &TokenBatch) -> Result<Array2<f64>> {
    let age_z: Vec<f64> = batch.ages.iter().map(|&a| params.age_z(a)).collect();
    embed(params, &batch.inputs, &batch.positions, &age_z)
}

fn embed(params: &ModelParams, inputs: &Array2<f64>, positions: &[usize], age_z: &[f64]) -> Result<Array2<f64>> {
    if inputs.ncols() != params.config.token_width {
        return Err(Error::Shape(format!(
            "token width {} for a model expecting {}",
            inputs.ncols(),
            params.config.token_width
        )));
    }
    check_positions(params, positions)?;
    let mut h = affine(inputs, &params.input_proj);
    for (r, mut row) in h.rows_mut().into_iter().enumerate() {
        row += &params.position_table.row(positions[r]);
        row.scaled_add(age_z[r], &params.age_slope);
        row += &params.age_bias;
    }
    Ok(h)
}

fn layer_forward(
    lp: &EncoderLayerParams,
    config: &ModelConfig,
    h: &Array2<f64>,
    valid: &[bool],
    n_seq: usize,
    max_len: usize,
    mode: &mut Mode<'_>,
) -> Result<(Array2<f64>, LayerCache)> {
    let d = config.hidden_dim;
    let heads = config.heads;
    let dh = config.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let q = affine(h, &lp.query);
    let k = affine(h, &lp.key);
    let v = affine(h, &lp.value);
    let mut concat = Array2::zeros((h.nrows(), d));
    let mut attn = vec![0.0; n_seq * heads * max_len * max_len];
    let mut scores = vec![0.0; max_len];
    for b in 0..n_seq {
        let base = b * max_len;
        if !valid[base..base + max_len].iter().any(|&x| x) {
            return Err(Error::EmptyHistory);
        }
        for head in 0..heads {
            let cols = head * dh..(head + 1) * dh;
            for i in 0..max_len {
                let qi = q.row(base + i);
                let mut max = f64::NEG_INFINITY;
                for j in 0..max_len {
                    scores[j] = if valid[base + j] {
                        let kj = k.row(base + j);
                        let s: f64 = cols.clone().map(|c| qi[c] * kj[c]).sum::<f64>() * scale;
                        max = max.max(s);
                        s
                    } else {
                        f64::NEG_INFINITY
                    };
                }
                let mut total = 0.0;
                for s in scores.iter_mut() {
                    *s = (*s - max).exp();
                    total += *s;
                }
                let offset = ((b * heads + head) * max_len + i) * max_len;
                for j in 0..max_len {
                    let p = scores[j] / total;
                    attn[offset + j] = p;
                    if p != 0.0 {
                        let vj = v.row(base + j);
                        for c in cols.clone() {
                            concat[[base + i, c]] += p * vj[c];
                        }
                    }
                }
            }
        }
    }
    let mut attn_out = affine(&concat, &lp.output);
    let drop_attn = mode.mask(attn_out.dim(), config.dropout);
    if let Some(m) = &drop_attn {
        attn_out *= m;
    }
    let (h1, xhat1, rstd1) = layer_norm(&(h + &attn_out), &lp.norm1);
    let ff_pre = affine(&h1, &lp.ff1);
    let ff_act = ff_pre.mapv(|x| x.max(0.0));
    let mut ff_out = affine(&ff_act, &lp.ff2);
    let drop_ff = mode.mask(ff_out.dim(), config.dropout);
    if let Some(m) = &drop_ff {
        ff_out *= m;
    }
    let (h2, xhat2, rstd2) = layer_norm(&(&h1 + &ff_out), &lp.norm2);
    let cache = LayerCache {
        input: h.clone(),
        q,
        k,
        v,
        attn,
        concat,
        drop_attn,
        xhat1,
        rstd1,
        h1,
        ff_pre,
        ff_act,
        drop_ff,
        xhat2,
        rstd2,
    };
    Ok((h2, cache))
}

/// One post-norm encoder layer over `n_seq` padded sequences of `max_len`
/// slots. Invalid slots are masked out as attention keys.
pub fn encoder_layer_forward(
    layer: &EncoderLayerParams,
    config: &ModelConfig,
    hidden: &Array2<f64>,
    valid: &[bool],
    max_len: usize,
    mode: &mut Mode<'_>,
) -> Result<Array2<f64>> {
    if max_len == 0 || hidden.nrows() % max_len != 0 || valid.len() != hidden.nrows() {
        return Err(Error::Shape("hidden rows must be whole padded sequences".into()));
    }
    layer_forward(layer, config, hidden, valid, hidden.nrows() / max_len, max_len, mode).map(|(h, _)| h)
}

/// Mean over the valid slots of each sequence.
pub fn sequence_pool(hidden: &Array2<f64>, valid: &[bool], max_len: usize) -> Result<Array2<f64>> {
    if max_len == 0 || hidden.nrows() % max_len != 0 || valid.len() != hidden.nrows() {
        return Err(Error::Shape("hidden rows must be whole padded sequences".into()));
    }
    let n_seq = hidden.nrows() / max_len;
    let mut pooled = Array2::zeros((n_seq, hidden.ncols()));
    for b in 0..n_seq {
        let mut count = 0usize;
        let mut row = pooled.row_mut(b);
        for i in 0..max_len {
            if valid[b * max_len + i] {
                row += &hidden.row(b * max_len + i);
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::EmptyHistory);
        }
        row /= count as f64;
    }
    Ok(pooled)
}

fn classifier_forward(
    params: &ModelParams,
    pooled: &Array2<f64>,
    mode: &mut Mode<'_>,
) -> Result<(Array2<f64>, Option<Array2<f64>>, Array2<f64>, Option<Array2<f64>>)> {
    if pooled.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("pooled representation".into()));
    }
    let (cls_pre, cls_in, drop) = match (&params.classifier_hidden, params.config.classifier) {
        (Some(hidden), ClassifierShape::Hidden(_)) => {
            let pre = affine(pooled, hidden);
            let mut act = pre.mapv(|x| x.max(0.0));
            let drop = mode.mask(act.dim(), params.config.dropout);
            if let Some(m) = &drop {
                act *= m;
            }
            (Some(pre), act, drop)
        }
        (None, ClassifierShape::Linear) => (None, pooled.clone(), None),
        _ => return Err(Error::Shape("classifier parameters do not match the configured shape".into())),
    };
    let logits = affine(&cls_in, &params.classifier_out);
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    Ok((logits, cls_pre, cls_in, drop))
}

/// Class probabilities for pooled vectors (evaluation mode).
pub fn classify(params: &ModelParams, pooled: &Array2<f64>) -> Result<Array2<f64>> {
    let (logits, ..) = classifier_forward(params, pooled, &mut Mode::Eval)?;
    Ok(softmax_rows(&logits))
}

/// Full forward pass. Returns `n_seq x 3` probabilities and the trace.
pub fn forward(params: &ModelParams, batch: &TokenBatch, mut mode: Mode<'_>) -> Result<(Array2<f64>, ForwardTrace)> {
    let age_z: Vec<f64> = batch.ages.iter().map(|&a| params.age_z(a)).collect();
    let mut h = embed(params, &batch.inputs, &batch.positions, &age_z)?;
    let mut layers = Vec::with_capacity(params.layers.len());
    for lp in &params.layers {
        let (next, cache) = layer_forward(lp, &params.config, &h, &batch.valid, batch.n_sequences, batch.max_len, &mut mode)?;
        layers.push(cache);
        h = next;
    }
    let pooled = sequence_pool(&h, &batch.valid, batch.max_len)?;
    let (logits, cls_pre, cls_in, drop_cls) = classifier_forward(params, &pooled, &mut mode)?;
    let probs = softmax_rows(&logits);
    debug_assert_eq!(probs.ncols(), N_CLASSES);
    let trace = ForwardTrace {
        version: params.version(),
        n_seq: batch.n_sequences,
        max_len: batch.max_len,
        valid: batch.valid.clone(),
        positions: batch.positions.clone(),
        age_z,
        inputs: batch.inputs.clone(),
        layers,
        pooled,
        cls_pre,
        cls_in,
        drop_cls,
        logits,
        probs: probs.clone(),
    };
    Ok((probs, trace))
}
