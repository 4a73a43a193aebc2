use ndarray::{Array1, Array2, Axis};

use super::forward::LayerCache;
use super::{EncoderLayerParams, ForwardTrace, LayerNorm, Linear, ModelParams};
use crate::{Error, Result};

/// Gradient of a softmax output w.r.t. its logits, row by row.
pub fn softmax_backward(probs: &Array2<f64>, dprobs: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(probs.raw_dim());
    for ((p, dp), mut o) in probs.rows().into_iter().zip(dprobs.rows()).zip(out.rows_mut()) {
        let dot: f64 = p.iter().zip(dp.iter()).map(|(a, b)| a * b).sum();
        for j in 0..p.len() {
            o[j] = p[j] * (dp[j] - dot);
        }
    }
    out
}

fn linear_backward(x: &Array2<f64>, dy: &Array2<f64>, l: &Linear, g: &mut Linear) -> Array2<f64> {
    g.w += &x.t().dot(dy);
    g.b += &dy.sum_axis(Axis(0));
    dy.dot(&l.w.t())
}

fn linear_backward_no_input(x: &Array2<f64>, dy: &Array2<f64>, g: &mut Linear) {
    g.w += &x.t().dot(dy);
    g.b += &dy.sum_axis(Axis(0));
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    xhat: &Array2<f64>,
    rstd: &Array1<f64>,
    ln: &LayerNorm,
    g: &mut LayerNorm,
) -> Array2<f64> {
    g.gain += &(dy * xhat).sum_axis(Axis(0));
    g.bias += &dy.sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let mut dx = dy * &ln.gain;
    for ((mut row, xh), &r) in dx.rows_mut().into_iter().zip(xhat.rows()).zip(rstd.iter()) {
        let mean = row.sum() / d;
        let mean_x = row.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
        for (v, &x) in row.iter_mut().zip(xh.iter()) {
            *v = r * (*v - mean - x * mean_x);
        }
    }
    dx
}

fn layer_backward(
    lp: &EncoderLayerParams,
    g: &mut EncoderLayerParams,
    c: &LayerCache,
    dout: &Array2<f64>,
    trace: &ForwardTrace,
    heads: usize,
) -> Array2<f64> {
    let max_len = trace.max_len;
    let d = dout.ncols();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let dz2 = layer_norm_backward(dout, &c.xhat2, &c.rstd2, &lp.norm2, &mut g.norm2);
    let mut dff_out = dz2.clone();
    if let Some(m) = &c.drop_ff {
        dff_out *= m;
    }
    let mut dff = linear_backward(&c.ff_act, &dff_out, &lp.ff2, &mut g.ff2);
    dff.zip_mut_with(&c.ff_pre, |v, &pre| {
        if pre <= 0.0 {
            *v = 0.0
        }
    });
    let dh1 = dz2 + linear_backward(&c.h1, &dff, &lp.ff1, &mut g.ff1);

    let dz1 = layer_norm_backward(&dh1, &c.xhat1, &c.rstd1, &lp.norm1, &mut g.norm1);
    let mut dattn_out = dz1.clone();
    if let Some(m) = &c.drop_attn {
        dattn_out *= m;
    }
    let dconcat = linear_backward(&c.concat, &dattn_out, &lp.output, &mut g.output);

    let mut dq = Array2::zeros(c.q.raw_dim());
    let mut dk = Array2::zeros(c.k.raw_dim());
    let mut dv = Array2::zeros(c.v.raw_dim());
    let mut dp = vec![0.0; max_len];
    for b in 0..trace.n_seq {
        let base = b * max_len;
        for head in 0..heads {
            let cols = head * dh..(head + 1) * dh;
            for i in 0..max_len {
                if !trace.valid[base + i] {
                    continue;
                }
                let offset = ((b * heads + head) * max_len + i) * max_len;
                let probs = &c.attn[offset..offset + max_len];
                let da = dconcat.row(base + i);
                let mut dot = 0.0;
                for j in 0..max_len {
                    if probs[j] == 0.0 {
                        dp[j] = 0.0;
                        continue;
                    }
                    let vj = c.v.row(base + j);
                    dp[j] = cols.clone().map(|col| da[col] * vj[col]).sum();
                    dot += probs[j] * dp[j];
                    for col in cols.clone() {
                        dv[[base + j, col]] += probs[j] * da[col];
                    }
                }
                for j in 0..max_len {
                    if probs[j] == 0.0 {
                        continue;
                    }
                    let ds = probs[j] * (dp[j] - dot) * scale;
                    for col in cols.clone() {
                        dq[[base + i, col]] += ds * c.k[[base + j, col]];
                        dk[[base + j, col]] += ds * c.q[[base + i, col]];
                    }
                }
            }
        }
    }
    dz1 + linear_backward(&c.input, &dq, &lp.query, &mut g.query)
        + linear_backward(&c.input, &dk, &lp.key, &mut g.key)
        + linear_backward(&c.input, &dv, &lp.value, &mut g.value)
}

/// Reverse pass from the gradient of a scalar loss w.r.t. the logits.
///
/// Fails with [`Error::StaleTrace`] if the parameters were mutated after the
/// trace was recorded.
pub fn backward(params: &ModelParams, trace: &ForwardTrace, dlogits: &Array2<f64>) -> Result<ModelParams> {
    if trace.version != params.version() {
        return Err(Error::StaleTrace);
    }
    if dlogits.dim() != trace.logits.dim() {
        return Err(Error::Shape(format!(
            "logit gradient {:?} does not match logits {:?}",
            dlogits.dim(),
            trace.logits.dim()
        )));
    }
    let mut grads = params.zeros_like();

    let mut dcls = linear_backward(&trace.cls_in, dlogits, &params.classifier_out, &mut grads.classifier_out);
    let dpooled = match (&params.classifier_hidden, &mut grads.classifier_hidden, &trace.cls_pre) {
        (Some(hidden), Some(g), Some(pre)) => {
            if let Some(m) = &trace.drop_cls {
                dcls *= m;
            }
            dcls.zip_mut_with(pre, |v, &p| {
                if p <= 0.0 {
                    *v = 0.0
                }
            });
            linear_backward(&trace.pooled, &dcls, hidden, g)
        }
        _ => dcls,
    };

    let max_len = trace.max_len;
    let d = params.config.hidden_dim;
    let mut dh = Array2::zeros((trace.n_seq * max_len, d));
    for b in 0..trace.n_seq {
        let rows = base_rows(&trace.valid, b, max_len);
        let n = rows.len() as f64;
        for r in rows {
            dh.row_mut(r).scaled_add(1.0 / n, &dpooled.row(b));
        }
    }

    for (l, cache) in trace.layers.iter().enumerate().rev() {
        dh = layer_backward(&params.layers[l], &mut grads.layers[l], cache, &dh, trace, params.config.heads);
    }

    for (r, &valid) in trace.valid.iter().enumerate() {
        if !valid {
            dh.row_mut(r).fill(0.0);
            continue;
        }
        let row = dh.row(r);
        grads.position_table.row_mut(trace.positions[r]).scaled_add(1.0, &row);
        grads.age_slope.scaled_add(trace.age_z[r], &row);
        grads.age_bias += &row;
    }
    linear_backward_no_input(&trace.inputs, &dh, &mut grads.input_proj);
    Ok(grads)
}

fn base_rows(valid: &[bool], b: usize, max_len: usize) -> Vec<usize> {
    (b * max_len..(b + 1) * max_len).filter(|&r| valid[r]).collect()
}
