use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ClassifierShape, ModelConfig, N_CLASSES};
use crate::seed::{rng_for, stream};
use crate::Result;

/// `y = x W + b` with `W` stored `(in, out)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { w: Array2::zeros((fan_in, fan_out)), b: Array1::zeros(fan_out) }
    }

    fn glorot<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..=bound));
        Self { w, b: Array1::zeros(fan_out) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: Array1<f64>,
    pub bias: Array1<f64>,
}

impl LayerNorm {
    fn new(d: usize) -> Self {
        Self { gain: Array1::ones(d), bias: Array1::zeros(d) }
    }

    fn zeros(d: usize) -> Self {
        Self { gain: Array1::zeros(d), bias: Array1::zeros(d) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderLayerParams {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub norm1: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub norm2: LayerNorm,
}

/// All learnable arrays, plus the frozen age standardization.
///
/// The same type doubles as the gradient container (see [`ModelParams::zeros_like`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub input_proj: Linear,
    /// `max_positions x d`, one row per years-before-reference offset.
    pub position_table: Array2<f64>,
    pub age_slope: Array1<f64>,
    pub age_bias: Array1<f64>,
    pub layers: Vec<EncoderLayerParams>,
    pub classifier_hidden: Option<Linear>,
    pub classifier_out: Linear,
    /// Ages enter the encoding as `(age - age_center) / age_scale`.
    pub age_center: f64,
    pub age_scale: f64,
    #[serde(skip)]
    version: u64,
}

/// Position table zeroed, weights scaled-uniform with bound
/// `sqrt(6 / (fan_in + fan_out))`, biases zero, layer-norm gains one.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = rng_for(seed, &[stream::INIT]);
    let d = config.hidden_dim;
    let input_proj = Linear::glorot(config.token_width, d, &mut rng);
    let slope_bound = (6.0 / (1 + d) as f64).sqrt();
    let age_slope = Array1::from_shape_simple_fn(d, || rng.random_range(-slope_bound..=slope_bound));
    let layers = (0..config.layers)
        .map(|_| EncoderLayerParams {
            query: Linear::glorot(d, d, &mut rng),
            key: Linear::glorot(d, d, &mut rng),
            value: Linear::glorot(d, d, &mut rng),
            output: Linear::glorot(d, d, &mut rng),
            norm1: LayerNorm::new(d),
            ff1: Linear::glorot(d, config.ff_dim(), &mut rng),
            ff2: Linear::glorot(config.ff_dim(), d, &mut rng),
            norm2: LayerNorm::new(d),
        })
        .collect();
    let (classifier_hidden, classifier_out) = match config.classifier {
        ClassifierShape::Hidden(h) => (Some(Linear::glorot(d, h, &mut rng)), Linear::glorot(h, N_CLASSES, &mut rng)),
        ClassifierShape::Linear => (None, Linear::glorot(d, N_CLASSES, &mut rng)),
    };
    Ok(ModelParams {
        config: config.clone(),
        input_proj,
        position_table: Array2::zeros((config.max_positions, d)),
        age_slope,
        age_bias: Array1::zeros(d),
        layers,
        classifier_hidden,
        classifier_out,
        age_center: 0.0,
        age_scale: 1.0,
        version: 0,
    })
}

impl ModelParams {
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn set_age_scaling(&mut self, center: f64, scale: f64) {
        self.age_center = center;
        self.age_scale = if scale > 1e-12 { scale } else { 1.0 };
        self.version += 1;
    }

    pub fn age_z(&self, age: f64) -> f64 {
        (age - self.age_center) / self.age_scale
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> ModelParams {
        let d = self.config.hidden_dim;
        let zl = |l: &Linear| Linear::zeros(l.w.nrows(), l.w.ncols());
        ModelParams {
            config: self.config.clone(),
            input_proj: zl(&self.input_proj),
            position_table: Array2::zeros(self.position_table.raw_dim()),
            age_slope: Array1::zeros(d),
            age_bias: Array1::zeros(d),
            layers: self
                .layers
                .iter()
                .map(|l| EncoderLayerParams {
                    query: zl(&l.query),
                    key: zl(&l.key),
                    value: zl(&l.value),
                    output: zl(&l.output),
                    norm1: LayerNorm::zeros(d),
                    ff1: zl(&l.ff1),
                    ff2: zl(&l.ff2),
                    norm2: LayerNorm::zeros(d),
                })
                .collect(),
            classifier_hidden: self.classifier_hidden.as_ref().map(zl),
            classifier_out: zl(&self.classifier_out),
            age_center: self.age_center,
            age_scale: self.age_scale,
            version: 0,
        }
    }

    /// Named learnable arrays in declared (checkpoint) order.
    pub fn named_slices(&self) -> Vec<(String, &[f64])> {
        fn std_slice<'a, D: ndarray::Dimension>(a: &'a ndarray::Array<f64, D>) -> &'a [f64] {
            a.as_slice().expect("standard layout")
        }
        let mut out: Vec<(String, &[f64])> = Vec::new();
        macro_rules! linear {
            ($name:expr, $l:expr) => {{
                let name: String = $name;
                out.push((format!("{name}.w"), std_slice(&$l.w)));
                out.push((format!("{name}.b"), std_slice(&$l.b)));
            }};
        }
        linear!("input_proj".into(), self.input_proj);
        out.push(("position_table".into(), std_slice(&self.position_table)));
        out.push(("age_slope".into(), std_slice(&self.age_slope)));
        out.push(("age_bias".into(), std_slice(&self.age_bias)));
        for (i, l) in self.layers.iter().enumerate() {
            linear!(format!("layers.{i}.query"), l.query);
            linear!(format!("layers.{i}.key"), l.key);
            linear!(format!("layers.{i}.value"), l.value);
            linear!(format!("layers.{i}.output"), l.output);
            out.push((format!("layers.{i}.norm1.gain"), std_slice(&l.norm1.gain)));
            out.push((format!("layers.{i}.norm1.bias"), std_slice(&l.norm1.bias)));
            linear!(format!("layers.{i}.ff1"), l.ff1);
            linear!(format!("layers.{i}.ff2"), l.ff2);
            out.push((format!("layers.{i}.norm2.gain"), std_slice(&l.norm2.gain)));
            out.push((format!("layers.{i}.norm2.bias"), std_slice(&l.norm2.bias)));
        }
        if let Some(h) = &self.classifier_hidden {
            linear!("classifier_hidden".into(), h);
        }
        linear!("classifier_out".into(), self.classifier_out);
        out
    }

    /// Mutable views in the same order as [`named_slices`](Self::named_slices).
    /// Invalidates outstanding forward traces.
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        fn m<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> &mut [f64] {
            a.as_slice_mut().expect("standard layout")
        }
        let mut out: Vec<&mut [f64]> = Vec::new();
        out.push(m(&mut self.input_proj.w));
        out.push(m(&mut self.input_proj.b));
        out.push(m(&mut self.position_table));
        out.push(m(&mut self.age_slope));
        out.push(m(&mut self.age_bias));
        for l in &mut self.layers {
            for lin in [&mut l.query, &mut l.key, &mut l.value, &mut l.output] {
                out.push(m(&mut lin.w));
                out.push(m(&mut lin.b));
            }
            out.push(m(&mut l.norm1.gain));
            out.push(m(&mut l.norm1.bias));
            for lin in [&mut l.ff1, &mut l.ff2] {
                out.push(m(&mut lin.w));
                out.push(m(&mut lin.b));
            }
            out.push(m(&mut l.norm2.gain));
            out.push(m(&mut l.norm2.bias));
        }
        if let Some(h) = &mut self.classifier_hidden {
            out.push(m(&mut h.w));
            out.push(m(&mut h.b));
        }
        out.push(m(&mut self.classifier_out.w));
        out.push(m(&mut self.classifier_out.b));
        out
    }

    pub fn n_params(&self) -> usize {
        self.named_slices().iter().map(|(_, s)| s.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.named_slices().into_iter().flat_map(|(_, s)| s.iter().copied()).collect()
    }

    /// Overwrites every learnable value from a flat vector in declared order.
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(crate::Error::Shape(format!("{} values for {} parameters", flat.len(), self.n_params())));
        }
        let mut offset = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
        Ok(())
    }

    /// Sum of squares over every learnable value.
    pub fn squared_norm(&self) -> f64 {
        self.named_slices().iter().flat_map(|(_, s)| s.iter()).map(|x| x * x).sum()
    }
}
