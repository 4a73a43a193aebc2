use std::fmt;

use serde::{Deserialize, Serialize};

use super::N_CLASSES;
use crate::features::MAX_HISTORY_TOKENS;
use crate::{Error, Result};

/// Head after pooling: `[h, 3]` is linear(d, h) -> ReLU -> linear(h, 3);
/// `[3]` is a single linear(d, 3).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub enum ClassifierShape {
    Hidden(usize),
    Linear,
}

impl TryFrom<Vec<usize>> for ClassifierShape {
    type Error = Error;

    fn try_from(widths: Vec<usize>) -> Result<Self> {
        match widths.as_slice() {
            [N_CLASSES] => Ok(ClassifierShape::Linear),
            [h, N_CLASSES] if *h > 0 => Ok(ClassifierShape::Hidden(*h)),
            _ => Err(Error::Config(format!("classifier {widths:?} must be [3] or [h, 3]"))),
        }
    }
}

impl From<ClassifierShape> for Vec<usize> {
    fn from(c: ClassifierShape) -> Vec<usize> {
        match c {
            ClassifierShape::Hidden(h) => vec![h, N_CLASSES],
            ClassifierShape::Linear => vec![N_CLASSES],
        }
    }
}

impl fmt::Display for ClassifierShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassifierShape::Hidden(h) => write!(f, "[{h},3]"),
            ClassifierShape::Linear => f.write_str("[3]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub token_width: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub classifier: ClassifierShape,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default = "default_positions")]
    pub max_positions: usize,
    /// Feed-forward width as a multiple of `hidden_dim`.
    #[serde(default = "default_ff")]
    pub ff_multiplier: usize,
}

fn default_dropout() -> f64 {
    0.5
}

fn default_positions() -> usize {
    MAX_HISTORY_TOKENS
}

fn default_ff() -> usize {
    4
}

impl ModelConfig {
    pub fn new(token_width: usize, hidden_dim: usize, heads: usize, layers: usize, classifier: ClassifierShape) -> Self {
        Self {
            token_width,
            hidden_dim,
            heads,
            layers,
            classifier,
            dropout: default_dropout(),
            max_positions: default_positions(),
            ff_multiplier: default_ff(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.token_width == 0 || self.hidden_dim == 0 || self.heads == 0 || self.ff_multiplier == 0 {
            return Err(Error::Config("model widths must be positive".into()));
        }
        if self.hidden_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "hidden dim {} is not divisible by {} heads",
                self.hidden_dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.max_positions == 0 {
            return Err(Error::Config("need at least one position".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.heads
    }

    pub fn ff_dim(&self) -> usize {
        self.hidden_dim * self.ff_multiplier
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_dim_and_divisibility() {
        let cfg = ModelConfig::new(114, 128, 2, 1, ClassifierShape::Hidden(128));
        cfg.validate().unwrap();
        assert_eq!(cfg.head_dim(), 64);
        assert_eq!(cfg.ff_dim(), 512);
        assert!(ModelConfig::new(10, 10, 3, 1, ClassifierShape::Linear).validate().is_err());
    }

    #[test]
    fn classifier_shape_serde() {
        let c: ClassifierShape = serde_json::from_str("[128, 3]").unwrap();
        assert_eq!(c, ClassifierShape::Hidden(128));
        let c: ClassifierShape = serde_json::from_str("[3]").unwrap();
        assert_eq!(c, ClassifierShape::Linear);
        assert!(serde_json::from_str::<ClassifierShape>("[4]").is_err());
        assert_eq!(serde_json::to_string(&ClassifierShape::Hidden(16)).unwrap(), "[16,3]");
    }
}
