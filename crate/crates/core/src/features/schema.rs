use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
    Diagnosis,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[allow(clippy::upper_case_acronyms)]
pub enum Modality {
    COGN,
    MRI,
    CSF,
    STATIC,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::COGN, Modality::MRI, Modality::CSF, Modality::STATIC];

    pub fn is_longitudinal(self) -> bool {
        self != Modality::STATIC
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    pub modality: Modality,
}

impl FeatureDescriptor {
    pub fn numeric(name: &str, modality: Modality) -> Self {
        Self { name: name.into(), kind: FeatureKind::Numeric, categories: Vec::new(), modality }
    }

    pub fn categorical(name: &str, categories: &[&str], modality: Modality) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical,
            categories: categories.iter().map(|c| c.to_string()).collect(),
            modality,
        }
    }

    pub fn diagnosis(name: &str) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Diagnosis,
            categories: Vec::new(),
            modality: Modality::STATIC,
        }
    }

    /// Columns this feature occupies in the encoded feature block.
    pub fn encoded_width(&self) -> usize {
        match self.kind {
            FeatureKind::Categorical => self.categories.len(),
            FeatureKind::Numeric | FeatureKind::Diagnosis => 1,
        }
    }
}

/// Ordered feature descriptors; the order fixes the token layout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureDescriptor>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureDescriptor>) -> Result<Self> {
        let schema = Self { features };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for f in &self.features {
            if !names.insert(f.name.as_str()) {
                return Err(Error::Config(format!("duplicate feature name `{}`", f.name)));
            }
            match f.kind {
                FeatureKind::Categorical if f.categories.is_empty() => {
                    return Err(Error::Config(format!("categorical feature `{}` has no categories", f.name)));
                }
                FeatureKind::Categorical => {
                    let unique: BTreeSet<_> = f.categories.iter().collect();
                    if unique.len() != f.categories.len() {
                        return Err(Error::Config(format!("feature `{}` repeats a category", f.name)));
                    }
                }
                _ if !f.categories.is_empty() => {
                    return Err(Error::Config(format!("feature `{}` is not categorical but lists categories", f.name)));
                }
                _ => {}
            }
        }
        if self.features.iter().filter(|f| f.kind == FeatureKind::Diagnosis).count() > 1 {
            return Err(Error::Config("at most one diagnosis feature is allowed".into()));
        }
        Ok(())
    }

    pub fn encoded_width(&self) -> usize {
        self.features.iter().map(FeatureDescriptor::encoded_width).sum()
    }

    /// One mask bit per descriptor.
    pub fn mask_width(&self) -> usize {
        self.features.len()
    }

    /// Feature block plus mask block.
    pub fn block_width(&self) -> usize {
        self.encoded_width() + self.mask_width()
    }

    /// Block plus the appended horizon.
    pub fn token_width(&self) -> usize {
        self.block_width() + 1
    }

    pub fn modalities(&self) -> BTreeSet<Modality> {
        self.features.iter().map(|f| f.modality).collect()
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// The schema used by the synthetic generator when none is configured.
    pub fn synthetic_default() -> Self {
        use Modality::*;
        Self::new(vec![
            FeatureDescriptor::categorical("sex", &["F", "M"], STATIC),
            FeatureDescriptor::numeric("education", STATIC),
            FeatureDescriptor::categorical("apoe4", &["0", "1", "2"], STATIC),
            FeatureDescriptor::diagnosis("dx"),
            FeatureDescriptor::numeric("mmse", COGN),
            FeatureDescriptor::numeric("cdr_sb", COGN),
            FeatureDescriptor::numeric("adas13", COGN),
            FeatureDescriptor::numeric("faq", COGN),
            FeatureDescriptor::numeric("hippocampus", MRI),
            FeatureDescriptor::numeric("entorhinal", MRI),
            FeatureDescriptor::numeric("ventricles", MRI),
            FeatureDescriptor::numeric("whole_brain", MRI),
            FeatureDescriptor::numeric("abeta", CSF),
            FeatureDescriptor::numeric("ptau", CSF),
        ])
        .expect("default schema is valid")
    }
}
