//! Model directories: `manifest.json` plus an implementation-specific
//! `model.json`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Classifier, ClassifierError, EncodedSample, KeywordMock, LabelSet, LinearBow, PredictionResult};
use crate::io::write_atomic;

pub const CONTRACT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub label_set: LabelSet,
    pub contract_version: String,
    pub impl_id: String,
}

/// The built-in deciders behind one type.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyClassifier {
    Linear(LinearBow),
    Keyword(KeywordMock),
}

impl AnyClassifier {
    pub fn impl_id(&self) -> &'static str {
        match self {
            AnyClassifier::Linear(_) => "linear-bow",
            AnyClassifier::Keyword(_) => "keyword-mock",
        }
    }

    fn inner(&self) -> &dyn Classifier {
        match self {
            AnyClassifier::Linear(m) => m,
            AnyClassifier::Keyword(m) => m,
        }
    }
}

impl Classifier for AnyClassifier {
    fn id(&self) -> &str {
        self.inner().id()
    }

    fn label_set(&self) -> &LabelSet {
        self.inner().label_set()
    }

    fn predict_encoded(&self, encoded: &EncodedSample) -> Result<PredictionResult, ClassifierError> {
        self.inner().predict_encoded(encoded)
    }

    fn saliency_encoded(&self, encoded: &EncodedSample, reference: usize) -> Result<Vec<f64>, ClassifierError> {
        self.inner().saliency_encoded(encoded, reference)
    }
}

fn store_err(path: &Path, e: impl std::fmt::Display) -> ClassifierError {
    ClassifierError::Store(format!("{}: {e}", path.display()))
}

pub fn save_model(dir: &Path, model: &AnyClassifier) -> Result<(), ClassifierError> {
    let manifest = ModelManifest {
        label_set: model.label_set().clone(),
        contract_version: CONTRACT_VERSION.into(),
        impl_id: model.impl_id().into(),
    };
    let state = match model {
        AnyClassifier::Linear(m) => serde_json::to_vec_pretty(m),
        AnyClassifier::Keyword(m) => serde_json::to_vec_pretty(m),
    }
    .map_err(|e| store_err(dir, e))?;
    write_atomic(&dir.join("model.json"), &state)?;
    let manifest = serde_json::to_vec_pretty(&manifest).map_err(|e| store_err(dir, e))?;
    write_atomic(&dir.join("manifest.json"), &manifest)?;
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<AnyClassifier, ClassifierError> {
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read(&p).map_err(|e| store_err(&p, e))
    };
    let manifest: ModelManifest = serde_json::from_slice(&read("manifest.json")?).map_err(|e| store_err(dir, e))?;
    if manifest.contract_version != CONTRACT_VERSION {
        return Err(store_err(
            dir,
            format!("contract version {:?} unsupported", manifest.contract_version),
        ));
    }
    let state = read("model.json")?;
    let model = match manifest.impl_id.as_str() {
        "linear-bow" => AnyClassifier::Linear(serde_json::from_slice(&state).map_err(|e| store_err(dir, e))?),
        "keyword-mock" => {
            let m: KeywordMock = serde_json::from_slice(&state).map_err(|e| store_err(dir, e))?;
            m.validate()?;
            AnyClassifier::Keyword(m)
        }
        other => return Err(store_err(dir, format!("unknown impl_id {other:?}"))),
    };
    if model.label_set() != &manifest.label_set {
        return Err(store_err(dir, "manifest label set differs from model state"));
    }
    Ok(model)
}
