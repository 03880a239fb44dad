use serde::{Deserialize, Serialize};

use super::{Classifier, ClassifierError, EncodedSample, LabelSet, PredictionResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordRule {
    pub keyword: String,
    pub label: String,
    pub confidence: f64,
}

/// Rule-table decider: the first rule (in table order) whose keyword is a
/// visible token fires; otherwise the fallback applies. The chosen label gets
/// the rule's confidence and the remaining mass is spread evenly.
///
/// Has no gradients; reductive extents over it need the occlusion fallback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordMock {
    pub id: String,
    pub labels: LabelSet,
    pub rules: Vec<KeywordRule>,
    pub fallback_label: String,
    pub fallback_confidence: f64,
}

impl KeywordMock {
    pub fn new(
        labels: LabelSet,
        rules: Vec<KeywordRule>,
        fallback_label: &str,
        fallback_confidence: f64,
    ) -> Result<Self, ClassifierError> {
        let mock = KeywordMock {
            id: "keyword-mock".into(),
            labels,
            rules,
            fallback_label: fallback_label.to_string(),
            fallback_confidence,
        };
        mock.validate()?;
        Ok(mock)
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        let n = self.labels.len() as f64;
        let check = |label: &str, c: f64| {
            if self.labels.index_of(label).is_none() {
                return Err(ClassifierError::UnknownLabel(label.to_string()));
            }
            // the chosen label must remain the strict argmax
            let rest = if n > 1.0 { (1.0 - c) / (n - 1.0) } else { 0.0 };
            if !(c > rest && c <= 1.0) {
                return Err(ClassifierError::Config(format!(
                    "confidence {c} for {label:?} would not be the argmax over {n} labels"
                )));
            }
            Ok(())
        };
        for r in &self.rules {
            check(&r.label, r.confidence)?;
        }
        check(&self.fallback_label, self.fallback_confidence)
    }

    fn distribution(&self, label: &str, confidence: f64) -> Vec<f64> {
        let n = self.labels.len();
        let target = self.labels.index_of(label).expect("validated label");
        let rest = if n > 1 {
            (1.0 - confidence) / (n - 1) as f64
        } else {
            0.0
        };
        (0..n).map(|i| if i == target { confidence } else { rest }).collect()
    }
}

impl Classifier for KeywordMock {
    fn id(&self) -> &str {
        &self.id
    }

    fn label_set(&self) -> &LabelSet {
        &self.labels
    }

    fn predict_encoded(&self, encoded: &EncodedSample) -> Result<PredictionResult, ClassifierError> {
        let words: Vec<&str> = encoded.tokens().map(|(_, t, _)| t).collect();
        let (label, conf) = self
            .rules
            .iter()
            .find(|r| words.contains(&r.keyword.as_str()))
            .map(|r| (r.label.as_str(), r.confidence))
            .unwrap_or((self.fallback_label.as_str(), self.fallback_confidence));
        Ok(PredictionResult::from_distribution(
            &self.labels,
            self.distribution(label, conf),
        ))
    }
}
