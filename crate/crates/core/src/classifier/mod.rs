//! Decider contract for relation classification.
//!
//! A [`Classifier`] sees an [`EncodedSample`]: the visible tokens of a
//! sentence in order, with begin/end markers around each argument. Hidden
//! tokens are dropped from the sequence, not masked in place.

mod keyword;
mod linear;
mod store;
mod train;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::RelationSample;

pub use keyword::{KeywordMock, KeywordRule};
pub use linear::LinearBow;
pub use store::{load_model, save_model, AnyClassifier, ModelManifest, CONTRACT_VERSION};
pub use train::{fit, EpochRecord, TrainConfig, Trainable, TrainingReport};

/// Floor applied to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum ClassifierError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("classifier {0:?} does not support gradient saliency")]
    Capability(String),
    #[error("label {0:?} is not in the label set")]
    UnknownLabel(String),
    #[error("invalid label set: {0}")]
    LabelSet(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model store: {0}")]
    Store(String),
    #[error(transparent)]
    Io(#[from] crate::io::IoError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet(Vec<String>);

impl LabelSet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self, ClassifierError> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(ClassifierError::LabelSet("label set is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(ClassifierError::LabelSet(format!("duplicate label {l:?}")));
            }
        }
        Ok(LabelSet(labels))
    }

    /// Sorted distinct labels of the given samples (`NONE` for unlabeled).
    pub fn from_samples(samples: &[RelationSample]) -> Result<Self, ClassifierError> {
        let labels: BTreeSet<&str> = samples.iter().map(sample_label).collect();
        Self::new(labels)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.0.iter().position(|l| l == label)
    }

    pub fn get(&self, i: usize) -> &str {
        &self.0[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.0
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = ClassifierError;

    fn try_from(v: Vec<String>) -> Result<Self, Self::Error> {
        LabelSet::new(v)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(l: LabelSet) -> Self {
        l.0
    }
}

/// Gold label of a sample, `NONE` when unlabeled.
pub fn sample_label(s: &RelationSample) -> &str {
    s.label.as_deref().unwrap_or("NONE")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Marker {
    Arg1Begin,
    Arg1End,
    Arg2Begin,
    Arg2End,
}

impl Marker {
    pub fn as_str(self) -> &'static str {
        match self {
            Marker::Arg1Begin => "<a1>",
            Marker::Arg1End => "</a1>",
            Marker::Arg2Begin => "<a2>",
            Marker::Arg2End => "</a2>",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Arg1,
    Arg2,
    Context,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Piece {
    Marker(Marker),
    Token { index: usize, text: String, role: Role },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedSample {
    pub pieces: Vec<Piece>,
}

impl EncodedSample {
    /// Sentence token index for every position, `None` at markers.
    pub fn back_map(&self) -> Vec<Option<usize>> {
        self.pieces
            .iter()
            .map(|p| match p {
                Piece::Marker(_) => None,
                Piece::Token { index, .. } => Some(*index),
            })
            .collect()
    }

    /// Visible sentence tokens in sequence order.
    pub fn visible_tokens(&self) -> Vec<usize> {
        self.back_map().into_iter().flatten().collect()
    }

    pub fn tokens(&self) -> impl Iterator<Item = (usize, &str, Role)> {
        self.pieces.iter().filter_map(|p| match p {
            Piece::Token { index, text, role } => Some((*index, text.as_str(), *role)),
            Piece::Marker(_) => None,
        })
    }

    pub fn surface(&self) -> Vec<&str> {
        self.pieces
            .iter()
            .map(|p| match p {
                Piece::Marker(m) => m.as_str(),
                Piece::Token { text, .. } => text.as_str(),
            })
            .collect()
    }
}

impl fmt::Display for EncodedSample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.surface().join(" "))
    }
}

/// Encodes the visible tokens of `sample` in sentence order, bracketing each
/// argument with its begin/end markers.
pub fn encode_sample(sample: &RelationSample, visible: &BTreeSet<usize>) -> Result<EncodedSample, ClassifierError> {
    if let Some(missing) = sample.argument_tokens().into_iter().find(|i| !visible.contains(i)) {
        return Err(ClassifierError::Contract(format!(
            "sample {}: argument token {missing} is not visible",
            sample.sample_id
        )));
    }
    if let Some(&bad) = visible.iter().find(|&&i| i >= sample.len()) {
        return Err(ClassifierError::Contract(format!(
            "sample {}: token {bad} out of range",
            sample.sample_id
        )));
    }
    let mut pieces = Vec::with_capacity(visible.len() + 4);
    for &i in visible {
        if i == sample.arg1.start {
            pieces.push(Piece::Marker(Marker::Arg1Begin));
        }
        if i == sample.arg2.start {
            pieces.push(Piece::Marker(Marker::Arg2Begin));
        }
        let role = if sample.arg1.contains(i) {
            Role::Arg1
        } else if sample.arg2.contains(i) {
            Role::Arg2
        } else {
            Role::Context
        };
        pieces.push(Piece::Token {
            index: i,
            text: sample.token_text(i).to_string(),
            role,
        });
        if i + 1 == sample.arg1.end {
            pieces.push(Piece::Marker(Marker::Arg1End));
        }
        if i + 1 == sample.arg2.end {
            pieces.push(Piece::Marker(Marker::Arg2End));
        }
    }
    Ok(EncodedSample { pieces })
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|h| (h - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// `-ln p[gold]` with `p[gold]` floored at [`PROB_FLOOR`].
pub fn cross_entropy(dist: &[f64], gold: usize) -> f64 {
    -dist[gold].max(PROB_FLOOR).ln()
}

/// Index of the maximum; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub distribution: Vec<f64>,
    pub predicted: String,
    pub predicted_index: usize,
    pub confidence: f64,
}

impl PredictionResult {
    pub fn from_distribution(labels: &LabelSet, distribution: Vec<f64>) -> Self {
        let idx = argmax(&distribution);
        PredictionResult {
            predicted: labels.get(idx).to_string(),
            predicted_index: idx,
            confidence: distribution[idx],
            distribution,
        }
    }

    pub fn from_logits(labels: &LabelSet, logits: &[f64]) -> Self {
        Self::from_distribution(labels, softmax(logits))
    }
}

/// One nonnegative score per visible token, in sequence order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyScores {
    pub tokens: Vec<usize>,
    pub scores: Vec<f64>,
}

impl SaliencyScores {
    pub fn score_of(&self, token: usize) -> Option<f64> {
        self.tokens.iter().position(|&t| t == token).map(|p| self.scores[p])
    }
}

pub trait Classifier: Send + Sync {
    fn id(&self) -> &str;

    fn label_set(&self) -> &LabelSet;

    fn predict_encoded(&self, encoded: &EncodedSample) -> Result<PredictionResult, ClassifierError>;

    /// Per-token norm of the gradient of the cross-entropy between the
    /// predicted distribution and `reference` with respect to each visible
    /// token's input representation.
    fn saliency_encoded(&self, _encoded: &EncodedSample, _reference: usize) -> Result<Vec<f64>, ClassifierError> {
        Err(ClassifierError::Capability(self.id().to_string()))
    }
}

pub fn predict_subset<C: Classifier + ?Sized>(
    c: &C,
    sample: &RelationSample,
    visible: &BTreeSet<usize>,
) -> Result<PredictionResult, ClassifierError> {
    c.predict_encoded(&encode_sample(sample, visible)?)
}

pub fn predict_full<C: Classifier + ?Sized>(
    c: &C,
    sample: &RelationSample,
) -> Result<PredictionResult, ClassifierError> {
    predict_subset(c, sample, &sample.all_tokens())
}

/// The `k` most probable labels on the full sentence, descending, lower label
/// index first on ties. `k` is clamped to the label-set size.
pub fn top_k_labels<C: Classifier + ?Sized>(
    c: &C,
    sample: &RelationSample,
    k: usize,
) -> Result<Vec<String>, ClassifierError> {
    if k == 0 {
        return Err(ClassifierError::Config("k must be at least 1".into()));
    }
    let pred = predict_full(c, sample)?;
    let mut idx: Vec<usize> = (0..pred.distribution.len()).collect();
    idx.sort_by(|&a, &b| pred.distribution[b].total_cmp(&pred.distribution[a]).then(a.cmp(&b)));
    Ok(idx
        .into_iter()
        .take(k.min(c.label_set().len()))
        .map(|i| c.label_set().get(i).to_string())
        .collect())
}

pub fn saliency<C: Classifier + ?Sized>(
    c: &C,
    sample: &RelationSample,
    visible: &BTreeSet<usize>,
    reference: &str,
) -> Result<SaliencyScores, ClassifierError> {
    let ref_idx = c
        .label_set()
        .index_of(reference)
        .ok_or_else(|| ClassifierError::UnknownLabel(reference.to_string()))?;
    let enc = encode_sample(sample, visible)?;
    let scores = c.saliency_encoded(&enc, ref_idx)?;
    Ok(SaliencyScores {
        tokens: enc.visible_tokens(),
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::nbc_sample;
    use proptest::prelude::*;

    #[test]
    fn encode_full_sentence_has_four_markers() {
        let s = nbc_sample();
        let enc = encode_sample(&s, &s.all_tokens()).unwrap();
        assert_eq!(enc.pieces.len(), 12);
        assert_eq!(
            enc.to_string(),
            "<a1> He </a1> had previously worked at <a2> NBC Entertainment </a2> ."
        );
    }

    #[test]
    fn encode_arguments_only() {
        let s = nbc_sample();
        let enc = encode_sample(&s, &s.argument_tokens()).unwrap();
        assert_eq!(
            enc.surface(),
            vec!["<a1>", "He", "</a1>", "<a2>", "NBC", "Entertainment", "</a2>"]
        );
        assert_eq!(enc.visible_tokens(), vec![0, 5, 6]);
    }

    #[test]
    fn encode_requires_arguments() {
        let s = nbc_sample();
        let visible: BTreeSet<usize> = [0, 3, 5].into();
        assert!(matches!(encode_sample(&s, &visible), Err(ClassifierError::Contract(_))));
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = softmax(&[2f64.ln(), 0.0]);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-12 && (p[1] - 1.0 / 3.0).abs() < 1e-12);
        let p = softmax(&[1000.0, 0.0]);
        assert!(p.iter().all(|x| x.is_finite()));
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1] < 1e-300);
    }

    #[test]
    fn cross_entropy_examples() {
        assert_eq!(cross_entropy(&[1.0, 0.0], 0), 0.0);
        assert!((cross_entropy(&[0.5, 0.5], 1) - 2f64.ln()).abs() < 1e-15);
        assert!((cross_entropy(&[0.0, 1.0], 0) + PROB_FLOOR.ln()).abs() < 1e-12);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.4, 0.4, 0.2]), 0);
        assert_eq!(argmax(&[0.1, 0.4, 0.4]), 1);
    }

    #[test]
    fn label_set_rejects_duplicates_and_empty() {
        assert!(LabelSet::new(["a", "a"]).is_err());
        assert!(LabelSet::new(Vec::<String>::new()).is_err());
        let parsed: Result<LabelSet, _> = serde_json::from_str("[\"x\",\"x\"]");
        assert!(parsed.is_err());
    }

    fn fixed(dist: Vec<f64>) -> FixedDist {
        FixedDist {
            labels: LabelSet::new((0..dist.len()).map(|i| format!("L{i}"))).unwrap(),
            dist,
        }
    }

    struct FixedDist {
        labels: LabelSet,
        dist: Vec<f64>,
    }

    impl Classifier for FixedDist {
        fn id(&self) -> &str {
            "fixed"
        }
        fn label_set(&self) -> &LabelSet {
            &self.labels
        }
        fn predict_encoded(&self, _: &EncodedSample) -> Result<PredictionResult, ClassifierError> {
            Ok(PredictionResult::from_distribution(&self.labels, self.dist.clone()))
        }
    }

    #[test]
    fn top_k_examples() {
        let s = nbc_sample();
        let c = fixed(vec![0.7, 0.2, 0.1]);
        assert_eq!(top_k_labels(&c, &s, 3).unwrap(), vec!["L0", "L1", "L2"]);
        assert_eq!(top_k_labels(&c, &s, 1).unwrap(), vec!["L0"]);
        assert_eq!(top_k_labels(&c, &s, 10).unwrap().len(), 3);
        let c = fixed(vec![0.2, 0.4, 0.4]);
        assert_eq!(top_k_labels(&c, &s, 2).unwrap(), vec!["L1", "L2"]);
    }

    #[test]
    fn saliency_without_gradients_is_capability_error() {
        let s = nbc_sample();
        let c = fixed(vec![0.5, 0.5]);
        assert!(matches!(
            saliency(&c, &s, &s.all_tokens(), "L0"),
            Err(ClassifierError::Capability(_))
        ));
    }

    proptest! {
        #[test]
        fn softmax_normalized_and_shift_invariant(
            logits in prop::collection::vec(-50.0f64..50.0, 1..8),
            shift in -100.0f64..100.0,
        ) {
            let p = softmax(&logits);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(p.iter().all(|x| *x >= 0.0));
            let shifted: Vec<f64> = logits.iter().map(|h| h + shift).collect();
            for (a, b) in p.iter().zip(softmax(&shifted)) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn encode_back_map_identity(mask in prop::collection::vec(any::<bool>(), 8)) {
            let s = nbc_sample();
            let visible: BTreeSet<usize> = (0..8).filter(|&i| mask[i] || s.is_argument(i)).collect();
            let enc = encode_sample(&s, &visible).unwrap();
            let back: BTreeSet<usize> = enc.visible_tokens().into_iter().collect();
            prop_assert_eq!(back, visible);
            prop_assert_eq!(enc.pieces.len(), enc.visible_tokens().len() + 4);
        }
    }
}
