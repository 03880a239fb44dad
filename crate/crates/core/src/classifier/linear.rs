use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{softmax, train::Trainable, Classifier, ClassifierError, EncodedSample, LabelSet, PredictionResult, Role};
use crate::corpus::RelationSample;

const DEFAULT_L2: f64 = 1e-4;

fn default_l2() -> f64 {
    DEFAULT_L2
}

/// Linear bag-of-words decider and the reference trainable implementation.
///
/// Each visible token contributes the sum of the weight vectors of its
/// features (`w:<word>` and a role-specific `a1:`/`a2:`/`c:` variant),
/// scaled by a presence gate that is 1 for every visible token:
///
/// ```text
/// logits = bias + sum_i gate_i * v(token_i)
/// ```
///
/// The gate is the token's input representation for saliency, so the
/// gradient of the cross-entropy against a reference label `r` is
/// `(p - onehot(r)) . v(token_i)`, and the score is its absolute value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBow {
    pub id: String,
    pub labels: LabelSet,
    pub bias: Vec<f64>,
    pub weights: BTreeMap<String, Vec<f64>>,
    #[serde(default = "default_l2")]
    pub l2: f64,
}

impl LinearBow {
    pub fn new(labels: LabelSet) -> Self {
        LinearBow {
            id: "linear-bow".into(),
            bias: vec![0.0; labels.len()],
            labels,
            weights: BTreeMap::new(),
            l2: DEFAULT_L2,
        }
    }

    /// Builds a fixed-weight model; every weight vector must have one entry
    /// per label.
    pub fn with_weights<S: Into<String>>(
        labels: LabelSet,
        bias: Vec<f64>,
        weights: impl IntoIterator<Item = (S, Vec<f64>)>,
    ) -> Result<Self, ClassifierError> {
        let n = labels.len();
        if bias.len() != n {
            return Err(ClassifierError::Config(format!(
                "bias has {} entries, expected {n}",
                bias.len()
            )));
        }
        let weights: BTreeMap<String, Vec<f64>> = weights.into_iter().map(|(k, v)| (k.into(), v)).collect();
        if let Some((k, v)) = weights.iter().find(|(_, v)| v.len() != n) {
            return Err(ClassifierError::Config(format!(
                "weights for {k:?} have {} entries, expected {n}",
                v.len()
            )));
        }
        Ok(LinearBow {
            id: "linear-bow".into(),
            labels,
            bias,
            weights,
            l2: DEFAULT_L2,
        })
    }

    pub fn token_features(text: &str, role: Role) -> [String; 2] {
        let lower = text.to_lowercase();
        let prefix = match role {
            Role::Arg1 => "a1",
            Role::Arg2 => "a2",
            Role::Context => "c",
        };
        [format!("{prefix}:{lower}"), format!("w:{lower}")]
    }

    fn token_vector(&self, text: &str, role: Role) -> Vec<f64> {
        let mut v = vec![0.0; self.labels.len()];
        for f in Self::token_features(text, role) {
            if let Some(w) = self.weights.get(&f) {
                for (a, b) in v.iter_mut().zip(w) {
                    *a += b;
                }
            }
        }
        v
    }

    /// Logits with an explicit gate per visible token (sequence order).
    pub fn logits_with_gates(&self, encoded: &EncodedSample, gates: &[f64]) -> Vec<f64> {
        let mut h = self.bias.clone();
        for ((_, text, role), g) in encoded.tokens().zip(gates) {
            for (a, b) in h.iter_mut().zip(self.token_vector(text, role)) {
                *a += g * b;
            }
        }
        h
    }

    /// Unfloored cross-entropy `logsumexp(h) - h[reference]` at the given gates.
    pub fn loss_with_gates(&self, encoded: &EncodedSample, gates: &[f64], reference: usize) -> f64 {
        let h = self.logits_with_gates(encoded, gates);
        let max = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + h.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        lse - h[reference]
    }

    fn logits(&self, encoded: &EncodedSample) -> Vec<f64> {
        let gates = vec![1.0; encoded.tokens().count()];
        self.logits_with_gates(encoded, &gates)
    }
}

impl Classifier for LinearBow {
    fn id(&self) -> &str {
        &self.id
    }

    fn label_set(&self) -> &LabelSet {
        &self.labels
    }

    fn predict_encoded(&self, encoded: &EncodedSample) -> Result<PredictionResult, ClassifierError> {
        Ok(PredictionResult::from_logits(&self.labels, &self.logits(encoded)))
    }

    fn saliency_encoded(&self, encoded: &EncodedSample, reference: usize) -> Result<Vec<f64>, ClassifierError> {
        let p = softmax(&self.logits(encoded));
        let mut residual = p;
        residual[reference] -= 1.0;
        Ok(encoded
            .tokens()
            .map(|(_, text, role)| {
                let v = self.token_vector(text, role);
                residual.iter().zip(&v).map(|(r, w)| r * w).sum::<f64>().abs()
            })
            .collect())
    }
}

impl Trainable for LinearBow {
    fn reset(&mut self) {
        self.bias = vec![0.0; self.labels.len()];
        self.weights.clear();
    }

    fn train_batch(&mut self, batch: &[(&EncodedSample, usize)], learning_rate: f64) -> f64 {
        let n_labels = self.labels.len();
        let mut grads: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut bias_grad = vec![0.0; n_labels];
        let mut loss = 0.0;
        for (enc, gold) in batch {
            let p = softmax(&self.logits(enc));
            loss += -p[*gold].max(super::PROB_FLOOR).ln();
            let mut residual = p;
            residual[*gold] -= 1.0;
            for (b, r) in bias_grad.iter_mut().zip(&residual) {
                *b += r;
            }
            for (_, text, role) in enc.tokens() {
                for f in Self::token_features(text, role) {
                    let g = grads.entry(f).or_insert_with(|| vec![0.0; n_labels]);
                    for (a, r) in g.iter_mut().zip(&residual) {
                        *a += r;
                    }
                }
            }
        }
        let scale = learning_rate / batch.len().max(1) as f64;
        for (b, g) in self.bias.iter_mut().zip(&bias_grad) {
            *b -= scale * g;
        }
        let l2 = self.l2;
        for (f, g) in grads {
            let w = self.weights.entry(f).or_insert_with(|| vec![0.0; n_labels]);
            for (wi, gi) in w.iter_mut().zip(&g) {
                *wi -= scale * gi + learning_rate * l2 * *wi;
            }
        }
        loss / batch.len().max(1) as f64
    }

    fn check_labels(&self, samples: &[RelationSample]) -> Result<(), ClassifierError> {
        for s in samples {
            let l = super::sample_label(s);
            if self.labels.index_of(l).is_none() {
                return Err(ClassifierError::UnknownLabel(l.to_string()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{encode_sample, saliency};
    use crate::corpus::fixtures::nbc_sample;

    fn worked_only() -> LinearBow {
        LinearBow::with_weights(
            LabelSet::new(["Employer", "Located"]).unwrap(),
            vec![0.0, 0.5],
            [("w:worked", vec![2.0, -1.0])],
        )
        .unwrap()
    }

    #[test]
    fn saliency_concentrates_on_weighted_word() {
        let s = nbc_sample();
        let sal = saliency(&worked_only(), &s, &s.all_tokens(), "Employer").unwrap();
        for (t, v) in sal.tokens.iter().zip(&sal.scores) {
            if *t == 3 {
                assert!(*v > 0.0);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn zero_model_has_zero_saliency() {
        let s = nbc_sample();
        let m = LinearBow::new(LabelSet::new(["a", "b", "c"]).unwrap());
        let sal = saliency(&m, &s, &s.all_tokens(), "b").unwrap();
        assert!(sal.scores.iter().all(|v| *v == 0.0));
        assert_eq!(sal.tokens.len(), 8);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = nbc_sample();
        let m = LinearBow::with_weights(
            LabelSet::new(["a", "b", "c"]).unwrap(),
            vec![0.1, -0.2, 0.3],
            [
                ("w:worked", vec![1.5, -0.5, 0.2]),
                ("c:at", vec![-0.3, 0.8, 0.1]),
                ("a2:nbc", vec![0.4, 0.4, -1.0]),
            ],
        )
        .unwrap();
        let enc = encode_sample(&s, &s.all_tokens()).unwrap();
        let analytic = m.saliency_encoded(&enc, 1).unwrap();
        let h = 1e-5;
        for k in 0..analytic.len() {
            let mut plus = vec![1.0; analytic.len()];
            let mut minus = plus.clone();
            plus[k] += h;
            minus[k] -= h;
            let fd = ((m.loss_with_gates(&enc, &plus, 1) - m.loss_with_gates(&enc, &minus, 1)) / (2.0 * h)).abs();
            assert!(
                (fd - analytic[k]).abs() <= 1e-6 * analytic[k].max(1e-3),
                "token {k}: {fd} vs {}",
                analytic[k]
            );
        }
    }

    #[test]
    fn weight_shape_is_checked() {
        let labels = LabelSet::new(["a", "b"]).unwrap();
        assert!(LinearBow::with_weights(labels.clone(), vec![0.0], Vec::<(String, Vec<f64>)>::new()).is_err());
        assert!(LinearBow::with_weights(labels, vec![0.0, 0.0], [("w:x", vec![1.0])]).is_err());
    }
}
