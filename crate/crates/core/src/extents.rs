//! Expanding and reductive semantic extents for any [`Classifier`].
//!
//! Both procedures start from `l_all`, the prediction on the full sentence.
//! The expanding procedure grows the argument-only candidate one token at a
//! time in priority order until the prediction matches `l_all` with
//! confidence above `theta`. The reductive procedure removes low-saliency
//! tokens with a beam search while the prediction stays equal to `l_all`.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{
    cross_entropy, encode_sample, predict_full, predict_subset, Classifier, ClassifierError, PredictionResult,
};
use crate::corpus::RelationSample;
use crate::io::{self, IoError};
use crate::syntax::{stage_assignment, PriorityAssignment, Stage};

#[derive(Debug, thiserror::Error)]
pub enum ExtentError {
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("invalid extent configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtentMode {
    Expanding,
    Reductive,
    Human,
}

impl std::str::FromStr for ExtentMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "expanding" => Ok(ExtentMode::Expanding),
            "reductive" => Ok(ExtentMode::Reductive),
            "human" => Ok(ExtentMode::Human),
            _ => Err(format!("unknown extent mode {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtentConfig {
    pub theta: f64,
    pub beam_width: usize,
    /// Reduction steps; `None` means the sentence length.
    pub max_steps: Option<usize>,
    /// Score tokens by occlusion when the decider has no gradients.
    pub occlusion_fallback: bool,
}

impl Default for ExtentConfig {
    fn default() -> Self {
        ExtentConfig {
            theta: 0.5,
            beam_width: 3,
            max_steps: None,
            occlusion_fallback: true,
        }
    }
}

impl ExtentConfig {
    pub fn validate(&self) -> Result<(), ExtentError> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(ExtentError::Config(format!("theta {} outside [0, 1]", self.theta)));
        }
        if self.beam_width == 0 {
            return Err(ExtentError::Config("beam_width must be at least 1".into()));
        }
        if self.max_steps == Some(0) {
            return Err(ExtentError::Config("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SaliencySource {
    Gradient,
    Occlusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticExtent {
    pub sample_id: String,
    pub decider_id: String,
    pub mode: ExtentMode,
    /// Sorted token indices.
    pub tokens: Vec<usize>,
    pub semantic_class: Stage,
    pub predicted: String,
    pub confidence: f64,
    pub threshold_met: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saliency: Option<SaliencySource>,
}

impl SemanticExtent {
    pub fn size(&self) -> usize {
        self.tokens.len()
    }
}

/// Grows the argument-only candidate in expansion order. Stops at the first
/// candidate (the initial one included) whose label equals `l_all` with
/// confidence strictly above `theta`. When the order is exhausted, the full
/// sentence is returned with `threshold_met` from the final check.
pub fn expanding_extent<C: Classifier + ?Sized>(
    c: &C,
    sample: &RelationSample,
    pa: &PriorityAssignment,
    cfg: &ExtentConfig,
) -> Result<SemanticExtent, ExtentError> {
    cfg.validate()?;
    let full = predict_full(c, sample)?;
    let accepts = |p: &PredictionResult| p.predicted_index == full.predicted_index && p.confidence > cfg.theta;

    let mut candidate = sample.argument_tokens();
    let mut class = Stage::OA;
    let mut pred = predict_subset(c, sample, &candidate)?;
    let mut met = accepts(&pred);
    for &t in &pa.order {
        if met {
            break;
        }
        candidate.insert(t);
        class = pa.stage(t);
        pred = predict_subset(c, sample, &candidate)?;
        met = accepts(&pred);
    }
    Ok(SemanticExtent {
        sample_id: sample.sample_id.clone(),
        decider_id: c.id().to_string(),
        mode: ExtentMode::Expanding,
        tokens: candidate.into_iter().collect(),
        semantic_class: class,
        predicted: pred.predicted,
        confidence: pred.confidence,
        threshold_met: met,
        saliency: None,
    })
}

/// Absolute change of the cross-entropy against `reference` when each visible
/// non-argument token is hidden. Argument tokens score 0; they are never
/// removed.
pub fn occlusion_saliency<C: Classifier + ?Sized>(
    c: &C,
    sample: &RelationSample,
    visible: &BTreeSet<usize>,
    reference: usize,
) -> Result<Vec<f64>, ClassifierError> {
    let base = cross_entropy(&predict_subset(c, sample, visible)?.distribution, reference);
    visible
        .iter()
        .map(|&t| {
            if sample.is_argument(t) {
                return Ok(0.0);
            }
            let mut reduced = visible.clone();
            reduced.remove(&t);
            let loss = cross_entropy(&predict_subset(c, sample, &reduced)?.distribution, reference);
            Ok((loss - base).abs())
        })
        .collect()
}

fn token_scores<C: Classifier + ?Sized>(
    c: &C,
    sample: &RelationSample,
    visible: &BTreeSet<usize>,
    reference: usize,
    cfg: &ExtentConfig,
) -> Result<(Vec<f64>, SaliencySource), ExtentError> {
    let enc = encode_sample(sample, visible)?;
    match c.saliency_encoded(&enc, reference) {
        Ok(s) => Ok((s, SaliencySource::Gradient)),
        Err(ClassifierError::Capability(_)) if cfg.occlusion_fallback => Ok((
            occlusion_saliency(c, sample, visible, reference)?,
            SaliencySource::Occlusion,
        )),
        Err(e) => Err(e.into()),
    }
}

fn candidate_key(set: &BTreeSet<usize>) -> (usize, Vec<usize>) {
    (set.len(), set.iter().copied().collect())
}

/// Saliency-guided beam search that removes tokens while the label stays
/// `l_all`. Each step ranks every beam candidate's removable tokens by
/// ascending saliency (recomputed on that candidate), tries the
/// `beam_width` least influential ones, and keeps the `beam_width` smallest
/// label-preserving results. `threshold_met` reports whether the returned
/// extent's confidence exceeds `theta`.
pub fn reductive_extent<C: Classifier + ?Sized>(
    c: &C,
    sample: &RelationSample,
    pa: &PriorityAssignment,
    cfg: &ExtentConfig,
) -> Result<SemanticExtent, ExtentError> {
    cfg.validate()?;
    let full_set = sample.all_tokens();
    let full = predict_subset(c, sample, &full_set)?;
    let target = full.predicted_index;
    let max_steps = cfg.max_steps.unwrap_or(sample.len());

    let mut cache: HashMap<Vec<usize>, PredictionResult> = HashMap::new();
    cache.insert(full_set.iter().copied().collect(), full.clone());
    let mut beam = vec![full_set];
    let mut source = None;

    for _ in 0..max_steps {
        let mut next: Vec<BTreeSet<usize>> = Vec::new();
        for cand in &beam {
            let removable: Vec<usize> = cand.iter().copied().filter(|&t| !sample.is_argument(t)).collect();
            if removable.is_empty() {
                continue;
            }
            let (scores, src) = token_scores(c, sample, cand, target, cfg)?;
            source = Some(src);
            let score_of: HashMap<usize, f64> = cand.iter().copied().zip(scores).collect();
            let mut ranked = removable;
            ranked.sort_by(|a, b| score_of[a].total_cmp(&score_of[b]).then(a.cmp(b)));
            for &t in ranked.iter().take(cfg.beam_width) {
                let mut reduced = cand.clone();
                reduced.remove(&t);
                let key: Vec<usize> = reduced.iter().copied().collect();
                let pred = match cache.get(&key) {
                    Some(p) => p.clone(),
                    None => {
                        let p = predict_subset(c, sample, &reduced)?;
                        cache.insert(key, p.clone());
                        p
                    }
                };
                if pred.predicted_index == target && !next.contains(&reduced) {
                    next.push(reduced);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        next.sort_by_key(candidate_key);
        next.truncate(cfg.beam_width);
        beam = next;
    }

    let best = beam.into_iter().min_by_key(candidate_key).expect("beam is never empty");
    let pred = cache[&best.iter().copied().collect::<Vec<_>>()].clone();
    let class = pa.class_of(best.iter().filter(|&&t| !sample.is_argument(t)));
    Ok(SemanticExtent {
        sample_id: sample.sample_id.clone(),
        decider_id: c.id().to_string(),
        mode: ExtentMode::Reductive,
        tokens: best.into_iter().collect(),
        semantic_class: class,
        predicted: pred.predicted,
        threshold_met: pred.confidence > cfg.theta,
        confidence: pred.confidence,
        saliency: source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtentFailure {
    pub sample_id: String,
    pub message: String,
}

/// Extents for many samples, in input order. A failing sample yields an
/// [`ExtentFailure`] without stopping the batch. Priority assignments absent
/// from `pa_map` are computed on the fly.
pub fn extent_batch<C: Classifier + ?Sized>(
    c: &C,
    samples: &[RelationSample],
    pa_map: &HashMap<String, PriorityAssignment>,
    cfg: &ExtentConfig,
    mode: ExtentMode,
) -> Vec<Result<SemanticExtent, ExtentFailure>> {
    samples
        .par_iter()
        .map(|s| {
            let computed;
            let pa = match pa_map.get(&s.sample_id) {
                Some(pa) => pa,
                None => {
                    computed = stage_assignment(s);
                    &computed
                }
            };
            let result = match mode {
                ExtentMode::Expanding => expanding_extent(c, s, pa, cfg),
                ExtentMode::Reductive => reductive_extent(c, s, pa, cfg),
                ExtentMode::Human => Err(ExtentError::Config("human extents come from annotation records".into())),
            };
            result.map_err(|e| ExtentFailure {
                sample_id: s.sample_id.clone(),
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn save_extents(path: &Path, extents: &[SemanticExtent]) -> Result<(), ExtentError> {
    Ok(io::write_jsonl(path, extents)?)
}

pub fn load_extents(path: &Path) -> Result<Vec<SemanticExtent>, ExtentError> {
    Ok(io::read_jsonl(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{EncodedSample, KeywordMock, KeywordRule, LabelSet, LinearBow};
    use crate::corpus::fixtures::{nbc_mock, nbc_sample};
    use crate::synth::{random_sample, DEFAULT_WORDS};
    use rand::SeedableRng;

    fn labels() -> LabelSet {
        LabelSet::new(["Employer", "Located", "Family", "Member"]).unwrap()
    }

    #[test]
    fn nbc_expanding_reveals_at_then_worked() {
        let s = nbc_sample();
        let pa = stage_assignment(&s);
        let e = expanding_extent(&nbc_mock(), &s, &pa, &ExtentConfig::default()).unwrap();
        assert_eq!(e.tokens, vec![0, 3, 4, 5, 6]);
        assert_eq!(e.semantic_class, Stage::VOP);
        assert_eq!(e.predicted, "Employer");
        assert!(e.threshold_met);
        assert_eq!(e.mode, ExtentMode::Expanding);
    }

    #[test]
    fn argument_keyed_mock_stops_at_oa() {
        let s = nbc_sample();
        let mock = KeywordMock::new(
            labels(),
            vec![KeywordRule {
                keyword: "NBC".into(),
                label: "Employer".into(),
                confidence: 0.9,
            }],
            "Located",
            0.4,
        )
        .unwrap();
        let e = expanding_extent(&mock, &s, &stage_assignment(&s), &ExtentConfig::default()).unwrap();
        assert_eq!(e.tokens, vec![0, 5, 6]);
        assert_eq!(e.semantic_class, Stage::OA);
    }

    #[test]
    fn unreachable_theta_returns_full_sentence() {
        let s = nbc_sample();
        let cfg = ExtentConfig {
            theta: 1.0,
            ..Default::default()
        };
        let e = expanding_extent(&nbc_mock(), &s, &stage_assignment(&s), &cfg).unwrap();
        assert_eq!(e.tokens, (0..8).collect::<Vec<_>>());
        assert_eq!(e.semantic_class, Stage::A);
        assert!(!e.threshold_met);
    }

    fn nbc_linear() -> LinearBow {
        LinearBow::with_weights(
            labels(),
            vec![0.0, 0.3, 0.0, 0.0],
            [
                ("w:worked", vec![3.0, 0.0, 0.0, 0.0]),
                ("a1:he", vec![0.2, 0.0, 0.0, 0.1]),
                ("a2:nbc", vec![0.1, 0.2, 0.0, 0.0]),
            ],
        )
        .unwrap()
    }

    fn brute_force_min(c: &dyn Classifier, s: &RelationSample) -> BTreeSet<usize> {
        let target = predict_full(c, s).unwrap().predicted_index;
        let free: Vec<usize> = (0..s.len()).filter(|&i| !s.is_argument(i)).collect();
        let mut best: Option<BTreeSet<usize>> = None;
        for mask in 0u32..(1 << free.len()) {
            let mut set = s.argument_tokens();
            for (b, &t) in free.iter().enumerate() {
                if mask & (1 << b) != 0 {
                    set.insert(t);
                }
            }
            if predict_subset(c, s, &set).unwrap().predicted_index == target
                && best.as_ref().is_none_or(|b| candidate_key(&set) < candidate_key(b))
            {
                best = Some(set);
            }
        }
        best.unwrap()
    }

    #[test]
    fn nbc_reductive_keeps_worked() {
        let s = nbc_sample();
        let m = nbc_linear();
        let cfg = ExtentConfig {
            beam_width: 8,
            ..Default::default()
        };
        let e = reductive_extent(&m, &s, &stage_assignment(&s), &cfg).unwrap();
        assert_eq!(e.tokens, vec![0, 3, 5, 6]);
        assert_eq!(e.semantic_class, Stage::VOP);
        assert_eq!(e.saliency, Some(SaliencySource::Gradient));
        let expected: Vec<usize> = brute_force_min(&m, &s).into_iter().collect();
        assert_eq!(e.tokens, expected);
    }

    #[test]
    fn constant_model_reduces_to_arguments() {
        let s = nbc_sample();
        let m = LinearBow::with_weights(labels(), vec![1.0, 0.0, 0.0, 0.0], Vec::<(String, Vec<f64>)>::new()).unwrap();
        let e = reductive_extent(&m, &s, &stage_assignment(&s), &ExtentConfig::default()).unwrap();
        assert_eq!(e.tokens, vec![0, 5, 6]);
        assert_eq!(e.semantic_class, Stage::OA);
    }

    /// Predicts label 0 only when every token of the sentence is visible.
    struct NeedsAll {
        labels: LabelSet,
        n: usize,
    }

    impl Classifier for NeedsAll {
        fn id(&self) -> &str {
            "needs-all"
        }
        fn label_set(&self) -> &LabelSet {
            &self.labels
        }
        fn predict_encoded(&self, enc: &EncodedSample) -> Result<PredictionResult, ClassifierError> {
            let all = enc.visible_tokens().len() == self.n;
            let d = if all { vec![0.8, 0.2] } else { vec![0.3, 0.7] };
            Ok(PredictionResult::from_distribution(&self.labels, d))
        }
    }

    #[test]
    fn every_removal_flips_keeps_full_sentence() {
        let s = nbc_sample();
        let m = NeedsAll {
            labels: LabelSet::new(["x", "y"]).unwrap(),
            n: 8,
        };
        // exhaustive check that each single removal flips the label
        for t in 0..8 {
            if !s.is_argument(t) {
                let mut v = s.all_tokens();
                v.remove(&t);
                assert_eq!(predict_subset(&m, &s, &v).unwrap().predicted, "y");
            }
        }
        let e = reductive_extent(&m, &s, &stage_assignment(&s), &ExtentConfig::default()).unwrap();
        assert_eq!(e.tokens.len(), 8);
        assert_eq!(e.saliency, Some(SaliencySource::Occlusion));
        assert_eq!(e.semantic_class, Stage::A);
    }

    #[test]
    fn no_saliency_without_fallback_is_capability_error() {
        let s = nbc_sample();
        let cfg = ExtentConfig {
            occlusion_fallback: false,
            ..Default::default()
        };
        let err = reductive_extent(&nbc_mock(), &s, &stage_assignment(&s), &cfg).unwrap_err();
        assert!(matches!(err, ExtentError::Classifier(ClassifierError::Capability(_))));
    }

    #[test]
    fn invalid_config_rejected() {
        let s = nbc_sample();
        let pa = stage_assignment(&s);
        for cfg in [
            ExtentConfig {
                theta: 1.5,
                ..Default::default()
            },
            ExtentConfig {
                beam_width: 0,
                ..Default::default()
            },
        ] {
            assert!(matches!(
                expanding_extent(&nbc_mock(), &s, &pa, &cfg),
                Err(ExtentError::Config(_))
            ));
        }
    }

    struct FailsOn {
        inner: KeywordMock,
        bad: String,
    }

    impl Classifier for FailsOn {
        fn id(&self) -> &str {
            "fails-on"
        }
        fn label_set(&self) -> &LabelSet {
            self.inner.label_set()
        }
        fn predict_encoded(&self, enc: &EncodedSample) -> Result<PredictionResult, ClassifierError> {
            if enc.tokens().any(|(_, t, _)| t == self.bad) {
                return Err(ClassifierError::Contract("boom".into()));
            }
            self.inner.predict_encoded(enc)
        }
    }

    #[test]
    fn batch_records_failures_and_matches_item_calls() {
        let mut samples = vec![nbc_sample(), nbc_sample(), nbc_sample()];
        samples[1].sample_id = "broken".into();
        let mut sent = (*samples[1].sentence).clone();
        sent.tokens[7].text = "!".into();
        samples[1].sentence = std::sync::Arc::new(sent);
        samples[2].sample_id = "third".into();
        let c = FailsOn {
            inner: nbc_mock(),
            bad: "!".into(),
        };
        let cfg = ExtentConfig::default();
        let out = extent_batch(&c, &samples, &HashMap::new(), &cfg, ExtentMode::Expanding);
        assert_eq!(out.len(), 3);
        assert!(out[0].is_ok() && out[2].is_ok());
        assert_eq!(out[1].as_ref().unwrap_err().sample_id, "broken");
        assert!(extent_batch(&c, &[], &HashMap::new(), &cfg, ExtentMode::Expanding).is_empty());

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<RelationSample> = (0..20)
            .map(|_| random_sample(&mut rng, 2..=10, &DEFAULT_WORDS))
            .collect();
        let pa_map: HashMap<String, PriorityAssignment> = samples
            .iter()
            .map(|s| (s.sample_id.clone(), stage_assignment(s)))
            .collect();
        let m = nbc_mock();
        for mode in [ExtentMode::Expanding, ExtentMode::Reductive] {
            let batch = extent_batch(&m, &samples, &pa_map, &cfg, mode);
            for (s, b) in samples.iter().zip(batch) {
                let pa = &pa_map[&s.sample_id];
                let single = match mode {
                    ExtentMode::Expanding => expanding_extent(&m, s, pa, &cfg),
                    _ => reductive_extent(&m, s, pa, &cfg),
                }
                .unwrap();
                assert_eq!(b.unwrap(), single);
            }
        }
    }

    #[test]
    fn extent_file_round_trip() {
        let s = nbc_sample();
        let e = expanding_extent(&nbc_mock(), &s, &stage_assignment(&s), &ExtentConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        save_extents(&p, std::slice::from_ref(&e)).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"semantic_class\":\"VOP\"") && text.contains("\"mode\":\"expanding\""));
        assert_eq!(load_extents(&p).unwrap(), vec![e]);
    }
}
