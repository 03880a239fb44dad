//! Evaluation: F1, agreement between deciders, extent sizes, confidence
//! breakdowns by semantic class, class histograms and adversarial accuracy.
//!
//! Standard deviations are population standard deviations throughout.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::classifier::{predict_full, Classifier, ClassifierError};
use crate::corpus::{ArgumentSpan, RelationSample, Sentence, Token};
use crate::extents::SemanticExtent;
use crate::io::{self, IoError};
use crate::syntax::Stage;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("length mismatch: {0} gold vs {1} predicted labels")]
    LengthMismatch(usize, usize),
    #[error("no items to evaluate")]
    Empty,
    #[error("sample ids do not match: {0}")]
    IdMismatch(String),
    #[error("adversarial file: {0}")]
    Adversarial(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(MeanStd {
            mean,
            std: var.sqrt(),
            count: values.len(),
        })
    }
}

// ---------------------------------------------------------------------------
// F1

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub predicted: usize,
    /// Whether the label occurs in gold or predictions (and so in the macro mean).
    pub present: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub per_label: BTreeMap<String, LabelScores>,
    /// gold -> predicted -> count
    pub confusion: BTreeMap<String, BTreeMap<String, usize>>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Multi-class F1 for single-label decisions. Micro-F1 equals accuracy;
/// macro-F1 averages per-label F1 over labels occurring in gold or
/// predictions. Labels of `labels` that never occur are reported with
/// `present = false`.
pub fn f1_scores<S: AsRef<str>>(
    gold: &[S],
    pred: &[S],
    labels: Option<&crate::classifier::LabelSet>,
) -> Result<EvalReport, MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::LengthMismatch(gold.len(), pred.len()));
    }
    if gold.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut confusion: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut tp: BTreeMap<&str, usize> = BTreeMap::new();
    let mut support: BTreeMap<&str, usize> = BTreeMap::new();
    let mut predicted: BTreeMap<&str, usize> = BTreeMap::new();
    let mut correct = 0usize;
    for (g, p) in gold.iter().zip(pred) {
        let (g, p) = (g.as_ref(), p.as_ref());
        *confusion.entry(g.into()).or_default().entry(p.into()).or_default() += 1;
        *support.entry(g).or_default() += 1;
        *predicted.entry(p).or_default() += 1;
        if g == p {
            correct += 1;
            *tp.entry(g).or_default() += 1;
        }
    }
    let mut all: BTreeSet<&str> = support.keys().chain(predicted.keys()).copied().collect();
    if let Some(ls) = labels {
        all.extend(ls.labels().iter().map(String::as_str));
    }
    let mut per_label = BTreeMap::new();
    let mut macro_sum = 0.0;
    let mut macro_n = 0usize;
    for l in all {
        let t = tp.get(l).copied().unwrap_or(0);
        let s = support.get(l).copied().unwrap_or(0);
        let p = predicted.get(l).copied().unwrap_or(0);
        let precision = ratio(t, p);
        let recall = ratio(t, s);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let present = s + p > 0;
        if present {
            macro_sum += f1;
            macro_n += 1;
        }
        per_label.insert(
            l.to_string(),
            LabelScores {
                precision,
                recall,
                f1,
                support: s,
                predicted: p,
                present,
            },
        );
    }
    Ok(EvalReport {
        count: gold.len(),
        micro_f1: ratio(correct, gold.len()),
        macro_f1: macro_sum / macro_n as f64,
        per_label,
        confusion,
    })
}

// ---------------------------------------------------------------------------
// Agreement

fn by_id<'a, T>(items: &'a [T], id: impl Fn(&T) -> &str) -> BTreeMap<&'a str, &'a T>
where
    T: 'a,
{
    items.iter().map(|x| (id(x), x)).collect::<BTreeMap<_, _>>()
}

fn aligned<'a, T>(a: &'a [T], b: &'a [T], id: impl Fn(&T) -> &str + Copy) -> Result<Vec<(&'a T, &'a T)>, MetricsError> {
    let ma = by_id(a, |x| id(x));
    let mb = by_id(b, |x| id(x));
    if ma.len() != a.len() || mb.len() != b.len() {
        return Err(MetricsError::IdMismatch("duplicate sample ids".into()));
    }
    if ma.keys().ne(mb.keys()) {
        let only: Vec<&str> = ma
            .keys()
            .filter(|k| !mb.contains_key(*k))
            .chain(mb.keys().filter(|k| !ma.contains_key(*k)))
            .copied()
            .take(5)
            .collect();
        return Err(MetricsError::IdMismatch(format!("unmatched ids {only:?}")));
    }
    if ma.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(ma.into_iter().map(|(k, x)| (x, mb[k])).collect())
}

/// Fraction of samples on which both deciders chose the same label
/// (REJECT counts as a label).
pub fn label_agreement(a: &[SemanticExtent], b: &[SemanticExtent]) -> Result<f64, MetricsError> {
    let pairs = aligned(a, b, |e| e.sample_id.as_str())?;
    let same = pairs.iter().filter(|(x, y)| x.predicted == y.predicted).count();
    Ok(ratio(same, pairs.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Fine,
    Coarse,
}

/// Fine compares the six classes; coarse compares LOCAL (OA, AS) against
/// CONTEXT (VOP, BA, E, A).
pub fn semantic_class_agreement(
    a: &[SemanticExtent],
    b: &[SemanticExtent],
    granularity: Granularity,
) -> Result<f64, MetricsError> {
    let pairs = aligned(a, b, |e| e.sample_id.as_str())?;
    let same = pairs
        .iter()
        .filter(|(x, y)| match granularity {
            Granularity::Fine => x.semantic_class == y.semantic_class,
            Granularity::Coarse => x.semantic_class.is_local() == y.semantic_class.is_local(),
        })
        .count();
    Ok(ratio(same, pairs.len()))
}

pub fn extent_size_stats(extents: &[SemanticExtent]) -> Result<MeanStd, MetricsError> {
    let sizes: Vec<f64> = extents.iter().map(|e| e.size() as f64).collect();
    MeanStd::of(&sizes).ok_or(MetricsError::Empty)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeciderSize {
    pub decider_id: String,
    pub size: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub count: usize,
    pub label_agreement: f64,
    pub sc_coarse: f64,
    pub sc_fine: f64,
    pub size_mean_std: Vec<DeciderSize>,
}

pub fn agreement_report(a: &[SemanticExtent], b: &[SemanticExtent]) -> Result<AgreementReport, MetricsError> {
    let decider = |xs: &[SemanticExtent]| {
        let ids: BTreeSet<&str> = xs.iter().map(|e| e.decider_id.as_str()).collect();
        ids.into_iter().collect::<Vec<_>>().join("+")
    };
    Ok(AgreementReport {
        count: a.len(),
        label_agreement: label_agreement(a, b)?,
        sc_coarse: semantic_class_agreement(a, b, Granularity::Coarse)?,
        sc_fine: semantic_class_agreement(a, b, Granularity::Fine)?,
        size_mean_std: vec![
            DeciderSize {
                decider_id: decider(a),
                size: extent_size_stats(a)?,
            },
            DeciderSize {
                decider_id: decider(b),
                size: extent_size_stats(b)?,
            },
        ],
    })
}

// ---------------------------------------------------------------------------
// Confidence breakdown

/// Full-sentence prediction of a decider on one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentencePrediction {
    pub sample_id: String,
    pub predicted: String,
    pub confidence: f64,
    pub n_tokens: usize,
    #[serde(default)]
    pub gold: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub name: String,
    pub count: usize,
    pub confidence: Option<MeanStd>,
    pub micro_f1: Option<f64>,
    pub macro_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownTable {
    pub rows: Vec<BreakdownRow>,
}

impl BreakdownTable {
    pub fn row(&self, name: &str) -> Option<&BreakdownRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

pub const ROW_COMPLETE: &str = "Complete dataset";
pub const ROW_ONLY_ARGS: &str = "Only Arguments";
pub const ROW_NOT_ONLY_ARGS: &str = "Not only arguments";
pub const ROW_ALL_TOKENS: &str = "All tokens in extent";
pub const ROW_NOT_ALL_TOKENS: &str = "Not all tokens in extent";

/// Confidence and F1 of the full-sentence predictions, overall and split by
/// whether the extent is argument-only and whether it spans the whole
/// sentence.
pub fn confidence_breakdown(
    extents: &[SemanticExtent],
    predictions: &[SentencePrediction],
    gold: &HashMap<String, String>,
) -> Result<BreakdownTable, MetricsError> {
    let preds: HashMap<&str, &SentencePrediction> = predictions.iter().map(|p| (p.sample_id.as_str(), p)).collect();
    let mut rows_in: Vec<(&SemanticExtent, &SentencePrediction, &str)> = Vec::with_capacity(extents.len());
    for e in extents {
        let p = preds
            .get(e.sample_id.as_str())
            .ok_or_else(|| MetricsError::IdMismatch(format!("no prediction for {:?}", e.sample_id)))?;
        let g = gold
            .get(&e.sample_id)
            .ok_or_else(|| MetricsError::IdMismatch(format!("no gold label for {:?}", e.sample_id)))?;
        rows_in.push((e, p, g.as_str()));
    }
    let row = |name: &str, keep: &dyn Fn(&SemanticExtent, &SentencePrediction) -> bool| {
        let sel: Vec<_> = rows_in.iter().filter(|(e, p, _)| keep(e, p)).collect();
        let confs: Vec<f64> = sel.iter().map(|(_, p, _)| p.confidence).collect();
        let g: Vec<&str> = sel.iter().map(|(_, _, g)| *g).collect();
        let pr: Vec<&str> = sel.iter().map(|(_, p, _)| p.predicted.as_str()).collect();
        let f1 = f1_scores(&g, &pr, None).ok();
        BreakdownRow {
            name: name.to_string(),
            count: sel.len(),
            confidence: MeanStd::of(&confs),
            micro_f1: f1.as_ref().map(|r| r.micro_f1),
            macro_f1: f1.as_ref().map(|r| r.macro_f1),
        }
    };
    Ok(BreakdownTable {
        rows: vec![
            row(ROW_COMPLETE, &|_, _| true),
            row(ROW_ONLY_ARGS, &|e, _| e.semantic_class == Stage::OA),
            row(ROW_NOT_ONLY_ARGS, &|e, _| e.semantic_class != Stage::OA),
            row(ROW_ALL_TOKENS, &|e, p| e.size() == p.n_tokens),
            row(ROW_NOT_ALL_TOKENS, &|e, p| e.size() != p.n_tokens),
        ],
    })
}

// ---------------------------------------------------------------------------
// Class histograms

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleGroup {
    Local,
    SentenceLevel,
    Unknown,
}

impl SampleGroup {
    pub fn of(sample: &RelationSample) -> SampleGroup {
        match sample.syntactic_class {
            Some(c) if c.is_sentence_level() => SampleGroup::SentenceLevel,
            Some(_) => SampleGroup::Local,
            None => SampleGroup::Unknown,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SampleGroup::Local => "local",
            SampleGroup::SentenceLevel => "sentence_level",
            SampleGroup::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassHistograms {
    pub groups: BTreeMap<SampleGroup, BTreeMap<Stage, usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub class: Stage,
    pub count: usize,
    pub group: SampleGroup,
}

impl ClassHistograms {
    pub fn rows(&self) -> Vec<HistogramRow> {
        self.groups
            .iter()
            .flat_map(|(g, h)| {
                h.iter().map(|(c, n)| HistogramRow {
                    class: *c,
                    count: *n,
                    group: *g,
                })
            })
            .collect()
    }
}

/// Semantic-class counts for local and sentence-level samples. Extents whose
/// sample is unknown or lacks a syntactic class land in the unknown group.
pub fn class_histograms(extents: &[SemanticExtent], samples: &[RelationSample]) -> ClassHistograms {
    let groups: HashMap<&str, SampleGroup> = samples
        .iter()
        .map(|s| (s.sample_id.as_str(), SampleGroup::of(s)))
        .collect();
    let mut out = ClassHistograms::default();
    for e in extents {
        let g = groups
            .get(e.sample_id.as_str())
            .copied()
            .unwrap_or(SampleGroup::Unknown);
        *out.groups.entry(g).or_default().entry(e.semantic_class).or_default() += 1;
    }
    out
}

// ---------------------------------------------------------------------------
// Adversarial evaluation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialGroup {
    pub group_id: String,
    pub original: RelationSample,
    pub variants: Vec<RelationSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub group_id: String,
    pub variants: usize,
    pub changed: usize,
    pub accuracy: f64,
    pub original_prediction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRejection {
    pub group_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialReport {
    pub groups: Vec<GroupResult>,
    /// Across per-group accuracies.
    pub accuracy: Option<MeanStd>,
    /// Across all variant predictions.
    pub confidence: Option<MeanStd>,
    pub rejected: Vec<GroupRejection>,
}

fn check_group(g: &AdversarialGroup) -> Result<(), String> {
    if g.variants.is_empty() {
        return Err("group has no variants".into());
    }
    let a1 = g.original.arg_text(&g.original.arg1);
    let a2 = g.original.arg_text(&g.original.arg2);
    for v in &g.variants {
        let (v1, v2) = (v.arg_text(&v.arg1), v.arg_text(&v.arg2));
        if v1 != a1 || v2 != a2 {
            return Err(format!(
                "variant {} changes argument texts ({v1:?}, {v2:?}) != ({a1:?}, {a2:?})",
                v.sample_id
            ));
        }
    }
    Ok(())
}

/// A variant counts as correct when its prediction differs from the
/// prediction on its group's original. Groups whose variants alter the
/// argument texts are rejected and excluded from the aggregates.
pub fn adversarial_eval<C: Classifier + ?Sized>(
    c: &C,
    groups: &[AdversarialGroup],
) -> Result<AdversarialReport, MetricsError> {
    let mut results = Vec::new();
    let mut rejected = Vec::new();
    let mut confidences = Vec::new();
    for g in groups {
        if let Err(message) = check_group(g) {
            rejected.push(GroupRejection {
                group_id: g.group_id.clone(),
                message,
            });
            continue;
        }
        let orig = predict_full(c, &g.original)?;
        let mut changed = 0;
        for v in &g.variants {
            let p = predict_full(c, v)?;
            confidences.push(p.confidence);
            if p.predicted_index != orig.predicted_index {
                changed += 1;
            }
        }
        results.push(GroupResult {
            group_id: g.group_id.clone(),
            variants: g.variants.len(),
            changed,
            accuracy: ratio(changed, g.variants.len()),
            original_prediction: orig.predicted,
        });
    }
    let accs: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
    Ok(AdversarialReport {
        accuracy: MeanStd::of(&accs),
        confidence: MeanStd::of(&confidences),
        groups: results,
        rejected,
    })
}

/// Token entry of an adversarial line: a bare surface string or a parsed
/// token object in corpus-file form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AdversarialToken {
    Parsed(crate::corpus::RawToken),
    Surface(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialLine {
    pub group_id: String,
    pub role: String,
    pub text: String,
    pub arg1_char: [usize; 2],
    pub arg2_char: [usize; 2],
    pub tokens: Vec<AdversarialToken>,
    #[serde(default)]
    pub intended_label: Option<String>,
}

fn line_to_sample(line: &AdversarialLine, id: String) -> Result<RelationSample, String> {
    let chars: Vec<char> = line.text.chars().collect();
    let mut tokens = Vec::with_capacity(line.tokens.len());
    let mut cursor = 0usize;
    for (i, t) in line.tokens.iter().enumerate() {
        let tok = match t {
            AdversarialToken::Parsed(r) => Token {
                index: i,
                text: r.text.clone(),
                char_start: r.start,
                char_end: r.end,
                pos: r.pos.clone(),
                head: if r.head < 0 { None } else { Some(r.head as usize) },
                deprel: r.deprel.clone(),
            },
            AdversarialToken::Surface(s) => {
                let needle: Vec<char> = s.chars().collect();
                let start = (cursor..=chars.len().saturating_sub(needle.len()))
                    .find(|&p| chars[p..p + needle.len()] == needle[..])
                    .ok_or_else(|| format!("token {s:?} not found in text"))?;
                // flat tree: the first token governs all others
                Token {
                    index: i,
                    text: s.clone(),
                    char_start: start,
                    char_end: start + needle.len(),
                    pos: String::new(),
                    head: if i == 0 { None } else { Some(0) },
                    deprel: if i == 0 { "root".into() } else { "dep".into() },
                }
            }
        };
        cursor = tok.char_end;
        tokens.push(tok);
    }
    let sentence = Sentence {
        doc_id: line.group_id.clone(),
        sent_index: 0,
        text: line.text.clone(),
        tokens,
    };
    sentence.validate().map_err(|(f, m)| format!("{f}: {m}"))?;
    let span = |c: [usize; 2]| -> Result<ArgumentSpan, String> {
        let first = sentence.tokens.iter().position(|t| t.char_end > c[0]);
        let last = sentence.tokens.iter().rposition(|t| t.char_start < c[1]);
        match (first, last) {
            (Some(a), Some(b)) if a <= b && c[0] < c[1] && c[1] <= chars.len() => Ok(ArgumentSpan::new(a, b + 1)),
            _ => Err(format!("argument span {c:?} does not cover any token")),
        }
    };
    let sample = RelationSample {
        sample_id: id,
        arg1: span(line.arg1_char)?,
        arg2: span(line.arg2_char)?,
        sentence: Arc::new(sentence),
        label: line.intended_label.clone(),
        syntactic_class: None,
        extent_span: None,
        genre: "adversarial".into(),
        swapped: false,
    };
    crate::corpus::canonicalize_sample(sample).map_err(|e| e.to_string())
}

/// Parses an adversarial file into groups. Lines that fail to parse into a
/// valid sample, and groups without exactly one original, are returned as
/// rejections.
pub fn load_adversarial(path: &Path) -> Result<(Vec<AdversarialGroup>, Vec<GroupRejection>), MetricsError> {
    let lines: Vec<AdversarialLine> = io::read_jsonl(path)?;
    let mut order: Vec<String> = Vec::new();
    type Bucket = (Vec<RelationSample>, Vec<RelationSample>, Vec<String>);
    let mut buckets: HashMap<String, Bucket> = HashMap::new();
    for (i, line) in lines.iter().enumerate() {
        if !buckets.contains_key(&line.group_id) {
            order.push(line.group_id.clone());
        }
        let bucket = buckets.entry(line.group_id.clone()).or_default();
        let id = format!("{}:{}:{i}", line.group_id, line.role);
        match line_to_sample(line, id) {
            Ok(s) => match line.role.as_str() {
                "original" => bucket.0.push(s),
                "variant" => bucket.1.push(s),
                other => bucket.2.push(format!("line {}: unknown role {other:?}", i + 1)),
            },
            Err(m) => bucket.2.push(format!("line {}: {m}", i + 1)),
        }
    }
    let mut groups = Vec::new();
    let mut rejected = Vec::new();
    for gid in order {
        let (mut originals, variants, errors) = buckets.remove(&gid).unwrap();
        if !errors.is_empty() {
            rejected.push(GroupRejection {
                group_id: gid,
                message: errors.join("; "),
            });
        } else if originals.len() != 1 {
            rejected.push(GroupRejection {
                group_id: gid,
                message: format!("expected one original, found {}", originals.len()),
            });
        } else {
            groups.push(AdversarialGroup {
                group_id: gid,
                original: originals.pop().unwrap(),
                variants,
            });
        }
    }
    Ok((groups, rejected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{KeywordMock, KeywordRule, LabelSet};
    use crate::corpus::fixtures::nbc_sample;
    use crate::extents::ExtentMode;
    use proptest::prelude::*;

    fn ext(id: &str, class: Stage, label: &str, size: usize) -> SemanticExtent {
        SemanticExtent {
            sample_id: id.into(),
            decider_id: "d".into(),
            mode: ExtentMode::Expanding,
            tokens: (0..size).collect(),
            semantic_class: class,
            predicted: label.into(),
            confidence: 0.9,
            threshold_met: true,
            saliency: None,
        }
    }

    #[test]
    fn f1_all_correct() {
        let g = ["A", "B", "C"];
        let r = f1_scores(&g, &g, None).unwrap();
        assert_eq!((r.micro_f1, r.macro_f1), (1.0, 1.0));
    }

    #[test]
    fn f1_hand_computed() {
        let r = f1_scores(&["A", "A", "B", "B"], &["A", "B", "B", "B"], None).unwrap();
        assert!((r.micro_f1 - 0.75).abs() < 1e-12);
        // F1_A = 2/3 (p=1, r=.5), F1_B = 4/5 (p=2/3, r=1)
        assert!((r.per_label["A"].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.per_label["B"].f1 - 0.8).abs() < 1e-12);
        assert!((r.macro_f1 - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
        assert_eq!(r.confusion["A"]["B"], 1);
    }

    #[test]
    fn f1_absent_label_excluded_from_macro() {
        let ls = LabelSet::new(["A", "B", "Z"]).unwrap();
        let r = f1_scores(&["A", "B"], &["A", "A"], Some(&ls)).unwrap();
        assert!(!r.per_label["Z"].present);
        // F1_A = 2/3, F1_B = 0
        assert!((r.macro_f1 - 1.0 / 3.0).abs() < 1e-12);
        assert!(matches!(
            f1_scores(&["A"], &["A", "B"], None),
            Err(MetricsError::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn agreement_examples() {
        let a: Vec<_> = ["1", "2", "3", "4"].iter().map(|i| ext(i, Stage::OA, "X", 3)).collect();
        assert_eq!(label_agreement(&a, &a).unwrap(), 1.0);
        let mut b = a.clone();
        b[2].predicted = "REJECT".into();
        assert_eq!(label_agreement(&a, &b).unwrap(), 0.75);
        let c = vec![ext("9", Stage::OA, "X", 1)];
        assert!(matches!(label_agreement(&a, &c), Err(MetricsError::IdMismatch(_))));
    }

    #[test]
    fn class_agreement_granularity() {
        let pairs = [
            (Stage::OA, Stage::AS, true, false),
            (Stage::VOP, Stage::BA, true, false),
            (Stage::OA, Stage::VOP, false, false),
            (Stage::E, Stage::E, true, true),
        ];
        for (x, y, coarse, fine) in pairs {
            let a = vec![ext("1", x, "L", 2)];
            let b = vec![ext("1", y, "L", 2)];
            assert_eq!(
                semantic_class_agreement(&a, &b, Granularity::Coarse).unwrap() == 1.0,
                coarse
            );
            assert_eq!(
                semantic_class_agreement(&a, &b, Granularity::Fine).unwrap() == 1.0,
                fine
            );
        }
    }

    #[test]
    fn size_stats() {
        let xs = vec![ext("1", Stage::OA, "L", 3), ext("2", Stage::OA, "L", 5)];
        let s = extent_size_stats(&xs).unwrap();
        assert_eq!((s.mean, s.std), (4.0, 1.0));
        assert_eq!(extent_size_stats(&xs[..1]).unwrap().std, 0.0);
        assert!(extent_size_stats(&[]).is_err());
    }

    fn pred(id: &str, label: &str, conf: f64, n: usize) -> SentencePrediction {
        SentencePrediction {
            sample_id: id.into(),
            predicted: label.into(),
            confidence: conf,
            n_tokens: n,
            gold: None,
        }
    }

    #[test]
    fn breakdown_all_oa_matches_complete_row() {
        let extents = vec![ext("1", Stage::OA, "A", 2), ext("2", Stage::OA, "B", 2)];
        let preds = vec![pred("1", "A", 0.9, 5), pred("2", "A", 0.7, 5)];
        let gold: HashMap<String, String> = [("1", "A"), ("2", "B")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let t = confidence_breakdown(&extents, &preds, &gold).unwrap();
        let (c, oa) = (t.row(ROW_COMPLETE).unwrap(), t.row(ROW_ONLY_ARGS).unwrap());
        assert_eq!(
            (c.count, c.confidence, c.micro_f1, c.macro_f1),
            (oa.count, oa.confidence, oa.micro_f1, oa.macro_f1)
        );
        let empty = t.row(ROW_NOT_ONLY_ARGS).unwrap();
        assert_eq!(empty.count, 0);
        assert!(empty.confidence.is_none() && empty.micro_f1.is_none());
        assert!(confidence_breakdown(&extents, &preds[..1], &gold).is_err());
    }

    #[test]
    fn histograms_group_by_syntactic_class() {
        let mut verbal = nbc_sample();
        verbal.sample_id = "v".into();
        let mut poss = nbc_sample();
        poss.sample_id = "p".into();
        poss.syntactic_class = Some(crate::corpus::SyntacticClass::Possessive);
        let mut none = nbc_sample();
        none.sample_id = "n".into();
        none.syntactic_class = None;
        let extents = vec![
            ext("v", Stage::VOP, "L", 4),
            ext("p", Stage::OA, "L", 2),
            ext("n", Stage::A, "L", 8),
        ];
        let h = class_histograms(&extents, &[verbal, poss, none]);
        assert_eq!(h.groups[&SampleGroup::SentenceLevel], BTreeMap::from([(Stage::VOP, 1)]));
        assert_eq!(h.groups[&SampleGroup::Local], BTreeMap::from([(Stage::OA, 1)]));
        assert_eq!(h.groups[&SampleGroup::Unknown], BTreeMap::from([(Stage::A, 1)]));
        assert_eq!(h.rows().len(), 3);
    }

    fn variant(words: &[&str], verb: &str, id: &str) -> RelationSample {
        let mut s = nbc_sample();
        let sent = (*s.sentence).clone();
        let parts: Vec<(&str, &str, Option<usize>, &str)> = sent
            .tokens
            .iter()
            .map(|t| {
                let text = match t.index {
                    3 => verb,
                    0 => words[0],
                    5 => words[1],
                    _ => t.text.as_str(),
                };
                (text, t.pos.as_str(), t.head, t.deprel.as_str())
            })
            .collect();
        s.sentence = Arc::new(Sentence::from_parts("adv", 0, &parts));
        s.sample_id = id.into();
        s
    }

    fn verb_mock() -> KeywordMock {
        KeywordMock::new(
            LabelSet::new(["Employer", "Located", "Family"]).unwrap(),
            vec![
                KeywordRule {
                    keyword: "worked".into(),
                    label: "Employer".into(),
                    confidence: 0.9,
                },
                KeywordRule {
                    keyword: "lived".into(),
                    label: "Located".into(),
                    confidence: 0.8,
                },
            ],
            "Family",
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn adversarial_group_accuracy() {
        let g = AdversarialGroup {
            group_id: "g".into(),
            original: variant(&["He", "NBC"], "worked", "o"),
            variants: vec![
                variant(&["He", "NBC"], "lived", "v1"),
                variant(&["He", "NBC"], "worked", "v2"),
                variant(&["He", "NBC"], "visited", "v3"),
                variant(&["He", "NBC"], "worked", "v4"),
            ],
        };
        let r = adversarial_eval(&verb_mock(), std::slice::from_ref(&g)).unwrap();
        assert_eq!(r.groups[0].accuracy, 0.5);
        let mut all = g.clone();
        all.variants.retain(|v| v.sample_id == "v1" || v.sample_id == "v3");
        let r = adversarial_eval(&verb_mock(), &[all]).unwrap();
        assert_eq!(r.groups[0].accuracy, 1.0);
        // confidence pooled over variants: .8 and .5
        let c = r.confidence.unwrap();
        assert!((c.mean - 0.65).abs() < 1e-12 && (c.std - 0.15).abs() < 1e-12);

        let mut bad = g;
        bad.variants.push(variant(&["She", "NBC"], "lived", "v5"));
        let r = adversarial_eval(&verb_mock(), &[bad]).unwrap();
        assert!(r.groups.is_empty());
        assert_eq!(r.rejected.len(), 1);
        assert!(r.accuracy.is_none());
    }

    #[test]
    fn adversarial_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("adv.jsonl");
        let lines = [
            r#"{"group_id":"g1","role":"original","text":"He worked at NBC","arg1_char":[0,2],"arg2_char":[13,16],"tokens":["He","worked","at","NBC"]}"#,
            r#"{"group_id":"g1","role":"variant","text":"He lived at NBC","arg1_char":[0,2],"arg2_char":[12,15],"tokens":["He","lived","at","NBC"],"intended_label":"Located"}"#,
            r#"{"group_id":"g2","role":"variant","text":"He lived at NBC","arg1_char":[0,2],"arg2_char":[12,15],"tokens":["He","lived","at","NBC"]}"#,
            r#"{"group_id":"g3","role":"original","text":"He worked","arg1_char":[0,2],"arg2_char":[0,2],"tokens":["He","worked"]}"#,
        ];
        std::fs::write(&p, lines.join("\n")).unwrap();
        let (groups, rejected) = load_adversarial(&p).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].variants[0].arg_text(&groups[0].variants[0].arg2), "NBC");
        assert_eq!(groups[0].variants[0].label.as_deref(), Some("Located"));
        assert_eq!(
            rejected.iter().map(|r| r.group_id.as_str()).collect::<Vec<_>>(),
            vec!["g2", "g3"]
        );
        let r = adversarial_eval(&verb_mock(), &groups).unwrap();
        assert_eq!(r.groups[0].accuracy, 1.0);
    }

    proptest! {
        #[test]
        fn micro_f1_is_accuracy(pairs in prop::collection::vec((0u8..4, 0u8..4), 1..60)) {
            let g: Vec<String> = pairs.iter().map(|(a, _)| format!("L{a}")).collect();
            let p: Vec<String> = pairs.iter().map(|(_, b)| format!("L{b}")).collect();
            let acc = pairs.iter().filter(|(a, b)| a == b).count() as f64 / pairs.len() as f64;
            let r = f1_scores(&g, &p, None).unwrap();
            prop_assert!((r.micro_f1 - acc).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&r.macro_f1));
        }

        #[test]
        fn breakdown_partitions_are_exhaustive(classes in prop::collection::vec((0usize..6, 1usize..6, any::<bool>()), 1..30)) {
            let extents: Vec<SemanticExtent> = classes.iter().enumerate()
                .map(|(i, (c, size, _))| ext(&i.to_string(), Stage::ALL[*c], "A", *size)).collect();
            let preds: Vec<SentencePrediction> = classes.iter().enumerate()
                .map(|(i, (_, size, full))| pred(&i.to_string(), "A", 0.5, if *full { *size } else { size + 1 })).collect();
            let gold: HashMap<String, String> = (0..classes.len()).map(|i| (i.to_string(), "A".to_string())).collect();
            let t = confidence_breakdown(&extents, &preds, &gold).unwrap();
            let n = |name| t.row(name).unwrap().count;
            prop_assert_eq!(n(ROW_COMPLETE), classes.len());
            prop_assert_eq!(n(ROW_ONLY_ARGS) + n(ROW_NOT_ONLY_ARGS), classes.len());
            prop_assert_eq!(n(ROW_ALL_TOKENS) + n(ROW_NOT_ALL_TOKENS), classes.len());
        }
    }
}
