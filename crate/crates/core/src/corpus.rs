//! Document, sentence and sample data model.
//!
//! Upstream records carry character offsets relative to each sentence's
//! text together with a dependency parse per sentence. [`ingest_document`]
//! validates the parse and aligns every annotation to token boundaries;
//! [`build_samples`] turns relation mentions into [`RelationSample`]s.
//!
//! Character offsets count Unicode scalar values, not bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::io::{self, IoError};

/// Version tag written into every saved corpus line.
pub const CORPUS_SCHEMA_VERSION: &str = "extentlab-corpus/1";

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("malformed record in document {doc_id:?}: field `{field}`: {message}")]
    Malformed {
        doc_id: String,
        field: String,
        message: String,
    },
    #[error("alignment error in document {doc_id:?}, sentence {sent}: span [{start}, {end}) {message}")]
    Alignment {
        doc_id: String,
        sent: usize,
        start: usize,
        end: usize,
        message: String,
    },
    #[error("consistency error in document {doc_id:?}: {message}")]
    Consistency { doc_id: String, message: String },
    #[error("sample {sample_id:?}: argument spans [{a_start}, {a_end}) and [{b_start}, {b_end}) overlap")]
    OverlappingArguments {
        sample_id: String,
        a_start: usize,
        a_end: usize,
        b_start: usize,
        b_end: usize,
    },
    #[error("sample {sample_id:?}: argument span [{start}, {end}) invalid for sentence of {len} tokens")]
    SpanOutOfBounds {
        sample_id: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("invalid split ratio {0:?}: ratios must be positive and sum to 1")]
    InvalidRatio([f64; 3]),
    #[error("base split references unknown sample {0:?}")]
    UnknownSample(String),
    #[error("corpus schema version {found:?} is not supported (expected {expected:?}) at line {line}")]
    SchemaVersion {
        found: String,
        expected: &'static str,
        line: usize,
    },
    #[error(transparent)]
    Io(#[from] IoError),
}

// ---------------------------------------------------------------------------
// Upstream record schema

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<String>,
    pub doc_id: String,
    #[serde(default)]
    pub genre: String,
    pub sentences: Vec<RawSentence>,
    #[serde(default)]
    pub entities: Vec<Vec<RawMention>>,
    #[serde(default)]
    pub relations: Vec<RawRelation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSentence {
    pub text: String,
    pub tokens: Vec<RawToken>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawToken {
    pub text: String,
    pub start: usize,
    pub end: usize,
    #[serde(default)]
    pub pos: String,
    /// Token index of the governor, `-1` for the root.
    pub head: i64,
    #[serde(default)]
    pub deprel: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawMention {
    pub sent: usize,
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type", default)]
    pub entity_type: String,
    #[serde(default)]
    pub subtype: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRelation {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub syntactic_class: Option<String>,
    pub arg1: RawArg,
    pub arg2: RawArg,
    /// Character span in the sentence of `arg1`.
    #[serde(default)]
    pub extent: Option<RawExtent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawArg {
    pub sent: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawExtent {
    pub start: usize,
    pub end: usize,
}

// ---------------------------------------------------------------------------
// Domain model

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub index: usize,
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
    pub pos: String,
    /// `None` marks the root.
    pub head: Option<usize>,
    pub deprel: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub doc_id: String,
    pub sent_index: usize,
    pub text: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn root(&self) -> Option<usize> {
        self.tokens.iter().position(|t| t.head.is_none())
    }

    /// Builds a sentence from surface tokens joined by single spaces with
    /// the given heads (`None` for root). Handy for fixtures and adapters that
    /// receive pre-tokenized text.
    pub fn from_parts(doc_id: &str, sent_index: usize, words: &[(&str, &str, Option<usize>, &str)]) -> Sentence {
        let mut text = String::new();
        let mut tokens = Vec::with_capacity(words.len());
        for (i, (word, pos, head, deprel)) in words.iter().enumerate() {
            if i > 0 {
                text.push(' ');
            }
            let start = text.chars().count();
            text.push_str(word);
            tokens.push(Token {
                index: i,
                text: word.to_string(),
                char_start: start,
                char_end: start + word.chars().count(),
                pos: pos.to_string(),
                head: *head,
                deprel: deprel.to_string(),
            });
        }
        Sentence {
            doc_id: doc_id.to_string(),
            sent_index,
            text,
            tokens,
        }
    }

    /// Checks offsets, surface text and tree shape. The returned message names
    /// the offending field relative to the sentence.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let chars: Vec<char> = self.text.chars().collect();
        let mut prev_end = 0usize;
        for (i, tok) in self.tokens.iter().enumerate() {
            let field = |f: &str| format!("tokens[{i}].{f}");
            if tok.index != i {
                return Err((field("index"), format!("expected {i}, found {}", tok.index)));
            }
            if tok.char_start >= tok.char_end {
                return Err((field("start"), "empty or inverted token span".into()));
            }
            if tok.char_end > chars.len() {
                return Err((field("end"), format!("beyond text length {}", chars.len())));
            }
            if i > 0 && tok.char_start < prev_end {
                return Err((field("start"), "token offsets must strictly increase".into()));
            }
            let surface: String = chars[tok.char_start..tok.char_end].iter().collect();
            if surface != tok.text {
                return Err((
                    field("text"),
                    format!("{:?} does not match text at offsets ({surface:?})", tok.text),
                ));
            }
            if let Some(h) = tok.head {
                if h >= self.tokens.len() {
                    return Err((field("head"), format!("head {h} out of range")));
                }
                if h == i {
                    return Err((field("head"), "token is its own head".into()));
                }
            }
            prev_end = tok.char_end;
        }
        if self.tokens.is_empty() {
            return Ok(());
        }
        let roots = self.tokens.iter().filter(|t| t.head.is_none()).count();
        if roots != 1 {
            return Err(("tokens".into(), format!("expected exactly one root, found {roots}")));
        }
        let n = self.tokens.len();
        for start in 0..n {
            let mut cur = start;
            let mut steps = 0;
            while let Some(h) = self.tokens[cur].head {
                cur = h;
                steps += 1;
                if steps > n {
                    return Err((format!("tokens[{start}].head"), "dependency cycle".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArgumentSpan {
    pub start: usize,
    pub end: usize,
    pub entity_type: String,
    #[serde(default)]
    pub entity_subtype: Option<String>,
}

impl ArgumentSpan {
    pub fn new(start: usize, end: usize) -> Self {
        ArgumentSpan {
            start,
            end,
            entity_type: String::new(),
            entity_subtype: None,
        }
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i < self.end
    }

    pub fn tokens(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }

    pub fn overlaps(&self, other: &ArgumentSpan) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Half-open token span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

impl TokenSpan {
    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SyntacticClass {
    Possessive,
    Preposition,
    PreMod,
    Coordination,
    Formulaic,
    Participial,
    Verbal,
    Other,
}

impl SyntacticClass {
    pub const ALL: [SyntacticClass; 8] = [
        SyntacticClass::Possessive,
        SyntacticClass::Preposition,
        SyntacticClass::PreMod,
        SyntacticClass::Coordination,
        SyntacticClass::Formulaic,
        SyntacticClass::Participial,
        SyntacticClass::Verbal,
        SyntacticClass::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SyntacticClass::Possessive => "Possessive",
            SyntacticClass::Preposition => "Preposition",
            SyntacticClass::PreMod => "PreMod",
            SyntacticClass::Coordination => "Coordination",
            SyntacticClass::Formulaic => "Formulaic",
            SyntacticClass::Participial => "Participial",
            SyntacticClass::Verbal => "Verbal",
            SyntacticClass::Other => "Other",
        }
    }

    /// Verbal and Other formulations need sentence-wide context; all others
    /// are expected to be decidable from the arguments' local context.
    pub fn is_sentence_level(self) -> bool {
        matches!(self, SyntacticClass::Verbal | SyntacticClass::Other)
    }
}

impl fmt::Display for SyntacticClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SyntacticClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        SyntacticClass::ALL
            .into_iter()
            .find(|c| {
                c.as_str().to_ascii_lowercase() == norm || (norm == "premodifier" && *c == SyntacticClass::PreMod)
            })
            .ok_or_else(|| format!("unknown syntactic class {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSample {
    pub sample_id: String,
    pub sentence: Arc<Sentence>,
    pub arg1: ArgumentSpan,
    pub arg2: ArgumentSpan,
    /// `None` stands for NONE.
    pub label: Option<String>,
    pub syntactic_class: Option<SyntacticClass>,
    pub extent_span: Option<TokenSpan>,
    #[serde(default)]
    pub genre: String,
    /// Set by [`canonicalize_sample`] when the arguments were reordered.
    #[serde(default)]
    pub swapped: bool,
}

impl RelationSample {
    pub fn len(&self) -> usize {
        self.sentence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentence.is_empty()
    }

    pub fn is_argument(&self, i: usize) -> bool {
        self.arg1.contains(i) || self.arg2.contains(i)
    }

    pub fn argument_tokens(&self) -> BTreeSet<usize> {
        self.arg1.tokens().chain(self.arg2.tokens()).collect()
    }

    pub fn all_tokens(&self) -> BTreeSet<usize> {
        (0..self.len()).collect()
    }

    pub fn token_text(&self, i: usize) -> &str {
        &self.sentence.tokens[i].text
    }

    pub fn arg_text(&self, span: &ArgumentSpan) -> String {
        span.tokens().map(|i| self.token_text(i)).collect::<Vec<_>>().join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub sent: usize,
    pub span: ArgumentSpan,
}

/// Token-aligned reference to an argument mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionRef {
    pub sent: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationMention {
    pub id: Option<String>,
    pub label: Option<String>,
    pub syntactic_class: Option<SyntacticClass>,
    pub arg1: MentionRef,
    pub arg2: MentionRef,
    /// Token span in the sentence of `arg1`.
    pub extent: Option<TokenSpan>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub genre: String,
    pub sentences: Vec<Sentence>,
    pub entities: Vec<Vec<EntityMention>>,
    pub relations: Vec<RelationMention>,
}

// ---------------------------------------------------------------------------
// Ingestion

fn snap_to_tokens(doc_id: &str, sent: &Sentence, start: usize, end: usize) -> Result<(usize, usize), CorpusError> {
    let len = sent.text.chars().count();
    let err = |message: String| CorpusError::Alignment {
        doc_id: doc_id.to_string(),
        sent: sent.sent_index,
        start,
        end,
        message,
    };
    if start >= end {
        return Err(err("is empty or inverted".into()));
    }
    if end > len {
        return Err(err(format!("exceeds sentence text length {len}")));
    }
    let first = sent.tokens.iter().position(|t| t.char_end > start);
    let last = sent.tokens.iter().rposition(|t| t.char_start < end);
    match (first, last) {
        (Some(a), Some(b)) if a <= b => Ok((a, b + 1)),
        _ => Err(err("covers no token".into())),
    }
}

/// Validates a raw record and aligns all annotations to token boundaries.
/// Character spans that cut through a token are widened to the smallest
/// covering token span.
pub fn ingest_document(raw: &RawDocument) -> Result<Document, CorpusError> {
    let doc_id = raw.doc_id.clone();
    let malformed = |field: String, message: String| CorpusError::Malformed {
        doc_id: doc_id.clone(),
        field,
        message,
    };
    if raw.doc_id.is_empty() {
        return Err(malformed("doc_id".into(), "must not be empty".into()));
    }

    let mut sentences = Vec::with_capacity(raw.sentences.len());
    for (si, rs) in raw.sentences.iter().enumerate() {
        let mut tokens = Vec::with_capacity(rs.tokens.len());
        for (ti, rt) in rs.tokens.iter().enumerate() {
            let head = match rt.head {
                -1 => None,
                h if h >= 0 => Some(h as usize),
                h => {
                    return Err(malformed(
                        format!("sentences[{si}].tokens[{ti}].head"),
                        format!("invalid head {h}"),
                    ))
                }
            };
            tokens.push(Token {
                index: ti,
                text: rt.text.clone(),
                char_start: rt.start,
                char_end: rt.end,
                pos: rt.pos.clone(),
                head,
                deprel: rt.deprel.clone(),
            });
        }
        let sentence = Sentence {
            doc_id: doc_id.clone(),
            sent_index: si,
            text: rs.text.clone(),
            tokens,
        };
        if sentence.is_empty() {
            return Err(malformed(
                format!("sentences[{si}].tokens"),
                "sentence has no tokens".into(),
            ));
        }
        sentence
            .validate()
            .map_err(|(f, m)| malformed(format!("sentences[{si}].{f}"), m))?;
        sentences.push(sentence);
    }

    let sentence_at = |sent: usize, field: String| {
        sentences
            .get(sent)
            .ok_or_else(|| malformed(field, format!("sentence index {sent} out of range")))
    };

    let mut entities = Vec::with_capacity(raw.entities.len());
    for (ci, cluster) in raw.entities.iter().enumerate() {
        if cluster.is_empty() {
            return Err(malformed(format!("entities[{ci}]"), "empty entity cluster".into()));
        }
        let mut mentions = Vec::with_capacity(cluster.len());
        for (mi, m) in cluster.iter().enumerate() {
            let sent = sentence_at(m.sent, format!("entities[{ci}][{mi}].sent"))?;
            let (start, end) = snap_to_tokens(&doc_id, sent, m.start, m.end)?;
            mentions.push(EntityMention {
                sent: m.sent,
                span: ArgumentSpan {
                    start,
                    end,
                    entity_type: m.entity_type.clone(),
                    entity_subtype: m.subtype.clone(),
                },
            });
        }
        entities.push(mentions);
    }

    let mut relations = Vec::with_capacity(raw.relations.len());
    for (ri, r) in raw.relations.iter().enumerate() {
        let align_arg = |a: &RawArg, name: &str| -> Result<MentionRef, CorpusError> {
            let sent = sentence_at(a.sent, format!("relations[{ri}].{name}.sent"))?;
            let (start, end) = snap_to_tokens(&doc_id, sent, a.start, a.end)?;
            Ok(MentionRef {
                sent: a.sent,
                start,
                end,
            })
        };
        let arg1 = align_arg(&r.arg1, "arg1")?;
        let arg2 = align_arg(&r.arg2, "arg2")?;
        let extent = match r.extent {
            Some(e) => {
                let sent = &sentences[arg1.sent];
                let (start, end) = snap_to_tokens(&doc_id, sent, e.start, e.end)?;
                Some(TokenSpan { start, end })
            }
            None => None,
        };
        let syntactic_class = match &r.syntactic_class {
            Some(s) => Some(
                s.parse()
                    .map_err(|m| malformed(format!("relations[{ri}].syntactic_class"), m))?,
            ),
            None => None,
        };
        relations.push(RelationMention {
            id: r.id.clone(),
            label: r.label.clone(),
            syntactic_class,
            arg1,
            arg2,
            extent,
        });
    }

    Ok(Document {
        doc_id: raw.doc_id.clone(),
        genre: raw.genre.clone(),
        sentences,
        entities,
        relations,
    })
}

impl Document {
    /// Converts back to the upstream record schema; token-aligned spans are
    /// written as the character span of their tokens.
    pub fn to_raw(&self) -> RawDocument {
        let chars = |sent: usize, start: usize, end: usize| {
            let toks = &self.sentences[sent].tokens;
            (toks[start].char_start, toks[end - 1].char_end)
        };
        RawDocument {
            schema_version: Some(CORPUS_SCHEMA_VERSION.to_string()),
            doc_id: self.doc_id.clone(),
            genre: self.genre.clone(),
            sentences: self
                .sentences
                .iter()
                .map(|s| RawSentence {
                    text: s.text.clone(),
                    tokens: s
                        .tokens
                        .iter()
                        .map(|t| RawToken {
                            text: t.text.clone(),
                            start: t.char_start,
                            end: t.char_end,
                            pos: t.pos.clone(),
                            head: t.head.map_or(-1, |h| h as i64),
                            deprel: t.deprel.clone(),
                        })
                        .collect(),
                })
                .collect(),
            entities: self
                .entities
                .iter()
                .map(|c| {
                    c.iter()
                        .map(|m| {
                            let (start, end) = chars(m.sent, m.span.start, m.span.end);
                            RawMention {
                                sent: m.sent,
                                start,
                                end,
                                entity_type: m.span.entity_type.clone(),
                                subtype: m.span.entity_subtype.clone(),
                            }
                        })
                        .collect()
                })
                .collect(),
            relations: self
                .relations
                .iter()
                .map(|r| {
                    let arg = |a: &MentionRef| {
                        let (start, end) = chars(a.sent, a.start, a.end);
                        RawArg {
                            sent: a.sent,
                            start,
                            end,
                        }
                    };
                    RawRelation {
                        id: r.id.clone(),
                        label: r.label.clone(),
                        syntactic_class: r.syntactic_class.map(|c| c.as_str().to_string()),
                        arg1: arg(&r.arg1),
                        arg2: arg(&r.arg2),
                        extent: r.extent.map(|e| {
                            let (start, end) = chars(r.arg1.sent, e.start, e.end);
                            RawExtent { start, end }
                        }),
                    }
                })
                .collect(),
        }
    }

    fn find_mention(&self, r: &MentionRef) -> Option<&EntityMention> {
        self.entities
            .iter()
            .flatten()
            .find(|m| m.sent == r.sent && m.span.start == r.start && m.span.end == r.end)
    }
}

// ---------------------------------------------------------------------------
// Sample construction

#[derive(Debug, Clone, Default)]
pub struct SampleBuild {
    pub samples: Vec<RelationSample>,
    /// Relation mentions whose arguments lie in different sentences.
    pub skipped_cross_sentence: usize,
}

/// One sample per relation mention whose arguments share a sentence.
/// Samples from the same sentence share one `Arc<Sentence>`.
pub fn build_samples(doc: &Document, mentions: &[RelationMention]) -> Result<SampleBuild, CorpusError> {
    let shared: Vec<Arc<Sentence>> = doc.sentences.iter().cloned().map(Arc::new).collect();
    let mut out = SampleBuild::default();
    for (ri, r) in mentions.iter().enumerate() {
        let resolve = |a: &MentionRef, name: &str| {
            doc.find_mention(a).ok_or_else(|| CorpusError::Consistency {
                doc_id: doc.doc_id.clone(),
                message: format!(
                    "relation {ri} {name} (sentence {}, tokens [{}, {})) references no entity mention",
                    a.sent, a.start, a.end
                ),
            })
        };
        let m1 = resolve(&r.arg1, "arg1")?;
        let m2 = resolve(&r.arg2, "arg2")?;
        if r.arg1.sent != r.arg2.sent {
            out.skipped_cross_sentence += 1;
            continue;
        }
        let extent_span = r.extent.map(|e| TokenSpan {
            start: e.start.min(m1.span.start).min(m2.span.start),
            end: e.end.max(m1.span.end).max(m2.span.end),
        });
        out.samples.push(RelationSample {
            sample_id: r.id.clone().unwrap_or_else(|| format!("{}:R{ri}", doc.doc_id)),
            sentence: Arc::clone(&shared[r.arg1.sent]),
            arg1: m1.span.clone(),
            arg2: m2.span.clone(),
            label: r.label.clone(),
            syntactic_class: r.syntactic_class,
            extent_span,
            genre: doc.genre.clone(),
            swapped: false,
        });
    }
    Ok(out)
}

/// Orders the arguments so that `arg1` precedes `arg2`, setting `swapped`
/// when they were exchanged. Overlapping spans are rejected.
pub fn canonicalize_sample(s: RelationSample) -> Result<RelationSample, CorpusError> {
    let n = s.len();
    for a in [&s.arg1, &s.arg2] {
        if a.start >= a.end || a.end > n {
            return Err(CorpusError::SpanOutOfBounds {
                sample_id: s.sample_id.clone(),
                start: a.start,
                end: a.end,
                len: n,
            });
        }
    }
    if s.arg1.overlaps(&s.arg2) {
        return Err(CorpusError::OverlappingArguments {
            sample_id: s.sample_id.clone(),
            a_start: s.arg1.start,
            a_end: s.arg1.end,
            b_start: s.arg2.start,
            b_end: s.arg2.end,
        });
    }
    if s.arg1.start > s.arg2.start {
        let RelationSample { arg1, arg2, .. } = &s;
        let (arg1, arg2) = (arg2.clone(), arg1.clone());
        return Ok(RelationSample {
            arg1,
            arg2,
            swapped: !s.swapped,
            ..s
        });
    }
    Ok(s)
}

#[derive(Debug, Clone, Default)]
pub struct SampleSet {
    pub samples: Vec<RelationSample>,
    pub skipped_cross_sentence: usize,
    pub rejected_overlap: usize,
}

/// Builds and canonicalizes the samples of every document. Samples with
/// overlapping arguments are dropped and counted.
pub fn samples_from_documents(docs: &[Document]) -> Result<SampleSet, CorpusError> {
    let mut set = SampleSet::default();
    for doc in docs {
        let built = build_samples(doc, &doc.relations)?;
        set.skipped_cross_sentence += built.skipped_cross_sentence;
        for s in built.samples {
            match canonicalize_sample(s) {
                Ok(s) => set.samples.push(s),
                Err(CorpusError::OverlappingArguments { sample_id, .. }) => {
                    log::warn!("dropping sample {sample_id}: overlapping arguments");
                    set.rejected_overlap += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(set)
}

// ---------------------------------------------------------------------------
// Splits

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    fn slot(self) -> usize {
        self as usize
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment(pub BTreeMap<String, Split>);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub sample_id: String,
    pub split: Split,
}

impl SplitAssignment {
    pub fn get(&self, id: &str) -> Option<Split> {
        self.0.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self, split: Split) -> usize {
        self.0.values().filter(|s| **s == split).count()
    }

    pub fn records(&self) -> Vec<SplitRecord> {
        self.0
            .iter()
            .map(|(k, v)| SplitRecord {
                sample_id: k.clone(),
                split: *v,
            })
            .collect()
    }

    pub fn from_records(records: Vec<SplitRecord>) -> Self {
        SplitAssignment(records.into_iter().map(|r| (r.sample_id, r.split)).collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        Ok(io::write_jsonl(path, &self.records())?)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Ok(Self::from_records(io::read_jsonl(path)?))
    }
}

/// Largest-remainder apportionment of `total` items by `weights`.
fn apportion(total: usize, weights: [f64; 3]) -> [usize; 3] {
    let sum: f64 = weights.iter().sum();
    if total == 0 || sum <= 0.0 {
        return [0; 3];
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts = [0usize; 3];
    for k in 0..3 {
        counts[k] = exact[k].floor() as usize;
    }
    let mut left = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    counts
}

/// Assigns every sample id to train/dev/test. Ids listed in `base` keep their
/// split; the rest are shuffled with a ChaCha8 stream seeded by `seed` and
/// distributed so that the whole set approaches `ratio`.
pub fn split_dataset<S: AsRef<str>>(
    sample_ids: &[S],
    base: Option<&SplitAssignment>,
    ratio: [f64; 3],
    seed: u64,
) -> Result<SplitAssignment, CorpusError> {
    if ratio.iter().any(|r| r.is_nan() || *r <= 0.0) || (ratio.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(CorpusError::InvalidRatio(ratio));
    }
    let ids: BTreeSet<&str> = sample_ids.iter().map(|s| s.as_ref()).collect();
    let mut out = BTreeMap::new();
    let mut base_counts = [0usize; 3];
    if let Some(base) = base {
        for (id, split) in &base.0 {
            if !ids.contains(id.as_str()) {
                return Err(CorpusError::UnknownSample(id.clone()));
            }
            out.insert(id.clone(), *split);
            base_counts[split.slot()] += 1;
        }
    }
    let mut rest: Vec<&str> = ids.iter().copied().filter(|id| !out.contains_key(*id)).collect();
    let targets = apportion(ids.len(), ratio);
    let need = [0, 1, 2].map(|k| targets[k].saturating_sub(base_counts[k]) as f64);
    let quota = if need.iter().sum::<f64>() > 0.0 {
        apportion(rest.len(), need)
    } else {
        apportion(rest.len(), ratio)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rest.shuffle(&mut rng);
    let mut it = rest.into_iter();
    for split in Split::ALL {
        for id in it.by_ref().take(quota[split.slot()]) {
            out.insert(id.to_string(), split);
        }
    }
    Ok(SplitAssignment(out))
}

// ---------------------------------------------------------------------------
// Statistics

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histograms {
    pub labels: BTreeMap<String, usize>,
    pub syntactic_classes: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsReport {
    pub samples: usize,
    pub overall: Histograms,
    pub per_genre: BTreeMap<String, Histograms>,
}

pub fn corpus_stats(samples: &[RelationSample]) -> StatsReport {
    let mut report = StatsReport {
        samples: samples.len(),
        ..Default::default()
    };
    for s in samples {
        let label = s.label.clone().unwrap_or_else(|| "NONE".to_string());
        let class = s
            .syntactic_class
            .map_or_else(|| "NONE".to_string(), |c| c.as_str().to_string());
        for h in [
            &mut report.overall,
            report.per_genre.entry(s.genre.clone()).or_default(),
        ] {
            *h.labels.entry(label.clone()).or_default() += 1;
            *h.syntactic_classes.entry(class.clone()).or_default() += 1;
        }
    }
    report
}

// ---------------------------------------------------------------------------
// Persistence

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub documents: usize,
    /// Object keys present in the file but not part of the schema.
    pub unknown_fields: usize,
}

pub fn save_corpus(path: &Path, docs: &[Document]) -> Result<(), CorpusError> {
    let raws: Vec<RawDocument> = docs.iter().map(Document::to_raw).collect();
    Ok(io::write_jsonl(path, &raws)?)
}

/// Reads a corpus file and ingests every line. Lines without a schema
/// version are accepted as upstream input; a different version is an error.
pub fn load_corpus(path: &Path) -> Result<(Vec<Document>, LoadReport), CorpusError> {
    let mut docs = Vec::new();
    let mut report = LoadReport::default();
    for (line, value) in io::read_jsonl_values(path)? {
        let raw: RawDocument = serde_json::from_value(value.clone()).map_err(|e| {
            CorpusError::Io(IoError::Parse {
                path: path.display().to_string(),
                line,
                message: e.to_string(),
            })
        })?;
        if let Some(v) = &raw.schema_version {
            if v != CORPUS_SCHEMA_VERSION {
                return Err(CorpusError::SchemaVersion {
                    found: v.clone(),
                    expected: CORPUS_SCHEMA_VERSION,
                    line,
                });
            }
        }
        let known = serde_json::to_value(&raw).map_err(IoError::from)?;
        let unknown = io::count_unknown_fields(&value, &known);
        if unknown > 0 {
            log::warn!("{}:{line}: ignored {unknown} unknown field(s)", path.display());
        }
        report.unknown_fields += unknown;
        docs.push(ingest_document(&raw)?);
    }
    report.documents = docs.len();
    Ok((docs, report))
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn three_token_doc() -> RawDocument {
        // "Alice met Bob"
        RawDocument {
            schema_version: None,
            doc_id: "d1".into(),
            genre: "bc".into(),
            sentences: vec![RawSentence {
                text: "Alice met Bob".into(),
                tokens: vec![
                    RawToken {
                        text: "Alice".into(),
                        start: 0,
                        end: 5,
                        pos: "PROPN".into(),
                        head: 1,
                        deprel: "nsubj".into(),
                    },
                    RawToken {
                        text: "met".into(),
                        start: 6,
                        end: 9,
                        pos: "VERB".into(),
                        head: -1,
                        deprel: "root".into(),
                    },
                    RawToken {
                        text: "Bob".into(),
                        start: 10,
                        end: 13,
                        pos: "PROPN".into(),
                        head: 1,
                        deprel: "obj".into(),
                    },
                ],
            }],
            entities: vec![
                vec![RawMention {
                    sent: 0,
                    start: 0,
                    end: 5,
                    entity_type: "PER".into(),
                    subtype: None,
                }],
                vec![RawMention {
                    sent: 0,
                    start: 10,
                    end: 13,
                    entity_type: "PER".into(),
                    subtype: Some("Individual".into()),
                }],
            ],
            relations: vec![RawRelation {
                id: None,
                label: Some("Meet".into()),
                syntactic_class: Some("Verbal".into()),
                arg1: RawArg {
                    sent: 0,
                    start: 0,
                    end: 5,
                },
                arg2: RawArg {
                    sent: 0,
                    start: 10,
                    end: 13,
                },
                extent: None,
            }],
        }
    }

    #[test]
    fn exact_alignment_gives_single_mention_cluster() {
        let doc = ingest_document(&three_token_doc()).unwrap();
        assert_eq!(doc.entities.len(), 2);
        assert_eq!(doc.entities[0].len(), 1);
        assert_eq!((doc.entities[0][0].span.start, doc.entities[0][0].span.end), (0, 1));
        assert_eq!((doc.entities[1][0].span.start, doc.entities[1][0].span.end), (2, 3));
    }

    #[test]
    fn mid_token_span_snaps_outward() {
        let mut raw = three_token_doc();
        // "ice met B" -> tokens 0..3
        raw.entities[0][0].start = 2;
        raw.entities[0][0].end = 11;
        let doc = ingest_document(&raw).unwrap();
        assert_eq!((doc.entities[0][0].span.start, doc.entities[0][0].span.end), (0, 3));
        // "et" lies inside "met"
        raw.entities[0][0].start = 7;
        raw.entities[0][0].end = 9;
        let doc = ingest_document(&raw).unwrap();
        assert_eq!((doc.entities[0][0].span.start, doc.entities[0][0].span.end), (1, 2));
    }

    #[test]
    fn span_beyond_text_is_alignment_error() {
        let mut raw = three_token_doc();
        raw.entities[1][0].end = 40;
        match ingest_document(&raw) {
            Err(CorpusError::Alignment { start, end, .. }) => assert_eq!((start, end), (10, 40)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_tree_names_field() {
        let mut raw = three_token_doc();
        raw.sentences[0].tokens[1].head = 0;
        raw.sentences[0].tokens[0].head = 1;
        let err = ingest_document(&raw).unwrap_err().to_string();
        assert!(err.contains("tokens"), "{err}");

        let mut raw = three_token_doc();
        raw.sentences[0].tokens[2].head = 9;
        let err = ingest_document(&raw).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { ref field, .. } if field == "sentences[0].tokens[2].head"));

        let mut raw = three_token_doc();
        raw.sentences[0].tokens[2].text = "Rob".into();
        assert!(ingest_document(&raw).is_err());
    }

    #[test]
    fn cycle_is_rejected() {
        let s = Sentence::from_parts(
            "c",
            0,
            &[
                ("a", "X", None, "root"),
                ("b", "X", Some(2), "dep"),
                ("c", "X", Some(1), "dep"),
            ],
        );
        assert!(s.validate().is_err());
    }

    #[test]
    fn build_samples_counts_cross_sentence() {
        let mut raw = three_token_doc();
        raw.sentences.push(raw.sentences[0].clone());
        raw.entities.push(vec![RawMention {
            sent: 1,
            start: 0,
            end: 5,
            entity_type: "PER".into(),
            subtype: None,
        }]);
        raw.relations.push(RawRelation {
            id: Some("second".into()),
            label: Some("Meet".into()),
            syntactic_class: None,
            arg1: RawArg {
                sent: 0,
                start: 0,
                end: 5,
            },
            arg2: RawArg {
                sent: 0,
                start: 10,
                end: 13,
            },
            extent: None,
        });
        raw.relations.push(RawRelation {
            id: None,
            label: Some("Meet".into()),
            syntactic_class: None,
            arg1: RawArg {
                sent: 0,
                start: 0,
                end: 5,
            },
            arg2: RawArg {
                sent: 1,
                start: 0,
                end: 5,
            },
            extent: None,
        });
        let doc = ingest_document(&raw).unwrap();
        let built = build_samples(&doc, &doc.relations).unwrap();
        assert_eq!(built.samples.len(), 2);
        assert_eq!(built.skipped_cross_sentence, 1);
        assert!(Arc::ptr_eq(&built.samples[0].sentence, &built.samples[1].sentence));
        assert_eq!(built.samples[0].sample_id, "d1:R0");
        assert_eq!(built.samples[1].sample_id, "second");
        assert_eq!(built.samples[1].arg2.entity_subtype.as_deref(), Some("Individual"));
    }

    #[test]
    fn dangling_reference_is_consistency_error() {
        let mut raw = three_token_doc();
        raw.entities.pop();
        let doc = ingest_document(&raw).unwrap();
        assert!(matches!(
            build_samples(&doc, &doc.relations),
            Err(CorpusError::Consistency { .. })
        ));
    }

    #[test]
    fn canonicalize_reorders_and_rejects_overlap() {
        let mut s = nbc_sample();
        s.arg1 = ArgumentSpan::new(5, 7);
        s.arg2 = ArgumentSpan::new(0, 1);
        let c = canonicalize_sample(s).unwrap();
        assert_eq!((c.arg1.start, c.arg1.end, c.arg2.start, c.arg2.end), (0, 1, 5, 7));
        assert!(c.swapped);

        let c = canonicalize_sample(nbc_sample()).unwrap();
        assert_eq!(c, nbc_sample());

        let mut s = nbc_sample();
        s.arg1 = ArgumentSpan::new(0, 3);
        s.arg2 = ArgumentSpan::new(2, 4);
        assert!(matches!(
            canonicalize_sample(s),
            Err(CorpusError::OverlappingArguments { .. })
        ));
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    #[test]
    fn split_ratio_and_determinism() {
        let ids = ids(10);
        let a = split_dataset(&ids, None, [0.8, 0.1, 0.1], 7).unwrap();
        let b = split_dataset(&ids, None, [0.8, 0.1, 0.1], 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            (a.count(Split::Train), a.count(Split::Dev), a.count(Split::Test)),
            (8, 1, 1)
        );
    }

    #[test]
    fn split_full_base_is_identity() {
        let ids = ids(5);
        let base = SplitAssignment(
            ids.iter()
                .enumerate()
                .map(|(i, id)| (id.clone(), Split::ALL[i % 3]))
                .collect(),
        );
        assert_eq!(split_dataset(&ids, Some(&base), [0.8, 0.1, 0.1], 1).unwrap(), base);
    }

    #[test]
    fn split_base_is_extended_towards_ratio() {
        let ids = ids(20);
        let base = SplitAssignment(
            [("s0", Split::Test), ("s1", Split::Test), ("s2", Split::Dev)]
                .into_iter()
                .map(|(a, b)| (a.to_string(), b))
                .collect(),
        );
        let out = split_dataset(&ids, Some(&base), [0.8, 0.1, 0.1], 3).unwrap();
        assert_eq!(out.len(), 20);
        assert_eq!(out.get("s0"), Some(Split::Test));
        assert_eq!(out.count(Split::Train), 16);
        assert_eq!(out.count(Split::Dev), 2);
        assert_eq!(out.count(Split::Test), 2);
    }

    #[test]
    fn split_rejects_bad_ratio_and_unknown_ids() {
        assert!(matches!(
            split_dataset(&ids(3), None, [0.5, 0.5, 0.1], 0),
            Err(CorpusError::InvalidRatio(_))
        ));
        let base = SplitAssignment([("zz".to_string(), Split::Train)].into_iter().collect());
        assert!(matches!(
            split_dataset(&ids(3), Some(&base), [0.8, 0.1, 0.1], 0),
            Err(CorpusError::UnknownSample(_))
        ));
    }

    #[test]
    fn stats_count_and_per_genre_sum() {
        let mut samples = Vec::new();
        for (label, genre) in [("Family", "nw"), ("Family", "bc"), ("Employer", "nw")] {
            let mut s = nbc_sample();
            s.label = Some(label.into());
            s.genre = genre.into();
            samples.push(s);
        }
        let r = corpus_stats(&samples);
        assert_eq!(r.overall.labels["Family"], 2);
        assert_eq!(r.overall.labels["Employer"], 1);
        let mut summed: BTreeMap<String, usize> = BTreeMap::new();
        for h in r.per_genre.values() {
            for (k, v) in &h.labels {
                *summed.entry(k.clone()).or_default() += v;
            }
        }
        assert_eq!(summed, r.overall.labels);
        assert_eq!(corpus_stats(&[]), StatsReport::default());
    }

    #[test]
    fn corpus_round_trip_and_unknown_fields() {
        let dir = tempfile::tempdir().unwrap();
        let doc = ingest_document(&three_token_doc()).unwrap();
        let fig = ingest_document(&raw_nbc()).unwrap();
        let path = dir.path().join("c.jsonl");
        save_corpus(&path, &[doc.clone(), fig.clone()]).unwrap();
        let (loaded, report) = load_corpus(&path).unwrap();
        assert_eq!(loaded, vec![doc.clone(), fig]);
        assert_eq!(report.unknown_fields, 0);

        let mut v = serde_json::to_value(doc.to_raw()).unwrap();
        v["extra"] = serde_json::json!(1);
        v["sentences"][0]["tokens"][0]["lemma"] = serde_json::json!("alice");
        std::fs::write(&path, format!("{v}\n")).unwrap();
        let (loaded, report) = load_corpus(&path).unwrap();
        assert_eq!(loaded, vec![doc]);
        assert_eq!(report.unknown_fields, 2);
    }

    #[test]
    fn corpus_version_and_truncation_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mut raw = three_token_doc();
        raw.schema_version = Some("extentlab-corpus/99".into());
        std::fs::write(&path, serde_json::to_string(&raw).unwrap()).unwrap();
        assert!(matches!(
            load_corpus(&path),
            Err(CorpusError::SchemaVersion { line: 1, .. })
        ));

        let good = serde_json::to_string(&three_token_doc()).unwrap();
        std::fs::write(&path, format!("{good}\n{}", &good[..good.len() / 2])).unwrap();
        match load_corpus(&path) {
            Err(CorpusError::Io(IoError::Parse { line, .. })) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntactic_class_parsing() {
        assert_eq!("premod".parse::<SyntacticClass>().unwrap(), SyntacticClass::PreMod);
        assert_eq!(
            "Pre-Modifier".parse::<SyntacticClass>().unwrap(),
            SyntacticClass::PreMod
        );
        assert_eq!("VERBAL".parse::<SyntacticClass>().unwrap(), SyntacticClass::Verbal);
        assert!("nope".parse::<SyntacticClass>().is_err());
    }
}
