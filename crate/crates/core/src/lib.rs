//! Semantic extents for relation classification.
//!
//! A semantic extent is the smallest part of a sentence a decider (a trained
//! classifier or a human annotator) needs to reach its relation label.
//! Extents grow from the argument tokens in a priority order derived from the
//! dependency tree ([`syntax`]), or shrink from the full sentence by
//! saliency-guided beam search ([`extents`]). [`metrics`] compares deciders
//! through agreement, confidence breakdowns and adversarial accuracy.

pub mod annotation;
pub mod classifier;
pub mod corpus;
pub mod extents;
pub mod io;
pub mod metrics;
pub mod report;
pub mod syntax;
pub mod synth;

pub use annotation::{AnnotationRecord, AnnotationService, AnnotationSession, SessionView, REJECT};
pub use classifier::{
    predict_full, predict_subset, saliency, top_k_labels, AnyClassifier, Classifier, ClassifierError, KeywordMock,
    KeywordRule, LabelSet, LinearBow, PredictionResult, TrainConfig,
};
pub use corpus::{ArgumentSpan, Document, RelationSample, Sentence, Split, SplitAssignment, SyntacticClass, Token};
pub use extents::{expanding_extent, extent_batch, reductive_extent, ExtentConfig, ExtentMode, SemanticExtent};
pub use metrics::{AdversarialGroup, AdversarialReport, AgreementReport, BreakdownTable, EvalReport, MeanStd};
pub use syntax::{expansion_order, stage_assignment, PriorityAssignment, Stage};
