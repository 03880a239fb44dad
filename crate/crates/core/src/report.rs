//! Report files: a structured JSON form with a metadata block, or a
//! tab-separated table.

use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::StatsReport;
use crate::io::{write_atomic, IoError};
use crate::metrics::{AdversarialReport, AgreementReport, BreakdownTable, ClassHistograms, EvalReport, MeanStd};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("unknown report format {0:?} (expected structured or tabular)")]
    UnknownFormat(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Structured,
    Tabular,
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "structured" | "json" => Ok(ReportFormat::Structured),
            "tabular" | "tsv" => Ok(ReportFormat::Tabular),
            other => Err(ReportError::UnknownFormat(other.to_string())),
        }
    }
}

/// Run information kept apart from the report body so that bodies can be
/// compared byte for byte across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub command: String,
    pub seed: Option<u64>,
    pub created_at: String,
}

impl ReportMetadata {
    pub fn now(command: &str, seed: Option<u64>) -> Self {
        ReportMetadata {
            command: command.to_string(),
            seed,
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEnvelope<T> {
    pub metadata: ReportMetadata,
    pub report: T,
}

pub trait Tabular {
    fn header(&self) -> Vec<String>;
    fn rows(&self) -> Vec<Vec<String>>;
}

pub fn render_table<T: Tabular + ?Sized>(t: &T, delimiter: char) -> String {
    let mut out = String::new();
    let sep = delimiter.to_string();
    out.push_str(&t.header().join(&sep));
    out.push('\n');
    for row in t.rows() {
        out.push_str(&row.join(&sep));
        out.push('\n');
    }
    out
}

pub fn emit_report<T: Serialize + Tabular>(
    path: &Path,
    report: &T,
    format: ReportFormat,
    metadata: &ReportMetadata,
) -> Result<(), ReportError> {
    let bytes = match format {
        ReportFormat::Structured => {
            let mut b = serde_json::to_vec_pretty(&ReportEnvelope {
                metadata: metadata.clone(),
                report,
            })
            .map_err(IoError::from)?;
            b.push(b'\n');
            b
        }
        ReportFormat::Tabular => render_table(report, '\t').into_bytes(),
    };
    Ok(write_atomic(path, &bytes)?)
}

pub fn load_report<T: DeserializeOwned>(path: &Path) -> Result<ReportEnvelope<T>, ReportError> {
    let parse = |message: String| ReportError::Parse {
        path: path.display().to_string(),
        message,
    };
    let bytes = std::fs::read(path).map_err(|e| parse(e.to_string()))?;
    serde_json::from_slice(&bytes).map_err(|e| parse(e.to_string()))
}

fn f(x: f64) -> String {
    format!("{x:.6}")
}

fn opt(x: Option<f64>) -> String {
    x.map(f).unwrap_or_default()
}

fn ms(x: &Option<MeanStd>) -> [String; 2] {
    match x {
        Some(m) => [f(m.mean), f(m.std)],
        None => [String::new(), String::new()],
    }
}

fn strings<const N: usize>(xs: [&str; N]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl Tabular for EvalReport {
    fn header(&self) -> Vec<String> {
        strings(["label", "precision", "recall", "f1", "support", "predicted", "in_macro"])
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.per_label
            .iter()
            .map(|(l, s)| {
                vec![
                    l.clone(),
                    f(s.precision),
                    f(s.recall),
                    f(s.f1),
                    s.support.to_string(),
                    s.predicted.to_string(),
                    s.present.to_string(),
                ]
            })
            .collect()
    }
}

impl Tabular for AgreementReport {
    fn header(&self) -> Vec<String> {
        strings(["metric", "value", "std"])
    }

    fn rows(&self) -> Vec<Vec<String>> {
        let mut rows = vec![
            vec!["label_agreement".into(), f(self.label_agreement), String::new()],
            vec!["sc_coarse".into(), f(self.sc_coarse), String::new()],
            vec!["sc_fine".into(), f(self.sc_fine), String::new()],
        ];
        for d in &self.size_mean_std {
            rows.push(vec![format!("size:{}", d.decider_id), f(d.size.mean), f(d.size.std)]);
        }
        rows
    }
}

impl Tabular for BreakdownTable {
    fn header(&self) -> Vec<String> {
        strings([
            "row",
            "count",
            "confidence_mean",
            "confidence_std",
            "micro_f1",
            "macro_f1",
        ])
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let [m, s] = ms(&r.confidence);
                vec![
                    r.name.clone(),
                    r.count.to_string(),
                    m,
                    s,
                    opt(r.micro_f1),
                    opt(r.macro_f1),
                ]
            })
            .collect()
    }
}

impl Tabular for ClassHistograms {
    fn header(&self) -> Vec<String> {
        strings(["class", "count", "group"])
    }

    fn rows(&self) -> Vec<Vec<String>> {
        ClassHistograms::rows(self)
            .into_iter()
            .map(|r| vec![r.class.to_string(), r.count.to_string(), r.group.as_str().to_string()])
            .collect()
    }
}

impl Tabular for AdversarialReport {
    fn header(&self) -> Vec<String> {
        strings(["group_id", "variants", "changed", "accuracy", "original_prediction"])
    }

    fn rows(&self) -> Vec<Vec<String>> {
        let mut rows: Vec<Vec<String>> = self
            .groups
            .iter()
            .map(|g| {
                vec![
                    g.group_id.clone(),
                    g.variants.to_string(),
                    g.changed.to_string(),
                    f(g.accuracy),
                    g.original_prediction.clone(),
                ]
            })
            .collect();
        let [m, s] = ms(&self.accuracy);
        rows.push(vec!["mean".into(), String::new(), String::new(), m, String::new()]);
        rows.push(vec!["std".into(), String::new(), String::new(), s, String::new()]);
        rows
    }
}

impl Tabular for StatsReport {
    fn header(&self) -> Vec<String> {
        strings(["genre", "kind", "value", "count"])
    }

    fn rows(&self) -> Vec<Vec<String>> {
        let mut rows = Vec::new();
        let groups = std::iter::once(("all", &self.overall)).chain(self.per_genre.iter().map(|(g, h)| (g.as_str(), h)));
        for (genre, h) in groups {
            for (l, n) in &h.labels {
                rows.push(vec![genre.to_string(), "label".into(), l.clone(), n.to_string()]);
            }
            for (c, n) in &h.syntactic_classes {
                rows.push(vec![
                    genre.to_string(),
                    "syntactic_class".into(),
                    c.clone(),
                    n.to_string(),
                ]);
            }
        }
        rows
    }
}

/// Plot-ready histogram table with `class,count,group` columns.
pub fn write_histogram_csv(path: &Path, h: &ClassHistograms) -> Result<(), ReportError> {
    Ok(write_atomic(path, render_table(h, ',').as_bytes())?)
}
