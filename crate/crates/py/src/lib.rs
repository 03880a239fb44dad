//! Python bindings. Structured results cross the boundary as plain Python
//! dicts and lists.

use std::collections::HashMap;
use std::path::PathBuf;

use extentlab_core::classifier::{
    self as clf, fit, load_model, predict_full, sample_label, save_model, AnyClassifier, Classifier, KeywordMock,
    KeywordRule, LabelSet, LinearBow, TrainConfig,
};
use extentlab_core::corpus::{corpus_stats, load_corpus, samples_from_documents, RelationSample};
use extentlab_core::extents::{extent_batch, ExtentConfig, ExtentMode, SemanticExtent};
use extentlab_core::metrics::{agreement_report, f1_scores};
use extentlab_core::synth;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let s: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&s).map_err(value_err)
}

/// Relation samples, loaded from a corpus file or generated.
#[pyclass(name = "Corpus", module = "extentlab")]
pub struct PyCorpus {
    samples: Vec<RelationSample>,
}

impl PyCorpus {
    fn pick(&self, ids: Option<Vec<String>>) -> PyResult<Vec<RelationSample>> {
        let Some(ids) = ids else {
            return Ok(self.samples.clone());
        };
        let by_id: HashMap<&str, &RelationSample> = self.samples.iter().map(|s| (s.sample_id.as_str(), s)).collect();
        ids.iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|s| (*s).clone())
                    .ok_or_else(|| value_err(format!("unknown sample {id:?}")))
            })
            .collect()
    }
}

#[pymethods]
impl PyCorpus {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (docs, _) = load_corpus(&path).map_err(value_err)?;
        let set = samples_from_documents(&docs).map_err(value_err)?;
        Ok(PyCorpus { samples: set.samples })
    }

    /// Keyword-driven synthetic samples; `kind` is `"context"` or `"shortcut"`.
    #[staticmethod]
    #[pyo3(signature = (kind, n, seed = 13))]
    fn synthetic(kind: &str, n: usize, seed: u64) -> PyResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = match kind {
            "context" => synth::context_corpus(&mut rng, n),
            "shortcut" => synth::shortcut_corpus(&mut rng, n, 0.06),
            other => return Err(value_err(format!("unknown synthetic corpus {other:?}"))),
        };
        Ok(PyCorpus { samples })
    }

    fn __len__(&self) -> usize {
        self.samples.len()
    }

    fn sample_ids(&self) -> Vec<String> {
        self.samples.iter().map(|s| s.sample_id.clone()).collect()
    }

    fn tokens(&self, sample_id: String) -> PyResult<Vec<String>> {
        let s = self.pick(Some(vec![sample_id]))?.remove(0);
        Ok(s.sentence.tokens.iter().map(|t| t.text.clone()).collect())
    }

    fn labels(&self) -> Vec<String> {
        self.samples.iter().map(|s| sample_label(s).to_string()).collect()
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &corpus_stats(&self.samples))
    }
}

/// A relation decider: the linear bag-of-words model or a keyword table.
#[pyclass(name = "Model", module = "extentlab")]
pub struct PyModel {
    inner: AnyClassifier,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        Ok(PyModel {
            inner: load_model(&dir).map_err(value_err)?,
        })
    }

    /// `rules` is a list of `(keyword, label, confidence)`.
    #[staticmethod]
    fn keyword(
        labels: Vec<String>,
        rules: Vec<(String, String, f64)>,
        fallback_label: &str,
        fallback_confidence: f64,
    ) -> PyResult<Self> {
        let rules = rules
            .into_iter()
            .map(|(keyword, label, confidence)| KeywordRule {
                keyword,
                label,
                confidence,
            })
            .collect();
        let labels = LabelSet::new(labels).map_err(value_err)?;
        let mock = KeywordMock::new(labels, rules, fallback_label, fallback_confidence).map_err(value_err)?;
        Ok(PyModel {
            inner: AnyClassifier::Keyword(mock),
        })
    }

    /// Trains the linear decider; returns the model and its training report.
    #[staticmethod]
    #[pyo3(signature = (train, dev = None, seed = 13, epochs = 30))]
    fn train<'py>(
        py: Python<'py>,
        train: &PyCorpus,
        dev: Option<&PyCorpus>,
        seed: u64,
        epochs: usize,
    ) -> PyResult<(Self, Bound<'py, PyAny>)> {
        let dev = dev.map(|d| d.samples.clone()).unwrap_or_default();
        let mut all = train.samples.clone();
        all.extend(dev.iter().cloned());
        let mut model = LinearBow::new(LabelSet::from_samples(&all).map_err(value_err)?);
        let cfg = TrainConfig {
            seed,
            epochs,
            ..TrainConfig::default()
        };
        let report = py
            .detach(|| fit(&mut model, &train.samples, &dev, &cfg))
            .map_err(value_err)?;
        Ok((
            PyModel {
                inner: AnyClassifier::Linear(model),
            },
            to_py(py, &report)?,
        ))
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        std::fs::create_dir_all(&dir).map_err(value_err)?;
        save_model(&dir, &self.inner).map_err(value_err)
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id().to_string()
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.label_set().labels().to_vec()
    }

    /// `(label, confidence)` on the full sentence of every selected sample.
    #[pyo3(signature = (corpus, sample_ids = None))]
    fn predict(&self, corpus: &PyCorpus, sample_ids: Option<Vec<String>>) -> PyResult<Vec<(String, f64)>> {
        corpus
            .pick(sample_ids)?
            .iter()
            .map(|s| {
                predict_full(&self.inner, s)
                    .map(|p| (p.predicted, p.confidence))
                    .map_err(value_err)
            })
            .collect()
    }

    /// Top `k` labels of the full-sentence distribution.
    fn top_k(&self, corpus: &PyCorpus, sample_id: String, k: usize) -> PyResult<Vec<String>> {
        let s = corpus.pick(Some(vec![sample_id]))?.remove(0);
        clf::top_k_labels(&self.inner, &s, k).map_err(value_err)
    }

    /// Semantic extents as dicts; `mode` is `"expanding"` or `"reductive"`.
    #[pyo3(signature = (corpus, mode = "expanding", theta = 0.5, beam_width = 3, sample_ids = None))]
    fn extents<'py>(
        &self,
        py: Python<'py>,
        corpus: &PyCorpus,
        mode: &str,
        theta: f64,
        beam_width: usize,
        sample_ids: Option<Vec<String>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let mode: ExtentMode = mode.parse().map_err(value_err)?;
        if mode == ExtentMode::Human {
            return Err(value_err("human extents come from annotation records"));
        }
        let cfg = ExtentConfig {
            theta,
            beam_width,
            ..ExtentConfig::default()
        };
        cfg.validate().map_err(value_err)?;
        let samples = corpus.pick(sample_ids)?;
        let results = py.detach(|| extent_batch(&self.inner, &samples, &HashMap::new(), &cfg, mode));
        let extents: Vec<SemanticExtent> = results
            .into_iter()
            .map(|r| r.map_err(|f| PyRuntimeError::new_err(format!("{}: {}", f.sample_id, f.message))))
            .collect::<PyResult<_>>()?;
        to_py(py, &extents)
    }
}

/// Micro and macro F1 with per-label scores.
#[pyfunction]
fn f1<'py>(py: Python<'py>, gold: Vec<String>, pred: Vec<String>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &f1_scores(&gold, &pred, None).map_err(value_err)?)
}

/// Label, semantic-class and size agreement of two extent lists.
#[pyfunction]
fn agreement<'py>(py: Python<'py>, a: &Bound<'py, PyAny>, b: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let a: Vec<SemanticExtent> = from_py(a)?;
    let b: Vec<SemanticExtent> = from_py(b)?;
    to_py(py, &agreement_report(&a, &b).map_err(value_err)?)
}

#[pymodule]
fn extentlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(f1, m)?)?;
    m.add_function(wrap_pyfunction!(agreement, m)?)?;
    m.add("REJECT", extentlab_core::REJECT)?;
    Ok(())
}
