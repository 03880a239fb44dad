use extentlab_core::annotation::AnnotationError;
use extentlab_core::classifier::ClassifierError;
use extentlab_core::corpus::CorpusError;
use extentlab_core::extents::ExtentError;
use extentlab_core::io::IoError;
use extentlab_core::metrics::MetricsError;
use extentlab_core::report::ReportError;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Bad flags or unusable input files.
    Input,
    /// Valid input, failed computation.
    Compute,
}

#[derive(Debug, Serialize)]
pub struct CliError {
    #[serde(skip)]
    pub kind: Kind,
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn input(code: &'static str, message: impl Into<String>) -> Self {
        CliError {
            kind: Kind::Input,
            code,
            message: message.into(),
        }
    }

    pub fn compute(code: &'static str, message: impl Into<String>) -> Self {
        CliError {
            kind: Kind::Compute,
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::input("usage", message)
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            Kind::Input => 2,
            Kind::Compute => 1,
        }
    }

    pub fn exit(&self) -> ! {
        eprintln!("{}", serde_json::to_string(self).expect("error serializes"));
        std::process::exit(self.exit_code())
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Io { .. } => CliError::input("io", e.to_string()),
            IoError::Parse { .. } => CliError::input("parse", e.to_string()),
            IoError::Serialize(_) => CliError::compute("serialize", e.to_string()),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io(io) => io.into(),
            other => CliError::input("corpus", other.to_string()),
        }
    }
}

impl From<ClassifierError> for CliError {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::Io(io) => io.into(),
            ClassifierError::Store(_) | ClassifierError::Config(_) | ClassifierError::LabelSet(_) => {
                CliError::input("model", e.to_string())
            }
            ClassifierError::UnknownLabel(_) | ClassifierError::EmptyTrainingSet => {
                CliError::input("labels", e.to_string())
            }
            ClassifierError::Contract(_) | ClassifierError::Capability(_) => {
                CliError::compute("classifier", e.to_string())
            }
        }
    }
}

impl From<ExtentError> for CliError {
    fn from(e: ExtentError) -> Self {
        match e {
            ExtentError::Io(io) => io.into(),
            ExtentError::Config(m) => CliError::input("config", m),
            ExtentError::Classifier(c) => c.into(),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Io(io) => io.into(),
            MetricsError::Classifier(c) => c.into(),
            MetricsError::LengthMismatch(..) | MetricsError::IdMismatch(_) | MetricsError::Empty => {
                CliError::input("alignment", e.to_string())
            }
            MetricsError::Adversarial(_) => CliError::input("adversarial", e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Io(io) => io.into(),
            other => CliError::input("report", other.to_string()),
        }
    }
}

impl From<AnnotationError> for CliError {
    fn from(e: AnnotationError) -> Self {
        match e {
            AnnotationError::Io(io) => io.into(),
            AnnotationError::Classifier(c) => c.into(),
            other => CliError::input(other.code(), other.to_string()),
        }
    }
}
