//! TF-IDF features, decision forests and evaluation.

mod forest;
mod metrics;
mod tfidf;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use forest::{
    train_classifier, train_regressor, ConstantPredictor, FeatureFraction, Forest, ForestKind, ForestParams, Node,
    Predictor, Tree,
};
pub use metrics::{metrics_table, render_table, Confusion, Metrics, METRIC_COLUMNS};
pub use tfidf::{SparseVec, TfidfVectorizer};

use crate::corpus::{Corpus, TestSet};
use crate::error::{Error, Result};
use crate::label_model::MarginalRecord;

/// Which labels a downstream model is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    /// Classifier on strong labels.
    Strong,
    /// Regressor on marginals.
    Weak,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Strong => "strong",
            TrainMode::Weak => "weak",
        }
    }
}

pub const DEFAULT_DECISION_THRESHOLD: f64 = 0.5;
pub const MODEL_FORMAT: &str = "slp-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ModelPredictor {
    Forest(Forest),
    Constant { score: f64 },
}

impl ModelPredictor {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelPredictor::Forest(f) => match f.kind {
                ForestKind::Classifier => "classifier",
                ForestKind::Regressor => "regressor",
            },
            ModelPredictor::Constant { .. } => "constant",
        }
    }
}

impl Predictor for ModelPredictor {
    fn score(&self, row: &[(u32, f64)]) -> f64 {
        match self {
            ModelPredictor::Forest(f) => f.predict(row),
            ModelPredictor::Constant { score } => *score,
        }
    }
}

/// Vectorizer plus predictor for one intent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub intent: String,
    pub vectorizer: TfidfVectorizer,
    pub predictor: ModelPredictor,
    pub n_train: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub format: String,
    pub v: u32,
    pub kind: String,
    pub hyperparams: Option<ForestParams>,
    pub vocabulary_hash: String,
}

impl TrainedModel {
    /// Classifier on strong labels (`utterance_id → ±1`).
    pub fn strong(
        intent: &str,
        vectorizer: TfidfVectorizer,
        corpus: &Corpus,
        labels: &BTreeMap<u64, i8>,
        params: &ForestParams,
    ) -> Result<Self> {
        let (x, y) = rows(&vectorizer, corpus, labels.iter().map(|(&id, &l)| (id, l)))?;
        let forest = train_classifier(&x, &y, vectorizer.n_features(), params)?;
        Ok(Self {
            intent: intent.to_owned(),
            n_train: x.len(),
            vectorizer,
            predictor: ModelPredictor::Forest(forest),
        })
    }

    /// Regressor on marginal probabilities; every covered candidate is a row.
    pub fn weak(
        intent: &str,
        vectorizer: TfidfVectorizer,
        corpus: &Corpus,
        marginals: &[MarginalRecord],
        params: &ForestParams,
    ) -> Result<Self> {
        let (x, p) = rows(&vectorizer, corpus, marginals.iter().map(|r| (r.utterance_id, r.p)))?;
        let forest = train_regressor(&x, &p, vectorizer.n_features(), params)?;
        Ok(Self {
            intent: intent.to_owned(),
            n_train: x.len(),
            vectorizer,
            predictor: ModelPredictor::Forest(forest),
        })
    }

    pub fn constant(intent: &str, vectorizer: TfidfVectorizer, score: f64, n_train: usize) -> Self {
        Self {
            intent: intent.to_owned(),
            vectorizer,
            predictor: ModelPredictor::Constant { score },
            n_train,
        }
    }

    pub fn score(&self, text: &str) -> f64 {
        self.predictor.score(&self.vectorizer.transform(text))
    }

    pub fn header(&self) -> ModelHeader {
        ModelHeader {
            format: MODEL_FORMAT.to_owned(),
            v: MODEL_VERSION,
            kind: self.predictor.kind().to_owned(),
            hyperparams: match &self.predictor {
                ModelPredictor::Forest(f) => Some(f.params),
                ModelPredictor::Constant { .. } => None,
            },
            vocabulary_hash: self.vectorizer.vocabulary_hash(),
        }
    }

    /// Header line followed by the JSON body.
    pub fn to_file_string(&self) -> Result<String> {
        let mut out = serde_json::to_string(&self.header())?;
        out.push('\n');
        out.push_str(&serde_json::to_string(self)?);
        out.push('\n');
        Ok(out)
    }

    pub fn from_file_str(text: &str) -> Result<Self> {
        let (head, body) = text
            .split_once('\n')
            .ok_or_else(|| Error::Format("model file has no body".into()))?;
        let header: ModelHeader = serde_json::from_str(head)?;
        if header.format != MODEL_FORMAT {
            return Err(Error::Format(format!("not a model file (format {:?})", header.format)));
        }
        if header.v != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {}", header.v)));
        }
        let model: TrainedModel = serde_json::from_str(body.trim_end())?;
        let hash = model.vectorizer.vocabulary_hash();
        if hash != header.vocabulary_hash {
            return Err(Error::FingerprintMismatch {
                expected: header.vocabulary_hash,
                found: hash,
            });
        }
        if header.kind != model.predictor.kind() {
            return Err(Error::Format(format!(
                "header says {} but body holds a {}",
                header.kind,
                model.predictor.kind()
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_file_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_file_str(&text)
    }

    pub fn evaluate(&self, test: &TestSet, threshold: f64) -> Result<Metrics> {
        evaluate(&self.predictor, &self.vectorizer, test, &self.intent, threshold)
    }
}

fn rows<T>(
    vectorizer: &TfidfVectorizer,
    corpus: &Corpus,
    labeled: impl Iterator<Item = (u64, T)>,
) -> Result<(Vec<SparseVec>, Vec<T>)> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (id, target) in labeled {
        let text = corpus.text(id).ok_or(Error::UnknownUtterance(id))?;
        x.push(vectorizer.transform(text));
        y.push(target);
    }
    Ok((x, y))
}

/// Scores every test entry of `intent` and thresholds at `threshold`
/// (score ≥ threshold means positive).
pub fn evaluate<P: Predictor + ?Sized>(
    model: &P,
    vectorizer: &TfidfVectorizer,
    test: &TestSet,
    intent: &str,
    threshold: f64,
) -> Result<Metrics> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidConfig(format!("decision threshold {threshold} outside (0, 1)")));
    }
    let pairs: Vec<(bool, bool)> = test
        .for_intent(intent)
        .map(|e| (e.positive, model.score(&vectorizer.transform(&e.text)) >= threshold))
        .collect();
    if pairs.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    Metrics::from_confusion(Confusion::from_pairs(pairs))
}
