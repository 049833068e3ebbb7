//! Finalize → label model → exports, shared by the CLI replay path, the
//! HTTP service and the harness so all three produce identical artifacts.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::label_model::{learn, strong_labels_csv, LabelModelConfig, LearnedLabels, MarginalRecord};
use crate::search::Index;
use crate::session::{FinalizedLabels, Mode, Session, SessionScript};

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub finalized: FinalizedLabels,
    /// `None` in label-only mode, which never runs the label model.
    pub learned: Option<LearnedLabels>,
}

impl SessionOutcome {
    /// Marginals keyed by utterance id, in corpus order.
    pub fn marginal_records(&self, corpus: &Corpus) -> Vec<MarginalRecord> {
        let Some(learned) = &self.learned else {
            return Vec::new();
        };
        learned
            .marginals
            .entries
            .iter()
            .map(|(&j, m)| MarginalRecord {
                utterance_id: corpus.utterances()[j].id,
                p: m.p,
                source: m.source,
            })
            .collect()
    }

    /// Weak (non-anchor) marginal count.
    pub fn n_weak(&self) -> usize {
        self.learned
            .as_ref()
            .map_or(0, |l| l.marginals.count(crate::label_model::Source::Weak))
    }

    pub fn n_anchor(&self) -> usize {
        self.finalized.strong.len()
    }
}

/// Finalizes the session and, in slp mode, fits the label model.
pub fn finalize_and_learn(session: &mut Session, corpus: &Corpus, config: &LabelModelConfig) -> Result<SessionOutcome> {
    if session.corpus_fingerprint != corpus.fingerprint() {
        return Err(Error::FingerprintMismatch {
            expected: session.corpus_fingerprint.clone(),
            found: corpus.fingerprint().to_owned(),
        });
    }
    let finalized = session.finalize()?;
    let learned = match session.config.mode {
        Mode::Slp => Some(learn(&finalized, corpus, config)?),
        Mode::LabelOnly => None,
    };
    Ok(SessionOutcome { finalized, learned })
}

/// Text artifacts of a finished session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionExports {
    pub script: String,
    pub strong_labels: String,
    pub marginals: Option<String>,
    pub label_matrix: Option<String>,
}

pub const SCRIPT_FILE: &str = "script.jsonl";
pub const LABELS_FILE: &str = "labels.csv";
pub const MARGINALS_FILE: &str = "marginals.csv";
pub const MATRIX_FILE: &str = "lambda.txt";

impl SessionExports {
    pub fn new(session: &Session, outcome: &SessionOutcome, corpus: &Corpus) -> Self {
        let id_of = |j: usize| corpus.utterances()[j].id;
        SessionExports {
            script: session.script().to_jsonl(),
            strong_labels: strong_labels_csv(&outcome.finalized.strong),
            marginals: outcome.learned.as_ref().map(|l| l.marginals.to_csv(id_of)),
            label_matrix: outcome.learned.as_ref().map(|l| l.matrix.to_triplets()),
        }
    }

    /// Writes whichever files exist into `dir`, returning their paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let mut put = |name: &str, body: &str| -> Result<()> {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            written.push(path);
            Ok(())
        };
        put(SCRIPT_FILE, &self.script)?;
        put(LABELS_FILE, &self.strong_labels)?;
        if let Some(m) = &self.marginals {
            put(MARGINALS_FILE, m)?;
        }
        if let Some(l) = &self.label_matrix {
            put(MATRIX_FILE, l)?;
        }
        Ok(written)
    }
}

/// Headless replay of a recorded script through the full pipeline.
pub fn replay(
    script: &SessionScript,
    corpus: &Corpus,
    index: &Index,
    config: &LabelModelConfig,
) -> Result<(Session, SessionOutcome, SessionExports)> {
    if script.header.corpus_fingerprint != corpus.fingerprint() {
        return Err(Error::FingerprintMismatch {
            expected: script.header.corpus_fingerprint.clone(),
            found: corpus.fingerprint().to_owned(),
        });
    }
    let mut session = script.replay(index)?;
    let outcome = finalize_and_learn(&mut session, corpus, config)?;
    let exports = SessionExports::new(&session, &outcome, corpus);
    Ok((session, outcome, exports))
}
