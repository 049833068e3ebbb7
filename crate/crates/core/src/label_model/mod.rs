//! Generative label model over search-neighborhood labeling functions.
//!
//! Each propagating query round is one weak labeling function; the user's
//! strong labels form a single anchor function with accuracy fixed at 1.

mod dependencies;
mod generative;
mod marginals;
mod matrix;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use dependencies::{learn_dependencies, DependencyEdge, DependencyKind, DependencyOptions};
pub use generative::{
    fit_generative, log_likelihood, FitOptions, FitReport, GenerativeParams, ALPHA_MAX, ALPHA_MIN,
    INIT_ALPHA,
};
pub use marginals::{marginals, read_marginals_csv, Marginal, MarginalLabels, MarginalRecord, Source};
pub use matrix::{LabelMatrix, SparseRow};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::session::FinalizedLabels;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct LabelModelConfig {
    pub fit: FitOptions,
    pub dependencies: DependencyOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnedLabels {
    pub matrix: LabelMatrix,
    pub fit: FitReport,
    pub marginals: MarginalLabels,
}

impl LearnedLabels {
    pub fn params(&self) -> &GenerativeParams {
        &self.fit.params
    }
}

/// Assembles, fits and infers marginals for a finalized session.
pub fn learn(labels: &FinalizedLabels, corpus: &Corpus, config: &LabelModelConfig) -> Result<LearnedLabels> {
    let position = |id: u64| corpus.position(id).ok_or(Error::UnknownUtterance(id));
    let functions = labels
        .functions
        .iter()
        .map(|f| {
            let covered = f.covered.iter().map(|&id| position(id)).collect::<Result<Vec<_>>>()?;
            Ok((covered, f.label))
        })
        .collect::<Result<Vec<_>>>()?;
    let strong = labels
        .strong
        .iter()
        .map(|(&id, &l)| Ok((position(id)?, l)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let matrix = LabelMatrix::assemble(&functions, &strong, corpus.len())?;
    learn_matrix(matrix, config)
}

pub fn learn_matrix(matrix: LabelMatrix, config: &LabelModelConfig) -> Result<LearnedLabels> {
    let mut fit = fit_generative(&matrix, &config.fit)?;
    if config.dependencies.enabled && matrix.n_functions() >= 2 {
        fit.params.dependencies = learn_dependencies(&matrix, &config.dependencies);
    }
    let marginals = marginals(&matrix, &fit.params);
    Ok(LearnedLabels {
        matrix,
        fit,
        marginals,
    })
}

/// CSV `utterance_id,label` of strong labels (+1/-1).
pub fn strong_labels_csv(strong: &BTreeMap<u64, i8>) -> String {
    let mut out = String::from("utterance_id,label\n");
    for (id, l) in strong {
        out.push_str(&format!("{id},{l}\n"));
    }
    out
}

pub fn read_strong_labels_csv(text: &str) -> Result<BTreeMap<u64, i8>> {
    #[derive(Deserialize)]
    struct Row {
        utterance_id: u64,
        label: i8,
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = BTreeMap::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::MalformedRow {
            row: i + 2,
            reason: e.to_string(),
        })?;
        if row.label != 1 && row.label != -1 {
            return Err(Error::MalformedRow {
                row: i + 2,
                reason: format!("label must be 1 or -1, got {}", row.label),
            });
        }
        out.insert(row.utterance_id, row.label);
    }
    Ok(out)
}
