use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::search::tokenize;

/// Sparse row sorted by column, no explicit zeros.
pub type SparseVec = Vec<(u32, f64)>;

/// Smoothed TF-IDF: raw counts times `ln((1+n)/(1+df)) + 1`, L2-normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfVectorizer {
    /// Token to column; columns follow lexicographic token order.
    vocabulary: BTreeMap<String, u32>,
    idf: Vec<f64>,
    built_from: String,
}

impl TfidfVectorizer {
    /// `built_from` names the text source (usually a corpus fingerprint).
    pub fn fit<'a, I>(texts: I, built_from: &str) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        let mut n = 0usize;
        for text in texts {
            n += 1;
            let mut toks = tokenize(text);
            toks.sort_unstable();
            toks.dedup();
            for t in toks {
                *df.entry(t).or_default() += 1;
            }
        }
        if df.is_empty() {
            return Err(Error::EmptyInput("no tokens to build a vocabulary from"));
        }
        let idf = df
            .values()
            .map(|&d| ((1 + n) as f64 / (1 + d) as f64).ln() + 1.0)
            .collect();
        let vocabulary = df.into_keys().enumerate().map(|(i, t)| (t, i as u32)).collect();
        Ok(Self {
            vocabulary,
            idf,
            built_from: built_from.to_owned(),
        })
    }

    pub fn n_features(&self) -> usize {
        self.idf.len()
    }

    pub fn built_from(&self) -> &str {
        &self.built_from
    }

    pub fn column(&self, token: &str) -> Option<u32> {
        self.vocabulary.get(token).copied()
    }

    pub fn idf(&self, token: &str) -> Option<f64> {
        self.column(token).map(|c| self.idf[c as usize])
    }

    /// Hex SHA-256 over the tokens in column order and their idf bits.
    pub fn vocabulary_hash(&self) -> String {
        let mut h = Sha256::new();
        for (t, &c) in &self.vocabulary {
            h.update(t.as_bytes());
            h.update([0]);
            h.update(self.idf[c as usize].to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Out-of-vocabulary tokens are dropped; a text with none left maps to
    /// the empty (zero) vector.
    pub fn transform(&self, text: &str) -> SparseVec {
        let mut counts: HashMap<u32, f64> = HashMap::new();
        for t in tokenize(text) {
            if let Some(c) = self.column(&t) {
                *counts.entry(c).or_default() += 1.0;
            }
        }
        let mut row: SparseVec = counts
            .into_iter()
            .map(|(c, tf)| (c, tf * self.idf[c as usize]))
            .collect();
        row.sort_unstable_by_key(|e| e.0);
        let norm = row.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|e| e.1 /= norm);
        }
        row
    }

    pub fn transform_all<'a, I>(&self, texts: I) -> Vec<SparseVec>
    where
        I: IntoIterator<Item = &'a str>,
    {
        texts.into_iter().map(|t| self.transform(t)).collect()
    }
}
