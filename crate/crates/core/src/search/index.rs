use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::tokenize::tokenize;
use crate::corpus::Corpus;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    /// Document position in the corpus.
    pub doc: u32,
    pub positions: Vec<u32>,
}

impl Posting {
    pub fn tf(&self) -> u32 {
        self.positions.len() as u32
    }
}

/// Positional inverted index over a corpus. Documents are addressed by their
/// corpus position; `doc_ids` maps positions back to utterance ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Index {
    pub(crate) fingerprint: String,
    pub(crate) postings: HashMap<String, Vec<Posting>>,
    pub(crate) doc_lens: Vec<u32>,
    pub(crate) doc_ids: Vec<u64>,
    pub(crate) avg_len: f64,
}

impl Index {
    pub fn build(corpus: &Corpus) -> Index {
        let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
        let mut doc_lens = Vec::with_capacity(corpus.len());
        let mut doc_ids = Vec::with_capacity(corpus.len());
        for (doc, u) in corpus.utterances().iter().enumerate() {
            let tokens = tokenize(&u.text);
            doc_lens.push(tokens.len() as u32);
            doc_ids.push(u.id);
            let mut local: HashMap<String, Vec<u32>> = HashMap::new();
            for (pos, tok) in tokens.into_iter().enumerate() {
                local.entry(tok).or_default().push(pos as u32);
            }
            for (tok, positions) in local {
                postings.entry(tok).or_default().push(Posting {
                    doc: doc as u32,
                    positions,
                });
            }
        }
        let total: u64 = doc_lens.iter().map(|&l| l as u64).sum();
        let avg_len = if doc_lens.is_empty() {
            0.0
        } else {
            total as f64 / doc_lens.len() as f64
        };
        Index {
            fingerprint: corpus.fingerprint().to_string(),
            postings,
            doc_lens,
            doc_ids,
            avg_len,
        }
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn n_docs(&self) -> usize {
        self.doc_lens.len()
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn doc_len(&self, doc: usize) -> u32 {
        self.doc_lens[doc]
    }

    pub fn doc_id(&self, doc: usize) -> u64 {
        self.doc_ids[doc]
    }

    pub fn doc_position(&self, id: u64) -> Option<usize> {
        // doc_ids is usually sorted (assigned ids), fall back to a scan otherwise
        match self.doc_ids.binary_search(&id) {
            Ok(p) => Some(p),
            Err(_) => self.doc_ids.iter().position(|&d| d == id),
        }
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    /// Postings sorted by document position; empty for unknown terms.
    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn tf(&self, term: &str, doc: usize) -> u32 {
        let list = self.postings(term);
        list.binary_search_by_key(&(doc as u32), |p| p.doc)
            .map_or(0, |i| list[i].tf())
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }
}
