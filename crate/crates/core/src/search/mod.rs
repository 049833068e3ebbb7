//! Lexical search over a corpus: positional inverted index, boolean/phrase
//! query language and Okapi BM25 ranking.
//!
//! Boolean structure filters the candidate set; ranking uses only the positive
//! terms of the query (phrase tokens count as terms). A document must also
//! match at least one positive leaf to be a candidate, so purely negated
//! branches never pull in unrelated documents.

mod cache;
mod index;
mod query;
mod tokenize;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub use cache::{load_or_build, CACHE_VERSION};
pub use index::{Index, Posting};
pub use query::{parse_query, QueryAst};
pub use tokenize::tokenize;

use crate::error::{Error, Result};

pub const DEFAULT_NEIGHBORHOOD: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    k1: f64,
    b: f64,
    n_default: usize,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self {
            k1: 1.2,
            b: 0.75,
            n_default: DEFAULT_NEIGHBORHOOD,
        }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64, n_default: usize) -> Result<Self> {
        if !(k1 > 0.0 && k1.is_finite()) {
            return Err(Error::InvalidConfig(format!("k1 must be positive, got {k1}")));
        }
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::InvalidConfig(format!("b must lie in [0, 1], got {b}")));
        }
        if n_default == 0 {
            return Err(Error::InvalidConfig("default neighborhood size must be positive".into()));
        }
        Ok(Self { k1, b, n_default })
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn n_default(&self) -> usize {
        self.n_default
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub utterance_id: u64,
    pub score: f64,
}

/// Top-N ranked candidates for one query. Hits are sorted by descending
/// score with ties broken by ascending utterance id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub query: QueryAst,
    pub hits: Vec<Hit>,
    pub capacity: usize,
}

impl Neighborhood {
    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.hits.iter().map(|h| h.utterance_id)
    }

    pub fn contains(&self, id: u64) -> bool {
        self.hits.iter().any(|h| h.utterance_id == id)
    }
}

impl Index {
    /// Smoothed Okapi idf, floored at zero.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.n_docs() as f64;
        let df = self.df(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln().max(0.0)
    }

    /// BM25 score of the document at corpus position `doc` for a term multiset.
    pub fn bm25(&self, params: &Bm25Params, terms: &[String], doc: usize) -> f64 {
        let len_norm = if self.avg_len() > 0.0 {
            self.doc_len(doc) as f64 / self.avg_len()
        } else {
            0.0
        };
        let denom_base = params.k1 * (1.0 - params.b + params.b * len_norm);
        terms
            .iter()
            .map(|t| {
                let tf = self.tf(t, doc) as f64;
                if tf == 0.0 {
                    0.0
                } else {
                    self.idf(t) * tf * (params.k1 + 1.0) / (tf + denom_base)
                }
            })
            .sum()
    }

    /// BM25 score addressed by utterance id; unknown ids score 0.
    pub fn bm25_score(&self, params: &Bm25Params, terms: &[String], utterance_id: u64) -> f64 {
        self.doc_position(utterance_id)
            .map_or(0.0, |doc| self.bm25(params, terms, doc))
    }

    /// Document positions (sorted) satisfying the query's boolean constraints.
    pub fn matching_docs(&self, ast: &QueryAst) -> Vec<u32> {
        let constrained = self.eval(ast);
        let mut anchored = Vec::new();
        for leaf in ast.positive_leaves() {
            anchored = union(&anchored, &self.eval(leaf));
        }
        intersect(&constrained, &anchored)
    }

    fn eval(&self, ast: &QueryAst) -> Vec<u32> {
        match ast {
            QueryAst::Term(t) => self.postings(t).iter().map(|p| p.doc).collect(),
            QueryAst::Phrase(ts) => self.phrase_docs(ts),
            QueryAst::And(cs) => {
                let mut it = cs.iter();
                let mut acc = it.next().map(|c| self.eval(c)).unwrap_or_default();
                for c in it {
                    if acc.is_empty() {
                        break;
                    }
                    acc = intersect(&acc, &self.eval(c));
                }
                acc
            }
            QueryAst::Or(cs) => cs
                .iter()
                .fold(Vec::new(), |acc, c| union(&acc, &self.eval(c))),
            QueryAst::Not(c) => {
                let excluded = self.eval(c);
                let mut ex = excluded.iter().peekable();
                (0..self.n_docs() as u32)
                    .filter(|d| {
                        while ex.peek().is_some_and(|&&e| e < *d) {
                            ex.next();
                        }
                        ex.peek() != Some(&d)
                    })
                    .collect()
            }
        }
    }

    fn phrase_docs(&self, tokens: &[String]) -> Vec<u32> {
        let Some(first) = tokens.first() else {
            return Vec::new();
        };
        let lists: Vec<&[Posting]> = tokens.iter().map(|t| self.postings(t)).collect();
        let mut out = Vec::new();
        'doc: for posting in self.postings(first) {
            let mut rest = Vec::with_capacity(lists.len() - 1);
            for list in &lists[1..] {
                match list.binary_search_by_key(&posting.doc, |p| p.doc) {
                    Ok(i) => rest.push(&list[i].positions),
                    Err(_) => continue 'doc,
                }
            }
            let consecutive = posting.positions.iter().any(|&start| {
                rest.iter()
                    .enumerate()
                    .all(|(k, positions)| positions.binary_search(&(start + k as u32 + 1)).is_ok())
            });
            if consecutive {
                out.push(posting.doc);
            }
        }
        out
    }

    /// Top-`n` documents satisfying `ast`, ranked by BM25 over its positive terms.
    pub fn search(&self, params: &Bm25Params, ast: &QueryAst, n: usize) -> Neighborhood {
        let terms = ast.positive_terms();
        let mut hits: Vec<Hit> = self
            .matching_docs(ast)
            .into_iter()
            .map(|doc| Hit {
                utterance_id: self.doc_id(doc as usize),
                score: self.bm25(params, &terms, doc as usize),
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then(a.utterance_id.cmp(&b.utterance_id))
        });
        hits.truncate(n);
        Neighborhood {
            query: ast.clone(),
            hits,
            capacity: n,
        }
    }
}

fn intersect(a: &[u32], b: &[u32]) -> Vec<u32> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn union(a: &[u32], b: &[u32]) -> Vec<u32> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(a.len() + b.len());
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i] < b[j]) {
            out.push(a[i]);
            i += 1;
        } else if i == a.len() || b[j] < a[i] {
            out.push(b[j]);
            j += 1;
        } else {
            out.push(a[i]);
            i += 1;
            j += 1;
        }
    }
    out
}
