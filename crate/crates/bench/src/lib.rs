//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slp_core::downstream::SparseVec;
use slp_core::harness::{generate_corpus, SyntheticData, SyntheticSpec};
use slp_core::label_model::{LabelMatrix, SparseRow};
use slp_core::TfidfVectorizer;

pub fn corpus(n_utterances: usize) -> SyntheticData {
    generate_corpus(&SyntheticSpec {
        n_utterances,
        rng_seed: 1,
        ..SyntheticSpec::default()
    })
    .expect("default synthetic spec is feasible")
}

/// `l` functions voting on `m` candidates with the given accuracy and
/// coverage, plus a sparse anchor row.
pub fn label_matrix(l: usize, m: usize, coverage: f64, accuracy: f64, seed: u64) -> LabelMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth: Vec<i8> = (0..m).map(|_| if rng.gen_bool(0.3) { 1 } else { -1 }).collect();
    let rows = (0..l)
        .map(|_| {
            let mut row = SparseRow::new();
            for c in 0..m as u32 {
                if rng.gen_bool(coverage) {
                    let t = truth[c as usize];
                    row.push((c, if rng.gen_bool(accuracy) { t } else { -t }));
                }
            }
            row
        })
        .collect();
    let anchor = (0..m as u32).filter(|_| rng.gen_bool(0.05)).map(|c| (c, truth[c as usize])).collect();
    LabelMatrix::from_rows(rows, anchor, m).expect("rows are in range")
}

/// TF-IDF rows of the first `n` utterances with their ground-truth labels
/// for `intent`.
pub fn training_rows(data: &SyntheticData, intent: &str, n: usize) -> (Vec<SparseVec>, Vec<i8>, usize) {
    let texts = data.corpus.utterances().iter().map(|u| u.text.as_str());
    let v = TfidfVectorizer::fit(texts, data.corpus.fingerprint()).expect("non-empty corpus");
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for u in data.corpus.utterances().iter().take(n) {
        x.push(v.transform(&u.text));
        y.push(if data.truth.is_positive(u.id, intent) == Some(true) { 1 } else { -1 });
    }
    (x, y, v.n_features())
}
