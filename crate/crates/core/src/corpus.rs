//! Chat-log corpora and ground-truth test sets.
//!
//! A [`Corpus`] is immutable once ingested. Its fingerprint is a SHA-256 over
//! the retained `(id, text)` pairs and is what sessions and index caches key
//! on to detect drift.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_CHARS: usize = 204;
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: u64,
    pub text: String,
}

/// One raw input record before filtering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    #[serde(default)]
    pub id: Option<u64>,
    pub text: String,
}

impl RawRecord {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            id: None,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub retained: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    corpus_id: String,
    utterances: Vec<Utterance>,
    max_chars: usize,
    fingerprint: String,
    positions: HashMap<u64, usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    v: u32,
    corpus_id: String,
    fingerprint: String,
    count: usize,
    max_chars: usize,
}

impl Corpus {
    /// Filters records longer than `max_chars` (after trimming) and assigns
    /// missing ids by retained position.
    pub fn ingest<I>(corpus_id: &str, records: I, max_chars: usize) -> Result<(Corpus, IngestReport)>
    where
        I: IntoIterator<Item = RawRecord>,
    {
        let mut utterances = Vec::new();
        let mut dropped = 0;
        let mut seen = HashSet::new();
        for (line, record) in records.into_iter().enumerate() {
            let text = record.text.trim();
            if text.is_empty() {
                return Err(Error::MalformedRecord {
                    line: line + 1,
                    reason: "empty text".into(),
                });
            }
            if text.chars().count() > max_chars {
                dropped += 1;
                continue;
            }
            let id = record.id.unwrap_or(utterances.len() as u64);
            if !seen.insert(id) {
                return Err(Error::DuplicateId { id, line: line + 1 });
            }
            utterances.push(Utterance {
                id,
                text: text.to_string(),
            });
        }
        if utterances.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let report = IngestReport {
            retained: utterances.len(),
            dropped,
        };
        Ok((Corpus::from_parts(corpus_id, utterances, max_chars), report))
    }

    fn from_parts(corpus_id: &str, utterances: Vec<Utterance>, max_chars: usize) -> Corpus {
        let fingerprint = fingerprint(&utterances);
        let positions = utterances
            .iter()
            .enumerate()
            .map(|(pos, u)| (u.id, pos))
            .collect();
        Corpus {
            corpus_id: corpus_id.to_string(),
            utterances,
            max_chars,
            fingerprint,
            positions,
        }
    }

    pub fn corpus_id(&self) -> &str {
        &self.corpus_id
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn max_chars(&self) -> usize {
        self.max_chars
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Column index of an utterance id.
    pub fn position(&self, id: u64) -> Option<usize> {
        self.positions.get(&id).copied()
    }

    pub fn get(&self, id: u64) -> Option<&Utterance> {
        self.position(id).map(|p| &self.utterances[p])
    }

    pub fn text(&self, id: u64) -> Option<&str> {
        self.get(id).map(|u| u.text.as_str())
    }

    /// Writes `<dir>/<corpus_id>.jsonl` and its manifest sidecar.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut body = String::new();
        for u in &self.utterances {
            body.push_str(&serde_json::to_string(u)?);
            body.push('\n');
        }
        let data_path = data_path(dir, &self.corpus_id);
        fs::write(&data_path, body).map_err(|e| Error::io(&data_path, e))?;
        let manifest = Manifest {
            v: MANIFEST_VERSION,
            corpus_id: self.corpus_id.clone(),
            fingerprint: self.fingerprint.clone(),
            count: self.utterances.len(),
            max_chars: self.max_chars,
        };
        let manifest_path = manifest_path(dir, &self.corpus_id);
        fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)
            .map_err(|e| Error::io(&manifest_path, e))?;
        Ok(())
    }

    /// Loads a corpus written by [`Corpus::save`], verifying the manifest fingerprint.
    pub fn load(dir: &Path, corpus_id: &str) -> Result<Corpus> {
        let manifest_path = manifest_path(dir, corpus_id);
        let manifest: Manifest = serde_json::from_str(
            &fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?,
        )?;
        if manifest.v != MANIFEST_VERSION {
            return Err(Error::Format(format!(
                "unsupported corpus manifest version {}",
                manifest.v
            )));
        }
        let data_path = data_path(dir, corpus_id);
        let file = fs::File::open(&data_path).map_err(|e| Error::io(&data_path, e))?;
        let mut utterances = Vec::with_capacity(manifest.count);
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&data_path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let u: Utterance = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                line: i + 1,
                reason: e.to_string(),
            })?;
            utterances.push(u);
        }
        if utterances.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let corpus = Corpus::from_parts(corpus_id, utterances, manifest.max_chars);
        if corpus.fingerprint != manifest.fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: manifest.fingerprint,
                found: corpus.fingerprint,
            });
        }
        Ok(corpus)
    }
}

fn data_path(dir: &Path, corpus_id: &str) -> PathBuf {
    dir.join(format!("{corpus_id}.jsonl"))
}

fn manifest_path(dir: &Path, corpus_id: &str) -> PathBuf {
    dir.join(format!("{corpus_id}.manifest.json"))
}

fn fingerprint(utterances: &[Utterance]) -> String {
    let mut hasher = Sha256::new();
    for u in utterances {
        hasher.update(u.id.to_le_bytes());
        hasher.update((u.text.len() as u64).to_le_bytes());
        hasher.update(u.text.as_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Parses raw corpus input. Newline-delimited JSON is detected from the first
/// non-blank line starting with `{`; otherwise every non-blank line is one
/// utterance.
pub fn read_records<R: Read>(reader: R) -> Result<Vec<RawRecord>> {
    let mut records = Vec::new();
    let mut json_mode: Option<bool> = None;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::MalformedRecord {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let is_json = *json_mode.get_or_insert_with(|| line.trim_start().starts_with('{'));
        if is_json {
            let record: RawRecord =
                serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            records.push(record);
        } else {
            records.push(RawRecord::new(line));
        }
    }
    Ok(records)
}

pub fn read_records_file(path: &Path) -> Result<Vec<RawRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(file)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestEntry {
    pub text: String,
    pub intent: String,
    pub positive: bool,
    /// Set when the text also occurs in the training corpus.
    pub utterance_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TestSet {
    pub corpus_id: String,
    pub entries: Vec<TestEntry>,
}

/// One labeled test line as it appears in CSV or JSON input.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize, Serialize)]
pub struct TestRow {
    pub text: String,
    pub intent: String,
    /// `pos` or `neg`.
    pub label: String,
}

impl TestSet {
    /// Reads a `text,intent,label` CSV (labels `pos`/`neg`).
    pub fn read_csv<R: Read>(reader: R, corpus: Option<&Corpus>) -> Result<TestSet> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.is_empty() {
            return Err(Error::EmptyTestSet);
        }
        if headers.iter().collect::<Vec<_>>() != ["text", "intent", "label"] {
            return Err(Error::MalformedRow {
                row: 1,
                reason: "expected header text,intent,label".into(),
            });
        }
        let mut rows = Vec::new();
        for (i, row) in rdr.deserialize::<TestRow>().enumerate() {
            rows.push(row.map_err(|e| Error::MalformedRow {
                // header is row 1
                row: i + 2,
                reason: e.to_string(),
            })?);
        }
        Self::from_rows(rows, 2, corpus)
    }

    /// Validates labeled rows; `first_row` numbers the first one in errors.
    pub fn from_rows(rows: Vec<TestRow>, first_row: usize, corpus: Option<&Corpus>) -> Result<TestSet> {
        let texts: HashMap<&str, u64> = corpus
            .map(|c| {
                c.utterances()
                    .iter()
                    .map(|u| (u.text.as_str(), u.id))
                    .collect()
            })
            .unwrap_or_default();
        let mut seen = HashSet::new();
        let mut entries = Vec::new();
        for (i, row) in rows.into_iter().enumerate() {
            let row_no = i + first_row;
            let positive = match row.label.trim() {
                "pos" => true,
                "neg" => false,
                other => {
                    return Err(Error::UnknownLabel {
                        row: row_no,
                        token: other.to_string(),
                    })
                }
            };
            let text = row.text.trim().to_string();
            let intent = row.intent.trim().to_string();
            if !seen.insert((text.clone(), intent.clone())) {
                return Err(Error::DuplicateTestEntry {
                    row: row_no,
                    text,
                    intent,
                });
            }
            let utterance_id = texts.get(text.as_str()).copied();
            entries.push(TestEntry {
                text,
                intent,
                positive,
                utterance_id,
            });
        }
        if entries.is_empty() {
            return Err(Error::EmptyTestSet);
        }
        let overlap = entries.iter().filter(|e| e.utterance_id.is_some()).count();
        if overlap > 0 {
            log::warn!("{overlap} test entries also occur in the training corpus");
        }
        Ok(TestSet {
            corpus_id: corpus.map(|c| c.corpus_id().to_string()).unwrap_or_default(),
            entries,
        })
    }

    pub fn load(path: &Path, corpus: Option<&Corpus>) -> Result<TestSet> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        TestSet::read_csv(file, corpus)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        for e in &self.entries {
            wtr.serialize(TestRow {
                text: e.text.clone(),
                intent: e.intent.clone(),
                label: if e.positive { "pos" } else { "neg" }.to_string(),
            })?;
        }
        let bytes = wtr
            .into_inner()
            .map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
    }

    pub fn positive_count(&self, intent: &str) -> usize {
        self.entries
            .iter()
            .filter(|e| e.intent == intent && e.positive)
            .count()
    }

    /// Entries for one intent, as `(text, positive)`.
    pub fn for_intent<'a>(&'a self, intent: &'a str) -> impl Iterator<Item = &'a TestEntry> + 'a {
        self.entries.iter().filter(move |e| e.intent == intent)
    }

    pub fn intents(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.intent.as_str()).or_insert(0) += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(texts: &[&str]) -> Vec<RawRecord> {
        texts.iter().map(|t| RawRecord::new(*t)).collect()
    }

    #[test]
    fn drops_overlong_records() {
        let long = "x".repeat(300);
        let (corpus, report) =
            Corpus::ingest("c", records(&["hello there", &long, "book a call"]), 204).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(report.dropped, 1);
        // ids follow retained order
        assert_eq!(corpus.utterances()[1].id, 1);
        assert_eq!(corpus.utterances()[1].text, "book a call");
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let err = Corpus::ingest("c", Vec::new(), 204).unwrap_err();
        assert_eq!(err.to_string(), "empty corpus");
        let err = Corpus::ingest("c", records(&["abcdef"]), 3).unwrap_err();
        assert!(matches!(err, Error::EmptyCorpus));
    }

    #[test]
    fn fingerprint_is_deterministic_and_content_sensitive() {
        let a = Corpus::ingest("c", records(&["one", "two"]), 204).unwrap().0;
        let b = Corpus::ingest("other", records(&["one", "two"]), 204).unwrap().0;
        let c = Corpus::ingest("c", records(&["one", "two!"]), 204).unwrap().0;
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn length_is_counted_in_chars() {
        let text = "é".repeat(204);
        let (corpus, report) = Corpus::ingest("c", records(&[&text]), 204).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(report.dropped, 0);
    }

    #[test]
    fn duplicate_explicit_ids_rejected() {
        let recs = vec![
            RawRecord { id: Some(7), text: "a".into() },
            RawRecord { id: Some(7), text: "b".into() },
        ];
        let err = Corpus::ingest("c", recs, 204).unwrap_err();
        assert!(matches!(err, Error::DuplicateId { id: 7, line: 2 }));
    }

    #[test]
    fn reads_jsonl_and_plain_text() {
        let jsonl = "{\"id\": 4, \"text\": \"hi\"}\n\n{\"text\": \"yo\"}\n";
        let recs = read_records(jsonl.as_bytes()).unwrap();
        assert_eq!(recs[0].id, Some(4));
        assert_eq!(recs[1].id, None);

        let plain = "first line\nsecond {line}\n";
        let recs = read_records(plain.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].text, "second {line}");
    }

    #[test]
    fn malformed_jsonl_reports_line() {
        let jsonl = "{\"text\": \"ok\"}\n{\"txt\": 1}\n";
        match read_records(jsonl.as_bytes()).unwrap_err() {
            Error::MalformedRecord { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (corpus, _) = Corpus::ingest("logs", records(&["a b", "c \"d\"", "ünï"]), 204).unwrap();
        corpus.save(dir.path()).unwrap();
        let loaded = Corpus::load(dir.path(), "logs").unwrap();
        assert_eq!(loaded, corpus);
    }

    #[test]
    fn load_detects_drift() {
        let dir = tempfile::tempdir().unwrap();
        let (corpus, _) = Corpus::ingest("logs", records(&["a", "b"]), 204).unwrap();
        corpus.save(dir.path()).unwrap();
        fs::write(dir.path().join("logs.jsonl"), "{\"id\":0,\"text\":\"changed\"}\n").unwrap();
        assert!(matches!(
            Corpus::load(dir.path(), "logs"),
            Err(Error::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn test_set_counts_positives() {
        let csv = "text,intent,label\nbook a call,schedule,pos\nreset password,schedule,neg\n\
                   \"hi, there\",schedule,neg\nprinter jam,schedule,neg\n";
        let ts = TestSet::read_csv(csv.as_bytes(), None).unwrap();
        assert_eq!(ts.entries.len(), 4);
        assert_eq!(ts.positive_count("schedule"), 1);
        assert_eq!(ts.entries[2].text, "hi, there");
    }

    #[test]
    fn test_set_rejects_unknown_label() {
        let csv = "text,intent,label\na,schedule,pos\nb,schedule,maybe\n";
        match TestSet::read_csv(csv.as_bytes(), None).unwrap_err() {
            Error::UnknownLabel { row, token } => {
                assert_eq!(row, 3);
                assert_eq!(token, "maybe");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn test_set_rejects_duplicates_and_empty() {
        let csv = "text,intent,label\na,schedule,pos\na,schedule,neg\n";
        assert!(matches!(
            TestSet::read_csv(csv.as_bytes(), None),
            Err(Error::DuplicateTestEntry { row: 3, .. })
        ));
        assert!(matches!(
            TestSet::read_csv("".as_bytes(), None),
            Err(Error::EmptyTestSet)
        ));
        assert!(matches!(
            TestSet::read_csv("text,intent,label\n".as_bytes(), None),
            Err(Error::EmptyTestSet)
        ));
    }

    #[test]
    fn test_set_links_overlapping_texts() {
        let (corpus, _) = Corpus::ingest("c", records(&["book a call"]), 204).unwrap();
        let csv = "text,intent,label\nbook a call,schedule,pos\n";
        let ts = TestSet::read_csv(csv.as_bytes(), Some(&corpus)).unwrap();
        assert_eq!(ts.entries[0].utterance_id, Some(0));
        let back = TestSet::read_csv(ts.to_csv().unwrap().as_bytes(), None).unwrap();
        assert_eq!(back.entries.len(), 1);
    }
}
