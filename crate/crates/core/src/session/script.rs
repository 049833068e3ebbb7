//! Session scripts: a header line followed by one JSON action per line.
//!
//! ```text
//! {"v":1,"intent":"schedule","corpus_id":"logs","corpus_fingerprint":"…","config":{…}}
//! {"action":"query","q":"refund"}
//! {"action":"verdict","query_id":0,"candidate_id":12,"verdict":"in"}
//! {"action":"finalize"}
//! ```

use serde::{Deserialize, Serialize};

use super::{Session, SessionConfig, Verdict};
use crate::error::{Error, Result};
use crate::search::Index;

pub const SCRIPT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptHeader {
    pub v: u32,
    pub intent: String,
    pub corpus_id: String,
    pub corpus_fingerprint: String,
    pub config: SessionConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Query {
        q: String,
    },
    Verdict {
        query_id: u32,
        candidate_id: u64,
        verdict: Verdict,
    },
    Page {
        query_id: u32,
        page: usize,
    },
    Finalize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionScript {
    pub header: ScriptHeader,
    pub actions: Vec<Action>,
}

impl SessionScript {
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for a in &self.actions {
            out.push_str(&serde_json::to_string(a).expect("action serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<SessionScript> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines
            .next()
            .ok_or_else(|| Error::Format("empty session script".into()))?;
        let header: ScriptHeader = serde_json::from_str(first).map_err(|e| Error::MalformedRecord {
            line: 1,
            reason: e.to_string(),
        })?;
        if header.v != SCRIPT_VERSION {
            return Err(Error::Format(format!(
                "unsupported session script version {}",
                header.v
            )));
        }
        let actions = lines
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::MalformedRecord {
                    line: i + 1,
                    reason: e.to_string(),
                })
            })
            .collect::<Result<Vec<Action>>>()?;
        Ok(SessionScript { header, actions })
    }

    /// Rebuilds the session by re-applying every action against `index`.
    pub fn replay(&self, index: &Index) -> Result<Session> {
        let h = &self.header;
        let mut session = Session::new(&h.intent, &h.corpus_id, &h.corpus_fingerprint, h.config)?;
        for action in &self.actions {
            match action {
                Action::Query { q } => {
                    session.issue_query(index, q)?;
                }
                Action::Verdict {
                    query_id,
                    candidate_id,
                    verdict,
                } => {
                    session.record_verdict(*query_id, *candidate_id, *verdict)?;
                }
                Action::Page { query_id, page } => {
                    session.view_page(*query_id, *page)?;
                }
                Action::Finalize => {
                    session.finalize()?;
                }
            }
        }
        Ok(session)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, RawRecord};

    #[test]
    fn replay_reproduces_session() {
        let texts = (0..40).map(|i| format!("refund {} card {}", i, i % 7));
        let corpus = Corpus::ingest("c", texts.map(RawRecord::new), 204).unwrap().0;
        let index = Index::build(&corpus);
        let config = SessionConfig {
            rng_seed: 5,
            ..SessionConfig::default()
        };
        let mut s = Session::new("refund", "c", corpus.fingerprint(), config).unwrap();
        let q = s.issue_query(&index, "refund").unwrap();
        for (i, c) in s.round(q).unwrap().displayed.clone().into_iter().enumerate() {
            let v = if i % 4 == 0 { Verdict::Out } else { Verdict::In };
            s.record_verdict(q, c, v).unwrap();
        }
        s.issue_query(&index, "card AND \"card 3\"").unwrap();
        s.finalize().unwrap();

        let text = s.script().to_jsonl();
        let parsed = SessionScript::from_jsonl(&text).unwrap();
        assert_eq!(parsed, s.script());
        let replayed = parsed.replay(&index).unwrap();
        assert_eq!(replayed, s);
        assert_eq!(replayed.script().to_jsonl(), text);
    }

    #[test]
    fn rejects_bad_scripts() {
        assert!(SessionScript::from_jsonl("").is_err());
        let header = r#"{"v":9,"intent":"i","corpus_id":"c","corpus_fingerprint":"f","config":{}}"#;
        assert!(matches!(SessionScript::from_jsonl(header), Err(Error::Format(_))));
        let text = format!("{}\n{{\"action\":\"jump\"}}\n", header.replace("\"v\":9", "\"v\":1"));
        assert!(matches!(
            SessionScript::from_jsonl(&text),
            Err(Error::MalformedRecord { line: 2, .. })
        ));
    }

    #[test]
    fn replay_against_other_corpus_fails() {
        let a = Corpus::ingest("c", [RawRecord::new("alpha")], 204).unwrap().0;
        let b = Corpus::ingest("c", [RawRecord::new("beta")], 204).unwrap().0;
        let s = Session::new("i", "c", a.fingerprint(), SessionConfig::default()).unwrap();
        let mut script = s.script();
        script.actions.push(Action::Query { q: "alpha".into() });
        assert!(matches!(
            script.replay(&Index::build(&b)),
            Err(Error::FingerprintMismatch { .. })
        ));
    }
}
