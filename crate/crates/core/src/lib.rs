//! Search, label, propagate: bootstrap an intent classifier from an
//! unlabeled chat corpus with keyword search, a few judgments per query and
//! a generative label model over the propagated neighborhoods.

pub mod corpus;
pub mod error;
pub mod search;
pub mod session;
pub mod label_model;
pub mod downstream;
pub mod workflow;
pub mod harness;

pub use corpus::{Corpus, RawRecord, TestEntry, TestRow, TestSet, Utterance};
pub use downstream::{Metrics, TfidfVectorizer, TrainMode, TrainedModel};
pub use error::{Error, Result};
pub use label_model::{LabelModelConfig, MarginalLabels, MarginalRecord};
pub use search::{Index, Neighborhood};
pub use session::{Decision, Mode, Session, SessionConfig, SessionScript, Verdict};
pub use workflow::{finalize_and_learn, replay, SessionExports, SessionOutcome};
