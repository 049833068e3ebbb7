use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::synthetic::GroundTruth;
use crate::error::{Error, Result};
use crate::session::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleParams {
    pub error_rate: f64,
    pub abstain_rate: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            error_rate: 0.05,
            abstain_rate: 0.05,
        }
    }
}

impl OracleParams {
    pub const EXACT: OracleParams = OracleParams {
        error_rate: 0.0,
        abstain_rate: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.error_rate)
            && (0.0..1.0).contains(&self.abstain_rate)
            && self.error_rate + self.abstain_rate < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "oracle rates must be in [0, 1) with sum < 1, got error {} abstain {}",
                self.error_rate, self.abstain_rate
            )))
        }
    }
}

/// Scripted labeler answering from ground truth. Each candidate's answer is
/// fixed by `(seed, intent, id)`, so showing it twice yields the same verdict.
#[derive(Debug, Clone)]
pub struct OracleLabeler<'a> {
    truth: &'a GroundTruth,
    intent: String,
    params: OracleParams,
    seed: u64,
}

impl<'a> OracleLabeler<'a> {
    pub fn new(truth: &'a GroundTruth, intent: &str, params: OracleParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let k = truth
            .intents
            .iter()
            .position(|n| n == intent)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown intent {intent:?}")))?;
        Ok(Self {
            truth,
            intent: intent.to_owned(),
            params,
            seed: seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        })
    }

    pub fn intent(&self) -> &str {
        &self.intent
    }

    /// Unknown ids get an abstention.
    pub fn label(&self, id: u64) -> Verdict {
        let Some(positive) = self.truth.is_positive(id, &self.intent) else {
            return Verdict::Abstain;
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(id);
        let u: f64 = rng.gen();
        let correct = if positive { Verdict::In } else { Verdict::Out };
        if u < self.params.abstain_rate {
            Verdict::Abstain
        } else if u < self.params.abstain_rate + self.params.error_rate {
            if positive {
                Verdict::Out
            } else {
                Verdict::In
            }
        } else {
            correct
        }
    }
}
