use std::collections::BTreeMap;

use proptest::prelude::*;
use slp_core::corpus::{Corpus, RawRecord};
use slp_core::search::{parse_query, Hit, Index, Neighborhood};
use slp_core::session::{
    propagate, Decision, Mode, QueryRound, Session, SessionConfig, SessionScript, ThresholdRule, Verdict,
};

fn round_with(n_in: usize, n_out: usize, n_abstain: usize, hood: usize) -> QueryRound {
    let hits: Vec<Hit> = (0..hood as u64).map(|i| Hit { utterance_id: i, score: 1.0 }).collect();
    let k = n_in + n_out + n_abstain;
    let displayed: Vec<u64> = (0..k as u64).collect();
    let mut verdicts = BTreeMap::new();
    for (i, &id) in displayed.iter().enumerate() {
        let v = if i < n_in {
            Verdict::In
        } else if i < n_in + n_out {
            Verdict::Out
        } else {
            Verdict::Abstain
        };
        verdicts.insert(id, v);
    }
    QueryRound {
        query_id: 0,
        raw_query: "x".into(),
        neighborhood: Neighborhood {
            query: parse_query("x").unwrap(),
            hits,
            capacity: hood,
        },
        displayed,
        verdicts,
    }
}

#[test]
fn k10_table_is_exhaustive_and_exact() {
    let mut checked = 0;
    for n_in in 0..=10 {
        for n_out in 0..=10 - n_in {
            let n_abs = 10 - n_in - n_out;
            let out = propagate(&round_with(n_in, n_out, n_abs, 100), 0.6, ThresholdRule::AtLeast).unwrap();
            // integer form of the ≥ 0.6 rule at k = 10
            let want = if n_in >= 6 {
                Decision::PropagateIn
            } else if n_out >= 6 {
                Decision::PropagateOut
            } else {
                Decision::NoPropagation
            };
            assert_eq!(out.decision, want, "in={n_in} out={n_out} abstain={n_abs}");
            let covered_want = if want == Decision::NoPropagation { 0 } else { 100 - n_in - n_out };
            assert_eq!(out.covered.len(), covered_want);
            checked += 1;
        }
    }
    assert_eq!(checked, 66);
}

#[test]
fn strict_rule_moves_only_the_boundary() {
    let at = propagate(&round_with(6, 4, 0, 50), 0.6, ThresholdRule::AtLeast).unwrap();
    let above = propagate(&round_with(6, 4, 0, 50), 0.6, ThresholdRule::Above).unwrap();
    assert_eq!(at.decision, Decision::PropagateIn);
    assert_eq!(above.decision, Decision::NoPropagation);
    let above7 = propagate(&round_with(7, 3, 0, 50), 0.6, ThresholdRule::Above).unwrap();
    assert_eq!(above7.decision, Decision::PropagateIn);
}

#[test]
fn threshold_one_needs_unanimity() {
    for n_in in 0..=10 {
        let out = propagate(&round_with(n_in, 10 - n_in, 0, 40), 1.0, ThresholdRule::AtLeast).unwrap();
        let want = match n_in {
            10 => Decision::PropagateIn,
            0 => Decision::PropagateOut,
            _ => Decision::NoPropagation,
        };
        assert_eq!(out.decision, want);
    }
    let with_abstain = propagate(&round_with(9, 0, 1, 40), 1.0, ThresholdRule::AtLeast).unwrap();
    assert_eq!(with_abstain.decision, Decision::NoPropagation);
}

fn corpus() -> Corpus {
    let words = ["refund", "card", "meeting", "book", "reset", "password", "upgrade", "plan"];
    let texts = (0..300).map(|i| {
        let a = words[i % words.len()];
        let b = words[(i * 7 + 3) % words.len()];
        RawRecord::new(format!("{a} {b} item{i}"))
    });
    Corpus::ingest("s", texts, 204).unwrap().0
}

fn verdict_of(x: u8) -> Verdict {
    match x % 3 {
        0 => Verdict::In,
        1 => Verdict::Out,
        _ => Verdict::Abstain,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decision_respects_threshold(n_in in 0usize..20, n_out in 0usize..20, n_abs in 0usize..20, a in 0.05f64..=1.0) {
        prop_assume!(n_in + n_out + n_abs > 0);
        let k = (n_in + n_out + n_abs) as f64;
        let out = propagate(&round_with(n_in, n_out, n_abs, 80), a, ThresholdRule::AtLeast).unwrap();
        match out.decision {
            Decision::PropagateIn => prop_assert!(n_in as f64 / k >= a),
            Decision::PropagateOut => prop_assert!(n_out as f64 / k >= a && (n_in as f64 / k) < a),
            Decision::NoPropagation => prop_assert!((n_in.max(n_out) as f64 / k) < a),
        }
    }

    #[test]
    fn verdict_order_does_not_matter(seed in any::<u64>(), votes in prop::collection::vec(any::<u8>(), 10), perm_seed in any::<u64>()) {
        let corpus = corpus();
        let index = Index::build(&corpus);
        let cfg = SessionConfig { rng_seed: seed, ..Default::default() };
        let mut a = Session::new("i", "s", corpus.fingerprint(), cfg).unwrap();
        let mut b = a.clone();
        let qa = a.issue_query(&index, "refund card").unwrap();
        let qb = b.issue_query(&index, "refund card").unwrap();
        let shown = a.round(qa).unwrap().displayed.clone();
        prop_assert!(shown.len() <= cfg.k);
        prop_assert!(shown.iter().all(|id| a.round(qa).unwrap().neighborhood.contains(*id)));
        for (id, v) in shown.iter().zip(&votes) {
            a.record_verdict(qa, *id, verdict_of(*v)).unwrap();
        }
        let mut order: Vec<usize> = (0..shown.len()).collect();
        let mut s = perm_seed;
        for i in (1..order.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        for i in order {
            b.record_verdict(qb, shown[i], verdict_of(votes[i])).unwrap();
        }
        prop_assert_eq!(a.outcome(qa).unwrap(), b.outcome(qb).unwrap());
        prop_assert_eq!(a.strong_labels(), b.strong_labels());
    }

    #[test]
    fn script_replay_is_identical(seed in any::<u64>(), votes in prop::collection::vec(any::<u8>(), 30), label_only in any::<bool>()) {
        let corpus = corpus();
        let index = Index::build(&corpus);
        let mode = if label_only { Mode::LabelOnly } else { Mode::Slp };
        let cfg = SessionConfig { rng_seed: seed, mode, ..Default::default() };
        let mut live = Session::new("i", "s", corpus.fingerprint(), cfg).unwrap();
        let mut v = votes.iter();
        for q in ["refund card", "meeting OR book", "\"reset password\""] {
            let qid = live.issue_query(&index, q).unwrap();
            let ids = match mode {
                Mode::Slp => live.round(qid).unwrap().displayed.clone(),
                Mode::LabelOnly => live.view_page(qid, 1).unwrap(),
            };
            for id in ids {
                if let Some(x) = v.next() {
                    live.record_verdict(qid, id, verdict_of(*x)).unwrap();
                }
            }
        }
        let text = live.script().to_jsonl();
        let replayed = SessionScript::from_jsonl(&text).unwrap().replay(&index).unwrap();
        prop_assert_eq!(replayed.script().to_jsonl(), text);
        prop_assert_eq!(&replayed, &live);
    }
}
