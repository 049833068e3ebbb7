//! Template-based synthetic chat logs with known intent membership.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, RawRecord, TestEntry, TestSet, DEFAULT_MAX_CHARS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentSpec {
    pub name: String,
    pub prevalence: f64,
    /// Templates with `{slot}` placeholders filled from `SyntheticSpec::slots`.
    pub templates: Vec<String>,
    /// Queries a user would type to find positives.
    pub positive_queries: Vec<String>,
    /// Queries aimed at look-alike negatives and unrelated chatter.
    pub negative_queries: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_utterances: usize,
    pub intents: Vec<IntentSpec>,
    /// Chatter belonging to no intent, including look-alikes that share
    /// intent keywords.
    pub background: Vec<String>,
    pub slots: BTreeMap<String, Vec<String>>,
    pub prefixes: Vec<String>,
    pub suffixes: Vec<String>,
    /// Per-word probability of a drop, doubled letter or letter swap.
    pub noise_rate: f64,
    pub test_fraction: f64,
    pub max_chars: usize,
    pub rng_seed: u64,
}

/// Expected test positives below this make an intent unmeasurable.
pub const MIN_EXPECTED_TEST_POSITIVES: f64 = 5.0;

const MAX_DRAWS: usize = 200;

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_utterances < 2 {
            return bad("n_utterances must be at least 2".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction {} outside (0, 1)", self.test_fraction));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return bad(format!("noise_rate {} outside [0, 1)", self.noise_rate));
        }
        if self.intents.is_empty() {
            return bad("at least one intent is required".into());
        }
        let mut names = HashSet::new();
        for it in &self.intents {
            if !names.insert(it.name.as_str()) {
                return bad(format!("duplicate intent {:?}", it.name));
            }
            if !(it.prevalence > 0.0 && it.prevalence < 1.0) {
                return bad(format!("prevalence of {} outside (0, 1)", it.name));
            }
            if it.templates.len() < 3 {
                return bad(format!("intent {} needs at least 3 templates", it.name));
            }
        }
        let total: f64 = self.intents.iter().map(|i| i.prevalence).sum();
        if total > 1.0 + 1e-12 {
            return bad(format!("prevalences sum to {total} > 1"));
        }
        if total < 1.0 - 1e-12 && self.background.is_empty() {
            return bad("background templates required when prevalences sum below 1".into());
        }
        for t in self.intents.iter().flat_map(|i| &i.templates).chain(&self.background) {
            for slot in placeholders(t) {
                if self.slots.get(slot).is_none_or(|v| v.is_empty()) {
                    return bad(format!("template {t:?} uses unknown or empty slot {{{slot}}}"));
                }
            }
        }
        Ok(())
    }

    pub fn intent(&self, name: &str) -> Option<&IntentSpec> {
        self.intents.iter().find(|i| i.name == name)
    }
}

fn placeholders(template: &str) -> impl Iterator<Item = &str> {
    template.split('{').skip(1).filter_map(|s| s.split_once('}').map(|p| p.0))
}

fn fill(template: &str, slots: &BTreeMap<String, Vec<String>>, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::with_capacity(template.len() + 16);
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let end = rest[start..].find('}').map_or(rest.len(), |e| start + e);
        let name = &rest[start + 1..end];
        out.push_str(slots[name].choose(rng).expect("validated non-empty slot"));
        rest = &rest[(end + 1).min(rest.len())..];
    }
    out.push_str(rest);
    out
}

fn jitter(text: &str, rate: f64, rng: &mut ChaCha8Rng) -> String {
    if rate == 0.0 {
        return text.to_owned();
    }
    let words: Vec<&str> = text.split_whitespace().collect();
    let mut out: Vec<String> = Vec::with_capacity(words.len());
    for w in &words {
        if !rng.gen_bool(rate) {
            out.push((*w).to_owned());
            continue;
        }
        let mut chars: Vec<char> = w.chars().collect();
        match rng.gen_range(0..3) {
            0 if words.len() > 2 => continue,
            1 if chars.len() >= 2 => {
                let k = rng.gen_range(0..chars.len() - 1);
                chars.swap(k, k + 1);
            }
            _ => {
                let k = rng.gen_range(0..chars.len());
                chars.insert(k, chars[k]);
            }
        }
        out.push(chars.into_iter().collect());
    }
    out.join(" ")
}

/// Class of each generated utterance: `Some(intent index)` or background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub intents: Vec<String>,
    /// Train-side utterance id → intent index.
    pub classes: BTreeMap<u64, Option<usize>>,
    /// Generated count per intent over train and test.
    pub counts: BTreeMap<String, usize>,
    pub test_positives: BTreeMap<String, usize>,
}

impl GroundTruth {
    pub fn is_positive(&self, id: u64, intent: &str) -> Option<bool> {
        let k = self.intents.iter().position(|n| n == intent)?;
        self.classes.get(&id).map(|c| *c == Some(k))
    }

    pub fn train_positives(&self, intent: &str) -> usize {
        let Some(k) = self.intents.iter().position(|n| n == intent) else {
            return 0;
        };
        self.classes.values().filter(|c| **c == Some(k)).count()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub corpus: Corpus,
    pub test: TestSet,
    pub truth: GroundTruth,
}

pub fn corpus_id_for(seed: u64) -> String {
    format!("synthetic-{seed}")
}

/// Draws `n_utterances` distinct utterances and splits off an exact
/// `round(n · test_fraction)` test share.
pub fn generate_corpus(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let n = spec.n_utterances;
    for it in &spec.intents {
        let expected = n as f64 * it.prevalence * spec.test_fraction;
        if expected < MIN_EXPECTED_TEST_POSITIVES {
            return Err(Error::Infeasible(format!(
                "intent {} expects {expected:.2} test positives (n={n}, prevalence={}, test_fraction={}); need ≥ {MIN_EXPECTED_TEST_POSITIVES}",
                it.name, it.prevalence, spec.test_fraction
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut seen = HashSet::with_capacity(n);
    let mut rows: Vec<(String, Option<usize>)> = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut class = None;
        for (k, it) in spec.intents.iter().enumerate() {
            acc += it.prevalence;
            if u < acc {
                class = Some(k);
                break;
            }
        }
        let templates = match class {
            Some(k) => &spec.intents[k].templates,
            None => &spec.background,
        };
        let mut text = None;
        for _ in 0..MAX_DRAWS {
            let body = fill(templates.choose(&mut rng).unwrap(), &spec.slots, &mut rng);
            let pre = spec.prefixes.choose(&mut rng).map_or("", String::as_str);
            let suf = spec.suffixes.choose(&mut rng).map_or("", String::as_str);
            let joined = [pre, body.as_str(), suf]
                .iter()
                .filter(|s| !s.is_empty())
                .copied()
                .collect::<Vec<_>>()
                .join(" ");
            let t = jitter(&joined, spec.noise_rate, &mut rng);
            if t.chars().count() <= spec.max_chars && !t.trim().is_empty() && seen.insert(t.clone()) {
                text = Some(t);
                break;
            }
        }
        let text = text.ok_or_else(|| {
            Error::Infeasible(format!(
                "template space exhausted after {} distinct utterances",
                rows.len()
            ))
        })?;
        rows.push((text, class));
    }

    let n_test = ((n as f64 * spec.test_fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut is_test = vec![false; n];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }

    let mut counts: BTreeMap<String, usize> = spec.intents.iter().map(|i| (i.name.clone(), 0)).collect();
    let mut test_positives = counts.clone();
    let mut classes = BTreeMap::new();
    let mut records = Vec::with_capacity(n - n_test);
    let mut test_rows = Vec::with_capacity(n_test);
    for (i, (text, class)) in rows.into_iter().enumerate() {
        if let Some(k) = class {
            *counts.get_mut(&spec.intents[k].name).unwrap() += 1;
        }
        if is_test[i] {
            if let Some(k) = class {
                *test_positives.get_mut(&spec.intents[k].name).unwrap() += 1;
            }
            test_rows.push((text, class));
        } else {
            classes.insert(i as u64, class);
            records.push(RawRecord { id: Some(i as u64), text });
        }
    }
    let corpus_id = corpus_id_for(spec.rng_seed);
    let (corpus, _) = Corpus::ingest(&corpus_id, records, spec.max_chars)?;
    let mut entries = Vec::with_capacity(n_test * spec.intents.len());
    for (k, it) in spec.intents.iter().enumerate() {
        for (text, class) in &test_rows {
            entries.push(TestEntry {
                text: text.clone(),
                intent: it.name.clone(),
                positive: *class == Some(k),
                utterance_id: None,
            });
        }
    }
    let truth = GroundTruth {
        intents: spec.intents.iter().map(|i| i.name.clone()).collect(),
        classes,
        counts,
        test_positives,
    };
    Ok(SyntheticData {
        corpus,
        test: TestSet { corpus_id, entries },
        truth,
    })
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| (*s).to_owned()).collect()
}

fn intent(name: &str, templates: &[&str], pos: &[&str], neg: &[&str]) -> IntentSpec {
    IntentSpec {
        name: name.to_owned(),
        prevalence: 0.04,
        templates: strings(templates),
        positive_queries: strings(pos),
        negative_queries: strings(neg),
    }
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let slots: BTreeMap<String, Vec<String>> = [
            ("sched_verb", &["schedule", "book", "arrange", "set up", "reschedule", "plan", "organize"][..]),
            ("sched_thing", &["meeting", "call", "appointment", "demo", "consultation", "session", "walkthrough"]),
            ("who", &["an engineer", "sales", "a technician", "your team", "someone from support", "an advisor", "my account manager"]),
            ("when", &["tomorrow", "next week", "on monday", "on friday", "this afternoon", "later today", "at 3pm", "next month", "on thursday morning"]),
            ("promo", &["discount", "promo code", "coupon", "special offer", "deal", "voucher", "promotion", "sale price"]),
            ("promo_for", &["for new customers", "on annual plans", "for students", "this month", "on the premium plan", "for my renewal", "for referrals", "for nonprofits", "for black friday"]),
            ("valid", &["valid", "available", "active", "still running", "working"]),
            ("up_verb", &["upgrade", "move up", "switch", "bump", "go"]),
            ("plan", &["plan", "subscription", "account", "license", "package", "membership"]),
            ("tier", &["premium", "pro", "enterprise", "the business tier", "the higher tier", "unlimited", "the team plan"]),
            ("soon", &["today", "right now", "before my renewal", "this week", "immediately", "asap"]),
            ("charged", &["charged twice", "overcharged", "double billed", "charged extra", "billed again", "charged the wrong amount"]),
            ("bill", &["invoice", "bill", "payment", "statement", "card charge", "receipt"]),
            ("bill_wrong", &["wrong", "higher than usual", "incorrect", "not what i expected", "way too high"]),
            ("bill_when", &["this month", "last month", "yesterday", "on my card", "again", "for march"]),
            ("device", &["laptop", "phone", "router", "printer", "tablet", "desktop", "headset", "monitor"]),
            ("problem", &["will not turn on", "keeps crashing", "is very slow", "shows a blue screen", "lost wifi", "is overheating", "froze", "keeps restarting"]),
            ("task", &["reset my password", "install the app", "change my email", "enable two factor", "export my data", "delete a user", "connect to vpn", "update the driver", "sync my files"]),
            ("app", &["app", "dashboard", "mobile app", "desktop client", "web portal", "plugin"]),
            ("error", &["an error 500", "a blank page", "a timeout", "an invalid token message", "a spinning wheel", "a login loop"]),
            ("doc", &["the user guide", "the api docs", "release notes", "the admin settings", "my order history", "the setup wizard"]),
            ("ship", &["my order", "the package", "the replacement part", "the new hardware", "my shipment"]),
            ("ship_state", &["has not arrived", "is delayed", "arrived damaged", "went to the wrong address", "is stuck in transit"]),
            ("greeting", &["hi there", "hello", "good morning", "hey", "is anyone there", "are you a bot"]),
            ("thanks", &["thanks for the help", "that fixed it", "great thank you", "ok got it", "perfect thanks", "that worked"]),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), strings(v)))
        .collect();

        let intents = vec![
            intent(
                "schedule",
                &[
                    "can i {sched_verb} a {sched_thing} {when}",
                    "i would like to {sched_verb} a {sched_thing} with {who}",
                    "please {sched_verb} a {sched_thing} for {when}",
                    "is there a slot {when} to {sched_verb} a {sched_thing}",
                    "need to {sched_verb} a {sched_thing} with {who} {when}",
                ],
                &[
                    "(schedule OR book) AND (meeting OR call)",
                    "(arrange OR reschedule) AND (appointment OR demo)",
                    "(book OR schedule) AND (consultation OR walkthrough OR session)",
                    "slot AND (meeting OR call OR demo)",
                    "organize AND (meeting OR call)",
                ],
                &["\"meeting link\"", "password reset", "printer laptop crashing", "order arrived"],
            ),
            intent(
                "promotion",
                &[
                    "do you have any {promo} {promo_for}",
                    "is the {promo} {valid}",
                    "how do i apply the {promo} {promo_for}",
                    "i saw an ad about a {promo} {promo_for}",
                    "can i get the {promo} {promo_for}",
                ],
                &[
                    "(discount OR coupon) AND (apply OR get)",
                    "\"promo code\" AND valid",
                    "\"special offer\" AND (students OR referrals OR nonprofits)",
                    "(voucher OR promotion) AND (apply OR available OR valid)",
                    "\"sale price\"",
                ],
                &["\"promo email\"", "password reset", "router printer slow", "package delayed"],
            ),
            intent(
                "upgrade",
                &[
                    "i want to {up_verb} my {plan} to {tier}",
                    "how much to {up_verb} to {tier}",
                    "can you {up_verb} my {plan} to {tier} {soon}",
                    "what do i get if i {up_verb} to {tier}",
                    "please {up_verb} the {plan} to {tier} {soon}",
                ],
                &[
                    "upgrade AND plan",
                    "premium pro enterprise",
                    "(upgrade OR switch) AND subscription",
                    "tier",
                    "(upgrade OR bump) AND (license OR unlimited)",
                ],
                &["\"plan page\"", "install app", "phone crashing", "shipment transit"],
            ),
            intent(
                "billing",
                &[
                    "i was {charged} {bill_when}",
                    "there is a problem with my {bill} {bill_when}",
                    "why is my {bill} {bill_wrong}",
                    "can you explain the {bill} from {bill_when}",
                    "i need a refund for the {bill} {bill_when}",
                ],
                &[
                    "charged twice",
                    "invoice AND (wrong OR incorrect)",
                    "refund bill",
                    "overcharged billed",
                    "statement AND (explain OR high)",
                ],
                &["\"invoice address\"", "vpn connect", "monitor screen", "order damaged"],
            ),
        ];

        let background = strings(&[
            "my {device} {problem}",
            "how do i {task}",
            "i cannot {task} on my {device}",
            "the {app} shows {error}",
            "where can i find {doc}",
            "{ship} {ship_state}",
            "{greeting}",
            "{thanks}",
            "{greeting} my {device} {problem}",
            "i tried to {task} but the {app} shows {error}",
            // look-alikes: intent vocabulary in unrelated support chatter
            "the {sched_thing} link in the {app} shows {error}",
            "i missed the {sched_thing} because my {device} {problem}",
            "my {device} {problem} during every {sched_thing}",
            "can i {task} before the {sched_thing} {when}",
            "i got a {promo} email but i need to {task}",
            "the {promo} page in the {app} shows {error}",
            "my {promo} email says {ship} {ship_state}",
            "how do i {up_verb} the driver on my {device}",
            "the {app} {up_verb} failed with {error}",
            "after the {up_verb} my {device} {problem}",
            "the {plan} page in the {app} shows {error}",
            "how do i change the {bill} address for {ship}",
            "where can i download my {bill} from {bill_when}",
            "the {bill} page in the {app} shows {error}",
        ]);

        SyntheticSpec {
            n_utterances: 10_000,
            intents,
            background,
            slots,
            prefixes: strings(&["", "", "", "hi", "hello", "hey", "quick question", "sorry", "good morning"]),
            suffixes: strings(&["", "", "", "thanks", "please", "thank you", "if possible", "asap", "any help appreciated"]),
            noise_rate: 0.03,
            test_fraction: 0.1,
            max_chars: DEFAULT_MAX_CHARS,
            rng_seed: 0,
        }
    }
}
