use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use slp_core::harness::{generate_corpus, OracleLabeler, OracleParams, SyntheticData, SyntheticSpec};
use slp_core::downstream::METRIC_COLUMNS;
use slp_core::{Index, Session, SessionConfig};

fn slp(data_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slp"))
        .arg("--data-dir")
        .arg(data_dir)
        .args(args)
        .env_remove("SLP_DATA_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Fixture {
    _tmp: tempfile::TempDir,
    root: std::path::PathBuf,
    data: SyntheticData,
}

impl Fixture {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        let data = generate_corpus(&SyntheticSpec {
            n_utterances: 2000,
            rng_seed: 5,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let lines: Vec<String> = data
            .corpus
            .utterances()
            .iter()
            .map(|u| serde_json::json!({"id": u.id, "text": u.text}).to_string())
            .collect();
        fs::write(root.join("chats.jsonl"), lines.join("\n")).unwrap();
        fs::write(root.join("test.csv"), data.test.to_csv().unwrap()).unwrap();
        Fixture { _tmp: tmp, root, data }
    }

    fn data_dir(&self) -> std::path::PathBuf {
        self.root.join("data")
    }

    fn path(&self, name: &str) -> String {
        self.root.join(name).display().to_string()
    }

    fn index(&self) {
        let o = slp(&self.data_dir(), &["index", &self.path("chats.jsonl"), "--test", &self.path("test.csv")]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }

    /// Records an oracle-labeled session against the corpus and saves its script.
    fn record_script(&self, name: &str) -> String {
        let index = Index::build(&self.data.corpus);
        let oracle = OracleLabeler::new(&self.data.truth, "billing", OracleParams::EXACT, 0).unwrap();
        let mut s = Session::new(
            "billing",
            "chats",
            self.data.corpus.fingerprint(),
            SessionConfig { rng_seed: 2, ..SessionConfig::default() },
        )
        .unwrap();
        for q in ["charged twice", "refund bill", "password reset", "\"invoice address\""] {
            let qid = s.issue_query(&index, q).unwrap();
            for id in s.round(qid).unwrap().displayed.clone() {
                s.record_verdict(qid, id, oracle.label(id)).unwrap();
            }
        }
        let path = self.path(name);
        fs::write(&path, s.script().to_jsonl()).unwrap();
        path
    }
}

#[test]
fn index_is_cached_on_the_second_run() {
    let f = Fixture::new();
    let first = slp(&f.data_dir(), &["index", &f.path("chats.jsonl")]);
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    let want = format!("corpus chats: {} utterances", f.data.corpus.len());
    assert!(stdout(&first).contains(&want), "{}", stdout(&first));
    assert!(stdout(&first).contains("written to"));
    let second = slp(&f.data_dir(), &["index", &f.path("chats.jsonl")]);
    assert_eq!(second.status.code(), Some(0));
    assert!(stdout(&second).contains("cached at"), "{}", stdout(&second));
}

#[test]
fn missing_corpus_file_is_a_validation_error_naming_the_path() {
    let f = Fixture::new();
    let missing = f.path("nope.jsonl");
    let o = slp(&f.data_dir(), &["index", &missing]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(&missing), "{}", stderr(&o));
}

#[test]
fn unknown_flag_prints_usage_and_exits_1() {
    let f = Fixture::new();
    let o = slp(&f.data_dir(), &["train", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    let o = slp(&f.data_dir(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    let o = slp(&f.data_dir(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn replaying_twice_gives_identical_exports() {
    let f = Fixture::new();
    f.index();
    let script = f.record_script("script.jsonl");
    let (a, b) = (f.path("a"), f.path("b"));
    for out in [&a, &b] {
        let o = slp(&f.data_dir(), &["session", "--script", &script, "--corpus", "chats", "--out", out]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stdout(&o).starts_with("replayed 38 actions"), "{}", stdout(&o));
    }
    for name in ["script.jsonl", "labels.csv", "marginals.csv", "lambda.txt"] {
        let x = fs::read(Path::new(&a).join(name)).unwrap();
        let y = fs::read(Path::new(&b).join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    let exported = fs::read_to_string(Path::new(&a).join("script.jsonl")).unwrap();
    let recorded = fs::read_to_string(&script).unwrap();
    assert_eq!(exported, recorded + "{\"action\":\"finalize\"}\n");

    let o = slp(&f.data_dir(), &["session", "--script", &script, "--corpus", "other"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn train_and_eval_print_the_five_metric_columns() {
    let f = Fixture::new();
    f.index();
    let script = f.record_script("script.jsonl");
    let out = f.path("replay");
    assert_eq!(slp(&f.data_dir(), &["session", "--script", &script, "--corpus", "chats", "--out", &out]).status.code(), Some(0));

    let marginals = format!("{out}/marginals.csv");
    let model = f.path("weak.model");
    let args = ["train", "--labels", &marginals, "--mode", "weak", "--test", &f.path("test.csv"), "--intent", "billing", "--trees", "20", "--out", &model];
    let o = slp(&f.data_dir(), &args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = stdout(&o);
    let header = table.lines().nth(1).unwrap();
    for c in METRIC_COLUMNS {
        assert!(header.contains(c), "{c} missing from {header}");
    }
    assert!(table.contains("regressor"));

    let mut json_args = args.to_vec();
    json_args.push("--json");
    let o = slp(&f.data_dir(), &json_args);
    let trained: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(trained["model_kind"], "regressor");

    let o = slp(&f.data_dir(), &["eval", "--model", &model, "--test", &f.path("test.csv"), "--json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let evaluated: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(evaluated["metrics"], trained["metrics"]);

    let labels = format!("{out}/labels.csv");
    let o = slp(&f.data_dir(), &["train", "--labels", &labels, "--mode", "strong", "--test", &f.path("test.csv"), "--intent", "billing", "--trees", "20"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("classifier"));

    // the test set covers every intent
    let o = slp(&f.data_dir(), &["train", "--labels", &labels, "--mode", "strong", "--test", &f.path("test.csv")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--intent"));
}

#[test]
fn experiment_prints_table_trend_and_csv() {
    let f = Fixture::new();
    let config = serde_json::json!({
        "synthetic": {"n_utterances": 2500},
        "seeds": [0, 1],
        "run": {"forest": {"n_trees": 10}}
    });
    fs::write(f.path("exp.json"), config.to_string()).unwrap();
    let csv = f.path("runs.csv");
    let o = slp(&f.data_dir(), &["experiment", "--config", &f.path("exp.json"), "--csv", &csv]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("N (query)"), "{text}");
    assert!(text.contains("weak beats strong"), "{text}");
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 1 + 2 * 3);

    fs::write(f.path("bad.json"), r#"{"seeds": []}"#).unwrap();
    let o = slp(&f.data_dir(), &["experiment", "--config", &f.path("bad.json")]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    fs::write(f.path("broken.json"), "{").unwrap();
    let o = slp(&f.data_dir(), &["experiment", "--config", &f.path("broken.json")]);
    assert_eq!(o.status.code(), Some(1));
}
