use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_decontam")
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("decontam.toml"), config).unwrap();
        Workspace { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(bin())
            .current_dir(self.dir.path())
            .env_remove("DECONTAM_WORKERS")
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    }

    fn csv_rows(&self, rel: &str) -> Vec<Vec<String>> {
        let mut reader = csv::Reader::from_path(self.path(rel)).unwrap();
        reader
            .records()
            .map(|r| r.unwrap().iter().map(String::from).collect())
            .collect()
    }
}

const SMALL: &str = r#"
seed = 11
[corpus.synthetic]
n_per_benchmark = 60
benchmarks = ["mmlu", "popqa", "triviaqa"]
"#;

#[test]
fn gen_data_writes_every_level_and_split() {
    let ws = Workspace::new(SMALL);
    ws.ok(&["gen-data"]);
    let text = fs::read_to_string(ws.path("out/corpus.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 3 * 60 * 6 * 2);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ws.path("out/gen-data.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["synthetic_corpus"]["n_per_benchmark"], 60);

    let first = fs::read(ws.path("out/corpus.jsonl")).unwrap();
    ws.ok(&["gen-data"]);
    assert_eq!(first, fs::read(ws.path("out/corpus.jsonl")).unwrap());
}

#[test]
fn invalid_spec_fails_before_writing() {
    let ws = Workspace::new(
        r#"
[corpus.synthetic]
memorization_curve = [0.0, 0.5, 0.4, 0.6, 0.8, 0.9]
"#,
    );
    let out = ws.run(&["gen-data"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!ws.path("out").exists());
}

#[test]
fn unknown_config_keys_and_bad_usage_are_validation_errors() {
    let ws = Workspace::new("[simulate]\nreplicats = 5\n");
    assert_eq!(ws.run(&["simulate"]).status.code(), Some(1));
    assert_eq!(ws.run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(ws.run(&["--help"]).status.code(), Some(0));
}

/// Writes a generated corpus with some fields rewritten, returning its path.
fn edited_corpus(ws: &Workspace, edit: impl Fn(usize, &mut serde_json::Value)) -> PathBuf {
    ws.ok(&["gen-data"]);
    let text = fs::read_to_string(ws.path("out/corpus.jsonl")).unwrap();
    let mut edited = String::new();
    for (i, line) in text.lines().enumerate() {
        let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
        edit(i, &mut v);
        edited.push_str(&v.to_string());
        edited.push('\n');
    }
    let path = ws.path("edited.jsonl");
    fs::write(&path, edited).unwrap();
    path
}

fn with_corpus(ws: &Workspace, corpus: &Path, rest: &str) {
    let config = format!("seed = 11\n[corpus]\npath = {:?}\n{rest}", corpus.file_name().unwrap());
    fs::write(ws.path("decontam.toml"), config).unwrap();
}

#[test]
fn reference_without_ref_loglik_lists_records_and_fails() {
    let ws = Workspace::new(SMALL);
    let corpus = edited_corpus(&ws, |_, v| {
        v.as_object_mut().unwrap().remove("ref_loglik");
    });
    with_corpus(&ws, &corpus, "[calibrate]\nmethods = [\"reference\"]\n");
    let out = ws.run(&["calibrate", "-o", "cal"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("reference unavailable"), "{stderr}");
    assert!(stderr.contains("mmlu-"), "record ids missing: {stderr}");
}

#[test]
fn corpus_errors_carry_line_numbers() {
    let ws = Workspace::new(SMALL);
    let corpus = edited_corpus(&ws, |i, v| {
        if i == 4 {
            v["dup_level"] = 3.into();
        }
    });
    with_corpus(&ws, &corpus, "");
    let out = ws.run(&["simulate"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 5"), "{stderr}");
    assert!(stderr.contains("dup_level"), "{stderr}");
}

#[test]
fn unknown_fields_are_ignored_and_corpus_round_trips() {
    let ws = Workspace::new(SMALL);
    let corpus = edited_corpus(&ws, |_, v| {
        v["annotator"] = "x".into();
    });
    with_corpus(&ws, &corpus, "[simulate]\nreplicates = 5\nregimes = [\"random-high\"]\n");
    ws.ok(&["simulate", "-o", "from_file"]);

    let text = fs::read_to_string(&corpus).unwrap();
    let loaded = decontam::io::load_corpus(&corpus).unwrap();
    assert_eq!(loaded.len(), text.lines().count());
    let rewritten = ws.path("rewritten.jsonl");
    decontam::io::write_corpus(&rewritten, &loaded).unwrap();
    assert_eq!(decontam::io::load_corpus(&rewritten).unwrap(), loaded);
    assert_eq!(
        fs::read_to_string(&rewritten).unwrap(),
        fs::read_to_string(ws.path("out/corpus.jsonl")).unwrap()
    );
}

#[test]
fn calibrate_writes_predictors_and_table_layouts() {
    let ws = Workspace::new(&format!("{SMALL}[calibrate]\nbenchmarks = [\"mmlu\"]\n"));
    ws.ok(&["calibrate"]);
    let mem = ws.csv_rows("out/calibration_memorization.csv");
    assert_eq!(mem.len(), 5);
    assert!(mem.iter().all(|r| r.len() == 6 && r[0] == "mmlu"));
    for row in &mem {
        for cell in &row[2..] {
            let v: f64 = cell.parse().unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }
    let corr = ws.csv_rows("out/calibration_correctness.csv");
    assert_eq!(corr.len(), 1);
    assert!(ws.path("out/predictors/memorization_mmlu_min_kpp.json").exists());
    assert!(ws.path("out/predictors/correctness_mmlu_paired_llm.json").exists());
}

#[test]
fn saved_predictor_feeds_simulate() {
    let ws = Workspace::new(SMALL);
    ws.ok(&["calibrate"]);
    let config = format!(
        "{SMALL}[simulate]\nreplicates = 10\nregimes = [\"random-mid\"]\n\
         memorization = {{ kind = \"file\", path = \"out/predictors/memorization_mmlu_loss.json\" }}\n\
         correctness = {{ kind = \"oracle\" }}\n"
    );
    fs::write(ws.path("decontam.toml"), config).unwrap();
    ws.ok(&["simulate", "-o", "sim"]);
    assert_eq!(ws.csv_rows("sim/simulate_summary.csv").len(), 5);

    // A correctness file in the memorization slot is rejected.
    let config = format!(
        "{SMALL}[simulate]\nmemorization = {{ kind = \"file\", path = \"out/predictors/correctness_mmlu_paired_llm.json\" }}\n"
    );
    fs::write(ws.path("decontam.toml"), config).unwrap();
    assert_eq!(ws.run(&["simulate", "-o", "sim2"]).status.code(), Some(1));
}

#[test]
fn simulate_summary_has_one_row_per_regime_and_estimator() {
    let ws = Workspace::new(&format!(
        "{SMALL}[simulate]\nreplicates = 20\nregimes = [\"random-low\", \"correlated-mid-easy\", \"correlated-high-hard\"]\n\
         estimators = [\"naive\", \"ipw\", \"combined\"]\n"
    ));
    ws.ok(&["simulate"]);
    let rows = ws.csv_rows("out/simulate_summary.csv");
    assert_eq!(rows.len(), 9);
    let fingerprint = &rows[0][4];
    assert_eq!(fingerprint.len(), 16);
    assert!(rows.iter().all(|r| &r[4] == fingerprint));
    let reps = ws.csv_rows("out/simulate_replicates_correlated-mid-easy.csv");
    assert_eq!(reps.len(), 20);
    assert_eq!(reps[0].len(), 2 + 3);
}

#[test]
fn missing_correctness_for_imputation_is_a_validation_error() {
    let ws = Workspace::new(&format!(
        "{SMALL}[simulate]\nreplicates = 5\nestimators = [\"imputation\"]\ncorrectness = {{ kind = \"none\" }}\n"
    ));
    assert_eq!(ws.run(&["simulate"]).status.code(), Some(1));
}

#[test]
fn experiment_row_counts() {
    let ws = Workspace::new(&format!(
        "{SMALL}\
         [phase]\nauroc_grid = [0.5, 0.9]\nbias_grid = [0.0, 0.25, 0.5]\nregimes = [\"random-high\"]\nreplicates = 5\n\
         [efficiency]\nsizes = [10, 40]\nreplicates = 5\n\
         [transfer]\nsources = [\"mmlu\", \"popqa\", \"triviaqa\"]\ntargets = [\"mmlu\", \"popqa\", \"triviaqa\"]\n\
         regimes = [\"random-high\"]\nreplicates = 5\n"
    ));
    ws.ok(&["phase"]);
    let phase = ws.csv_rows("out/phase.csv");
    assert_eq!(phase.len(), 2 * 3 * 4);
    // One winner per cell.
    assert_eq!(phase.iter().filter(|r| r[5] == "true").count(), 6);

    ws.ok(&["efficiency"]);
    let eff = ws.csv_rows("out/efficiency.csv");
    assert_eq!(eff.len(), 2 * 4 + 2);
    assert_eq!(eff.iter().filter(|r| r[1] == "clean_only").count(), 2);

    ws.ok(&["transfer"]);
    let tr = ws.csv_rows("out/transfer.csv");
    assert_eq!(tr.len(), 9 + 3);
    assert_eq!(tr.iter().filter(|r| r[0] == "naive").count(), 3);
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let ws = Workspace::new(&format!(
        "{SMALL}[simulate]\nreplicates = 30\n\
         [phase]\nauroc_grid = [0.6]\nbias_grid = [0.1, 0.3]\nreplicates = 6\n"
    ));
    for (workers, dir) in [("1", "w1"), ("8", "w8")] {
        ws.ok(&["simulate", "-w", workers, "-o", dir]);
        ws.ok(&["phase", "-w", workers, "-o", dir]);
    }
    for name in ["simulate_summary.csv", "simulate_replicates_random-high.csv", "phase.csv", "phase.manifest.json"] {
        assert_eq!(
            fs::read(ws.path(&format!("w1/{name}"))).unwrap(),
            fs::read(ws.path(&format!("w8/{name}"))).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn seed_flag_overrides_config() {
    let ws = Workspace::new(&format!("{SMALL}[simulate]\nreplicates = 10\nregimes = [\"random-high\"]\n"));
    ws.ok(&["simulate", "-o", "a"]);
    ws.ok(&["simulate", "--seed", "12", "-o", "b"]);
    ws.ok(&["simulate", "--seed", "11", "-o", "c"]);
    let read = |d: &str| fs::read(ws.path(&format!("{d}/simulate_summary.csv"))).unwrap();
    assert_ne!(read("a"), read("b"));
    assert_eq!(read("a"), read("c"));
}
