//! Corpus JSONL, predictor JSON and CSV output.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context};
use decontam_core::calibrate::{CorrectnessPredictor, MemorizationPredictor, PlattModel};
use decontam_core::corpus::{Corpus, ExampleRecord};
use decontam_core::mia::MiaMethod;
use decontam_core::Error as CoreError;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

const RECORD_FIELDS: [&str; 11] = [
    "id",
    "benchmark",
    "dup_level",
    "split",
    "tokens",
    "ref_loglik",
    "zlib_len",
    "y_std",
    "y_pert",
    "p_std_conf",
    "external_scores",
];
const TOKEN_FIELDS: [&str; 3] = ["lp", "mu", "sigma"];

/// Parses one JSONL record, returning it with the names of ignored fields.
pub fn parse_record(line: &str) -> Result<(ExampleRecord, Vec<String>), String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let Value::Object(obj) = value else {
        return Err("expected a JSON object".into());
    };
    let mut unknown = Vec::new();
    let mut clean = Map::new();
    for (k, v) in obj {
        if !RECORD_FIELDS.contains(&k.as_str()) {
            unknown.push(k);
            continue;
        }
        if k == "tokens" {
            if let Value::Array(tokens) = v {
                let mut kept = Vec::with_capacity(tokens.len());
                for (i, t) in tokens.into_iter().enumerate() {
                    match t {
                        Value::Object(tok) => {
                            let mut m = Map::new();
                            for (tk, tv) in tok {
                                if TOKEN_FIELDS.contains(&tk.as_str()) {
                                    m.insert(tk, tv);
                                } else {
                                    unknown.push(format!("tokens[{i}].{tk}"));
                                }
                            }
                            kept.push(Value::Object(m));
                        }
                        other => kept.push(other),
                    }
                }
                clean.insert(k, Value::Array(kept));
                continue;
            }
        }
        clean.insert(k, v);
    }
    let record = serde_json::from_value(Value::Object(clean)).map_err(|e| e.to_string())?;
    Ok((record, unknown))
}

/// Loads a JSONL corpus. Parse errors and invariant violations are reported
/// with 1-based line numbers; unknown fields are logged and ignored.
pub fn load_corpus(path: &Path) -> Result<Corpus, CliError> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display())).map_err(CliError::Runtime)?;
    let mut records = Vec::new();
    let mut lines = Vec::new();
    let mut problems = Vec::new();
    let mut ignored = BTreeSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display())).map_err(CliError::Runtime)?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(&line) {
            Ok((rec, unknown)) => {
                ignored.extend(unknown);
                records.push(rec);
                lines.push(i + 1);
            }
            Err(e) => problems.push(format!("line {}: {e}", i + 1)),
        }
    }
    if !ignored.is_empty() {
        let names: Vec<String> = ignored.into_iter().collect();
        log::warn!("{}: ignoring unknown fields: {}", path.display(), names.join(", "));
    }
    if !problems.is_empty() {
        return Err(CliError::Validation(anyhow::anyhow!(
            "{}: {} malformed line(s)\n  {}",
            path.display(),
            problems.len(),
            problems.join("\n  ")
        )));
    }
    if records.is_empty() {
        return Err(CliError::Validation(anyhow::anyhow!("{}: corpus file is empty", path.display())));
    }
    Corpus::new(records).map_err(|e| match e {
        CoreError::InvalidCorpus(violations) => {
            let listed: Vec<String> = violations
                .iter()
                .map(|v| format!("line {}: field `{}`: {}", lines[v.index], v.field, v.message))
                .collect();
            CliError::Validation(anyhow::anyhow!(
                "{}: {} invalid record(s)\n  {}",
                path.display(),
                listed.len(),
                listed.join("\n  ")
            ))
        }
        other => CliError::from(other),
    })
}

pub fn write_corpus(path: &Path, corpus: &Corpus) -> anyhow::Result<()> {
    let mut out = BufWriter::new(create(path)?);
    for rec in corpus.records() {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn create(path: &Path) -> anyhow::Result<fs::File> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::File::create(path).with_context(|| format!("creating {}", path.display()))
}

/// On-disk predictor form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PredictorFile {
    Memorization { method: MiaMethod, a: f64, b: f64, trained_on: Vec<String> },
    Correctness { source: String, a: f64, b: f64, trained_on: Vec<String> },
}

impl From<&MemorizationPredictor> for PredictorFile {
    fn from(p: &MemorizationPredictor) -> Self {
        PredictorFile::Memorization {
            method: p.method,
            a: p.platt.a,
            b: p.platt.b,
            trained_on: p.trained_on.clone(),
        }
    }
}

impl From<&CorrectnessPredictor> for PredictorFile {
    fn from(p: &CorrectnessPredictor) -> Self {
        PredictorFile::Correctness {
            source: p.source.clone(),
            a: p.platt.a,
            b: p.platt.b,
            trained_on: p.trained_on.clone(),
        }
    }
}

impl PredictorFile {
    pub fn into_memorization(self) -> anyhow::Result<MemorizationPredictor> {
        match self {
            PredictorFile::Memorization { method, a, b, trained_on } => Ok(MemorizationPredictor {
                method,
                platt: PlattModel { a, b },
                trained_on,
                fit_count: 0,
            }),
            PredictorFile::Correctness { .. } => bail!("expected a memorization predictor"),
        }
    }

    pub fn into_correctness(self) -> anyhow::Result<CorrectnessPredictor> {
        match self {
            PredictorFile::Correctness { source, a, b, trained_on } => Ok(CorrectnessPredictor {
                source,
                platt: PlattModel { a, b },
                trained_on,
                fit_count: 0,
            }),
            PredictorFile::Memorization { .. } => bail!("expected a correctness predictor"),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut out = BufWriter::new(create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_predictor(path: &Path) -> anyhow::Result<PredictorFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Writes a header row and records with RFC 4180 quoting.
pub fn write_csv<S: AsRef<str>>(path: &Path, header: &[&str], rows: &[Vec<S>]) -> anyhow::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(create(path)?);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|c| c.as_ref()))?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest round-trip representation; CSV consumers re-parse exact values.
pub fn num(x: f64) -> String {
    format!("{x}")
}
