//! Per-example records, corpus validation and the calibration/simulation
//! partition.

mod generate;

pub use generate::{generate_corpus, SyntheticCorpusSpec, TokenModel, PAIRED_SCORE};

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

/// Duplication levels present in a spiked training run.
pub const DUP_LEVELS: [u32; 6] = [0, 1, 4, 16, 64, 256];

pub fn is_dup_level(level: u32) -> bool {
    DUP_LEVELS.contains(&level)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Calibration,
    Simulation,
}

/// Statistics for one realized token under the target model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenStats {
    /// Log-probability of the realized token (nats).
    #[serde(rename = "lp")]
    pub logprob: f64,
    /// Expected log-probability under the full next-token distribution.
    pub mu: f64,
    /// Standard deviation of log-probability under that distribution.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub benchmark: String,
    pub dup_level: u32,
    pub split: Split,
    pub tokens: Vec<TokenStats>,
    pub ref_loglik: Option<f64>,
    pub zlib_len: u64,
    #[serde(with = "bit")]
    pub y_std: bool,
    #[serde(with = "bit")]
    pub y_pert: bool,
    pub p_std_conf: f64,
    #[serde(default)]
    pub external_scores: BTreeMap<String, f64>,
}

impl ExampleRecord {
    pub fn is_contaminated(&self) -> bool {
        self.dup_level > 0
    }

    /// Record-level invariant check; violations are appended to `out`.
    pub fn check(&self, index: usize, out: &mut Vec<Violation>) {
        let mut push = |field, message: String| out.push(Violation { index, field, message });
        if self.id.is_empty() {
            push("id", "empty id".into());
        }
        if !is_dup_level(self.dup_level) {
            push(
                "dup_level",
                format!("{} is not one of {:?}", self.dup_level, DUP_LEVELS),
            );
        }
        if self.tokens.is_empty() {
            push("tokens", "token list is empty".into());
        }
        for (t, tok) in self.tokens.iter().enumerate() {
            if !(tok.logprob <= 0.0) {
                push("tokens", format!("token {t}: lp {} is not <= 0", tok.logprob));
            }
            if !(tok.sigma >= 0.0) || !tok.mu.is_finite() {
                push("tokens", format!("token {t}: invalid mu/sigma ({}, {})", tok.mu, tok.sigma));
            }
        }
        if self.zlib_len == 0 {
            push("zlib_len", "must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.p_std_conf) {
            push("p_std_conf", format!("{} outside [0, 1]", self.p_std_conf));
        }
        if let Some(r) = self.ref_loglik {
            if !r.is_finite() {
                push("ref_loglik", "not finite".into());
            }
        }
    }
}

/// Validated, immutable collection of records.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    records: Vec<ExampleRecord>,
    benchmarks: BTreeSet<String>,
}

impl Corpus {
    /// Validates record invariants and id uniqueness. All violations are
    /// collected before failing.
    pub fn new(records: Vec<ExampleRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyInput("corpus"));
        }
        let mut violations = Vec::new();
        let mut seen = BTreeMap::new();
        for (i, rec) in records.iter().enumerate() {
            rec.check(i, &mut violations);
            if let Some(first) = seen.insert(rec.id.as_str(), i) {
                violations.push(Violation {
                    index: i,
                    field: "id",
                    message: format!("duplicate id `{}` (first at record {first})", rec.id),
                });
            }
        }
        if !violations.is_empty() {
            return Err(Error::InvalidCorpus(violations));
        }
        let benchmarks = records.iter().map(|r| r.benchmark.clone()).collect();
        Ok(Corpus { records, benchmarks })
    }

    pub fn records(&self) -> &[ExampleRecord] {
        &self.records
    }

    pub fn benchmarks(&self) -> &BTreeSet<String> {
        &self.benchmarks
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<ExampleRecord> {
        self.records
    }

    fn require(&self, benchmark: &str) -> Result<()> {
        if self.benchmarks.contains(benchmark) {
            Ok(())
        } else {
            Err(Error::UnknownBenchmark(benchmark.into()))
        }
    }

    /// Records of `benchmark` in the requested split, in corpus order.
    pub fn split(&self, benchmark: &str, which: Split) -> Result<Vec<&ExampleRecord>> {
        self.require(benchmark)?;
        Ok(self
            .records
            .iter()
            .filter(|r| r.benchmark == benchmark && r.split == which)
            .collect())
    }

    /// Positivity: both splits, and both clean and spiked records within each
    /// split, exist for `benchmark`.
    pub fn check_positivity(&self, benchmark: &str) -> Result<()> {
        for which in [Split::Calibration, Split::Simulation] {
            let part = self.split(benchmark, which)?;
            let clean = part.iter().any(|r| r.dup_level == 0);
            let spiked = part.iter().any(|r| r.dup_level > 0);
            if !clean || !spiked {
                return Err(Error::MissingClass {
                    benchmark: benchmark.into(),
                    what: format!(
                        "{which:?} split lacks {} records",
                        if clean { "contaminated" } else { "clean" }
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Serde adapter storing a bool as the integer 0 or 1.
mod bit {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(*v as u8)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(D::Error::custom(alloc::format!("expected 0 or 1, got {other}"))),
        }
    }
}
