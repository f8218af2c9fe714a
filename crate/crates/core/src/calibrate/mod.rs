//! Memorization and correctness predictors: raw scores mapped to
//! probabilities by Platt scaling fit on the calibration split.

mod metrics;
mod platt;

pub use metrics::{absolute_bias, auroc};
pub use platt::{fit_platt, fit_platt_traced, smoothed_targets, PlattFit, PlattModel};

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{Corpus, ExampleRecord, Split, DUP_LEVELS};
use crate::error::{Error, Result};
use crate::mia::{self, MiaMethod};
use crate::seed::rng_for;

/// Estimates `P(contaminated | item)` from an MIA score.
#[derive(Debug, Clone, PartialEq)]
pub struct MemorizationPredictor {
    pub method: MiaMethod,
    pub platt: PlattModel,
    pub trained_on: Vec<String>,
    /// Records used in the fit.
    pub fit_count: usize,
}

impl MemorizationPredictor {
    pub fn raw(&self, rec: &ExampleRecord) -> Result<f64> {
        mia::score(rec, self.method)
    }

    pub fn predict(&self, rec: &ExampleRecord) -> Result<f64> {
        self.raw(rec).map(|s| self.platt.predict(s))
    }
}

/// Estimates `P(standard model correct | item)` from a named external score.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectnessPredictor {
    pub source: String,
    pub platt: PlattModel,
    pub trained_on: Vec<String>,
    pub fit_count: usize,
}

impl CorrectnessPredictor {
    pub fn raw(&self, rec: &ExampleRecord) -> Result<f64> {
        external_score(rec, &self.source)
    }

    pub fn predict(&self, rec: &ExampleRecord) -> Result<f64> {
        self.raw(rec).map(|s| self.platt.predict(s))
    }
}

pub(crate) fn external_score(rec: &ExampleRecord, name: &str) -> Result<f64> {
    rec.external_scores
        .get(name)
        .copied()
        .ok_or_else(|| Error::MissingScore { id: rec.id.clone(), name: name.to_string() })
}

/// Round-robin allocation of `total` draws over strata with the given
/// capacities; earlier strata receive the remainder.
pub fn allocate(total: usize, caps: &[usize]) -> Vec<usize> {
    let mut out = alloc::vec![0; caps.len()];
    let mut remaining = total;
    while remaining > 0 {
        let mut progressed = false;
        for (slot, &cap) in out.iter_mut().zip(caps) {
            if remaining > 0 && *slot < cap {
                *slot += 1;
                remaining -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    out
}

fn take_random<'a, R: Rng>(
    mut pool: Vec<&'a ExampleRecord>,
    k: usize,
    rng: &mut R,
) -> Vec<&'a ExampleRecord> {
    pool.shuffle(rng);
    pool.truncate(k);
    pool
}

/// Balanced subsample for memorization calibration: half clean, half spiked,
/// with the spiked half spread evenly over duplication levels. Returns
/// `min(n, available)` records.
pub fn balanced_memorization_sample<'a, R: Rng>(
    records: &[&'a ExampleRecord],
    n: usize,
    rng: &mut R,
) -> Vec<&'a ExampleRecord> {
    let by_level: Vec<Vec<&ExampleRecord>> = DUP_LEVELS
        .iter()
        .map(|&l| records.iter().copied().filter(|r| r.dup_level == l).collect())
        .collect();
    let clean_cap = by_level[0].len();
    let spiked_caps: Vec<usize> = by_level[1..].iter().map(Vec::len).collect();
    let class_alloc = allocate(n, &[clean_cap, spiked_caps.iter().sum()]);
    let level_alloc = allocate(class_alloc[1], &spiked_caps);

    let mut out = Vec::with_capacity(n);
    let mut levels = by_level.into_iter();
    out.extend(take_random(levels.next().unwrap_or_default(), class_alloc[0], rng));
    for (pool, k) in levels.zip(level_alloc) {
        out.extend(take_random(pool, k, rng));
    }
    out
}

fn calibration_records<'a, S: AsRef<str>>(
    corpus: &'a Corpus,
    benchmarks: &[S],
) -> Result<Vec<&'a ExampleRecord>> {
    if benchmarks.is_empty() {
        return Err(Error::param("benchmarks", "at least one benchmark is required"));
    }
    let mut out = Vec::new();
    for b in benchmarks {
        out.extend(corpus.split(b.as_ref(), Split::Calibration)?);
    }
    Ok(out)
}

fn names<S: AsRef<str>>(benchmarks: &[S]) -> Vec<String> {
    benchmarks.iter().map(|b| b.as_ref().to_string()).collect()
}

/// Fits a pooled binary memorization predictor (label `dup_level > 0`).
pub fn calibrate_memorization<S: AsRef<str>>(
    corpus: &Corpus,
    benchmarks: &[S],
    method: MiaMethod,
    max_examples: Option<usize>,
    seed: u64,
) -> Result<MemorizationPredictor> {
    method.validate()?;
    let pool = calibration_records(corpus, benchmarks)?;
    let selected = match max_examples {
        Some(n) if n < 2 => return Err(Error::param("max_examples", "must be at least 2")),
        Some(n) => {
            let mut rng = rng_for(seed, "calibrate/memorization", 0);
            balanced_memorization_sample(&pool, n, &mut rng)
        }
        None => pool,
    };
    fit_memorization(&selected, benchmarks, method)
}

/// Fits on exactly the given records.
pub fn fit_memorization<S: AsRef<str>>(
    records: &[&ExampleRecord],
    benchmarks: &[S],
    method: MiaMethod,
) -> Result<MemorizationPredictor> {
    let labels: Vec<bool> = records.iter().map(|r| r.is_contaminated()).collect();
    if !labels.iter().any(|&l| l) || !labels.iter().any(|&l| !l) {
        return Err(Error::MissingClass {
            benchmark: names(benchmarks).join(","),
            what: "memorization calibration needs clean and spiked records".into(),
        });
    }
    let scores = mia::score_all(records.iter().copied(), method)?;
    let platt = fit_platt(&scores, &labels)?;
    Ok(MemorizationPredictor {
        method,
        platt,
        trained_on: names(benchmarks),
        fit_count: records.len(),
    })
}

/// Fits a correctness predictor on clean calibration records only, with
/// `y_std` as the label.
pub fn calibrate_correctness<S: AsRef<str>>(
    corpus: &Corpus,
    benchmarks: &[S],
    source: &str,
    max_examples: Option<usize>,
    seed: u64,
) -> Result<CorrectnessPredictor> {
    let clean: Vec<&ExampleRecord> = calibration_records(corpus, benchmarks)?
        .into_iter()
        .filter(|r| !r.is_contaminated())
        .collect();
    if clean.is_empty() {
        return Err(Error::MissingClass {
            benchmark: names(benchmarks).join(","),
            what: "no clean calibration records".into(),
        });
    }
    if !clean.iter().any(|r| r.external_scores.contains_key(source)) {
        return Err(Error::param("source", format!("unknown score name `{source}`")));
    }
    let selected = match max_examples {
        Some(n) if n < 2 => return Err(Error::param("max_examples", "must be at least 2")),
        Some(n) => take_random(clean, n, &mut rng_for(seed, "calibrate/correctness", 0)),
        None => clean,
    };
    fit_correctness(&selected, benchmarks, source)
}

pub fn fit_correctness<S: AsRef<str>>(
    records: &[&ExampleRecord],
    benchmarks: &[S],
    source: &str,
) -> Result<CorrectnessPredictor> {
    let clean: Vec<&ExampleRecord> =
        records.iter().copied().filter(|r| !r.is_contaminated()).collect();
    let mut scores = Vec::with_capacity(clean.len());
    for r in &clean {
        scores.push(external_score(r, source)?);
    }
    let labels: Vec<bool> = clean.iter().map(|r| r.y_std).collect();
    let platt = fit_platt(&scores, &labels)?;
    Ok(CorrectnessPredictor {
        source: source.to_string(),
        platt,
        trained_on: names(benchmarks),
        fit_count: clean.len(),
    })
}
