//! Synthetic corpora mimicking a spiked pretraining run: a latent
//! item-response difficulty drives standard-model correctness, spiked items
//! flip from wrong to right with a level-dependent probability, and token
//! log-probabilities rise with duplication.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Corpus, ExampleRecord, Split, TokenStats, DUP_LEVELS};
use crate::error::{Error, Result};
use crate::math::{exp, round, sigmoid};
use crate::seed::rng_for;

/// Name of the synthetic paired-LLM confidence stored in `external_scores`.
pub const PAIRED_SCORE: &str = "paired_llm";

/// Parameters of the token log-probability mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenModel {
    /// Mean per-token log-probability of unseen text.
    pub clean_mean: f64,
    /// Spread of the per-record mean around `clean_mean`.
    pub record_sd: f64,
    /// Per-token jitter around the record mean.
    pub token_sd: f64,
    /// Additive shift of the record mean for each entry of `DUP_LEVELS`.
    pub dup_boost: [f64; 6],
    /// Noise of the per-position expected log-probability around the record mean.
    pub mu_noise: f64,
    /// Log-scale spread of the per-position standard deviation (median 1).
    pub sigma_log_sd: f64,
    /// Per-token noise on the reference log-likelihood.
    pub ref_noise: f64,
    pub bytes_per_token: f64,
    /// Relative noise on the compressed length.
    pub zlib_noise: f64,
}

impl Default for TokenModel {
    fn default() -> Self {
        TokenModel {
            clean_mean: -3.0,
            record_sd: 0.4,
            token_sd: 0.8,
            dup_boost: [0.0, 0.05, 0.2, 0.5, 1.8, 2.6],
            mu_noise: 0.3,
            sigma_log_sd: 0.25,
            ref_noise: 0.5,
            bytes_per_token: 4.0,
            zlib_noise: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticCorpusSpec {
    pub benchmarks: Vec<String>,
    /// Records per (benchmark, dup level, split) cell.
    pub n_per_benchmark: usize,
    pub base_accuracy: f64,
    /// Standard deviation of latent difficulty on the logit scale.
    pub difficulty_spread: f64,
    /// Probability that a spiked, initially wrong item flips to correct, per
    /// entry of `DUP_LEVELS`.
    pub memorization_curve: [f64; 6],
    pub token_count_range: (usize, usize),
    /// Logit-scale noise of the paired-LLM confidence around `p_std_conf`.
    pub external_noise: f64,
    pub token_model: TokenModel,
    pub seed: u64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        SyntheticCorpusSpec {
            benchmarks: alloc::vec!["mmlu".to_string()],
            n_per_benchmark: 700,
            base_accuracy: 0.6,
            difficulty_spread: 3.0,
            memorization_curve: [0.0, 0.05, 0.15, 0.4, 0.85, 0.95],
            token_count_range: (32, 64),
            external_noise: 0.5,
            token_model: TokenModel::default(),
            seed: 0,
        }
    }
}

fn monotone(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] <= w[1])
}

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.benchmarks.is_empty() {
            return Err(Error::param("benchmarks", "at least one benchmark is required"));
        }
        let mut names: Vec<&String> = self.benchmarks.iter().collect();
        names.sort();
        names.dedup();
        if names.len() != self.benchmarks.len() {
            return Err(Error::param("benchmarks", "duplicate benchmark names"));
        }
        if self.n_per_benchmark == 0 {
            return Err(Error::param("n_per_benchmark", "must be positive"));
        }
        if !(self.base_accuracy > 0.0 && self.base_accuracy < 1.0) {
            return Err(Error::param("base_accuracy", "must lie in (0, 1)"));
        }
        if !(self.difficulty_spread >= 0.0 && self.difficulty_spread.is_finite()) {
            return Err(Error::param("difficulty_spread", "must be finite and non-negative"));
        }
        let curve = &self.memorization_curve;
        if curve[0] != 0.0 {
            return Err(Error::param("memorization_curve", "entry for level 0 must be 0"));
        }
        if !curve.iter().all(|p| (0.0..=1.0).contains(p)) || !monotone(curve) {
            return Err(Error::param(
                "memorization_curve",
                "must be non-decreasing probabilities",
            ));
        }
        let (lo, hi) = self.token_count_range;
        if lo == 0 || lo > hi {
            return Err(Error::param("token_count_range", "need 1 <= min <= max"));
        }
        if !(self.external_noise >= 0.0) {
            return Err(Error::param("external_noise", "must be non-negative"));
        }
        let tm = &self.token_model;
        if tm.dup_boost[0] != 0.0 || !monotone(&tm.dup_boost) {
            return Err(Error::param("dup_boost", "must start at 0 and be non-decreasing"));
        }
        let sds = [
            tm.record_sd,
            tm.token_sd,
            tm.mu_noise,
            tm.sigma_log_sd,
            tm.ref_noise,
            tm.zlib_noise,
        ];
        if !sds.iter().all(|s| *s >= 0.0 && s.is_finite()) || !(tm.bytes_per_token > 0.0) {
            return Err(Error::param("token_model", "spreads must be non-negative"));
        }
        if !(tm.clean_mean <= 0.0) {
            return Err(Error::param("clean_mean", "must be <= 0"));
        }
        Ok(())
    }
}

/// Global ability `theta` such that `E[sigmoid(theta - z)] = target` for
/// `z ~ N(0, spread^2)`, by bisection over a Simpson-rule expectation.
pub(crate) fn solve_ability(target: f64, spread: f64) -> f64 {
    if spread == 0.0 {
        return crate::math::logit(target);
    }
    const NODES: usize = 4000;
    let lim = 8.0 * spread;
    let h = 2.0 * lim / NODES as f64;
    let expected = |theta: f64| {
        let mut acc = 0.0;
        for k in 0..=NODES {
            let z = -lim + k as f64 * h;
            let w = if k == 0 || k == NODES {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let density = exp(-0.5 * (z / spread) * (z / spread));
            acc += w * density * sigmoid(theta - z);
        }
        acc * h / 3.0 / (spread * libm::sqrt(2.0 * core::f64::consts::PI))
    };
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("validated spread")
}

/// Generates a corpus deterministically from `spec`.
pub fn generate_corpus(spec: &SyntheticCorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let ability = solve_ability(spec.base_accuracy, spec.difficulty_spread);
    let mut records = Vec::with_capacity(spec.benchmarks.len() * spec.n_per_benchmark * 12);
    for bench in &spec.benchmarks {
        let mut rng = rng_for(spec.seed, &format!("corpus/{bench}"), 0);
        for split in [Split::Calibration, Split::Simulation] {
            for (level_idx, &level) in DUP_LEVELS.iter().enumerate() {
                for i in 0..spec.n_per_benchmark {
                    let id = format!("{bench}-{}-d{level}-{i:05}", split_tag(split));
                    records.push(generate_record(
                        spec, &mut rng, ability, id, bench, split, level_idx,
                    ));
                }
            }
        }
    }
    Corpus::new(records)
}

fn split_tag(split: Split) -> &'static str {
    match split {
        Split::Calibration => "cal",
        Split::Simulation => "sim",
    }
}

fn generate_record(
    spec: &SyntheticCorpusSpec,
    rng: &mut ChaCha8Rng,
    ability: f64,
    id: String,
    bench: &str,
    split: Split,
    level_idx: usize,
) -> ExampleRecord {
    let tm = &spec.token_model;
    let level = DUP_LEVELS[level_idx];

    let difficulty = normal(spec.difficulty_spread).sample(rng);
    let p_std_conf = sigmoid(ability - difficulty);
    let y_std = rng.random_bool(p_std_conf);
    let flip = spec.memorization_curve[level_idx];
    let y_pert = if level > 0 && !y_std {
        rng.random_bool(flip)
    } else {
        y_std
    };

    let (lo, hi) = spec.token_count_range;
    let count = rng.random_range(lo..=hi);
    let record_mean = tm.clean_mean + normal(tm.record_sd).sample(rng);
    let boost = tm.dup_boost[level_idx];
    let jitter = normal(tm.token_sd);
    let mu_jitter = normal(tm.mu_noise);
    let sigma_jitter = normal(tm.sigma_log_sd);
    let mut tokens = Vec::with_capacity(count);
    let mut clean_total = 0.0;
    for _ in 0..count {
        let j = jitter.sample(rng);
        let logprob = (record_mean + boost + j).min(0.0);
        clean_total += (record_mean + j).min(0.0);
        let mu = (record_mean + mu_jitter.sample(rng)).min(0.0);
        let sigma = exp(sigma_jitter.sample(rng));
        tokens.push(TokenStats { logprob, mu, sigma });
    }
    let ref_loglik =
        clean_total + normal(tm.ref_noise * libm::sqrt(count as f64)).sample(rng);
    let raw_len = count as f64 * tm.bytes_per_token * (1.0 + normal(tm.zlib_noise).sample(rng));
    let zlib_len = round(raw_len).max(1.0) as u64;

    let conf_logit = crate::math::logit(p_std_conf.clamp(1e-12, 1.0 - 1e-12))
        + normal(spec.external_noise).sample(rng);
    let mut external_scores = BTreeMap::new();
    external_scores.insert(PAIRED_SCORE.to_string(), sigmoid(conf_logit));

    ExampleRecord {
        id,
        benchmark: bench.to_string(),
        dup_level: level,
        split,
        tokens,
        ref_loglik: Some(ref_loglik),
        zlib_len,
        y_std,
        y_pert,
        p_std_conf,
        external_scores,
    }
}
