//! Correction estimators for the clean accuracy of a contaminated test set.
//!
//! Estimators consume [`TrialItem`]s only. Ground-truth contamination flags
//! and counterfactual outcomes live elsewhere (see `sim::Trial`) and are not
//! reachable from this view.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::sqrt;

/// Estimator-visible view of one test item.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrialItem {
    pub y_obs: bool,
    pub p_contam: Option<f64>,
    pub p_correct: Option<f64>,
    /// Raw (uncalibrated) memorization score, used by EPG.
    pub raw_mia: Option<f64>,
}

fn require_nonempty(items: &[TrialItem]) -> Result<()> {
    if items.is_empty() {
        Err(Error::EmptyInput("trial items"))
    } else {
        Ok(())
    }
}

fn get(v: Option<f64>, field: &'static str, index: usize) -> Result<f64> {
    match v {
        Some(p) if (0.0..=1.0).contains(&p) => Ok(p),
        Some(_) => Err(Error::param(field, "probability outside [0, 1]")),
        None => Err(Error::MissingProbability { field, index }),
    }
}

fn bit(y: bool) -> f64 {
    y as u8 as f64
}

pub fn naive(items: &[TrialItem]) -> Result<f64> {
    require_nonempty(items)?;
    Ok(items.iter().map(|it| bit(it.y_obs)).sum::<f64>() / items.len() as f64)
}

/// `sum (1 - p_i) y_i / sum (1 - p_j)`.
pub fn ipw(items: &[TrialItem]) -> Result<f64> {
    require_nonempty(items)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, it) in items.iter().enumerate() {
        let w = 1.0 - get(it.p_contam, "p_contam", i)?;
        num += w * bit(it.y_obs);
        den += w;
    }
    if !(den > 0.0) {
        return Err(Error::DegenerateWeights);
    }
    Ok(num / den)
}

pub fn imputation(items: &[TrialItem]) -> Result<f64> {
    require_nonempty(items)?;
    let mut sum = 0.0;
    for (i, it) in items.iter().enumerate() {
        sum += get(it.p_correct, "p_correct", i)?;
    }
    Ok(sum / items.len() as f64)
}

/// `mean[p_contam * p_correct + (1 - p_contam) * y]`.
pub fn combined(items: &[TrialItem]) -> Result<f64> {
    require_nonempty(items)?;
    let mut sum = 0.0;
    for (i, it) in items.iter().enumerate() {
        let pc = get(it.p_contam, "p_contam", i)?;
        let py = get(it.p_correct, "p_correct", i)?;
        sum += pc * py + (1.0 - pc) * bit(it.y_obs);
    }
    Ok(sum / items.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpgOutcome {
    pub estimate: f64,
    /// Items with `raw_mia <= threshold` are kept as clean.
    pub threshold: f64,
    pub flagged_fraction: f64,
    pub z_score: f64,
    /// Set when no candidate threshold kept any item.
    pub fell_back: bool,
}

/// z-score of the gain removed by keeping `kept` items with `kept_correct`
/// correct, out of `n` items with `total_correct` correct.
pub fn epg_z_score(total_correct: usize, n: usize, kept_correct: usize, kept: usize, sigma: f64) -> f64 {
    let gain = total_correct as f64 / n as f64 - kept_correct as f64 / kept as f64;
    if sigma > 0.0 {
        gain * sqrt(kept as f64) / sigma
    } else {
        0.0
    }
}

/// Sample standard deviation of the observed outcomes.
pub fn outcome_sd(items: &[TrialItem]) -> f64 {
    let n = items.len() as f64;
    let k = items.iter().filter(|it| it.y_obs).count() as f64;
    let mean = k / n;
    // For 0/1 data: sum (y - mean)^2 = k (1 - mean).
    sqrt(k * (1.0 - mean) / (n - 1.0))
}

/// Threshold heuristic: keep items at or below the threshold that maximizes
/// `EPG(t) / (sigma / sqrt(N(t)))`, ties broken toward larger kept sets.
pub fn epg(items: &[TrialItem], sigma_full: Option<f64>) -> Result<EpgOutcome> {
    if items.len() < 2 {
        return Err(Error::param("items", "EPG needs at least two items"));
    }
    let mut pairs = Vec::with_capacity(items.len());
    for (i, it) in items.iter().enumerate() {
        let s = it.raw_mia.ok_or(Error::MissingProbability { field: "raw_mia", index: i })?;
        if !s.is_finite() {
            return Err(Error::param("raw_mia", "non-finite score"));
        }
        pairs.push((s, it.y_obs));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pairs.len();
    let total_correct = pairs.iter().filter(|p| p.1).count();
    let sigma = sigma_full.unwrap_or_else(|| outcome_sd(items));

    // +inf keeps everything; -inf keeps nothing and is skipped.
    let mut best = (epg_z_score(total_correct, n, total_correct, n, sigma), n, total_correct, f64::INFINITY);
    let mut kept_correct = 0;
    let mut i = 0;
    while i < n {
        let value = pairs[i].0;
        while i < n && pairs[i].0 == value {
            kept_correct += pairs[i].1 as usize;
            i += 1;
        }
        if i == n {
            break;
        }
        let threshold = 0.5 * (value + pairs[i].0);
        let z = epg_z_score(total_correct, n, kept_correct, i, sigma);
        // Ties prefer the larger kept set.
        if z > best.0 || (z == best.0 && i > best.1) {
            best = (z, i, kept_correct, threshold);
        }
    }
    let (z_score, kept, correct, threshold) = best;
    if kept == 0 {
        return Ok(EpgOutcome {
            estimate: naive(items)?,
            threshold,
            flagged_fraction: 0.0,
            z_score,
            fell_back: true,
        });
    }
    Ok(EpgOutcome {
        estimate: correct as f64 / kept as f64,
        threshold,
        flagged_fraction: 1.0 - kept as f64 / n as f64,
        z_score,
        fell_back: false,
    })
}

pub fn rmse(estimates: &[f64], truths: &[f64]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(Error::LengthMismatch { left: estimates.len(), right: truths.len() });
    }
    if estimates.is_empty() {
        return Err(Error::EmptyInput("rmse"));
    }
    let mse = estimates
        .iter()
        .zip(truths)
        .map(|(e, t)| (e - t) * (e - t))
        .sum::<f64>()
        / estimates.len() as f64;
    Ok(sqrt(mse))
}

/// Estimators in tie-break priority order (simpler first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Naive,
    Ipw,
    Imputation,
    Combined,
    Epg,
}

impl Estimator {
    pub const ALL: [Estimator; 5] = [
        Estimator::Naive,
        Estimator::Ipw,
        Estimator::Imputation,
        Estimator::Combined,
        Estimator::Epg,
    ];

    pub const PHASE: [Estimator; 4] = [
        Estimator::Naive,
        Estimator::Ipw,
        Estimator::Imputation,
        Estimator::Combined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Naive => "naive",
            Estimator::Ipw => "ipw",
            Estimator::Imputation => "imputation",
            Estimator::Combined => "combined",
            Estimator::Epg => "epg",
        }
    }

    pub fn needs_memorization(self) -> bool {
        matches!(self, Estimator::Ipw | Estimator::Combined | Estimator::Epg)
    }

    pub fn needs_correctness(self) -> bool {
        matches!(self, Estimator::Imputation | Estimator::Combined)
    }

    pub fn estimate(self, items: &[TrialItem]) -> Result<f64> {
        match self {
            Estimator::Naive => naive(items),
            Estimator::Ipw => ipw(items),
            Estimator::Imputation => imputation(items),
            Estimator::Combined => combined(items),
            Estimator::Epg => epg(items, None).map(|o| o.estimate),
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::param("estimator", alloc::format!("unknown estimator `{s}`")))
    }
}
