//! Membership-inference raw scores from token statistics. Every score uses
//! the convention "higher means more likely memorized".

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::ExampleRecord;
use crate::error::{Error, Result};
use crate::math::floor;

pub const DEFAULT_K_FRAC: f64 = 0.2;

/// Numerator used by the zlib score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZlibNumerator {
    /// Mean token log-probability.
    #[default]
    Mean,
    /// Total sequence log-likelihood.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MiaMethod {
    Loss,
    MinK { k_frac: f64 },
    MinKpp { k_frac: f64 },
    Zlib { numerator: ZlibNumerator },
    Reference,
}

impl MiaMethod {
    pub fn min_k() -> Self {
        MiaMethod::MinK { k_frac: DEFAULT_K_FRAC }
    }

    pub fn min_kpp() -> Self {
        MiaMethod::MinKpp { k_frac: DEFAULT_K_FRAC }
    }

    pub fn zlib() -> Self {
        MiaMethod::Zlib { numerator: ZlibNumerator::Mean }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MiaMethod::MinK { k_frac } | MiaMethod::MinKpp { k_frac } => check_k(k_frac),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for MiaMethod {
    /// `loss`, `min_k`, `min_kpp`, `zlib`, `zlib_sum`, `reference`; a
    /// non-default fraction is appended as `min_k:0.3`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let with_k = |f: &mut fmt::Formatter<'_>, name: &str, k: f64| {
            if k == DEFAULT_K_FRAC {
                f.write_str(name)
            } else {
                write!(f, "{name}:{k}")
            }
        };
        match *self {
            MiaMethod::Loss => f.write_str("loss"),
            MiaMethod::MinK { k_frac } => with_k(f, "min_k", k_frac),
            MiaMethod::MinKpp { k_frac } => with_k(f, "min_kpp", k_frac),
            MiaMethod::Zlib { numerator: ZlibNumerator::Mean } => f.write_str("zlib"),
            MiaMethod::Zlib { numerator: ZlibNumerator::Sum } => f.write_str("zlib_sum"),
            MiaMethod::Reference => f.write_str("reference"),
        }
    }
}

impl FromStr for MiaMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, k) = match s.split_once(':') {
            Some((name, k)) => {
                let k: f64 = k
                    .parse()
                    .map_err(|_| Error::param("k_frac", format!("cannot parse `{k}`")))?;
                (name, Some(k))
            }
            None => (s, None),
        };
        let method = match (name, k) {
            ("loss", None) => MiaMethod::Loss,
            ("min_k", k) => MiaMethod::MinK { k_frac: k.unwrap_or(DEFAULT_K_FRAC) },
            ("min_kpp", k) => MiaMethod::MinKpp { k_frac: k.unwrap_or(DEFAULT_K_FRAC) },
            ("zlib", None) => MiaMethod::zlib(),
            ("zlib_sum", None) => MiaMethod::Zlib { numerator: ZlibNumerator::Sum },
            ("reference", None) => MiaMethod::Reference,
            _ => return Err(Error::param("method", format!("unknown MIA method `{s}`"))),
        };
        method.validate()?;
        Ok(method)
    }
}

impl TryFrom<String> for MiaMethod {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MiaMethod> for String {
    fn from(m: MiaMethod) -> String {
        m.to_string()
    }
}

fn check_k(k_frac: f64) -> Result<()> {
    if k_frac > 0.0 && k_frac <= 1.0 {
        Ok(())
    } else {
        Err(Error::param("k_frac", format!("{k_frac} outside (0, 1]")))
    }
}

fn require_tokens(rec: &ExampleRecord) -> Result<()> {
    if rec.tokens.is_empty() {
        Err(Error::EmptyTokens { id: rec.id.clone() })
    } else {
        Ok(())
    }
}

/// Number of tokens kept by the minimum-k selection.
pub fn selection_size(k_frac: f64, len: usize) -> usize {
    (floor(k_frac * len as f64) as usize).clamp(1, len)
}

/// Mean of the `m` smallest values, summed in original index order so that
/// selecting everything coincides with the plain mean. Ties keep the lower index.
fn mean_of_smallest(values: &[f64], k_frac: f64) -> f64 {
    let m = selection_size(k_frac, values.len());
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut picked = order[..m].to_vec();
    picked.sort_unstable();
    picked.iter().map(|&i| values[i]).sum::<f64>() / m as f64
}

fn total_logprob(rec: &ExampleRecord) -> f64 {
    rec.tokens.iter().map(|t| t.logprob).sum()
}

pub fn loss_score(rec: &ExampleRecord) -> Result<f64> {
    require_tokens(rec)?;
    Ok(total_logprob(rec) / rec.tokens.len() as f64)
}

pub fn min_k_score(rec: &ExampleRecord, k_frac: f64) -> Result<f64> {
    require_tokens(rec)?;
    check_k(k_frac)?;
    let lps: Vec<f64> = rec.tokens.iter().map(|t| t.logprob).collect();
    Ok(mean_of_smallest(&lps, k_frac))
}

pub fn min_kpp_score(rec: &ExampleRecord, k_frac: f64) -> Result<f64> {
    require_tokens(rec)?;
    check_k(k_frac)?;
    let mut z = Vec::with_capacity(rec.tokens.len());
    for (position, t) in rec.tokens.iter().enumerate() {
        if !(t.sigma > 0.0) {
            return Err(Error::ZeroSigma { id: rec.id.clone(), position });
        }
        z.push((t.logprob - t.mu) / t.sigma);
    }
    Ok(mean_of_smallest(&z, k_frac))
}

pub fn zlib_score(rec: &ExampleRecord, numerator: ZlibNumerator) -> Result<f64> {
    require_tokens(rec)?;
    if rec.zlib_len == 0 {
        return Err(Error::InvalidZlibLen { id: rec.id.clone(), len: rec.zlib_len });
    }
    let top = match numerator {
        ZlibNumerator::Mean => loss_score(rec)?,
        ZlibNumerator::Sum => total_logprob(rec),
    };
    Ok(top / rec.zlib_len as f64)
}

pub fn reference_score(rec: &ExampleRecord) -> Result<f64> {
    require_tokens(rec)?;
    let reference = rec
        .ref_loglik
        .ok_or_else(|| Error::ReferenceUnavailable { id: rec.id.clone() })?;
    Ok(total_logprob(rec) - reference)
}

pub fn score(rec: &ExampleRecord, method: MiaMethod) -> Result<f64> {
    match method {
        MiaMethod::Loss => loss_score(rec),
        MiaMethod::MinK { k_frac } => min_k_score(rec, k_frac),
        MiaMethod::MinKpp { k_frac } => min_kpp_score(rec, k_frac),
        MiaMethod::Zlib { numerator } => zlib_score(rec, numerator),
        MiaMethod::Reference => reference_score(rec),
    }
}

/// Scores every record in order. Failures are collected with record ids.
pub fn score_all<'a, I>(records: I, method: MiaMethod) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a ExampleRecord>,
{
    let mut out = Vec::new();
    let mut failures = Vec::new();
    for rec in records {
        match score(rec, method) {
            Ok(s) => out.push(s),
            Err(e) => failures.push((rec.id.to_string(), e)),
        }
    }
    if failures.is_empty() {
        Ok(out)
    } else {
        Err(Error::Records { count: failures.len(), failures })
    }
}
