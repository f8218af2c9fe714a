//! Synthetic predictors of controlled quality drawn from class-conditional
//! Beta distributions parameterized by (mean, shared concentration).

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{beta_cdf, fabs, sqrt};

pub const DEFAULT_CONCENTRATION: f64 = 10.0;
/// Largest half-gap between class means; keeps both Beta shapes positive.
pub const MAX_DELTA: f64 = 0.49;
const QUADRATURE_NODES: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    Memorization { target_auroc: f64 },
    Correctness { target_bias: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPredictorSpec {
    pub kind: SyntheticKind,
    pub concentration: f64,
    pub seed: u64,
}

impl SyntheticPredictorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(Error::param("concentration", "must be positive"));
        }
        match self.kind {
            SyntheticKind::Memorization { target_auroc } => check_auroc(target_auroc),
            SyntheticKind::Correctness { target_bias } => check_bias(target_bias),
        }
    }
}

fn check_auroc(t: f64) -> Result<()> {
    if (0.5..1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::param("target_auroc", "must lie in [0.5, 1)"))
    }
}

fn check_bias(t: f64) -> Result<()> {
    if (0.0..=0.5).contains(&t) {
        Ok(())
    } else {
        Err(Error::param("target_bias", "must lie in [0, 0.5]"))
    }
}

fn shapes(mean: f64, kappa: f64) -> (f64, f64) {
    (mean * kappa, (1.0 - mean) * kappa)
}

/// `P(X_pos > X_neg)` for independent Beta variables with the given means and
/// shared concentration, as a Stieltjes sum `sum F_neg dF_pos` on a grid
/// clustered at both endpoints. Only CDFs are evaluated, so density
/// singularities at 0 or 1 are harmless.
pub fn beta_auroc(m_neg: f64, m_pos: f64, kappa: f64) -> f64 {
    let (an, bn) = shapes(m_neg, kappa);
    let (ap, bp) = shapes(m_pos, kappa);
    let mut prev_neg = 0.0;
    let mut prev_pos = 0.0;
    let mut acc = 0.0;
    for k in 1..=QUADRATURE_NODES {
        let s = libm::sin(core::f64::consts::FRAC_PI_2 * k as f64 / QUADRATURE_NODES as f64);
        let x = s * s;
        let f_neg = beta_cdf(x, an, bn);
        let f_pos = beta_cdf(x, ap, bp);
        acc += 0.5 * (f_neg + prev_neg) * (f_pos - prev_pos);
        prev_neg = f_neg;
        prev_pos = f_pos;
    }
    acc
}

/// Symmetric class means `(0.5 - d, 0.5 + d)` whose Beta AUROC equals
/// `target_auroc`, found by bisection on `d`.
pub fn solve_beta_means(target_auroc: f64, kappa: f64) -> Result<(f64, f64)> {
    check_auroc(target_auroc)?;
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::param("concentration", "must be positive"));
    }
    if target_auroc == 0.5 {
        return Ok((0.5, 0.5));
    }
    let auc = |d: f64| beta_auroc(0.5 - d, 0.5 + d, kappa);
    let max_achievable = auc(MAX_DELTA);
    if max_achievable < target_auroc {
        return Err(Error::UnreachableAuroc { target: target_auroc, kappa, max_achievable });
    }
    let (mut lo, mut hi) = (0.0, MAX_DELTA);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if auc(mid) < target_auroc {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let d = 0.5 * (lo + hi);
    Ok((0.5 - d, 0.5 + d))
}

/// Per-element random stream: element `index` of seed `seed`.
pub(crate) fn element_rng(base: &ChaCha8Rng, index: u64) -> ChaCha8Rng {
    let mut rng = base.clone();
    rng.set_stream(index);
    rng
}

/// Memorization predictor with solved class means.
#[derive(Debug, Clone)]
pub struct SyntheticMemorization {
    pub target_auroc: f64,
    pub m_neg: f64,
    pub m_pos: f64,
    pub concentration: f64,
    neg: Beta<f64>,
    pos: Beta<f64>,
}

impl SyntheticMemorization {
    pub fn new(target_auroc: f64, concentration: f64) -> Result<Self> {
        let (m_neg, m_pos) = solve_beta_means(target_auroc, concentration)?;
        Self::from_means(target_auroc, m_neg, m_pos, concentration)
    }

    pub fn from_means(target_auroc: f64, m_neg: f64, m_pos: f64, concentration: f64) -> Result<Self> {
        let beta = |m: f64| {
            let (a, b) = shapes(m, concentration);
            Beta::new(a, b).map_err(|_| Error::param("concentration", "invalid Beta shape"))
        };
        Ok(SyntheticMemorization {
            target_auroc,
            m_neg,
            m_pos,
            concentration,
            neg: beta(m_neg)?,
            pos: beta(m_pos)?,
        })
    }

    pub fn sample(&self, contaminated: bool, rng: &mut ChaCha8Rng) -> f64 {
        if contaminated {
            self.pos.sample(rng)
        } else {
            self.neg.sample(rng)
        }
    }
}

/// Correctness predictor interpolating between the label (`lambda = 0`) and a
/// label-independent mean-0.5 Beta (`lambda = 1`).
#[derive(Debug, Clone)]
pub struct SyntheticCorrectness {
    pub target_bias: f64,
    pub lambda: f64,
    pub concentration: f64,
    dists: Option<(Beta<f64>, Beta<f64>)>,
}

impl SyntheticCorrectness {
    pub fn new(target_bias: f64, concentration: f64) -> Result<Self> {
        check_bias(target_bias)?;
        if !(concentration > 0.0 && concentration.is_finite()) {
            return Err(Error::param("concentration", "must be positive"));
        }
        let lambda = 2.0 * target_bias;
        let dists = if lambda == 0.0 {
            None
        } else {
            let beta = |y: f64| {
                let m = (1.0 - lambda) * y + 0.5 * lambda;
                let (a, b) = shapes(m, concentration);
                Beta::new(a, b).map_err(|_| Error::param("concentration", "invalid Beta shape"))
            };
            Some((beta(0.0)?, beta(1.0)?))
        };
        Ok(SyntheticCorrectness { target_bias, lambda, concentration, dists })
    }

    /// Class mean for label `y`.
    pub fn class_mean(&self, y: bool) -> f64 {
        (1.0 - self.lambda) * (y as u8 as f64) + 0.5 * self.lambda
    }

    /// Expected `|mean(scores) - mean(labels)|` for labels with the given mean.
    pub fn expected_bias(&self, label_mean: f64) -> f64 {
        self.lambda * fabs(label_mean - 0.5)
    }

    pub fn sample(&self, y: bool, rng: &mut ChaCha8Rng) -> f64 {
        match &self.dists {
            None => y as u8 as f64,
            Some((neg, pos)) => {
                if y {
                    pos.sample(rng)
                } else {
                    neg.sample(rng)
                }
            }
        }
    }
}

pub fn synth_mem_scores(labels: &[bool], spec: &SyntheticPredictorSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let SyntheticKind::Memorization { target_auroc } = spec.kind else {
        return Err(Error::param("kind", "expected a memorization spec"));
    };
    let pred = SyntheticMemorization::new(target_auroc, spec.concentration)?;
    let base = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(labels
        .iter()
        .enumerate()
        .map(|(i, &l)| pred.sample(l, &mut element_rng(&base, i as u64)))
        .collect())
}

pub fn synth_corr_scores(labels: &[bool], spec: &SyntheticPredictorSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let SyntheticKind::Correctness { target_bias } = spec.kind else {
        return Err(Error::param("kind", "expected a correctness spec"));
    };
    let pred = SyntheticCorrectness::new(target_bias, spec.concentration)?;
    let base = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(labels
        .iter()
        .enumerate()
        .map(|(i, &y)| pred.sample(y, &mut element_rng(&base, i as u64)))
        .collect())
}

/// Pearson correlation; used to check label independence.
pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / sqrt(sxx * syy)
}
