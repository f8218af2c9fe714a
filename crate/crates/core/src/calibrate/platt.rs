//! Two-parameter Platt scaling fit by damped Newton on the smoothed-target
//! Bernoulli likelihood.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{log, sigmoid, softplus, sqrt};

pub const GRAD_TOL: f64 = 1e-8;
pub const MAX_ITER: usize = 200;
const RIDGE: f64 = 1e-12;
const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-14;

/// `p(s) = 1 / (1 + exp(-(a * s + b)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattModel {
    pub a: f64,
    pub b: f64,
}

impl PlattModel {
    pub fn predict(&self, score: f64) -> f64 {
        sigmoid(self.a * score + self.b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlattFit {
    pub model: PlattModel,
    pub iterations: usize,
    /// Mean penalized negative log-likelihood after each accepted step, on
    /// the standardized score scale; the first entry is the starting point.
    pub objective_trace: Vec<f64>,
}

/// Platt's smoothed targets for positives and negatives.
pub fn smoothed_targets(n_pos: usize, n_neg: usize) -> (f64, f64) {
    (
        (n_pos as f64 + 1.0) / (n_pos as f64 + 2.0),
        1.0 / (n_neg as f64 + 2.0),
    )
}

struct Problem<'a> {
    x: &'a [f64],
    t: Vec<f64>,
}

impl Problem<'_> {
    fn objective(&self, a: f64, b: f64) -> f64 {
        let n = self.x.len() as f64;
        self.x
            .iter()
            .zip(&self.t)
            .map(|(&x, &t)| {
                let f = a * x + b;
                softplus(f) - t * f
            })
            .sum::<f64>()
            / n
    }

    /// Gradient and Hessian of the mean objective.
    fn derivatives(&self, a: f64, b: f64) -> ([f64; 2], [f64; 3]) {
        let n = self.x.len() as f64;
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &t) in self.x.iter().zip(&self.t) {
            let p = sigmoid(a * x + b);
            let r = p - t;
            let w = p * (1.0 - p);
            ga += r * x;
            gb += r;
            haa += w * x * x;
            hab += w * x;
            hbb += w;
        }
        ([ga / n, gb / n], [haa / n, hab / n, hbb / n])
    }
}

pub fn fit_platt(scores: &[f64], labels: &[bool]) -> Result<PlattModel> {
    fit_platt_traced(scores, labels).map(|f| f.model)
}

/// Fits `(a, b)`. Scores are standardized internally and the solution is
/// mapped back, so the tolerance is independent of the score scale.
pub fn fit_platt_traced(scores: &[f64], labels: &[bool]) -> Result<PlattFit> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch { left: scores.len(), right: labels.len() });
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput("platt scores"));
    }
    if scores.len() < 2 {
        return Err(Error::param("scores", "at least two examples are required"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::param("scores", "non-finite score"));
    }
    let n = scores.len() as f64;
    let center = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - center) * (s - center)).sum::<f64>() / n;
    let scale = sqrt(var);
    let constant = scores.iter().all(|&s| s == scores[0]);
    let x: Vec<f64> = if constant {
        alloc::vec![0.0; scores.len()]
    } else {
        scores.iter().map(|s| (s - center) / scale).collect()
    };

    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    let (t_pos, t_neg) = smoothed_targets(n_pos, n_neg);
    let problem = Problem {
        x: &x,
        t: labels.iter().map(|&l| if l { t_pos } else { t_neg }).collect(),
    };

    let mut a = 0.0;
    let mut b = log((n_pos as f64 + 1.0) / (n_neg as f64 + 1.0));
    let mut value = problem.objective(a, b);
    let mut trace = alloc::vec![value];
    let mut iterations = 0;
    loop {
        let (g, h) = problem.derivatives(a, b);
        let g = if constant { [0.0, g[1]] } else { g };
        let grad_norm = sqrt(g[0] * g[0] + g[1] * g[1]);
        if grad_norm < GRAD_TOL {
            break;
        }
        if iterations == MAX_ITER {
            return Err(Error::NotConverged { iterations, grad_norm });
        }
        iterations += 1;

        let newton = if constant {
            (h[2] > 0.0).then(|| [0.0, -g[1] / (h[2] + RIDGE)])
        } else {
            let (haa, hab, hbb) = (h[0] + RIDGE, h[1], h[2] + RIDGE);
            let det = haa * hbb - hab * hab;
            (det > 0.0 && haa > 0.0)
                .then(|| [-(hbb * g[0] - hab * g[1]) / det, -(haa * g[1] - hab * g[0]) / det])
        };
        let mut accepted = None;
        for dir in newton.into_iter().chain(core::iter::once([-g[0], -g[1]])) {
            let slope = g[0] * dir[0] + g[1] * dir[1];
            if !(slope < 0.0) {
                continue;
            }
            let mut step = 1.0;
            while step >= MIN_STEP {
                let (na, nb) = (a + step * dir[0], b + step * dir[1]);
                let candidate = problem.objective(na, nb);
                if candidate <= value + ARMIJO * step * slope {
                    accepted = Some((na, nb, candidate));
                    break;
                }
                step *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }
        match accepted {
            Some((na, nb, candidate)) => {
                a = na;
                b = nb;
                value = candidate;
                trace.push(value);
            }
            None => return Err(Error::NotConverged { iterations, grad_norm }),
        }
    }

    let model = if constant {
        PlattModel { a: 0.0, b }
    } else {
        PlattModel { a: a / scale, b: b - a * center / scale }
    };
    Ok(PlattFit { model, iterations, objective_trace: trace })
}
