//! Bootstrap simulation of contaminated test sets.
//!
//! A trial draws clean items from held-out records and contaminated items
//! from the regime's eligible spiked records, both with replacement. Clean
//! items are observed through the standard model and contaminated items
//! through the perturbed model; the target is the standard model's accuracy
//! on the drawn set.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::calibrate::{CorrectnessPredictor, MemorizationPredictor};
use crate::corpus::{Corpus, ExampleRecord, Split};
use crate::error::{Error, Result};
use crate::estimators::{Estimator, TrialItem};
use crate::exec::{try_map, Executor};
use crate::math::{round, sqrt};
use crate::seed::rng_for;
use crate::synthpred::{element_rng, SyntheticCorrectness, SyntheticMemorization};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dose {
    Low,
    Mid,
    High,
}

impl Dose {
    pub fn levels(self) -> &'static [u32] {
        match self {
            Dose::Low => &[1],
            Dose::Mid => &[16],
            Dose::High => &[64, 256],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dose::Low => "low",
            Dose::Mid => "mid",
            Dose::High => "high",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DifficultyBin {
    Easy,
    Medium,
    Hard,
}

impl DifficultyBin {
    pub const ALL: [DifficultyBin; 3] = [DifficultyBin::Easy, DifficultyBin::Medium, DifficultyBin::Hard];

    pub fn name(self) -> &'static str {
        match self {
            DifficultyBin::Easy => "easy",
            DifficultyBin::Medium => "medium",
            DifficultyBin::Hard => "hard",
        }
    }

    fn slot(self) -> usize {
        match self {
            DifficultyBin::Hard => 0,
            DifficultyBin::Medium => 1,
            DifficultyBin::Easy => 2,
        }
    }
}

/// Contamination regime. Serialized as `random-<dose>` or
/// `correlated-<dose>-<bin>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Regime {
    Random { dose: Dose },
    Correlated { dose: Dose, bin: DifficultyBin },
}

impl Regime {
    pub fn dose(self) -> Dose {
        match self {
            Regime::Random { dose } | Regime::Correlated { dose, .. } => dose,
        }
    }

    pub fn validate(self) -> Result<()> {
        match self {
            Regime::Correlated { dose: Dose::Low, .. } => {
                Err(Error::param("regime", "correlated regimes use mid or high dose"))
            }
            _ => Ok(()),
        }
    }

    /// Random low/mid/high followed by correlated mid/high over all bins.
    pub fn all() -> Vec<Regime> {
        let mut out = Vec::new();
        for dose in [Dose::Low, Dose::Mid, Dose::High] {
            out.push(Regime::Random { dose });
        }
        for dose in [Dose::Mid, Dose::High] {
            for bin in DifficultyBin::ALL {
                out.push(Regime::Correlated { dose, bin });
            }
        }
        out
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Random { dose } => write!(f, "random-{}", dose.name()),
            Regime::Correlated { dose, bin } => {
                write!(f, "correlated-{}-{}", dose.name(), bin.name())
            }
        }
    }
}

impl FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let dose = |d: &str| match d {
            "low" => Some(Dose::Low),
            "mid" => Some(Dose::Mid),
            "high" => Some(Dose::High),
            _ => None,
        };
        let bin = |b: &str| DifficultyBin::ALL.into_iter().find(|x| x.name() == b);
        let parts: Vec<&str> = s.split('-').collect();
        let regime = match parts.as_slice() {
            ["random", d] => dose(d).map(|dose| Regime::Random { dose }),
            ["correlated", d, b] => dose(d)
                .zip(bin(b))
                .map(|(dose, bin)| Regime::Correlated { dose, bin }),
            _ => None,
        }
        .ok_or_else(|| Error::param("regime", format!("cannot parse `{s}`")))?;
        regime.validate()?;
        Ok(regime)
    }
}

impl TryFrom<String> for Regime {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Regime> for String {
    fn from(r: Regime) -> String {
        r.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub benchmark: String,
    pub n: usize,
    pub r_contam: f64,
    pub regime: Regime,
    pub replicates: usize,
    pub seed: u64,
}

impl TrialConfig {
    pub fn new(benchmark: impl Into<String>, regime: Regime, seed: u64) -> Self {
        TrialConfig {
            benchmark: benchmark.into(),
            n: 500,
            r_contam: 0.3,
            regime,
            replicates: 1000,
            seed,
        }
    }

    pub fn n_contaminated(&self) -> usize {
        round(self.n as f64 * self.r_contam) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::param("n", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.r_contam) {
            return Err(Error::param("r_contam", "must lie in [0, 1]"));
        }
        if self.replicates == 0 {
            return Err(Error::param("replicates", "must be positive"));
        }
        self.regime.validate()
    }
}

/// Ground truth for one drawn item; never part of the estimator view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HiddenTruth {
    pub is_contaminated: bool,
    pub y_star: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    items: Vec<TrialItem>,
    hidden: Vec<HiddenTruth>,
    records: Vec<usize>,
}

impl Trial {
    /// Estimator-visible items.
    pub fn items(&self) -> &[TrialItem] {
        &self.items
    }

    /// Ground truth, for oracles, synthetic predictors and evaluation.
    pub fn hidden(&self) -> &[HiddenTruth] {
        &self.hidden
    }

    /// Pool indices of the drawn records.
    pub fn records(&self) -> &[usize] {
        &self.records
    }

    /// Standard-model accuracy on the drawn set.
    pub fn ground_truth(&self) -> f64 {
        self.hidden.iter().filter(|h| h.y_star).count() as f64 / self.hidden.len() as f64
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    #[cfg(test)]
    pub(crate) fn hidden_mut(&mut self) -> &mut [HiddenTruth] {
        &mut self.hidden
    }
}

/// Simulation-split records of one benchmark with precomputed strata.
#[derive(Debug, Clone)]
pub struct SimPool<'a> {
    records: Vec<&'a ExampleRecord>,
    clean: Vec<usize>,
    // Indexed by dose (low, mid, high).
    by_dose: [Vec<usize>; 3],
    // Indexed by dose; bins ordered hard, medium, easy.
    terciles: [[Vec<usize>; 3]; 3],
}

fn dose_slot(d: Dose) -> usize {
    match d {
        Dose::Low => 0,
        Dose::Mid => 1,
        Dose::High => 2,
    }
}

impl<'a> SimPool<'a> {
    pub fn new(corpus: &'a Corpus, benchmark: &str) -> Result<Self> {
        Ok(Self::from_records(corpus.split(benchmark, Split::Simulation)?))
    }

    pub fn from_records(records: Vec<&'a ExampleRecord>) -> Self {
        let clean = (0..records.len()).filter(|&i| records[i].dup_level == 0).collect();
        let by_dose = [Dose::Low, Dose::Mid, Dose::High].map(|d| {
            (0..records.len())
                .filter(|&i| d.levels().contains(&records[i].dup_level))
                .collect::<Vec<_>>()
        });
        let terciles = core::array::from_fn(|slot| {
            let mut sorted = by_dose[slot].clone();
            sorted.sort_by(|&a, &b| {
                records[a]
                    .p_std_conf
                    .total_cmp(&records[b].p_std_conf)
                    .then_with(|| records[a].id.cmp(&records[b].id))
            });
            let len = sorted.len();
            let mut bins: [Vec<usize>; 3] = Default::default();
            for (rank, idx) in sorted.into_iter().enumerate() {
                bins[rank * 3 / len].push(idx);
            }
            bins
        });
        SimPool { records, clean, by_dose, terciles }
    }

    pub fn records(&self) -> &[&'a ExampleRecord] {
        &self.records
    }

    pub fn clean(&self) -> &[usize] {
        &self.clean
    }

    /// Pool indices eligible for contamination under `regime`.
    pub fn eligible(&self, regime: Regime) -> Result<&[usize]> {
        regime.validate()?;
        match regime {
            Regime::Random { dose } => Ok(&self.by_dose[dose_slot(dose)]),
            Regime::Correlated { dose, bin } => {
                let cell = &self.terciles[dose_slot(dose)][bin.slot()];
                if cell.is_empty() {
                    Err(Error::EmptyTercile)
                } else {
                    Ok(cell)
                }
            }
        }
    }

    /// Fraction of eligible records that flip from wrong to right.
    pub fn flip_mass(&self, regime: Regime) -> Result<f64> {
        let el = self.eligible(regime)?;
        let flips = el
            .iter()
            .filter(|&&i| self.records[i].y_pert && !self.records[i].y_std)
            .count();
        Ok(flips as f64 / el.len() as f64)
    }
}

/// Draws replicate `replicate` of `config` from `pool`.
pub fn draw_trial(pool: &SimPool<'_>, config: &TrialConfig, replicate: usize) -> Result<Trial> {
    config.validate()?;
    let n_contam = config.n_contaminated();
    let n_clean = config.n - n_contam;
    let eligible = if n_contam > 0 { pool.eligible(config.regime)? } else { &[][..] };
    if n_clean > 0 && pool.clean.is_empty() {
        return Err(Error::InsufficientPool { what: "clean records".into(), needed: n_clean, available: 0 });
    }
    if n_contam > 0 && eligible.is_empty() {
        return Err(Error::InsufficientPool {
            what: format!("contaminated records for {}", config.regime),
            needed: n_contam,
            available: 0,
        });
    }
    let mut rng = rng_for(config.seed, "trial", replicate as u64);
    let mut items = Vec::with_capacity(config.n);
    let mut hidden = Vec::with_capacity(config.n);
    let mut records = Vec::with_capacity(config.n);
    for k in 0..config.n {
        let contaminated = k >= n_clean;
        let idx = if contaminated {
            eligible[rng.random_range(0..eligible.len())]
        } else {
            pool.clean[rng.random_range(0..pool.clean.len())]
        };
        let rec = pool.records[idx];
        let y_obs = if contaminated { rec.y_pert } else { rec.y_std };
        items.push(TrialItem { y_obs, ..Default::default() });
        hidden.push(HiddenTruth { is_contaminated: contaminated, y_star: rec.y_std });
        records.push(idx);
    }
    Ok(Trial { items, hidden, records })
}

#[derive(Debug, Clone)]
pub enum MemSource {
    None,
    /// Exact contamination indicators.
    Oracle,
    Fitted(MemorizationPredictor),
    Synthetic(SyntheticMemorization),
}

#[derive(Debug, Clone)]
pub enum CorrSource {
    None,
    /// Exact counterfactual outcomes.
    Oracle,
    Fitted(CorrectnessPredictor),
    Synthetic(SyntheticCorrectness),
}

/// Fills `p_contam`, `raw_mia` and `p_correct`. Synthetic sources read the
/// hidden labels; their random streams derive from `(seed, replicate)`.
pub fn attach_predictions(
    trial: &mut Trial,
    pool: &SimPool<'_>,
    mem: &MemSource,
    corr: &CorrSource,
    seed: u64,
    replicate: usize,
) -> Result<()> {
    let mem_base = rng_for(seed, "synthetic/memorization", replicate as u64);
    let corr_base = rng_for(seed, "synthetic/correctness", replicate as u64);
    for (i, (item, truth)) in trial.items.iter_mut().zip(&trial.hidden).enumerate() {
        let rec = pool.records[trial.records[i]];
        match mem {
            MemSource::None => {}
            MemSource::Oracle => {
                let p = truth.is_contaminated as u8 as f64;
                item.p_contam = Some(p);
                item.raw_mia = Some(p);
            }
            MemSource::Fitted(pred) => {
                let raw = pred.raw(rec)?;
                item.raw_mia = Some(raw);
                item.p_contam = Some(pred.platt.predict(raw));
            }
            MemSource::Synthetic(pred) => {
                let p = pred.sample(truth.is_contaminated, &mut element_rng(&mem_base, i as u64));
                item.p_contam = Some(p);
                item.raw_mia = Some(p);
            }
        }
        match corr {
            CorrSource::None => {}
            CorrSource::Oracle => item.p_correct = Some(truth.y_star as u8 as f64),
            CorrSource::Fitted(pred) => item.p_correct = Some(pred.predict(rec)?),
            CorrSource::Synthetic(pred) => {
                item.p_correct = Some(pred.sample(truth.y_star, &mut element_rng(&corr_base, i as u64)))
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateEstimates {
    pub index: usize,
    pub ground_truth: f64,
    /// One entry per estimator, in `EstimateSet::estimators` order.
    pub estimates: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    pub rmse: f64,
    pub mean_bias: f64,
    /// Monte Carlo standard error of the mean squared error.
    pub mse_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSet {
    pub config: TrialConfig,
    pub estimators: Vec<Estimator>,
    pub replicates: Vec<ReplicateEstimates>,
    pub summary: Vec<EstimatorSummary>,
}

impl EstimateSet {
    pub fn from_replicates(
        config: TrialConfig,
        estimators: Vec<Estimator>,
        replicates: Vec<ReplicateEstimates>,
    ) -> Self {
        let r = replicates.len() as f64;
        let summary = estimators
            .iter()
            .enumerate()
            .map(|(k, &estimator)| {
                let errs: Vec<f64> = replicates
                    .iter()
                    .map(|rep| rep.estimates[k] - rep.ground_truth)
                    .collect();
                let mse = errs.iter().map(|e| e * e).sum::<f64>() / r;
                let var = errs.iter().map(|e| (e * e - mse) * (e * e - mse)).sum::<f64>()
                    / (r - 1.0).max(1.0);
                EstimatorSummary {
                    estimator,
                    rmse: sqrt(mse),
                    mean_bias: errs.iter().sum::<f64>() / r,
                    mse_se: sqrt(var / r),
                }
            })
            .collect();
        EstimateSet { config, estimators, replicates, summary }
    }

    pub fn summary_for(&self, estimator: Estimator) -> Option<&EstimatorSummary> {
        self.summary.iter().find(|s| s.estimator == estimator)
    }

    pub fn rmse(&self, estimator: Estimator) -> Option<f64> {
        self.summary_for(estimator).map(|s| s.rmse)
    }

    /// Per-replicate `estimate - truth` for one estimator.
    pub fn errors(&self, estimator: Estimator) -> Option<Vec<f64>> {
        let k = self.estimators.iter().position(|&e| e == estimator)?;
        Some(self.replicates.iter().map(|r| r.estimates[k] - r.ground_truth).collect())
    }
}

pub(crate) fn check_sources(estimators: &[Estimator], mem: &MemSource, corr: &CorrSource) -> Result<()> {
    if estimators.is_empty() {
        return Err(Error::param("estimators", "at least one estimator is required"));
    }
    for e in estimators {
        if e.needs_memorization() && matches!(mem, MemSource::None) {
            return Err(Error::param("memorization", format!("{e} needs a memorization predictor")));
        }
        if e.needs_correctness() && matches!(corr, CorrSource::None) {
            return Err(Error::param("correctness", format!("{e} needs a correctness predictor")));
        }
    }
    Ok(())
}

/// Runs one replicate end to end. Synthetic predictor streams derive from
/// `prediction_seed`, trial draws from `config.seed`.
pub fn run_replicate(
    pool: &SimPool<'_>,
    config: &TrialConfig,
    mem: &MemSource,
    corr: &CorrSource,
    prediction_seed: u64,
    estimators: &[Estimator],
    replicate: usize,
) -> Result<ReplicateEstimates> {
    let mut trial = draw_trial(pool, config, replicate)?;
    attach_predictions(&mut trial, pool, mem, corr, prediction_seed, replicate)?;
    let estimates = estimators
        .iter()
        .map(|e| e.estimate(trial.items()))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicateEstimates { index: replicate, ground_truth: trial.ground_truth(), estimates })
}

pub fn simulate_pool<X: Executor>(
    pool: &SimPool<'_>,
    config: &TrialConfig,
    mem: &MemSource,
    corr: &CorrSource,
    estimators: &[Estimator],
    exec: &X,
) -> Result<EstimateSet> {
    simulate_pool_seeded(pool, config, mem, corr, config.seed, estimators, exec)
}

pub fn simulate_pool_seeded<X: Executor>(
    pool: &SimPool<'_>,
    config: &TrialConfig,
    mem: &MemSource,
    corr: &CorrSource,
    prediction_seed: u64,
    estimators: &[Estimator],
    exec: &X,
) -> Result<EstimateSet> {
    config.validate()?;
    check_sources(estimators, mem, corr)?;
    let replicates = try_map(exec, config.replicates, |r| {
        run_replicate(pool, config, mem, corr, prediction_seed, estimators, r)
    })?;
    Ok(EstimateSet::from_replicates(config.clone(), estimators.to_vec(), replicates))
}

pub fn run_simulation<X: Executor>(
    corpus: &Corpus,
    config: &TrialConfig,
    mem: &MemSource,
    corr: &CorrSource,
    estimators: &[Estimator],
    exec: &X,
) -> Result<EstimateSet> {
    let pool = SimPool::new(corpus, &config.benchmark)?;
    simulate_pool(&pool, config, mem, corr, estimators, exec)
}

impl fmt::Display for EstimatorSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: rmse {:.4} bias {:+.4}", self.estimator, self.rmse, self.mean_bias)
    }
}
