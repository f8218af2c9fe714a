//! Higher-level studies built on the simulator: winner maps over synthetic
//! predictor quality, calibration sample efficiency, and cross-benchmark
//! transfer of memorization predictors.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::calibrate::{balanced_memorization_sample, calibrate_memorization, fit_correctness, fit_memorization};
use crate::corpus::{Corpus, ExampleRecord, Split, PAIRED_SCORE};
use crate::error::{Error, Result};
use crate::estimators::Estimator;
use crate::exec::{try_map, Executor, Sequential};
use crate::math::sqrt;
use crate::mia::MiaMethod;
use crate::seed::{derive_seed, rng_for};
use crate::sim::{
    check_sources, run_replicate, simulate_pool, simulate_pool_seeded, CorrSource, EstimatorSummary,
    MemSource, Regime, SimPool, TrialConfig,
};
use crate::synthpred::{SyntheticCorrectness, SyntheticMemorization, DEFAULT_CONCENTRATION};

use rand::seq::SliceRandom;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseGridConfig {
    pub benchmark: String,
    pub auroc_grid: Vec<f64>,
    pub bias_grid: Vec<f64>,
    pub regimes: Vec<Regime>,
    pub n: usize,
    pub r_contam: f64,
    pub replicates: usize,
    pub concentration: f64,
    pub estimators: Vec<Estimator>,
    pub seed: u64,
}

impl Default for PhaseGridConfig {
    fn default() -> Self {
        PhaseGridConfig {
            benchmark: "mmlu".into(),
            auroc_grid: alloc::vec![0.5, 0.6, 0.7, 0.8, 0.9, 0.99],
            bias_grid: (0..=10).map(|i| i as f64 * 0.05).collect(),
            regimes: Regime::all(),
            n: 500,
            r_contam: 0.3,
            replicates: 200,
            concentration: DEFAULT_CONCENTRATION,
            estimators: Estimator::PHASE.to_vec(),
            seed: 0,
        }
    }
}

impl PhaseGridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.auroc_grid.is_empty() || self.bias_grid.is_empty() || self.regimes.is_empty() {
            return Err(Error::param("grid", "auroc, bias and regime lists must be non-empty"));
        }
        if let Some(a) = self.auroc_grid.iter().find(|a| !(0.5..1.0).contains(*a)) {
            return Err(Error::param("auroc_grid", format!("{a} is outside [0.5, 1)")));
        }
        if let Some(b) = self.bias_grid.iter().find(|b| !(0.0..=0.5).contains(*b)) {
            return Err(Error::param("bias_grid", format!("{b} is outside [0, 0.5]")));
        }
        check_sources(&self.estimators, &MemSource::Oracle, &CorrSource::Oracle)?;
        for r in &self.regimes {
            r.validate()?;
        }
        self.trial(self.regimes[0]).validate()
    }

    fn trial(&self, regime: Regime) -> TrialConfig {
        TrialConfig {
            benchmark: self.benchmark.clone(),
            n: self.n,
            r_contam: self.r_contam,
            regime,
            replicates: self.replicates,
            seed: derive_seed(self.seed, &format!("phase/trial/{regime}"), 0),
        }
    }

    fn cell_seed(&self, regime: Regime, auroc: f64, bias: f64) -> u64 {
        let label = format!("phase/cell/{regime}/{:016x}/{:016x}", auroc.to_bits(), bias.to_bits());
        derive_seed(self.seed, &label, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCell {
    pub auroc: f64,
    /// Target bias of the synthetic correctness predictor.
    pub bias: f64,
    pub regime: Regime,
    pub summary: Vec<EstimatorSummary>,
    pub winner: Estimator,
    /// `|mean(imputation - truth)|` over replicates, when imputation is run.
    pub realized_bias: Option<f64>,
}

impl PhaseCell {
    pub fn rmse(&self, estimator: Estimator) -> Option<f64> {
        self.summary.iter().find(|s| s.estimator == estimator).map(|s| s.rmse)
    }
}

/// Minimum RMSE, ties going to the estimator earliest in priority order.
pub fn pick_winner(summary: &[EstimatorSummary]) -> Option<Estimator> {
    summary
        .iter()
        .min_by(|a, b| a.rmse.total_cmp(&b.rmse).then(a.estimator.cmp(&b.estimator)))
        .map(|s| s.estimator)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDiagram {
    /// Ordered by regime, then AUROC, then bias, following the config lists.
    pub cells: Vec<PhaseCell>,
}

impl PhaseDiagram {
    pub fn cells_for(&self, regime: Regime) -> impl Iterator<Item = &PhaseCell> {
        self.cells.iter().filter(move |c| c.regime == regime)
    }

    /// Number of cells in `regime` won by `estimator`.
    pub fn area(&self, regime: Regime, estimator: Estimator) -> usize {
        self.cells_for(regime).filter(|c| c.winner == estimator).count()
    }

    pub fn cell(&self, regime: Regime, auroc: f64, bias: f64) -> Option<&PhaseCell> {
        self.cells
            .iter()
            .find(|c| c.regime == regime && c.auroc == auroc && c.bias == bias)
    }
}

/// Runs every grid cell. Cells are the parallel unit; the replicates of one
/// cell run sequentially.
pub fn phase_diagram<X: Executor>(corpus: &Corpus, grid: &PhaseGridConfig, exec: &X) -> Result<PhaseDiagram> {
    grid.validate()?;
    let pool = SimPool::new(corpus, &grid.benchmark)?;
    for &r in &grid.regimes {
        if grid.trial(r).n_contaminated() > 0 {
            pool.eligible(r)?;
        }
    }
    let mems = grid
        .auroc_grid
        .iter()
        .map(|&a| SyntheticMemorization::new(a, grid.concentration))
        .collect::<Result<Vec<_>>>()?;
    let corrs = grid
        .bias_grid
        .iter()
        .map(|&b| SyntheticCorrectness::new(b, grid.concentration))
        .collect::<Result<Vec<_>>>()?;

    let (na, nb) = (grid.auroc_grid.len(), grid.bias_grid.len());
    let cells = try_map(exec, grid.regimes.len() * na * nb, |k| {
        let regime = grid.regimes[k / (na * nb)];
        let (ia, ib) = ((k / nb) % na, k % nb);
        let (auroc, bias) = (grid.auroc_grid[ia], grid.bias_grid[ib]);
        let set = simulate_pool_seeded(
            &pool,
            &grid.trial(regime),
            &MemSource::Synthetic(mems[ia].clone()),
            &CorrSource::Synthetic(corrs[ib].clone()),
            grid.cell_seed(regime, auroc, bias),
            &grid.estimators,
            &Sequential,
        )?;
        let winner = pick_winner(&set.summary).ok_or(Error::EmptyInput("estimators"))?;
        let realized_bias = set.summary_for(Estimator::Imputation).map(|s| s.mean_bias.abs());
        Ok(PhaseCell { auroc, bias, regime, summary: set.summary, winner, realized_bias })
    })?;
    Ok(PhaseDiagram { cells })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EfficiencyConfig {
    pub benchmark: String,
    pub sizes: Vec<usize>,
    pub regime: Regime,
    pub method: MiaMethod,
    /// External score used by the correctness predictor.
    pub correctness_source: String,
    pub estimators: Vec<Estimator>,
    pub n: usize,
    pub r_contam: f64,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for EfficiencyConfig {
    fn default() -> Self {
        EfficiencyConfig {
            benchmark: "mmlu".into(),
            sizes: alloc::vec![10, 30, 100, 300, 1000],
            regime: Regime::Random { dose: crate::sim::Dose::High },
            method: MiaMethod::min_k(),
            correctness_source: PAIRED_SCORE.into(),
            estimators: Estimator::PHASE.to_vec(),
            n: 500,
            r_contam: 0.3,
            replicates: 1000,
            seed: 0,
        }
    }
}

/// A curve in the efficiency output: an estimator or the clean-only baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Series {
    Estimator(Estimator),
    CleanOnly,
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Series::Estimator(e) => e.fmt(f),
            Series::CleanOnly => f.write_str("clean_only"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyPoint {
    pub size: usize,
    pub series: Series,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyCurve {
    /// Ordered by size, then series (estimators in config order, clean-only last).
    pub points: Vec<EfficiencyPoint>,
}

impl EfficiencyCurve {
    pub fn rmse(&self, size: usize, series: Series) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.size == size && p.series == series)
            .map(|p| p.rmse)
    }
}

fn sample_clean<'a>(clean: &[&'a ExampleRecord], size: usize, seed: u64, rep: usize) -> Vec<&'a ExampleRecord> {
    let mut v = clean.to_vec();
    v.shuffle(&mut rng_for(seed, &format!("efficiency/clean/{size}"), rep as u64));
    v.truncate(size);
    v
}

/// For each size, every replicate refits the predictors on a fresh
/// calibration subsample: a balanced spiked/clean sample of `size` records
/// for memorization and `size` clean records for correctness. The clean
/// records double as the clean-only baseline's test set. Trials depend only
/// on the replicate index, so all sizes see the same test sets.
pub fn sample_efficiency<X: Executor>(corpus: &Corpus, cfg: &EfficiencyConfig, exec: &X) -> Result<EfficiencyCurve> {
    if cfg.sizes.is_empty() {
        return Err(Error::param("sizes", "at least one size is required"));
    }
    cfg.method.validate()?;
    check_sources(&cfg.estimators, &MemSource::Oracle, &CorrSource::Oracle)?;
    let calibration = corpus.split(&cfg.benchmark, Split::Calibration)?;
    let clean: Vec<&ExampleRecord> = calibration.iter().copied().filter(|r| !r.is_contaminated()).collect();
    let spiked = calibration.len() - clean.len();
    let needs_mem = cfg.estimators.iter().any(|e| e.needs_memorization());
    for &size in &cfg.sizes {
        if size < 2 {
            return Err(Error::param("sizes", "calibration size must be at least 2"));
        }
        if size > clean.len() {
            return Err(Error::InsufficientPool {
                what: format!("clean calibration records for size {size}"),
                needed: size,
                available: clean.len(),
            });
        }
        if needs_mem && size / 2 > spiked {
            return Err(Error::InsufficientPool {
                what: format!("spiked calibration records for size {size}"),
                needed: size / 2,
                available: spiked,
            });
        }
    }
    let pool = SimPool::new(corpus, &cfg.benchmark)?;
    let trial = TrialConfig {
        benchmark: cfg.benchmark.clone(),
        n: cfg.n,
        r_contam: cfg.r_contam,
        regime: cfg.regime,
        replicates: cfg.replicates,
        seed: derive_seed(cfg.seed, "efficiency/trial", 0),
    };
    trial.validate()?;
    let bench = [cfg.benchmark.as_str()];

    let mut points = Vec::new();
    for &size in &cfg.sizes {
        let reps = try_map(exec, cfg.replicates, |rep| {
            let mem = if needs_mem {
                let mut rng = rng_for(cfg.seed, &format!("efficiency/memorization/{size}"), rep as u64);
                let sample = balanced_memorization_sample(&calibration, size, &mut rng);
                MemSource::Fitted(fit_memorization(&sample, &bench, cfg.method)?)
            } else {
                MemSource::None
            };
            let clean_sample = sample_clean(&clean, size, cfg.seed, rep);
            let corr = if cfg.estimators.iter().any(|e| e.needs_correctness()) {
                CorrSource::Fitted(fit_correctness(&clean_sample, &bench, &cfg.correctness_source)?)
            } else {
                CorrSource::None
            };
            let r = run_replicate(&pool, &trial, &mem, &corr, trial.seed, &cfg.estimators, rep)?;
            let clean_acc = clean_sample.iter().filter(|x| x.y_std).count() as f64 / size as f64;
            Ok((r, clean_acc))
        })?;
        let count = reps.len() as f64;
        let rmse_of = |err: &dyn Fn(&(crate::sim::ReplicateEstimates, f64)) -> f64| {
            sqrt(reps.iter().map(|r| err(r) * err(r)).sum::<f64>() / count)
        };
        for (k, &e) in cfg.estimators.iter().enumerate() {
            let rmse = rmse_of(&|(r, _)| r.estimates[k] - r.ground_truth);
            points.push(EfficiencyPoint { size, series: Series::Estimator(e), rmse });
        }
        let rmse = rmse_of(&|(r, c)| c - r.ground_truth);
        points.push(EfficiencyPoint { size, series: Series::CleanOnly, rmse });
    }
    Ok(EfficiencyCurve { points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    pub sources: Vec<String>,
    pub targets: Vec<String>,
    pub method: MiaMethod,
    pub regimes: Vec<Regime>,
    pub n: usize,
    pub r_contam: f64,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            sources: Vec::new(),
            targets: Vec::new(),
            method: MiaMethod::min_k(),
            regimes: alloc::vec![Regime::Random { dose: crate::sim::Dose::High }],
            n: 500,
            r_contam: 0.3,
            replicates: 1000,
            seed: 0,
        }
    }
}

/// Label used in the source column for the naive baseline rows.
pub const NAIVE_SOURCE: &str = "naive";

#[derive(Debug, Clone, PartialEq)]
pub struct TransferRow {
    /// Source benchmark, or [`NAIVE_SOURCE`] for the baseline.
    pub source: String,
    pub target: String,
    pub regime: Regime,
    pub rmse: f64,
}

/// IPW RMSE for each (source, target, regime), calibrating once per source
/// on its full calibration split. Trials depend only on (target, regime), so
/// a source evaluated on itself is exactly the in-domain result. One naive
/// row per (target, regime) follows the transfer rows.
pub fn transfer<X: Executor>(corpus: &Corpus, cfg: &TransferConfig, exec: &X) -> Result<Vec<TransferRow>> {
    if cfg.sources.is_empty() || cfg.targets.is_empty() || cfg.regimes.is_empty() {
        return Err(Error::param("transfer", "sources, targets and regimes must be non-empty"));
    }
    let pools = cfg
        .targets
        .iter()
        .map(|t| SimPool::new(corpus, t))
        .collect::<Result<Vec<_>>>()?;
    let trial = |target: &str, regime: Regime| TrialConfig {
        benchmark: target.into(),
        n: cfg.n,
        r_contam: cfg.r_contam,
        regime,
        replicates: cfg.replicates,
        seed: derive_seed(cfg.seed, &format!("transfer/trial/{target}/{regime}"), 0),
    };
    let mut rows = Vec::new();
    for source in &cfg.sources {
        let pred = calibrate_memorization(corpus, &[source.as_str()], cfg.method, None, cfg.seed)?;
        let mem = MemSource::Fitted(pred);
        for (target, pool) in cfg.targets.iter().zip(&pools) {
            for &regime in &cfg.regimes {
                let set = simulate_pool(pool, &trial(target, regime), &mem, &CorrSource::None, &[Estimator::Ipw], exec)?;
                rows.push(TransferRow {
                    source: source.clone(),
                    target: target.clone(),
                    regime,
                    rmse: set.summary[0].rmse,
                });
            }
        }
    }
    for (target, pool) in cfg.targets.iter().zip(&pools) {
        for &regime in &cfg.regimes {
            let set = simulate_pool(pool, &trial(target, regime), &MemSource::None, &CorrSource::None, &[Estimator::Naive], exec)?;
            rows.push(TransferRow {
                source: NAIVE_SOURCE.into(),
                target: target.clone(),
                regime,
                rmse: set.summary[0].rmse,
            });
        }
    }
    Ok(rows)
}
