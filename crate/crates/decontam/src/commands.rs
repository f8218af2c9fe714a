//! The six commands. Each reads the config (and corpus), writes its outputs
//! under the output directory, then writes `<command>.manifest.json` listing
//! input and output digests.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use decontam_core::calibrate::{absolute_bias, auroc, calibrate_correctness, calibrate_memorization};
use decontam_core::corpus::{generate_corpus, Corpus, ExampleRecord, Split, SyntheticCorpusSpec};
use decontam_core::experiments::{phase_diagram, sample_efficiency, transfer};
use decontam_core::seed::derive_seed;
use decontam_core::sim::{run_simulation, CorrSource, DifficultyBin, Dose, MemSource, Regime, SimPool, TrialConfig};
use decontam_core::synthpred::{SyntheticCorrectness, SyntheticMemorization};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{CorrectnessSpec, LoadedConfig, MemorizationSpec};
use crate::error::{CliError, CliResult};
use crate::exec::RayonExecutor;
use crate::io::{self, num, PredictorFile};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct Context {
    pub loaded: LoadedConfig,
    pub output_dir: PathBuf,
    pub exec: RayonExecutor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config_sha256: String,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    synthetic_corpus: Option<&'a SyntheticCorpusSpec>,
}

fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

struct Corpora {
    corpus: Corpus,
    inputs: Vec<FileDigest>,
    synthetic: Option<SyntheticCorpusSpec>,
}

impl Context {
    fn cfg(&self) -> &crate::config::RunConfig {
        &self.loaded.config
    }

    fn corpus(&self) -> CliResult<Corpora> {
        match &self.cfg().corpus.path {
            Some(p) => {
                let path = self.loaded.resolve(p);
                log::info!("loading corpus {}", path.display());
                let corpus = io::load_corpus(&path)?;
                let inputs = vec![FileDigest { path: p.display().to_string(), sha256: sha256_file(&path)? }];
                Ok(Corpora { corpus, inputs, synthetic: None })
            }
            None => {
                let spec = self.cfg().synthetic_spec();
                log::info!("generating synthetic corpus");
                let corpus = generate_corpus(&spec)?;
                Ok(Corpora { corpus, inputs: Vec::new(), synthetic: Some(spec) })
            }
        }
    }

    fn out(&self, rel: &str) -> PathBuf {
        self.output_dir.join(rel)
    }

    /// Short digest of the config and inputs, stamped into summary rows.
    fn fingerprint(&self, inputs: &[FileDigest]) -> String {
        let mut h = Sha256::new();
        h.update(self.cfg().digest());
        for i in inputs {
            h.update(&i.sha256);
        }
        hex::encode(h.finalize())[..16].to_string()
    }

    fn finish(&self, command: &str, corpora: Option<&Corpora>, outputs: &[String]) -> CliResult<()> {
        let outputs = outputs
            .iter()
            .map(|rel| Ok(FileDigest { path: rel.clone(), sha256: sha256_file(&self.out(rel))? }))
            .collect::<anyhow::Result<Vec<_>>>()?;
        let manifest = Manifest {
            command,
            version: VERSION,
            seed: self.cfg().seed,
            config_sha256: self.cfg().digest(),
            inputs: corpora.map(|c| c.inputs.clone()).unwrap_or_default(),
            outputs,
            synthetic_corpus: corpora.and_then(|c| c.synthetic.as_ref()),
        };
        io::write_json(&self.out(&format!("{command}.manifest.json")), &manifest)?;
        log::info!("{command}: wrote {} file(s) to {}", manifest.outputs.len(), self.output_dir.display());
        Ok(())
    }
}

fn rel_string(p: &Path) -> String {
    p.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

pub fn gen_data(ctx: &Context) -> CliResult<()> {
    if ctx.cfg().corpus.path.is_some() {
        return Err(CliError::validation("gen-data needs `corpus.synthetic`, not `corpus.path`"));
    }
    let spec = ctx.cfg().synthetic_spec();
    spec.validate()?;
    let corpus = generate_corpus(&spec)?;
    let rel = rel_string(&ctx.cfg().gen_data.output);
    io::write_corpus(&ctx.out(&rel), &corpus)?;
    let corpora = Corpora { corpus, inputs: Vec::new(), synthetic: Some(spec) };
    ctx.finish("gen-data", Some(&corpora), &[rel])
}

fn mean_or_nan<T>(v: Result<f64, T>) -> String {
    v.map(num).unwrap_or_else(|_| "NaN".into())
}

/// Predictor AUROC on the simulation split: clean records against each
/// dose, then all records pooled.
fn memorization_row(pred_scores: &[(&ExampleRecord, f64)]) -> Vec<String> {
    let dose = |levels: Option<&[u32]>| {
        let (s, l): (Vec<f64>, Vec<bool>) = pred_scores
            .iter()
            .filter(|(r, _)| r.dup_level == 0 || levels.is_none_or(|lv| lv.contains(&r.dup_level)))
            .map(|(r, p)| (*p, r.is_contaminated()))
            .unzip();
        mean_or_nan(auroc(&s, &l))
    };
    vec![
        dose(Some(Dose::Low.levels())),
        dose(Some(Dose::Mid.levels())),
        dose(Some(Dose::High.levels())),
        dose(None),
    ]
}

pub fn calibrate(ctx: &Context) -> CliResult<()> {
    let corpora = ctx.corpus()?;
    let corpus = &corpora.corpus;
    let sec = &ctx.cfg().calibrate;
    let benchmarks: Vec<String> = if sec.benchmarks.is_empty() {
        corpus.benchmarks().iter().cloned().collect()
    } else {
        sec.benchmarks.clone()
    };
    let seed = derive_seed(ctx.cfg().seed, "calibrate", 0);
    let mut outputs = Vec::new();
    let mut mem_rows = Vec::new();
    let mut corr_rows = Vec::new();
    for bench in &benchmarks {
        let sim = corpus.split(bench, Split::Simulation)?;
        for &method in &sec.methods {
            log::info!("calibrating {method} on {bench}");
            let pred = calibrate_memorization(corpus, &[bench], method, sec.max_examples, seed)?;
            let rel = format!("predictors/memorization_{bench}_{}.json", method.to_string().replace(':', "-"));
            io::write_json(&ctx.out(&rel), &PredictorFile::from(&pred))?;
            outputs.push(rel);
            let scores = decontam_core::mia::score_all(sim.iter().copied(), method)?;
            let pairs: Vec<(&ExampleRecord, f64)> =
                sim.iter().copied().zip(scores.into_iter().map(|s| pred.platt.predict(s))).collect();
            let mut row = vec![bench.clone(), method.to_string()];
            row.extend(memorization_row(&pairs));
            mem_rows.push(row);
        }
        let pool = SimPool::new(corpus, bench)?;
        for source in &sec.correctness_sources {
            log::info!("calibrating correctness `{source}` on {bench}");
            let pred = calibrate_correctness(corpus, &[bench], source, sec.max_examples, seed)?;
            let rel = format!("predictors/correctness_{bench}_{source}.json");
            io::write_json(&ctx.out(&rel), &PredictorFile::from(&pred))?;
            outputs.push(rel);
            let bias = |recs: &[&ExampleRecord]| -> CliResult<String> {
                let p = recs.iter().map(|r| pred.predict(r)).collect::<Result<Vec<_>, _>>()?;
                let y: Vec<bool> = recs.iter().map(|r| r.y_std).collect();
                Ok(mean_or_nan(absolute_bias(&p, &y)))
            };
            let mut row = vec![bench.clone(), source.clone()];
            for bin in [DifficultyBin::Easy, DifficultyBin::Medium, DifficultyBin::Hard] {
                let regime = Regime::Correlated { dose: Dose::High, bin };
                let recs: Vec<&ExampleRecord> = match pool.eligible(regime) {
                    Ok(idx) => idx.iter().map(|&i| pool.records()[i]).collect(),
                    Err(_) => Vec::new(),
                };
                row.push(bias(&recs)?);
            }
            row.push(bias(&sim)?);
            corr_rows.push(row);
        }
    }
    io::write_csv(&ctx.out("calibration_memorization.csv"), &["benchmark", "method", "low", "med", "high", "all"], &mem_rows)?;
    io::write_csv(&ctx.out("calibration_correctness.csv"), &["benchmark", "source", "easy", "med", "hard", "all"], &corr_rows)?;
    outputs.push("calibration_memorization.csv".into());
    outputs.push("calibration_correctness.csv".into());
    ctx.finish("calibrate", Some(&corpora), &outputs)
}

fn memorization_source(ctx: &Context, corpus: &Corpus, bench: &str) -> CliResult<MemSource> {
    let seed = derive_seed(ctx.cfg().seed, "calibrate", 0);
    Ok(match &ctx.cfg().simulate.memorization {
        MemorizationSpec::None => MemSource::None,
        MemorizationSpec::Oracle => MemSource::Oracle,
        MemorizationSpec::Fitted { method, max_examples } => {
            MemSource::Fitted(calibrate_memorization(corpus, &[bench], *method, *max_examples, seed)?)
        }
        MemorizationSpec::File { path } => MemSource::Fitted(
            io::read_predictor(&ctx.loaded.resolve(path))
                .and_then(PredictorFile::into_memorization)
                .map_err(CliError::Validation)?,
        ),
        MemorizationSpec::Synthetic { target_auroc, concentration } => {
            MemSource::Synthetic(SyntheticMemorization::new(*target_auroc, *concentration)?)
        }
    })
}

fn correctness_source(ctx: &Context, corpus: &Corpus, bench: &str) -> CliResult<CorrSource> {
    let seed = derive_seed(ctx.cfg().seed, "calibrate", 0);
    Ok(match &ctx.cfg().simulate.correctness {
        CorrectnessSpec::None => CorrSource::None,
        CorrectnessSpec::Oracle => CorrSource::Oracle,
        CorrectnessSpec::Fitted { source, max_examples } => {
            CorrSource::Fitted(calibrate_correctness(corpus, &[bench], source, *max_examples, seed)?)
        }
        CorrectnessSpec::File { path } => CorrSource::Fitted(
            io::read_predictor(&ctx.loaded.resolve(path))
                .and_then(PredictorFile::into_correctness)
                .map_err(CliError::Validation)?,
        ),
        CorrectnessSpec::Synthetic { target_bias, concentration } => {
            CorrSource::Synthetic(SyntheticCorrectness::new(*target_bias, *concentration)?)
        }
    })
}

pub fn simulate(ctx: &Context) -> CliResult<()> {
    let corpora = ctx.corpus()?;
    let corpus = &corpora.corpus;
    let sec = &ctx.cfg().simulate;
    if sec.regimes.is_empty() {
        return Err(CliError::validation("simulate.regimes is empty"));
    }
    let mem = memorization_source(ctx, corpus, &sec.benchmark)?;
    let corr = correctness_source(ctx, corpus, &sec.benchmark)?;
    let fingerprint = ctx.fingerprint(&corpora.inputs);
    let mut summary = Vec::new();
    let mut outputs = Vec::new();
    for &regime in &sec.regimes {
        log::info!("simulating {regime} ({} replicates)", sec.replicates);
        let config = TrialConfig {
            benchmark: sec.benchmark.clone(),
            n: sec.n,
            r_contam: sec.r_contam,
            regime,
            replicates: sec.replicates,
            seed: derive_seed(ctx.cfg().seed, &format!("simulate/{regime}"), 0),
        };
        let set = run_simulation(corpus, &config, &mem, &corr, &sec.estimators, &ctx.exec)?;
        for s in &set.summary {
            summary.push(vec![regime.to_string(), s.estimator.to_string(), num(s.rmse), num(s.mean_bias), fingerprint.clone()]);
        }
        if sec.write_replicates {
            let mut header = vec!["replicate".to_string(), "ground_truth".to_string()];
            header.extend(set.estimators.iter().map(|e| e.to_string()));
            let rows: Vec<Vec<String>> = set
                .replicates
                .iter()
                .map(|r| {
                    let mut row = vec![r.index.to_string(), num(r.ground_truth)];
                    row.extend(r.estimates.iter().map(|&x| num(x)));
                    row
                })
                .collect();
            let rel = format!("simulate_replicates_{regime}.csv");
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            io::write_csv(&ctx.out(&rel), &header, &rows)?;
            outputs.push(rel);
        }
    }
    io::write_csv(
        &ctx.out("simulate_summary.csv"),
        &["regime", "estimator", "rmse", "mean_bias", "config_fingerprint"],
        &summary,
    )?;
    outputs.insert(0, "simulate_summary.csv".into());
    ctx.finish("simulate", Some(&corpora), &outputs)
}

pub fn phase(ctx: &Context) -> CliResult<()> {
    let corpora = ctx.corpus()?;
    let cfg = ctx.cfg().phase_config();
    log::info!(
        "phase diagram: {} cells x {} replicates",
        cfg.regimes.len() * cfg.auroc_grid.len() * cfg.bias_grid.len(),
        cfg.replicates
    );
    let diagram = phase_diagram(&corpora.corpus, &cfg, &ctx.exec)?;
    let mut rows = Vec::new();
    for cell in &diagram.cells {
        let realized = cell.realized_bias.map(num).unwrap_or_default();
        for s in &cell.summary {
            rows.push(vec![
                num(cell.auroc),
                num(cell.bias),
                cell.regime.to_string(),
                s.estimator.to_string(),
                num(s.rmse),
                (s.estimator == cell.winner).to_string(),
                realized.clone(),
            ]);
        }
    }
    io::write_csv(
        &ctx.out("phase.csv"),
        &["auroc", "bias", "regime", "estimator", "rmse", "is_winner", "realized_bias"],
        &rows,
    )?;
    ctx.finish("phase", Some(&corpora), &["phase.csv".into()])
}

pub fn efficiency(ctx: &Context) -> CliResult<()> {
    let corpora = ctx.corpus()?;
    let cfg = ctx.cfg().efficiency_config();
    log::info!("sample efficiency over sizes {:?}", cfg.sizes);
    let curve = sample_efficiency(&corpora.corpus, &cfg, &ctx.exec)?;
    let rows: Vec<Vec<String>> = curve
        .points
        .iter()
        .map(|p| vec![p.size.to_string(), p.series.to_string(), num(p.rmse)])
        .collect();
    io::write_csv(&ctx.out("efficiency.csv"), &["size", "estimator", "rmse"], &rows)?;
    ctx.finish("efficiency", Some(&corpora), &["efficiency.csv".into()])
}

pub fn transfer_cmd(ctx: &Context) -> CliResult<()> {
    let corpora = ctx.corpus()?;
    let cfg = ctx.cfg().transfer_config();
    log::info!("transfer: {} source(s) x {} target(s)", cfg.sources.len(), cfg.targets.len());
    let rows: Vec<Vec<String>> = transfer(&corpora.corpus, &cfg, &ctx.exec)?
        .into_iter()
        .map(|r| vec![r.source, r.target, r.regime.to_string(), num(r.rmse)])
        .collect();
    io::write_csv(&ctx.out("transfer.csv"), &["source", "target", "dose", "rmse"], &rows)?;
    ctx.finish("transfer", Some(&corpora), &["transfer.csv".into()])
}
