//! Run configuration: one TOML or JSON file with a section per command.
//! Every seed is derived from the top-level `seed`.

use std::path::{Path, PathBuf};

use decontam_core::corpus::{SyntheticCorpusSpec, PAIRED_SCORE};
use decontam_core::estimators::Estimator;
use decontam_core::experiments::{EfficiencyConfig, PhaseGridConfig, TransferConfig};
use decontam_core::mia::MiaMethod;
use decontam_core::seed::derive_seed;
use decontam_core::sim::Regime;
use decontam_core::synthpred::DEFAULT_CONCENTRATION;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub corpus: CorpusSource,
    #[serde(default)]
    pub gen_data: GenDataSection,
    #[serde(default)]
    pub calibrate: CalibrateSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub phase: PhaseGridConfig,
    #[serde(default)]
    pub efficiency: EfficiencyConfig,
    #[serde(default)]
    pub transfer: TransferConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Either a JSONL file or an in-memory synthetic corpus.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSource {
    pub path: Option<PathBuf>,
    pub synthetic: Option<SyntheticCorpusSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataSection {
    /// Output file, relative to the output directory.
    pub output: PathBuf,
}

impl Default for GenDataSection {
    fn default() -> Self {
        GenDataSection { output: PathBuf::from("corpus.jsonl") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateSection {
    /// Empty means every benchmark in the corpus.
    pub benchmarks: Vec<String>,
    pub methods: Vec<MiaMethod>,
    pub correctness_sources: Vec<String>,
    pub max_examples: Option<usize>,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        CalibrateSection {
            benchmarks: Vec::new(),
            methods: vec![
                MiaMethod::Loss,
                MiaMethod::min_k(),
                MiaMethod::min_kpp(),
                MiaMethod::zlib(),
                MiaMethod::Reference,
            ],
            correctness_sources: vec![PAIRED_SCORE.into()],
            max_examples: None,
        }
    }
}

fn default_concentration() -> f64 {
    DEFAULT_CONCENTRATION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MemorizationSpec {
    None,
    Oracle,
    /// Platt-scaled MIA score fit on the benchmark's calibration split.
    Fitted {
        method: MiaMethod,
        #[serde(default)]
        max_examples: Option<usize>,
    },
    /// Predictor JSON written by `calibrate`, relative to the config file.
    File { path: PathBuf },
    Synthetic {
        target_auroc: f64,
        #[serde(default = "default_concentration")]
        concentration: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CorrectnessSpec {
    None,
    Oracle,
    Fitted {
        source: String,
        #[serde(default)]
        max_examples: Option<usize>,
    },
    File { path: PathBuf },
    Synthetic {
        target_bias: f64,
        #[serde(default = "default_concentration")]
        concentration: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub benchmark: String,
    pub regimes: Vec<Regime>,
    pub n: usize,
    pub r_contam: f64,
    pub replicates: usize,
    pub estimators: Vec<Estimator>,
    pub memorization: MemorizationSpec,
    pub correctness: CorrectnessSpec,
    /// Also write one per-replicate CSV per regime.
    pub write_replicates: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            benchmark: "mmlu".into(),
            regimes: Regime::all(),
            n: 500,
            r_contam: 0.3,
            replicates: 1000,
            estimators: Estimator::ALL.to_vec(),
            memorization: MemorizationSpec::Fitted { method: MiaMethod::min_k(), max_examples: None },
            correctness: CorrectnessSpec::Fitted { source: PAIRED_SCORE.into(), max_examples: None },
            write_replicates: true,
        }
    }
}

/// Sections whose `seed` field is derived rather than configured.
const DERIVED_SEED_SECTIONS: [&[&str]; 4] = [&["corpus", "synthetic"], &["phase"], &["efficiency"], &["transfer"]];

/// A parsed configuration plus what is needed to resolve relative paths and
/// fingerprint the run.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// Directory of the config file; relative input paths resolve against it.
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("reading {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        let config = parse(&text, is_json).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, base_dir })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

/// Parses TOML (or JSON when `is_json`) into a validated config.
pub fn parse(text: &str, is_json: bool) -> Result<RunConfig, String> {
    let value: Value = if is_json {
        serde_json::from_str(text).map_err(|e| e.to_string())?
    } else {
        let table: toml::Table = toml::from_str(text).map_err(|e| e.to_string())?;
        serde_json::to_value(table).map_err(|e| e.to_string())?
    };
    for section in DERIVED_SEED_SECTIONS {
        let mut v = &value;
        for key in section {
            v = &v[*key];
        }
        if v.get("seed").is_some() {
            return Err(format!(
                "`{}.seed` is not configurable; seeds derive from the top-level `seed`",
                section.join(".")
            ));
        }
    }
    let config: RunConfig = serde_json::from_value(value).map_err(|e| e.to_string())?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.corpus.path.is_some() && self.corpus.synthetic.is_some() {
            return Err("set either `corpus.path` or `corpus.synthetic`, not both".into());
        }
        Ok(())
    }

    pub fn synthetic_spec(&self) -> SyntheticCorpusSpec {
        let mut spec = self.corpus.synthetic.clone().unwrap_or_default();
        spec.seed = derive_seed(self.seed, "corpus", 0);
        spec
    }

    pub fn phase_config(&self) -> PhaseGridConfig {
        PhaseGridConfig { seed: derive_seed(self.seed, "phase", 0), ..self.phase.clone() }
    }

    pub fn efficiency_config(&self) -> EfficiencyConfig {
        EfficiencyConfig { seed: derive_seed(self.seed, "efficiency", 0), ..self.efficiency.clone() }
    }

    pub fn transfer_config(&self) -> TransferConfig {
        TransferConfig { seed: derive_seed(self.seed, "transfer", 0), ..self.transfer.clone() }
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn digest(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(m) = &mut v {
            m.remove("output_dir");
        }
        let bytes = serde_json::to_vec(&v).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
