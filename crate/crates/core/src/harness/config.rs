use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codebook::{build_codebook, Codebook, CodebookConfig};
use crate::csi_map::TrainConfig;
use crate::error::{Error, Result};
use crate::link::EsmConfig;
use crate::rate::{FrameConfig, McsTable};
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    GroundTruth,
    Knn,
    Lqtn,
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    pub kind: PredictorKind,
    /// Training / test geolocations (each labelled for every BS).
    pub n_train: usize,
    pub n_test: usize,
    pub knn_k: usize,
    pub embed_dim: usize,
    pub num_heads: usize,
    pub train: TrainConfig,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            kind: PredictorKind::Lqtn,
            n_train: 400,
            n_test: 100,
            knn_k: 5,
            embed_dim: 32,
            num_heads: 4,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodebookSettings {
    pub o1: usize,
    pub o2: usize,
    pub max_rank: usize,
}

impl Default for CodebookSettings {
    fn default() -> Self {
        Self {
            o1: 4,
            o2: 4,
            max_rank: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub codebook: CodebookSettings,
    pub cqi_margin: f64,
    pub frame: FrameConfig,
    pub predictor: PredictorConfig,
    pub ue_counts: Vec<usize>,
    pub quotas: Vec<usize>,
    pub num_seeds: usize,
    pub speeds_kmh: Vec<f64>,
    pub feedback_delay_s: f64,
    /// Age of the geolocation fed to the predictor in the mobility run.
    pub geolocation_staleness_s: f64,
    pub mobility_ues: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            codebook: CodebookSettings::default(),
            cqi_margin: 1.0,
            frame: FrameConfig::default(),
            predictor: PredictorConfig::default(),
            ue_counts: vec![4, 8, 12],
            quotas: vec![1, 2],
            num_seeds: 5,
            speeds_kmh: vec![0.0, 10.0, 30.0, 60.0, 120.0],
            feedback_delay_s: 0.003,
            geolocation_staleness_s: 0.0,
            mobility_ues: 12,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.frame.validate()?;
        let total_rbs = self.scenario.bs_positions.as_ref().map_or(self.scenario.num_bs, Vec::len) * self.scenario.rb_count;
        for &m in &self.ue_counts {
            if m == 0 {
                return Err(Error::Config("UE counts must be positive".into()));
            }
            for &q in &self.quotas {
                if total_rbs < q * m {
                    return Err(Error::Config(format!(
                        "{total_rbs} BS-RBs cannot give {m} UEs {q} RBs each"
                    )));
                }
            }
        }
        if !(self.feedback_delay_s >= 0.0) || !(self.geolocation_staleness_s >= 0.0) {
            return Err(Error::Config("delays must be nonnegative".into()));
        }
        if self.speeds_kmh.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("speeds must be nonnegative".into()));
        }
        if !(self.cqi_margin > 0.0) {
            return Err(Error::Config("CQI margin must be positive".into()));
        }
        let p = &self.predictor;
        if p.kind != PredictorKind::GroundTruth {
            if p.n_train == 0 {
                return Err(Error::Config("learned predictors need training data".into()));
            }
            if p.kind == PredictorKind::Knn && (p.knn_k == 0 || p.knn_k > p.n_train) {
                return Err(Error::Config("knn_k must be in 1..=n_train".into()));
            }
            if p.embed_dim == 0 || p.num_heads == 0 || p.embed_dim % p.num_heads != 0 {
                return Err(Error::Config("embed_dim must be a positive multiple of num_heads".into()));
            }
        }
        self.codebook_config()?;
        Ok(())
    }

    pub fn codebook_config(&self) -> Result<CodebookConfig> {
        let c = self.codebook;
        CodebookConfig::for_panel(self.scenario.antenna_panel, c.o1, c.o2, c.max_rank)
            .map_err(|e| Error::Config(e.to_string()))
    }
}

/// Everything derived from a config that the experiments share.
pub struct LinkSetup {
    pub codebook: Codebook,
    pub esm: EsmConfig,
    pub mcs: McsTable,
    pub frame: FrameConfig,
}

impl LinkSetup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let mcs = McsTable::default();
        Ok(Self {
            codebook: build_codebook(&cfg.codebook_config()?)?,
            esm: EsmConfig::from_mcs(&mcs, cfg.cqi_margin)?,
            mcs,
            frame: cfg.frame,
        })
    }
}
