//! Run configuration: a JSON document that flags override.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use cfrec::data::SynthConfig;
use cfrec::eval::EvalConfig;
use cfrec::explain::SearchConfig;
use cfrec::influence::InfluenceConfig;
use cfrec::models::{ModelKind, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::InputError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    /// MovieLens `u.data` file.
    pub movielens: Option<PathBuf>,
    /// Canonical CSV written by `ingest`.
    pub csv: Option<PathBuf>,
    pub synthetic: Option<SynthConfig>,
    /// Iterative k-core style filter applied at ingest (0 disables it).
    pub min_actions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Master seed; copied into every stage that draws random numbers.
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub model_kind: ModelKind,
    pub train: TrainConfig,
    pub influence: InfluenceConfig,
    pub search: SearchConfig,
    pub eval: EvalConfig,
    pub sweep_dims: Vec<usize>,
    /// Label used in reports; derived from the search and estimation method when empty.
    pub label: String,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            dataset: DatasetSpec::default(),
            model_kind: ModelKind::Ncf,
            train: TrainConfig::default(),
            influence: InfluenceConfig::default(),
            search: SearchConfig::default(),
            eval: EvalConfig::default(),
            sweep_dims: vec![8, 16, 20, 24, 28, 32],
            label: String::new(),
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| InputError(format!("{}: {e}", path.display())))?;
        let cfg = serde_json::from_str(&text)
            .map_err(|e| InputError(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Pushes the master seed into every stage config.
    pub fn propagate_seed(&mut self) {
        self.train.seed = self.seed;
        self.influence.seed = self.seed;
        if let Some(s) = &mut self.dataset.synthetic {
            s.seed = self.seed;
        }
        if self.eval.seeds.is_empty() {
            self.eval.seeds = vec![self.seed];
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        for p in [&self.dataset.movielens, &self.dataset.csv]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return Err(InputError(format!("{}: no such file", p.display())).into());
            }
        }
        if self.eval.ks.is_empty() {
            bail!(InputError("K list must be non-empty".into()));
        }
        self.train.validate().map_err(input)?;
        self.influence.validate().map_err(input)?;
        self.search.validate().map_err(input)?;
        Ok(())
    }

    pub fn label(&self) -> String {
        if !self.label.is_empty() {
            return self.label.clone();
        }
        format!(
            "{}-{}-{}",
            self.model_kind, self.search.algorithm, self.influence.method
        )
    }

    pub fn to_json(&self) -> anyhow::Result<String> {
        let mut s = serde_json::to_string_pretty(self).context("serializing config")?;
        s.push('\n');
        Ok(s)
    }
}

fn input(e: cfrec::Error) -> anyhow::Error {
    InputError(e.to_string()).into()
}
