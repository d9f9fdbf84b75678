//! JSON run configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use debias_core::data::{generate, load_dataset, GenConfig};
use debias_core::debias::PipelineConfig;
use debias_core::Dataset;
use serde::{Deserialize, Serialize};

pub const RUN_SCHEMA_VERSION: u32 = 1;

/// Where the train and test sets come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// Generated per seed: the training set with `train.seed + seed`, an
    /// unbiased test set of `test_samples` alongside it.
    Generate {
        train: GenConfig,
        test_samples: usize,
    },
    /// Datasets written by `debias generate`.
    Load { train: PathBuf, test: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub data: DataSpec,
    pub pipeline: PipelineConfig,
    /// One run per seed; the seed drives data generation and training.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "yes")]
    pub save_checkpoints: bool,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn yes() -> bool {
    true
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != RUN_SCHEMA_VERSION {
            bail!(
                "config schema_version {} is not supported (expected {RUN_SCHEMA_VERSION})",
                self.schema_version
            );
        }
        if self.seeds.is_empty() {
            bail!("config lists no seeds");
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            bail!("config repeats a seed");
        }
        match &self.data {
            DataSpec::Generate {
                train,
                test_samples,
            } => {
                train.validate()?;
                if *test_samples == 0 {
                    bail!("test_samples must be >= 1");
                }
            }
            DataSpec::Load { train, test } => {
                for p in [train, test] {
                    if !p.join("meta.json").is_file() {
                        bail!("no dataset at {}", p.display());
                    }
                }
            }
        }
        self.pipeline.validate()?;
        Ok(())
    }

    /// Train and test sets for one seed.
    pub fn datasets(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        match &self.data {
            DataSpec::Generate {
                train,
                test_samples,
            } => {
                let g = GenConfig {
                    seed: train.seed.wrapping_add(seed),
                    ..train.clone()
                };
                let test = g.unbiased(*test_samples, g.seed.wrapping_add(1_000_003));
                Ok((generate(&g)?, generate(&test)?))
            }
            DataSpec::Load { train, test } => Ok((load_dataset(train)?, load_dataset(test)?)),
        }
    }

    /// Pipeline settings with the training seeds of run `seed`.
    pub fn pipeline_for(&self, seed: u64) -> PipelineConfig {
        let mut p = self.pipeline.clone();
        p.train.seed = seed;
        if let Some(b) = p.biased_train.as_mut() {
            b.seed = seed;
        }
        if let Some(v) = p.vcae_train.as_mut() {
            v.seed = seed;
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use debias_core::classifier::TrainConfig;
    use debias_core::debias::{Method, Scheme};

    fn sample() -> RunConfig {
        RunConfig {
            schema_version: RUN_SCHEMA_VERSION,
            data: DataSpec::Generate {
                train: GenConfig::two_factor(4, 100, 0.05, 0),
                test_samples: 50,
            },
            pipeline: PipelineConfig::new(Scheme::OracleUb, Method::Lw, TrainConfig::default()),
            seeds: vec![0, 1],
            save_checkpoints: false,
        }
    }

    #[test]
    fn round_trips_through_json() {
        let c = sample();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        let mut v = serde_json::to_value(sample()).unwrap();
        v["typo"] = 1.into();
        assert!(serde_json::from_value::<RunConfig>(v).is_err());
        let c = RunConfig {
            schema_version: 9,
            ..sample()
        };
        assert!(c.validate().is_err());
        let c = RunConfig {
            seeds: vec![1, 1],
            ..sample()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn seeds_shift_data_and_training() {
        let c = sample();
        let (a, _) = c.datasets(0).unwrap();
        let (b, _) = c.datasets(1).unwrap();
        assert_ne!(a.labels(), b.labels());
        assert_eq!(c.pipeline_for(7).train.seed, 7);
    }
}
