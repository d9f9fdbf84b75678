//! Model checkpoint: `model.json` plus `params.f64le`, the flat parameter
//! vector in [`MlpParams`] storage order (`W0, b0, W1, b1, ..`, each `Wl`
//! row-major `[in, out]`) as little-endian doubles.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MlpParams;
use crate::autodiff::OptimizerConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;
const PARAM_ORDER: &str = "W0,b0,W1,b1,...; W row-major [in,out]";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub schema_version: u32,
    pub layer_sizes: Vec<usize>,
    pub parameter_count: usize,
    pub parameter_order: String,
    pub optimizer: OptimizerConfig,
}

pub fn save_checkpoint(
    params: &MlpParams<f64>,
    optimizer: &OptimizerConfig,
    dir: &Path,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let flat = params.to_flat();
    let meta = ModelMeta {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        layer_sizes: params.sizes().to_vec(),
        parameter_count: flat.len(),
        parameter_order: PARAM_ORDER.into(),
        optimizer: optimizer.clone(),
    };
    let mp = dir.join("model.json");
    fs::write(&mp, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(&mp, e))?;
    let bytes: Vec<u8> = flat.iter().flat_map(|x| x.to_le_bytes()).collect();
    let pp = dir.join("params.f64le");
    fs::write(&pp, bytes).map_err(|e| Error::io(&pp, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<(MlpParams<f64>, OptimizerConfig)> {
    let mp = dir.join("model.json");
    let meta: ModelMeta =
        serde_json::from_str(&fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?)?;
    if meta.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(Error::InvalidConfig(format!(
            "unsupported checkpoint schema {}",
            meta.schema_version
        )));
    }
    let pp = dir.join("params.f64le");
    let bytes = fs::read(&pp).map_err(|e| Error::io(&pp, e))?;
    if bytes.len() != 8 * meta.parameter_count {
        return Err(Error::InvalidConfig(format!(
            "{} has {} bytes, expected {}",
            pp.display(),
            bytes.len(),
            8 * meta.parameter_count
        )));
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((
        MlpParams::from_flat(&meta.layer_sizes, &flat)?,
        meta.optimizer,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip() {
        let p = MlpParams::<f64>::init(&[4, 7, 3], 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let opt = OptimizerConfig::sgd(0.1, 0.9, 1e-4);
        save_checkpoint(&p, &opt, dir.path()).unwrap();
        let (q, o) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(p, q);
        assert_eq!(o, opt);
    }
}
