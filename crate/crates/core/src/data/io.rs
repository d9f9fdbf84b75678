//! Dataset directory format.
//!
//! `meta.json` describes the shape and column roles. `data.f64le` holds raw
//! little-endian doubles in this order: the `N×D` feature matrix row-major,
//! then `N` labels, then `N` bias labels (if present), then `N` aligned
//! flags as `0.0`/`1.0`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetKind, GenConfig, LabeledDataset};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const DATASET_SCHEMA_VERSION: u32 = 1;
const META_FILE: &str = "meta.json";
const DATA_FILE: &str = "data.f64le";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub schema_version: u32,
    pub samples: usize,
    pub dim: usize,
    pub classes: usize,
    pub bc_ratio: Option<f64>,
    pub seed: Option<u64>,
    pub kind: Option<DatasetKind>,
    /// Column roles in file order.
    pub columns: Vec<String>,
    /// Full generator configuration, when the dataset was generated.
    pub generator: Option<GenConfig>,
}

fn put(buf: &mut Vec<u8>, x: f64) {
    buf.extend_from_slice(&x.to_le_bytes());
}

pub fn save_dataset(ds: &LabeledDataset<f64>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let has_bias = ds.bias().is_some();
    let mut columns = vec!["features".to_string(), "labels".to_string()];
    if has_bias {
        columns.push("bias".into());
    }
    columns.push("aligned".into());
    let origin = ds.origin();
    let meta = DatasetMeta {
        schema_version: DATASET_SCHEMA_VERSION,
        samples: ds.len(),
        dim: ds.dim(),
        classes: ds.classes(),
        bc_ratio: origin.map(|o| o.bc_ratio),
        seed: origin.map(|o| o.seed),
        kind: origin.map(|o| o.kind),
        columns,
        generator: origin.cloned(),
    };
    let meta_path = dir.join(META_FILE);
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")
        .map_err(|e| Error::io(&meta_path, e))?;

    let n = ds.len();
    let mut buf = Vec::with_capacity(8 * (n * ds.dim() + 3 * n));
    for &x in ds.features().data() {
        put(&mut buf, x);
    }
    for &y in ds.labels() {
        put(&mut buf, y as f64);
    }
    if let Some(b) = ds.bias() {
        for &v in b {
            put(&mut buf, v as f64);
        }
    }
    for &a in ds.aligned() {
        put(&mut buf, if a { 1.0 } else { 0.0 });
    }
    let data_path = dir.join(DATA_FILE);
    fs::write(&data_path, buf).map_err(|e| Error::io(&data_path, e))
}

fn as_label(x: f64, what: &str) -> Result<usize> {
    if x >= 0.0 && x.fract() == 0.0 && x < u32::MAX as f64 {
        Ok(x as usize)
    } else {
        Err(Error::InvalidConfig(format!(
            "{what} column holds non-integer {x}"
        )))
    }
}

pub fn load_dataset(dir: &Path) -> Result<LabeledDataset<f64>> {
    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: DatasetMeta = serde_json::from_str(&text)?;
    if meta.schema_version != DATASET_SCHEMA_VERSION {
        return Err(Error::InvalidConfig(format!(
            "unsupported dataset schema {}",
            meta.schema_version
        )));
    }
    let has_bias = meta.columns.iter().any(|c| c == "bias");
    let data_path = dir.join(DATA_FILE);
    let bytes = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let n = meta.samples;
    let expected = n * meta.dim + n * (2 + usize::from(has_bias));
    if bytes.len() != expected * 8 {
        return Err(Error::InvalidConfig(format!(
            "{} holds {} bytes, expected {}",
            data_path.display(),
            bytes.len(),
            expected * 8
        )));
    }
    let vals: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let (feat, rest) = vals.split_at(n * meta.dim);
    let (labels, rest) = rest.split_at(n);
    let (bias, flags) = if has_bias {
        rest.split_at(n)
    } else {
        rest.split_at(0)
    };
    let labels = labels
        .iter()
        .map(|&x| as_label(x, "labels"))
        .collect::<Result<Vec<_>>>()?;
    let bias = if has_bias {
        Some(
            bias.iter()
                .map(|&x| as_label(x, "bias"))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let aligned = flags.iter().map(|&x| x != 0.0).collect();
    let features = Tensor::matrix(n, meta.dim, feat.to_vec())?;
    let ds = LabeledDataset::new(features, labels, bias, Some(aligned), meta.classes)?;
    Ok(match meta.generator {
        Some(g) => ds.with_origin(g),
        None => ds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate;

    #[test]
    fn round_trip_is_bit_exact() {
        let ds: LabeledDataset<f64> = generate(&GenConfig::two_factor(5, 64, 0.2, 11)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back, ds);
        let bits = |d: &LabeledDataset<f64>| {
            d.features()
                .data()
                .iter()
                .map(|x| x.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&back), bits(&ds));
    }

    #[test]
    fn truncated_data_rejected() {
        let ds: LabeledDataset<f64> = generate(&GenConfig::two_factor(3, 8, 0.2, 1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let p = dir.path().join(DATA_FILE);
        let mut bytes = fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 8);
        fs::write(&p, bytes).unwrap();
        assert!(load_dataset(dir.path()).is_err());
    }
}
