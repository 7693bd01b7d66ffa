//! Single-file checkpoint archive.
//!
//! Layout: the 8-byte magic `S2SCKPT\0`, a little-endian `u64` header length,
//! a JSON header, then every tensor as little-endian `f64` values at the
//! offsets listed in the header.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{NetConfig, Network};
use super::optim::{Adam, AdamConfig};
use super::params::TensorInfo;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"S2SCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

/// Everything besides the tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// SHA-256 of the dataset `metadata.json` the network was trained on.
    pub dataset_hash: Option<String>,
    pub train_statues: Vec<u32>,
    pub step: u64,
    pub half_extent: f64,
    pub reference_distance: f64,
    /// Depth PNG scale of the training data.
    pub depth_scale: Option<f64>,
    /// Free-form training state (configuration, log position).
    #[serde(default)]
    pub extra: serde_json::Value,
}

impl Default for CheckpointMeta {
    fn default() -> Self {
        CheckpointMeta {
            dataset_hash: None,
            train_statues: Vec::new(),
            step: 0,
            half_extent: crate::geometry::DEFAULT_HALF_EXTENT,
            reference_distance: crate::geometry::DEFAULT_REFERENCE_DISTANCE,
            depth_scale: None,
            extra: serde_json::Value::Null,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    net_config: NetConfig,
    meta: CheckpointMeta,
    optimizer: Option<OptimHeader>,
    tensors: Vec<TensorInfo>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OptimHeader {
    config: AdamConfig,
    t: u64,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub network: Network,
    pub meta: CheckpointMeta,
    pub optimizer: Option<Adam>,
}

fn ck(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    /// Writes atomically through a temporary sibling file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let layout = self.network.layout();
        let mut tensors: Vec<TensorInfo> = layout.tensors().to_vec();
        let total = layout.len();
        if let Some(opt) = &self.optimizer {
            for (prefix, base) in [("optim.m/", total), ("optim.v/", 2 * total)] {
                tensors.extend(layout.tensors().iter().map(|t| TensorInfo {
                    name: format!("{prefix}{}", t.name),
                    shape: t.shape.clone(),
                    offset: base + t.offset,
                    len: t.len,
                }));
            }
            debug_assert_eq!(opt.m.len(), total);
        }
        let header = Header {
            format_version: FORMAT_VERSION,
            net_config: self.network.config().clone(),
            meta: self.meta.clone(),
            optimizer: self.optimizer.as_ref().map(|o| OptimHeader {
                config: o.config,
                t: o.t,
            }),
            tensors,
        };
        let json = serde_json::to_vec(&header)?;
        let mut buf = Vec::with_capacity(16 + json.len() + 24 * total);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);
        let mut put = |vals: &[f64]| vals.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
        put(&self.network.params);
        if let Some(opt) = &self.optimizer {
            put(&opt.m);
            put(&opt.v);
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&buf).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(ck(format!("{} is not a checkpoint file", path.display())));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes
            .get(16..16 + hlen)
            .ok_or_else(|| ck("truncated checkpoint header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| ck(format!("bad header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(ck(format!("unsupported checkpoint version {}", header.format_version)));
        }
        let payload = &bytes[16 + hlen..];
        if payload.len() % 8 != 0 {
            return Err(ck("payload is not a whole number of f64 values"));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();

        let mut network = Network::new(header.net_config.clone(), 0)?;
        let layout = network.layout().clone();
        let total = layout.len();
        let read = |name: &str, info: &TensorInfo| -> Result<Vec<f64>> {
            let t = header
                .tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| ck(format!("checkpoint lacks tensor {name}")))?;
            if t.shape != info.shape {
                return Err(ck(format!("tensor {name} has shape {:?}, network expects {:?}", t.shape, info.shape)));
            }
            values
                .get(t.offset..t.offset + t.len)
                .map(|s| s.to_vec())
                .ok_or_else(|| ck(format!("tensor {name} lies outside the payload")))
        };
        let expected = if header.optimizer.is_some() { 3 } else { 1 };
        if header.tensors.len() != expected * layout.tensors().len() {
            return Err(ck(format!(
                "checkpoint has {} tensors, network expects {}",
                header.tensors.len(),
                expected * layout.tensors().len()
            )));
        }
        let mut m = vec![0.0; total];
        let mut v = vec![0.0; total];
        for info in layout.tensors() {
            network.params[info.offset..info.offset + info.len].copy_from_slice(&read(&info.name, info)?);
            if header.optimizer.is_some() {
                m[info.offset..info.offset + info.len].copy_from_slice(&read(&format!("optim.m/{}", info.name), info)?);
                v[info.offset..info.offset + info.len].copy_from_slice(&read(&format!("optim.v/{}", info.name), info)?);
            }
        }
        let optimizer = header.optimizer.map(|o| Adam {
            config: o.config,
            t: o.t,
            m,
            v,
        });
        Ok(Checkpoint {
            network,
            meta: header.meta,
            optimizer,
        })
    }
}
