//! Flat little-endian `f64` tensor blobs with a JSON shape manifest.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dense, Network, NetworkSpec, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the blob, in elements.
    pub offset: usize,
}

impl TensorEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Collects named tensors into one contiguous blob.
#[derive(Debug, Default)]
pub struct BlobWriter {
    data: Vec<u8>,
    entries: Vec<TensorEntry>,
    elements: usize,
}

impl BlobWriter {
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, values: &[f64]) {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.entries.push(TensorEntry {
            name: name.into(),
            shape,
            offset: self.elements,
        });
        self.elements += values.len();
        for v in values {
            self.data.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn push_network(&mut self, prefix: &str, net: &Network) {
        for (i, d) in net.params.layers().iter().enumerate() {
            let (r, c) = d.weight.dim();
            self.push(
                format!("{prefix}.{i}.weight"),
                vec![r, c],
                d.weight.as_slice().expect("standard layout"),
            );
            self.push(
                format!("{prefix}.{i}.bias"),
                vec![c],
                d.bias.as_slice().expect("standard layout"),
            );
        }
    }

    /// Write the blob and return its manifest entries.
    pub fn finish(self, path: &Path) -> Result<Vec<TensorEntry>> {
        std::fs::write(path, &self.data)?;
        Ok(self.entries)
    }
}

/// Random access to a blob through its manifest.
#[derive(Debug)]
pub struct BlobReader {
    values: Vec<f64>,
    entries: Vec<TensorEntry>,
}

impl BlobReader {
    pub fn open(path: &Path, entries: Vec<TensorEntry>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.len() % 8 != 0 {
            return Err(Error::InvalidParameter(format!(
                "blob length {} is not a multiple of 8",
                bytes.len()
            )));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        for e in &entries {
            if e.offset + e.len() > values.len() {
                return Err(Error::OutOfRange {
                    context: "tensor extent",
                    index: e.offset + e.len(),
                    limit: values.len(),
                });
            }
        }
        Ok(Self { values, entries })
    }

    pub fn get(&self, name: &str) -> Result<(&[usize], &[f64])> {
        let e = self
            .entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::InvalidParameter(format!("tensor '{name}' missing from manifest")))?;
        Ok((&e.shape, &self.values[e.offset..e.offset + e.len()]))
    }

    pub fn network(&self, prefix: &str, spec: &NetworkSpec) -> Result<Network> {
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (i, (fan_in, fan_out)) in spec.shapes().into_iter().enumerate() {
            let (ws, w) = self.get(&format!("{prefix}.{i}.weight"))?;
            let (bs, b) = self.get(&format!("{prefix}.{i}.bias"))?;
            if ws != [fan_in, fan_out] || bs != [fan_out] {
                return Err(Error::InvalidParameter(format!(
                    "tensor shapes of {prefix}.{i} do not match spec"
                )));
            }
            layers.push(Dense {
                weight: ndarray::Array2::from_shape_vec((fan_in, fan_out), w.to_vec()).expect("checked shape"),
                bias: ndarray::Array1::from_vec(b.to_vec()),
            });
        }
        Ok(Network {
            spec: spec.clone(),
            params: ParamStore::from_layers(spec, layers)?,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkManifest {
    spec: NetworkSpec,
    format: String,
    tensors: Vec<TensorEntry>,
}

pub const BLOB_FORMAT: &str = "f64-le";

impl Network {
    /// Write `<stem>.json` and `<stem>.bin` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = BlobWriter::default();
        w.push_network("net", self);
        let tensors = w.finish(&dir.join(format!("{stem}.bin")))?;
        let manifest = NetworkManifest {
            spec: self.spec.clone(),
            format: BLOB_FORMAT.into(),
            tensors,
        };
        std::fs::write(
            dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let manifest: NetworkManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        if manifest.format != BLOB_FORMAT {
            return Err(Error::InvalidParameter(format!(
                "unknown blob format '{}'",
                manifest.format
            )));
        }
        let reader = BlobReader::open(&dir.join(format!("{stem}.bin")), manifest.tensors)?;
        reader.network("net", &manifest.spec)
    }
}
