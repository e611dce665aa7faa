//! Versioned weight snapshots.
//!
//! Binary layout:
//!
//! ```text
//! magic     4 bytes  "DLWS"
//! version   u32 LE
//! hdr_len   u64 LE
//! header    hdr_len bytes of JSON {format_version, architecture, seed, value_count}
//! values    value_count x f64 LE, nets in architecture order, per layer
//!           weights row-major then biases
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dense::{DenseNet, LayerSpec};
use super::regressor::{Autoencoder, MultiHeadRegressor};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"DLWS";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDescriptor {
    pub name: String,
    pub seed: u64,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSnapshot {
    pub format_version: u32,
    pub architecture: Vec<NetDescriptor>,
    pub seed: u64,
    pub values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    architecture: Vec<NetDescriptor>,
    seed: u64,
    value_count: usize,
}

impl WeightSnapshot {
    fn from_nets<'a>(seed: u64, nets: impl IntoIterator<Item = (String, &'a DenseNet)>) -> Self {
        let mut architecture = Vec::new();
        let mut values = Vec::new();
        for (name, net) in nets {
            architecture.push(NetDescriptor {
                name,
                seed: net.seed(),
                layers: net.layers().to_vec(),
            });
            values.extend_from_slice(net.params());
        }
        Self {
            format_version: FORMAT_VERSION,
            architecture,
            seed,
            values,
        }
    }

    fn net_slices(&self) -> Result<Vec<(&NetDescriptor, &[f64])>> {
        let mut out = Vec::with_capacity(self.architecture.len());
        let mut offset = 0;
        for desc in &self.architecture {
            let len: usize = desc.layers.iter().map(LayerSpec::param_count).sum();
            let slice = self.values.get(offset..offset + len).ok_or_else(|| {
                Error::IncompatibleSnapshot("value count shorter than architecture".into())
            })?;
            out.push((desc, slice));
            offset += len;
        }
        if offset != self.values.len() {
            return Err(Error::IncompatibleSnapshot(
                "value count longer than architecture".into(),
            ));
        }
        Ok(out)
    }

    /// Exact equality of every stored value, including NaN payloads and signed zeros.
    pub fn bitwise_eq(&self, other: &WeightSnapshot) -> bool {
        self.architecture == other.architecture
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&Header {
            format_version: self.format_version,
            architecture: self.architecture.clone(),
            seed: self.seed,
            value_count: self.values.len(),
        })?;
        let mut out = Vec::with_capacity(16 + header.len() + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.format_version.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let mut magic = [0u8; 4];
        cursor.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a weight snapshot (bad magic)".into()));
        }
        let mut u32_buf = [0u8; 4];
        cursor.read_exact(&mut u32_buf)?;
        let version = u32::from_le_bytes(u32_buf);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported snapshot format version {version}"
            )));
        }
        let mut u64_buf = [0u8; 8];
        cursor.read_exact(&mut u64_buf)?;
        let header_len = u64::from_le_bytes(u64_buf) as usize;
        if cursor.len() < header_len {
            return Err(Error::Format("truncated snapshot header".into()));
        }
        let header: Header = serde_json::from_slice(&cursor[..header_len])?;
        cursor = &cursor[header_len..];
        if cursor.len() != header.value_count * 8 {
            return Err(Error::Format(format!(
                "expected {} values, found {} bytes",
                header.value_count,
                cursor.len()
            )));
        }
        let values = cursor
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let snapshot = Self {
            format_version: header.format_version,
            architecture: header.architecture,
            seed: header.seed,
            values,
        };
        snapshot.net_slices()?;
        Ok(snapshot)
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Models whose weights can be captured and restored.
pub trait Snapshot {
    fn snapshot(&self) -> WeightSnapshot;

    /// Restores weights; the snapshot's architecture must match exactly.
    fn restore(&mut self, snapshot: &WeightSnapshot) -> Result<()>;
}

fn check_architecture(expected: &WeightSnapshot, given: &WeightSnapshot) -> Result<()> {
    if expected.architecture.len() != given.architecture.len() {
        return Err(Error::IncompatibleSnapshot(format!(
            "snapshot holds {} networks, model has {}",
            given.architecture.len(),
            expected.architecture.len()
        )));
    }
    for (a, b) in expected.architecture.iter().zip(&given.architecture) {
        if a.name != b.name || a.layers != b.layers {
            return Err(Error::IncompatibleSnapshot(format!(
                "network `{}` does not match snapshot network `{}`",
                a.name, b.name
            )));
        }
    }
    given.net_slices().map(|_| ())
}

impl Snapshot for DenseNet {
    fn snapshot(&self) -> WeightSnapshot {
        WeightSnapshot::from_nets(self.seed(), [("net".to_string(), self)])
    }

    fn restore(&mut self, snapshot: &WeightSnapshot) -> Result<()> {
        check_architecture(&self.snapshot(), snapshot)?;
        self.set_params(&snapshot.values)
    }
}

impl Snapshot for Autoencoder {
    fn snapshot(&self) -> WeightSnapshot {
        WeightSnapshot::from_nets(
            self.encoder.seed(),
            [
                ("encoder".to_string(), &self.encoder),
                ("decoder".to_string(), &self.decoder),
            ],
        )
    }

    fn restore(&mut self, snapshot: &WeightSnapshot) -> Result<()> {
        check_architecture(&self.snapshot(), snapshot)?;
        let slices = snapshot.net_slices()?;
        self.encoder.set_params(slices[0].1)?;
        self.decoder.set_params(slices[1].1)
    }
}

impl Snapshot for MultiHeadRegressor {
    fn snapshot(&self) -> WeightSnapshot {
        let nets = [
            ("encoder".to_string(), &self.shared.encoder),
            ("decoder".to_string(), &self.shared.decoder),
        ]
        .into_iter()
        .chain(
            self.heads()
                .iter()
                .map(|(name, net)| (format!("head:{name}"), net)),
        );
        WeightSnapshot::from_nets(self.shared.encoder.seed(), nets)
    }

    fn restore(&mut self, snapshot: &WeightSnapshot) -> Result<()> {
        check_architecture(&self.snapshot(), snapshot)?;
        let slices = snapshot.net_slices()?;
        self.shared.encoder.set_params(slices[0].1)?;
        self.shared.decoder.set_params(slices[1].1)?;
        for (desc, values) in &slices[2..] {
            let name = desc.name.trim_start_matches("head:");
            self.head_mut(name)?.set_params(values)?;
        }
        Ok(())
    }
}

impl MultiHeadRegressor {
    /// Rebuilds a regressor of whatever architecture the snapshot describes.
    pub fn from_snapshot(snapshot: &WeightSnapshot) -> Result<Self> {
        let slices = snapshot.net_slices()?;
        let mut nets = slices.into_iter();
        let mut next = |expected: &str| -> Result<DenseNet> {
            let (desc, values) = nets.next().ok_or_else(|| {
                Error::IncompatibleSnapshot(format!("missing `{expected}` network"))
            })?;
            if desc.name != expected {
                return Err(Error::IncompatibleSnapshot(format!(
                    "expected `{expected}`, found `{}`",
                    desc.name
                )));
            }
            DenseNet::from_parts(desc.layers.clone(), values.to_vec(), desc.seed)
        };
        let encoder = next("encoder")?;
        let decoder = next("decoder")?;
        let mut reg = MultiHeadRegressor::new(Autoencoder::from_parts(encoder, decoder)?);
        for (desc, values) in nets {
            let name = desc.name.strip_prefix("head:").ok_or_else(|| {
                Error::IncompatibleSnapshot(format!("unexpected network `{}`", desc.name))
            })?;
            let head = DenseNet::from_parts(desc.layers.clone(), values.to_vec(), desc.seed)?;
            if head.input_width() != reg.latent_dim() || head.output_width() != 1 {
                return Err(Error::IncompatibleSnapshot(format!(
                    "head `{name}` does not fit the latent dimension"
                )));
            }
            reg.insert_head(name, head);
        }
        Ok(reg)
    }
}
