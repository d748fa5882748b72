//! Binary parameter files with a JSON sidecar.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "CMLPNET\0"
//! version      u32      1
//! n_sizes      u32
//! sizes        n_sizes x u32
//! activation   u8       0 relu, 1 tanh
//! n_params     u64
//! params       n_params x f64
//! ```
//!
//! The sidecar (`<file>.json`) repeats the architecture and records
//! optimizer metadata.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Activation, MlpNetwork, NeuralError, Optimizer};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CMLPNET\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkMeta {
    pub format_version: u32,
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub n_params: usize,
    pub optimizer: Option<Optimizer>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_network(path: &Path, net: &MlpNetwork, optimizer: Option<&Optimizer>) -> Result<(), NeuralError> {
    let mut buf = Vec::with_capacity(32 + 8 * net.n_params());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(net.sizes().len() as u32).to_le_bytes());
    for &s in net.sizes() {
        buf.extend_from_slice(&(s as u32).to_le_bytes());
    }
    buf.push(net.activation().code());
    buf.extend_from_slice(&(net.n_params() as u64).to_le_bytes());
    for p in net.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&buf)?;

    let meta = NetworkMeta {
        format_version: VERSION,
        layer_sizes: net.sizes().to_vec(),
        activation: net.activation(),
        n_params: net.n_params(),
        optimizer: optimizer.cloned(),
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NeuralError> {
        if self.bytes.len() < n {
            return Err(NeuralError::Checkpoint("truncated file".into()));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, NeuralError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, NeuralError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Reads the binary file; the sidecar is not needed to restore weights.
pub fn read_network(path: &Path) -> Result<MlpNetwork, NeuralError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut c = Cursor { bytes: &bytes };
    if c.take(8)? != CHECKPOINT_MAGIC {
        return Err(NeuralError::Checkpoint("bad magic bytes".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(NeuralError::Checkpoint(format!("unsupported version {version}")));
    }
    let n = c.u32()? as usize;
    if n > 64 {
        return Err(NeuralError::Checkpoint(format!("implausible layer count {n}")));
    }
    let sizes = (0..n).map(|_| c.u32().map(|s| s as usize)).collect::<Result<Vec<_>, _>>()?;
    let act = Activation::from_code(c.take(1)?[0])
        .ok_or_else(|| NeuralError::Checkpoint("unknown activation code".into()))?;
    let n_params = c.u64()? as usize;
    let raw = c.take(n_params.checked_mul(8).ok_or_else(|| NeuralError::Checkpoint("overflow".into()))?)?;
    if !c.bytes.is_empty() {
        return Err(NeuralError::Checkpoint("trailing bytes".into()));
    }
    let params = raw
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    MlpNetwork::from_parts(sizes, act, params)
}
