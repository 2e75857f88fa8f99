//! Single-file checkpoints holding parameters, optimiser moments and the run config.
//!
//! Layout: the 8-byte magic `MADNCKPT`, a `u32` format version, a `u64`
//! header length, the JSON header, then raw little-endian `f32` payload. For
//! each network in [`Net::ALL`] order the payload holds its parameter values,
//! then the Adam first moments, then the second moments. Loading recomputes
//! the architecture hash and a payload checksum.

use std::fs;
use std::path::{Path, PathBuf};

use madn_core::model::{ArchConfig, ModelBundle, Net};
use madn_core::nn::{Adam, AdamState, ParamSet, Tensor};
use madn_core::training::Trainer;
use serde::{Deserialize, Serialize};

use crate::config::{LnccSection, TrainConfig};
use crate::error::{Error, IoContext, Result};

pub const MAGIC: &[u8; 8] = b"MADNCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetEntry {
    pub name: String,
    pub params: Vec<TensorEntry>,
    pub adam_step: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub mode: String,
    pub n_channels: usize,
    /// Hex FNV-1a hash of the mode and layer list.
    pub architecture_hash: String,
    pub step: u64,
    pub train: TrainConfig,
    pub lncc: LnccSection,
    /// Validation similarity of the untrained model, when the mode has one.
    pub val_sim_initial: Option<f64>,
    pub nets: Vec<NetEntry>,
    /// Hex FNV-1a hash of the payload bytes.
    pub payload_hash: String,
}

/// Training state restored from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: Header,
    pub trainer: Trainer,
}

pub fn file_name(step: u64) -> String {
    format!("checkpoint_{step:06}.ckpt")
}

fn fnv(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

fn push_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn save(path: &Path, trainer: &Trainer, train: &TrainConfig, lncc: &LnccSection, val_sim_initial: Option<f64>) -> Result<()> {
    let m = &trainer.model;
    let mut payload = Vec::with_capacity(m.n_values() * 12);
    let mut nets = Vec::with_capacity(Net::ALL.len());
    for net in Net::ALL {
        let set = m.params(net);
        let adam = &trainer.optimizers[net.index()];
        for (_, t) in set.iter() {
            push_f32s(&mut payload, &t.data);
        }
        push_f32s(&mut payload, &adam.state.m);
        push_f32s(&mut payload, &adam.state.v);
        nets.push(NetEntry {
            name: net.name().into(),
            params: set
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.into(),
                    shape: t.shape,
                })
                .collect(),
            adam_step: adam.state.step,
        });
    }
    let mut train = train.clone();
    train.mode = m.mode().as_str().into();
    train.arch = (*m.arch()).into();
    let header = Header {
        mode: m.mode().as_str().into(),
        n_channels: m.n_channels(),
        architecture_hash: format!("{:016x}", m.architecture_hash()),
        step: trainer.step,
        train,
        lncc: *lncc,
        val_sim_initial,
        nets,
        payload_hash: format!("{:016x}", fnv(&payload)),
    };
    let json = serde_json::to_vec(&header).at(path)?;
    let mut bytes = Vec::with_capacity(20 + json.len() + payload.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    bytes.extend_from_slice(&payload);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).at(parent)?;
    }
    // write-then-rename so an interrupted save never leaves a truncated checkpoint
    let tmp = path.with_extension("ckpt.tmp");
    fs::write(&tmp, &bytes).at(&tmp)?;
    fs::rename(&tmp, path).at(path)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format(format!("{}: truncated checkpoint", self.path.display())));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self
            .take(n * 4)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect())
    }
}

pub fn read_header(path: &Path) -> Result<Header> {
    Ok(parse(path, &fs::read(path).at(path)?)?.0)
}

fn parse<'a>(path: &'a Path, bytes: &'a [u8]) -> Result<(Header, Reader<'a>)> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(8)? != MAGIC {
        return Err(Error::Format(format!("{}: not a checkpoint file", path.display())));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Format(format!("{}: checkpoint version {version} (expected {VERSION})", path.display())));
    }
    let len = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")) as usize;
    let header: Header = serde_json::from_slice(r.take(len)?).at(path)?;
    Ok((header, r))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).at(path)?;
    let (header, mut r) = parse(path, &bytes)?;
    let bad = |msg: String| Error::Format(format!("{}: {msg}", path.display()));
    if format!("{:016x}", fnv(&bytes[r.pos..])) != header.payload_hash {
        return Err(bad("payload checksum mismatch".into()));
    }
    let mode = header.train.mode()?;
    if mode.as_str() != header.mode || mode.n_channels() != header.n_channels {
        return Err(bad("inconsistent mode metadata".into()));
    }
    if header.nets.len() != Net::ALL.len() {
        return Err(bad(format!("{} networks (expected {})", header.nets.len(), Net::ALL.len())));
    }
    let step_config = header.train.step_config(&header.lncc);
    let mut sets = Vec::with_capacity(Net::ALL.len());
    let mut optimizers = Vec::with_capacity(Net::ALL.len());
    for (net, entry) in Net::ALL.iter().zip(&header.nets) {
        if entry.name != net.name() {
            return Err(bad(format!("network {} where {} was expected", entry.name, net.name())));
        }
        let mut set = ParamSet::new();
        for t in &entry.params {
            let n = t.shape.iter().product();
            set.push(t.name.clone(), Tensor::from_vec(t.shape, r.f32s(n)?));
        }
        let n = set.n_values();
        let state = AdamState {
            step: entry.adam_step,
            m: r.f32s(n)?,
            v: r.f32s(n)?,
        };
        optimizers.push(Adam {
            config: step_config.adam(),
            state,
        });
        sets.push(set);
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes after payload".into()));
    }
    let model = ModelBundle::from_params(mode, ArchConfig::from(header.train.arch), sets)?;
    if format!("{:016x}", model.architecture_hash()) != header.architecture_hash {
        return Err(bad("architecture hash mismatch".into()));
    }
    let trainer = Trainer {
        model,
        optimizers,
        step: header.step,
        config: step_config,
    };
    Ok(Checkpoint { header, trainer })
}

/// Checkpoints in `dir` sorted by step.
pub fn list(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    for entry in fs::read_dir(dir).at(dir)? {
        let p = entry.at(dir)?.path();
        let step = p
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("checkpoint_")?.strip_suffix(".ckpt")?.parse().ok());
        if let Some(s) = step {
            out.push((s, p));
        }
    }
    out.sort();
    Ok(out)
}
