//! Raw little-endian image files with JSON sidecars.
//!
//! An image `stem` is stored as `stem.raw` (row-major, channel-major for
//! multi-channel slices) and `stem.json`. Float images use `f32le`; masks and
//! label maps use `u8`.

use std::fs;
use std::path::{Path, PathBuf};

use madn_core::{Domain, Grid, Mask, Modality, MultimodalSlice};
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

pub const DTYPE_F32: &str = "f32le";
pub const DTYPE_U8: &str = "u8";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// `"clean"` / `"corrupted"` for images, `"mask"` / `"labels"` for u8 maps.
    pub domain: String,
    pub modality_order: Vec<String>,
    pub seed: u64,
    pub dtype: String,
}

pub fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).at(path)?;
    fs::write(path, text + "\n").at(path)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).at(path)?;
    serde_json::from_str(&text).at(path)
}

fn write_raw(stem: &Path, sidecar: &Sidecar, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = stem.parent() {
        fs::create_dir_all(parent).at(parent)?;
    }
    let raw = with_ext(stem, "raw");
    fs::write(&raw, bytes).at(&raw)?;
    write_json(&with_ext(stem, "json"), sidecar)
}

fn read_raw(stem: &Path, dtype: &str) -> Result<(Sidecar, Vec<u8>)> {
    let sidecar: Sidecar = read_json(&with_ext(stem, "json"))?;
    if sidecar.dtype != dtype {
        return Err(Error::Format(format!("{}: dtype {} (expected {dtype})", stem.display(), sidecar.dtype)));
    }
    let raw = with_ext(stem, "raw");
    let bytes = fs::read(&raw).at(&raw)?;
    let elem = if dtype == DTYPE_F32 { 4 } else { 1 };
    let want = sidecar.width * sidecar.height * sidecar.channels * elem;
    if bytes.len() != want {
        return Err(Error::Format(format!("{}: {} bytes, sidecar implies {want}", raw.display(), bytes.len())));
    }
    Ok((sidecar, bytes))
}

/// Writes every channel of `slice` as `f32`.
pub fn write_slice(stem: &Path, slice: &MultimodalSlice, seed: u64) -> Result<()> {
    let sidecar = Sidecar {
        width: slice.width(),
        height: slice.height(),
        channels: slice.n_channels(),
        domain: slice.domain.as_str().into(),
        modality_order: slice.modalities().iter().map(|m| m.as_str().into()).collect(),
        seed,
        dtype: DTYPE_F32.into(),
    };
    let mut bytes = Vec::with_capacity(sidecar.width * sidecar.height * sidecar.channels * 4);
    for ch in slice.channels() {
        for v in ch.iter() {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    write_raw(stem, &sidecar, &bytes)
}

pub fn read_slice(stem: &Path) -> Result<(MultimodalSlice, Sidecar)> {
    let (sidecar, bytes) = read_raw(stem, DTYPE_F32)?;
    let domain = Domain::parse(&sidecar.domain)
        .ok_or_else(|| Error::Format(format!("{}: unknown domain {:?}", stem.display(), sidecar.domain)))?;
    let modalities = sidecar
        .modality_order
        .iter()
        .map(|m| Modality::parse(m).ok_or_else(|| Error::Format(format!("{}: unknown modality {m:?}", stem.display()))))
        .collect::<Result<Vec<_>>>()?;
    if modalities.len() != sidecar.channels {
        return Err(Error::Format(format!("{}: modality_order does not match channels", stem.display())));
    }
    let plane = sidecar.width * sidecar.height;
    let channels = (0..sidecar.channels)
        .map(|c| {
            let data = bytes[c * plane * 4..(c + 1) * plane * 4]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect();
            Grid::from_vec(sidecar.width, sidecar.height, data)
        })
        .collect::<madn_core::Result<Vec<_>>>()?;
    let slice = MultimodalSlice::from_channels(domain, modalities, channels)?;
    Ok((slice, sidecar))
}

fn write_u8(stem: &Path, kind: &str, w: usize, h: usize, data: Vec<u8>, seed: u64) -> Result<()> {
    let sidecar = Sidecar {
        width: w,
        height: h,
        channels: 1,
        domain: kind.into(),
        modality_order: Vec::new(),
        seed,
        dtype: DTYPE_U8.into(),
    };
    write_raw(stem, &sidecar, &data)
}

pub fn write_mask(stem: &Path, mask: &Mask, seed: u64) -> Result<()> {
    let data = mask.iter().map(|b| *b as u8).collect();
    write_u8(stem, "mask", mask.width(), mask.height(), data, seed)
}

pub fn read_mask(stem: &Path) -> Result<Mask> {
    let (s, bytes) = read_raw(stem, DTYPE_U8)?;
    if bytes.iter().any(|b| *b > 1) {
        return Err(Error::Format(format!("{}: mask values must be 0 or 1", stem.display())));
    }
    Ok(Grid::from_vec(s.width, s.height, bytes.into_iter().map(|b| b == 1).collect())?)
}

pub fn write_labels(stem: &Path, labels: &Grid<u8>, seed: u64) -> Result<()> {
    write_u8(stem, "labels", labels.width(), labels.height(), labels.as_slice().to_vec(), seed)
}

pub fn read_labels(stem: &Path) -> Result<Grid<u8>> {
    let (s, bytes) = read_raw(stem, DTYPE_U8)?;
    Ok(Grid::from_vec(s.width, s.height, bytes)?)
}
