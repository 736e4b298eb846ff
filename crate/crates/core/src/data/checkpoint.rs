//! Checkpoint files.
//!
//! Layout: the 8-byte magic `IGCCKPT1`, the header length as a little-endian
//! `u32`, the SHA-256 of the header, the JSON header, then every tensor's
//! little-endian values back to back in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::dataset::Normalization;
use crate::error::{Error, Result};
use crate::net::{build_network, ArchSpec, Network};
use crate::tensor::{Precision, Scalar};

pub const MAGIC: &[u8; 8] = b"IGCCKPT1";
pub const VERSION: u32 = 1;
const PREFIX: usize = 8 + 4 + 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub version: u32,
    pub arch: ArchSpec,
    pub arch_hash: String,
    pub precision: Precision,
    pub normalization: Option<Normalization>,
    pub tensors: Vec<TensorEntry>,
}

fn manifest<T: Scalar>(net: &mut Network<T>) -> (Vec<TensorEntry>, usize) {
    let mut offset = 0;
    let entries = net
        .tensors_mut()
        .into_iter()
        .map(|p| {
            let e = TensorEntry {
                name: p.name,
                shape: p.shape,
                offset: offset as u64,
            };
            offset += p.data.len() * T::PRECISION.byte_width();
            e
        })
        .collect();
    (entries, offset)
}

pub fn checkpoint_bytes<T: Scalar>(
    net: &Network<T>,
    normalization: Option<&Normalization>,
) -> Vec<u8> {
    let mut net = net.clone();
    let (tensors, blob_len) = manifest(&mut net);
    let header = CheckpointHeader {
        version: VERSION,
        arch: net.arch.clone(),
        arch_hash: net.arch.hash(),
        precision: T::PRECISION,
        normalization: normalization.cloned(),
        tensors,
    };
    let json = serde_json::to_vec(&header).expect("plain data");
    let mut out = Vec::with_capacity(PREFIX + json.len() + blob_len);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&Sha256::digest(&json));
    out.extend_from_slice(&json);
    for p in net.tensors_mut() {
        for &v in p.data.iter() {
            v.write_le(&mut out);
        }
    }
    out
}

pub fn save_checkpoint<T: Scalar>(
    net: &Network<T>,
    normalization: Option<&Normalization>,
    path: &Path,
) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(net, normalization))?;
    Ok(())
}

fn incompatible(msg: impl Into<String>) -> Error {
    Error::Incompatible(msg.into())
}

/// Validates the prefix and header; returns the header and blob start.
fn parse_header(bytes: &[u8]) -> Result<(CheckpointHeader, usize)> {
    if bytes.len() < PREFIX || &bytes[..8] != MAGIC {
        return Err(incompatible("missing IGCCKPT1 magic"));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let end = PREFIX
        .checked_add(len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| incompatible(format!("header length {len} exceeds the file")))?;
    let json = &bytes[PREFIX..end];
    if Sha256::digest(json).as_slice() != &bytes[12..PREFIX] {
        return Err(incompatible("header checksum mismatch"));
    }
    let header: CheckpointHeader = serde_json::from_slice(json)
        .map_err(|e| incompatible(format!("unreadable header: {e}")))?;
    if header.version != VERSION {
        return Err(incompatible(format!(
            "unsupported version {}",
            header.version
        )));
    }
    if header.arch.hash() != header.arch_hash {
        return Err(incompatible("architecture hash mismatch"));
    }
    Ok((header, end))
}

pub fn read_checkpoint_header(path: &Path) -> Result<CheckpointHeader> {
    Ok(parse_header(&std::fs::read(path)?)?.0)
}

pub fn checkpoint_from_bytes<T: Scalar>(
    bytes: &[u8],
    path: &Path,
) -> Result<(Network<T>, Option<Normalization>)> {
    let (header, start) = parse_header(bytes)?;
    if header.precision != T::PRECISION {
        return Err(incompatible(format!(
            "checkpoint holds {:?} values, {:?} requested",
            header.precision,
            T::PRECISION
        )));
    }
    let mut net = build_network::<T>(&header.arch, 0).map_err(|e| incompatible(e.to_string()))?;
    let (expected, blob_len) = manifest(&mut net);
    if expected != header.tensors {
        return Err(incompatible(
            "tensor manifest does not match the architecture",
        ));
    }
    let blob = &bytes[start..];
    if blob.len() != blob_len {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: (start + blob.len().min(blob_len)) as u64,
            msg: format!("tensor data is {} bytes, expected {blob_len}", blob.len()),
        });
    }
    let width = T::PRECISION.byte_width();
    let mut chunks = blob.chunks_exact(width);
    for p in net.tensors_mut() {
        for v in p.data.iter_mut() {
            *v = T::read_le(chunks.next().expect("length checked"));
        }
    }
    Ok((net, header.normalization))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(Network<T>, Option<Normalization>)> {
    checkpoint_from_bytes(&std::fs::read(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use crate::tensor::Tensor;

    fn net() -> Network<f32> {
        build_network(&ArchSpec::igc(2, 2, 2).with_identity_mappings(true), 11).unwrap()
    }

    fn norm() -> Normalization {
        Normalization {
            mean: vec![0.1, 0.2, 0.30000000000000004],
            std: vec![1.5, 0.25, 1e-3],
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let net = net();
        save_checkpoint(&net, Some(&norm()), &path).unwrap();
        let (back, n) = load_checkpoint::<f32>(&path).unwrap();
        assert_eq!(back, net);
        assert_eq!(n, Some(norm()));
        let again = dir.path().join("b.ckpt");
        save_checkpoint(&back, n.as_ref(), &again).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&again).unwrap()
        );
        let mut rng = CounterRng::new(1);
        let x = Tensor::from_fn([2, 3, 8, 8], |_| rng.normal() as f32);
        assert_eq!(net.logits(&x).unwrap(), back.logits(&x).unwrap());
    }

    #[test]
    fn double_precision_uses_eight_bytes() {
        let net: Network<f64> = build_network(&ArchSpec::regconv(4, 1), 1).unwrap();
        let bytes = checkpoint_bytes(&net, None);
        let single = checkpoint_bytes(
            &build_network::<f32>(&ArchSpec::regconv(4, 1), 1).unwrap(),
            None,
        );
        let count = net
            .clone()
            .tensors_mut()
            .iter()
            .map(|p| p.data.len())
            .sum::<usize>();
        let (_, s1) = parse_header(&bytes).unwrap();
        let (_, s2) = parse_header(&single).unwrap();
        assert_eq!(bytes.len() - s1, 8 * count);
        assert_eq!(single.len() - s2, 4 * count);
        assert!(matches!(
            checkpoint_from_bytes::<f32>(&bytes, Path::new("x")),
            Err(Error::Incompatible(_))
        ));
    }

    #[test]
    fn every_corrupted_header_byte_is_rejected() {
        let bytes = checkpoint_bytes(&net(), Some(&norm()));
        let (_, start) = parse_header(&bytes).unwrap();
        for i in (0..start).step_by(7).chain([0, 8, 12, start - 1]) {
            let mut bad = bytes.clone();
            bad[i] ^= 0x20;
            match checkpoint_from_bytes::<f32>(&bad, Path::new("x")) {
                Err(Error::Incompatible(_)) => {}
                other => panic!("byte {i}: {:?}", other.map(|_| ())),
            }
        }
    }

    #[test]
    fn truncated_blob_is_a_format_error() {
        let bytes = checkpoint_bytes(&net(), None);
        assert!(matches!(
            checkpoint_from_bytes::<f32>(&bytes[..bytes.len() - 3], Path::new("x")),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn header_is_readable_alone() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        save_checkpoint(&net(), None, &path).unwrap();
        let h = read_checkpoint_header(&path).unwrap();
        assert_eq!(h.precision, Precision::Single);
        assert_eq!(h.arch, net().arch);
        assert!(h.tensors.iter().any(|t| t.name == "fc.weight"));
    }
}
