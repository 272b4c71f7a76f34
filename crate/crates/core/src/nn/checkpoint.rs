//! Versioned binary parameter container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! 0      8 bytes   magic "UDRQNCK\0"
//! 8      u32       format version (currently 1)
//! 12     u32       header length H in bytes
//! 16     H bytes   UTF-8 JSON header (architecture, init scheme, seed,
//!                  section names, free-form metadata)
//! 16+H   sections  one per name in `header.sections`; each holds every
//!                  layer in declaration order as weights then biases,
//!                  as 32-bit IEEE-754 floats
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Architecture, InitScheme, Network, NnError};

pub const MAGIC: &[u8; 8] = b"UDRQNCK\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (this build reads version {FORMAT_VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("malformed header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("invalid architecture in header: {0}")]
    Architecture(#[from] NnError),
    #[error("section count mismatch: header names {named}, got {given}")]
    SectionCount { named: usize, given: usize },
    #[error("section {section} has {len} values, architecture needs {expected}")]
    SectionLength { section: String, len: usize, expected: usize },
    #[error("non-finite value in section {section} at index {index}")]
    NonFinite { section: String, index: usize },
    #[error("trailing bytes after last section")]
    TrailingData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub architecture: Architecture,
    pub init: InitScheme,
    pub seed: u64,
    pub sections: Vec<String>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub sections: Vec<Vec<f32>>,
}

impl Checkpoint {
    pub fn section(&self, name: &str) -> Option<&[f32]> {
        self.header
            .sections
            .iter()
            .position(|s| s == name)
            .map(|i| self.sections[i].as_slice())
    }

    pub fn network(&self, section: &str) -> Option<Result<Network<f32>, NnError>> {
        self.section(section)
            .map(|p| Network::from_params(self.header.architecture.clone(), p.to_vec()))
    }
}

fn param_count(arch: &Architecture) -> Result<usize, NnError> {
    Ok(Network::<f32>::zeros(arch.clone())?.num_params())
}

pub fn write<W: Write>(
    mut out: W,
    header: &CheckpointHeader,
    sections: &[&[f32]],
) -> Result<(), CheckpointError> {
    if header.sections.len() != sections.len() {
        return Err(CheckpointError::SectionCount {
            named: header.sections.len(),
            given: sections.len(),
        });
    }
    let expected = param_count(&header.architecture)?;
    for (name, values) in header.sections.iter().zip(sections) {
        if values.len() != expected {
            return Err(CheckpointError::SectionLength {
                section: name.clone(),
                len: values.len(),
                expected,
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(CheckpointError::NonFinite {
                section: name.clone(),
                index,
            });
        }
    }
    let json = serde_json::to_vec(header)?;
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u32).to_le_bytes())?;
    out.write_all(&json)?;
    let mut buf = Vec::with_capacity(expected * 4);
    for values in sections {
        buf.clear();
        for v in values.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read<R: Read>(mut input: R) -> Result<Checkpoint, CheckpointError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let found = u32::from_le_bytes(word);
    if found != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion { found });
    }
    input.read_exact(&mut word)?;
    let mut json = vec![0u8; u32::from_le_bytes(word) as usize];
    input.read_exact(&mut json)?;
    let header: CheckpointHeader = serde_json::from_slice(&json)?;
    let expected = param_count(&header.architecture)?;
    let mut sections = Vec::with_capacity(header.sections.len());
    let mut raw = vec![0u8; expected * 4];
    for name in &header.sections {
        input.read_exact(&mut raw)?;
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(CheckpointError::NonFinite {
                section: name.clone(),
                index,
            });
        }
        sections.push(values);
    }
    if input.read(&mut [0u8; 1])? != 0 {
        return Err(CheckpointError::TrailingData);
    }
    Ok(Checkpoint { header, sections })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, LayerSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn arch() -> Architecture {
        Architecture {
            input: (4, 3, 2),
            aux_dim: 2,
            aux_layer: Some(1),
            layers: vec![
                LayerSpec::conv((2, 2), (2, 1), 3),
                LayerSpec::lstm(4),
                LayerSpec::dense(2, Activation::Identity),
            ],
        }
    }

    fn header(sections: &[&str]) -> CheckpointHeader {
        CheckpointHeader {
            architecture: arch(),
            init: InitScheme::HeUniformLstmForgetOne,
            seed: 17,
            sections: sections.iter().map(|s| s.to_string()).collect(),
            metadata: serde_json::json!({"episodes": 3}),
        }
    }

    #[test]
    fn round_trip_preserves_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let net = Network::<f32>::init(arch(), &mut rng).unwrap();
        let other: Vec<f32> = net.params().iter().map(|v| v * 0.5).collect();
        let mut bytes = Vec::new();
        write(&mut bytes, &header(&["main", "target"]), &[net.params(), &other]).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        let ck = read(bytes.as_slice()).unwrap();
        assert_eq!(ck.header, header(&["main", "target"]));
        assert_eq!(ck.section("main").unwrap(), net.params());
        assert_eq!(ck.section("target").unwrap(), other.as_slice());
        assert_eq!(ck.network("main").unwrap().unwrap().params(), net.params());
    }

    #[test]
    fn payload_is_little_endian_layer_order() {
        let net = Network::<f32>::zeros(arch()).unwrap();
        let mut params = net.params().to_vec();
        params[0] = 1.0;
        let last = params.len() - 1;
        params[last] = -2.0;
        let mut bytes = Vec::new();
        write(&mut bytes, &header(&["main"]), &[&params]).unwrap();
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let payload = &bytes[16 + hlen..];
        assert_eq!(payload.len(), params.len() * 4);
        assert_eq!(&payload[..4], &1.0f32.to_le_bytes());
        assert_eq!(&payload[payload.len() - 4..], &(-2.0f32).to_le_bytes());
    }

    #[test]
    fn rejects_non_finite_on_write() {
        let mut params = Network::<f32>::zeros(arch()).unwrap().params().to_vec();
        params[5] = f32::INFINITY;
        let err = write(Vec::new(), &header(&["main"]), &[&params]).unwrap_err();
        assert!(matches!(err, CheckpointError::NonFinite { index: 5, .. }));
    }

    #[test]
    fn rejects_wrong_version_and_magic() {
        let params = Network::<f32>::zeros(arch()).unwrap().params().to_vec();
        let mut bytes = Vec::new();
        write(&mut bytes, &header(&["main"]), &[&params]).unwrap();
        let mut bumped = bytes.clone();
        bumped[8] = 9;
        let err = read(bumped.as_slice()).unwrap_err();
        assert!(matches!(err, CheckpointError::UnsupportedVersion { found: 9 }));
        assert!(err.to_string().contains("version 9"));
        bytes[0] = b'X';
        assert!(matches!(read(bytes.as_slice()), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn rejects_truncation() {
        let params = Network::<f32>::zeros(arch()).unwrap().params().to_vec();
        let mut bytes = Vec::new();
        write(&mut bytes, &header(&["main"]), &[&params]).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(read(bytes.as_slice()), Err(CheckpointError::Io(_))));
    }
}
