//! Model persistence.
//!
//! A bundle file is one JSON header line followed by the JSON payload:
//!
//! ```text
//! {"format_version":1,"digest":"<sha-256 of payload>","payload_bytes":1234}
//! {"spec":…,"features":…,"normalization":…,"models":…}
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataio::NormStats;
use crate::selection::{fallback_predict, ModelSpec, PrefixModels};
use crate::{Error, FeatureId, FeatureValues, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const SUPPORTED_VERSIONS: &[u32] = &[FORMAT_VERSION];

/// A deployable soft sensor: prefix models over one ranking plus the
/// normalization fitted on their training rows. Models work in normalized
/// units; [`ModelBundle::predict`] maps raw inputs to raw NT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub spec: ModelSpec,
    /// Ranking whose prefixes the models cover.
    pub features: Vec<FeatureId>,
    pub normalization: NormStats,
    pub models: PrefixModels,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    digest: String,
    payload_bytes: usize,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ModelBundle {
    /// Predicts NT for raw feature values using the longest usable prefix.
    pub fn predict(&self, raw: &FeatureValues, available: &[FeatureId]) -> Result<(f64, Vec<FeatureId>)> {
        let z = self.normalization.apply_values(raw);
        let (pred, used) = fallback_predict(&self.models, available, &z)?;
        Ok((self.normalization.target.invert(pred), used))
    }

    fn payload(&self) -> Result<Vec<u8>> {
        serde_json::to_vec(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    /// SHA-256 of the serialized payload, hex-encoded.
    pub fn digest(&self) -> Result<String> {
        Ok(sha256_hex(&self.payload()?))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let payload = self.payload()?;
        let header = Header {
            format_version: FORMAT_VERSION,
            digest: sha256_hex(&payload),
            payload_bytes: payload.len(),
        };
        let mut out = serde_json::to_vec(&header).map_err(|e| Error::Serialization(e.to_string()))?;
        out.push(b'\n');
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Corrupt("missing header line".into()))?;
        let header: Header = serde_json::from_slice(&bytes[..newline])
            .map_err(|e| Error::Corrupt(format!("unreadable header: {e}")))?;
        if !SUPPORTED_VERSIONS.contains(&header.format_version) {
            return Err(Error::UnsupportedVersion {
                found: header.format_version,
                supported: SUPPORTED_VERSIONS.to_vec(),
            });
        }
        let payload = &bytes[newline + 1..];
        if payload.len() != header.payload_bytes {
            return Err(Error::Corrupt(format!(
                "payload is {} bytes, header says {}",
                payload.len(),
                header.payload_bytes
            )));
        }
        if sha256_hex(payload) != header.digest {
            return Err(Error::Corrupt("digest mismatch".into()));
        }
        serde_json::from_slice(payload).map_err(|e| Error::Corrupt(format!("unreadable payload: {e}")))
    }
}

pub fn save_model(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, bundle.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    ModelBundle::from_bytes(&bytes)
}
