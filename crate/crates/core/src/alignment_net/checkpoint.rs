//! Checkpoint files: `"SFCK" | u32 version | u32 header_len | header JSON |
//! f32 parameters`, little-endian, tensors in `w1, b1, w2, b2` order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{AlignmentNetwork, NetworkShape, Parameters};
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::scalar::Real;

const MAGIC: [u8; 4] = *b"SFCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub shape: NetworkShape,
    pub seed: u64,
    pub config: TrainConfig,
    pub parameter_count: usize,
}

pub fn save_checkpoint<T: Real>(
    net: &AlignmentNetwork<T>,
    config: &TrainConfig,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let header = CheckpointHeader {
        shape: *net.shape(),
        seed: config.seed,
        config: config.clone(),
        parameter_count: net.params().len(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut bytes = Vec::with_capacity(12 + json.len() + 4 * header.parameter_count);
    bytes.extend_from_slice(&MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&json);
    for t in net.params().tensors() {
        for &v in t {
            bytes.extend_from_slice(&v.as_f32().to_le_bytes());
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Real>(
    path: impl AsRef<Path>,
) -> Result<(AlignmentNetwork<T>, CheckpointHeader)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || bytes[..4] != MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    if word(4) != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {}", word(4))));
    }
    let header_end = 12 + word(8) as usize;
    if bytes.len() < header_end {
        return Err(Error::Format("checkpoint header truncated".into()));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[12..header_end])
        .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    let mut params = Parameters::<T>::zeros(&header.shape);
    if params.len() != header.parameter_count {
        return Err(Error::Format("parameter count disagrees with shape".into()));
    }
    let payload = &bytes[header_end..];
    if payload.len() != 4 * header.parameter_count {
        return Err(Error::Format(format!(
            "checkpoint payload is {} bytes, expected {}",
            payload.len(),
            4 * header.parameter_count
        )));
    }
    let mut values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    for t in params.tensors_mut() {
        for (dst, v) in t.iter_mut().zip(&mut values) {
            *dst = T::from_f32_lossless(v);
        }
    }
    let net = AlignmentNetwork::from_parameters(header.shape, params)?;
    Ok((net, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment_net::AlignmentSource;

    #[test]
    fn round_trip_preserves_f32_parameters() {
        let shape = NetworkShape {
            visual_dim: 3,
            text_dim: 2,
            hidden_dim: 5,
            source: AlignmentSource::VisualSemantic,
            leaky_slope: 0.02,
            use_bias: true,
        };
        let net = AlignmentNetwork::<f32>::init(shape, 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let cfg = TrainConfig {
            seed: 8,
            ..TrainConfig::default()
        };
        save_checkpoint(&net, &cfg, &path).unwrap();
        let (back, header) = load_checkpoint::<f32>(&path).unwrap();
        assert_eq!(back, net);
        assert_eq!(header.seed, 8);
        assert_eq!(header.shape, shape);

        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint::<f32>(&path), Err(Error::Format(_))));
    }
}
