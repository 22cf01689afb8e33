//! Binary checkpoint format.
//!
//! ```text
//! "SLMP" | version: u16 LE | header_len: u32 LE | header: JSON (UTF-8)
//!        | payload: f32 LE tensors in header order | crc32(payload): u32 LE
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SlampError};
use crate::rng::Rng;
use crate::snn::{Architecture, Network, NeuronConfig};
use crate::tensor::Tensor;
use crate::train::SgdState;

pub const CHECKPOINT_VERSION: u16 = 1;
const MAGIC: &[u8; 4] = b"SLMP";

/// Parameters of one weighted layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// Index of the layer inside the network.
    pub layer: usize,
    pub weights: Tensor,
    pub mask: Tensor,
    pub velocity: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub architecture: Architecture,
    pub neuron: NeuronConfig,
    pub params: Vec<LayerParams>,
    pub seed: u64,
    pub epoch: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    architecture: Architecture,
    neuron: NeuronConfig,
    seed: u64,
    epoch: usize,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    layer: usize,
    role: Role,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Role {
    Weights,
    Mask,
    Velocity,
}

impl Checkpoint {
    pub fn capture(net: &Network, architecture: &Architecture, state: Option<&SgdState>, seed: u64, epoch: usize) -> Self {
        let params = net
            .prunable()
            .into_iter()
            .map(|l| {
                let layer = &net.layers()[l];
                let weights = layer.weights().expect("prunable layer has weights").clone();
                let velocity = state
                    .and_then(|s| s.velocity.get(l).cloned().flatten())
                    .unwrap_or_else(|| Tensor::zeros(weights.shape()));
                LayerParams {
                    layer: l,
                    mask: layer.mask().expect("prunable layer has a mask").clone(),
                    weights,
                    velocity,
                }
            })
            .collect();
        Self {
            architecture: architecture.clone(),
            neuron: *net.neuron(),
            params,
            seed,
            epoch,
        }
    }

    /// Rebuilds the network and its optimizer state.
    pub fn restore(&self) -> Result<(Network, SgdState)> {
        let mut net = Network::init(&self.architecture, self.neuron, 1.0, &mut Rng::new(0))?;
        let expected = net.prunable();
        if expected != self.params.iter().map(|p| p.layer).collect::<Vec<_>>() {
            return Err(SlampError::Corrupted(
                "parameter layers do not match the architecture".into(),
            ));
        }
        let mut state = SgdState::new(&net);
        for p in &self.params {
            if net.layers()[p.layer].weights().map(Tensor::shape) != Some(p.weights.shape()) {
                return Err(SlampError::Corrupted(format!("layer {} has the wrong shape", p.layer)));
            }
            net.set_weights(p.layer, p.weights.clone())?;
            net.set_mask(p.layer, p.mask.clone())?;
            state.velocity[p.layer] = Some(p.velocity.clone());
        }
        Ok((net, state))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors = Vec::with_capacity(self.params.len() * 3);
        let mut payload = Vec::new();
        for p in &self.params {
            for (role, t) in [(Role::Weights, &p.weights), (Role::Mask, &p.mask), (Role::Velocity, &p.velocity)] {
                tensors.push(TensorEntry {
                    layer: p.layer,
                    role,
                    shape: t.shape().to_vec(),
                });
                for v in t.data() {
                    payload.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let header = serde_json::to_vec(&Header {
            architecture: self.architecture.clone(),
            neuron: self.neuron,
            seed: self.seed,
            epoch: self.epoch,
            tensors,
        })?;
        let header_len = u32::try_from(header.len())
            .map_err(|_| SlampError::Corrupted("header exceeds 4 GiB".into()))?;
        let mut out = Vec::with_capacity(14 + header.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&header_len.to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&payload);
        out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let truncated = || SlampError::Corrupted("file is truncated".into());
        if bytes.len() < 10 {
            return Err(truncated());
        }
        if &bytes[..4] != MAGIC {
            return Err(SlampError::Corrupted("bad magic bytes".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != CHECKPOINT_VERSION {
            return Err(SlampError::Version(version));
        }
        let header_len = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
        let body = &bytes[10..];
        if body.len() < header_len + 4 {
            return Err(truncated());
        }
        let header: Header = serde_json::from_slice(&body[..header_len])
            .map_err(|e| SlampError::Corrupted(format!("bad header: {e}")))?;
        let payload_len: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>() * 4).sum();
        let rest = &body[header_len..];
        if rest.len() < payload_len + 4 {
            return Err(truncated());
        }
        if rest.len() > payload_len + 4 {
            return Err(SlampError::Corrupted("trailing bytes after checksum".into()));
        }
        let (payload, crc) = rest.split_at(payload_len);
        if crc32fast::hash(payload) != u32::from_le_bytes(crc.try_into().expect("4 bytes")) {
            return Err(SlampError::Corrupted("checksum mismatch".into()));
        }

        let mut offset = 0;
        let mut read = |entry: &TensorEntry| -> Result<Tensor> {
            let n: usize = entry.shape.iter().product();
            let data = payload[offset..offset + 4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            offset += 4 * n;
            Tensor::new(entry.shape.clone(), data).map_err(|e| SlampError::Corrupted(e.to_string()))
        };
        if header.tensors.len() % 3 != 0 {
            return Err(SlampError::Corrupted("incomplete tensor group".into()));
        }
        let mut params = Vec::with_capacity(header.tensors.len() / 3);
        for group in header.tensors.chunks_exact(3) {
            let roles: Vec<Role> = group.iter().map(|t| t.role).collect();
            if roles != [Role::Weights, Role::Mask, Role::Velocity] || group.iter().any(|t| t.layer != group[0].layer) {
                return Err(SlampError::Corrupted("unexpected tensor order".into()));
            }
            let weights = read(&group[0])?;
            let mask = read(&group[1])?;
            let velocity = read(&group[2])?;
            if !mask.is_binary() {
                return Err(SlampError::NotBinary("checkpoint mask"));
            }
            if mask.shape() != weights.shape() || velocity.shape() != weights.shape() {
                return Err(SlampError::Corrupted("tensor shapes disagree".into()));
            }
            params.push(LayerParams {
                layer: group[0].layer,
                weights,
                mask,
                velocity,
            });
        }
        Ok(Self {
            architecture: header.architecture,
            neuron: header.neuron,
            params,
            seed: header.seed,
            epoch: header.epoch,
        })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, ckpt.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}
