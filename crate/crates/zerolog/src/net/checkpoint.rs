//! Checkpoint format: one JSON header line, then the three parameter groups
//! as consecutive little-endian f32 blobs. Weights are stored at f32
//! precision; loading widens back to f64 exactly, so save/load/save produces
//! byte-identical files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{NetworkConfig, NetworkParams};

pub const CHECKPOINT_FORMAT: &str = "zerolog-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    network: NetworkConfig,
    seed: u64,
    iteration: u64,
    hyperparams: serde_json::Value,
    lens: [usize; 3],
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: NetworkParams,
    pub seed: u64,
    pub iteration: u64,
    /// Training settings as recorded by the trainer; opaque here.
    pub hyperparams: serde_json::Value,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let p = &ckpt.params;
    let header = Header {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        network: p.config,
        seed: ckpt.seed,
        iteration: ckpt.iteration,
        hyperparams: ckpt.hyperparams.clone(),
        lens: [p.theta_e.len(), p.theta_omega.len(), p.theta_d.len()],
    };
    let mut bytes = serde_json::to_string(&header)
        .map_err(|e| Error::Input(format!("checkpoint header: {e}")))?
        .into_bytes();
    bytes.push(b'\n');
    for &v in p.theta_e.iter().chain(&p.theta_omega).chain(&p.theta_d) {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |what: &str| Error::Input(format!("{}: {what}", path.display()));
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header line"))?;
    let header: Header = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| bad(&format!("bad header: {e}")))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(bad(&format!("unknown format {:?}", header.format)));
    }
    if header.version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported version {}", header.version)));
    }
    let cfg = header.network;
    let want = [
        NetworkParams::encoder_len(&cfg),
        NetworkParams::head_len(&cfg),
        NetworkParams::head_len(&cfg),
    ];
    if header.lens != want {
        return Err(bad(&format!("lens {:?} do not match network {:?}", header.lens, want)));
    }
    let blob = &bytes[nl + 1..];
    let total: usize = header.lens.iter().sum();
    if blob.len() != total * 4 {
        return Err(bad(&format!("blob is {} bytes, expected {}", blob.len(), total * 4)));
    }
    let mut values = Vec::with_capacity(total);
    for chunk in blob.chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().expect("chunks_exact(4)"));
        if !v.is_finite() {
            return Err(bad("non-finite weight"));
        }
        values.push(v as f64);
    }
    let theta_e = values[..header.lens[0]].to_vec();
    let theta_omega = values[header.lens[0]..header.lens[0] + header.lens[1]].to_vec();
    let theta_d = values[header.lens[0] + header.lens[1]..].to_vec();
    Ok(Checkpoint {
        params: NetworkParams { config: cfg, theta_e, theta_omega, theta_d },
        seed: header.seed,
        iteration: header.iteration,
        hyperparams: header.hyperparams,
    })
}
