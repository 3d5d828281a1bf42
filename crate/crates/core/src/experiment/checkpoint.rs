use std::fs;
use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{ReplayBuffer, SacAgent};
use crate::density::DensityModel;
use crate::error::{Error, Result};
use crate::metrics::VisitCounter;

const MAGIC: &[u8; 4] = b"VUVC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to continue a seed's run exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingState {
    pub config_hash: String,
    pub seed: u64,
    /// Completed epochs.
    pub epoch: usize,
    pub env_steps: u64,
    pub episodes: u64,
    pub agent: SacAgent,
    pub buffer: ReplayBuffer,
    pub visits: VisitCounter,
    pub density: Option<DensityModel>,
    pub rng: ChaCha8Rng,
}

pub fn encode(state: &TrainingState) -> Result<Vec<u8>> {
    let body = bincode::serialize(state).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(body.len() + 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<TrainingState> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    bincode::deserialize(&bytes[8..]).map_err(|e| Error::Checkpoint(e.to_string()))
}

/// Writes through a temporary file and renames, so a crash never leaves a
/// truncated checkpoint behind.
pub fn save(path: &Path, state: &TrainingState) -> Result<()> {
    let bytes = encode(state)?;
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<TrainingState> {
    decode(&fs::read(path)?)
}
