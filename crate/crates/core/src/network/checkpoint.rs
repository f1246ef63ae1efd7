use std::collections::BTreeMap;
use std::path::Path;

use super::{Model, ModelConfig};
use crate::binio::{put_u32, put_u64, read_file, write_file, Reader};
use crate::seqcore::{ParamStore, SeqTensor};
use crate::{Error, Result};

const MAGIC: [u8; 4] = *b"MSBC";
const VERSION: u32 = 1;
/// Blobs under this prefix carry training state rather than weights.
pub const STATE_PREFIX: &str = "state/";

/// Weights plus optional training state.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    /// Blobs named `state/...`, e.g. optimiser moments.
    pub state: BTreeMap<String, SeqTensor>,
}

fn put_blob(out: &mut Vec<u8>, name: &str, t: &SeqTensor) {
    put_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
    put_u32(out, t.rank() as u32);
    for &e in t.shape() {
        put_u64(out, e as u64);
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Header, length-prefixed TOML configuration, then one blob per tensor:
/// name length, name, rank, extents, `f64` little-endian data.
pub fn encode_checkpoint(model: &Model, state: &BTreeMap<String, SeqTensor>) -> Result<Vec<u8>> {
    let cfg = model.config.to_toml()?;
    let mut out = Vec::with_capacity(16 + cfg.len() + 8 * model.params.scalar_count());
    out.extend_from_slice(&MAGIC);
    put_u32(&mut out, VERSION);
    put_u64(&mut out, cfg.len() as u64);
    out.extend_from_slice(cfg.as_bytes());
    for (name, t) in model.params.iter() {
        put_blob(&mut out, name, t);
    }
    for (name, t) in state {
        if !name.starts_with(STATE_PREFIX) {
            return Err(Error::invalid(
                "save_checkpoint",
                format!("state blob {name} lacks the {STATE_PREFIX} prefix"),
            ));
        }
        put_blob(&mut out, name, t);
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let n = r.len()?;
    let text = std::str::from_utf8(r.take(n)?)
        .map_err(|e| Error::Config(format!("checkpoint config: {e}")))?;
    let config = ModelConfig::from_toml(text)?;
    let mut params = ParamStore::new();
    let mut state = BTreeMap::new();
    while !r.at_end() {
        let n = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(n)?)
            .map_err(|e| Error::Config(format!("checkpoint blob name: {e}")))?
            .to_owned();
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
        let count = shape
            .iter()
            .try_fold(1usize, |a, &e| a.checked_mul(e))
            .ok_or(Error::Truncated {
                expected: usize::MAX,
                found: bytes.len(),
            })?;
        let raw = r.take(count.saturating_mul(8))?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
            .collect();
        let t = SeqTensor::new(shape, data)?;
        if name.starts_with(STATE_PREFIX) {
            state.insert(name, t);
        } else {
            params.insert(name, t);
        }
    }
    Ok(Checkpoint {
        model: Model::from_parts(config, params)?,
        state,
    })
}

pub fn save_checkpoint(
    path: &Path,
    model: &Model,
    state: &BTreeMap<String, SeqTensor>,
) -> Result<()> {
    write_file(path, &encode_checkpoint(model, state)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&read_file(path)?)
}
