//! Search-state checkpoint so long runs can stop and resume.
//!
//! Binary layout, little-endian throughout:
//!
//! ```text
//! magic      8 bytes   "CSNETCSS"
//! version    u32       1
//! dimension  u64
//! intervals  (lower, upper, current) f64 triples * dimension
//! best_value f64
//! best       f64 * dimension
//! nfc        u64
//! iteration  u64
//! rng seed   32 bytes  (ChaCha8 expanded seed)
//! word pos   u128      (ChaCha8 stream position, two u64 little-endian, low first)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{BoxInterval, SearchState};
use crate::net::checkpoint::CheckpointError;

pub const STATE_MAGIC: &[u8; 8] = b"CSNETCSS";
pub const STATE_VERSION: u32 = 1;

/// Writes the full optimizer state, including the generator position.
pub fn save_state(state: &SearchState, path: &Path) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(STATE_MAGIC)?;
    w.write_u32::<LittleEndian>(STATE_VERSION)?;
    w.write_u64::<LittleEndian>(state.dimension() as u64)?;
    for iv in &state.intervals {
        w.write_f64::<LittleEndian>(iv.lower)?;
        w.write_f64::<LittleEndian>(iv.upper)?;
        w.write_f64::<LittleEndian>(iv.current)?;
    }
    w.write_f64::<LittleEndian>(state.best_value)?;
    for v in &state.best_params {
        w.write_f64::<LittleEndian>(*v)?;
    }
    w.write_u64::<LittleEndian>(state.nfc)?;
    w.write_u64::<LittleEndian>(state.iteration)?;
    w.write_all(&state.rng().get_seed())?;
    let pos = state.rng().get_word_pos();
    w.write_u64::<LittleEndian>(pos as u64)?;
    w.write_u64::<LittleEndian>((pos >> 64) as u64)?;
    w.flush()?;
    Ok(())
}

/// Restores a state written by [`save_state`]; the generator resumes at the
/// exact stream position, so a resumed run continues the original one.
pub fn load_state(path: &Path) -> Result<SearchState, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != STATE_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != STATE_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let dim = r.read_u64::<LittleEndian>()? as usize;
    if dim == 0 {
        return Err(CheckpointError::Corrupt("zero dimension".into()));
    }
    let mut intervals = Vec::with_capacity(dim);
    for _ in 0..dim {
        let lower = r.read_f64::<LittleEndian>()?;
        let upper = r.read_f64::<LittleEndian>()?;
        let current = r.read_f64::<LittleEndian>()?;
        if lower > upper {
            return Err(CheckpointError::Corrupt(format!(
                "interval [{lower}, {upper}] has lower > upper"
            )));
        }
        intervals.push(BoxInterval {
            lower,
            upper,
            current,
        });
    }
    let best_value = r.read_f64::<LittleEndian>()?;
    let mut best_params = vec![0.0; dim];
    r.read_f64_into::<LittleEndian>(&mut best_params)?;
    let nfc = r.read_u64::<LittleEndian>()?;
    let iteration = r.read_u64::<LittleEndian>()?;
    let mut seed = [0u8; 32];
    r.read_exact(&mut seed)?;
    let lo = r.read_u64::<LittleEndian>()? as u128;
    let hi = r.read_u64::<LittleEndian>()? as u128;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_word_pos(lo | (hi << 64));
    Ok(SearchState::restore(
        intervals, best_value, best_params, nfc, iteration, rng,
    ))
}
