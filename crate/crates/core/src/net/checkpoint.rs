//! Network checkpoint file.
//!
//! Binary layout, little-endian throughout:
//!
//! ```text
//! magic      8 bytes   "CSNETDNS"
//! version    u32       1
//! layers     u32       number of layer sizes
//! sizes      u32 * layers
//! total      u64       flat parameter count (must match the sizes)
//! params     f64 * total
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

use super::{DenseNet, NetError, NetworkSpec};

pub const NET_MAGIC: &[u8; 8] = b"CSNETDNS";
pub const NET_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint is internally inconsistent: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Writes the network's spec and flat parameters to `path`.
pub fn save_network(net: &DenseNet, path: &Path) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(NET_MAGIC)?;
    w.write_u32::<LittleEndian>(NET_VERSION)?;
    let sizes = net.spec().layer_sizes();
    w.write_u32::<LittleEndian>(sizes.len() as u32)?;
    for &s in sizes {
        w.write_u32::<LittleEndian>(s as u32)?;
    }
    let flat = net.get_params();
    w.write_u64::<LittleEndian>(flat.len() as u64)?;
    for v in &flat {
        w.write_f64::<LittleEndian>(*v)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint written by [`save_network`].
pub fn load_network(path: &Path) -> Result<DenseNet, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != NET_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != NET_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let n_sizes = r.read_u32::<LittleEndian>()? as usize;
    let mut sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        sizes.push(r.read_u32::<LittleEndian>()? as usize);
    }
    let spec = NetworkSpec::new(sizes)?;
    let total = r.read_u64::<LittleEndian>()? as usize;
    if total != spec.layout().total() {
        return Err(CheckpointError::Corrupt(format!(
            "parameter count {total} does not match layer sizes (want {})",
            spec.layout().total()
        )));
    }
    let mut flat = vec![0.0; total];
    r.read_f64_into::<LittleEndian>(&mut flat)?;
    Ok(DenseNet::from_flat(spec, &flat)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let spec = NetworkSpec::new(vec![4, 3, 2]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let flat: Vec<f64> = (0..spec.layout().total())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let net = DenseNet::from_flat(spec, &flat).unwrap();
        save_network(&net, &path).unwrap();
        let loaded = load_network(&path).unwrap();
        assert_eq!(loaded.get_params(), flat);
        assert_eq!(loaded.spec().layer_sizes(), net.spec().layer_sizes());
    }

    #[test]
    fn bad_magic_and_version_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let net = DenseNet::zeros(NetworkSpec::new(vec![2, 2]).unwrap());
        save_network(&net, &path).unwrap();

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_network(&path), Err(CheckpointError::BadMagic)));

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] ^= 0xff; // restore magic
        bytes[8] = 99; // clobber version
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_network(&path),
            Err(CheckpointError::UnsupportedVersion(99))
        ));
    }
}
