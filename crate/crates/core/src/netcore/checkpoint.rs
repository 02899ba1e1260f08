//! Versioned little-endian binary checkpoint.
//!
//! Layout (version 1):
//!
//! ```text
//! magic        8 bytes  "ENGNET\0\0"
//! version      u32
//! seed         u64
//! n_users      u64
//! n_items      u64
//! embedding    u64
//! n_hidden     u32, then n_hidden x u64
//! dropout      f64
//! init rule    u8     (0 = fan-based uniform)
//! n_params     u64, then n_params x f64 in declaration order
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::network::{InitRule, Network, NetworkConfig};
use crate::error::{Error, Result};
use crate::rng::RngStream;

const MAGIC: &[u8; 8] = b"ENGNET\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(net: &Network, mut w: W) -> Result<()> {
    let c = net.config();
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&net.seed().to_le_bytes())?;
    for v in [c.n_users, c.n_items, c.embedding_dim] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    w.write_all(&(c.hidden_sizes.len() as u32).to_le_bytes())?;
    for &h in &c.hidden_sizes {
        w.write_all(&(h as u64).to_le_bytes())?;
    }
    w.write_all(&c.dropout_rate.to_le_bytes())?;
    let init: u8 = match c.init {
        InitRule::FanBasedUniform => 0,
    };
    w.write_all(&[init])?;
    let flat = net.params().to_flat();
    w.write_all(&(flat.len() as u64).to_le_bytes())?;
    for v in flat {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated: {e}")))?;
    Ok(buf)
}

fn take_usize<R: Read>(r: &mut R) -> Result<usize> {
    usize::try_from(u64::from_le_bytes(take::<8, _>(r)?))
        .map_err(|_| Error::Checkpoint("dimension overflows usize".into()))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Network> {
    if &take::<8, _>(&mut r)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(take::<4, _>(&mut r)?);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let seed = u64::from_le_bytes(take::<8, _>(&mut r)?);
    let n_users = take_usize(&mut r)?;
    let n_items = take_usize(&mut r)?;
    let embedding_dim = take_usize(&mut r)?;
    let n_hidden = u32::from_le_bytes(take::<4, _>(&mut r)?);
    if n_hidden > 3 {
        return Err(Error::Checkpoint(format!("{n_hidden} hidden layers")));
    }
    let hidden_sizes = (0..n_hidden)
        .map(|_| take_usize(&mut r))
        .collect::<Result<Vec<_>>>()?;
    let dropout_rate = f64::from_le_bytes(take::<8, _>(&mut r)?);
    let init = match take::<1, _>(&mut r)?[0] {
        0 => InitRule::FanBasedUniform,
        other => return Err(Error::Checkpoint(format!("unknown init rule {other}"))),
    };
    let config = NetworkConfig {
        n_users,
        n_items,
        embedding_dim,
        hidden_sizes,
        dropout_rate,
        init,
    };
    config.validate()?;
    let n_params = take_usize(&mut r)?;
    if n_params != config.param_count() {
        return Err(Error::Checkpoint(format!(
            "{n_params} parameters stored, config implies {}",
            config.param_count()
        )));
    }
    let flat = (0..n_params)
        .map(|_| take::<8, _>(&mut r).map(f64::from_le_bytes))
        .collect::<Result<Vec<_>>>()?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    let mut template = Network::init(config.clone(), &mut RngStream::new(0))?;
    template.params_mut().copy_from_flat(&flat);
    Network::from_parts(config, seed, template.params().clone())
}

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_checkpoint(net, std::io::BufWriter::new(file))
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let file = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(file))
}
