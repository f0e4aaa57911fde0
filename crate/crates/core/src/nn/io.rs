//! Versioned flat binary parameter files.
//!
//! Layout: 8 magic bytes, `u32` format version, `u64` header length, a JSON header
//! (architecture, standardizers, seed, parameter count), then every parameter as a
//! little-endian `f64`. Optimizer state is not stored.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Arch, Network, Standardizer};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"HEMSNET\0";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    arch: Arch,
    input_scaler: Standardizer,
    output_scaler: Standardizer,
    seed: u64,
    param_count: usize,
}

pub fn write_network<W: Write>(net: &Network, mut w: W) -> Result<()> {
    let header = Header {
        arch: net.arch.clone(),
        input_scaler: net.input_scaler.clone(),
        output_scaler: net.output_scaler.clone(),
        seed: net.seed,
        param_count: net.param_count(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for p in net.params() {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_network<R: Read>(mut r: R) -> Result<Network> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a network file".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported network file version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let len = u64::from_le_bytes(b8) as usize;
    if len > 64 << 20 {
        return Err(Error::Format(format!("header of {len} bytes is implausibly large")));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;
    let mut net = Network::from_arch(header.arch, header.seed);
    let expected = match &net.arch {
        Arch::Dense(m) => m.param_count(),
        Arch::Gru(g) => g.param_count(),
    };
    if expected != header.param_count {
        return Err(Error::Format(format!(
            "header declares {} parameters, architecture needs {expected}",
            header.param_count
        )));
    }
    let mut params = vec![0.0; expected];
    for p in params.iter_mut() {
        r.read_exact(&mut b8)?;
        *p = f64::from_le_bytes(b8);
    }
    if r.read(&mut b8)? != 0 {
        return Err(Error::Format("trailing bytes after parameters".into()));
    }
    match &mut net.arch {
        Arch::Dense(m) => m.params = params,
        Arch::Gru(g) => g.params = params,
    }
    net.optimizer = super::Adam::new(expected);
    if header.input_scaler.width() != net.input_len() || header.output_scaler.width() != net.output_len() {
        return Err(Error::Format("standardizer widths do not match the architecture".into()));
    }
    net.input_scaler = header.input_scaler;
    net.output_scaler = header.output_scaler;
    Ok(net)
}

pub fn save_network(net: &Network, path: &Path) -> Result<()> {
    write_network(net, BufWriter::new(File::create(path)?))
}

pub fn load_network(path: &Path) -> Result<Network> {
    read_network(BufReader::new(File::open(path)?))
}
