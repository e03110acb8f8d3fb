//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! "GSRL" | version u16 | count u32 |
//!   per array: name_len u16 | name | rank u8 | dims u32 * rank | values f32 * prod(dims)
//! ```
//!
//! The network's input shape is stored as an extra array `meta.shape`
//! holding `[I, J, K, M, conv mode]`. A four-value meta means the channels
//! conv mode.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::model::{ConvMode, NetShape, Network};
use super::params::{Param, ParamStore};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GSRL";
pub const VERSION: u16 = 1;
const META: &str = "meta.shape";

pub fn write_checkpoint<W: Write>(net: &Network<f32>, mut w: W) -> Result<()> {
    let sh = net.shape();
    let mut meta = Param::<f32>::zeros(META, &[5]);
    meta.value = [sh.intersections, sh.lanes, sh.cells, sh.phases, sh.conv.code() as usize]
        .iter()
        .map(|&v| v as f32)
        .collect();
    let arrays: Vec<&Param<f32>> = std::iter::once(&meta).chain(net.params.iter()).collect();

    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(arrays.len() as u32).to_le_bytes())?;
    for p in arrays {
        let name = p.name.as_bytes();
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[p.dims.len() as u8])?;
        for &d in &p.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in &p.value {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
    Ok(buf)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Network<f32>> {
    if &read_exact::<4, _>(&mut r)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u16::from_le_bytes(read_exact(&mut r)?);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(read_exact(&mut r)?);
    let mut arrays = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = u16::from_le_bytes(read_exact(&mut r)?) as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|e| Error::Checkpoint(format!("truncated name: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("array name is not utf-8".into()))?;
        let rank = read_exact::<1, _>(&mut r)?[0] as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(u32::from_le_bytes(read_exact(&mut r)?) as usize);
        }
        let mut p = Param::<f32>::zeros(&name, &dims);
        for v in &mut p.value {
            *v = f32::from_le_bytes(read_exact(&mut r)?);
        }
        arrays.push(p);
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    if arrays.is_empty() || arrays[0].name != META || !(4..=5).contains(&arrays[0].len()) {
        return Err(Error::Checkpoint("missing meta.shape array".into()));
    }
    let meta = arrays.remove(0);
    let dim = |i: usize| meta.value[i] as usize;
    let conv = match meta.value.get(4) {
        Some(&c) => ConvMode::from_code(c as u8).map_err(|e| Error::Checkpoint(e.to_string()))?,
        None => ConvMode::Channels,
    };
    let shape = NetShape::new(dim(0), dim(1), dim(2), dim(3))?.with_conv(conv);
    Network::from_params(shape, ParamStore::new(arrays))
}

pub fn save_checkpoint(net: &Network<f32>, path: &Path) -> Result<()> {
    let f = File::create(path)?;
    write_checkpoint(net, BufWriter::new(f))
}

pub fn load_checkpoint(path: &Path) -> Result<Network<f32>> {
    let f = File::open(path)?;
    read_checkpoint(BufReader::new(f))
}
