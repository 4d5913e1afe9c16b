//! Binary container for [`MapField`]s.
//!
//! Layout: the 8-byte magic, a little-endian `u64` header length, a JSON header
//! `{"grid": GridSpec, "target": name}`, then the values as little-endian `f64`
//! in row-major order (`s`, then `theta`, then ambient coordinate).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{CylinderGrid, GridSpec, MapField};
use crate::error::{Error, Result};
use crate::target::Target;

pub const CONTAINER_MAGIC: &[u8; 8] = b"CLMF0001";

#[derive(Serialize, Deserialize)]
struct Header {
    grid: GridSpec,
    target: Target,
}

pub fn write_map_field<W: Write>(u: &MapField, mut w: W) -> Result<()> {
    let header = serde_json::to_vec(&Header { grid: *u.grid().spec(), target: u.target().clone() })?;
    w.write_all(CONTAINER_MAGIC)?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    let mut bytes = Vec::with_capacity(u.values().len() * 8);
    for x in u.values() {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn read_map_field<R: Read>(mut r: R) -> Result<MapField> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CONTAINER_MAGIC {
        return Err(Error::Format("not a map-field container (bad magic)".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 20 {
        return Err(Error::Format(format!("implausible header length {len}")));
    }
    let mut header = vec![0u8; len as usize];
    r.read_exact(&mut header)?;
    let Header { grid, target } = serde_json::from_slice(&header)?;
    let grid = CylinderGrid::new(grid)?;
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    if data.len() % 8 != 0 {
        return Err(Error::Format("truncated value block".into()));
    }
    let values = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    MapField::from_stored(grid, target, values)
}
