//! Binary field snapshots.
//!
//! Layout, all little-endian: magic `PRLW`, `u32` version, `u32` nx, ny, nz,
//! `f64` kappa, then the samples with `k` outermost and `i` innermost.
//! Two-dimensional fields are written with `nz = 1`.

use std::io::{Read, Write};
use std::sync::Arc;

use super::field::{Field2, Field3, Planar};
use super::grid::Grid;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PRLW";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnapshotHeader {
    pub nx: u32,
    pub ny: u32,
    pub nz: u32,
    pub kappa: f64,
}

fn write_raw<W: Write>(w: &mut W, h: SnapshotHeader, values: &[f64]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&h.nx.to_le_bytes())?;
    w.write_all(&h.ny.to_le_bytes())?;
    w.write_all(&h.nz.to_le_bytes())?;
    w.write_all(&h.kappa.to_le_bytes())?;
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Read a header and its samples.
pub fn read_raw<R: Read>(r: &mut R) -> Result<(SnapshotHeader, Vec<f64>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let (nx, ny, nz) = (read_u32(r)?, read_u32(r)?, read_u32(r)?);
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    let kappa = f64::from_le_bytes(b);
    let len = nx as usize * ny as usize * nz as usize;
    let mut bytes = vec![0u8; len * 8];
    r.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((SnapshotHeader { nx, ny, nz, kappa }, values))
}

pub fn write_field3<W: Write>(w: &mut W, f: &Field3) -> Result<()> {
    let g = f.grid();
    let h = SnapshotHeader {
        nx: g.nx() as u32,
        ny: g.ny() as u32,
        nz: g.nz() as u32,
        kappa: g.kappa(),
    };
    write_raw(w, h, f.values())
}

pub fn write_field2<W: Write>(w: &mut W, f: &Field2) -> Result<()> {
    let g = f.grid();
    let h = SnapshotHeader {
        nx: g.nx() as u32,
        ny: g.ny() as u32,
        nz: 1,
        kappa: g.kappa(),
    };
    write_raw(w, h, f.values())
}

fn check(h: &SnapshotHeader, g: &Grid, nz: usize) -> Result<()> {
    if h.nx as usize != g.nx()
        || h.ny as usize != g.ny()
        || h.nz as usize != nz
        || h.kappa != g.kappa()
    {
        return Err(Error::Snapshot(format!(
            "header {}x{}x{} kappa {} does not match grid {:?}",
            h.nx, h.ny, h.nz, h.kappa, g
        )));
    }
    Ok(())
}

pub fn read_field3<R: Read>(r: &mut R, grid: &Arc<Grid>) -> Result<Field3> {
    let (h, values) = read_raw(r)?;
    check(&h, grid, grid.nz())?;
    Field3::from_values(grid, values)
}

pub fn read_field2<R: Read>(r: &mut R, grid: &Arc<Grid>) -> Result<Field2> {
    let (h, values) = read_raw(r)?;
    check(&h, grid, 1)?;
    Field2::from_values(grid, values)
}
