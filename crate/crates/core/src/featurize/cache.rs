//! Grid cache file layout, all integers little-endian:
//!
//! ```text
//! u8   version (= 1)
//! u8   stage (0 raw, 1 imputed, 2 normalized)
//! u64  stay_id
//! u32  n_hours
//! u32  n_channels (= 26)
//! f64  values[n_hours * n_channels], row-major
//! u8   mask[n_hours * n_channels], row-major
//! ```

use std::io::{Read, Write};

use super::{FeaturizeError, GridStage, HourlyGrid};
use crate::catalog::N_CHANNELS;
use crate::ids::StayId;

pub const GRID_CACHE_VERSION: u8 = 1;

pub fn write_grid(w: &mut impl Write, grid: &HourlyGrid) -> Result<(), FeaturizeError> {
    w.write_all(&[GRID_CACHE_VERSION, grid.stage.to_byte()])?;
    w.write_all(&grid.stay_id.0.to_le_bytes())?;
    w.write_all(&(grid.n_hours as u32).to_le_bytes())?;
    w.write_all(&(N_CHANNELS as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(grid.values.len() * 8);
    for v in &grid.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.write_all(&grid.mask)?;
    Ok(())
}

pub fn read_grid(r: &mut impl Read) -> Result<HourlyGrid, FeaturizeError> {
    let mut head = [0u8; 2 + 8 + 4 + 4];
    r.read_exact(&mut head)?;
    if head[0] != GRID_CACHE_VERSION {
        return Err(FeaturizeError::Cache(format!("unsupported version {}", head[0])));
    }
    let stage = GridStage::from_byte(head[1])
        .ok_or_else(|| FeaturizeError::Cache(format!("bad stage byte {}", head[1])))?;
    let stay_id = StayId(u64::from_le_bytes(head[2..10].try_into().unwrap()));
    let n_hours = u32::from_le_bytes(head[10..14].try_into().unwrap()) as usize;
    let n_channels = u32::from_le_bytes(head[14..18].try_into().unwrap()) as usize;
    if n_channels != N_CHANNELS {
        return Err(FeaturizeError::Cache(format!("expected {N_CHANNELS} channels, found {n_channels}")));
    }
    let n = n_hours * N_CHANNELS;
    let mut raw = vec![0u8; n * 8];
    r.read_exact(&mut raw)?;
    let values = raw
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let mut mask = vec![0u8; n];
    r.read_exact(&mut mask)?;
    if mask.iter().any(|&m| m > 1) {
        return Err(FeaturizeError::Cache("mask byte outside {0,1}".into()));
    }
    Ok(HourlyGrid {
        stay_id,
        n_hours,
        values,
        mask,
        stage,
    })
}
