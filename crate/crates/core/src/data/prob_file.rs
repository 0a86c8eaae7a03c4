//! Binary container for surrogate outputs.
//!
//! ```text
//! "HCCP" | version u16 = 1 | mode u8 | out_shift u8 | n u16 | rows u32
//! per row: head_id u32 | Z i32 | rho i32 | n values (u16 on 16-bit paths, u8 on 8-bit paths)
//! ```
//! All integers little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kernel::{OutputMode, ProbTile};

const MAGIC: &[u8; 4] = b"HCCP";
const VERSION: u16 = 1;
const HEADER: usize = 14;

pub fn encode_prob_tile(tile: &ProbTile) -> Result<Vec<u8>> {
    let n = u16::try_from(tile.cols).map_err(|_| Error::Schema("n exceeds u16".into()))?;
    let rows = u32::try_from(tile.rows()).map_err(|_| Error::Schema("rows exceed u32".into()))?;
    let width = if tile.mode.is_u8() { 1 } else { 2 };
    let mut out = Vec::with_capacity(HEADER + tile.rows() * (12 + tile.cols * width));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(tile.mode.tag());
    out.push(tile.mode.out_shift());
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&rows.to_le_bytes());
    for r in 0..tile.rows() {
        out.extend_from_slice(&tile.head_ids[r].to_le_bytes());
        out.extend_from_slice(&tile.z[r].to_le_bytes());
        out.extend_from_slice(&tile.rho[r].to_le_bytes());
        for &v in tile.row_probs(r) {
            if tile.mode.is_u8() {
                out.push(v as u8);
            } else {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_prob_tile(bytes: &[u8]) -> Result<ProbTile> {
    let parse = |offset: usize, msg: String| Error::Parse {
        offset: offset as u64,
        msg,
    };
    if bytes.len() < HEADER {
        return Err(parse(bytes.len(), "truncated header".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(parse(0, "bad magic, expected \"HCCP\"".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(parse(4, format!("unsupported version {version}")));
    }
    let mode = OutputMode::from_tag(bytes[6], bytes[7])
        .ok_or_else(|| parse(6, format!("unknown mode tag {}", bytes[6])))?;
    let cols = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let rows = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let width = if mode.is_u8() { 1 } else { 2 };
    let row_len = 12 + cols * width;
    let expected = rows
        .checked_mul(row_len)
        .and_then(|v| v.checked_add(HEADER))
        .ok_or_else(|| parse(10, "row count overflows".into()))?;
    if bytes.len() != expected {
        return Err(parse(
            bytes.len().min(expected),
            format!("expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    let mut tile = ProbTile {
        cols,
        mode,
        head_ids: Vec::with_capacity(rows),
        p: Vec::with_capacity(rows * cols),
        z: Vec::with_capacity(rows),
        rho: Vec::with_capacity(rows),
    };
    for rec in bytes[HEADER..].chunks_exact(row_len) {
        let word = |k: usize| <[u8; 4]>::try_from(&rec[k..k + 4]).unwrap();
        tile.head_ids.push(u32::from_le_bytes(word(0)));
        tile.z.push(i32::from_le_bytes(word(4)));
        tile.rho.push(i32::from_le_bytes(word(8)));
        if mode.is_u8() {
            tile.p.extend(rec[12..].iter().map(|&b| u16::from(b)));
        } else {
            tile.p.extend(
                rec[12..]
                    .chunks_exact(2)
                    .map(|c| u16::from_le_bytes([c[0], c[1]])),
            );
        }
    }
    Ok(tile)
}

pub fn write_prob_tile(path: impl AsRef<Path>, tile: &ProbTile) -> Result<()> {
    fs::write(path, encode_prob_tile(tile)?)?;
    Ok(())
}

pub fn read_prob_tile(path: impl AsRef<Path>) -> Result<ProbTile> {
    decode_prob_tile(&fs::read(path)?)
}
