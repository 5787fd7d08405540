//! Binary PGM (P5, maxval 255) images of label maps and region masks.
//!
//! Label maps: 0 = not-liquid, 255 = liquid, 128 = outside the inner region.
//! Region masks: 255 = inner, 128 = outer, 0 = neither.

use std::path::Path;
use std::sync::Arc;

use super::PixelLabelMap;
use crate::error::{Error, Result};
use crate::geometry::{Region, RegionMask};

fn encode(width: usize, height: usize, pixels: impl Iterator<Item = u8>) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels);
    out
}

fn decode(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bad = |msg: &str| Error::format(path, msg);
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PGM header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("bad header"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("not a binary PGM (P5)"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(bad("maxval must be 255"));
    }
    let data = &bytes[pos + 1..];
    if data.len() != w * h {
        return Err(bad("pixel data length does not match dimensions"));
    }
    Ok((w, h, data.to_vec()))
}

pub fn write_label_pgm(map: &PixelLabelMap, path: impl AsRef<Path>) -> Result<()> {
    let pixels = map
        .labels()
        .iter()
        .zip(map.mask().regions())
        .map(|(&l, &r)| match (r, l) {
            (Region::Inner, true) => 255,
            (Region::Inner, false) => 0,
            _ => 128,
        });
    let path = path.as_ref();
    std::fs::write(path, encode(map.width(), map.height(), pixels)).map_err(|e| Error::io(path, e))
}

/// Reads labels back against a known mask.
pub fn read_label_pgm(path: impl AsRef<Path>, mask: Arc<RegionMask>) -> Result<PixelLabelMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (w, h, data) = decode(&bytes, path)?;
    if (w, h) != (mask.width(), mask.height()) {
        return Err(Error::format(path, "label map size differs from mask"));
    }
    PixelLabelMap::new(data.iter().map(|&p| p == 255).collect(), mask)
}

pub fn write_mask_pgm(mask: &RegionMask, path: impl AsRef<Path>) -> Result<()> {
    let pixels = mask.regions().iter().map(|r| match r {
        Region::Inner => 255,
        Region::Outer => 128,
        Region::Neither => 0,
    });
    let path = path.as_ref();
    std::fs::write(path, encode(mask.width(), mask.height(), pixels)).map_err(|e| Error::io(path, e))
}

pub fn read_mask_pgm(path: impl AsRef<Path>) -> Result<RegionMask> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (w, h, data) = decode(&bytes, path)?;
    let regions = data
        .iter()
        .map(|&p| match p {
            255 => Ok(Region::Inner),
            128 => Ok(Region::Outer),
            0 => Ok(Region::Neither),
            other => Err(Error::format(path, format!("unexpected mask value {other}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    RegionMask::new(w, h, regions)
}
