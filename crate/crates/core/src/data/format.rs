//! On-disk clip payload formats.
//!
//! Frames (`.evid`): magic "EVID", version u32, then T, H, W, C u32 (C = 3),
//! then T·H·W·C u8 pixels row-major. Masks (`.emsk`): magic "EMSK", same
//! header with C = 1 and values restricted to {0, 1}. All integers
//! little-endian.

use crate::error::{Error, Result};
use std::io::Write;
use std::path::Path;

pub const FRAMES_MAGIC: [u8; 4] = *b"EVID";
pub const MASKS_MAGIC: [u8; 4] = *b"EMSK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Payload {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<u8>,
}

fn write_payload(path: &Path, magic: [u8; 4], t: usize, h: usize, w: usize, c: usize, data: &[u8]) -> Result<()> {
    if t * h * w * c != data.len() {
        return Err(Error::shape(format!(
            "payload length {} does not match {t}×{h}×{w}×{c}",
            data.len()
        )));
    }
    let mut buf = Vec::with_capacity(24 + data.len());
    buf.extend_from_slice(&magic);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for dim in [t, h, w, c] {
        buf.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    buf.extend_from_slice(data);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

fn read_payload(path: &Path, magic: [u8; 4], want_c: usize) -> Result<Payload> {
    let buf = std::fs::read(path)?;
    if buf.len() < 24 {
        return Err(Error::format(
            format!("{} is too short for a header", path.display()),
            Some(buf.len() as u64),
        ));
    }
    if buf[..4] != magic {
        return Err(Error::format(
            format!("bad magic {:?}, expected {magic:?}", &buf[..4]),
            Some(0),
        ));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::format(format!("unsupported version {version}"), Some(4)));
    }
    let mut dims = [0usize; 4];
    for (i, d) in dims.iter_mut().enumerate() {
        *d = u32::from_le_bytes(buf[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    }
    let [t, h, w, c] = dims;
    if c != want_c {
        return Err(Error::format(
            format!("channel count {c}, expected {want_c}"),
            Some(20),
        ));
    }
    if t == 0 || h == 0 || w == 0 {
        return Err(Error::format("zero dimension in header".to_string(), Some(8)));
    }
    let expect = (t as u64) * (h as u64) * (w as u64) * (c as u64);
    let have = (buf.len() - 24) as u64;
    if have != expect {
        return Err(Error::format(
            format!("payload has {have} bytes, header implies {expect}"),
            Some(24),
        ));
    }
    Ok(Payload {
        t,
        h,
        w,
        c,
        data: buf[24..].to_vec(),
    })
}

pub fn write_frames(path: &Path, t: usize, h: usize, w: usize, pixels: &[u8]) -> Result<()> {
    write_payload(path, FRAMES_MAGIC, t, h, w, 3, pixels)
}

pub fn read_frames(path: &Path) -> Result<Payload> {
    read_payload(path, FRAMES_MAGIC, 3)
}

pub fn write_masks(path: &Path, t: usize, h: usize, w: usize, masks: &[u8]) -> Result<()> {
    if let Some(pos) = masks.iter().position(|&m| m > 1) {
        return Err(Error::validation(format!(
            "mask byte at index {pos} is {}, must be 0 or 1",
            masks[pos]
        )));
    }
    write_payload(path, MASKS_MAGIC, t, h, w, 1, masks)
}

pub fn read_masks(path: &Path) -> Result<Payload> {
    let p = read_payload(path, MASKS_MAGIC, 1)?;
    if let Some(pos) = p.data.iter().position(|&m| m > 1) {
        return Err(Error::format(
            format!("mask byte is {} at payload index {pos}, must be 0 or 1", p.data[pos]),
            Some(24 + pos as u64),
        ));
    }
    Ok(p)
}
