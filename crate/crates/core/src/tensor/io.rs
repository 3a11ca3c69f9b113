//! NFT1 raw tensor files: magic `NFT1`, u32 LE rank, rank × u64 LE dims,
//! then row-major f64 LE values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

pub const NFT_MAGIC: &[u8; 4] = b"NFT1";

pub fn write_nft_to<W: Write>(mut w: W, t: &Tensor) -> Result<()> {
    w.write_all(NFT_MAGIC)?;
    w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn format_err(offset: u64, message: impl Into<String>) -> Error {
    Error::Format {
        format: "NFT1",
        offset,
        message: message.into(),
    }
}

fn read_exact_at<R: Read>(r: &mut R, buf: &mut [u8], offset: u64, what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            format_err(offset, format!("truncated while reading {what}"))
        } else {
            Error::Io(e)
        }
    })
}

pub fn read_nft_from<R: Read>(mut r: R) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    read_exact_at(&mut r, &mut magic, 0, "magic")?;
    if &magic != NFT_MAGIC {
        return Err(format_err(0, format!("bad magic {magic:?}")));
    }
    let mut b4 = [0u8; 4];
    read_exact_at(&mut r, &mut b4, 4, "rank")?;
    let ndim = u32::from_le_bytes(b4) as usize;
    if ndim == 0 || ndim > 16 {
        return Err(format_err(4, format!("unsupported rank {ndim}")));
    }
    let mut offset = 8u64;
    let mut shape = Vec::with_capacity(ndim);
    let mut b8 = [0u8; 8];
    for _ in 0..ndim {
        read_exact_at(&mut r, &mut b8, offset, "dimension")?;
        shape.push(u64::from_le_bytes(b8) as usize);
        offset += 8;
    }
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| format_err(8, "dimension product overflows"))?;
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        read_exact_at(&mut r, &mut b8, offset, "payload")?;
        data.push(f64::from_le_bytes(b8));
        offset += 8;
    }
    Tensor::from_raw(shape, data).map_err(|e| format_err(8, e.to_string()))
}

pub fn write_nft(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_nft_to(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn read_nft(path: impl AsRef<Path>) -> Result<Tensor> {
    read_nft_from(BufReader::new(File::open(path)?))
}
