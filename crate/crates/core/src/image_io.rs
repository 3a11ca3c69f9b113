//! Binary PGM (P5) images, 8 or 16 bits per sample, scaled to `[0, 1]`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn fmt_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        format: "PGM",
        offset: offset as u64,
        message: message.into(),
    }
}

struct Header {
    width: usize,
    height: usize,
    maxval: u32,
    data_start: usize,
}

fn skip_space_and_comments(b: &[u8], mut i: usize) -> usize {
    loop {
        while i < b.len() && b[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < b.len() && b[i] == b'#' {
            while i < b.len() && b[i] != b'\n' {
                i += 1;
            }
        } else {
            return i;
        }
    }
}

fn read_uint(b: &[u8], i: usize, what: &str) -> Result<(u32, usize)> {
    let i = skip_space_and_comments(b, i);
    let start = i;
    let mut j = i;
    while j < b.len() && b[j].is_ascii_digit() {
        j += 1;
    }
    if j == start {
        return Err(fmt_err(start, format!("expected {what}")));
    }
    let v = std::str::from_utf8(&b[start..j])
        .expect("ascii digits")
        .parse::<u32>()
        .map_err(|e| fmt_err(start, format!("{what}: {e}")))?;
    Ok((v, j))
}

fn parse_header(b: &[u8]) -> Result<Header> {
    if b.len() < 2 || &b[..2] != b"P5" {
        let msg = if b.len() >= 2 && b[0] == b'P' && b[1].is_ascii_digit() {
            format!("unsupported PGM variant P{}; only binary P5 is supported", b[1] as char)
        } else {
            "missing P5 magic".to_string()
        };
        return Err(fmt_err(0, msg));
    }
    let (w, i) = read_uint(b, 2, "width")?;
    let (h, i) = read_uint(b, i, "height")?;
    let (maxval, i) = read_uint(b, i, "maxval")?;
    if w == 0 || h == 0 {
        return Err(fmt_err(i, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(fmt_err(i, format!("maxval {maxval} outside 1..=65535")));
    }
    if i >= b.len() || !b[i].is_ascii_whitespace() {
        return Err(fmt_err(i, "expected a single whitespace byte before pixel data"));
    }
    Ok(Header {
        width: w as usize,
        height: h as usize,
        maxval,
        data_start: i + 1,
    })
}

/// Decodes P5 bytes to an `[height, width]` tensor of `pixel / maxval`.
pub fn decode_pgm(bytes: &[u8]) -> Result<Tensor> {
    let hd = parse_header(bytes)?;
    let n = hd.width * hd.height;
    let wide = hd.maxval > 255;
    let need = n * if wide { 2 } else { 1 };
    let data = &bytes[hd.data_start..];
    if data.len() < need {
        return Err(fmt_err(
            hd.data_start + data.len(),
            format!("truncated pixel data: need {need} bytes, found {}", data.len()),
        ));
    }
    let m = hd.maxval as f64;
    let px: Vec<f64> = if wide {
        data[..need]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / m)
            .collect()
    } else {
        data[..n].iter().map(|&v| v as f64 / m).collect()
    };
    if px.iter().any(|&v| v > 1.0) {
        return Err(fmt_err(hd.data_start, "pixel value exceeds maxval"));
    }
    Tensor::new(vec![hd.height, hd.width], px)
}

/// Encodes a 2D tensor, clamped to `[0, 1]` and rounded, with the given
/// bit depth (8 or 16).
pub fn encode_pgm(image: &Tensor, bits: u32) -> Result<Vec<u8>> {
    let (h, w) = match image.shape() {
        [h, w] => (*h, *w),
        s => {
            return Err(Error::BadShape {
                shape: s.to_vec(),
                reason: "PGM images are 2D".into(),
            })
        }
    };
    let maxval: u32 = match bits {
        8 => 255,
        16 => 65535,
        _ => return Err(Error::invalid(format!("unsupported bit depth {bits}"))),
    };
    let mut out = format!("P5\n{w} {h}\n{maxval}\n").into_bytes();
    for &v in image.data() {
        let q = (v.clamp(0.0, 1.0) * maxval as f64).round() as u32;
        if bits == 8 {
            out.push(q as u8);
        } else {
            out.extend_from_slice(&(q as u16).to_be_bytes());
        }
    }
    Ok(out)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_pgm(&std::fs::read(path)?)
}

pub fn write_pgm(path: impl AsRef<Path>, image: &Tensor, bits: u32) -> Result<()> {
    std::fs::write(path, encode_pgm(image, bits)?)?;
    Ok(())
}
