//! Radiance RGBE (`.hdr`) and PFM readers, and a PFM writer.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tasks::envmap::EnvMap;

const MAX_DIMENSION: usize = 1 << 16;

/// Loads a lat-long map, choosing the decoder from the file's magic bytes.
pub fn load_hdr(path: impl AsRef<Path>) -> Result<EnvMap> {
    decode_hdr(&fs::read(path)?)
}

pub fn decode_hdr(bytes: &[u8]) -> Result<EnvMap> {
    if bytes.starts_with(b"#?") {
        decode_rgbe(bytes)
    } else if bytes.starts_with(b"PF") || bytes.starts_with(b"Pf") {
        decode_pfm(bytes)
    } else {
        Err(Error::MalformedHeader("neither a Radiance nor a PFM file".into()))
    }
}

/// Splits off one `\n`-terminated line.
fn take_line<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    let rest = &bytes[*pos..];
    let n = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::MalformedHeader("unterminated header line".into()))?;
    *pos += n + 1;
    Ok(&rest[..n])
}

fn parse_dim(tok: &str) -> Result<usize> {
    let v: usize = tok.parse().map_err(|_| Error::MalformedHeader(format!("bad dimension {tok:?}")))?;
    if v == 0 || v > MAX_DIMENSION {
        return Err(Error::MalformedHeader(format!("dimension {v} out of range")));
    }
    Ok(v)
}

/// `m * 2^(e - 136)`; exponent 0 encodes black.
#[inline]
pub fn rgbe_to_rgb(p: [u8; 4]) -> [f32; 3] {
    if p[3] == 0 {
        return [0.0; 3];
    }
    let f = 2f32.powi(p[3] as i32 - 136);
    [p[0] as f32 * f, p[1] as f32 * f, p[2] as f32 * f]
}

pub fn decode_rgbe(bytes: &[u8]) -> Result<EnvMap> {
    let mut pos = 0;
    let magic = take_line(bytes, &mut pos)?;
    if !magic.starts_with(b"#?") {
        return Err(Error::MalformedHeader("missing #? signature".into()));
    }
    loop {
        let line = take_line(bytes, &mut pos)?;
        if line.is_empty() {
            break;
        }
        if let Some(fmt) = line.strip_prefix(b"FORMAT=") {
            if fmt != b"32-bit_rle_rgbe" {
                return Err(Error::UnsupportedVariant(format!(
                    "pixel format {}",
                    String::from_utf8_lossy(fmt)
                )));
            }
        }
    }
    let res = take_line(bytes, &mut pos)?;
    let res = std::str::from_utf8(res).map_err(|_| Error::MalformedHeader("non-text resolution line".into()))?;
    let toks: Vec<&str> = res.split_whitespace().collect();
    if toks.len() != 4 {
        return Err(Error::MalformedHeader(format!("resolution line {res:?}")));
    }
    if toks[0] != "-Y" || toks[2] != "+X" {
        if ["+Y", "-Y", "+X", "-X"].contains(&toks[0]) && ["+Y", "-Y", "+X", "-X"].contains(&toks[2]) {
            return Err(Error::UnsupportedVariant(format!("scanline orientation {res:?}")));
        }
        return Err(Error::MalformedHeader(format!("resolution line {res:?}")));
    }
    let height = parse_dim(toks[1])?;
    let width = parse_dim(toks[3])?;

    let mut data = &bytes[pos..];
    let mut pixels = Vec::with_capacity(width.min(data.len()) * height.min(data.len()) * 3);
    let mut scan = vec![0u8; width * 4];
    for row in 0..height {
        read_scanline(&mut data, width, &mut scan, row)?;
        for px in scan.chunks_exact(4) {
            pixels.extend_from_slice(&rgbe_to_rgb([px[0], px[1], px[2], px[3]]));
        }
    }
    EnvMap::new(width, height, pixels)
}

fn take<'a>(data: &mut &'a [u8], n: usize, row: usize) -> Result<&'a [u8]> {
    if data.len() < n {
        return Err(Error::Truncated(format!("scanline {row} ends early")));
    }
    let (head, tail) = data.split_at(n);
    *data = tail;
    Ok(head)
}

/// Reads one scanline into `out` as interleaved RGBE quadruples.
fn read_scanline(data: &mut &[u8], width: usize, out: &mut [u8], row: usize) -> Result<()> {
    let rle_possible = (8..0x8000).contains(&width);
    if data.len() >= 4 && data[0] == 2 && data[1] == 2 && data[2] & 0x80 == 0 && rle_possible {
        let head = take(data, 4, row)?;
        let declared = ((head[2] as usize) << 8) | head[3] as usize;
        if declared != width {
            return Err(Error::BadRunLength(format!(
                "scanline {row} declares width {declared}, image has {width}"
            )));
        }
        for c in 0..4 {
            let mut x = 0;
            while x < width {
                let count = take(data, 1, row)?[0] as usize;
                if count > 128 {
                    let n = count - 128;
                    if x + n > width {
                        return Err(Error::BadRunLength(format!("run overflows scanline {row}")));
                    }
                    let v = take(data, 1, row)?[0];
                    for k in 0..n {
                        out[(x + k) * 4 + c] = v;
                    }
                    x += n;
                } else {
                    if count == 0 || x + count > width {
                        return Err(Error::BadRunLength(format!("bad literal run in scanline {row}")));
                    }
                    let lit = take(data, count, row)?;
                    for (k, &v) in lit.iter().enumerate() {
                        out[(x + k) * 4 + c] = v;
                    }
                    x += count;
                }
            }
        }
        return Ok(());
    }
    let flat = take(data, width * 4, row)?;
    if flat.chunks_exact(4).any(|p| p[0] == 1 && p[1] == 1 && p[2] == 1) {
        return Err(Error::UnsupportedVariant("old-style run-length encoding".into()));
    }
    out.copy_from_slice(flat);
    Ok(())
}

/// Next whitespace-delimited header token; exactly one whitespace byte after
/// it is consumed.
fn pfm_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if *pos >= bytes.len() || start == *pos {
        return Err(Error::MalformedHeader("PFM header ends early".into()));
    }
    let tok = std::str::from_utf8(&bytes[start..*pos]).map_err(|_| Error::MalformedHeader("non-text PFM header".into()))?;
    *pos += 1;
    Ok(tok)
}

pub fn decode_pfm(bytes: &[u8]) -> Result<EnvMap> {
    let mut pos = 0;
    let channels = match pfm_token(bytes, &mut pos)? {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(Error::MalformedHeader(format!("PFM magic {other:?}"))),
    };
    let width = parse_dim(pfm_token(bytes, &mut pos)?)?;
    let height = parse_dim(pfm_token(bytes, &mut pos)?)?;
    let scale_tok = pfm_token(bytes, &mut pos)?;
    let scale: f64 = scale_tok
        .parse()
        .map_err(|_| Error::MalformedHeader(format!("PFM scale {scale_tok:?}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::MalformedHeader(format!("PFM scale {scale}")));
    }
    let little = scale < 0.0;
    let need = width * height * channels * 4;
    let data = &bytes[pos..];
    if data.len() < need {
        return Err(Error::Truncated(format!("PFM needs {need} data bytes, found {}", data.len())));
    }
    let mut pixels = vec![0f32; width * height * 3];
    for (k, b) in data[..need].chunks_exact(4).enumerate() {
        let raw = [b[0], b[1], b[2], b[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let px = k / channels;
        let (file_row, col) = (px / width, px % width);
        // rows are stored bottom to top
        let row = height - 1 - file_row;
        let o = (row * width + col) * 3;
        if channels == 3 {
            pixels[o + k % 3] = v;
        } else {
            pixels[o..o + 3].fill(v);
        }
    }
    EnvMap::new(width, height, pixels)
}

/// Little-endian RGB PFM of `rgb` (row 0 first, written bottom to top).
pub fn encode_pfm(width: usize, height: usize, rgb: &[f32]) -> Result<Vec<u8>> {
    if rgb.len() != width * height * 3 {
        return Err(Error::Shape(format!("{} values for a {width}x{height} RGB image", rgb.len())));
    }
    let mut out = format!("PF\n{width} {height}\n-1.0\n").into_bytes();
    for row in (0..height).rev() {
        for v in &rgb[row * width * 3..(row + 1) * width * 3] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_pfm(path: impl AsRef<Path>, width: usize, height: usize, rgb: &[f32]) -> Result<()> {
    let bytes = encode_pfm(width, height, rgb)?;
    fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}
