//! Portable Float Map reading and writing.
//!
//! Files are written little-endian (scale `-1.0`) with rows bottom to top;
//! both byte orders are accepted on read. In memory images are planar with
//! row 0 at the top.
use std::fs;
use std::io;
use std::path::Path;

use ngi_core::scenegen::Image;

#[derive(Debug, thiserror::Error)]
pub enum PfmError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad PFM magic {0:?} (expected \"PF\" or \"Pf\")")]
    BadMagic(String),
    #[error("malformed PFM header: {0}")]
    BadHeader(String),
    #[error("PFM dimensions {width}x{height} overflow")]
    DimensionOverflow { width: u64, height: u64 },
    #[error("PFM data is short: expected {expected} bytes, found {found}")]
    ShortRead { expected: usize, found: usize },
    #[error("expected a {expected}-channel PFM, found {found} channels")]
    Channels { expected: usize, found: usize },
    #[error("PFM can only hold 1 or 3 channels, image has {0}")]
    Unsupported(usize),
    #[error("refusing to write non-finite value at index {0}")]
    NonFinite(usize),
}

/// Serialize `img` (1 or 3 channels) to PFM bytes.
pub fn encode(img: &Image) -> Result<Vec<u8>, PfmError> {
    let magic = match img.channels {
        1 => "Pf",
        3 => "PF",
        c => return Err(PfmError::Unsupported(c)),
    };
    if let Some(i) = img.data.iter().position(|v| !v.is_finite()) {
        return Err(PfmError::NonFinite(i));
    }
    let header = format!("{magic}\n{} {}\n-1.0\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + 4 * img.data.len());
    out.extend_from_slice(header.as_bytes());
    for y in (0..img.height).rev() {
        for x in 0..img.width {
            for c in 0..img.channels {
                out.extend_from_slice(&img.get(c, y, x).to_le_bytes());
            }
        }
    }
    Ok(out)
}

/// Parsed PFM header.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Header {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub little_endian: bool,
    /// Byte offset of the first float.
    pub data_offset: usize,
}

fn token<'a>(bytes: &'a [u8], pos: &mut usize, what: &str) -> Result<&'a str, PfmError> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(PfmError::BadHeader(format!("missing {what}")));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| PfmError::BadHeader(format!("{what} is not ASCII")))
}

pub fn parse_header(bytes: &[u8]) -> Result<Header, PfmError> {
    let magic = bytes.get(..2).unwrap_or(bytes);
    let channels = match magic {
        b"PF" => 3,
        b"Pf" => 1,
        _ => return Err(PfmError::BadMagic(String::from_utf8_lossy(magic).into_owned())),
    };
    let mut pos = 2;
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(PfmError::BadMagic(String::from_utf8_lossy(&bytes[..bytes.len().min(3)]).into_owned()));
    }
    let mut dim = |what| -> Result<u64, PfmError> {
        token(bytes, &mut pos, what)?
            .parse::<u64>()
            .map_err(|_| PfmError::BadHeader(format!("{what} is not an unsigned integer")))
    };
    let (width, height) = (dim("width")?, dim("height")?);
    let scale: f64 = token(bytes, &mut pos, "scale")?
        .parse()
        .map_err(|_| PfmError::BadHeader("scale is not a number".into()))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(PfmError::BadHeader("scale must be nonzero".into()));
    }
    // Exactly one whitespace byte separates the header from the data.
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(PfmError::BadHeader("missing separator after scale".into()));
    }
    let overflow = PfmError::DimensionOverflow { width, height };
    let w = usize::try_from(width).map_err(|_| PfmError::DimensionOverflow { width, height })?;
    let h = usize::try_from(height).map_err(|_| PfmError::DimensionOverflow { width, height })?;
    w.checked_mul(h)
        .and_then(|n| n.checked_mul(channels * 4))
        .filter(|&n| n <= isize::MAX as usize)
        .ok_or(overflow)?;
    Ok(Header {
        width: w,
        height: h,
        channels,
        little_endian: scale < 0.0,
        data_offset: pos + 1,
    })
}

pub fn decode(bytes: &[u8]) -> Result<Image, PfmError> {
    let h = parse_header(bytes)?;
    let expected = h.width * h.height * h.channels * 4;
    let data = &bytes[h.data_offset..];
    if data.len() < expected {
        return Err(PfmError::ShortRead {
            expected,
            found: data.len(),
        });
    }
    let mut img = Image::zeros(h.width, h.height, h.channels);
    for (i, chunk) in data[..expected].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if h.little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let c = i % h.channels;
        let px = i / h.channels;
        let (row, x) = (px / h.width, px % h.width);
        img.set(c, h.height - 1 - row, x, v);
    }
    Ok(img)
}

pub fn write_pfm(img: &Image, path: &Path) -> Result<(), PfmError> {
    fs::write(path, encode(img)?)?;
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<Image, PfmError> {
    decode(&fs::read(path)?)
}

/// Read a PFM and require a channel count.
pub fn read_pfm_channels(path: &Path, channels: usize) -> Result<Image, PfmError> {
    let img = read_pfm(path)?;
    if img.channels != channels {
        return Err(PfmError::Channels {
            expected: channels,
            found: img.channels,
        });
    }
    Ok(img)
}

/// Header of a file without reading its payload.
pub fn read_header(path: &Path) -> Result<Header, PfmError> {
    use std::io::Read;
    let mut buf = Vec::with_capacity(64);
    fs::File::open(path)?.take(256).read_to_end(&mut buf)?;
    parse_header(&buf)
}
