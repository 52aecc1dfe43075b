//! Input images: IDX (`0x00000803`, u8 pixels, big-endian dims) and PGM
//! (`P2` ASCII or `P5` binary).

use std::path::Path;

use aeqsim_core::{FmapDims, Frame};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad IDX magic {0:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")]
    BadIdxMagic(u32),
    #[error("IDX file ends after {got} of {expected} bytes")]
    IdxShortRead { expected: usize, got: usize },
    #[error("PGM: {0}")]
    Pgm(String),
    #[error("unrecognized image format")]
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageSet {
    pub dims: FmapDims,
    /// Row-major images of `dims`.
    pub images: Vec<Vec<u16>>,
}

impl ImageSet {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn frame(&self, k: usize) -> Frame {
        Frame::new(1, self.dims, self.images[k].clone()).expect("image matches set dims")
    }
}

fn be32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<ImageSet, ImageError> {
    if bytes.len() < 16 {
        return Err(ImageError::IdxShortRead { expected: 16, got: bytes.len() });
    }
    let magic = be32(&bytes[0..4]);
    if magic != IDX_IMAGES_MAGIC {
        return Err(ImageError::BadIdxMagic(magic));
    }
    let count = be32(&bytes[4..8]) as usize;
    let rows = be32(&bytes[8..12]) as usize;
    let cols = be32(&bytes[12..16]) as usize;
    let per = rows * cols;
    let expected = count.checked_mul(per).and_then(|n| n.checked_add(16)).unwrap_or(usize::MAX);
    if bytes.len() < expected {
        return Err(ImageError::IdxShortRead { expected, got: bytes.len() });
    }
    let images = bytes[16..expected].chunks_exact(per.max(1)).take(count).map(|c| c.iter().map(|&p| p as u16).collect()).collect();
    Ok(ImageSet { dims: FmapDims::new(rows, cols), images })
}

/// Encodes images as IDX; all must share `dims`.
pub fn encode_idx_images(set: &ImageSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + set.len() * set.dims.neurons());
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    for v in [set.len(), set.dims.height, set.dims.width] {
        out.extend_from_slice(&(v as u32).to_be_bytes());
    }
    for img in &set.images {
        out.extend(img.iter().map(|&p| p.min(255) as u8));
    }
    out
}

struct PgmTokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl PgmTokens<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, ImageError> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::Pgm(format!("expected {what} at byte {start}")))
    }
}

pub fn parse_pgm(bytes: &[u8]) -> Result<ImageSet, ImageError> {
    let binary = match bytes.get(..2) {
        Some(b"P2") => false,
        Some(b"P5") => true,
        _ => return Err(ImageError::Pgm("missing P2/P5 magic".into())),
    };
    let mut tok = PgmTokens { bytes, pos: 2 };
    let width = tok.number("width")?;
    let height = tok.number("height")?;
    let maxval = tok.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(ImageError::Pgm(format!("maxval {maxval} out of range")));
    }
    let n = width * height;
    let mut pixels = Vec::with_capacity(n.min(1 << 24));
    if binary {
        // exactly one whitespace byte separates the header from the raster
        let start = tok.pos + 1;
        let wide = maxval > 255;
        let need = n * if wide { 2 } else { 1 };
        let raster = bytes.get(start..start + need).ok_or_else(|| ImageError::Pgm(format!("raster needs {need} bytes")))?;
        if wide {
            pixels.extend(raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])));
        } else {
            pixels.extend(raster.iter().map(|&p| p as u16));
        }
    } else {
        for _ in 0..n {
            pixels.push(tok.number("pixel")?.min(maxval) as u16);
        }
    }
    Ok(ImageSet { dims: FmapDims::new(height, width), images: vec![pixels] })
}

/// Sniffs the format from the leading bytes.
pub fn parse_images(bytes: &[u8]) -> Result<ImageSet, ImageError> {
    match bytes.get(..2) {
        Some(b"P2") | Some(b"P5") => parse_pgm(bytes),
        Some([0, 0]) => parse_idx_images(bytes),
        _ => Err(ImageError::Unknown),
    }
}

pub fn load_images(path: &Path) -> Result<ImageSet, ImageError> {
    let bytes = std::fs::read(path).map_err(|source| ImageError::Io { path: path.display().to_string(), source })?;
    parse_images(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idx_dims_are_big_endian() {
        let mut b = vec![0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 3];
        b.extend([1, 2, 3, 4, 5, 6]);
        let set = parse_idx_images(&b).unwrap();
        assert_eq!(set.dims, FmapDims::new(2, 3));
        assert_eq!(set.images, vec![vec![1, 2, 3, 4, 5, 6]]);
        assert_eq!(encode_idx_images(&set), b);
    }

    #[test]
    fn idx_errors() {
        let mut b = vec![0, 0, 8, 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 3];
        assert!(matches!(parse_idx_images(&b), Err(ImageError::BadIdxMagic(0x801))));
        b[3] = 3;
        b.extend([1, 2]);
        assert!(matches!(parse_idx_images(&b), Err(ImageError::IdxShortRead { expected: 22, got: 18 })));
    }

    #[test]
    fn pgm_ascii_with_comment() {
        let s = b"P2\n# tiny\n3 2\n255\n0 10 20\n30 40 255\n";
        let set = parse_pgm(s).unwrap();
        assert_eq!(set.dims, FmapDims::new(2, 3));
        assert_eq!(set.images[0], vec![0, 10, 20, 30, 40, 255]);
    }

    #[test]
    fn pgm_binary() {
        let mut s = b"P5 2 2 255\n".to_vec();
        s.extend([9, 8, 7, 6]);
        assert_eq!(parse_images(&s).unwrap().images[0], vec![9, 8, 7, 6]);
        let mut w = b"P5 1 1 1000\n".to_vec();
        w.extend([0x03, 0xe8]);
        assert_eq!(parse_pgm(&w).unwrap().images[0], vec![1000]);
        assert!(parse_pgm(b"P5 2 2 255\n\x01").is_err());
    }
}
