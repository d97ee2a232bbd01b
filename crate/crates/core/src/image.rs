//! 8-bit grayscale images, PGM I/O and the byte/nibble symbol mapping.

use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("not a PGM file (expected P5 or P2)")]
    Magic,
    #[error("malformed PGM header: {0}")]
    Header(&'static str),
    #[error("unsupported maxval {0}; only 8-bit images (255) are supported")]
    MaxVal(u32),
    #[error("pixel data truncated: expected {expected} pixels, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("malformed ASCII pixel value")]
    AsciiPixel,
    #[error("image must have at least one pixel")]
    Empty,
    #[error("pixel buffer of {found} bytes does not match {width}x{height}")]
    Size { width: usize, height: usize, found: usize },
    #[error("cannot repack {0} symbols into bytes (count must be even)")]
    OddSymbols(usize),
    #[error("symbol {0} is not a 4-bit value")]
    Symbol(u8),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::Empty);
        }
        if width.checked_mul(height) != Some(pixels.len()) {
            return Err(ImageError::Size { width, height, found: pixels.len() });
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self, ImageError> {
        let pixels = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn same_size(&self, other: &GrayImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        read_pgm(&fs::read(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        Ok(fs::write(path, write_pgm(self))?)
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.data.get(self.pos) {
            if b == b'#' {
                while self.data.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self) -> Option<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.data.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.data[start..self.pos]).ok()?.parse().ok()
    }
}

/// Parses a binary (P5) or ASCII (P2) PGM with maxval 255.
pub fn read_pgm(data: &[u8]) -> Result<GrayImage, ImageError> {
    let binary = match data.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err(ImageError::Magic),
    };
    let mut cur = Cursor { data, pos: 2 };
    let width = cur.number().ok_or(ImageError::Header("width"))? as usize;
    let height = cur.number().ok_or(ImageError::Header("height"))? as usize;
    let maxval = cur.number().ok_or(ImageError::Header("maxval"))?;
    if maxval != 255 {
        return Err(ImageError::MaxVal(maxval));
    }
    if width == 0 || height == 0 {
        return Err(ImageError::Empty);
    }
    let expected = width.checked_mul(height).ok_or(ImageError::Header("dimensions overflow"))?;
    let pixels = if binary {
        // exactly one whitespace byte separates the header from the raster
        if !data.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(ImageError::Header("missing separator before raster"));
        }
        let raster = &data[cur.pos + 1..];
        if raster.len() < expected {
            return Err(ImageError::Truncated { expected, found: raster.len() });
        }
        raster[..expected].to_vec()
    } else {
        let mut pixels = Vec::with_capacity(expected);
        for _ in 0..expected {
            cur.skip_space_and_comments();
            if cur.pos >= data.len() {
                return Err(ImageError::Truncated { expected, found: pixels.len() });
            }
            let v = cur.number().ok_or(ImageError::AsciiPixel)?;
            pixels.push(u8::try_from(v).map_err(|_| ImageError::AsciiPixel)?);
        }
        pixels
    };
    GrayImage::new(width, height, pixels)
}

/// Canonical binary PGM.
pub fn write_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

/// A flat sequence of 4-bit symbols produced from bytes, high nibble first.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SymbolStream {
    symbols: Vec<u8>,
    byte_len: usize,
}

impl SymbolStream {
    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    pub fn into_symbols(self) -> Vec<u8> {
        self.symbols
    }

    pub fn byte_len(&self) -> usize {
        self.byte_len
    }
}

pub fn bytes_to_symbols(data: &[u8]) -> SymbolStream {
    let symbols = data.iter().flat_map(|&b| [b >> 4, b & 0x0f]).collect();
    SymbolStream { symbols, byte_len: data.len() }
}

pub fn symbols_to_bytes(symbols: &[u8]) -> Result<Vec<u8>, ImageError> {
    if !symbols.len().is_multiple_of(2) {
        return Err(ImageError::OddSymbols(symbols.len()));
    }
    symbols
        .chunks_exact(2)
        .map(|p| match *p {
            [hi, lo] if hi < 16 && lo < 16 => Ok(hi << 4 | lo),
            [hi, lo] => Err(ImageError::Symbol(hi.max(lo))),
            _ => unreachable!(),
        })
        .collect()
}

/// Synthetic diagonal gradient, used where a smooth plain image is needed.
pub fn gradient(width: usize, height: usize) -> Result<GrayImage, ImageError> {
    let span = (width + height).saturating_sub(2).max(1);
    GrayImage::from_fn(width, height, |x, y| ((x + y) * 255 / span) as u8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_p5() {
        let img = read_pgm(b"P5\n1 1\n255\n\x00").unwrap();
        assert_eq!(img, GrayImage::new(1, 1, vec![0]).unwrap());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(read_pgm(b"P5\n1 1\n65535\n\x00\x00"), Err(ImageError::MaxVal(65535))));
        assert!(matches!(read_pgm(b"P6\n1 1\n255\n\x00\x00\x00"), Err(ImageError::Magic)));
        assert!(matches!(read_pgm(b"P5\n2 2\n255\n\x00"), Err(ImageError::Truncated { expected: 4, found: 1 })));
        assert!(matches!(read_pgm(b"P2\n2 1\n255\n3"), Err(ImageError::Truncated { .. })));
        assert!(matches!(read_pgm(b"P2\n1 1\n255\n300"), Err(ImageError::AsciiPixel)));
        assert!(matches!(read_pgm(b"P5\n0 1\n255\n"), Err(ImageError::Empty)));
        assert!(matches!(GrayImage::new(0, 0, vec![]), Err(ImageError::Empty)));
    }

    #[test]
    fn comments_and_ascii() {
        let img = read_pgm(b"P2\n# a comment\n2 2 # trailing\n255\n0 255\n# mid\n17 3\n").unwrap();
        assert_eq!(img.pixels(), &[0, 255, 17, 3]);
        let img = read_pgm(b"P5 #c\n2 1\n255\n\x07\x08").unwrap();
        assert_eq!(img.pixels(), &[7, 8]);
    }

    #[test]
    fn canonical_layout() {
        let img = GrayImage::new(2, 2, vec![1, 2, 3, 4]).unwrap();
        let bytes = write_pgm(&img);
        assert_eq!(&bytes[..11], b"P5\n2 2\n255\n");
        assert_eq!(&bytes[11..], &[1, 2, 3, 4]);
        assert_eq!(bytes.len(), 15);
        assert_eq!(read_pgm(&bytes).unwrap(), img);
    }

    #[test]
    fn nibble_split() {
        assert_eq!(bytes_to_symbols(&[0xAB]).symbols(), &[0xA, 0xB]);
        assert_eq!(bytes_to_symbols(&[0x00]).symbols(), &[0, 0]);
        assert_eq!(bytes_to_symbols(&[1, 2, 3]).byte_len(), 3);
        assert!(matches!(symbols_to_bytes(&[1, 2, 3]), Err(ImageError::OddSymbols(3))));
        assert!(matches!(symbols_to_bytes(&[1, 16]), Err(ImageError::Symbol(16))));
    }

    #[test]
    fn gradient_spans_full_range() {
        let g = gradient(256, 256).unwrap();
        assert_eq!(g.get(0, 0), 0);
        assert_eq!(g.get(255, 255), 255);
        assert!(g.get(10, 0) <= g.get(11, 0));
    }

    #[test]
    fn bundled_camera_image_parses() {
        let img = GrayImage::open(concat!(env!("CARGO_MANIFEST_DIR"), "/testdata/camera256.pgm")).unwrap();
        assert_eq!((img.width(), img.height()), (256, 256));
        let grad = GrayImage::open(concat!(env!("CARGO_MANIFEST_DIR"), "/testdata/gradient256.pgm")).unwrap();
        assert_eq!(grad, gradient(256, 256).unwrap());
    }

    proptest! {
        #[test]
        fn symbol_round_trip(data in prop::collection::vec(any::<u8>(), 0..1024)) {
            let s = bytes_to_symbols(&data);
            prop_assert_eq!(s.symbols().len(), 2 * data.len());
            prop_assert_eq!(symbols_to_bytes(s.symbols()).unwrap(), data);
        }

        #[test]
        fn pgm_round_trip(w in 1usize..20, h in 1usize..20, seed in any::<u8>()) {
            let img = GrayImage::from_fn(w, h, |x, y| (x * 31 + y * 7) as u8 ^ seed).unwrap();
            let bytes = write_pgm(&img);
            let back = read_pgm(&bytes).unwrap();
            prop_assert_eq!(write_pgm(&back), bytes);
            prop_assert_eq!(back, img);
        }
    }
}
