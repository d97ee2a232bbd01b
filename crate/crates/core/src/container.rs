//! The `PLC1` ciphertext container and the image-level encrypt/decrypt pipeline.
//!
//! Layout (multi-byte integers big-endian):
//!
//! ```text
//! "PLC1" | version u8 | field id u8 | ℓ u8 | prec flag u8 | ι u32 | W u32 | H u32
//! | IV: 2ℓ nibbles, two per byte | payload: ℓ(ι + 2WH) nibbles, two per byte
//! ```
//!
//! An odd nibble count is padded with a zero low nibble.

use rand::Rng;
use thiserror::Error;

use crate::gf::FieldSpec;
use crate::image::{bytes_to_symbols, symbols_to_bytes, GrayImage, ImageError};
use crate::kernel::{CipherError, CipherParams};
use crate::key::{init_from_iv, InitVector, KeyError};

pub const MAGIC: &[u8; 4] = b"PLC1";
pub const VERSION: u8 = 1;
pub const FIELD_GF16: u8 = 0;
const HEADER_LEN: usize = 20;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("not a PLC1 container")]
    Magic,
    #[error("unsupported container version {0}")]
    Version(u8),
    #[error("unsupported field id {0}")]
    FieldId(u8),
    #[error("invalid header field: {0}")]
    Header(&'static str),
    #[error("container truncated: need {expected} bytes, have {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{found} trailing bytes after the payload")]
    Trailing { found: usize },
    #[error("nonzero padding nibble")]
    Padding,
    #[error("the image pipeline only supports GF(16), got {0}")]
    Field(FieldSpec),
    #[error("container was made with ell={container}, parameters have ell={params}")]
    Ell { container: usize, params: usize },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error(transparent)]
    Cipher(#[from] CipherError),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Container {
    pub ell: usize,
    pub prec: u32,
    pub iota: usize,
    pub width: usize,
    pub height: usize,
    pub iv: InitVector,
    /// Cipher symbols, whitening vectors included.
    pub payload: Vec<u8>,
}

fn pack_nibbles(symbols: &[u8], out: &mut Vec<u8>) {
    out.extend(symbols.chunks(2).map(|p| p[0] << 4 | p.get(1).copied().unwrap_or(0)));
}

fn unpack_nibbles(bytes: &[u8], count: usize) -> Result<Vec<u8>, ContainerError> {
    if count % 2 == 1 && bytes.last().is_some_and(|b| b & 0x0f != 0) {
        return Err(ContainerError::Padding);
    }
    let mut symbols = bytes_to_symbols(bytes).into_symbols();
    symbols.truncate(count);
    Ok(symbols)
}

impl Container {
    pub fn expected_payload_len(ell: usize, iota: usize, width: usize, height: usize) -> Option<usize> {
        width.checked_mul(height)?.checked_mul(2)?.checked_add(iota)?.checked_mul(ell)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.ell + self.payload.len().div_ceil(2));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&[VERSION, FIELD_GF16, self.ell as u8, (self.prec == 32) as u8]);
        for v in [self.iota, self.width, self.height] {
            out.extend_from_slice(&(v as u32).to_be_bytes());
        }
        pack_nibbles(self.iv.words(), &mut out);
        pack_nibbles(&self.payload, &mut out);
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, ContainerError> {
        if data.len() < HEADER_LEN {
            return Err(if data.starts_with(MAGIC) || data.len() < 4 {
                ContainerError::Truncated { expected: HEADER_LEN, found: data.len() }
            } else {
                ContainerError::Magic
            });
        }
        if &data[..4] != MAGIC {
            return Err(ContainerError::Magic);
        }
        if data[4] != VERSION {
            return Err(ContainerError::Version(data[4]));
        }
        if data[5] != FIELD_GF16 {
            return Err(ContainerError::FieldId(data[5]));
        }
        let ell = data[6] as usize;
        if !(1..=16).contains(&ell) {
            return Err(ContainerError::Header("ell"));
        }
        let prec = match data[7] {
            0 => 16,
            1 => 32,
            _ => return Err(ContainerError::Header("precision flag")),
        };
        let word = |i: usize| u32::from_be_bytes(data[i..i + 4].try_into().expect("4 bytes")) as usize;
        let (iota, width, height) = (word(8), word(12), word(16));
        if width == 0 || height == 0 {
            return Err(ContainerError::Header("image dimensions"));
        }
        let n_payload =
            Self::expected_payload_len(ell, iota, width, height).ok_or(ContainerError::Header("payload size overflows"))?;
        let iv_bytes = ell; // 2ℓ nibbles
        let expected = HEADER_LEN + iv_bytes + n_payload.div_ceil(2);
        if data.len() < expected {
            return Err(ContainerError::Truncated { expected, found: data.len() });
        }
        if data.len() > expected {
            return Err(ContainerError::Trailing { found: data.len() - expected });
        }
        let iv_words = unpack_nibbles(&data[HEADER_LEN..HEADER_LEN + iv_bytes], 2 * ell)?;
        let iv = InitVector::new(FieldSpec::Gf16, iv_words, ell)?;
        let payload = unpack_nibbles(&data[HEADER_LEN + iv_bytes..], n_payload)?;
        Ok(Container { ell, prec, iota, width, height, iv, payload })
    }

    /// The payload without the whitening vectors, repacked as a
    /// `(ℓ·W) × H` byte image; row `y` holds the cipher bytes of plain row `y`.
    pub fn cipher_image(&self) -> Result<GrayImage, ContainerError> {
        let bytes = symbols_to_bytes(&self.payload[self.ell * self.iota..])?;
        Ok(GrayImage::new(self.ell * self.width, self.height, bytes)?)
    }
}

fn check_gf16(params: &CipherParams) -> Result<(), ContainerError> {
    match params.field() {
        FieldSpec::Gf16 => Ok(()),
        other => Err(ContainerError::Field(other)),
    }
}

/// Encrypts with an explicit IV and whitening prefix.
pub fn encrypt_image_with(
    params: &CipherParams,
    prec: u32,
    img: &GrayImage,
    iv: &InitVector,
    whitening: &[u8],
) -> Result<Container, ContainerError> {
    check_gf16(params)?;
    let state = init_from_iv(iv, params)?;
    let symbols = bytes_to_symbols(img.pixels());
    let payload = params.encrypt_stream(state, whitening, symbols.symbols())?;
    Ok(Container {
        ell: params.ell(),
        prec,
        iota: params.iota(),
        width: img.width(),
        height: img.height(),
        iv: iv.clone(),
        payload,
    })
}

/// Encrypts with a fresh IV and whitening prefix drawn from `rng`.
pub fn encrypt_image<R: Rng + ?Sized>(
    params: &CipherParams,
    prec: u32,
    img: &GrayImage,
    rng: &mut R,
) -> Result<Container, ContainerError> {
    let iv = InitVector::random(rng, params.field(), params.ell());
    let whitening: Vec<u8> = (0..params.iota()).map(|_| rng.random_range(0..16)).collect();
    encrypt_image_with(params, prec, img, &iv, &whitening)
}

/// Decrypts a container. The whitening length recorded in the container
/// takes precedence over the parameters' default.
pub fn decrypt_image(params: &CipherParams, c: &Container) -> Result<GrayImage, ContainerError> {
    check_gf16(params)?;
    if c.ell != params.ell() {
        return Err(ContainerError::Ell { container: c.ell, params: params.ell() });
    }
    let params = params.clone().with_iota(c.iota);
    let state = init_from_iv(&c.iv, &params)?;
    let symbols = params.decrypt_stream(state, &c.payload)?;
    Ok(GrayImage::new(c.width, c.height, symbols_to_bytes(&symbols)?)?)
}
