//! PLCIE: a self-synchronizing pseudo-linear chaotic stream cipher for 8-bit
//! grayscale images, with the statistics and channel tooling used to
//! evaluate it.
//!
//! ```
//! use plcie::{container, derive_params, FieldSpec, GrayImage, KeyMaterial, Mode};
//! use rand::SeedableRng;
//!
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
//! let key = KeyMaterial::random(&mut rng, 16, 6, 8).unwrap();
//! let params = derive_params(&key, 8, FieldSpec::Gf16, Mode::SelfSynchronous).unwrap();
//! let img = GrayImage::from_fn(4, 4, |x, y| (16 * y + x) as u8).unwrap();
//! let c = container::encrypt_image(&params, key.prec(), &img, &mut rng).unwrap();
//! assert_eq!(container::decrypt_image(&params, &c).unwrap(), img);
//! ```
//!
//! There is no integrity protection: decrypting with the wrong key succeeds
//! and yields noise.

pub mod channel;
pub mod chaos;
pub mod container;
pub mod gf;
pub mod image;
pub mod kernel;
pub mod key;
pub mod permutation;
pub mod stats;

pub use container::{decrypt_image, encrypt_image, Container};
pub use gf::{FieldMatrix, FieldSpec, FieldVector};
pub use image::GrayImage;
pub use kernel::{CipherParams, CipherState, Mode};
pub use key::{derive_params, init_from_iv, InitVector, KeyMaterial};
pub use permutation::KeyPermutation;

use thiserror::Error;

/// Coarse error classes, used for process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    /// Invalid arguments or inconsistent inputs.
    Usage,
    /// Malformed files.
    Format,
    /// Rejected keys or violated cipher constraints.
    Crypto,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Gf(#[from] gf::GfError),
    #[error(transparent)]
    Chaos(#[from] chaos::ChaosError),
    #[error(transparent)]
    Permutation(#[from] permutation::PermutationError),
    #[error(transparent)]
    Cipher(#[from] kernel::CipherError),
    #[error(transparent)]
    Key(#[from] key::KeyError),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Container(#[from] container::ContainerError),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
    #[error(transparent)]
    Channel(#[from] channel::ChannelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use ErrorKind::*;
        match self {
            Error::Gf(_) | Error::Usage(_) => Usage,
            Error::Chaos(_) | Error::Permutation(_) | Error::Cipher(_) => Crypto,
            Error::Key(e) => key_kind(e),
            Error::Image(e) => image_kind(e),
            Error::Container(e) => container_kind(e),
            Error::Stats(e) => match e {
                stats::StatsError::Container(c) => container_kind(c),
                stats::StatsError::Csv(_) | stats::StatsError::Json(_) => Io,
                stats::StatsError::NoKeyFlip => Crypto,
                _ => Usage,
            },
            Error::Channel(e) => match e {
                channel::ChannelError::Cipher(_) => Crypto,
                channel::ChannelError::Csv(_) => Io,
                _ => Usage,
            },
            Error::Io(_) => Io,
        }
    }
}

fn key_kind(e: &key::KeyError) -> ErrorKind {
    use key::KeyError::*;
    match e {
        Length { .. } | KeyFile(_) | IvLength { .. } | IvSymbol(_) | Nibble(_) | Width { .. } | TriplePosition { .. } => {
            ErrorKind::Format
        }
        Ell(_) | Precision(_) => ErrorKind::Usage,
        TooManyTriples { .. } | WeakKey(_) | RetryExhausted(_) | SingularF(_) | Cipher(_) => ErrorKind::Crypto,
    }
}

fn image_kind(e: &image::ImageError) -> ErrorKind {
    match e {
        image::ImageError::Io(_) => ErrorKind::Io,
        _ => ErrorKind::Format,
    }
}

fn container_kind(e: &container::ContainerError) -> ErrorKind {
    use container::ContainerError::*;
    match e {
        Image(i) => image_kind(i),
        Key(k) => key_kind(k),
        Cipher(_) => ErrorKind::Crypto,
        Field(_) | Ell { .. } => ErrorKind::Usage,
        _ => ErrorKind::Format,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_kinds() {
        assert_eq!(Error::from(key::KeyError::WeakKey("x")).kind(), ErrorKind::Crypto);
        assert_eq!(Error::from(key::KeyError::Length { bits: 1, ell: 8 }).kind(), ErrorKind::Format);
        assert_eq!(Error::from(image::ImageError::Magic).kind(), ErrorKind::Format);
        assert_eq!(Error::from(stats::StatsError::SizeMismatch(1, 1, 2, 2)).kind(), ErrorKind::Usage);
        assert_eq!(Error::from(container::ContainerError::Magic).kind(), ErrorKind::Format);
        assert_eq!(Error::from(std::io::Error::other("x")).kind(), ErrorKind::Io);
    }
}
