//! Bitstream-level JPEG encryption with restart markers.
//!
//! The pipeline works directly on baseline JPEG files: restructure a file to
//! a chosen restart interval, XOR the additional bits of Pattern-4 scan
//! bytes with an HMAC_DRBG keystream, and permute the extended blocks
//! delimited by the RST markers. Encrypted files keep the JPEG format and
//! the exact file size, and decode with any standard JPEG decoder.
//!
//! The companion [`analysis`] module implements the ciphertext-only
//! evaluation suite: key-space accounting, key-sensitivity experiments, the
//! non-zero-count sketch attack, and histogram analysis.

pub mod analysis;
pub mod bitstream;
pub mod cipher;
pub mod entropy;
pub mod pixels;

use thiserror::Error;

/// Crate-level error, a union of the per-layer errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Bitstream(#[from] bitstream::BitstreamError),
    #[error(transparent)]
    Entropy(#[from] entropy::EntropyError),
    #[error(transparent)]
    Cipher(#[from] cipher::CipherError),
    #[error(transparent)]
    Pixels(#[from] pixels::PixelsError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable class name, used by the CLI error JSON.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Bitstream(e) => match e {
                bitstream::BitstreamError::MalformedMarker(_) => "MalformedMarker",
                bitstream::BitstreamError::UnsupportedCoding(_) => "UnsupportedCoding",
                bitstream::BitstreamError::MultipleScans => "MultipleScans",
                bitstream::BitstreamError::NoRestartMarkers => "NoRestartMarkers",
                bitstream::BitstreamError::InconsistentMarkers(_) => "InconsistentMarkers",
            },
            Error::Entropy(e) => match e {
                entropy::EntropyError::InvalidHuffmanSpec(_) => "InvalidHuffmanSpec",
                entropy::EntropyError::MissingTable(_) => "MissingTable",
                entropy::EntropyError::UnsupportedSampling(_) => "UnsupportedSampling",
                entropy::EntropyError::MalformedSegment(_) => "MalformedSegment",
                entropy::EntropyError::HuffmanDecodeFailure { .. } => "HuffmanDecodeFailure",
                entropy::EntropyError::TruncatedScan => "TruncatedScan",
                entropy::EntropyError::MarkerDesync(_) => "MarkerDesyncError",
                entropy::EntropyError::TrailingScanData(_) => "TrailingScanData",
                entropy::EntropyError::UnencodableValue(_) => "UnencodableValue",
                entropy::EntropyError::InvalidRestartInterval => "InvalidRestartInterval",
            },
            Error::Cipher(e) => match e {
                cipher::CipherError::BadKeyLength(_) => "BadKeyLength",
                cipher::CipherError::BadKeyEncoding(_) => "BadKeyEncoding",
                cipher::CipherError::RecipeMismatch(_) => "RecipeMismatch",
                cipher::CipherError::EmptyRegion => "EmptyRegion",
                cipher::CipherError::RegionOutOfRange(_) => "RegionOutOfRange",
            },
            Error::Pixels(e) => match e {
                pixels::PixelsError::DimensionMismatch { .. } => "DimensionMismatch",
                pixels::PixelsError::ChannelMismatch { .. } => "ChannelMismatch",
                pixels::PixelsError::Export(_) => "ExportError",
            },
            Error::Io(_) => "IoError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
