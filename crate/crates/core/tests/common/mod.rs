//! Shared helpers for the integration and acceptance suites.

#![allow(dead_code)]

pub mod oracle;

use std::path::{Path, PathBuf};

use rstcipher::bitstream::{self, SegmentedJpeg};
use rstcipher::cipher::{EncryptionKey, EncryptionRecipe, Region, KEY_LEN};
use rstcipher::entropy;

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn fixture_bytes(name: &str) -> Vec<u8> {
    let path = fixtures_dir().join(name);
    std::fs::read(&path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

pub fn load_fixture(name: &str) -> SegmentedJpeg {
    bitstream::parse(&fixture_bytes(name)).unwrap_or_else(|e| panic!("parsing {name}: {e}"))
}

/// The twenty libjpeg-encoded Q80 4:2:0 corpus images.
pub fn desk_fixture_names() -> Vec<String> {
    (1..=20).map(|i| format!("desk_{i:02}.jpg")).collect()
}

/// The 4:4:4 re-encodes of the first four corpus images.
pub fn desk444_fixture_names() -> Vec<String> {
    (1..=4).map(|i| format!("desk444_{i:02}.jpg")).collect()
}

/// Deterministic test key: byte pattern derived from a small seed.
pub fn test_key(seed: u8) -> EncryptionKey {
    let mut bytes = [0u8; KEY_LEN];
    for (i, b) in bytes.iter_mut().enumerate() {
        *b = seed.wrapping_mul(31).wrapping_add(i as u8 * 17) ^ 0x5A;
    }
    EncryptionKey::from_bytes(&bytes).unwrap()
}

pub fn test_recipe(ri: u16, seed: u8) -> EncryptionRecipe {
    EncryptionRecipe::new(ri, Region::All, test_key(seed), test_key(seed.wrapping_add(128)))
}

/// Restructure a parsed file to the given restart interval.
pub fn restructured(jpeg: &SegmentedJpeg, ri: u16) -> SegmentedJpeg {
    let tables = entropy::build_tables(jpeg).unwrap();
    entropy::restructure(jpeg, &tables, ri).unwrap()
}
