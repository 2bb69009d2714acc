//! Bit-exact scan walk: label the role of every scan bit, classify every
//! scan byte into the five byte patterns, and decode the symbol stream.

use std::collections::BTreeSet;
use std::ops::Range;

use serde_json::json;

use super::{CodingTables, EntropyError, HuffmanTable};
use crate::bitstream::{SegmentedJpeg, MARKER_PREFIX, RST0, RST7};

/// Role of a single scan bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitRole {
    /// Part of a Huffman code word.
    HuffmanCode,
    /// Magnitude bit following a DC or AC category code.
    AdditionalBit,
    /// 1-fill before a restart marker or at the end of the scan.
    PaddingBit,
    /// Bit of a stuffed `00` byte following a data `FF`.
    StuffedZero,
    /// Bit of an embedded RST marker.
    MarkerByte,
}

/// Per-byte pattern class.
///
/// `P1`..`P5` follow the five byte patterns used by the encryption
/// conditions; `Marker` covers RST marker bytes and `Padded` covers any
/// byte containing fill bits. Only `P4` bytes (a Huffman-code zero bit plus
/// at least one additional bit) are ever encrypted: flipping their
/// additional bits cannot produce `FF`, so the stuffing structure and the
/// file size are preserved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByteClass {
    P1,
    P2,
    P3,
    P4,
    P5,
    Marker,
    Padded,
}

impl ByteClass {
    /// Compact one-character code used by the JSON export.
    pub fn code(self) -> char {
        match self {
            ByteClass::P1 => '1',
            ByteClass::P2 => '2',
            ByteClass::P3 => '3',
            ByteClass::P4 => '4',
            ByteClass::P5 => '5',
            ByteClass::Marker => 'M',
            ByteClass::Padded => 'X',
        }
    }
}

/// One AC entry exactly as it appears in the bitstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcSymbol {
    /// End-of-block (run/size 0/0).
    Eob,
    /// Sixteen zero coefficients (run/size 15/0).
    Zrl,
    Coef { run: u8, size: u8, value: i16 },
}

/// One decoded 8x8 data unit: the DC differential as coded plus the AC
/// symbol list verbatim. `dc_abs` accumulates the prediction so the unit can
/// be re-encoded under a different restart structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataUnit {
    pub component: u8,
    pub dc_category: u8,
    pub dc_diff: i16,
    pub dc_abs: i64,
    pub ac: Vec<AcSymbol>,
}

impl DataUnit {
    /// Count of non-zero coefficients as visible in the bitstream: the DC
    /// differential counts as one when its category is non-zero, plus every
    /// AC coefficient symbol. Invariant under additional-bit encryption.
    pub fn nonzero_count(&self) -> u8 {
        let ac = self.ac.iter().filter(|s| matches!(s, AcSymbol::Coef { .. })).count();
        (self.dc_category > 0) as u8 + ac as u8
    }

    /// Quantized coefficients in zigzag order, DC resolved to its absolute
    /// (prediction-applied) value.
    pub fn coefficients_zigzag(&self) -> [i32; 64] {
        let mut out = [0i32; 64];
        out[0] = self.dc_abs as i32;
        let mut k = 1usize;
        for sym in &self.ac {
            match *sym {
                AcSymbol::Eob => break,
                AcSymbol::Zrl => k += 16,
                AcSymbol::Coef { run, value, .. } => {
                    k += run as usize;
                    if k < 64 {
                        out[k] = value as i32;
                    }
                    k += 1;
                }
            }
        }
        out
    }
}

/// The symbol stream of the whole scan, grouped by MCU.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedScan {
    pub mcus: Vec<Vec<DataUnit>>,
}

/// Bit-exact annotation of a scan.
#[derive(Debug, Clone)]
pub struct ScanMap {
    /// One role per scan bit, MSB first within each byte.
    pub bit_roles: Vec<BitRole>,
    /// One class per scan byte.
    pub byte_classes: Vec<ByteClass>,
    /// Extended-block index per MCU (all zero when there are no restarts).
    pub mcu_block: Vec<usize>,
    /// Byte span of each extended block within the scan.
    pub block_byte_spans: Vec<Range<usize>>,
    /// Non-zero coefficient count per data unit, in scan order.
    pub unit_nzc: Vec<u8>,
    pub units_per_mcu: usize,
}

impl ScanMap {
    pub fn block_count(&self) -> usize {
        self.block_byte_spans.len()
    }

    /// Debug export: per-byte class string plus per-MCU non-zero counts.
    pub fn to_json(&self) -> serde_json::Value {
        let classes: String = self.byte_classes.iter().map(|c| c.code()).collect();
        let per_mcu: Vec<u32> = self
            .unit_nzc
            .chunks(self.units_per_mcu)
            .map(|units| units.iter().map(|&n| n as u32).sum())
            .collect();
        json!({
            "schema_version": 1,
            "byte_classes": classes,
            "mcu_nonzero_counts": per_mcu,
            "unit_nonzero_counts": self.unit_nzc,
            "units_per_mcu": self.units_per_mcu,
            "block_of_mcu": self.mcu_block,
        })
    }
}

/// Number of Pattern-4 bytes, optionally restricted to a set of extended
/// blocks. This is the `T` of the key-space analysis.
pub fn count_pattern4(map: &ScanMap, region: Option<&BTreeSet<usize>>) -> u64 {
    let mut total = 0u64;
    for (b, span) in map.block_byte_spans.iter().enumerate() {
        if let Some(set) = region {
            if !set.contains(&b) {
                continue;
            }
        }
        total += map.byte_classes[span.clone()]
            .iter()
            .filter(|&&c| c == ByteClass::P4)
            .count() as u64;
    }
    total
}

struct BitReader<'a> {
    scan: &'a [u8],
    /// Index of the next byte to load.
    pos: usize,
    /// Index of the byte currently being consumed.
    cur_idx: usize,
    cur: u8,
    bits_left: u8,
    roles: Vec<BitRole>,
}

impl<'a> BitReader<'a> {
    fn new(scan: &'a [u8]) -> Self {
        BitReader {
            scan,
            pos: 0,
            cur_idx: 0,
            cur: 0,
            bits_left: 0,
            roles: vec![BitRole::PaddingBit; scan.len() * 8],
        }
    }

    /// Byte position of the next load; only meaningful at a byte boundary.
    fn pos(&self) -> usize {
        self.pos
    }

    fn load_byte(&mut self) -> Result<(), EntropyError> {
        if self.pos >= self.scan.len() {
            return Err(EntropyError::TruncatedScan);
        }
        let b = self.scan[self.pos];
        if b == MARKER_PREFIX {
            match self.scan.get(self.pos + 1) {
                Some(0x00) => {
                    // Byte stuffing: FF is data, the 00 carries no bits.
                    self.fill_roles(self.pos + 1, BitRole::StuffedZero);
                    self.cur_idx = self.pos;
                    self.cur = b;
                    self.bits_left = 8;
                    self.pos += 2;
                    return Ok(());
                }
                Some(&m @ RST0..=RST7) => {
                    return Err(EntropyError::MarkerDesync(format!(
                        "RST{} inside an entropy-coded unit at byte {}",
                        m - RST0,
                        self.pos
                    )));
                }
                _ => return Err(EntropyError::TruncatedScan),
            }
        }
        self.cur_idx = self.pos;
        self.cur = b;
        self.bits_left = 8;
        self.pos += 1;
        Ok(())
    }

    fn fill_roles(&mut self, byte_idx: usize, role: BitRole) {
        self.roles[byte_idx * 8..byte_idx * 8 + 8].fill(role);
    }

    #[inline]
    fn read_bit(&mut self, role: BitRole) -> Result<u8, EntropyError> {
        if self.bits_left == 0 {
            self.load_byte()?;
        }
        self.bits_left -= 1;
        let bit_idx = self.cur_idx * 8 + (7 - self.bits_left) as usize;
        self.roles[bit_idx] = role;
        Ok((self.cur >> self.bits_left) & 1)
    }

    fn read_bits(&mut self, n: u8, role: BitRole) -> Result<u16, EntropyError> {
        let mut v = 0u16;
        for _ in 0..n {
            v = (v << 1) | self.read_bit(role)? as u16;
        }
        Ok(v)
    }

    fn decode_symbol(&mut self, table: &HuffmanTable) -> Result<u8, EntropyError> {
        let start = self.cur_idx;
        let mut code = 0u16;
        for len in 1..=16u8 {
            code = (code << 1) | self.read_bit(BitRole::HuffmanCode)? as u16;
            if let Some(sym) = table.lookup(code, len) {
                return Ok(sym);
            }
        }
        Err(EntropyError::HuffmanDecodeFailure { offset: start })
    }

    /// Mark any remaining bits of the current byte as fill.
    fn align_padding(&mut self) {
        while self.bits_left > 0 {
            self.bits_left -= 1;
            let bit_idx = self.cur_idx * 8 + (7 - self.bits_left) as usize;
            self.roles[bit_idx] = BitRole::PaddingBit;
        }
    }

    /// Consume an RST marker at the current byte boundary.
    fn consume_restart(&mut self) -> Result<u8, EntropyError> {
        debug_assert_eq!(self.bits_left, 0);
        if self.pos + 2 > self.scan.len() || self.scan[self.pos] != MARKER_PREFIX {
            return Err(EntropyError::MarkerDesync(format!(
                "expected RST marker at byte {}",
                self.pos
            )));
        }
        let code = self.scan[self.pos + 1];
        if !(RST0..=RST7).contains(&code) {
            return Err(EntropyError::MarkerDesync(format!(
                "expected RST marker at byte {}, found FF{code:02X}",
                self.pos
            )));
        }
        self.fill_roles(self.pos, BitRole::MarkerByte);
        self.fill_roles(self.pos + 1, BitRole::MarkerByte);
        self.pos += 2;
        Ok(code - RST0)
    }
}

#[inline]
fn extend(raw: u16, size: u8) -> i16 {
    debug_assert!(size >= 1 && size <= 15);
    if (raw as u32) < (1u32 << (size - 1)) {
        (raw as i32 - (1i32 << size) + 1) as i16
    } else {
        raw as i16
    }
}

fn decode_unit(
    reader: &mut BitReader,
    tables: &CodingTables,
    component: usize,
    preds: &mut [i64],
) -> Result<DataUnit, EntropyError> {
    let dc_table = tables.dc_table(component)?;
    let ac_table = tables.ac_table(component)?;

    let dc_category = reader.decode_symbol(dc_table)?;
    if dc_category > 15 {
        return Err(EntropyError::HuffmanDecodeFailure { offset: reader.cur_idx });
    }
    let dc_diff = if dc_category == 0 {
        0
    } else {
        extend(reader.read_bits(dc_category, BitRole::AdditionalBit)?, dc_category)
    };
    preds[component] += dc_diff as i64;
    let dc_abs = preds[component];

    let mut ac = Vec::new();
    let mut k = 1usize;
    while k < 64 {
        let sym = reader.decode_symbol(ac_table)?;
        let run = sym >> 4;
        let size = sym & 0x0F;
        if size == 0 {
            match run {
                0 => {
                    ac.push(AcSymbol::Eob);
                    break;
                }
                15 => {
                    ac.push(AcSymbol::Zrl);
                    k += 16;
                    if k > 64 {
                        return Err(EntropyError::HuffmanDecodeFailure {
                            offset: reader.cur_idx,
                        });
                    }
                }
                _ => {
                    return Err(EntropyError::HuffmanDecodeFailure { offset: reader.cur_idx })
                }
            }
        } else {
            k += run as usize;
            if k > 63 {
                return Err(EntropyError::HuffmanDecodeFailure { offset: reader.cur_idx });
            }
            let value = extend(reader.read_bits(size, BitRole::AdditionalBit)?, size);
            ac.push(AcSymbol::Coef { run, size, value });
            k += 1;
        }
    }

    Ok(DataUnit { component: component as u8, dc_category, dc_diff, dc_abs, ac })
}

/// Walk the whole scan bit by bit.
///
/// Labels every bit, classifies every byte, records the extended-block
/// layout, and returns the decoded symbol stream. DC prediction resets to
/// zero after each RST marker; marker indices must cycle 0..=7.
pub fn walk_scan(
    jpeg: &SegmentedJpeg,
    tables: &CodingTables,
) -> Result<(ScanMap, DecodedScan), EntropyError> {
    let frame = &tables.frame;
    let mcu_count = frame.mcu_count();
    let units_per_mcu = frame.units_per_mcu();
    let restart = jpeg.restart_interval as usize;

    let mut reader = BitReader::new(&jpeg.scan);
    let mut preds = vec![0i64; frame.components.len()];
    let mut mcus = Vec::with_capacity(mcu_count);
    let mut mcu_block = Vec::with_capacity(mcu_count);
    let mut block_byte_spans = Vec::new();
    let mut block_start = 0usize;
    let mut markers_seen = 0usize;

    for m in 0..mcu_count {
        if restart > 0 && m > 0 && m % restart == 0 {
            reader.align_padding();
            let marker_at = reader.pos();
            let n = reader.consume_restart()?;
            if n as usize != markers_seen % 8 {
                return Err(EntropyError::MarkerDesync(format!(
                    "marker {} carries index {}, expected {}",
                    markers_seen,
                    n,
                    markers_seen % 8
                )));
            }
            markers_seen += 1;
            block_byte_spans.push(block_start..marker_at);
            block_start = reader.pos();
            preds.fill(0);
        }
        mcu_block.push(block_byte_spans.len());

        let mut units = Vec::with_capacity(units_per_mcu);
        for (ci, comp) in frame.components.iter().enumerate() {
            for _ in 0..(comp.h as usize * comp.v as usize) {
                units.push(decode_unit(&mut reader, tables, ci, &mut preds)?);
            }
        }
        mcus.push(units);
    }

    reader.align_padding();
    if reader.pos() != jpeg.scan.len() {
        return Err(EntropyError::TrailingScanData(jpeg.scan.len() - reader.pos()));
    }
    block_byte_spans.push(block_start..jpeg.scan.len());

    let unit_nzc: Vec<u8> =
        mcus.iter().flat_map(|units| units.iter().map(|u| u.nonzero_count())).collect();
    let byte_classes = classify_bytes(&jpeg.scan, &reader.roles);

    let map = ScanMap {
        bit_roles: reader.roles,
        byte_classes,
        mcu_block,
        block_byte_spans,
        unit_nzc,
        units_per_mcu,
    };
    Ok((map, DecodedScan { mcus }))
}

fn classify_bytes(scan: &[u8], roles: &[BitRole]) -> Vec<ByteClass> {
    let mut classes = Vec::with_capacity(scan.len());
    for (i, &byte) in scan.iter().enumerate() {
        let bits = &roles[i * 8..i * 8 + 8];
        let mut has_hc = false;
        let mut has_ab = false;
        let mut has_pad = false;
        let mut hc_zero = false;
        let mut special = None;
        for (k, role) in bits.iter().enumerate() {
            let value = (byte >> (7 - k)) & 1;
            match role {
                BitRole::MarkerByte => special = Some(ByteClass::Marker),
                BitRole::StuffedZero => special = Some(ByteClass::P5),
                BitRole::PaddingBit => has_pad = true,
                BitRole::HuffmanCode => {
                    has_hc = true;
                    hc_zero |= value == 0;
                }
                BitRole::AdditionalBit => has_ab = true,
            }
        }
        let class = if let Some(s) = special {
            s
        } else if has_pad {
            ByteClass::Padded
        } else if has_hc && has_ab {
            if hc_zero {
                ByteClass::P4
            } else {
                ByteClass::P3
            }
        } else if has_hc {
            ByteClass::P1
        } else {
            ByteClass::P2
        };
        classes.push(class);
    }
    classes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extend_matches_jpeg_convention() {
        // size 1: raw 0 -> -1, raw 1 -> 1
        assert_eq!(extend(0, 1), -1);
        assert_eq!(extend(1, 1), 1);
        // size 3: raw 0..=3 -> -7..=-4, raw 4..=7 -> 4..=7
        assert_eq!(extend(0, 3), -7);
        assert_eq!(extend(3, 3), -4);
        assert_eq!(extend(4, 3), 4);
        assert_eq!(extend(7, 3), 7);
        assert_eq!(extend(0b01111111111, 11), -1024);
        assert_eq!(extend(0b11111111111, 11), 2047);
    }

    #[test]
    fn classify_pure_patterns() {
        // One byte of pure Huffman code bits with a zero -> P1.
        let roles = vec![BitRole::HuffmanCode; 8];
        assert_eq!(classify_bytes(&[0b1010_1010], &roles), vec![ByteClass::P1]);
        // Pure additional bits -> P2.
        let roles = vec![BitRole::AdditionalBit; 8];
        assert_eq!(classify_bytes(&[0x00], &roles), vec![ByteClass::P2]);
        // All-ones Huffman bits plus additional bits -> P3.
        let mut roles = vec![BitRole::HuffmanCode; 4];
        roles.extend(vec![BitRole::AdditionalBit; 4]);
        assert_eq!(classify_bytes(&[0b1111_0101], &roles), vec![ByteClass::P3]);
        // Huffman bits containing a zero plus additional bits -> P4.
        assert_eq!(classify_bytes(&[0b1110_0101], &roles), vec![ByteClass::P4]);
        // Any padding excludes a byte from the encryptable classes.
        let mut roles = vec![BitRole::HuffmanCode; 6];
        roles.extend(vec![BitRole::PaddingBit; 2]);
        assert_eq!(classify_bytes(&[0b1010_1011], &roles), vec![ByteClass::Padded]);
    }
}
