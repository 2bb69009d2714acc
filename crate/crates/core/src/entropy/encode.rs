//! Scan re-encoding: emit a decoded symbol stream back to entropy-coded
//! bytes, optionally under a new restart structure.

use super::walk::{walk_scan, AcSymbol, DecodedScan};
use super::{CodingTables, EntropyError};
use crate::bitstream::{MarkerCode, Segment, SegmentedJpeg, DRI, MARKER_PREFIX, RST0, SOS};

struct BitWriter {
    out: Vec<u8>,
    cur: u8,
    nbits: u8,
}

impl BitWriter {
    fn new() -> Self {
        BitWriter { out: Vec::new(), cur: 0, nbits: 0 }
    }

    fn emit_byte(&mut self, b: u8) {
        self.out.push(b);
        if b == MARKER_PREFIX {
            // Byte stuffing.
            self.out.push(0x00);
        }
    }

    fn push_bits(&mut self, code: u32, n: u8) {
        for k in (0..n).rev() {
            self.cur = (self.cur << 1) | ((code >> k) & 1) as u8;
            self.nbits += 1;
            if self.nbits == 8 {
                let b = self.cur;
                self.emit_byte(b);
                self.cur = 0;
                self.nbits = 0;
            }
        }
    }

    /// 1-fill to the next byte boundary.
    fn align_ones(&mut self) {
        if self.nbits > 0 {
            let fill = 8 - self.nbits;
            self.push_bits((1u32 << fill) - 1, fill);
        }
    }

    fn push_restart(&mut self, index: u8) {
        debug_assert_eq!(self.nbits, 0);
        self.out.push(MARKER_PREFIX);
        self.out.push(RST0 + index);
    }

    fn finish(mut self) -> Vec<u8> {
        self.align_ones();
        self.out
    }
}

/// Minimum number of bits representing `|v|` (the JPEG category / size).
fn category_of(v: i64) -> u8 {
    (64 - v.unsigned_abs().leading_zeros()) as u8
}

/// Magnitude bits for a value of the given category.
fn raw_bits(v: i64, category: u8) -> u32 {
    let mask = (1u64 << category) - 1;
    if v < 0 {
        ((v - 1) as u64 & mask) as u32
    } else {
        v as u32
    }
}

/// Re-encode a decoded symbol stream with the given restart interval
/// (0 emits no restart markers).
///
/// DC differentials are recomputed from the absolute values so that each
/// restart interval starts from prediction zero; AC symbols are emitted
/// verbatim. With the restart structure unchanged this reproduces the
/// original scan bytes exactly.
pub fn encode_scan(
    decoded: &DecodedScan,
    tables: &CodingTables,
    restart_interval: u16,
) -> Result<Vec<u8>, EntropyError> {
    let ri = restart_interval as usize;
    let mut w = BitWriter::new();
    let mut preds = vec![0i64; tables.frame.components.len()];
    let mut marker = 0u8;

    for (m, units) in decoded.mcus.iter().enumerate() {
        if ri > 0 && m > 0 && m % ri == 0 {
            w.align_ones();
            w.push_restart(marker);
            marker = (marker + 1) & 7;
            preds.fill(0);
        }
        for unit in units {
            let ci = unit.component as usize;
            let dc_table = tables.dc_table(ci)?;
            let ac_table = tables.ac_table(ci)?;

            let diff = unit.dc_abs - preds[ci];
            preds[ci] = unit.dc_abs;
            let category = category_of(diff);
            if category > 15 {
                return Err(EntropyError::UnencodableValue(format!(
                    "DC differential {diff} exceeds category 15"
                )));
            }
            let (code, size) = dc_table.encode(category).ok_or_else(|| {
                EntropyError::UnencodableValue(format!(
                    "DC table lacks a code for category {category}"
                ))
            })?;
            w.push_bits(code as u32, size);
            if category > 0 {
                w.push_bits(raw_bits(diff, category), category);
            }

            for sym in &unit.ac {
                let (symbol, value_bits) = match *sym {
                    AcSymbol::Eob => (0x00u8, None),
                    AcSymbol::Zrl => (0xF0u8, None),
                    AcSymbol::Coef { run, size, value } => {
                        ((run << 4) | size, Some((raw_bits(value as i64, size), size)))
                    }
                };
                let (code, size) = ac_table.encode(symbol).ok_or_else(|| {
                    EntropyError::UnencodableValue(format!(
                        "AC table lacks a code for symbol {symbol:#04x}"
                    ))
                })?;
                w.push_bits(code as u32, size);
                if let Some((raw, n)) = value_bits {
                    w.push_bits(raw, n);
                }
            }
        }
    }

    Ok(w.finish())
}

/// Losslessly rebuild a file with restart markers every `new_ri` MCUs.
///
/// The header is preserved except for the DRI segment, which is rewritten
/// in place or inserted just before SOS. Decoded pixels are identical to the
/// input, and restructuring to the interval a file already has is
/// bit-idempotent.
pub fn restructure(
    jpeg: &SegmentedJpeg,
    tables: &CodingTables,
    new_ri: u16,
) -> Result<SegmentedJpeg, EntropyError> {
    if new_ri == 0 {
        return Err(EntropyError::InvalidRestartInterval);
    }
    let (_, decoded) = walk_scan(jpeg, tables)?;
    let scan = encode_scan(&decoded, tables, new_ri)?;

    let mut pre_scan = jpeg.pre_scan.clone();
    let dri_payload = new_ri.to_be_bytes().to_vec();
    if let Some(seg) = pre_scan.iter_mut().find(|s| s.marker.code() == DRI) {
        seg.payload = dri_payload;
    } else {
        let sos_at = pre_scan
            .iter()
            .position(|s| s.marker.code() == SOS)
            .expect("parsed file always carries SOS");
        pre_scan.insert(sos_at, Segment { marker: MarkerCode::new(DRI), payload: dri_payload });
    }

    Ok(SegmentedJpeg {
        pre_scan,
        scan,
        post_scan: jpeg.post_scan.clone(),
        restart_interval: new_ri,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories() {
        assert_eq!(category_of(0), 0);
        assert_eq!(category_of(1), 1);
        assert_eq!(category_of(-1), 1);
        assert_eq!(category_of(2), 2);
        assert_eq!(category_of(-3), 2);
        assert_eq!(category_of(1023), 10);
        assert_eq!(category_of(-2047), 11);
    }

    #[test]
    fn raw_bits_inverts_extend() {
        for size in 1..=11u8 {
            for raw in [0u16, 1, (1 << (size - 1)) - 1, 1 << (size - 1), (1 << size) - 1] {
                let raw = raw & ((1u16 << size) - 1);
                let v = if (raw as u32) < (1u32 << (size - 1)) {
                    raw as i64 - (1i64 << size) + 1
                } else {
                    raw as i64
                };
                assert_eq!(raw_bits(v, size), raw as u32, "size {size} raw {raw}");
                assert_eq!(category_of(v), size);
            }
        }
    }

    #[test]
    fn writer_stuffs_ff_and_pads_with_ones() {
        let mut w = BitWriter::new();
        w.push_bits(0xFF, 8);
        w.push_bits(0b101, 3);
        let out = w.finish();
        assert_eq!(out, vec![0xFF, 0x00, 0b1011_1111]);
    }

    #[test]
    fn writer_stuffs_padded_ff() {
        let mut w = BitWriter::new();
        w.push_bits(0b1111_101, 7);
        let out = w.finish();
        assert_eq!(out, vec![0xFB]);
        let mut w = BitWriter::new();
        w.push_bits(0b1111_111, 7);
        assert_eq!(w.finish(), vec![0xFF, 0x00]);
    }
}
