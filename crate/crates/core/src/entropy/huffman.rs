//! Canonical Huffman tables from DHT segments, for both decode and encode.

use super::EntropyError;

/// One Huffman table built from a DHT `BITS`/`HUFFVAL` pair.
///
/// Decoding uses the Annex F MINCODE/MAXCODE/VALPTR scheme; encoding uses
/// the symbol-indexed code/size lookup from Annex C. Codes are canonical:
/// assigned in increasing order of length, values in DHT order.
#[derive(Debug, Clone)]
pub struct HuffmanTable {
    // Indexed by code length 1..=16 (slot 0 unused).
    mincode: [i32; 17],
    maxcode: [i32; 17],
    valptr: [usize; 17],
    values: Vec<u8>,
    // Encode side, indexed by symbol.
    code_of: [u16; 256],
    size_of: [u8; 256],
}

impl HuffmanTable {
    pub fn build(bits: &[u8; 16], values: &[u8]) -> Result<Self, EntropyError> {
        let total: usize = bits.iter().map(|&b| b as usize).sum();
        if total != values.len() {
            return Err(EntropyError::InvalidHuffmanSpec(format!(
                "BITS sums to {total} but {} values given",
                values.len()
            )));
        }
        if total > 256 {
            return Err(EntropyError::InvalidHuffmanSpec(format!("{total} codes exceed 256")));
        }
        if total == 0 {
            return Err(EntropyError::InvalidHuffmanSpec("table defines no codes".into()));
        }

        let mut mincode = [0i32; 17];
        let mut maxcode = [-1i32; 17];
        let mut valptr = [0usize; 17];
        let mut code_of = [0u16; 256];
        let mut size_of = [0u8; 256];

        let mut code = 0i32;
        let mut k = 0usize;
        for len in 1..=16usize {
            let count = bits[len - 1] as usize;
            valptr[len] = k;
            mincode[len] = code;
            for _ in 0..count {
                // A feasible table never exhausts the code space mid-length.
                if code >= (1 << len) {
                    return Err(EntropyError::InvalidHuffmanSpec(format!(
                        "code counts overflow at length {len}"
                    )));
                }
                let sym = values[k] as usize;
                if size_of[sym] != 0 {
                    return Err(EntropyError::InvalidHuffmanSpec(format!(
                        "symbol {sym:#04x} assigned twice"
                    )));
                }
                code_of[sym] = code as u16;
                size_of[sym] = len as u8;
                code += 1;
                k += 1;
            }
            maxcode[len] = code - 1;
            code <<= 1;
        }

        Ok(HuffmanTable { mincode, maxcode, valptr, values: values.to_vec(), code_of, size_of })
    }

    /// Decode step: given a candidate code of `len` bits, return its symbol
    /// if the canonical table defines one.
    #[inline]
    pub fn lookup(&self, code: u16, len: u8) -> Option<u8> {
        let len = len as usize;
        let code = code as i32;
        if len == 0 || len > 16 || code > self.maxcode[len] || code < self.mincode[len] {
            return None;
        }
        let idx = self.valptr[len] + (code - self.mincode[len]) as usize;
        self.values.get(idx).copied()
    }

    /// Encode step: (code, size) for a symbol, if the table defines it.
    #[inline]
    pub fn encode(&self, symbol: u8) -> Option<(u16, u8)> {
        let size = self.size_of[symbol as usize];
        if size == 0 {
            None
        } else {
            Some((self.code_of[symbol as usize], size))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Annex K.3.1 luminance DC table.
    const STD_DC_BITS: [u8; 16] = [0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
    const STD_DC_VALS: [u8; 12] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];

    #[test]
    fn standard_dc_table_codes() {
        let t = HuffmanTable::build(&STD_DC_BITS, &STD_DC_VALS).unwrap();
        // Category 0 is the single 2-bit code 00; category 11 is 9 bits.
        assert_eq!(t.encode(0), Some((0b00, 2)));
        assert_eq!(t.encode(5), Some((0b110, 3)));
        assert_eq!(t.encode(11), Some((0b111111110, 9)));
        assert_eq!(t.encode(12), None);
        assert_eq!(t.lookup(0b00, 2), Some(0));
        assert_eq!(t.lookup(0b111111110, 9), Some(11));
        assert_eq!(t.lookup(0b11, 2), None);
    }

    #[test]
    fn decode_encode_agree_on_every_symbol() {
        let bits = [0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 125];
        let values: Vec<u8> = (0..162u8).collect();
        let t = HuffmanTable::build(&bits, &values).unwrap();
        for &v in &values {
            let (code, size) = t.encode(v).unwrap();
            assert_eq!(t.lookup(code, size), Some(v));
        }
    }

    #[test]
    fn empty_table_rejected() {
        let err = HuffmanTable::build(&[0; 16], &[]).unwrap_err();
        assert!(matches!(err, EntropyError::InvalidHuffmanSpec(_)));
    }

    #[test]
    fn overflowing_counts_rejected() {
        // Three codes of length one cannot exist.
        let mut bits = [0u8; 16];
        bits[0] = 3;
        let err = HuffmanTable::build(&bits, &[0, 1, 2]).unwrap_err();
        assert!(matches!(err, EntropyError::InvalidHuffmanSpec(_)));
    }
}
