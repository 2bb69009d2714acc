//! Independent brute-force scan walker used as the oracle for the
//! entropy-layer tests.
//!
//! Deliberately shares nothing with the library implementation: it parses
//! the raw file bytes itself, keeps Huffman codes as bit-strings in a hash
//! map, expands the scan into one flat character list per bit, and decodes
//! segment by segment. Slow and simple on purpose.

use std::collections::HashMap;

/// Per-bit roles: 'H' Huffman code, 'A' additional bit, 'P' padding,
/// 'S' stuffed zero byte, 'M' marker byte. Per-byte classes: '1'..'5',
/// 'M' marker, 'X' padded.
pub struct OracleWalk {
    pub bit_roles: Vec<char>,
    pub byte_classes: Vec<char>,
    pub unit_nzc: Vec<u8>,
    pub unit_coeffs: Vec<[i32; 64]>,
    pub mcu_count: usize,
    pub scan_len: usize,
}

struct Tables {
    /// (class 0=DC/1=AC, id) -> bit-string -> symbol
    huffman: HashMap<(u8, u8), HashMap<String, u8>>,
    /// (width, height)
    size: (usize, usize),
    /// per component: (h, v, dc id, ac id)
    comps: Vec<(usize, usize, u8, u8)>,
    dri: usize,
}

fn be16(b: &[u8], i: usize) -> usize {
    ((b[i] as usize) << 8) | b[i + 1] as usize
}

/// Build the code-string table the slow way: walk the canonical code
/// assignment counting in binary per Annex C.
fn code_strings(bits: &[u8], values: &[u8]) -> HashMap<String, u8> {
    let mut out = HashMap::new();
    let mut code: u32 = 0;
    let mut vi = 0usize;
    for (len_minus_1, &count) in bits.iter().enumerate() {
        let len = len_minus_1 + 1;
        for _ in 0..count {
            let s: String = (0..len).rev().map(|k| if code >> k & 1 == 1 { '1' } else { '0' }).collect();
            out.insert(s, values[vi]);
            vi += 1;
            code += 1;
        }
        code <<= 1;
    }
    out
}

fn parse_header(file: &[u8]) -> (Tables, usize) {
    assert_eq!(&file[0..2], &[0xFF, 0xD8], "oracle: not a JPEG");
    let mut t = Tables {
        huffman: HashMap::new(),
        size: (0, 0),
        comps: Vec::new(),
        dri: 0,
    };
    let mut i = 2usize;
    loop {
        assert_eq!(file[i], 0xFF, "oracle: expected marker");
        let m = file[i + 1];
        let len = be16(file, i + 2);
        let payload = &file[i + 4..i + 2 + len];
        match m {
            0xC4 => {
                let mut p = payload;
                while !p.is_empty() {
                    let class = p[0] >> 4;
                    let id = p[0] & 15;
                    let bits = &p[1..17];
                    let n: usize = bits.iter().map(|&x| x as usize).sum();
                    t.huffman.insert((class, id), code_strings(bits, &p[17..17 + n]));
                    p = &p[17 + n..];
                }
            }
            0xC0 => {
                t.size = (be16(payload, 3), be16(payload, 1));
                for c in 0..payload[5] as usize {
                    let hv = payload[7 + 3 * c];
                    t.comps.push(((hv >> 4) as usize, (hv & 15) as usize, 0, 0));
                }
            }
            0xDD => t.dri = be16(payload, 0),
            0xDA => {
                let ns = payload[0] as usize;
                for c in 0..ns {
                    let tdta = payload[2 + 2 * c];
                    t.comps[c].2 = tdta >> 4;
                    t.comps[c].3 = tdta & 15;
                }
                return (t, i + 2 + len);
            }
            _ => {}
        }
        i += 2 + len;
    }
}

/// One scan segment: byte range (relative to scan start) holding data for a
/// run of MCUs, and whether a marker follows it.
struct Chunk {
    bytes: std::ops::Range<usize>,
}

pub fn walk(file: &[u8]) -> OracleWalk {
    let (tables, scan_start) = parse_header(file);
    let eoi = file.len() - 2;
    assert_eq!(&file[eoi..], &[0xFF, 0xD9], "oracle: missing EOI");
    let scan = &file[scan_start..eoi];

    let mut bit_roles = vec!['?'; scan.len() * 8];

    // Split the scan at RST markers, checking their cyclic numbering.
    let mut chunks: Vec<Chunk> = Vec::new();
    let mut start = 0usize;
    let mut k = 0usize;
    let mut marker_no = 0usize;
    while k < scan.len() {
        if scan[k] == 0xFF {
            let next = scan[k + 1];
            if next == 0x00 {
                k += 2;
                continue;
            }
            assert!((0xD0..=0xD7).contains(&next), "oracle: stray marker in scan");
            assert_eq!((next - 0xD0) as usize, marker_no % 8, "oracle: marker cycle broken");
            marker_no += 1;
            for b in [k, k + 1] {
                for r in &mut bit_roles[b * 8..b * 8 + 8] {
                    *r = 'M';
                }
            }
            chunks.push(Chunk { bytes: start..k });
            start = k + 2;
            k += 2;
        } else {
            k += 1;
        }
    }
    chunks.push(Chunk { bytes: start..scan.len() });

    let (w, h) = tables.size;
    let hmax = tables.comps.iter().map(|c| c.0).max().unwrap();
    let vmax = tables.comps.iter().map(|c| c.1).max().unwrap();
    let mcu_count = w.div_ceil(8 * hmax) * h.div_ceil(8 * vmax);
    if tables.dri > 0 {
        assert_eq!(chunks.len(), mcu_count.div_ceil(tables.dri), "oracle: chunk count");
    } else {
        assert_eq!(chunks.len(), 1);
    }

    let mut unit_nzc = Vec::new();
    let mut unit_coeffs = Vec::new();
    let mut mcus_done = 0usize;

    for chunk in &chunks {
        // Flat list of data bits in this chunk with their byte/bit homes.
        let mut bits: Vec<(usize, usize, u8)> = Vec::new();
        let mut b = chunk.bytes.start;
        while b < chunk.bytes.end {
            let byte = scan[b];
            for bit in 0..8 {
                bits.push((b, bit, (byte >> (7 - bit)) & 1));
            }
            if byte == 0xFF {
                // Stuffed byte carries no data bits.
                for r in &mut bit_roles[(b + 1) * 8..(b + 1) * 8 + 8] {
                    *r = 'S';
                }
                b += 2;
            } else {
                b += 1;
            }
        }

        let mcus_here = if tables.dri > 0 {
            tables.dri.min(mcu_count - mcus_done)
        } else {
            mcu_count
        };

        let mut cursor = 0usize;
        let mut read = |n: usize, role: char, cursor: &mut usize| -> u32 {
            let mut v = 0u32;
            for _ in 0..n {
                let (byte, bit, val) = bits[*cursor];
                bit_roles[byte * 8 + bit] = role;
                v = (v << 1) | val as u32;
                *cursor += 1;
            }
            v
        };

        let mut preds = vec![0i64; tables.comps.len()];
        for _ in 0..mcus_here {
            for (ci, comp) in tables.comps.iter().enumerate() {
                for _ in 0..comp.0 * comp.1 {
                    let mut coeffs = [0i32; 64];
                    // DC
                    let cat = decode_str(&tables.huffman[&(0, comp.2)], &bits, &mut cursor, &mut bit_roles);
                    let diff = if cat == 0 {
                        0i64
                    } else {
                        extend_val(read(cat as usize, 'A', &mut cursor), cat)
                    };
                    preds[ci] += diff;
                    coeffs[0] = preds[ci] as i32;
                    let mut nzc = (diff != 0) as u8;
                    // AC
                    let mut kk = 1usize;
                    while kk < 64 {
                        let sym = decode_str(&tables.huffman[&(1, comp.3)], &bits, &mut cursor, &mut bit_roles);
                        let (run, size) = (sym >> 4, sym & 15);
                        if size == 0 {
                            if run == 0 {
                                break;
                            }
                            assert_eq!(run, 15, "oracle: bad AC symbol");
                            kk += 16;
                        } else {
                            kk += run as usize;
                            let v = extend_val(read(size as usize, 'A', &mut cursor), size);
                            coeffs[kk] = v as i32;
                            nzc += 1;
                            kk += 1;
                        }
                    }
                    unit_nzc.push(nzc);
                    unit_coeffs.push(coeffs);
                }
            }
        }
        mcus_done += mcus_here;

        // Whatever is left in the chunk must be under a byte of padding.
        let leftover = bits.len() - cursor;
        assert!(leftover < 8, "oracle: {leftover} spare bits in chunk");
        for c in cursor..bits.len() {
            let (byte, bit, _) = bits[c];
            bit_roles[byte * 8 + bit] = 'P';
        }
    }
    assert_eq!(mcus_done, mcu_count);
    assert!(!bit_roles.contains(&'?'), "oracle: unlabeled bits remain");

    // Classify bytes from the labeled bits, straight from the pattern
    // definitions.
    let mut byte_classes = Vec::with_capacity(scan.len());
    for (i, &byte) in scan.iter().enumerate() {
        let rs = &bit_roles[i * 8..i * 8 + 8];
        let class = if rs.contains(&'M') {
            'M'
        } else if rs.contains(&'S') {
            '5'
        } else if rs.contains(&'P') {
            'X'
        } else {
            let hc: Vec<u8> = (0..8)
                .filter(|&k| rs[k] == 'H')
                .map(|k| (byte >> (7 - k)) & 1)
                .collect();
            let ab = rs.contains(&'A');
            if !hc.is_empty() && ab {
                if hc.contains(&0) {
                    '4'
                } else {
                    '3'
                }
            } else if !hc.is_empty() {
                '1'
            } else {
                '2'
            }
        };
        byte_classes.push(class);
    }

    OracleWalk { bit_roles, byte_classes, unit_nzc, unit_coeffs, mcu_count, scan_len: scan.len() }
}

fn decode_str(
    table: &HashMap<String, u8>,
    bits: &[(usize, usize, u8)],
    cursor: &mut usize,
    roles: &mut [char],
) -> u8 {
    let mut s = String::new();
    loop {
        let (byte, bit, val) = bits[*cursor];
        roles[byte * 8 + bit] = 'H';
        *cursor += 1;
        s.push(if val == 1 { '1' } else { '0' });
        if let Some(&sym) = table.get(&s) {
            return sym;
        }
        assert!(s.len() <= 16, "oracle: no code matches {s}");
    }
}

fn extend_val(raw: u32, size: u8) -> i64 {
    if raw < (1 << (size - 1)) {
        raw as i64 - (1 << size) + 1
    } else {
        raw as i64
    }
}
