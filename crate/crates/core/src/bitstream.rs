//! JPEG container layer: markers, segments, and the raw entropy-coded scan.
//!
//! This module treats the file as a sequence of marker segments plus one
//! opaque scan. It never decodes entropy data; byte stuffing and embedded
//! RST markers are kept verbatim so that `serialize(parse(x)) == x` holds
//! bit-exactly for every supported file.

use std::ops::Range;

use thiserror::Error;

/// First byte of every marker code.
pub const MARKER_PREFIX: u8 = 0xFF;

pub const SOI: u8 = 0xD8;
pub const EOI: u8 = 0xD9;
pub const SOS: u8 = 0xDA;
pub const DHT: u8 = 0xC4;
pub const DQT: u8 = 0xDB;
pub const SOF0: u8 = 0xC0;
pub const DRI: u8 = 0xDD;
pub const DNL: u8 = 0xDC;
pub const RST0: u8 = 0xD0;
pub const RST7: u8 = 0xD7;
pub const COM: u8 = 0xFE;

#[derive(Debug, Error)]
pub enum BitstreamError {
    #[error("malformed marker structure: {0}")]
    MalformedMarker(String),
    #[error("unsupported coding: {0}")]
    UnsupportedCoding(String),
    #[error("more than one SOS segment")]
    MultipleScans,
    #[error("no restart markers: restart interval is 0")]
    NoRestartMarkers,
    #[error("inconsistent restart markers: {0}")]
    InconsistentMarkers(String),
}

/// Marker classification, derived from the second byte of the code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkerKind {
    Soi,
    Eoi,
    Sos,
    Dht,
    Dqt,
    Sof0,
    Dri,
    /// Restart marker carrying its index n in 0..=7.
    Rst(u8),
    App(u8),
    Com,
    Other(u8),
}

/// A two-byte marker code. The first byte is always `FF`; only the second
/// byte is stored. `FF00` is byte stuffing, never a marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MarkerCode(u8);

impl MarkerCode {
    pub fn new(second_byte: u8) -> Self {
        debug_assert!(second_byte != 0x00, "FF00 is stuffing, not a marker");
        MarkerCode(second_byte)
    }

    pub fn code(self) -> u8 {
        self.0
    }

    pub fn tag(self) -> [u8; 2] {
        [MARKER_PREFIX, self.0]
    }

    pub fn kind(self) -> MarkerKind {
        match self.0 {
            SOI => MarkerKind::Soi,
            EOI => MarkerKind::Eoi,
            SOS => MarkerKind::Sos,
            DHT => MarkerKind::Dht,
            DQT => MarkerKind::Dqt,
            SOF0 => MarkerKind::Sof0,
            DRI => MarkerKind::Dri,
            n @ RST0..=RST7 => MarkerKind::Rst(n - RST0),
            COM => MarkerKind::Com,
            n @ 0xE0..=0xEF => MarkerKind::App(n - 0xE0),
            n => MarkerKind::Other(n),
        }
    }

    /// Whether this marker is followed by a length-prefixed payload.
    pub fn has_payload(self) -> bool {
        !matches!(self.0, SOI | EOI | RST0..=RST7 | 0x01)
    }
}

/// One marker segment. `payload` excludes the two length bytes; it is empty
/// for standalone markers (SOI, EOI).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub marker: MarkerCode,
    pub payload: Vec<u8>,
}

impl Segment {
    pub fn standalone(code: u8) -> Self {
        Segment { marker: MarkerCode::new(code), payload: Vec::new() }
    }
}

/// A parsed baseline JPEG: header segments, the raw scan, and the trailer.
///
/// `scan` holds the entropy-coded data exactly as stored in the file,
/// including stuffed `00` bytes and embedded RST markers. `restart_interval`
/// mirrors the DRI segment (0 when absent).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentedJpeg {
    /// Segments from SOI through SOS, inclusive, in file order.
    pub pre_scan: Vec<Segment>,
    /// Raw entropy-coded bytes between the SOS header and EOI.
    pub scan: Vec<u8>,
    /// Segments from EOI onward (exactly the EOI for supported files).
    pub post_scan: Vec<Segment>,
    /// MCUs per restart interval, 0 when the file has no DRI segment.
    pub restart_interval: u16,
}

impl SegmentedJpeg {
    /// Payload of the first segment of the given kind, if present.
    pub fn segment_payload(&self, code: u8) -> Option<&[u8]> {
        self.pre_scan
            .iter()
            .find(|s| s.marker.code() == code)
            .map(|s| s.payload.as_slice())
    }

    /// Image dimensions (width, height) from the SOF0 header.
    pub fn dimensions(&self) -> Option<(u16, u16)> {
        let p = self.segment_payload(SOF0)?;
        if p.len() < 5 {
            return None;
        }
        let h = u16::from_be_bytes([p[1], p[2]]);
        let w = u16::from_be_bytes([p[3], p[4]]);
        Some((w, h))
    }

    pub fn total_len(&self) -> usize {
        serialize(self).len()
    }
}

/// Byte span of one extended block inside `SegmentedJpeg::scan`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtendedBlock {
    pub index: usize,
    pub span: Range<usize>,
}

fn read_u16_be(bytes: &[u8], at: usize) -> Result<u16, BitstreamError> {
    if at + 2 > bytes.len() {
        return Err(BitstreamError::MalformedMarker("truncated length field".into()));
    }
    Ok(u16::from_be_bytes([bytes[at], bytes[at + 1]]))
}

/// Parse a baseline JPEG file into its container pieces.
///
/// Supported input is a single-scan SOF0 file: SOI, header segments, one
/// SOS, the scan, EOI, nothing after. Progressive and arithmetic-coded
/// frames are rejected, as is trailing data after EOI.
pub fn parse(bytes: &[u8]) -> Result<SegmentedJpeg, BitstreamError> {
    if bytes.len() < 4 || bytes[0] != MARKER_PREFIX || bytes[1] != SOI {
        return Err(BitstreamError::MalformedMarker("missing SOI".into()));
    }

    let mut pre_scan = vec![Segment::standalone(SOI)];
    let mut restart_interval = 0u16;
    let mut seen_dri = false;
    let mut seen_sof = false;
    let mut pos = 2usize;

    // Header segments up to and including the SOS header.
    loop {
        if pos + 2 > bytes.len() {
            return Err(BitstreamError::MalformedMarker("truncated before SOS".into()));
        }
        if bytes[pos] != MARKER_PREFIX {
            return Err(BitstreamError::MalformedMarker(format!(
                "expected marker at offset {pos}, found {:02X}",
                bytes[pos]
            )));
        }
        let code = bytes[pos + 1];
        let marker = match code {
            0x00 | MARKER_PREFIX => {
                return Err(BitstreamError::MalformedMarker(format!(
                    "fill or stuffed byte in header at offset {pos}"
                )))
            }
            SOI => return Err(BitstreamError::MalformedMarker("duplicate SOI".into())),
            EOI => return Err(BitstreamError::MalformedMarker("EOI before SOS".into())),
            RST0..=RST7 => {
                return Err(BitstreamError::MalformedMarker("RST marker outside scan".into()))
            }
            // Non-baseline frames and arithmetic conditioning.
            0xC1..=0xC3 | 0xC5..=0xC7 | 0xC9..=0xCB | 0xCC | 0xCD..=0xCF => {
                return Err(BitstreamError::UnsupportedCoding(format!(
                    "frame marker FF{code:02X} (baseline SOF0 only)"
                )))
            }
            DNL => return Err(BitstreamError::UnsupportedCoding("DNL segment".into())),
            _ => MarkerCode::new(code),
        };

        let len = read_u16_be(bytes, pos + 2)? as usize;
        if len < 2 || pos + 2 + len > bytes.len() {
            return Err(BitstreamError::MalformedMarker(format!(
                "segment FF{code:02X} with bad length {len}"
            )));
        }
        let payload = bytes[pos + 4..pos + 2 + len].to_vec();

        match marker.kind() {
            MarkerKind::Dri => {
                if seen_dri {
                    return Err(BitstreamError::MalformedMarker("multiple DRI segments".into()));
                }
                if payload.len() != 2 {
                    return Err(BitstreamError::MalformedMarker("DRI payload must be 2 bytes".into()));
                }
                seen_dri = true;
                restart_interval = u16::from_be_bytes([payload[0], payload[1]]);
            }
            MarkerKind::Sof0 => {
                if seen_sof {
                    return Err(BitstreamError::MalformedMarker("multiple SOF segments".into()));
                }
                seen_sof = true;
            }
            _ => {}
        }

        let is_sos = marker.kind() == MarkerKind::Sos;
        pre_scan.push(Segment { marker, payload });
        pos += 2 + len;
        if is_sos {
            break;
        }
    }

    if !seen_sof {
        return Err(BitstreamError::MalformedMarker("SOS before SOF0".into()));
    }

    // Raw scan: everything up to the next non-RST marker. Stuffed FF00 pairs
    // and RST markers stay inside the scan.
    let scan_start = pos;
    let terminator;
    loop {
        if pos >= bytes.len() {
            return Err(BitstreamError::MalformedMarker("scan runs past end of file".into()));
        }
        if bytes[pos] != MARKER_PREFIX {
            pos += 1;
            continue;
        }
        if pos + 1 >= bytes.len() {
            return Err(BitstreamError::MalformedMarker("dangling FF at end of scan".into()));
        }
        match bytes[pos + 1] {
            0x00 | RST0..=RST7 => pos += 2,
            code => {
                terminator = code;
                break;
            }
        }
    }
    let scan = bytes[scan_start..pos].to_vec();

    match terminator {
        EOI => {}
        SOS => return Err(BitstreamError::MultipleScans),
        DNL => return Err(BitstreamError::UnsupportedCoding("DNL segment".into())),
        code => {
            return Err(BitstreamError::MalformedMarker(format!(
                "unexpected marker FF{code:02X} terminating scan"
            )))
        }
    }
    pos += 2;
    if pos != bytes.len() {
        return Err(BitstreamError::MalformedMarker(format!(
            "{} trailing bytes after EOI",
            bytes.len() - pos
        )));
    }

    Ok(SegmentedJpeg {
        pre_scan,
        scan,
        post_scan: vec![Segment::standalone(EOI)],
        restart_interval,
    })
}

/// Serialize back to file bytes. Inverse of [`parse`].
pub fn serialize(jpeg: &SegmentedJpeg) -> Vec<u8> {
    let seg_len: usize = jpeg
        .pre_scan
        .iter()
        .chain(jpeg.post_scan.iter())
        .map(|s| 2 + if s.marker.has_payload() { 2 + s.payload.len() } else { 0 })
        .sum();
    let mut out = Vec::with_capacity(seg_len + jpeg.scan.len());

    let emit = |s: &Segment, out: &mut Vec<u8>| {
        out.extend_from_slice(&s.marker.tag());
        if s.marker.has_payload() {
            let len = (s.payload.len() + 2) as u16;
            out.extend_from_slice(&len.to_be_bytes());
            out.extend_from_slice(&s.payload);
        }
    };

    for s in &jpeg.pre_scan {
        emit(s, &mut out);
    }
    out.extend_from_slice(&jpeg.scan);
    for s in &jpeg.post_scan {
        emit(s, &mut out);
    }
    out
}

/// Frame geometry needed at the container level: MCU count from SOF0.
pub(crate) fn mcu_count_from_sof(jpeg: &SegmentedJpeg) -> Result<usize, BitstreamError> {
    let p = jpeg
        .segment_payload(SOF0)
        .ok_or_else(|| BitstreamError::MalformedMarker("missing SOF0".into()))?;
    if p.len() < 6 {
        return Err(BitstreamError::MalformedMarker("short SOF0 payload".into()));
    }
    let height = u16::from_be_bytes([p[1], p[2]]) as usize;
    let width = u16::from_be_bytes([p[3], p[4]]) as usize;
    let ncomp = p[5] as usize;
    if p.len() < 6 + 3 * ncomp || ncomp == 0 {
        return Err(BitstreamError::MalformedMarker("short SOF0 component list".into()));
    }
    let mut h_max = 0usize;
    let mut v_max = 0usize;
    for c in 0..ncomp {
        let hv = p[7 + 3 * c];
        h_max = h_max.max((hv >> 4) as usize);
        v_max = v_max.max((hv & 0x0F) as usize);
    }
    if h_max == 0 || v_max == 0 || width == 0 || height == 0 {
        return Err(BitstreamError::MalformedMarker("degenerate SOF0 geometry".into()));
    }
    let mcus_wide = width.div_ceil(8 * h_max);
    let mcus_high = height.div_ceil(8 * v_max);
    Ok(mcus_wide * mcus_high)
}

/// Split the scan into extended blocks: the byte spans strictly between
/// consecutive RST markers (plus the leading and trailing spans).
///
/// Spans are disjoint, ordered, and cover every non-marker scan byte.
/// The marker indices must cycle 0..=7 in file order, and the block count
/// must equal `ceil(mcu_count / restart_interval)`.
pub fn split_extended_blocks(jpeg: &SegmentedJpeg) -> Result<Vec<ExtendedBlock>, BitstreamError> {
    let r = jpeg.restart_interval as usize;
    if r == 0 {
        return Err(BitstreamError::NoRestartMarkers);
    }
    let mcu_count = mcu_count_from_sof(jpeg)?;
    let expected = mcu_count.div_ceil(r);

    let scan = &jpeg.scan;
    let mut blocks = Vec::with_capacity(expected);
    let mut start = 0usize;
    let mut pos = 0usize;
    let mut marker_index = 0usize;
    while pos < scan.len() {
        if scan[pos] != MARKER_PREFIX {
            pos += 1;
            continue;
        }
        // Parse guarantees FF is followed by 00 or an RST code.
        match scan.get(pos + 1) {
            Some(0x00) => pos += 2,
            Some(&code @ RST0..=RST7) => {
                let n = code - RST0;
                if usize::from(n) != marker_index % 8 {
                    return Err(BitstreamError::InconsistentMarkers(format!(
                        "marker {} carries index {}, expected {}",
                        marker_index,
                        n,
                        marker_index % 8
                    )));
                }
                blocks.push(ExtendedBlock { index: blocks.len(), span: start..pos });
                marker_index += 1;
                pos += 2;
                start = pos;
            }
            _ => {
                return Err(BitstreamError::MalformedMarker(format!(
                    "bare FF inside scan at offset {pos}"
                )))
            }
        }
    }
    blocks.push(ExtendedBlock { index: blocks.len(), span: start..scan.len() });

    if blocks.len() != expected {
        return Err(BitstreamError::InconsistentMarkers(format!(
            "{} blocks found, geometry implies {}",
            blocks.len(),
            expected
        )));
    }
    Ok(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Minimal synthetic file: SOI, DRI(2), SOF0 8x8 4:4:4, SOS, scan, EOI.
    fn tiny_jpeg(scan: &[u8], dri: Option<u16>) -> Vec<u8> {
        let mut f = vec![0xFF, SOI];
        if let Some(ri) = dri {
            f.extend_from_slice(&[0xFF, DRI, 0x00, 0x04]);
            f.extend_from_slice(&ri.to_be_bytes());
        }
        // SOF0: precision 8, 8x8, 3 components 1x1 sampling.
        f.extend_from_slice(&[0xFF, SOF0, 0x00, 0x11, 8, 0, 8, 0, 8, 3]);
        f.extend_from_slice(&[1, 0x11, 0, 2, 0x11, 0, 3, 0x11, 0]);
        // SOS header for 3 components.
        f.extend_from_slice(&[0xFF, SOS, 0x00, 0x0C, 3, 1, 0x00, 2, 0x11, 3, 0x11, 0, 63, 0]);
        f.extend_from_slice(scan);
        f.extend_from_slice(&[0xFF, EOI]);
        f
    }

    #[test]
    fn parse_reads_dri_value() {
        let jpeg = parse(&tiny_jpeg(&[0xAA], Some(2))).unwrap();
        assert_eq!(jpeg.restart_interval, 2);
        let jpeg = parse(&tiny_jpeg(&[0xAA], None)).unwrap();
        assert_eq!(jpeg.restart_interval, 0);
    }

    #[test]
    fn stuffed_ff_stays_in_scan() {
        let jpeg = parse(&tiny_jpeg(&[0xFF, 0x00, 0xD4], None)).unwrap();
        assert_eq!(jpeg.scan, vec![0xFF, 0x00, 0xD4]);
    }

    #[test]
    fn round_trip_is_identity() {
        let f = tiny_jpeg(&[0x12, 0xFF, 0x00, 0x34], Some(7));
        assert_eq!(serialize(&parse(&f).unwrap()), f);
    }

    #[test]
    fn trailing_garbage_rejected() {
        let mut f = tiny_jpeg(&[0x12], None);
        f.push(0x00);
        assert!(matches!(parse(&f), Err(BitstreamError::MalformedMarker(_))));
    }

    #[test]
    fn second_sos_rejected() {
        let mut f = tiny_jpeg(&[0x12], None);
        f.truncate(f.len() - 2);
        f.extend_from_slice(&[0xFF, SOS, 0x00, 0x08, 1, 1, 0, 0, 63, 0]);
        f.extend_from_slice(&[0x12, 0xFF, EOI]);
        assert!(matches!(parse(&f), Err(BitstreamError::MultipleScans)));
    }

    #[test]
    fn progressive_rejected() {
        let mut f = vec![0xFF, SOI, 0xFF, 0xC2, 0x00, 0x0B, 8, 0, 8, 0, 8, 1, 1, 0x11, 0];
        f.extend_from_slice(&[0xFF, EOI]);
        assert!(matches!(parse(&f), Err(BitstreamError::UnsupportedCoding(_))));
    }

    #[test]
    fn split_requires_restart_interval() {
        let jpeg = parse(&tiny_jpeg(&[0x12], None)).unwrap();
        assert!(matches!(split_extended_blocks(&jpeg), Err(BitstreamError::NoRestartMarkers)));
    }

    #[test]
    fn split_finds_spans_between_markers() {
        // 8x8 at 4:4:4 has one MCU, so fake a 3-block layout via a 24x8 frame.
        let mut f = vec![0xFF, SOI, 0xFF, DRI, 0x00, 0x04, 0x00, 0x01];
        f.extend_from_slice(&[0xFF, SOF0, 0x00, 0x11, 8, 0, 8, 0, 24, 3]);
        f.extend_from_slice(&[1, 0x11, 0, 2, 0x11, 0, 3, 0x11, 0]);
        f.extend_from_slice(&[0xFF, SOS, 0x00, 0x0C, 3, 1, 0x00, 2, 0x11, 3, 0x11, 0, 63, 0]);
        f.extend_from_slice(&[0x10, 0x11, 0xFF, RST0, 0x20, 0xFF, RST0 + 1, 0x30, 0x31, 0x32]);
        f.extend_from_slice(&[0xFF, EOI]);
        let jpeg = parse(&f).unwrap();
        let blocks = split_extended_blocks(&jpeg).unwrap();
        assert_eq!(blocks.len(), 3);
        assert_eq!(blocks[0].span, 0..2);
        assert_eq!(blocks[1].span, 4..5);
        assert_eq!(blocks[2].span, 7..10);
        // Spans plus markers reproduce the scan.
        let mut rebuilt = Vec::new();
        for b in &blocks {
            if b.index > 0 {
                rebuilt.extend_from_slice(&[0xFF, RST0 + ((b.index - 1) % 8) as u8]);
            }
            rebuilt.extend_from_slice(&jpeg.scan[b.span.clone()]);
        }
        assert_eq!(rebuilt, jpeg.scan);
    }

    #[test]
    fn split_rejects_bad_marker_cycle() {
        let mut f = vec![0xFF, SOI, 0xFF, DRI, 0x00, 0x04, 0x00, 0x01];
        f.extend_from_slice(&[0xFF, SOF0, 0x00, 0x11, 8, 0, 8, 0, 16, 3]);
        f.extend_from_slice(&[1, 0x11, 0, 2, 0x11, 0, 3, 0x11, 0]);
        f.extend_from_slice(&[0xFF, SOS, 0x00, 0x0C, 3, 1, 0x00, 2, 0x11, 3, 0x11, 0, 63, 0]);
        f.extend_from_slice(&[0x10, 0xFF, RST0 + 3, 0x20]);
        f.extend_from_slice(&[0xFF, EOI]);
        let jpeg = parse(&f).unwrap();
        assert!(matches!(
            split_extended_blocks(&jpeg),
            Err(BitstreamError::InconsistentMarkers(_))
        ));
    }
}
