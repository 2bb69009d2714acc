//! Entropy layer: Huffman tables, the bit-exact scan walk, byte pattern
//! classification, and lossless restructuring to a new restart interval.

mod encode;
mod huffman;
mod walk;

pub use encode::{encode_scan, restructure};
pub use huffman::HuffmanTable;
pub use walk::{
    count_pattern4, walk_scan, AcSymbol, BitRole, ByteClass, DataUnit, DecodedScan, ScanMap,
};

use thiserror::Error;

use crate::bitstream::{SegmentedJpeg, DHT, DQT, SOF0, SOS};

#[derive(Debug, Error)]
pub enum EntropyError {
    #[error("invalid Huffman specification: {0}")]
    InvalidHuffmanSpec(String),
    #[error("missing table: {0}")]
    MissingTable(String),
    #[error("unsupported sampling or frame layout: {0}")]
    UnsupportedSampling(String),
    #[error("malformed segment payload: {0}")]
    MalformedSegment(String),
    #[error("no Huffman code matches scan bits near byte {offset}")]
    HuffmanDecodeFailure { offset: usize },
    #[error("scan data ends before the last MCU")]
    TruncatedScan,
    #[error("restart marker desynchronization: {0}")]
    MarkerDesync(String),
    #[error("{0} unexpected scan bytes after the last MCU")]
    TrailingScanData(usize),
    #[error("value not encodable with the file's tables: {0}")]
    UnencodableValue(String),
    #[error("restart interval must be at least 1")]
    InvalidRestartInterval,
}

/// Per-component coding parameters from SOF0 and SOS.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComponentSpec {
    pub id: u8,
    /// Horizontal / vertical sampling factors.
    pub h: u8,
    pub v: u8,
    pub quant_id: u8,
    pub dc_table_id: u8,
    pub ac_table_id: u8,
}

/// Frame geometry shared by the walker, the cipher, and the pixel decoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameInfo {
    pub width: u16,
    pub height: u16,
    pub components: Vec<ComponentSpec>,
    pub h_max: u8,
    pub v_max: u8,
}

impl FrameInfo {
    pub fn mcus_wide(&self) -> usize {
        (self.width as usize).div_ceil(8 * self.h_max as usize)
    }

    pub fn mcus_high(&self) -> usize {
        (self.height as usize).div_ceil(8 * self.v_max as usize)
    }

    pub fn mcu_count(&self) -> usize {
        self.mcus_wide() * self.mcus_high()
    }

    /// Data units per MCU in interleaved scan order (6 at 4:2:0, 3 at 4:4:4).
    pub fn units_per_mcu(&self) -> usize {
        self.components.iter().map(|c| c.h as usize * c.v as usize).sum()
    }
}

/// Decode/encode state parsed from DHT, DQT, SOF0, and SOS.
///
/// Only Huffman tables referenced by the scan are built; a DHT that the scan
/// never uses may be arbitrary. Quantization tables stay in zigzag order as
/// stored in the file.
#[derive(Debug, Clone)]
pub struct CodingTables {
    pub dc: [Option<HuffmanTable>; 4],
    pub ac: [Option<HuffmanTable>; 4],
    pub quant: [Option<[u16; 64]>; 4],
    pub frame: FrameInfo,
    pub restart_interval: u16,
}

impl CodingTables {
    pub fn dc_table(&self, component: usize) -> Result<&HuffmanTable, EntropyError> {
        let id = self.frame.components[component].dc_table_id as usize;
        self.dc[id]
            .as_ref()
            .ok_or_else(|| EntropyError::MissingTable(format!("DC table {id}")))
    }

    pub fn ac_table(&self, component: usize) -> Result<&HuffmanTable, EntropyError> {
        let id = self.frame.components[component].ac_table_id as usize;
        self.ac[id]
            .as_ref()
            .ok_or_else(|| EntropyError::MissingTable(format!("AC table {id}")))
    }

    pub fn quant_table(&self, component: usize) -> Result<&[u16; 64], EntropyError> {
        let id = self.frame.components[component].quant_id as usize;
        self.quant[id]
            .as_ref()
            .ok_or_else(|| EntropyError::MissingTable(format!("quantization table {id}")))
    }
}

/// Build decode tables and frame geometry from a parsed file.
pub fn build_tables(jpeg: &SegmentedJpeg) -> Result<CodingTables, EntropyError> {
    let mut raw_dht: [Option<([u8; 16], Vec<u8>)>; 8] = Default::default();
    let mut quant: [Option<[u16; 64]>; 4] = [None; 4];
    let mut frame: Option<FrameInfo> = None;
    let mut scan_spec: Option<Vec<(u8, u8, u8)>> = None;

    for seg in &jpeg.pre_scan {
        match seg.marker.code() {
            DQT => parse_dqt(&seg.payload, &mut quant)?,
            DHT => parse_dht(&seg.payload, &mut raw_dht)?,
            SOF0 => frame = Some(parse_sof0(&seg.payload)?),
            SOS => scan_spec = Some(parse_sos(&seg.payload)?),
            _ => {}
        }
    }

    let mut frame = frame.ok_or_else(|| EntropyError::MalformedSegment("missing SOF0".into()))?;
    let scan_spec =
        scan_spec.ok_or_else(|| EntropyError::MalformedSegment("missing SOS".into()))?;

    if scan_spec.len() != frame.components.len() {
        return Err(EntropyError::UnsupportedSampling(
            "scan must interleave every frame component".into(),
        ));
    }
    for (comp, &(cs, td, ta)) in frame.components.iter_mut().zip(&scan_spec) {
        if comp.id != cs {
            return Err(EntropyError::UnsupportedSampling(
                "scan components out of frame order".into(),
            ));
        }
        comp.dc_table_id = td;
        comp.ac_table_id = ta;
    }

    // Build only the tables the scan references; this is where an unusable
    // DHT (e.g. one with zero codes) surfaces as InvalidHuffmanSpec.
    let mut dc: [Option<HuffmanTable>; 4] = Default::default();
    let mut ac: [Option<HuffmanTable>; 4] = Default::default();
    for comp in &frame.components {
        for (class, id, slot) in
            [(0usize, comp.dc_table_id, &mut dc), (1, comp.ac_table_id, &mut ac)]
        {
            let id = id as usize;
            if slot[id].is_some() {
                continue;
            }
            let (bits, values) = raw_dht[class * 4 + id].as_ref().ok_or_else(|| {
                EntropyError::MissingTable(format!(
                    "{} table {id}",
                    if class == 0 { "DC" } else { "AC" }
                ))
            })?;
            slot[id] = Some(HuffmanTable::build(bits, values)?);
        }
        if quant[comp.quant_id as usize].is_none() {
            return Err(EntropyError::MissingTable(format!(
                "quantization table {}",
                comp.quant_id
            )));
        }
    }

    Ok(CodingTables { dc, ac, quant, frame, restart_interval: jpeg.restart_interval })
}

fn parse_dqt(payload: &[u8], quant: &mut [Option<[u16; 64]>; 4]) -> Result<(), EntropyError> {
    let mut p = payload;
    while !p.is_empty() {
        let pq = p[0] >> 4;
        let tq = (p[0] & 0x0F) as usize;
        if tq >= 4 || pq > 1 {
            return Err(EntropyError::MalformedSegment(format!("DQT Pq/Tq byte {:02X}", p[0])));
        }
        let n = if pq == 0 { 64 } else { 128 };
        if p.len() < 1 + n {
            return Err(EntropyError::MalformedSegment("short DQT payload".into()));
        }
        let mut table = [0u16; 64];
        for k in 0..64 {
            table[k] = if pq == 0 {
                p[1 + k] as u16
            } else {
                u16::from_be_bytes([p[1 + 2 * k], p[2 + 2 * k]])
            };
        }
        quant[tq] = Some(table);
        p = &p[1 + n..];
    }
    Ok(())
}

#[allow(clippy::type_complexity)]
fn parse_dht(
    payload: &[u8],
    raw: &mut [Option<([u8; 16], Vec<u8>)>; 8],
) -> Result<(), EntropyError> {
    let mut p = payload;
    while !p.is_empty() {
        let tc = p[0] >> 4;
        let th = (p[0] & 0x0F) as usize;
        if tc > 1 || th >= 4 {
            return Err(EntropyError::MalformedSegment(format!("DHT Tc/Th byte {:02X}", p[0])));
        }
        if p.len() < 17 {
            return Err(EntropyError::MalformedSegment("short DHT payload".into()));
        }
        let mut bits = [0u8; 16];
        bits.copy_from_slice(&p[1..17]);
        let total: usize = bits.iter().map(|&b| b as usize).sum();
        if p.len() < 17 + total {
            return Err(EntropyError::MalformedSegment("DHT values truncated".into()));
        }
        raw[tc as usize * 4 + th] = Some((bits, p[17..17 + total].to_vec()));
        p = &p[17 + total..];
    }
    Ok(())
}

fn parse_sof0(payload: &[u8]) -> Result<FrameInfo, EntropyError> {
    if payload.len() < 6 {
        return Err(EntropyError::MalformedSegment("short SOF0".into()));
    }
    let precision = payload[0];
    if precision != 8 {
        return Err(EntropyError::UnsupportedSampling(format!(
            "{precision}-bit precision (8-bit baseline only)"
        )));
    }
    let height = u16::from_be_bytes([payload[1], payload[2]]);
    let width = u16::from_be_bytes([payload[3], payload[4]]);
    let ncomp = payload[5] as usize;
    if width == 0 || height == 0 {
        return Err(EntropyError::MalformedSegment("zero frame dimension".into()));
    }
    if payload.len() < 6 + 3 * ncomp {
        return Err(EntropyError::MalformedSegment("short SOF0 component list".into()));
    }
    if ncomp != 3 {
        return Err(EntropyError::UnsupportedSampling(format!(
            "{ncomp} components (3-component YCbCr only)"
        )));
    }

    let mut components = Vec::with_capacity(ncomp);
    for c in 0..ncomp {
        let id = payload[6 + 3 * c];
        let hv = payload[7 + 3 * c];
        let quant_id = payload[8 + 3 * c];
        if quant_id >= 4 {
            return Err(EntropyError::MalformedSegment(format!("quant id {quant_id}")));
        }
        components.push(ComponentSpec {
            id,
            h: hv >> 4,
            v: hv & 0x0F,
            quant_id,
            dc_table_id: 0,
            ac_table_id: 0,
        });
    }

    let luma_hv = (components[0].h, components[0].v);
    let chroma_ok = components[1..].iter().all(|c| (c.h, c.v) == (1, 1));
    if !chroma_ok || !matches!(luma_hv, (1, 1) | (2, 2)) {
        return Err(EntropyError::UnsupportedSampling(format!(
            "sampling {:?} (4:2:0 and 4:4:4 only)",
            components.iter().map(|c| (c.h, c.v)).collect::<Vec<_>>()
        )));
    }

    let h_max = components.iter().map(|c| c.h).max().unwrap();
    let v_max = components.iter().map(|c| c.v).max().unwrap();
    Ok(FrameInfo { width, height, components, h_max, v_max })
}

/// Returns (component id, DC table id, AC table id) per scan component.
fn parse_sos(payload: &[u8]) -> Result<Vec<(u8, u8, u8)>, EntropyError> {
    if payload.is_empty() {
        return Err(EntropyError::MalformedSegment("empty SOS".into()));
    }
    let ns = payload[0] as usize;
    if payload.len() != 1 + 2 * ns + 3 {
        return Err(EntropyError::MalformedSegment("SOS length mismatch".into()));
    }
    let (ss, se, ahal) =
        (payload[1 + 2 * ns], payload[2 + 2 * ns], payload[3 + 2 * ns]);
    if (ss, se, ahal) != (0, 63, 0) {
        return Err(EntropyError::UnsupportedSampling(
            "spectral selection / successive approximation".into(),
        ));
    }
    let mut spec = Vec::with_capacity(ns);
    for c in 0..ns {
        let cs = payload[1 + 2 * c];
        let tdta = payload[2 + 2 * c];
        if tdta >> 4 >= 4 || tdta & 0x0F >= 4 {
            return Err(EntropyError::MalformedSegment(format!("SOS table ids {tdta:02X}")));
        }
        spec.push((cs, tdta >> 4, tdta & 0x0F));
    }
    Ok(spec)
}
