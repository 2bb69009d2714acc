//! Minimal baseline pixel decoder (analysis only) and image-quality
//! metrics.
//!
//! The decode path is Huffman walk, dequantize, fixed-point IDCT, chroma
//! upsample, BT.601 YCbCr to RGB. Color conversion uses 14-bit fixed-point
//! coefficients. Chroma upsampling defaults to block-local replication (see
//! [`UpsampleMode`]); the triangle mode reproduces the mainstream decoders
//! within the documented one-step rounding budget.

mod idct;
mod upsample;

pub use upsample::UpsampleMode;

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::bitstream::SegmentedJpeg;
use crate::entropy::{self, EntropyError};

#[derive(Debug, Error)]
pub enum PixelsError {
    #[error("dimension mismatch: {a_w}x{a_h} vs {b_w}x{b_h}")]
    DimensionMismatch { a_w: usize, a_h: usize, b_w: usize, b_h: usize },
    #[error("channel mismatch: {a} vs {b}")]
    ChannelMismatch { a: usize, b: usize },
    #[error("image export failed: {0}")]
    Export(String),
}

/// 8-bit raster, row major, interleaved channels (3 = RGB, 1 = luma).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub samples: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        RasterImage { width, height, channels, samples: vec![0; width * height * channels] }
    }

    #[inline]
    pub fn sample(&self, x: usize, y: usize, c: usize) -> u8 {
        self.samples[(y * self.width + x) * self.channels + c]
    }

    /// BT.601 luma as floating point, without rounding loss.
    pub fn luma_f64(&self) -> Vec<f64> {
        match self.channels {
            1 => self.samples.iter().map(|&v| v as f64).collect(),
            _ => self
                .samples
                .chunks_exact(self.channels)
                .map(|px| 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64)
                .collect(),
        }
    }
}

/// PSNR and SSIM of one image pair.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct QualityScore {
    /// Decibels; infinite for identical images (serialized as null).
    pub psnr_db: f64,
    pub ssim: f64,
}

/// Compare two rasters with both metrics.
pub fn quality(a: &RasterImage, b: &RasterImage) -> Result<QualityScore, PixelsError> {
    Ok(QualityScore { psnr_db: psnr(a, b)?, ssim: ssim(a, b)? })
}

// BT.601 full-range inverse coefficients at 14 fraction bits, the same
// fixed-point form the mainstream decoders use.
const Y_SCALE: i32 = 16384;
const CR_R: i32 = 22970;
const CB_B: i32 = 29032;
const CR_G: i32 = -11700;
const CB_G: i32 = -5638;
const YUV_ROUND: i32 = (1 << 13) - 1;

#[inline]
fn ycbcr_to_rgb(y: i16, cb: i16, cr: i16) -> [u8; 3] {
    let y = y as i32 * Y_SCALE + YUV_ROUND;
    let cb = cb as i32 - 128;
    let cr = cr as i32 - 128;
    let r = (y + cr * CR_R) >> 14;
    let g = (y + cr * CR_G + cb * CB_G) >> 14;
    let b = (y + cb * CB_B) >> 14;
    [r.clamp(0, 255) as u8, g.clamp(0, 255) as u8, b.clamp(0, 255) as u8]
}

/// Decode to RGB with block-local (replication) chroma upsampling.
pub fn decode_pixels(jpeg: &SegmentedJpeg) -> Result<RasterImage, EntropyError> {
    decode_pixels_with(jpeg, UpsampleMode::Replicate)
}

/// Decode to RGB with the given chroma upsampling mode.
pub fn decode_pixels_with(
    jpeg: &SegmentedJpeg,
    mode: UpsampleMode,
) -> Result<RasterImage, EntropyError> {
    let tables = entropy::build_tables(jpeg)?;
    let (_, decoded) = entropy::walk_scan(jpeg, &tables)?;
    let frame = &tables.frame;

    let width = frame.width as usize;
    let height = frame.height as usize;
    let mcus_wide = frame.mcus_wide();

    // Decode each component into its padded plane.
    let mut planes: Vec<Vec<i16>> = Vec::with_capacity(frame.components.len());
    let mut plane_dims: Vec<(usize, usize)> = Vec::with_capacity(frame.components.len());
    for comp in &frame.components {
        let pw = mcus_wide * comp.h as usize * 8;
        let ph = frame.mcus_high() * comp.v as usize * 8;
        planes.push(vec![0i16; pw * ph]);
        plane_dims.push((pw, ph));
    }

    for (m, units) in decoded.mcus.iter().enumerate() {
        let mcu_x = m % mcus_wide;
        let mcu_y = m / mcus_wide;
        let mut unit = units.iter();
        for (ci, comp) in frame.components.iter().enumerate() {
            let quant = tables.quant_table(ci)?;
            let (pw, _) = plane_dims[ci];
            for vy in 0..comp.v as usize {
                for hx in 0..comp.h as usize {
                    let u = unit.next().expect("walker yields units_per_mcu units");
                    let mut block = dequantize(u, quant);
                    let px = (mcu_x * comp.h as usize + hx) * 8;
                    let py = (mcu_y * comp.v as usize + vy) * 8;
                    idct::idct_block(&mut block, &mut planes[ci], py * pw + px, pw);
                }
            }
        }
    }

    // Bring chroma to full resolution on the padded grid, then crop while
    // converting color.
    let subsampled = frame.h_max == 2;
    let full: Vec<Vec<i16>> = planes
        .into_iter()
        .enumerate()
        .map(|(ci, plane)| {
            let (pw, ph) = plane_dims[ci];
            if subsampled && ci > 0 {
                upsample::upsample_2x2(&plane, pw, ph, mode)
            } else {
                plane
            }
        })
        .collect();
    let stride = plane_dims[0].0;

    let mut out = RasterImage::new(width, height, 3);
    for y in 0..height {
        for x in 0..width {
            let i = y * stride + x;
            let rgb = ycbcr_to_rgb(full[0][i], full[1][i], full[2][i]);
            let o = (y * width + x) * 3;
            out.samples[o..o + 3].copy_from_slice(&rgb);
        }
    }
    Ok(out)
}

fn dequantize(unit: &entropy::DataUnit, quant: &[u16; 64]) -> [i32; 64] {
    // Zigzag scan order -> natural order, dequantizing on the way.
    const UNZIGZAG: [usize; 64] = [
        0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34,
        27, 20, 13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44,
        51, 58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
    ];
    let zz = unit.coefficients_zigzag();
    let mut out = [0i32; 64];
    for k in 0..64 {
        out[UNZIGZAG[k]] = zz[k].wrapping_mul(quant[k] as i32);
    }
    out
}

fn check_compatible(a: &RasterImage, b: &RasterImage) -> Result<(), PixelsError> {
    if a.channels != b.channels {
        return Err(PixelsError::ChannelMismatch { a: a.channels, b: b.channels });
    }
    if a.width != b.width || a.height != b.height {
        return Err(PixelsError::DimensionMismatch {
            a_w: a.width,
            a_h: a.height,
            b_w: b.width,
            b_h: b.height,
        });
    }
    Ok(())
}

/// Peak signal-to-noise ratio over all channels jointly:
/// `10 log10(255^2 / MSE)`, infinite when the images are identical.
pub fn psnr(a: &RasterImage, b: &RasterImage) -> Result<f64, PixelsError> {
    check_compatible(a, b)?;
    let sq_err: f64 = a
        .samples
        .iter()
        .zip(&b.samples)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    if sq_err == 0.0 {
        return Ok(f64::INFINITY);
    }
    let mse = sq_err / a.samples.len() as f64;
    Ok(10.0 * (255.0f64 * 255.0 / mse).log10())
}

/// Mean SSIM over sliding 8x8 luma windows with K1 = 0.01, K2 = 0.03,
/// L = 255, uniform weighting. Symmetric in its arguments; exactly 1.0 for
/// identical inputs.
pub fn ssim(a: &RasterImage, b: &RasterImage) -> Result<f64, PixelsError> {
    check_compatible(a, b)?;
    let la = a.luma_f64();
    let lb = b.luma_f64();
    let (w, h) = (a.width, a.height);
    const WIN: usize = 8;
    const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
    const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

    // Degenerate sizes fall back to a single window covering the image.
    let (win_w, win_h) = (WIN.min(w), WIN.min(h));
    let n = (win_w * win_h) as f64;

    let mut total = 0.0f64;
    let mut windows = 0u64;
    for y in 0..=(h - win_h) {
        for x in 0..=(w - win_w) {
            let mut sa = 0.0;
            let mut sb = 0.0;
            let mut saa = 0.0;
            let mut sbb = 0.0;
            let mut sab = 0.0;
            for dy in 0..win_h {
                let row = (y + dy) * w + x;
                for dx in 0..win_w {
                    let va = la[row + dx];
                    let vb = lb[row + dx];
                    sa += va;
                    sb += vb;
                    saa += va * va;
                    sbb += vb * vb;
                    sab += va * vb;
                }
            }
            let ma = sa / n;
            let mb = sb / n;
            let va = saa / n - ma * ma;
            let vb = sbb / n - mb * mb;
            let cov = sab / n - ma * mb;
            let score = ((2.0 * ma * mb + C1) * (2.0 * cov + C2))
                / ((ma * ma + mb * mb + C1) * (va + vb + C2));
            total += score;
            windows += 1;
        }
    }
    Ok(total / windows as f64)
}

/// Write a binary PPM (3 channels) or PGM (1 channel).
pub fn write_pnm(img: &RasterImage, path: &Path) -> Result<(), PixelsError> {
    let magic = match img.channels {
        1 => "P5",
        3 => "P6",
        n => return Err(PixelsError::ChannelMismatch { a: n, b: 3 }),
    };
    let mut f = std::fs::File::create(path).map_err(|e| PixelsError::Export(e.to_string()))?;
    write!(f, "{magic}\n{} {}\n255\n", img.width, img.height)
        .and_then(|_| f.write_all(&img.samples))
        .map_err(|e| PixelsError::Export(e.to_string()))
}

/// Write a PNG.
pub fn write_png(img: &RasterImage, path: &Path) -> Result<(), PixelsError> {
    let color = match img.channels {
        1 => image::ExtendedColorType::L8,
        3 => image::ExtendedColorType::Rgb8,
        n => return Err(PixelsError::ChannelMismatch { a: n, b: 3 }),
    };
    image::save_buffer(
        path,
        &img.samples,
        img.width as u32,
        img.height as u32,
        color,
    )
    .map_err(|e| PixelsError::Export(e.to_string()))
}
