//! Ciphertext-only evaluation suite: key-space accounting, the non-zero
//! count sketch attack, histogram analysis, and the key-sensitivity
//! experiment driver.
//!
//! All reports are plain serializable structs with a `schema_version`
//! field; identical inputs produce byte-identical JSON.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bitstream::SegmentedJpeg;
use crate::cipher::{decrypt, encrypt, EncryptionKey, EncryptionRecipe, Keystream, KEY_LEN};
use crate::entropy;
use crate::pixels::{self, decode_pixels, ssim, RasterImage};

/// Key-space sizes, in log2, for an `M x N` image encrypted at restart
/// interval `r` with `T` Pattern-4 bytes.
///
/// The block count follows the published formula for 4:2:0 chroma
/// subsampling, `floor(ceil(M/16) * ceil(N/16) / r)`; the factorial term is
/// evaluated through the log-gamma function. Minimum assumes one encrypted
/// bit per Pattern-4 byte, maximum seven.
#[derive(Debug, Clone, Serialize)]
pub struct KeySpaceReport {
    pub schema_version: u32,
    pub width: u32,
    pub height: u32,
    pub restart_interval: u32,
    /// Pattern-4 byte count.
    pub t: u64,
    pub block_count: u64,
    pub s_enc_min_bits: f64,
    pub s_enc_max_bits: f64,
    /// log2(block_count!).
    pub s_bp_log2: f64,
    pub s_min_bits: f64,
    pub s_max_bits: f64,
    pub exceeds_256_bits: bool,
}

/// log2(n!) via the log-gamma function.
pub fn log2_factorial(n: u64) -> f64 {
    libm::lgamma(n as f64 + 1.0) / std::f64::consts::LN_2
}

pub fn key_space(width: u32, height: u32, restart_interval: u32, t: u64) -> KeySpaceReport {
    let blocks_wide = width.div_ceil(16) as u64;
    let blocks_high = height.div_ceil(16) as u64;
    let block_count = blocks_wide * blocks_high / restart_interval as u64;
    let s_bp_log2 = log2_factorial(block_count);
    let s_min_bits = t as f64 + s_bp_log2;
    let s_max_bits = 7.0 * t as f64 + s_bp_log2;
    KeySpaceReport {
        schema_version: 1,
        width,
        height,
        restart_interval,
        t,
        block_count,
        s_enc_min_bits: t as f64,
        s_enc_max_bits: 7.0 * t as f64,
        s_bp_log2,
        s_min_bits,
        s_max_bits,
        exceeds_256_bits: s_min_bits > 256.0,
    }
}

/// Per-block non-zero-coefficient raster produced by the sketch attack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SketchImage {
    pub width: usize,
    pub height: usize,
    /// Row-major counts, at most `max_count` each.
    pub counts: Vec<u16>,
    pub max_count: u16,
}

impl SketchImage {
    /// Linear rendering: 0 maps to black, `max_count` to white.
    pub fn to_grayscale(&self) -> RasterImage {
        let mut img = RasterImage::new(self.width, self.height, 1);
        let max = self.max_count.max(1) as u32;
        for (dst, &c) in img.samples.iter_mut().zip(&self.counts) {
            *dst = ((c as u32 * 255 + max / 2) / max).min(255) as u8;
        }
        img
    }

    /// Histogram-equalized rendering, for visual comparison of sketches
    /// whose counts cluster in a narrow band.
    pub fn to_grayscale_equalized(&self) -> RasterImage {
        let mut hist = vec![0u64; self.max_count as usize + 1];
        for &c in &self.counts {
            hist[c as usize] += 1;
        }
        let total: u64 = self.counts.len() as u64;
        let mut cdf = vec![0u64; hist.len()];
        let mut acc = 0u64;
        for (i, &h) in hist.iter().enumerate() {
            acc += h;
            cdf[i] = acc;
        }
        let mut img = RasterImage::new(self.width, self.height, 1);
        for (dst, &c) in img.samples.iter_mut().zip(&self.counts) {
            *dst = ((cdf[c as usize] * 255) / total.max(1)) as u8;
        }
        img
    }
}

/// The NZCA sketch: per 8x8 luma data unit, the number of non-zero
/// coefficients visible in the entropy stream, rendered on the
/// `ceil(W/8) x ceil(H/8)` luma grid.
///
/// This works on encrypted files exactly as on plain ones: encryption
/// changes additional-bit values, never symbols, so the per-unit counts
/// survive. With block permutation the sketch is scrambled at
/// extended-block granularity; without it the plaintext sketch leaks
/// through unchanged.
pub fn nzca(jpeg: &SegmentedJpeg) -> crate::Result<SketchImage> {
    let tables = entropy::build_tables(jpeg)?;
    let (map, _) = entropy::walk_scan(jpeg, &tables)?;
    Ok(sketch_from_counts(&map, &tables.frame, LumaScope::PerUnit))
}

/// Coarser per-MCU variant: counts summed over all data units of each MCU.
pub fn nzca_per_mcu(jpeg: &SegmentedJpeg) -> crate::Result<SketchImage> {
    let tables = entropy::build_tables(jpeg)?;
    let (map, _) = entropy::walk_scan(jpeg, &tables)?;
    Ok(sketch_from_counts(&map, &tables.frame, LumaScope::PerMcu))
}

pub(crate) enum LumaScope {
    PerUnit,
    PerMcu,
}

pub(crate) fn sketch_from_counts(
    map: &entropy::ScanMap,
    frame: &entropy::FrameInfo,
    scope: LumaScope,
) -> SketchImage {
    let mcus_wide = frame.mcus_wide();
    let h0 = frame.components[0].h as usize;
    let v0 = frame.components[0].v as usize;
    let units_per_mcu = map.units_per_mcu;

    match scope {
        LumaScope::PerUnit => {
            let gw = (frame.width as usize).div_ceil(8);
            let gh = (frame.height as usize).div_ceil(8);
            let mut counts = vec![0u16; gw * gh];
            for (m, mcu_units) in map.unit_nzc.chunks(units_per_mcu).enumerate() {
                let mx = m % mcus_wide;
                let my = m / mcus_wide;
                for (k, &nzc) in mcu_units[..h0 * v0].iter().enumerate() {
                    let gx = mx * h0 + k % h0;
                    let gy = my * v0 + k / h0;
                    if gx < gw && gy < gh {
                        counts[gy * gw + gx] = nzc as u16;
                    }
                }
            }
            SketchImage { width: gw, height: gh, counts, max_count: 64 }
        }
        LumaScope::PerMcu => {
            let gw = mcus_wide;
            let gh = frame.mcus_high();
            let counts: Vec<u16> = map
                .unit_nzc
                .chunks(units_per_mcu)
                .map(|units| units.iter().map(|&n| n as u16).sum())
                .collect();
            SketchImage { width: gw, height: gh, counts, max_count: 64 * units_per_mcu as u16 }
        }
    }
}

/// Per-channel 256-bin histograms plus similarity scores.
#[derive(Debug, Clone, Serialize)]
pub struct HistogramReport {
    pub schema_version: u32,
    pub width: usize,
    pub height: usize,
    /// R, G, B bins; each sums to `width * height`.
    pub bins: Vec<Vec<u64>>,
    /// Pearson correlation of the bin vectors, per channel pair.
    pub correlation_rg: f64,
    pub correlation_rb: f64,
    pub correlation_gb: f64,
    pub mean_pairwise_correlation: f64,
    /// Chi-square distance of normalized bins, per channel pair.
    pub chi_square_rg: f64,
    pub chi_square_rb: f64,
    pub chi_square_gb: f64,
    /// Mean per-channel correlation against the reference image, if given.
    pub similarity_to_reference: Option<f64>,
}

/// Build the histogram report for a 3-channel image.
pub fn histogram_report(
    img: &RasterImage,
    reference: Option<&RasterImage>,
) -> crate::Result<HistogramReport> {
    if img.channels != 3 {
        return Err(pixels::PixelsError::ChannelMismatch { a: img.channels, b: 3 }.into());
    }
    let bins = channel_histograms(img);
    let (rg, rb, gb) = (
        pearson_u64(&bins[0], &bins[1]),
        pearson_u64(&bins[0], &bins[2]),
        pearson_u64(&bins[1], &bins[2]),
    );
    let similarity_to_reference = match reference {
        None => None,
        Some(r) => {
            if r.channels != 3 {
                return Err(pixels::PixelsError::ChannelMismatch { a: r.channels, b: 3 }.into());
            }
            let rbins = channel_histograms(r);
            let mean = (0..3).map(|c| pearson_u64(&bins[c], &rbins[c])).sum::<f64>() / 3.0;
            Some(mean)
        }
    };
    Ok(HistogramReport {
        schema_version: 1,
        width: img.width,
        height: img.height,
        chi_square_rg: chi_square(&bins[0], &bins[1]),
        chi_square_rb: chi_square(&bins[0], &bins[2]),
        chi_square_gb: chi_square(&bins[1], &bins[2]),
        bins: bins.into_iter().map(|b| b.to_vec()).collect(),
        correlation_rg: rg,
        correlation_rb: rb,
        correlation_gb: gb,
        mean_pairwise_correlation: (rg + rb + gb) / 3.0,
        similarity_to_reference,
    })
}

fn channel_histograms(img: &RasterImage) -> [Box<[u64; 256]>; 3] {
    let mut bins = [
        Box::new([0u64; 256]),
        Box::new([0u64; 256]),
        Box::new([0u64; 256]),
    ];
    for px in img.samples.chunks_exact(3) {
        for c in 0..3 {
            bins[c][px[c] as usize] += 1;
        }
    }
    bins
}

fn pearson_u64(a: &[u64; 256], b: &[u64; 256]) -> f64 {
    let n = 256.0f64;
    let ma = a.iter().sum::<u64>() as f64 / n;
    let mb = b.iter().sum::<u64>() as f64 / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..256 {
        let da = a[i] as f64 - ma;
        let db = b[i] as f64 - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if va == 0.0 && vb == 0.0 {
        return 1.0;
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    // sqrt of the product keeps identical inputs at exactly 1.0.
    cov / (va * vb).sqrt()
}

/// Chi-square distance between normalized histograms:
/// `0.5 * sum((p - q)^2 / (p + q))` over non-empty bins.
fn chi_square(a: &[u64; 256], b: &[u64; 256]) -> f64 {
    let ta = a.iter().sum::<u64>() as f64;
    let tb = b.iter().sum::<u64>() as f64;
    if ta == 0.0 || tb == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..256 {
        let p = a[i] as f64 / ta;
        let q = b[i] as f64 / tb;
        if p + q > 0.0 {
            acc += (p - q) * (p - q) / (p + q);
        }
    }
    0.5 * acc
}

/// Five-number boxplot summary in the style used for the evaluation
/// figures: quartiles, 1.5-IQR whiskers, outliers, and the mean.
#[derive(Debug, Clone, Serialize)]
pub struct BoxplotStats {
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
    pub mean: f64,
}

impl BoxplotStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        assert!(!samples.is_empty());
        let mut s = samples.to_vec();
        s.sort_by(|a, b| a.total_cmp(b));
        let q = |p: f64| -> f64 {
            let idx = p * (s.len() - 1) as f64;
            let lo = idx.floor() as usize;
            let frac = idx - lo as f64;
            if lo + 1 < s.len() {
                s[lo] * (1.0 - frac) + s[lo + 1] * frac
            } else {
                s[lo]
            }
        };
        let (p25, p50, p75) = (q(0.25), q(0.5), q(0.75));
        let iqr = p75 - p25;
        let lo_fence = p25 - 1.5 * iqr;
        let hi_fence = p75 + 1.5 * iqr;
        let whisker_low = s.iter().copied().find(|&v| v >= lo_fence).unwrap_or(p25);
        let whisker_high = s.iter().copied().rev().find(|&v| v <= hi_fence).unwrap_or(p75);
        let outliers: Vec<f64> =
            s.iter().copied().filter(|&v| v < lo_fence || v > hi_fence).collect();
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        BoxplotStats { p25, p50, p75, whisker_low, whisker_high, outliers, mean }
    }
}

/// Two-sample Kolmogorov-Smirnov test.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// KS statistic with the asymptotic p-value (effective-sample-size
/// correction).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsTest {
    assert!(!a.is_empty() && !b.is_empty());
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.total_cmp(q));
    ys.sort_by(|p, q| p.total_cmp(q));

    let (m, n) = (xs.len(), ys.len());
    let mut i = 0usize;
    let mut j = 0usize;
    let mut d = 0.0f64;
    while i < m && j < n {
        let x = xs[i];
        let y = ys[j];
        let t = x.min(y);
        while i < m && xs[i] <= t {
            i += 1;
        }
        while j < n && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / m as f64 - j as f64 / n as f64).abs());
    }

    let ne = (m as f64 * n as f64) / (m as f64 + n as f64);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    KsTest { statistic: d, p_value: kolmogorov_q(lambda) }
}

/// Kolmogorov survival function Q(lambda) = 2 sum (-1)^{j-1} exp(-2 j^2 l^2).
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-9 {
        return 1.0;
    }
    let mut sum = 0.0f64;
    let mut sign = 1.0f64;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Pinned decision threshold for the wrong-key decryption check: the median
/// SSIM between the original image and a one-bit-off decryption must fall
/// below this value.
pub const CASE2_SSIM_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Serialize)]
pub struct SampleStats {
    pub samples: Vec<f64>,
    pub boxplot: BoxplotStats,
}

impl SampleStats {
    fn new(samples: Vec<f64>) -> Self {
        let boxplot = BoxplotStats::from_samples(&samples);
        SampleStats { samples, boxplot }
    }
}

/// Results of the key-sensitivity experiment on one image.
#[derive(Debug, Clone, Serialize)]
pub struct SensitivityReport {
    pub schema_version: u32,
    pub trials: usize,
    /// SSIM of a correct-key decrypt against the plaintext decode (1.0).
    pub correct_key_ssim: f64,
    /// Case 1: ciphertext under the key vs. under a one-bit-flipped key.
    pub case1: SampleStats,
    /// Control for Case 1: ciphertext under independent random keys.
    pub case1_control: SampleStats,
    /// Case 2: plaintext vs. decryption with a one-bit-flipped key.
    pub case2: SampleStats,
    pub case1_vs_control_ks: KsTest,
    pub case2_threshold: f64,
    pub case2_median: f64,
    pub case2_median_below_threshold: bool,
}

/// Derive the deterministic experiment randomness from the recipe keys.
fn experiment_stream(recipe: &EncryptionRecipe) -> Keystream {
    let label = b"rstcipher.sensitivity.v1";
    let mut h1 = Sha256::new();
    h1.update(label);
    h1.update(recipe.k1.as_bytes());
    let mut h2 = Sha256::new();
    h2.update(label);
    h2.update(recipe.k2.as_bytes());
    let mut seed = [0u8; KEY_LEN];
    seed[..32].copy_from_slice(&h1.finalize());
    seed[32..].copy_from_slice(&h2.finalize()[..16]);
    Keystream::new(&EncryptionKey::from_bytes(&seed).unwrap())
}

fn random_key(ks: &mut Keystream) -> EncryptionKey {
    let mut bytes = [0u8; KEY_LEN];
    for b in bytes.iter_mut() {
        *b = ks.next_bits(8) as u8;
    }
    EncryptionKey::from_bytes(&bytes).unwrap()
}

/// Flip one uniformly chosen bit of the composite (K1, K2) key pair.
fn flip_one_bit(recipe: &EncryptionRecipe, ks: &mut Keystream) -> EncryptionRecipe {
    let pos = ks.uniform(2 * KEY_LEN * 8);
    let mut out = recipe.clone();
    if pos < KEY_LEN * 8 {
        out.k1 = out.k1.flip_bit(pos);
    } else {
        out.k2 = out.k2.flip_bit(pos - KEY_LEN * 8);
    }
    out
}

/// Run the two-case key-sensitivity experiment.
///
/// The input is restructured to the recipe's restart interval when needed.
/// Per trial: Case 1 compares the decoded ciphertext against the same image
/// encrypted under a key pair differing in one uniformly chosen bit (the
/// control re-encrypts under fresh random keys); Case 2 decodes a
/// decryption that used the one-bit-off key and compares it with the
/// plaintext. Deterministic in `(jpeg, recipe, trials)`.
pub fn sensitivity_experiment(
    jpeg: &SegmentedJpeg,
    recipe: &EncryptionRecipe,
    trials: usize,
) -> crate::Result<SensitivityReport> {
    assert!(trials >= 1);
    let jpeg = if jpeg.restart_interval == recipe.ri {
        jpeg.clone()
    } else {
        let tables = entropy::build_tables(jpeg)?;
        entropy::restructure(jpeg, &tables, recipe.ri)?
    };

    let plain_pixels = decode_pixels(&jpeg)?;
    let base_cipher = encrypt(&jpeg, recipe)?;
    let base_pixels = decode_pixels(&base_cipher)?;

    let correct = decrypt(&base_cipher, recipe)?;
    let correct_key_ssim = ssim(&decode_pixels(&correct)?, &plain_pixels)?;

    let mut ks = experiment_stream(recipe);
    let mut case1 = Vec::with_capacity(trials);
    let mut control = Vec::with_capacity(trials);
    let mut case2 = Vec::with_capacity(trials);
    for _ in 0..trials {
        let flipped = flip_one_bit(recipe, &mut ks);
        let flipped_cipher = encrypt(&jpeg, &flipped)?;
        case1.push(ssim(&decode_pixels(&flipped_cipher)?, &base_pixels)?);

        let mut fresh = recipe.clone();
        fresh.k1 = random_key(&mut ks);
        fresh.k2 = random_key(&mut ks);
        let fresh_cipher = encrypt(&jpeg, &fresh)?;
        control.push(ssim(&decode_pixels(&fresh_cipher)?, &base_pixels)?);

        let wrong = decrypt(&base_cipher, &flipped)?;
        case2.push(ssim(&decode_pixels(&wrong)?, &plain_pixels)?);
    }

    let case2_stats = SampleStats::new(case2);
    let case2_median = case2_stats.boxplot.p50;
    Ok(SensitivityReport {
        schema_version: 1,
        trials,
        correct_key_ssim,
        case1_vs_control_ks: ks_two_sample(&case1, &control),
        case1: SampleStats::new(case1),
        case1_control: SampleStats::new(control),
        case2: case2_stats,
        case2_threshold: CASE2_SSIM_THRESHOLD,
        case2_median,
        case2_median_below_threshold: case2_median < CASE2_SSIM_THRESHOLD,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_space_matches_published_example_shape() {
        // 384x512 at r = 4: 24 * 32 / 4 = 192 blocks.
        let r = key_space(384, 512, 4, 37_031);
        assert_eq!(r.block_count, 192);
        assert!(r.s_min_bits > 256.0);
        assert!((r.s_min_bits - (37_031.0 + r.s_bp_log2)).abs() < 1e-9);
        assert!((r.s_max_bits - (7.0 * 37_031.0 + r.s_bp_log2)).abs() < 1e-9);
    }

    #[test]
    fn key_space_degenerate_cases() {
        // Single 16x16 block at r = 1: permutation space is 1! = 1.
        let r = key_space(16, 16, 1, 5);
        assert_eq!(r.block_count, 1);
        assert_eq!(r.s_bp_log2, 0.0);
        assert_eq!(r.s_min_bits, 5.0);
        // Nothing encryptable and one block: zero-bit key space.
        let r = key_space(16, 16, 1, 0);
        assert_eq!(r.s_min_bits, 0.0);
    }

    #[test]
    fn key_space_grows_as_interval_shrinks() {
        let mut last = f64::NEG_INFINITY;
        for r in [16u32, 8, 4, 2, 1] {
            let rep = key_space(384, 512, r, 1000);
            assert!(rep.s_bp_log2 >= last);
            last = rep.s_bp_log2;
        }
    }

    #[test]
    fn log2_factorial_matches_exact_small_values() {
        // 0! = 1, 5! = 120, 12! = 479001600.
        assert!((log2_factorial(0) - 0.0).abs() < 1e-12);
        assert!((log2_factorial(5) - 120f64.log2()).abs() < 1e-9);
        assert!((log2_factorial(12) - 479_001_600f64.log2()).abs() < 1e-9);
    }

    #[test]
    fn boxplot_quartiles_and_outliers() {
        let s = [1.0, 2.0, 3.0, 4.0, 100.0];
        let b = BoxplotStats::from_samples(&s);
        assert_eq!(b.p50, 3.0);
        assert_eq!(b.p25, 2.0);
        assert_eq!(b.p75, 4.0);
        assert_eq!(b.outliers, vec![100.0]);
        assert_eq!(b.whisker_high, 4.0);
        assert_eq!(b.whisker_low, 1.0);
        assert!((b.mean - 22.0).abs() < 1e-12);
    }

    #[test]
    fn ks_identical_samples_have_high_p() {
        let a: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let t = ks_two_sample(&a, &a);
        assert!(t.statistic.abs() < 1e-12);
        assert!(t.p_value > 0.99);
    }

    #[test]
    fn ks_disjoint_samples_have_low_p() {
        let a: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..60).map(|i| 1000.0 + i as f64).collect();
        let t = ks_two_sample(&a, &b);
        assert!((t.statistic - 1.0).abs() < 1e-12);
        assert!(t.p_value < 1e-6);
    }

    #[test]
    fn pearson_of_identical_histograms_is_one() {
        let mut a = [0u64; 256];
        for (i, v) in a.iter_mut().enumerate() {
            *v = (i * i % 97) as u64;
        }
        assert!((pearson_u64(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_mass_is_conserved() {
        let mut img = RasterImage::new(33, 21, 3);
        for (i, s) in img.samples.iter_mut().enumerate() {
            *s = (i * 13 % 256) as u8;
        }
        let rep = histogram_report(&img, Some(&img)).unwrap();
        for bins in &rep.bins {
            assert_eq!(bins.iter().sum::<u64>(), 33 * 21);
        }
        assert_eq!(rep.similarity_to_reference, Some(1.0));
    }
}
