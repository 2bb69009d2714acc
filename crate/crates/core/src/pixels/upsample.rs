//! Chroma upsampling for 4:2:0 planes.

/// How 2x2-subsampled chroma is expanded back to full resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpsampleMode {
    /// Nearest-neighbour: each output pixel reads the chroma sample of its
    /// own 2x2 cell. Strictly block-local, so pixels of an MCU depend only
    /// on that MCU's coefficients; this is the default because it keeps
    /// untouched extended blocks bit-identical under partial encryption.
    Replicate,
    /// Triangle filter (the common libjpeg-style "fancy" upsampling):
    /// 3:1 blends toward the nearest neighbour in each axis. Matches the
    /// mainstream decoders and is what the conformance suite compares with.
    Triangle,
}

/// Upsample a `w x h` plane to `2w x 2h`.
pub fn upsample_2x2(input: &[i16], w: usize, h: usize, mode: UpsampleMode) -> Vec<i16> {
    match mode {
        UpsampleMode::Replicate => replicate_2x2(input, w, h),
        UpsampleMode::Triangle => triangle_2x2(input, w, h),
    }
}

fn replicate_2x2(input: &[i16], w: usize, h: usize) -> Vec<i16> {
    let mut out = vec![0i16; 4 * w * h];
    for y in 0..2 * h {
        let src = &input[(y / 2) * w..(y / 2) * w + w];
        let dst = &mut out[y * 2 * w..(y + 1) * 2 * w];
        for x in 0..2 * w {
            dst[x] = src[x / 2];
        }
    }
    out
}

fn triangle_2x2(input: &[i16], w: usize, h: usize) -> Vec<i16> {
    let mut out = vec![0i16; 4 * w * h];
    let mut blended = vec![0i16; w];
    for oy in 0..2 * h {
        let y = oy / 2;
        // Blend 3:1 toward the vertically nearer input row, clamped at the
        // plane edges.
        let other = if oy % 2 == 0 { y.saturating_sub(1) } else { (y + 1).min(h - 1) };
        let cur = &input[y * w..(y + 1) * w];
        let adj = &input[other * w..(other + 1) * w];
        for x in 0..w {
            blended[x] = (3 * cur[x] + adj[x] + 2) >> 2;
        }
        horizontal_pass(&blended, &mut out[oy * 2 * w..(oy + 1) * 2 * w]);
    }
    out
}

fn horizontal_pass(row: &[i16], out: &mut [i16]) {
    let w = row.len();
    if w == 1 {
        out[0] = row[0];
        out[1] = row[0];
        return;
    }
    out[0] = row[0];
    out[1] = (3 * row[0] + row[1] + 2) >> 2;
    for x in 1..w - 1 {
        let near = 3 * row[x] + 2;
        out[2 * x] = (near + row[x - 1]) >> 2;
        out[2 * x + 1] = (near + row[x + 1]) >> 2;
    }
    out[2 * w - 2] = (3 * row[w - 1] + row[w - 2] + 2) >> 2;
    out[2 * w - 1] = row[w - 1];
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replicate_expands_cells() {
        let out = replicate_2x2(&[1, 2, 3, 4], 2, 2);
        #[rustfmt::skip]
        let want = vec![
            1, 1, 2, 2,
            1, 1, 2, 2,
            3, 3, 4, 4,
            3, 3, 4, 4,
        ];
        assert_eq!(out, want);
    }

    #[test]
    fn triangle_is_flat_on_flat_input() {
        let out = triangle_2x2(&[50; 12], 4, 3);
        assert!(out.iter().all(|&v| v == 50));
    }

    #[test]
    fn triangle_blends_three_to_one() {
        let out = triangle_2x2(&[0, 100], 2, 1);
        // Edges copy, interior blends (3*0+100+2)/4 = 25 and (3*100+0+2)/4 = 75.
        assert_eq!(out[..4], [0, 25, 75, 100]);
        assert_eq!(out[..4], out[4..8]);
    }
}
