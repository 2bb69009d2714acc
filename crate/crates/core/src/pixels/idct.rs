//! Fixed-point 8x8 inverse DCT.
//!
//! This is the widely used integer AAN/Loeffler variant (the stb_image /
//! zune-jpeg formulation) with 12-bit constants: a vertical pass keeping 10
//! extra fraction bits, then a horizontal pass that folds in the +128 level
//! shift and clamps to `[0, 255]`. All arithmetic wraps on overflow so
//! hostile coefficient values stay deterministic. The output is bit-equal to
//! the common library decoders, which is what the decoder-conformance suite
//! checks against.

// Constants are round(x * 4096) for the rotation factors of the algorithm.
const C_0_5411961: i32 = 2217;
const C_1_847759: i32 = -7567;
const C_0_765367: i32 = 3135;
const C_1_175876: i32 = 4816;
const C_0_298631: i32 = 1223;
const C_2_053120: i32 = 8410;
const C_3_072711: i32 = 12586;
const C_1_501321: i32 = 6149;
const C_0_899976: i32 = -3685;
const C_2_562915: i32 = -10497;
const C_1_961571: i32 = -8034;
const C_0_390181: i32 = -1597;

/// Rounding bias, half-unit at 17 fraction bits, and the +128 level shift.
const PASS2_BIAS: i32 = 512 + 65536 + (128 << 17);

#[inline]
fn clamp255(v: i32) -> i16 {
    v.clamp(0, 255) as i16
}

/// DC-only block: every output sample is the descaled, level-shifted DC.
fn idct_dc_only(dc: i32, out: &mut [i16], offset: usize, stride: usize) {
    let v = clamp255((dc.wrapping_add(4).wrapping_add(1024)) >> 3);
    for row in 0..8 {
        out[offset + row * stride..offset + row * stride + 8].fill(v);
    }
}

/// Transform one dequantized block (natural order) into 8x8 samples written
/// at `offset` with the given row stride.
pub fn idct_block(coeffs: &mut [i32; 64], out: &mut [i16], offset: usize, stride: usize) {
    if coeffs[1..] == [0i32; 63] {
        idct_dc_only(coeffs[0], out, offset, stride);
        return;
    }

    // Columns.
    for c in 0..8 {
        let p2 = coeffs[c + 16];
        let p3 = coeffs[c + 48];
        let p1 = p2.wrapping_add(p3).wrapping_mul(C_0_5411961);
        let t2 = p1.wrapping_add(p3.wrapping_mul(C_1_847759));
        let t3 = p1.wrapping_add(p2.wrapping_mul(C_0_765367));

        let p2 = coeffs[c];
        let p3 = coeffs[c + 32];
        let t0 = p2.wrapping_add(p3) << 12;
        let t1 = p2.wrapping_sub(p3) << 12;

        let x0 = t0.wrapping_add(t3).wrapping_add(512);
        let x3 = t0.wrapping_sub(t3).wrapping_add(512);
        let x1 = t1.wrapping_add(t2).wrapping_add(512);
        let x2 = t1.wrapping_sub(t2).wrapping_add(512);

        let mut t0 = coeffs[c + 56];
        let mut t1 = coeffs[c + 40];
        let mut t2 = coeffs[c + 24];
        let mut t3 = coeffs[c + 8];

        let p3 = t0.wrapping_add(t2);
        let p4 = t1.wrapping_add(t3);
        let p1 = t0.wrapping_add(t3);
        let p2 = t1.wrapping_add(t2);
        let p5 = p3.wrapping_add(p4).wrapping_mul(C_1_175876);

        t0 = t0.wrapping_mul(C_0_298631);
        t1 = t1.wrapping_mul(C_2_053120);
        t2 = t2.wrapping_mul(C_3_072711);
        t3 = t3.wrapping_mul(C_1_501321);

        let p1 = p5.wrapping_add(p1.wrapping_mul(C_0_899976));
        let p2 = p5.wrapping_add(p2.wrapping_mul(C_2_562915));
        let p3 = p3.wrapping_mul(C_1_961571);
        let p4 = p4.wrapping_mul(C_0_390181);

        t3 = t3.wrapping_add(p1.wrapping_add(p4));
        t2 = t2.wrapping_add(p2.wrapping_add(p3));
        t1 = t1.wrapping_add(p2.wrapping_add(p4));
        t0 = t0.wrapping_add(p1.wrapping_add(p3));

        coeffs[c] = x0.wrapping_add(t3) >> 10;
        coeffs[c + 8] = x1.wrapping_add(t2) >> 10;
        coeffs[c + 16] = x2.wrapping_add(t1) >> 10;
        coeffs[c + 24] = x3.wrapping_add(t0) >> 10;
        coeffs[c + 32] = x3.wrapping_sub(t0) >> 10;
        coeffs[c + 40] = x2.wrapping_sub(t1) >> 10;
        coeffs[c + 48] = x1.wrapping_sub(t2) >> 10;
        coeffs[c + 56] = x0.wrapping_sub(t3) >> 10;
    }

    // Rows.
    for r in 0..8 {
        let i = r * 8;
        let p2 = coeffs[i + 2];
        let p3 = coeffs[i + 6];
        let p1 = p2.wrapping_add(p3).wrapping_mul(C_0_5411961);
        let t2 = p1.wrapping_add(p3.wrapping_mul(C_1_847759));
        let t3 = p1.wrapping_add(p2.wrapping_mul(C_0_765367));

        let p2 = coeffs[i];
        let p3 = coeffs[i + 4];
        let t0 = p2.wrapping_add(p3) << 12;
        let t1 = p2.wrapping_sub(p3) << 12;

        let x0 = t0.wrapping_add(t3).wrapping_add(PASS2_BIAS);
        let x3 = t0.wrapping_sub(t3).wrapping_add(PASS2_BIAS);
        let x1 = t1.wrapping_add(t2).wrapping_add(PASS2_BIAS);
        let x2 = t1.wrapping_sub(t2).wrapping_add(PASS2_BIAS);

        let mut t0 = coeffs[i + 7];
        let mut t1 = coeffs[i + 5];
        let mut t2 = coeffs[i + 3];
        let mut t3 = coeffs[i + 1];

        let p3 = t0.wrapping_add(t2);
        let p4 = t1.wrapping_add(t3);
        let p1 = t0.wrapping_add(t3);
        let p2 = t1.wrapping_add(t2);
        let p5 = p3.wrapping_add(p4).wrapping_mul(C_1_175876);

        t0 = t0.wrapping_mul(C_0_298631);
        t1 = t1.wrapping_mul(C_2_053120);
        t2 = t2.wrapping_mul(C_3_072711);
        t3 = t3.wrapping_mul(C_1_501321);

        let p1 = p5.wrapping_add(p1.wrapping_mul(C_0_899976));
        let p2 = p5.wrapping_add(p2.wrapping_mul(C_2_562915));
        let p3 = p3.wrapping_mul(C_1_961571);
        let p4 = p4.wrapping_mul(C_0_390181);

        t3 = t3.wrapping_add(p1.wrapping_add(p4));
        t2 = t2.wrapping_add(p2.wrapping_add(p3));
        t1 = t1.wrapping_add(p2.wrapping_add(p4));
        t0 = t0.wrapping_add(p1.wrapping_add(p3));

        let dst = &mut out[offset + r * stride..offset + r * stride + 8];
        dst[0] = clamp255(x0.wrapping_add(t3) >> 17);
        dst[1] = clamp255(x1.wrapping_add(t2) >> 17);
        dst[2] = clamp255(x2.wrapping_add(t1) >> 17);
        dst[3] = clamp255(x3.wrapping_add(t0) >> 17);
        dst[4] = clamp255(x3.wrapping_sub(t0) >> 17);
        dst[5] = clamp255(x2.wrapping_sub(t1) >> 17);
        dst[6] = clamp255(x1.wrapping_sub(t2) >> 17);
        dst[7] = clamp255(x0.wrapping_sub(t3) >> 17);
    }
}
