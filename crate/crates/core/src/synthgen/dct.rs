//! Orthonormal 8x8 DCT-II and the block quantizer built on it.

use std::sync::OnceLock;

pub const BLOCK: usize = 8;

fn basis() -> &'static [[f64; BLOCK]; BLOCK] {
    static BASIS: OnceLock<[[f64; BLOCK]; BLOCK]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut c = [[0.0; BLOCK]; BLOCK];
        let n = BLOCK as f64;
        for (k, row) in c.iter_mut().enumerate() {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            for (x, v) in row.iter_mut().enumerate() {
                *v = scale
                    * (std::f64::consts::PI * (2.0 * x as f64 + 1.0) * k as f64 / (2.0 * n)).cos();
            }
        }
        c
    })
}

pub type Block = [[f64; BLOCK]; BLOCK];

/// `C · B · Cᵀ`
pub fn forward(block: &Block) -> Block {
    let c = basis();
    let mut tmp = [[0.0; BLOCK]; BLOCK];
    for k in 0..BLOCK {
        for x in 0..BLOCK {
            let mut acc = 0.0;
            for y in 0..BLOCK {
                acc += c[k][y] * block[y][x];
            }
            tmp[k][x] = acc;
        }
    }
    let mut out = [[0.0; BLOCK]; BLOCK];
    for k in 0..BLOCK {
        for l in 0..BLOCK {
            let mut acc = 0.0;
            for x in 0..BLOCK {
                acc += tmp[k][x] * c[l][x];
            }
            out[k][l] = acc;
        }
    }
    out
}

/// `Cᵀ · X · C`
pub fn inverse(coeffs: &Block) -> Block {
    let c = basis();
    let mut tmp = [[0.0; BLOCK]; BLOCK];
    for y in 0..BLOCK {
        for l in 0..BLOCK {
            let mut acc = 0.0;
            for k in 0..BLOCK {
                acc += c[k][y] * coeffs[k][l];
            }
            tmp[y][l] = acc;
        }
    }
    let mut out = [[0.0; BLOCK]; BLOCK];
    for y in 0..BLOCK {
        for x in 0..BLOCK {
            let mut acc = 0.0;
            for l in 0..BLOCK {
                acc += tmp[y][l] * c[l][x];
            }
            out[y][x] = acc;
        }
    }
    out
}

/// Quantizer step for a quality level in `1..=100`: 0.005 at 100, 0.5 at 1.
pub fn quant_step(quality: u8) -> f64 {
    0.5 * (101.0 - f64::from(quality)) / 100.0
}

/// Quantizes every block of a `side x side` row-major image in place.
pub(crate) fn quantize_image(pixels: &mut [f64], side: usize, step: f64) {
    for by in (0..side).step_by(BLOCK) {
        for bx in (0..side).step_by(BLOCK) {
            let mut block = [[0.0; BLOCK]; BLOCK];
            for (y, row) in block.iter_mut().enumerate() {
                for (x, v) in row.iter_mut().enumerate() {
                    *v = pixels[(by + y) * side + bx + x];
                }
            }
            let mut coeffs = forward(&block);
            for c in coeffs.iter_mut().flatten() {
                *c = (*c / step).round() * step;
            }
            let restored = inverse(&coeffs);
            for (y, row) in restored.iter().enumerate() {
                for (x, v) in row.iter().enumerate() {
                    pixels[(by + y) * side + bx + x] = v.clamp(0.0, 1.0);
                }
            }
        }
    }
}
