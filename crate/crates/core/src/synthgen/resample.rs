//! Separable resampling kernels on square images.

/// Row-major `to x from` weights for area (box) averaging `from -> to`, `to <= from`.
fn area_weights(from: usize, to: usize) -> Vec<f64> {
    let mut w = vec![0.0; to * from];
    let ratio = from as f64 / to as f64;
    for i in 0..to {
        let lo = i as f64 * ratio;
        let hi = (i + 1) as f64 * ratio;
        for j in (lo.floor() as usize)..(hi.ceil() as usize).min(from) {
            let overlap = (hi.min(j as f64 + 1.0) - lo.max(j as f64)).max(0.0);
            w[i * from + j] = overlap / ratio;
        }
    }
    w
}

/// Row-major `to x from` weights for bilinear interpolation with pixel-centre
/// alignment and replicated edges.
fn bilinear_weights(from: usize, to: usize) -> Vec<f64> {
    let mut w = vec![0.0; to * from];
    let ratio = from as f64 / to as f64;
    for i in 0..to {
        let src = ((i as f64 + 0.5) * ratio - 0.5).clamp(0.0, (from - 1) as f64);
        let j0 = src.floor() as usize;
        let j1 = (j0 + 1).min(from - 1);
        let t = src - j0 as f64;
        w[i * from + j0] += 1.0 - t;
        w[i * from + j1] += t;
    }
    w
}

/// Applies `out = M · img · Mᵀ` for a `to x from` matrix `m`.
fn separable(img: &[f64], from: usize, to: usize, m: &[f64]) -> Vec<f64> {
    let mut rows = vec![0.0; from * to];
    for y in 0..from {
        for i in 0..to {
            let mut acc = 0.0;
            for j in 0..from {
                acc += m[i * from + j] * img[y * from + j];
            }
            rows[y * to + i] = acc;
        }
    }
    let mut out = vec![0.0; to * to];
    for i in 0..to {
        for x in 0..to {
            let mut acc = 0.0;
            for j in 0..from {
                acc += m[i * from + j] * rows[j * to + x];
            }
            out[i * to + x] = acc;
        }
    }
    out
}

pub(crate) fn box_downsample(img: &[f64], from: usize, to: usize) -> Vec<f64> {
    separable(img, from, to, &area_weights(from, to))
}

pub(crate) fn bilinear_resize(img: &[f64], from: usize, to: usize) -> Vec<f64> {
    separable(img, from, to, &bilinear_weights(from, to))
}
