//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use staypos::nnet::{bce_loss, Gradients, MlpParams};
use staypos::synthgen::{rng_from_seed, Label};

/// Denominator floor for relative errors: below it the comparison is
/// effectively absolute (1e-9), which is the scale of central-difference
/// round-off at ε = 1e-6.
pub const REL_FLOOR: f64 = 1e-4;

pub fn n_params(p: &MlpParams) -> usize {
    p.weights.iter().map(Vec::len).sum::<usize>()
        + p.biases.iter().map(Vec::len).sum::<usize>()
        + p.head_w.len()
        + 1
}

/// Flat view over every trainable coordinate, in declaration order.
pub fn param_mut(p: &mut MlpParams, mut k: usize) -> &mut f64 {
    for t in p.weights.iter_mut().chain(p.biases.iter_mut()) {
        if k < t.len() {
            return &mut t[k];
        }
        k -= t.len();
    }
    if k < p.head_w.len() {
        return &mut p.head_w[k];
    }
    assert_eq!(k, p.head_w.len(), "coordinate out of range");
    &mut p.head_b
}

pub fn grad_at(g: &Gradients, mut k: usize) -> f64 {
    for t in g.weights.iter().chain(&g.biases) {
        if k < t.len() {
            return t[k];
        }
        k -= t.len();
    }
    if k < g.head_w.len() {
        return g.head_w[k];
    }
    g.head_b
}

fn loss(p: &MlpParams, x: &[f64], y: Label) -> f64 {
    bce_loss(p.logit(x).unwrap(), y)
}

/// Random net with non-trivial biases and head, plus an input whose
/// pre-activations all sit at least `margin` away from the ReLU kink.
pub fn random_case(seed: u64, margin: f64) -> (MlpParams, Vec<f64>, Label) {
    let mut rng = rng_from_seed(seed);
    let n_hidden = rng.random_range(1..=3);
    let mut dims = vec![rng.random_range(2..=10)];
    for _ in 0..n_hidden {
        dims.push(rng.random_range(1..=8));
    }
    let mut p = MlpParams::<f64>::init(&dims, rng.random()).unwrap();
    for b in p.biases.iter_mut().flatten() {
        *b = rng.random_range(-0.3..0.3);
    }
    for w in p.head_w.iter_mut() {
        *w = rng.random_range(-1.5..1.5);
    }
    p.head_b = rng.random_range(-1.0..1.0);
    let label = if rng.random_bool(0.5) { Label::Fake } else { Label::Real };
    loop {
        let x: Vec<f64> = (0..dims[0]).map(|_| rng.random_range(0.0..1.0)).collect();
        let t = p.forward(&x).unwrap();
        if t.pre.iter().flatten().all(|z| z.abs() > margin) {
            return (p, x, label);
        }
    }
}

/// Largest relative error between backprop and central differences over
/// every coordinate of one case.
pub fn fd_max_rel_error(p: &MlpParams, x: &[f64], y: Label, eps: f64) -> f64 {
    let g = p.backward(&p.forward(x).unwrap(), y);
    let mut worst = 0.0f64;
    for k in 0..n_params(p) {
        let mut hi = p.clone();
        *param_mut(&mut hi, k) += eps;
        let mut lo = p.clone();
        *param_mut(&mut lo, k) -= eps;
        let numeric = (loss(&hi, x, y) - loss(&lo, x, y)) / (2.0 * eps);
        let analytic = grad_at(&g, k);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
        worst = worst.max(rel);
    }
    worst
}

/// O(n²) average precision: each positive's rank and the positives at or
/// above it are counted directly, with ties ranked by input order.
pub fn brute_force_ap(scores: &[f64], labels: &[Label]) -> f64 {
    let n = scores.len();
    let rank = |i: usize| 1 + (0..n).filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i)).count();
    let mut hits: Vec<(usize, usize)> = (0..n)
        .filter(|&i| labels[i] == Label::Fake)
        .map(|i| {
            let r = rank(i);
            let tp = (0..n).filter(|&j| labels[j] == Label::Fake && rank(j) <= r).count();
            (r, tp)
        })
        .collect();
    hits.sort_unstable();
    let sum = hits.iter().fold(0.0, |acc, &(r, tp)| acc + tp as f64 / r as f64);
    sum / hits.len() as f64
}

/// Random AP instance with both classes present; every third instance draws
/// scores from a 4-value set so ties are common.
pub fn random_ap_instance(seed: u64) -> (Vec<f64>, Vec<Label>) {
    let mut rng = rng_from_seed(seed);
    let n = rng.random_range(2..=64);
    let tied = seed.is_multiple_of(3);
    loop {
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if tied {
                    f64::from(rng.random_range(0..4u8)) / 4.0
                } else {
                    rng.random()
                }
            })
            .collect();
        let labels: Vec<Label> = (0..n)
            .map(|_| if rng.random_bool(0.4) { Label::Fake } else { Label::Real })
            .collect();
        let pos = labels.iter().filter(|&&l| l == Label::Fake).count();
        if pos > 0 && pos < n {
            return (scores, labels);
        }
    }
}
