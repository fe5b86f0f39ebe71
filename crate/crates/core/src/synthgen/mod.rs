//! Synthetic real/fake images, planted artifacts and post-processing.
//!
//! Real images are smooth low-frequency textures with a band of fine
//! high-frequency detail. Fake images start from the same smooth texture
//! without the detail band and carry a checkerboard generator trace. The
//! improved family has a weaker trace and gets the detail band back.
//!
//! Every transformation is a pure function of its inputs and an explicit RNG.

pub mod dct;
pub mod io;
mod resample;

use std::f64::consts::PI;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use dct::quant_step;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Real = 0,
    Fake = 1,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        match self {
            Label::Real => 0.0,
            Label::Fake => 1.0,
        }
    }

    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::Real),
            1 => Some(Label::Fake),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Base,
    Improved,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Base => f.write_str("BASE"),
            Family::Improved => f.write_str("IMPROVED"),
        }
    }
}

/// Provenance marker. At most one tag of each kind is carried by a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Tag {
    Compressed { quality: u8 },
    Downsized { scale: f64 },
    Noisy { sigma: f64 },
    Lowpassed { k: usize },
    FakeFamily(Family),
    Inpainted { fraction: f64 },
    RecursionDepth(u32),
    Upscaled { factor: f64 },
}

impl Tag {
    pub fn kind(&self) -> u8 {
        match self {
            Tag::Compressed { .. } => 0,
            Tag::Downsized { .. } => 1,
            Tag::Noisy { .. } => 2,
            Tag::Lowpassed { .. } => 3,
            Tag::FakeFamily(_) => 4,
            Tag::Inpainted { .. } => 5,
            Tag::RecursionDepth(_) => 6,
            Tag::Upscaled { .. } => 7,
        }
    }

    pub(crate) fn value(&self) -> f64 {
        match *self {
            Tag::Compressed { quality } => f64::from(quality),
            Tag::Downsized { scale } => scale,
            Tag::Noisy { sigma } => sigma,
            Tag::Lowpassed { k } => k as f64,
            Tag::FakeFamily(Family::Base) => 0.0,
            Tag::FakeFamily(Family::Improved) => 1.0,
            Tag::Inpainted { fraction } => fraction,
            Tag::RecursionDepth(r) => f64::from(r),
            Tag::Upscaled { factor } => factor,
        }
    }

    pub(crate) fn from_parts(kind: u8, value: f64) -> Option<Tag> {
        Some(match kind {
            0 => Tag::Compressed { quality: value as u8 },
            1 => Tag::Downsized { scale: value },
            2 => Tag::Noisy { sigma: value },
            3 => Tag::Lowpassed { k: value as usize },
            4 if value == 0.0 => Tag::FakeFamily(Family::Base),
            4 if value == 1.0 => Tag::FakeFamily(Family::Improved),
            5 => Tag::Inpainted { fraction: value },
            6 => Tag::RecursionDepth(value as u32),
            7 => Tag::Upscaled { factor: value },
            _ => return None,
        })
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Compressed { quality } => write!(f, "compressed({quality})"),
            Tag::Downsized { scale } => write!(f, "downsized({scale})"),
            Tag::Noisy { sigma } => write!(f, "noisy({sigma})"),
            Tag::Lowpassed { k } => write!(f, "lowpassed({k})"),
            Tag::FakeFamily(fam) => write!(f, "fake_family({fam})"),
            Tag::Inpainted { fraction } => write!(f, "inpainted({fraction})"),
            Tag::RecursionDepth(r) => write!(f, "recursion_depth({r})"),
            Tag::Upscaled { factor } => write!(f, "upscaled({factor})"),
        }
    }
}

/// A square grayscale image in `[0,1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pub side: usize,
    pub pixels: Vec<f64>,
    pub label: Label,
    pub tags: Vec<Tag>,
}

impl ImageSample {
    pub fn constant(side: usize, value: f64) -> Self {
        Self {
            side,
            pixels: vec![value; side * side],
            label: Label::Real,
            tags: Vec::new(),
        }
    }

    /// Adds `tag`, replacing an existing tag of the same kind.
    pub fn push_tag(&mut self, tag: Tag) {
        match self.tags.iter_mut().find(|t| t.kind() == tag.kind()) {
            Some(slot) => *slot = tag,
            None => self.tags.push(tag),
        }
    }

    pub fn tag(&self, kind: u8) -> Option<&Tag> {
        self.tags.iter().find(|t| t.kind() == kind)
    }

    pub fn is_compressed(&self) -> bool {
        self.tag(0).is_some()
    }

    pub fn family(&self) -> Option<Family> {
        match self.tag(4) {
            Some(Tag::FakeFamily(f)) => Some(*f),
            _ => None,
        }
    }

    pub fn tags_string(&self) -> String {
        self.tags
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(";")
    }

    fn clamp(&mut self) {
        for p in &mut self.pixels {
            *p = p.clamp(0.0, 1.0);
        }
    }
}

/// Parameters of the synthetic benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub side: usize,
    /// Real images in the train+val pool, and again in the test set.
    pub n_real: usize,
    /// Fake images in the train+val pool, and again per family in the test set.
    pub n_fake: usize,
    pub fake_amplitude: f64,
    pub improved_amplitude: f64,
    /// Per-image artifact strength is `amplitude · (1 + spread · U(−1, 1))`.
    pub amplitude_spread: f64,
    /// Fraction of training reals that receive block compression.
    pub spurious_fraction: f64,
    pub spurious_quality: u8,
    /// Number of low-frequency cosine components in the smooth texture.
    pub base_smoothness: usize,
    pub noise_std: f64,
    /// Number of high-frequency cosines in the real fine-detail band.
    pub detail_components: usize,
    /// Upper bound of the uniform amplitude of each fine-detail cosine.
    pub detail_amplitude: f64,
    /// Draw the checkerboard polarity per fake image, as an unaligned crop of
    /// a generator output would. When false every trace has `+` at the origin.
    pub random_trace_sign: bool,
    /// Fraction of training reals that are downsized then restored.
    pub downsize_fraction: f64,
    pub downsize_scale: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        let fake_amplitude = 0.06;
        Self {
            side: 16,
            n_real: 600,
            n_fake: 600,
            fake_amplitude,
            improved_amplitude: fake_amplitude / 3.0,
            amplitude_spread: 0.9,
            spurious_fraction: 0.5,
            spurious_quality: 30,
            base_smoothness: 4,
            noise_std: 0.01,
            detail_components: 3,
            detail_amplitude: 0.15,
            random_trace_sign: true,
            downsize_fraction: 0.0,
            downsize_scale: 0.5,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.side < 2 || self.side % dct::BLOCK != 0 {
            return Err(invalid(format!(
                "side {} must be a positive multiple of {}",
                self.side,
                dct::BLOCK
            )));
        }
        if self.n_real == 0 || self.n_fake == 0 {
            return Err(invalid("sample counts must be positive"));
        }
        if !(self.improved_amplitude > 0.0 && self.improved_amplitude < self.fake_amplitude) {
            return Err(invalid(format!(
                "need 0 < improved_amplitude ({}) < fake_amplitude ({})",
                self.improved_amplitude, self.fake_amplitude
            )));
        }
        for (name, v) in [
            ("spurious_fraction", self.spurious_fraction),
            ("downsize_fraction", self.downsize_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(format!("{name} {v} outside [0,1]")));
            }
        }
        if !(1..=100).contains(&self.spurious_quality) {
            return Err(invalid(format!("spurious_quality {}", self.spurious_quality)));
        }
        if !(0.0..1.0).contains(&self.amplitude_spread) {
            return Err(invalid(format!("amplitude_spread {} outside [0,1)", self.amplitude_spread)));
        }
        if !(self.noise_std >= 0.0 && self.detail_amplitude >= 0.0) {
            return Err(invalid("noise_std and detail_amplitude must be >= 0"));
        }
        if self.downsize_fraction > 0.0 {
            check_scale(self.side, self.downsize_scale)?;
        }
        Ok(())
    }

    /// The dataset's fine-detail band. Frequencies are fixed per seed (one
    /// camera pipeline); amplitude and phase vary per image.
    pub fn detail_band(&self) -> DetailBand {
        let mut rng = rng_from_seed(derive_seed(self.seed, "camera-detail"));
        let frequencies = (0..self.detail_components)
            .map(|_| {
                let major = rng.random_range(0.3..0.45);
                let minor = rng.random_range(-0.15..0.15);
                if rng.random_bool(0.5) {
                    (major, minor)
                } else {
                    (minor, major)
                }
            })
            .collect();
        DetailBand {
            frequencies,
            amplitude: self.detail_amplitude,
        }
    }
}

/// High-frequency texture present in real images and restored by the improved family.
#[derive(Debug, Clone, PartialEq)]
pub struct DetailBand {
    /// `(u, v)` in cycles per pixel; the dominant axis lies in [0.3, 0.45].
    pub frequencies: Vec<(f64, f64)>,
    pub amplitude: f64,
}

/// Stable 64-bit FNV-1a hash of a stream name.
pub fn stream_hash(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Seed for a named sub-stream: `seed XOR hash(name)`.
pub fn derive_seed(seed: u64, name: &str) -> u64 {
    seed ^ stream_hash(name)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn add_cosine(pixels: &mut [f64], side: usize, amp: f64, u: f64, v: f64, phase: f64) {
    for y in 0..side {
        for x in 0..side {
            pixels[y * side + x] += amp * (2.0 * PI * (u * x as f64 + v * y as f64) + phase).cos();
        }
    }
}

/// `0.5 + Σ a_k cos(2π(u_k x + v_k y) + φ_k)` with frequencies in the lowest
/// quartile of the spectrum (|u|,|v| ≤ 1/8 cycles per pixel).
fn smooth_texture<R: Rng + ?Sized>(side: usize, components: usize, rng: &mut R) -> Vec<f64> {
    let mut pixels = vec![0.5; side * side];
    for _ in 0..components {
        let u = rng.random_range(0.0..=0.125);
        let v = rng.random_range(-0.125..=0.125);
        let a = rng.random_range(0.0..0.15);
        let phase = rng.random_range(0.0..2.0 * PI);
        add_cosine(&mut pixels, side, a, u, v, phase);
    }
    pixels
}

/// Fine detail: one cosine per band frequency with amplitude
/// `U(0, band.amplitude)` and uniform phase.
fn add_detail<R: Rng + ?Sized>(pixels: &mut [f64], side: usize, band: &DetailBand, rng: &mut R) {
    for &(u, v) in &band.frequencies {
        let a = if band.amplitude > 0.0 {
            rng.random_range(0.0..band.amplitude)
        } else {
            0.0
        };
        let phase = rng.random_range(0.0..2.0 * PI);
        add_cosine(pixels, side, a, u, v, phase);
    }
}

fn add_noise<R: Rng + ?Sized>(pixels: &mut [f64], sigma: f64, rng: &mut R) {
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("sigma > 0");
        for p in pixels.iter_mut() {
            *p += normal.sample(rng);
        }
    }
}

pub fn gen_real<R: Rng + ?Sized>(spec: &DatasetSpec, rng: &mut R) -> ImageSample {
    let side = spec.side;
    let mut pixels = smooth_texture(side, spec.base_smoothness, rng);
    add_detail(&mut pixels, side, &spec.detail_band(), rng);
    add_noise(&mut pixels, spec.noise_std, rng);
    let mut img = ImageSample {
        side,
        pixels,
        label: Label::Real,
        tags: Vec::new(),
    };
    img.clamp();
    img
}

/// Smooth texture with sensor noise but no fine detail; the content a
/// generator would produce before its trace is added.
pub fn gen_fake_base<R: Rng + ?Sized>(spec: &DatasetSpec, rng: &mut R) -> ImageSample {
    let side = spec.side;
    let mut pixels = smooth_texture(side, spec.base_smoothness, rng);
    add_noise(&mut pixels, spec.noise_std, rng);
    let mut img = ImageSample {
        side,
        pixels,
        label: Label::Real,
        tags: Vec::new(),
    };
    img.clamp();
    img
}

/// Adds `amplitude · (−1)^(x+y)`; the improved family also regains the
/// fine-detail band. Marks the sample fake.
pub fn plant_fake_artifact<R: Rng + ?Sized>(
    img: &ImageSample,
    amplitude: f64,
    family: Family,
    detail: &DetailBand,
    rng: &mut R,
) -> Result<ImageSample> {
    if !(amplitude > 0.0) {
        return Err(invalid(format!("fake amplitude {amplitude} must be > 0")));
    }
    Ok(plant_signed(img, amplitude, family, detail, rng))
}

fn plant_signed<R: Rng + ?Sized>(
    img: &ImageSample,
    signed_amplitude: f64,
    family: Family,
    detail: &DetailBand,
    rng: &mut R,
) -> ImageSample {
    let side = img.side;
    let mut out = img.clone();
    for y in 0..side {
        for x in 0..side {
            let sign = if (x + y) % 2 == 0 { 1.0 } else { -1.0 };
            out.pixels[y * side + x] += signed_amplitude * sign;
        }
    }
    if family == Family::Improved {
        add_detail(&mut out.pixels, side, detail, rng);
    }
    out.clamp();
    out.label = Label::Fake;
    out.push_tag(Tag::FakeFamily(family));
    out
}

/// Trace amplitude for one fake: family strength, per-image spread, polarity.
fn trace_amplitude<R: Rng + ?Sized>(spec: &DatasetSpec, family: Family, rng: &mut R) -> f64 {
    let amplitude = match family {
        Family::Base => spec.fake_amplitude,
        Family::Improved => spec.improved_amplitude,
    };
    let amplitude = if spec.amplitude_spread > 0.0 {
        amplitude * (1.0 + spec.amplitude_spread * rng.random_range(-1.0..1.0))
    } else {
        amplitude
    };
    if spec.random_trace_sign && rng.random_bool(0.5) {
        -amplitude
    } else {
        amplitude
    }
}

pub fn gen_fake<R: Rng + ?Sized>(spec: &DatasetSpec, family: Family, rng: &mut R) -> ImageSample {
    let base = gen_fake_base(spec, rng);
    let amplitude = trace_amplitude(spec, family, rng);
    plant_signed(&base, amplitude, family, &spec.detail_band(), rng)
}

pub fn simulate_compression(img: &ImageSample, quality: u8) -> Result<ImageSample> {
    if !(1..=100).contains(&quality) {
        return Err(invalid(format!("quality {quality} outside 1..=100")));
    }
    if img.side % dct::BLOCK != 0 {
        return Err(invalid(format!("side {} not divisible by 8", img.side)));
    }
    let mut out = img.clone();
    dct::quantize_image(&mut out.pixels, img.side, quant_step(quality));
    out.push_tag(Tag::Compressed { quality });
    Ok(out)
}

fn check_scale(side: usize, scale: f64) -> Result<usize> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(invalid(format!("scale {scale} outside (0,1]")));
    }
    let target = (side as f64 * scale).round() as usize;
    if target < 2 {
        return Err(invalid(format!("scale {scale} leaves fewer than 2 pixels per side")));
    }
    Ok(target)
}

/// Box-average down to `round(S·scale)` then bilinear back to `S`.
pub fn downscale_upscale(img: &ImageSample, scale: f64) -> Result<ImageSample> {
    let target = check_scale(img.side, scale)?;
    let mut out = img.clone();
    if target != img.side {
        let small = resample::box_downsample(&img.pixels, img.side, target);
        out.pixels = resample::bilinear_resize(&small, target, img.side);
        out.clamp();
    }
    out.push_tag(Tag::Downsized { scale });
    Ok(out)
}

/// Bilinear up to `round(S·factor)` then box-average back to `S`.
pub fn upscale_probe(img: &ImageSample, factor: f64) -> Result<ImageSample> {
    if !(factor >= 1.0 && factor.is_finite()) {
        return Err(invalid(format!("upscale factor {factor} must be >= 1")));
    }
    let target = (img.side as f64 * factor).round() as usize;
    let mut out = img.clone();
    if target != img.side {
        let big = resample::bilinear_resize(&img.pixels, img.side, target);
        out.pixels = resample::box_downsample(&big, target, img.side);
        out.clamp();
    }
    out.push_tag(Tag::Upscaled { factor });
    Ok(out)
}

pub fn add_gaussian_noise<R: Rng + ?Sized>(
    img: &ImageSample,
    sigma: f64,
    rng: &mut R,
) -> Result<ImageSample> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("noise sigma {sigma} must be >= 0")));
    }
    let mut out = img.clone();
    add_noise(&mut out.pixels, sigma, rng);
    out.clamp();
    out.push_tag(Tag::Noisy { sigma });
    Ok(out)
}

/// `k x k` box filter with replicated edges.
pub fn low_pass_filter(img: &ImageSample, k: usize) -> Result<ImageSample> {
    let side = img.side;
    if k % 2 == 0 || k == 0 || k > side {
        return Err(invalid(format!("low-pass kernel {k} must be odd and in 1..={side}")));
    }
    let mut out = img.clone();
    if k > 1 {
        let r = (k / 2) as isize;
        let last = side as isize - 1;
        let norm = (k * k) as f64;
        for y in 0..side as isize {
            for x in 0..side as isize {
                let mut acc = 0.0;
                for dy in -r..=r {
                    let yy = (y + dy).clamp(0, last) as usize;
                    for dx in -r..=r {
                        let xx = (x + dx).clamp(0, last) as usize;
                        acc += img.pixels[yy * side + xx];
                    }
                }
                out.pixels[y as usize * side + x as usize] = acc / norm;
            }
        }
        out.clamp();
    }
    out.push_tag(Tag::Lowpassed { k });
    Ok(out)
}

/// Side of the inpainting square for a coverage fraction.
pub fn inpaint_side(side: usize, fraction: f64) -> usize {
    ((fraction * (side * side) as f64).sqrt().round() as usize).clamp(1, side)
}

/// Replaces a random square covering `fraction` of the image with base-family
/// fake content, `recursion` times with fresh regions and fresh content.
pub fn inpaint_mix<R: Rng + ?Sized>(
    real: &ImageSample,
    fraction: f64,
    recursion: u32,
    spec: &DatasetSpec,
    rng: &mut R,
) -> Result<ImageSample> {
    let side = real.side;
    if real.label != Label::Real {
        return Err(invalid("inpainting source must be a real image"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) || fraction * ((side * side) as f64) < 1.0 {
        return Err(invalid(format!("inpaint fraction {fraction} covers no pixel")));
    }
    if recursion == 0 {
        return Err(invalid("recursion depth must be >= 1"));
    }
    let region = inpaint_side(side, fraction);
    let mut out = real.clone();
    for _ in 0..recursion {
        let fill = gen_fake(spec, Family::Base, rng);
        let y0 = rng.random_range(0..=side - region);
        let x0 = rng.random_range(0..=side - region);
        for y in y0..y0 + region {
            let row = y * side;
            out.pixels[row + x0..row + x0 + region]
                .copy_from_slice(&fill.pixels[row + x0..row + x0 + region]);
        }
    }
    out.label = Label::Fake;
    out.push_tag(Tag::Inpainted {
        fraction: fraction * f64::from(recursion),
    });
    out.push_tag(Tag::RecursionDepth(recursion));
    Ok(out)
}

/// Squared magnitude of the 2-D DFT at the (S/2, S/2) bin, normalized by S².
pub fn nyquist_energy(img: &ImageSample) -> f64 {
    let side = img.side;
    let mut acc = 0.0;
    for y in 0..side {
        for x in 0..side {
            let sign = if (x + y) % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * img.pixels[y * side + x];
        }
    }
    acc * acc / (side * side) as f64
}

fn split_val<T>(mut items: Vec<T>) -> (Vec<T>, Vec<T>) {
    let n_val = (items.len() / 10).max(1).min(items.len().saturating_sub(1));
    let val = items.split_off(items.len() - n_val);
    (items, val)
}

/// Biased training pool: a fraction of reals is compressed (and optionally a
/// fraction downsized), fakes are clean base-family images. Returns a
/// stratified 90/10 train/val split, each shuffled.
pub fn build_training_set(spec: &DatasetSpec) -> Result<(Vec<ImageSample>, Vec<ImageSample>)> {
    spec.validate()?;
    if spec.n_real < 2 || spec.n_fake < 2 {
        return Err(invalid("need at least two samples per class for a validation split"));
    }
    let mut rng = rng_from_seed(derive_seed(spec.seed, "train-pool"));
    let mut reals: Vec<ImageSample> = (0..spec.n_real).map(|_| gen_real(spec, &mut rng)).collect();
    let fakes: Vec<ImageSample> = (0..spec.n_fake)
        .map(|_| gen_fake(spec, Family::Base, &mut rng))
        .collect();

    let mut order: Vec<usize> = (0..reals.len()).collect();
    order.shuffle(&mut rng);
    let n_compressed = (spec.spurious_fraction * spec.n_real as f64).round() as usize;
    for &i in &order[..n_compressed] {
        reals[i] = simulate_compression(&reals[i], spec.spurious_quality)?;
    }
    order.shuffle(&mut rng);
    let n_downsized = (spec.downsize_fraction * spec.n_real as f64).round() as usize;
    for &i in &order[..n_downsized] {
        reals[i] = downscale_upscale(&reals[i], spec.downsize_scale)?;
    }

    let (mut train, mut val) = split_val(reals);
    let (fake_train, fake_val) = split_val(fakes);
    train.extend(fake_train);
    val.extend(fake_val);
    train.shuffle(&mut rng);
    val.shuffle(&mut rng);
    Ok((train, val))
}

/// Held-out clean reals plus base and improved fakes.
#[derive(Debug, Clone)]
pub struct TestSet {
    pub reals: Vec<ImageSample>,
    pub base_fakes: Vec<ImageSample>,
    pub improved_fakes: Vec<ImageSample>,
}

pub fn build_test_set(spec: &DatasetSpec) -> Result<TestSet> {
    spec.validate()?;
    let mut rng = rng_from_seed(derive_seed(spec.seed, "test-set"));
    let reals = (0..spec.n_real).map(|_| gen_real(spec, &mut rng)).collect();
    let base_fakes = (0..spec.n_fake)
        .map(|_| gen_fake(spec, Family::Base, &mut rng))
        .collect();
    let improved_fakes = (0..spec.n_fake)
        .map(|_| gen_fake(spec, Family::Improved, &mut rng))
        .collect();
    Ok(TestSet {
        reals,
        base_fakes,
        improved_fakes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> DatasetSpec {
        DatasetSpec::default()
    }

    #[test]
    fn zero_components_give_constant_half() {
        let s = DatasetSpec {
            noise_std: 0.0,
            base_smoothness: 0,
            detail_components: 0,
            ..spec()
        };
        let img = gen_real(&s, &mut rng_from_seed(3));
        assert!(img.pixels.iter().all(|&p| p == 0.5));
        assert_eq!(img.label, Label::Real);
        assert!(img.tags.is_empty());
    }

    #[test]
    fn generator_is_deterministic() {
        let s = DatasetSpec { seed: 7, ..spec() };
        let a = gen_real(&s, &mut rng_from_seed(7));
        let b = gen_real(&s, &mut rng_from_seed(7));
        assert_eq!(a, b);
        let bits = |img: &ImageSample| img.pixels.iter().map(|p| p.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn zero_amplitude_is_rejected() {
        let img = ImageSample::constant(16, 0.5);
        let band = spec().detail_band();
        let err = plant_fake_artifact(&img, 0.0, Family::Base, &band, &mut rng_from_seed(0));
        assert!(err.is_err());
        assert!(plant_fake_artifact(&img, -0.1, Family::Base, &band, &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn checkerboard_on_constant_image() {
        let img = ImageSample::constant(16, 0.5);
        let out =
            plant_fake_artifact(&img, 0.1, Family::Base, &spec().detail_band(), &mut rng_from_seed(0))
                .unwrap();
        for y in 0..16 {
            for x in 0..16 {
                let want = if (x + y) % 2 == 0 { 0.6 } else { 0.4 };
                assert_eq!(out.pixels[y * 16 + x], want);
            }
        }
        assert_eq!(out.label, Label::Fake);
        assert_eq!(out.family(), Some(Family::Base));
    }

    #[test]
    fn quality_out_of_range_rejected() {
        let img = ImageSample::constant(16, 0.5);
        assert!(simulate_compression(&img, 0).is_err());
        assert!(simulate_compression(&img, 101).is_err());
        let odd = ImageSample::constant(12, 0.5);
        assert!(simulate_compression(&odd, 50).is_err());
    }

    #[test]
    fn constant_image_survives_compression() {
        for q in [1u8, 10, 50, 100] {
            let img = ImageSample::constant(16, 0.37);
            let out = simulate_compression(&img, q).unwrap();
            let first = out.pixels[0];
            for &p in &out.pixels {
                assert!((p - first).abs() < 1e-12);
            }
            assert!((first - 0.37).abs() <= quant_step(q) / 2.0 + 1e-12);
        }
    }

    #[test]
    fn downscale_identity_and_constants() {
        let img = gen_real(&spec(), &mut rng_from_seed(1));
        let same = downscale_upscale(&img, 1.0).unwrap();
        assert_eq!(same.pixels, img.pixels);
        let c = ImageSample::constant(16, 0.25);
        for s in [0.875, 0.75, 0.625, 0.5, 0.2] {
            let out = downscale_upscale(&c, s).unwrap();
            assert!(out.pixels.iter().all(|&p| (p - 0.25).abs() < 1e-12), "scale {s}");
        }
        assert!(downscale_upscale(&img, 0.0).is_err());
        assert!(downscale_upscale(&img, 1.5).is_err());
        assert!(downscale_upscale(&img, 0.05).is_err());
    }

    #[test]
    fn half_scale_flattens_checkerboard() {
        let img = ImageSample::constant(16, 0.5);
        let cb =
            plant_fake_artifact(&img, 0.2, Family::Base, &spec().detail_band(), &mut rng_from_seed(0))
                .unwrap();
        let out = downscale_upscale(&cb, 0.5).unwrap();
        assert!(out.pixels.iter().all(|&p| (p - 0.5).abs() < 1e-12));
    }

    #[test]
    fn noise_and_lowpass_identities() {
        let img = gen_real(&spec(), &mut rng_from_seed(2));
        assert_eq!(add_gaussian_noise(&img, 0.0, &mut rng_from_seed(0)).unwrap().pixels, img.pixels);
        assert_eq!(low_pass_filter(&img, 1).unwrap().pixels, img.pixels);
        assert!(add_gaussian_noise(&img, -1.0, &mut rng_from_seed(0)).is_err());
        assert!(low_pass_filter(&img, 2).is_err());
        assert!(low_pass_filter(&img, 17).is_err());
        assert!(low_pass_filter(&img, 0).is_err());
    }

    #[test]
    fn full_side_lowpass_matches_direct_convolution() {
        // With replicated edges a full-width box is not a global mean; compare
        // against a direct padded-convolution oracle instead.
        let img = gen_real(&spec(), &mut rng_from_seed(4));
        let out = low_pass_filter(&img, 15).unwrap();
        let s = 16i64;
        for y in 0..s {
            for x in 0..s {
                let mut acc = 0.0;
                for yy in y - 7..=y + 7 {
                    for xx in x - 7..=x + 7 {
                        let py = yy.clamp(0, s - 1);
                        let px = xx.clamp(0, s - 1);
                        acc += img.pixels[(py * s + px) as usize];
                    }
                }
                let got = out.pixels[(y * s + x) as usize];
                assert!((got - acc / 225.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn repeated_transform_keeps_one_tag_per_kind() {
        let img = gen_real(&spec(), &mut rng_from_seed(5));
        let once = simulate_compression(&img, 10).unwrap();
        let twice = simulate_compression(&once, 20).unwrap();
        assert_eq!(twice.tags, vec![Tag::Compressed { quality: 20 }]);
    }

    #[test]
    fn inpaint_errors_and_tags() {
        let s = spec();
        let real = gen_real(&s, &mut rng_from_seed(6));
        assert!(inpaint_mix(&real, 0.001, 1, &s, &mut rng_from_seed(0)).is_err());
        assert!(inpaint_mix(&real, 0.5, 0, &s, &mut rng_from_seed(0)).is_err());
        let fake = gen_fake(&s, Family::Base, &mut rng_from_seed(0));
        assert!(inpaint_mix(&fake, 0.5, 1, &s, &mut rng_from_seed(0)).is_err());

        let out = inpaint_mix(&real, 0.75, 2, &s, &mut rng_from_seed(0)).unwrap();
        assert_eq!(out.label, Label::Fake);
        assert!(out.tags.contains(&Tag::Inpainted { fraction: 1.5 }));
        assert!(out.tags.contains(&Tag::RecursionDepth(2)));
    }

    #[test]
    fn full_inpaint_equals_planted_fill() {
        let s = spec();
        let real = gen_real(&s, &mut rng_from_seed(8));
        let out = inpaint_mix(&real, 1.0, 1, &s, &mut rng_from_seed(9)).unwrap();
        let mut rng = rng_from_seed(9);
        let want = gen_fake(&s, Family::Base, &mut rng);
        assert_eq!(out.pixels, want.pixels);
    }

    #[test]
    fn quarter_inpaint_changes_one_square() {
        let s = spec();
        let real = gen_real(&s, &mut rng_from_seed(10));
        let out = inpaint_mix(&real, 0.25, 1, &s, &mut rng_from_seed(11)).unwrap();
        let changed = out
            .pixels
            .iter()
            .zip(&real.pixels)
            .filter(|(a, b)| a != b)
            .count();
        // The region is an 8x8 square; a replaced pixel equal to the original
        // would need an exact float coincidence.
        assert_eq!(changed, 64);
    }

    #[test]
    fn spurious_fraction_counts() {
        let count = |p: f64, n: usize| {
            let s = DatasetSpec {
                n_real: n,
                n_fake: 20,
                spurious_fraction: p,
                ..spec()
            };
            let (train, val) = build_training_set(&s).unwrap();
            let reals: Vec<_> = train.iter().chain(&val).filter(|i| i.label == Label::Real).collect();
            assert_eq!(reals.len(), n);
            reals.iter().filter(|i| i.is_compressed()).count()
        };
        assert_eq!(count(0.0, 50), 0);
        assert_eq!(count(1.0, 50), 50);
        assert_eq!(count(0.5, 1000), 500);
    }

    #[test]
    fn split_is_stratified() {
        let s = DatasetSpec {
            n_real: 30,
            n_fake: 40,
            ..spec()
        };
        let (train, val) = build_training_set(&s).unwrap();
        assert_eq!(train.len() + val.len(), 70);
        assert_eq!(val.len(), 7);
        assert!(val.iter().any(|i| i.label == Label::Real));
        assert!(val.iter().any(|i| i.label == Label::Fake));
        assert!(train.iter().all(|i| i.label == Label::Real || !i.is_compressed()));
    }

    #[test]
    fn spec_validation() {
        assert!(spec().validate().is_ok());
        assert!(DatasetSpec { n_real: 0, ..spec() }.validate().is_err());
        assert!(DatasetSpec { side: 12, ..spec() }.validate().is_err());
        assert!(DatasetSpec { improved_amplitude: 0.2, ..spec() }.validate().is_err());
        assert!(DatasetSpec { spurious_fraction: 1.5, ..spec() }.validate().is_err());
    }
}
