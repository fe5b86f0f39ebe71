//! Metrics and evaluation protocols: perturbation sweeps, per-family
//! generalization, inpainting groups, the clamping ablation table and the
//! upscaling probe.

mod metrics;

pub use metrics::{accuracy, average_precision};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nnet::{sigmoid, MlpParams, Scalar};
use crate::scores::{decompose_input, group_stats, GroupSpec, GroupStats};
use crate::synthgen::{
    self, derive_seed, rng_from_seed, DatasetSpec, Family, ImageSample, Label, TestSet,
};
use crate::trainer::{
    clamp_head, retrain_stay_positive, train_full_clamped, train_stage1, TrainConfig, TrainMode,
    TrainReport,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub scenario: String,
    pub model: String,
    pub ap: f64,
    pub accuracy_at_half: f64,
    pub n_real: usize,
    pub n_fake: usize,
    pub mean_real_score: f64,
    pub mean_fake_score: f64,
    pub mean_logit: f64,
}

/// Per-sample logits and score parts.
struct Scored {
    logit: Vec<f64>,
    real: Vec<f64>,
    fake: Vec<f64>,
}

fn score_all<T: Scalar>(model: &MlpParams<T>, samples: &[ImageSample]) -> Result<Scored> {
    let mut out = Scored {
        logit: Vec::with_capacity(samples.len()),
        real: Vec::with_capacity(samples.len()),
        fake: Vec::with_capacity(samples.len()),
    };
    for s in samples {
        let d = decompose_input(model, &s.pixels)?;
        out.logit.push(d.logit);
        out.real.push(d.real_score);
        out.fake.push(d.fake_score);
    }
    Ok(out)
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// AP and accuracy of `model` on reals followed by fakes.
pub fn evaluate<T: Scalar>(
    model: &MlpParams<T>,
    reals: &[ImageSample],
    fakes: &[ImageSample],
    scenario: &str,
    model_id: &str,
) -> Result<EvalResult> {
    let samples: Vec<ImageSample> = reals.iter().chain(fakes).cloned().collect();
    let labels: Vec<Label> = samples.iter().map(|s| s.label).collect();
    let sc = score_all(model, &samples)?;
    let probs: Vec<f64> = sc.logit.iter().map(|&z| sigmoid(z)).collect();
    Ok(EvalResult {
        scenario: scenario.to_string(),
        model: model_id.to_string(),
        ap: average_precision(&sc.logit, &labels)?,
        accuracy_at_half: accuracy(&probs, &labels, 0.5)?,
        n_real: reals.len(),
        n_fake: fakes.len(),
        mean_real_score: mean(&sc.real),
        mean_fake_score: mean(&sc.fake),
        mean_logit: mean(&sc.logit),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    Compression,
    Downsize,
    Noise,
    Lowpass,
    Upscale,
}

impl Perturbation {
    pub fn param_name(self) -> &'static str {
        match self {
            Perturbation::Compression => "quality",
            Perturbation::Downsize => "scale",
            Perturbation::Noise => "sigma",
            Perturbation::Lowpass => "k",
            Perturbation::Upscale => "factor",
        }
    }

    pub fn identity_value(self) -> f64 {
        match self {
            Perturbation::Compression => 100.0,
            Perturbation::Downsize | Perturbation::Upscale | Perturbation::Lowpass => 1.0,
            Perturbation::Noise => 0.0,
        }
    }

    pub fn default_grid(self) -> Vec<f64> {
        match self {
            Perturbation::Compression => vec![100.0, 80.0, 60.0, 40.0, 20.0, 10.0],
            Perturbation::Downsize => vec![1.0, 0.875, 0.75, 0.625, 0.5],
            Perturbation::Noise => vec![0.0, 0.02, 0.05, 0.1],
            Perturbation::Lowpass => vec![1.0, 3.0, 5.0],
            Perturbation::Upscale => vec![1.0, 1.25, 1.5, 2.0, 3.0],
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "compression" => Some(Perturbation::Compression),
            "downsize" => Some(Perturbation::Downsize),
            "noise" => Some(Perturbation::Noise),
            "lowpass" => Some(Perturbation::Lowpass),
            "upscale" => Some(Perturbation::Upscale),
            _ => None,
        }
    }

    /// Applies the perturbation at `value`. Compression at quality 100 is a
    /// real (near-lossless) pass, not a no-op; use the identity check in
    /// sweeps to skip it.
    pub fn apply<R: rand::Rng + ?Sized>(
        self,
        img: &ImageSample,
        value: f64,
        rng: &mut R,
    ) -> Result<ImageSample> {
        match self {
            Perturbation::Compression => {
                if value.fract() != 0.0 || !(1.0..=100.0).contains(&value) {
                    return Err(invalid(format!("quality {value} must be an integer in 1..=100")));
                }
                synthgen::simulate_compression(img, value as u8)
            }
            Perturbation::Downsize => synthgen::downscale_upscale(img, value),
            Perturbation::Noise => synthgen::add_gaussian_noise(img, value, rng),
            Perturbation::Lowpass => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(invalid(format!("kernel {value} must be a positive integer")));
                }
                synthgen::low_pass_filter(img, value as usize)
            }
            Perturbation::Upscale => synthgen::upscale_probe(img, value),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Target {
    FakesOnly,
    RealsOnly,
    Both,
}

impl Target {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fakes" | "fakes_only" => Some(Target::FakesOnly),
            "reals" | "reals_only" => Some(Target::RealsOnly),
            "both" => Some(Target::Both),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub param_value: f64,
    /// `None` for real-only probes.
    pub ap: Option<f64>,
    pub accuracy: f64,
    pub n_real: usize,
    pub n_fake: usize,
    pub mean_real_score: f64,
    pub mean_fake_score: f64,
    pub mean_logit: f64,
    pub groups: Vec<GroupStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCurve {
    pub scenario: String,
    pub model: String,
    pub param_name: String,
    pub grid: Vec<f64>,
    pub points: Vec<SweepPoint>,
}

impl SweepCurve {
    pub fn ap(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.ap.unwrap_or(f64::NAN)).collect()
    }

    pub fn mean_logits(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean_logit).collect()
    }

    pub fn ap_at(&self, value: f64) -> Option<f64> {
        self.grid
            .iter()
            .position(|&g| g == value)
            .and_then(|i| self.points[i].ap)
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid("empty sweep grid"));
    }
    let inc = grid.windows(2).all(|w| w[0] < w[1]);
    let dec = grid.windows(2).all(|w| w[0] > w[1]);
    if !(inc || dec) {
        return Err(invalid(format!("sweep grid {grid:?} is not strictly monotone")));
    }
    Ok(())
}

fn perturb_all(
    samples: &[ImageSample],
    p: Perturbation,
    value: f64,
    seed: u64,
    grid_index: usize,
) -> Result<Vec<ImageSample>> {
    if value == p.identity_value() {
        return Ok(samples.to_vec());
    }
    let mut rng = rng_from_seed(seed.wrapping_add(grid_index as u64));
    samples
        .iter()
        .map(|s| p.apply(s, value, &mut rng))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| invalid(format!("grid point {grid_index} ({value}): {e}")))
}

fn point_groups<T: Scalar>(
    model: &MlpParams<T>,
    samples: &[ImageSample],
) -> Result<Vec<GroupStats>> {
    // Only labels that occur, so real-only probes do not warn about an empty group.
    let groups: Vec<GroupSpec<'_>> = [Label::Real, Label::Fake]
        .into_iter()
        .filter(|&l| samples.iter().any(|s| s.label == l))
        .map(|l| GroupSpec::new(if l == Label::Real { "real" } else { "fake" }, move |s: &ImageSample| s.label == l))
        .collect();
    Ok(group_stats(model, samples, &groups)?.groups)
}

/// Applies a perturbation to the targeted split at each grid value and scores
/// the result. The identity grid value leaves samples untouched.
#[allow(clippy::too_many_arguments)]
pub fn robustness_sweep<T: Scalar>(
    model: &MlpParams<T>,
    model_id: &str,
    reals: &[ImageSample],
    fakes: &[ImageSample],
    perturbation: Perturbation,
    grid: &[f64],
    target: Target,
    seed: u64,
) -> Result<SweepCurve> {
    check_grid(grid)?;
    let scenario = format!("{}_sweep", perturbation.param_name());
    let mut points = Vec::with_capacity(grid.len());
    for (gi, &value) in grid.iter().enumerate() {
        let r = match target {
            Target::FakesOnly => reals.to_vec(),
            _ => perturb_all(reals, perturbation, value, derive_seed(seed, "sweep-reals"), gi)?,
        };
        let f = match target {
            Target::RealsOnly => fakes.to_vec(),
            _ => perturb_all(fakes, perturbation, value, derive_seed(seed, "sweep-fakes"), gi)?,
        };
        let res = evaluate(model, &r, &f, &scenario, model_id)?;
        let all: Vec<ImageSample> = r.into_iter().chain(f).collect();
        points.push(SweepPoint {
            param_value: value,
            ap: Some(res.ap),
            accuracy: res.accuracy_at_half,
            n_real: res.n_real,
            n_fake: res.n_fake,
            mean_real_score: res.mean_real_score,
            mean_fake_score: res.mean_fake_score,
            mean_logit: res.mean_logit,
            groups: point_groups(model, &all)?,
        });
    }
    Ok(SweepCurve {
        scenario,
        model: model_id.to_string(),
        param_name: perturbation.param_name().to_string(),
        grid: grid.to_vec(),
        points,
    })
}

/// AP of each fake family against the shared reals.
pub fn generalization_eval<T: Scalar>(
    model: &MlpParams<T>,
    model_id: &str,
    reals: &[ImageSample],
    fakes_by_family: &[(Family, &[ImageSample])],
) -> Result<Vec<EvalResult>> {
    for fam in [Family::Base, Family::Improved] {
        if !fakes_by_family.iter().any(|(f, _)| *f == fam) {
            return Err(invalid(format!("family {fam} missing from generalization eval")));
        }
    }
    fakes_by_family
        .iter()
        .map(|(fam, fakes)| evaluate(model, reals, fakes, &format!("generalization_{fam}"), model_id))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InpaintResult {
    pub rho: f64,
    pub recursion: u32,
    pub eval: EvalResult,
}

/// Partially inpainted fakes built from fresh reals, one group per
/// `(rho, recursion)` pair, each scored against `reals`.
pub fn inpainting_eval<T: Scalar>(
    model: &MlpParams<T>,
    model_id: &str,
    reals: &[ImageSample],
    rho_groups: &[f64],
    recursions: &[u32],
    spec: &DatasetSpec,
    seed: u64,
) -> Result<Vec<InpaintResult>> {
    if rho_groups.is_empty() || recursions.is_empty() {
        return Err(invalid("inpainting needs at least one group"));
    }
    let mut out = Vec::new();
    for &r in recursions {
        for &rho in rho_groups {
            // Same sources and RNG stream for every group so groups differ only in coverage.
            let mut rng = rng_from_seed(derive_seed(seed, "inpaint"));
            let fakes = (0..spec.n_fake)
                .map(|_| {
                    let src = synthgen::gen_real(spec, &mut rng);
                    synthgen::inpaint_mix(&src, rho, r, spec, &mut rng)
                })
                .collect::<Result<Vec<_>>>()?;
            let scenario = format!("inpaint_rho{rho}_r{r}");
            out.push(InpaintResult {
                rho,
                recursion: r,
                eval: evaluate(model, reals, &fakes, &scenario, model_id)?,
            });
        }
    }
    Ok(out)
}

/// Mean logit (and its decomposition) of upscaled real images per factor.
pub fn fake_spurious_probe<T: Scalar>(
    model: &MlpParams<T>,
    model_id: &str,
    reals: &[ImageSample],
    grid: &[f64],
) -> Result<SweepCurve> {
    check_grid(grid)?;
    if reals.iter().any(|s| s.label != Label::Real) {
        return Err(invalid("upscale probe takes real images only"));
    }
    let mut points = Vec::new();
    for (gi, &factor) in grid.iter().enumerate() {
        let up = perturb_all(reals, Perturbation::Upscale, factor, 0, gi)?;
        let sc = score_all(model, &up)?;
        let probs: Vec<f64> = sc.logit.iter().map(|&z| sigmoid(z)).collect();
        let labels = vec![Label::Real; up.len()];
        points.push(SweepPoint {
            param_value: factor,
            ap: None,
            accuracy: accuracy(&probs, &labels, 0.5)?,
            n_real: up.len(),
            n_fake: 0,
            mean_real_score: mean(&sc.real),
            mean_fake_score: mean(&sc.fake),
            mean_logit: mean(&sc.logit),
            groups: point_groups(model, &up)?,
        });
    }
    Ok(SweepCurve {
        scenario: "fake_spurious_probe".into(),
        model: model_id.to_string(),
        param_name: "factor".into(),
        grid: grid.to_vec(),
        points,
    })
}

/// Training and evaluation data for one benchmark instance.
#[derive(Debug, Clone)]
pub struct DataBundle {
    pub spec: DatasetSpec,
    pub train: Vec<ImageSample>,
    pub val: Vec<ImageSample>,
    pub test: TestSet,
}

impl DataBundle {
    pub fn build(spec: &DatasetSpec) -> Result<Self> {
        let (train, val) = synthgen::build_training_set(spec)?;
        Ok(Self {
            spec: spec.clone(),
            train,
            val,
            test: synthgen::build_test_set(spec)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteGrids {
    pub compression: Vec<f64>,
    pub downsize: Vec<f64>,
    pub rho: Vec<f64>,
    pub recursion: Vec<u32>,
}

impl Default for SuiteGrids {
    fn default() -> Self {
        Self {
            compression: Perturbation::Compression.default_grid(),
            downsize: Perturbation::Downsize.default_grid(),
            rho: vec![0.25, 0.5, 1.0],
            recursion: vec![1, 2],
        }
    }
}

/// Named AP cells of the scenario suite used for the ablation table.
pub fn scenario_suite<T: Scalar>(
    model: &MlpParams<T>,
    model_id: &str,
    bundle: &DataBundle,
    grids: &SuiteGrids,
    seed: u64,
) -> Result<Vec<(String, f64)>> {
    let t = &bundle.test;
    let mut cells = Vec::new();
    for (p, grid) in [
        (Perturbation::Compression, &grids.compression),
        (Perturbation::Downsize, &grids.downsize),
    ] {
        let c = robustness_sweep(model, model_id, &t.reals, &t.base_fakes, p, grid, Target::FakesOnly, seed)?;
        for (v, ap) in c.grid.iter().zip(c.ap()) {
            cells.push((format!("{}={v}", p.param_name()), ap));
        }
    }
    let fams = [
        (Family::Base, t.base_fakes.as_slice()),
        (Family::Improved, t.improved_fakes.as_slice()),
    ];
    for r in generalization_eval(model, model_id, &t.reals, &fams)? {
        cells.push((r.scenario, r.ap));
    }
    for r in inpainting_eval(model, model_id, &t.reals, &grids.rho, &grids.recursion, &bundle.spec, seed)? {
        cells.push((r.eval.scenario, r.eval.ap));
    }
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub mode: TrainMode,
    pub cells: Vec<(String, f64)>,
    pub aggregate: f64,
    pub head_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn aggregate(&self, mode: TrainMode) -> Option<f64> {
        self.rows.iter().find(|r| r.mode == mode).map(|r| r.aggregate)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["mode".to_string()];
        if let Some(first) = self.rows.first() {
            header.extend(first.cells.iter().map(|(n, _)| n.clone()));
        }
        header.push("aggregate".into());
        wtr.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.mode.name().to_string()];
            rec.extend(row.cells.iter().map(|(_, v)| v.to_string()));
            rec.push(row.aggregate.to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub dims: Vec<usize>,
    pub stage1: TrainConfig,
    pub stay_positive: TrainConfig,
    pub clamp_full: TrainConfig,
    pub grids: SuiteGrids,
    pub seed: u64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            dims: crate::nnet::default_dims(16),
            stage1: TrainConfig::stage1(),
            stay_positive: TrainConfig::stay_positive(),
            clamp_full: TrainConfig::clamp_full_retrain(),
            grids: SuiteGrids::default(),
            seed: 0,
        }
    }
}

/// The four detectors compared by the ablation.
#[derive(Debug, Clone)]
pub struct AblationModels<T> {
    pub stage1: (MlpParams<T>, TrainReport),
    pub clamp_only: MlpParams<T>,
    pub clamp_full: (MlpParams<T>, TrainReport),
    pub stay_positive: (MlpParams<T>, TrainReport),
}

impl<T: Scalar> AblationModels<T> {
    pub fn train(bundle: &DataBundle, cfg: &AblationConfig) -> Result<Self> {
        let stage1 = train_stage1(&bundle.train, &bundle.val, &cfg.dims, &cfg.stage1)?;
        let clamp_only = clamp_head(&stage1.0);
        let stay_positive = retrain_stay_positive(&stage1.0, &bundle.train, &bundle.val, &cfg.stay_positive)?;
        let clamp_full = train_full_clamped(&bundle.train, &bundle.val, &cfg.dims, &cfg.clamp_full)?;
        Ok(Self {
            stage1,
            clamp_only,
            clamp_full,
            stay_positive,
        })
    }

    pub fn by_mode(&self, mode: TrainMode) -> &MlpParams<T> {
        match mode {
            TrainMode::Stage1 => &self.stage1.0,
            TrainMode::ClampOnly => &self.clamp_only,
            TrainMode::ClampFullRetrain => &self.clamp_full.0,
            TrainMode::StayPositive => &self.stay_positive.0,
        }
    }
}

pub const ABLATION_ORDER: [TrainMode; 4] = [
    TrainMode::Stage1,
    TrainMode::ClampOnly,
    TrainMode::ClampFullRetrain,
    TrainMode::StayPositive,
];

pub fn ablation_table<T: Scalar>(
    models: &AblationModels<T>,
    bundle: &DataBundle,
    cfg: &AblationConfig,
) -> Result<AblationTable> {
    let rows = ABLATION_ORDER
        .iter()
        .map(|&mode| {
            let m = models.by_mode(mode);
            let cells = scenario_suite(m, mode.name(), bundle, &cfg.grids, cfg.seed)?;
            let aggregate = mean(&cells.iter().map(|c| c.1).collect::<Vec<_>>());
            Ok(AblationRow {
                mode,
                cells,
                aggregate,
                head_min: m.head_min().widen(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationTable { rows })
}

/// Trains all four detectors on `bundle` and tabulates their suite AP.
pub fn ablation_suite<T: Scalar>(
    bundle: &DataBundle,
    cfg: &AblationConfig,
) -> Result<(AblationTable, AblationModels<T>)> {
    let models = AblationModels::train(bundle, cfg)?;
    let table = ablation_table(&models, bundle, cfg)?;
    Ok((table, models))
}

/// Long-format CSV rows shared by sweeps and single evaluations.
pub const CSV_HEADER: [&str; 11] = [
    "scenario",
    "model",
    "param_name",
    "param_value",
    "ap",
    "accuracy",
    "n_real",
    "n_fake",
    "mean_real_score",
    "mean_fake_score",
    "mean_logit",
];

pub struct ResultsCsv<W: Write> {
    wtr: csv::Writer<W>,
}

impl<W: Write> ResultsCsv<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(CSV_HEADER)?;
        Ok(Self { wtr })
    }

    pub fn curve(&mut self, c: &SweepCurve) -> Result<()> {
        for p in &c.points {
            self.wtr.write_record([
                c.scenario.clone(),
                c.model.clone(),
                c.param_name.clone(),
                p.param_value.to_string(),
                p.ap.map_or_else(String::new, |v| v.to_string()),
                p.accuracy.to_string(),
                p.n_real.to_string(),
                p.n_fake.to_string(),
                p.mean_real_score.to_string(),
                p.mean_fake_score.to_string(),
                p.mean_logit.to_string(),
            ])?;
        }
        Ok(())
    }

    pub fn result(&mut self, r: &EvalResult, param_name: &str, param_value: &str) -> Result<()> {
        self.wtr.write_record([
            r.scenario.as_str(),
            r.model.as_str(),
            param_name,
            param_value,
            &r.ap.to_string(),
            &r.accuracy_at_half.to_string(),
            &r.n_real.to_string(),
            &r.n_fake.to_string(),
            &r.mean_real_score.to_string(),
            &r.mean_fake_score.to_string(),
            &r.mean_logit.to_string(),
        ])?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.wtr.flush()?;
        self.wtr
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::gen_real;

    #[test]
    fn grid_validation() {
        assert!(check_grid(&[]).is_err());
        assert!(check_grid(&[1.0, 1.0]).is_err());
        assert!(check_grid(&[1.0, 3.0, 2.0]).is_err());
        assert!(check_grid(&[100.0, 10.0]).is_ok());
        assert!(check_grid(&[0.0]).is_ok());
    }

    #[test]
    fn bad_grid_value_reports_index() {
        let spec = DatasetSpec::default();
        let mut rng = rng_from_seed(0);
        let reals: Vec<_> = (0..3).map(|_| gen_real(&spec, &mut rng)).collect();
        let fakes: Vec<_> = (0..3)
            .map(|_| synthgen::gen_fake(&spec, Family::Base, &mut rng))
            .collect();
        let m = MlpParams::<f64>::init(&[256, 4], 0).unwrap();
        let err = robustness_sweep(
            &m,
            "m",
            &reals,
            &fakes,
            Perturbation::Compression,
            &[100.0, 150.0],
            Target::FakesOnly,
            0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("grid point 1"), "{err}");
    }

    #[test]
    fn probe_rejects_fakes() {
        let spec = DatasetSpec::default();
        let f = vec![synthgen::gen_fake(&spec, Family::Base, &mut rng_from_seed(0))];
        let m = MlpParams::<f64>::init(&[256, 4], 0).unwrap();
        assert!(fake_spurious_probe(&m, "m", &f, &[1.0]).is_err());
    }

    #[test]
    fn generalization_requires_both_families() {
        let spec = DatasetSpec::default();
        let r = vec![gen_real(&spec, &mut rng_from_seed(0))];
        let f = vec![synthgen::gen_fake(&spec, Family::Base, &mut rng_from_seed(1))];
        let m = MlpParams::<f64>::init(&[256, 4], 0).unwrap();
        assert!(generalization_eval(&m, "m", &r, &[(Family::Base, &f)]).is_err());
    }
}
