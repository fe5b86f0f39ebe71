//! End-to-end runs: one config document in, a checksummed artifact tree out.
//!
//! ```text
//! <out>/data/{train,val,test}.splb (+ .json manifests)
//! <out>/checkpoints/<model>.spnn, <model>.report.json
//! <out>/results/<scenario>.csv
//! <out>/summary.json
//! ```
//!
//! Every file is written to a temporary name and renamed into place, so a
//! failing scenario never leaves a truncated result behind.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::evalkit::{
    self, AblationConfig, AblationModels, DataBundle, Perturbation, ResultsCsv, SuiteGrids,
    SweepCurve, Target,
};
use crate::nnet::{checkpoint, default_dims, MlpParams};
use crate::synthgen::io::{read_dataset, write_atomic, write_dataset, Manifest, Segment};
use crate::synthgen::{derive_seed, stream_hash, DatasetSpec, Family, ImageSample, TestSet};
use crate::trainer::{self, TrainConfig, TrainMode, TrainReport};

pub const CONFIG_VERSION: u32 = 1;

/// Environment variable naming the root for relative output directories.
pub const OUT_ROOT_ENV: &str = "STAYPOS_OUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    CompressionSweep,
    DownsizeSweep,
    NoiseSweep,
    LowpassSweep,
    Generalization,
    Inpainting,
    Ablation,
    FakeSpuriousProbe,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::CompressionSweep,
        Scenario::DownsizeSweep,
        Scenario::NoiseSweep,
        Scenario::LowpassSweep,
        Scenario::Generalization,
        Scenario::Inpainting,
        Scenario::Ablation,
        Scenario::FakeSpuriousProbe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::CompressionSweep => "compression_sweep",
            Scenario::DownsizeSweep => "downsize_sweep",
            Scenario::NoiseSweep => "noise_sweep",
            Scenario::LowpassSweep => "lowpass_sweep",
            Scenario::Generalization => "generalization",
            Scenario::Inpainting => "inpainting",
            Scenario::Ablation => "ablation",
            Scenario::FakeSpuriousProbe => "fake_spurious_probe",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|sc| sc.name() == s)
    }

    /// `global XOR hash(name)`.
    pub fn seed(self, global: u64) -> u64 {
        global ^ stream_hash(self.name())
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grids {
    pub compression: Vec<f64>,
    pub downsize: Vec<f64>,
    pub noise: Vec<f64>,
    pub lowpass: Vec<f64>,
    pub upscale: Vec<f64>,
    pub rho: Vec<f64>,
    pub recursion: Vec<u32>,
}

impl Default for Grids {
    fn default() -> Self {
        let suite = SuiteGrids::default();
        Self {
            compression: suite.compression,
            downsize: suite.downsize,
            noise: Perturbation::Noise.default_grid(),
            lowpass: Perturbation::Lowpass.default_grid(),
            upscale: Perturbation::Upscale.default_grid(),
            rho: suite.rho,
            recursion: suite.recursion,
        }
    }
}

impl Grids {
    pub fn suite(&self) -> SuiteGrids {
        SuiteGrids {
            compression: self.compression.clone(),
            downsize: self.downsize.clone(),
            rho: self.rho.clone(),
            recursion: self.recursion.clone(),
        }
    }
}

/// One experiment. Component seeds (dataset, each training run, each
/// scenario) are all derived from `seed`; seeds stored in the nested
/// sections are overwritten.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub dataset: DatasetSpec,
    pub dims: Vec<usize>,
    pub stage1: TrainConfig,
    pub stay_positive: TrainConfig,
    pub clamp_full: TrainConfig,
    pub scenarios: Vec<Scenario>,
    pub grids: Grids,
    /// Fraction of training reals downsized for the upscale-probe models,
    /// which are trained on their own copy of the dataset.
    pub limitation_downsize_fraction: f64,
    /// Relative paths resolve against `$STAYPOS_OUT_ROOT` when it is set.
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let dataset = DatasetSpec::default();
        Self {
            version: CONFIG_VERSION,
            dims: default_dims(dataset.side),
            dataset,
            stage1: TrainConfig::stage1(),
            stay_positive: TrainConfig::stay_positive(),
            clamp_full: TrainConfig::clamp_full_retrain(),
            scenarios: Scenario::ALL.to_vec(),
            grids: Grids::default(),
            limitation_downsize_fraction: 0.5,
            out_dir: PathBuf::from("staypos-run"),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(invalid(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.scenarios.is_empty() {
            return Err(invalid("scenario list is empty"));
        }
        self.dataset.validate()?;
        let input = self.dataset.side * self.dataset.side;
        if self.dims.len() < 2 || self.dims[0] != input {
            return Err(invalid(format!(
                "dims {:?} must start with the input size {input} and have a feature layer",
                self.dims
            )));
        }
        for (name, cfg, mode) in [
            ("stage1", &self.stage1, TrainMode::Stage1),
            ("stay_positive", &self.stay_positive, TrainMode::StayPositive),
            ("clamp_full", &self.clamp_full, TrainMode::ClampFullRetrain),
        ] {
            cfg.validate()?;
            if cfg.mode != mode {
                return Err(invalid(format!("{name} config has mode {}", cfg.mode.name())));
            }
        }
        if !(0.0..=1.0).contains(&self.limitation_downsize_fraction) {
            return Err(invalid("limitation_downsize_fraction outside [0,1]"));
        }
        Ok(())
    }

    pub fn has(&self, s: Scenario) -> bool {
        self.scenarios.contains(&s)
    }

    /// Output directory after applying the environment root.
    pub fn resolved_out_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_ROOT_ENV) {
            Some(root) if self.out_dir.is_relative() => PathBuf::from(root).join(&self.out_dir),
            _ => self.out_dir.clone(),
        }
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            seed: derive_seed(self.seed, "dataset"),
            ..self.dataset.clone()
        }
    }

    fn train_config(&self, base: &TrainConfig, name: &str) -> TrainConfig {
        base.clone().with_seed(derive_seed(self.seed, name))
    }

    pub fn ablation_config(&self) -> AblationConfig {
        AblationConfig {
            dims: self.dims.clone(),
            stage1: self.train_config(&self.stage1, "stage1"),
            stay_positive: self.train_config(&self.stay_positive, "stay_positive"),
            clamp_full: self.train_config(&self.clamp_full, "clamp_full"),
            grids: self.grids.suite(),
            seed: Scenario::Ablation.seed(self.seed),
        }
    }
}

/// Which part of a run failed; fixes the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Data,
    Training,
    Eval,
}

#[derive(Debug)]
pub struct RunError {
    pub stage: Stage,
    pub source: Error,
}

impl RunError {
    fn at(stage: Stage) -> impl FnOnce(Error) -> RunError {
        move |source| RunError { stage, source }
    }

    /// 2 config, 3 data, 4 training divergence, 5 evaluation.
    pub fn exit_code(&self) -> i32 {
        match (self.stage, &self.source) {
            (Stage::Config, _) => 2,
            (Stage::Data, _) | (Stage::Training, Error::SingleClass(_)) => 3,
            (Stage::Training, _) => 4,
            (Stage::Eval, _) => 5,
        }
    }

    pub fn record(&self) -> ErrorRecord {
        ErrorRecord {
            stage: self.stage,
            exit_code: self.exit_code(),
            message: self.source.to_string(),
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} stage failed: {}", self.stage, self.source)
    }
}

impl std::error::Error for RunError {}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub stage: Stage,
    pub exit_code: i32,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            pass,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub stage1_val_accuracy: Option<f64>,
    pub stay_positive_val_accuracy: Option<f64>,
    pub stay_positive_head_min: f64,
    pub checks: Vec<Check>,
    /// SHA-256 of every results file, keyed by path relative to the run root.
    pub checksums: BTreeMap<String, String>,
}

impl RunSummary {
    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Exclusive ownership of an output directory for the lifetime of the value.
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(".lock");
        fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| invalid(format!("cannot lock {}: {e}", path.display())))?;
        Ok(Self { path })
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub const TEST_SEGMENTS: [&str; 3] = ["reals", "base_fakes", "improved_fakes"];

/// Writes train, val and test files (the test file in three named segments).
pub fn write_bundle(dir: &Path, bundle: &DataBundle) -> Result<()> {
    fs::create_dir_all(dir)?;
    let spec = &bundle.spec;
    let single = |samples: &[ImageSample]| Manifest {
        version: 1,
        count: samples.len(),
        spec: spec.clone(),
        segments: Vec::new(),
    };
    write_dataset(&dir.join("train.splb"), &bundle.train, &single(&bundle.train))?;
    write_dataset(&dir.join("val.splb"), &bundle.val, &single(&bundle.val))?;
    let t = &bundle.test;
    let parts = [&t.reals, &t.base_fakes, &t.improved_fakes];
    let mut segments = Vec::new();
    let mut all = Vec::new();
    for (name, part) in TEST_SEGMENTS.iter().zip(parts) {
        segments.push(Segment {
            name: (*name).into(),
            start: all.len(),
            len: part.len(),
        });
        all.extend(part.iter().cloned());
    }
    let manifest = Manifest {
        version: 1,
        count: all.len(),
        spec: spec.clone(),
        segments,
    };
    write_dataset(&dir.join("test.splb"), &all, &manifest)
}

pub fn read_bundle(dir: &Path) -> Result<DataBundle> {
    let (m, train) = read_dataset(&dir.join("train.splb"))?;
    let (_, val) = read_dataset(&dir.join("val.splb"))?;
    let (tm, all) = read_dataset(&dir.join("test.splb"))?;
    let seg = |name: &str| {
        tm.segment(&all, name)
            .map(<[ImageSample]>::to_vec)
            .ok_or_else(|| Error::Format(format!("test set has no segment {name}")))
    };
    Ok(DataBundle {
        spec: m.spec,
        train,
        val,
        test: TestSet {
            reals: seg("reals")?,
            base_fakes: seg("base_fakes")?,
            improved_fakes: seg("improved_fakes")?,
        },
    })
}

fn save_model(dir: &Path, name: &str, params: &MlpParams<f64>, report: Option<&mut TrainReport>) -> Result<()> {
    let path = dir.join(format!("{name}.spnn"));
    write_atomic(&path, &checkpoint::encode(params))?;
    if let Some(r) = report {
        r.checkpoint = Some(format!("checkpoints/{name}.spnn"));
        write_atomic(&dir.join(format!("{name}.report.json")), r.to_json()?.as_bytes())?;
    }
    Ok(())
}

struct Writer {
    root: PathBuf,
    checksums: BTreeMap<String, String>,
}

impl Writer {
    fn result(&mut self, name: &str, bytes: Vec<u8>) -> Result<()> {
        let rel = format!("results/{name}.csv");
        write_atomic(&self.root.join(&rel), &bytes)?;
        self.checksums.insert(rel, sha256_hex(&bytes));
        Ok(())
    }
}

fn curves_csv(curves: &[SweepCurve]) -> Result<Vec<u8>> {
    let mut csv = ResultsCsv::new(Vec::new())?;
    for c in curves {
        csv.curve(c)?;
    }
    csv.finish()
}

fn drop_of(c: &SweepCurve) -> f64 {
    let ap = c.ap();
    ap[0] - ap[ap.len() - 1]
}

fn monotone_up(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] >= w[0])
}

fn strictly_up(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

struct Models {
    stage1: MlpParams<f64>,
    stay_positive: MlpParams<f64>,
}

impl Models {
    fn pair(&self) -> [(&'static str, &MlpParams<f64>); 2] {
        [("stage1", &self.stage1), ("stay_positive", &self.stay_positive)]
    }
}

/// Runs every configured scenario and writes the artifact tree. On failure an
/// `error.json` record is left in the output directory when it exists.
pub fn run_full_experiment(config: &ExperimentConfig) -> std::result::Result<RunSummary, RunError> {
    config.validate().map_err(RunError::at(Stage::Config))?;
    let root = config.resolved_out_dir();
    fs::create_dir_all(&root).map_err(|e| RunError::at(Stage::Config)(e.into()))?;
    let _lock = RunLock::acquire(&root).map_err(RunError::at(Stage::Config))?;
    let out = run_locked(config, &root);
    match &out {
        Ok(summary) => {
            let text = serde_json::to_string_pretty(summary).map_err(|e| RunError::at(Stage::Eval)(e.into()))?;
            write_atomic(&root.join("summary.json"), text.as_bytes()).map_err(RunError::at(Stage::Eval))?;
            let _ = fs::remove_file(root.join("error.json"));
        }
        Err(e) => {
            if let Ok(text) = serde_json::to_string_pretty(&e.record()) {
                let _ = write_atomic(&root.join("error.json"), text.as_bytes());
            }
        }
    }
    out
}

fn run_locked(config: &ExperimentConfig, root: &Path) -> std::result::Result<RunSummary, RunError> {
    let data_err = RunError::at(Stage::Data);
    let spec = config.dataset_spec();
    let bundle = DataBundle::build(&spec).map_err(data_err)?;
    write_bundle(&root.join("data"), &bundle).map_err(RunError::at(Stage::Data))?;

    let ckpt = root.join("checkpoints");
    fs::create_dir_all(&ckpt).map_err(|e| RunError::at(Stage::Training)(e.into()))?;
    fs::create_dir_all(root.join("results")).map_err(|e| RunError::at(Stage::Eval)(e.into()))?;

    let train_err = || RunError::at(Stage::Training);
    let abl = config.ablation_config();
    let (stage1, mut r1) =
        trainer::train_stage1(&bundle.train, &bundle.val, &abl.dims, &abl.stage1).map_err(train_err())?;
    let (stay_positive, mut r2) =
        trainer::retrain_stay_positive(&stage1, &bundle.train, &bundle.val, &abl.stay_positive)
            .map_err(train_err())?;
    save_model(&ckpt, "stage1", &stage1, Some(&mut r1)).map_err(train_err())?;
    save_model(&ckpt, "stay_positive", &stay_positive, Some(&mut r2)).map_err(train_err())?;
    let models = Models {
        stage1,
        stay_positive,
    };

    let mut w = Writer {
        root: root.to_path_buf(),
        checksums: BTreeMap::new(),
    };
    let mut checks = vec![Check::new(
        "stay_positive_head_nonnegative",
        models.stay_positive.head_min() >= 0.0,
        format!("min(w) = {}", models.stay_positive.head_min()),
    )];
    let mut scenarios = config.scenarios.clone();
    scenarios.sort();
    scenarios.dedup();
    for sc in scenarios {
        log::info!("scenario {sc}");
        run_scenario(config, sc, &bundle, &models, (r1.clone(), r2.clone()), &mut w, &mut checks)?;
    }
    Ok(RunSummary {
        config: config.clone(),
        stage1_val_accuracy: r1.best_accuracy(),
        stay_positive_val_accuracy: r2.best_accuracy(),
        stay_positive_head_min: models.stay_positive.head_min(),
        checks,
        checksums: w.checksums,
    })
}

fn run_scenario(
    config: &ExperimentConfig,
    sc: Scenario,
    bundle: &DataBundle,
    models: &Models,
    reports: (TrainReport, TrainReport),
    w: &mut Writer,
    checks: &mut Vec<Check>,
) -> std::result::Result<(), RunError> {
    let eval_err = || RunError::at(Stage::Eval);
    let seed = sc.seed(config.seed);
    let t = &bundle.test;
    let g = &config.grids;
    let sweep = |p: Perturbation, grid: &[f64], target: Target| -> Result<Vec<SweepCurve>> {
        models
            .pair()
            .into_iter()
            .map(|(id, m)| evalkit::robustness_sweep(m, id, &t.reals, &t.base_fakes, p, grid, target, seed))
            .collect()
    };
    match sc {
        Scenario::CompressionSweep => {
            let curves = sweep(Perturbation::Compression, &g.compression, Target::FakesOnly).map_err(eval_err())?;
            let (d1, d2) = (drop_of(&curves[0]), drop_of(&curves[1]));
            checks.push(Check::new(
                "compression_drop_smaller",
                d2 < d1,
                format!("AP drop stage1 {d1:.4}, stay_positive {d2:.4}"),
            ));
            w.result(sc.name(), curves_csv(&curves).map_err(eval_err())?).map_err(eval_err())?;
        }
        Scenario::DownsizeSweep => {
            let curves = sweep(Perturbation::Downsize, &g.downsize, Target::FakesOnly).map_err(eval_err())?;
            w.result(sc.name(), curves_csv(&curves).map_err(eval_err())?).map_err(eval_err())?;
        }
        Scenario::NoiseSweep => {
            let curves = sweep(Perturbation::Noise, &g.noise, Target::Both).map_err(eval_err())?;
            w.result(sc.name(), curves_csv(&curves).map_err(eval_err())?).map_err(eval_err())?;
        }
        Scenario::LowpassSweep => {
            let curves = sweep(Perturbation::Lowpass, &g.lowpass, Target::Both).map_err(eval_err())?;
            w.result(sc.name(), curves_csv(&curves).map_err(eval_err())?).map_err(eval_err())?;
        }
        Scenario::Generalization => {
            let fams = [
                (Family::Base, t.base_fakes.as_slice()),
                (Family::Improved, t.improved_fakes.as_slice()),
            ];
            let mut csv = ResultsCsv::new(Vec::new()).map_err(eval_err())?;
            let mut ap = Vec::new();
            for (id, m) in models.pair() {
                let res = evalkit::generalization_eval(m, id, &t.reals, &fams).map_err(eval_err())?;
                for (r, (fam, _)) in res.iter().zip(&fams) {
                    csv.result(r, "family", &fam.to_string()).map_err(eval_err())?;
                }
                ap.push((res[0].ap, res[1].ap));
            }
            let ((b1, i1), (b2, i2)) = (ap[0], ap[1]);
            checks.push(Check::new(
                "improved_family_gain",
                i2 >= i1 + 0.05,
                format!("IMPROVED AP stage1 {i1:.4}, stay_positive {i2:.4}"),
            ));
            checks.push(Check::new(
                "base_family_no_regression",
                b2 >= b1 - 0.01,
                format!("BASE AP stage1 {b1:.4}, stay_positive {b2:.4}"),
            ));
            w.result(sc.name(), csv.finish().map_err(eval_err())?).map_err(eval_err())?;
        }
        Scenario::Inpainting => {
            let mut csv = ResultsCsv::new(Vec::new()).map_err(eval_err())?;
            let mut per_model = Vec::new();
            for (id, m) in models.pair() {
                let res = evalkit::inpainting_eval(m, id, &t.reals, &g.rho, &g.recursion, &bundle.spec, seed)
                    .map_err(eval_err())?;
                for r in &res {
                    csv.result(&r.eval, "rho", &format!("{}@r{}", r.rho, r.recursion))
                        .map_err(eval_err())?;
                }
                per_model.push(res);
            }
            // Checks use recursion depth 1, sorted by rho.
            let at_r1 = |res: &[evalkit::InpaintResult]| {
                let mut v: Vec<(f64, f64)> =
                    res.iter().filter(|r| r.recursion == 1).map(|r| (r.rho, r.eval.ap)).collect();
                v.sort_by(|a, b| a.0.total_cmp(&b.0));
                v
            };
            let (s1, sp) = (at_r1(&per_model[0]), at_r1(&per_model[1]));
            if let (Some(a), Some(b)) = (s1.first(), sp.first()) {
                checks.push(Check::new(
                    "inpaint_smallest_rho_gain",
                    b.1 > a.1,
                    format!("AP at rho {}: stage1 {:.4}, stay_positive {:.4}", a.0, a.1, b.1),
                ));
            }
            let aps = |v: &[(f64, f64)]| v.iter().map(|x| x.1).collect::<Vec<_>>();
            checks.push(Check::new(
                "inpaint_ap_nondecreasing_in_rho",
                monotone_up(&aps(&s1)) && monotone_up(&aps(&sp)),
                format!("stage1 {}, stay_positive {}", fmt_vec(&aps(&s1)), fmt_vec(&aps(&sp))),
            ));
            w.result(sc.name(), csv.finish().map_err(eval_err())?).map_err(eval_err())?;
        }
        Scenario::Ablation => {
            let abl = config.ablation_config();
            let (clamp_full, mut rc) =
                trainer::train_full_clamped(&bundle.train, &bundle.val, &abl.dims, &abl.clamp_full)
                    .map_err(RunError::at(Stage::Training))?;
            let ckpt = w.root.join("checkpoints");
            save_model(&ckpt, "clamp_full_retrain", &clamp_full, Some(&mut rc)).map_err(RunError::at(Stage::Training))?;
            let clamp_only = trainer::clamp_head(&models.stage1);
            save_model(&ckpt, "clamp_only", &clamp_only, None).map_err(RunError::at(Stage::Training))?;
            let abl_models = AblationModels {
                stage1: (models.stage1.clone(), reports.0),
                clamp_only,
                clamp_full: (clamp_full, rc),
                stay_positive: (models.stay_positive.clone(), reports.1),
            };
            let table = evalkit::ablation_table(&abl_models, bundle, &abl).map_err(eval_err())?;
            let agg = |m| table.aggregate(m).unwrap_or(f64::NAN);
            let (s1, co, cf, sp) = (
                agg(TrainMode::Stage1),
                agg(TrainMode::ClampOnly),
                agg(TrainMode::ClampFullRetrain),
                agg(TrainMode::StayPositive),
            );
            let mid = s1.max(cf);
            checks.push(Check::new(
                "ablation_ordering",
                co <= mid && mid <= sp,
                format!("clamp_only {co:.4} <= max(stage1 {s1:.4}, clamp_full {cf:.4}) <= stay_positive {sp:.4}"),
            ));
            checks.push(Check::new(
                "ablation_clamp_only_below_stay_positive",
                co <= sp,
                format!("clamp_only {co:.4}, stay_positive {sp:.4}"),
            ));
            let mut buf = Vec::new();
            table.write_csv(&mut buf).map_err(eval_err())?;
            w.result(sc.name(), buf).map_err(eval_err())?;
        }
        Scenario::FakeSpuriousProbe => {
            let lim = limitation_models(config).map_err(RunError::at(Stage::Training))?;
            let ckpt = w.root.join("checkpoints");
            save_model(&ckpt, "limitation_stage1", &lim.stage1, None).map_err(RunError::at(Stage::Training))?;
            save_model(&ckpt, "limitation_stay_positive", &lim.stay_positive, None)
                .map_err(RunError::at(Stage::Training))?;
            let curves = lim
                .pair()
                .into_iter()
                .map(|(id, m)| evalkit::fake_spurious_probe(m, id, &t.reals, &g.upscale))
                .collect::<Result<Vec<_>>>()
                .map_err(eval_err())?;
            let (l1, l2) = (curves[0].mean_logits(), curves[1].mean_logits());
            checks.push(Check::new(
                "upscale_probe_logit_rising",
                strictly_up(&l1) && strictly_up(&l2),
                format!("mean logit stage1 {}, stay_positive {}", fmt_vec(&l1), fmt_vec(&l2)),
            ));
            w.result(sc.name(), curves_csv(&curves).map_err(eval_err())?).map_err(eval_err())?;
        }
    }
    Ok(())
}

/// Stage-1 and stay-positive models trained on a downsize-biased copy of the
/// configured dataset.
fn limitation_models(config: &ExperimentConfig) -> Result<Models> {
    let spec = DatasetSpec {
        downsize_fraction: config.limitation_downsize_fraction,
        seed: derive_seed(config.seed, "limitation-dataset"),
        ..config.dataset.clone()
    };
    let (train, val) = crate::synthgen::build_training_set(&spec)?;
    let abl = config.ablation_config();
    let (stage1, _) = trainer::train_stage1(&train, &val, &abl.dims, &abl.stage1)?;
    let (stay_positive, _) = trainer::retrain_stay_positive(&stage1, &train, &val, &abl.stay_positive)?;
    Ok(Models {
        stage1,
        stay_positive,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub summary: Option<serde_json::Value>,
    /// Rows of every results CSV, keyed by scenario file stem.
    pub results: BTreeMap<String, Vec<BTreeMap<String, String>>>,
}

/// Aggregates a completed run directory into one document.
pub fn build_report(run_dir: &Path) -> Result<Report> {
    let results_dir = run_dir.join("results");
    let mut results = BTreeMap::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(&results_dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    for path in entries {
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let mut rdr = csv::Reader::from_path(&path)?;
        let headers = rdr.headers()?.clone();
        let rows = rdr
            .records()
            .map(|r| r.map(|r| headers.iter().zip(r.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect()))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        results.insert(stem, rows);
    }
    let summary = match fs::read(run_dir.join("summary.json")) {
        Ok(bytes) => Some(serde_json::from_slice(&bytes)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(e.into()),
    };
    Ok(Report { summary, results })
}
