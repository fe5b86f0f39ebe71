//! Stage-1 training, non-negative last-layer retraining and the two clamping
//! ablations, all driven by the validation-accuracy learning-rate schedule.

mod schedule;

pub use schedule::{schedule_step, LrSchedule, ScheduleDecision};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nnet::{sigmoid, ForwardTrace, Gradients, Labeled, MlpParams, Scalar};
use crate::synthgen::{derive_seed, rng_from_seed, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrainMode {
    Stage1,
    StayPositive,
    ClampOnly,
    ClampFullRetrain,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Stage1 => "STAGE1",
            TrainMode::StayPositive => "STAY_POSITIVE",
            TrainMode::ClampOnly => "CLAMP_ONLY",
            TrainMode::ClampFullRetrain => "CLAMP_FULL_RETRAIN",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "STAGE1" => Some(TrainMode::Stage1),
            "STAY_POSITIVE" => Some(TrainMode::StayPositive),
            "CLAMP_ONLY" => Some(TrainMode::ClampOnly),
            "CLAMP_FULL_RETRAIN" => Some(TrainMode::ClampFullRetrain),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub lr0: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience_epochs: usize,
    pub improvement_threshold: f64,
    pub lr_decay: f64,
    pub lr_floor: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::stage1()
    }
}

impl TrainConfig {
    pub fn stage1() -> Self {
        Self {
            mode: TrainMode::Stage1,
            lr0: 0.01,
            batch_size: 32,
            max_epochs: 200,
            patience_epochs: 10,
            improvement_threshold: 0.001,
            lr_decay: 10.0,
            lr_floor: 1e-6,
            seed: 0,
        }
    }

    /// Last-layer retraining defaults: 4x the stage-1 batch. The head starts
    /// at zero on a convex problem, so it takes a much larger step than the
    /// full network.
    pub fn stay_positive() -> Self {
        Self {
            mode: TrainMode::StayPositive,
            lr0: 1.0,
            batch_size: 128,
            ..Self::stage1()
        }
    }

    pub fn clamp_full_retrain() -> Self {
        Self {
            mode: TrainMode::ClampFullRetrain,
            ..Self::stage1()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr_floor > 0.0 && self.lr0 > self.lr_floor) {
            return Err(invalid(format!(
                "need lr0 ({}) > lr_floor ({}) > 0",
                self.lr0, self.lr_floor
            )));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be >= 1"));
        }
        if self.patience_epochs == 0 {
            return Err(invalid("patience_epochs must be >= 1"));
        }
        if !(self.lr_decay > 1.0) {
            return Err(invalid("lr_decay must be > 1"));
        }
        if !(self.improvement_threshold >= 0.0) {
            return Err(invalid("improvement_threshold must be >= 0"));
        }
        Ok(())
    }

    fn expect_mode(&self, mode: TrainMode) -> Result<()> {
        if self.mode != mode {
            return Err(invalid(format!(
                "config mode {} used for a {} run",
                self.mode.name(),
                mode.name()
            )));
        }
        self.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StopReason {
    LrFloor,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: TrainMode,
    pub seed: u64,
    pub train_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    pub lr: Vec<f64>,
    /// Zero-based epoch of the returned checkpoint; `None` if no epoch ran.
    pub best_epoch: Option<usize>,
    pub stop_reason: StopReason,
    /// Where the selected parameters were written, once they are.
    pub checkpoint: Option<String>,
}

impl TrainReport {
    pub fn empty(mode: TrainMode, seed: u64) -> Self {
        Self {
            mode,
            seed,
            train_loss: Vec::new(),
            val_accuracy: Vec::new(),
            lr: Vec::new(),
            best_epoch: None,
            stop_reason: StopReason::MaxEpochs,
            checkpoint: None,
        }
    }

    pub fn best_accuracy(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.val_accuracy[e])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Observed after every optimizer step (and its projection, if any).
#[derive(Debug)]
pub struct StepEvent<'a, T> {
    pub epoch: usize,
    pub step: usize,
    pub head_w: &'a [T],
    pub head_b: T,
}

pub type StepHook<'h, T> = &'h mut dyn FnMut(&StepEvent<'_, T>);

fn check_classes<S: Labeled>(train: &[S], val: &[S]) -> Result<()> {
    for (name, set) in [("train", train), ("val", val)] {
        let has_fake = set.iter().any(|s| s.label() == Label::Fake);
        let has_real = set.iter().any(|s| s.label() == Label::Real);
        if !(has_fake && has_real) {
            return Err(Error::SingleClass(name));
        }
    }
    Ok(())
}

/// Elementwise `w ← max(w, 0)`.
pub fn project_nonnegative<T: Scalar>(w: &mut [T]) {
    for v in w.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes negative head weights; bias and backbone are kept.
pub fn clamp_head<T: Scalar>(params: &MlpParams<T>) -> MlpParams<T> {
    let mut out = params.clone();
    project_nonnegative(&mut out.head_w);
    out
}

/// Accuracy with "fake" predicted at probability ≥ 0.5.
fn accuracy_of<T: Scalar>(logits: impl Iterator<Item = (T, Label)>) -> f64 {
    let (mut hit, mut n) = (0usize, 0usize);
    for (z, label) in logits {
        let pred = if sigmoid(z) >= T::lift(0.5) {
            Label::Fake
        } else {
            Label::Real
        };
        hit += usize::from(pred == label);
        n += 1;
    }
    hit as f64 / n as f64
}

pub fn validation_accuracy<T: Scalar, S: Labeled>(params: &MlpParams<T>, val: &[S]) -> Result<f64> {
    let logits = val
        .iter()
        .map(|s| Ok((params.logit(s.input())?, s.label())))
        .collect::<Result<Vec<_>>>()?;
    Ok(accuracy_of(logits.into_iter()))
}

struct EpochLoop<T> {
    report: TrainReport,
    schedule: LrSchedule,
    best: Option<(f64, MlpParams<T>)>,
}

impl<T: Scalar> EpochLoop<T> {
    fn new(config: &TrainConfig) -> Self {
        Self {
            report: TrainReport::empty(config.mode, config.seed),
            schedule: LrSchedule::new(config),
            best: None,
        }
    }

    /// Records an epoch; returns `false` when training should stop.
    fn finish_epoch(&mut self, loss: f64, acc: f64, params: &MlpParams<T>) -> bool {
        let epoch = self.report.val_accuracy.len();
        self.report.train_loss.push(loss);
        self.report.val_accuracy.push(acc);
        self.report.lr.push(self.schedule.lr());
        if self.best.as_ref().map_or(true, |(b, _)| acc > *b) {
            self.best = Some((acc, params.clone()));
            self.report.best_epoch = Some(epoch);
        }
        match self.schedule.observe(acc) {
            ScheduleDecision::Stop => {
                self.report.stop_reason = StopReason::LrFloor;
                false
            }
            _ => true,
        }
    }

    fn finish(self, fallback: MlpParams<T>) -> (MlpParams<T>, TrainReport) {
        let params = self.best.map_or(fallback, |(_, p)| p);
        (params, self.report)
    }
}

/// Mini-batch SGD over all parameters, optionally projecting the head after
/// every step.
fn train_all<T: Scalar, S: Labeled>(
    mut params: MlpParams<T>,
    train: &[S],
    val: &[S],
    config: &TrainConfig,
    project_head: bool,
    hook: Option<StepHook<'_, T>>,
) -> Result<(MlpParams<T>, TrainReport)> {
    let mut hook = hook;
    let mut rng = rng_from_seed(derive_seed(config.seed, "shuffle"));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grads = Gradients::zeros_like(&params);
    let mut trace = ForwardTrace {
        input: Vec::new(),
        pre: Vec::new(),
        post: Vec::new(),
        logit: T::zero(),
        probability: T::zero(),
    };
    let (mut d, mut dp) = (Vec::new(), Vec::new());
    for s in train.iter().chain(val) {
        if s.input().len() != params.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: params.input_dim(),
                got: s.input().len(),
            });
        }
    }
    if project_head {
        project_nonnegative(&mut params.head_w);
    }

    let mut state = EpochLoop::new(config);
    let mut step = 0usize;
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let lr = T::lift(state.schedule.lr());
        let mut loss_sum = 0.0;
        let mut n_batches = 0usize;
        for batch in order.chunks(config.batch_size) {
            grads.fill_zero();
            for &i in batch {
                params.forward_into(train[i].input(), &mut trace);
                params.backward_accumulate(&trace, train[i].label(), &mut grads, &mut d, &mut dp);
            }
            grads.scale(T::one() / T::lift(batch.len() as f64));
            loss_sum += grads.loss.widen();
            n_batches += 1;
            params.apply_sgd(&grads, lr, true)?;
            if project_head {
                project_nonnegative(&mut params.head_w);
            }
            if let Some(h) = hook.as_mut() {
                h(&StepEvent {
                    epoch,
                    step,
                    head_w: &params.head_w,
                    head_b: params.head_b,
                });
            }
            step += 1;
        }
        let acc = validation_accuracy(&params, val)?;
        if !state.finish_epoch(loss_sum / n_batches as f64, acc, &params) {
            break;
        }
    }
    Ok(state.finish(params))
}

pub fn train_stage1<T: Scalar, S: Labeled>(
    train: &[S],
    val: &[S],
    dims: &[usize],
    config: &TrainConfig,
) -> Result<(MlpParams<T>, TrainReport)> {
    config.expect_mode(TrainMode::Stage1)?;
    check_classes(train, val)?;
    let init = MlpParams::init(dims, derive_seed(config.seed, "init"))?;
    train_all(init, train, val, config, false, None)
}

/// Trains every layer from scratch with the head projected after every step.
pub fn train_full_clamped<T: Scalar, S: Labeled>(
    train: &[S],
    val: &[S],
    dims: &[usize],
    config: &TrainConfig,
) -> Result<(MlpParams<T>, TrainReport)> {
    train_full_clamped_with_hook(train, val, dims, config, None)
}

pub fn train_full_clamped_with_hook<T: Scalar, S: Labeled>(
    train: &[S],
    val: &[S],
    dims: &[usize],
    config: &TrainConfig,
    hook: Option<StepHook<'_, T>>,
) -> Result<(MlpParams<T>, TrainReport)> {
    config.expect_mode(TrainMode::ClampFullRetrain)?;
    check_classes(train, val)?;
    let init = MlpParams::init(dims, derive_seed(config.seed, "init"))?;
    train_all(init, train, val, config, true, hook)
}

/// Fitted linear head over fixed features.
#[derive(Debug, Clone, PartialEq)]
pub struct Head<T> {
    pub w: Vec<T>,
    pub b: T,
}

impl<T: Scalar> Head<T> {
    fn logit(&self, h: &[T]) -> T {
        crate::nnet::head_dot(&self.w, h) + self.b
    }
}

/// Logistic regression on fixed non-negative features, starting from
/// `w = 0, b = 0`; with `nonnegative`, every step is followed by `w ← max(w, 0)`.
pub fn fit_head<T: Scalar>(
    train: &[(Vec<T>, Label)],
    val: &[(Vec<T>, Label)],
    config: &TrainConfig,
    nonnegative: bool,
    hook: Option<StepHook<'_, T>>,
) -> Result<(Head<T>, TrainReport)> {
    config.validate()?;
    let d = train
        .first()
        .map(|(h, _)| h.len())
        .ok_or(Error::SingleClass("train"))?;
    if train.iter().chain(val).any(|(h, _)| h.len() != d) {
        return Err(invalid("feature vectors differ in length"));
    }
    for (name, set) in [("train", train), ("val", val)] {
        let fakes = set.iter().filter(|(_, l)| *l == Label::Fake).count();
        if fakes == 0 || fakes == set.len() {
            return Err(Error::SingleClass(name));
        }
    }
    let mut hook = hook;
    let mut head = Head {
        w: vec![T::zero(); d],
        b: T::zero(),
    };
    let mut rng = rng_from_seed(derive_seed(config.seed, "head-shuffle"));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut gw = vec![T::zero(); d];
    let mut best: Option<(f64, Head<T>)> = None;
    let mut report = TrainReport::empty(config.mode, config.seed);
    let mut schedule = LrSchedule::new(config);
    let mut step = 0usize;

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let lr = T::lift(schedule.lr());
        let mut loss_sum = 0.0;
        let mut n_batches = 0usize;
        for batch in order.chunks(config.batch_size) {
            gw.iter_mut().for_each(|g| *g = T::zero());
            let mut gb = T::zero();
            let mut loss = T::zero();
            for &i in batch {
                let (h, label) = &train[i];
                let z = head.logit(h);
                let dz = sigmoid(z) - T::lift(label.as_f64());
                loss = loss + crate::nnet::bce_loss(z, *label);
                for (g, &hv) in gw.iter_mut().zip(h) {
                    *g = *g + dz * hv;
                }
                gb = gb + dz;
            }
            let inv = T::one() / T::lift(batch.len() as f64);
            if let Some(i) = gw.iter().position(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    tensor: "head.weight".into(),
                    index: i,
                });
            }
            if !gb.is_finite() {
                return Err(Error::NonFinite {
                    tensor: "head.bias".into(),
                    index: 0,
                });
            }
            for (w, &g) in head.w.iter_mut().zip(&gw) {
                *w = *w - lr * g * inv;
            }
            head.b = head.b - lr * gb * inv;
            if nonnegative {
                project_nonnegative(&mut head.w);
            }
            if let Some(h) = hook.as_mut() {
                h(&StepEvent {
                    epoch,
                    step,
                    head_w: &head.w,
                    head_b: head.b,
                });
            }
            step += 1;
            loss_sum += (loss * inv).widen();
            n_batches += 1;
        }
        let acc = accuracy_of(val.iter().map(|(h, l)| (head.logit(h), *l)));
        report.train_loss.push(loss_sum / n_batches as f64);
        report.val_accuracy.push(acc);
        report.lr.push(schedule.lr());
        if best.as_ref().map_or(true, |(b, _)| acc > *b) {
            best = Some((acc, head.clone()));
            report.best_epoch = Some(epoch);
        }
        if schedule.observe(acc) == ScheduleDecision::Stop {
            report.stop_reason = StopReason::LrFloor;
            break;
        }
    }
    Ok((best.map_or(head, |(_, h)| h), report))
}

fn extract_features<T: Scalar, S: Labeled>(
    params: &MlpParams<T>,
    set: &[S],
) -> Result<Vec<(Vec<T>, Label)>> {
    set.iter()
        .map(|s| Ok((params.features(s.input())?, s.label())))
        .collect()
}

/// Re-fits the head from zero with `w ≥ 0` enforced after every step; the
/// backbone is left untouched.
pub fn retrain_stay_positive<T: Scalar, S: Labeled>(
    params: &MlpParams<T>,
    train: &[S],
    val: &[S],
    config: &TrainConfig,
) -> Result<(MlpParams<T>, TrainReport)> {
    retrain_stay_positive_with_hook(params, train, val, config, None)
}

pub fn retrain_stay_positive_with_hook<T: Scalar, S: Labeled>(
    params: &MlpParams<T>,
    train: &[S],
    val: &[S],
    config: &TrainConfig,
    hook: Option<StepHook<'_, T>>,
) -> Result<(MlpParams<T>, TrainReport)> {
    config.expect_mode(TrainMode::StayPositive)?;
    check_classes(train, val)?;
    params.check()?;
    // The backbone is frozen, so features are computed once.
    let train_h = extract_features(params, train)?;
    let val_h = extract_features(params, val)?;
    let (head, report) = fit_head(&train_h, &val_h, config, true, hook)?;
    let mut out = params.clone();
    out.head_w = head.w;
    out.head_b = head.b;
    Ok((out, report))
}

/// Unconstrained counterpart of [`retrain_stay_positive`]: same schedule and
/// initialisation, no projection.
pub fn retrain_head_unconstrained<T: Scalar, S: Labeled>(
    params: &MlpParams<T>,
    train: &[S],
    val: &[S],
    config: &TrainConfig,
) -> Result<(MlpParams<T>, TrainReport)> {
    config.validate()?;
    check_classes(train, val)?;
    let train_h = extract_features(params, train)?;
    let val_h = extract_features(params, val)?;
    let (head, report) = fit_head(&train_h, &val_h, config, false, None)?;
    let mut out = params.clone();
    out.head_w = head.w;
    out.head_b = head.b;
    Ok((out, report))
}
