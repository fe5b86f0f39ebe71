//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails. Every tolerance is a constant below.

mod common;

use std::fs;
use std::time::{Duration, Instant};

use rand::Rng;
use staypos::evalkit::{self, AblationModels, DataBundle, Perturbation, SweepCurve, Target};
use staypos::experiment::{run_full_experiment, sha256_hex, ExperimentConfig, Scenario};
use staypos::nnet::MlpParams;
use staypos::scores::{decompose, decompose_input};
use staypos::synthgen::{self, derive_seed, rng_from_seed, DatasetSpec, Family, Label};
use staypos::trainer::{self, StepEvent, TrainMode};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

const FD_EPS: f64 = 1e-6;
const FD_MAX_REL: f64 = 1e-5;
const FD_CASES: u64 = 60;
const FD_BUDGET: Duration = Duration::from_secs(10);

const DECOMP_TOL: f64 = 1e-9;
const DECOMP_CASES: usize = 10_000;

const AP_INSTANCES: u64 = 200;
const AP_HAND: f64 = 0.8333333333;
const AP_HAND_TOL: f64 = 1e-9;

const BIASED_MIN_DROP: f64 = 0.15;
const UNBIASED_MAX_DROP: f64 = 0.05;
const COMPRESSION_BUDGET: Duration = Duration::from_secs(120);

const IMPROVED_MARGIN: f64 = 0.05;
const BASE_SLACK: f64 = 0.01;
const SMALL_RHO: f64 = 0.25;

const PIPELINE_BUDGET: Duration = Duration::from_secs(300);

struct Line {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn line(name: &'static str, pass: bool, detail: String) -> Line {
    Line { name, pass, detail }
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(" "))
}

fn drop_q100_q10(c: &SweepCurve) -> f64 {
    c.ap_at(100.0).unwrap() - c.ap_at(10.0).unwrap()
}

/// Everything measured on one seed.
struct SeedResult {
    seed: u64,
    compression_time: Duration,
    drop_biased: f64,
    drop_unbiased: f64,
    drop_stay_positive: f64,
    projection_min: f64,
    projection_steps: usize,
    backbone_frozen: bool,
    real_score_max_abs: f64,
    base: (f64, f64),
    improved: (f64, f64),
    inpaint_stage1: Vec<f64>,
    inpaint_stay_positive: Vec<f64>,
    aggregates: [f64; 4],
    probe_stage1: Vec<f64>,
    probe_stay_positive: Vec<f64>,
}

fn bits(p: &MlpParams) -> Vec<u64> {
    p.weights.iter().chain(&p.biases).flatten().map(|v| v.to_bits()).collect()
}

fn run_seed(seed: u64) -> SeedResult {
    let cfg = ExperimentConfig {
        seed,
        ..ExperimentConfig::default()
    };
    let abl = cfg.ablation_config();
    let bundle = DataBundle::build(&cfg.dataset_spec()).unwrap();
    let t = &bundle.test;
    let grid = &cfg.grids.compression;
    let cseed = Scenario::CompressionSweep.seed(seed);
    let sweep = |m: &MlpParams| {
        evalkit::robustness_sweep(m, "m", &t.reals, &t.base_fakes, Perturbation::Compression, grid, Target::FakesOnly, cseed)
            .unwrap()
    };

    let clock = Instant::now();
    let stage1 = trainer::train_stage1(&bundle.train, &bundle.val, &abl.dims, &abl.stage1).unwrap();
    let unbiased_spec = DatasetSpec {
        spurious_fraction: 0.0,
        ..bundle.spec.clone()
    };
    let (train0, val0) = synthgen::build_training_set(&unbiased_spec).unwrap();
    let (unbiased, _) = trainer::train_stage1::<f64, _>(&train0, &val0, &abl.dims, &abl.stage1).unwrap();
    let drop_biased = drop_q100_q10(&sweep(&stage1.0));
    let drop_unbiased = drop_q100_q10(&sweep(&unbiased));
    let compression_time = clock.elapsed();

    let mut projection_min = f64::INFINITY;
    let mut projection_steps = 0usize;
    let mut hook = |e: &StepEvent<'_, f64>| {
        projection_steps += 1;
        projection_min = e.head_w.iter().copied().fold(projection_min, f64::min);
    };
    let stay_positive =
        trainer::retrain_stay_positive_with_hook(&stage1.0, &bundle.train, &bundle.val, &abl.stay_positive, Some(&mut hook))
            .unwrap();
    let clamp_full =
        trainer::train_full_clamped_with_hook(&bundle.train, &bundle.val, &abl.dims, &abl.clamp_full, Some(&mut hook))
            .unwrap();
    projection_min = projection_min.min(stay_positive.0.head_min()).min(clamp_full.0.head_min());
    let backbone_frozen = bits(&stay_positive.0) == bits(&stage1.0);
    let drop_stay_positive = drop_q100_q10(&sweep(&stay_positive.0));

    let mut real_score_max_abs = 0.0f64;
    for s in t.reals.iter().chain(&t.base_fakes).chain(&t.improved_fakes) {
        let d = decompose_input(&stay_positive.0, &s.pixels).unwrap();
        real_score_max_abs = real_score_max_abs.max(d.real_score.abs());
    }

    let fams = [
        (Family::Base, t.base_fakes.as_slice()),
        (Family::Improved, t.improved_fakes.as_slice()),
    ];
    let gen = |m: &MlpParams| {
        let r = evalkit::generalization_eval(m, "m", &t.reals, &fams).unwrap();
        (r[0].ap, r[1].ap)
    };
    let (g1, g2) = (gen(&stage1.0), gen(&stay_positive.0));

    let rho = &cfg.grids.rho;
    let iseed = Scenario::Inpainting.seed(seed);
    let inpaint = |m: &MlpParams| -> Vec<f64> {
        evalkit::inpainting_eval(m, "m", &t.reals, rho, &[1], &bundle.spec, iseed)
            .unwrap()
            .into_iter()
            .map(|r| r.eval.ap)
            .collect()
    };
    let (inpaint_stage1, inpaint_stay_positive) = (inpaint(&stage1.0), inpaint(&stay_positive.0));

    let models = AblationModels {
        clamp_only: trainer::clamp_head(&stage1.0),
        stage1,
        clamp_full,
        stay_positive,
    };
    let table = evalkit::ablation_table(&models, &bundle, &abl).unwrap();
    let aggregates = [
        TrainMode::ClampOnly,
        TrainMode::Stage1,
        TrainMode::ClampFullRetrain,
        TrainMode::StayPositive,
    ]
    .map(|m| table.aggregate(m).unwrap());

    let lim_spec = DatasetSpec {
        downsize_fraction: cfg.limitation_downsize_fraction,
        seed: derive_seed(seed, "limitation-dataset"),
        ..cfg.dataset.clone()
    };
    let (ltrain, lval) = synthgen::build_training_set(&lim_spec).unwrap();
    let (l1, _) = trainer::train_stage1::<f64, _>(&ltrain, &lval, &abl.dims, &abl.stage1).unwrap();
    let (l2, _) = trainer::retrain_stay_positive(&l1, &ltrain, &lval, &abl.stay_positive).unwrap();
    let probe = |m: &MlpParams| {
        evalkit::fake_spurious_probe(m, "m", &t.reals, &cfg.grids.upscale)
            .unwrap()
            .mean_logits()
    };

    SeedResult {
        seed,
        compression_time,
        drop_biased,
        drop_unbiased,
        drop_stay_positive,
        projection_min,
        projection_steps,
        backbone_frozen,
        real_score_max_abs,
        base: (g1.0, g2.0),
        improved: (g1.1, g2.1),
        inpaint_stage1,
        inpaint_stay_positive,
        aggregates,
        probe_stage1: probe(&l1),
        probe_stay_positive: probe(&l2),
    }
}

fn gradient_check() -> Line {
    let clock = Instant::now();
    let worst = (0..FD_CASES)
        .map(|seed| {
            let (p, x, y) = common::random_case(1000 + seed, 1e-4);
            common::fd_max_rel_error(&p, &x, y, FD_EPS)
        })
        .fold(0.0, f64::max);
    let took = clock.elapsed();
    line(
        "gradient_correctness",
        worst <= FD_MAX_REL && took < FD_BUDGET,
        format!("max rel err {worst:.2e} over {FD_CASES} nets (tol {FD_MAX_REL:e}), {:.2} s", took.as_secs_f64()),
    )
}

fn decomposition_check(results: &[SeedResult]) -> Line {
    let mut rng = rng_from_seed(77);
    let mut worst = 0.0f64;
    for case in 0..DECOMP_CASES {
        let dims = [rng.random_range(2..12), rng.random_range(1..10), rng.random_range(1..10)];
        let p = MlpParams::<f64>::init(&dims, case as u64).unwrap();
        let x: Vec<f64> = (0..dims[0]).map(|_| rng.random_range(0.0..2.0)).collect();
        let d = decompose_input(&p, &x).unwrap();
        worst = worst.max((d.real_score + d.fake_score + d.bias - p.logit(&x).unwrap()).abs());
    }
    let mut nonneg_real = 0.0f64;
    for _ in 0..DECOMP_CASES {
        let n = rng.random_range(1..64);
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let h: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..4.0)).collect();
        nonneg_real = nonneg_real.max(decompose(&w, 0.0, &h).unwrap().real_score.abs());
    }
    let trained = results.iter().map(|r| r.real_score_max_abs).fold(0.0, f64::max);
    line(
        "decomposition_identity",
        worst <= DECOMP_TOL && nonneg_real == 0.0 && trained == 0.0,
        format!(
            "max |real+fake+bias-logit| {worst:.2e} over {DECOMP_CASES} (tol {DECOMP_TOL:e}); max |real_score| \
             {nonneg_real} on fuzzed non-negative heads, {trained} on trained stay-positive heads"
        ),
    )
}

fn ap_check() -> Line {
    let mismatches = (0..AP_INSTANCES)
        .filter(|&seed| {
            let (s, l) = common::random_ap_instance(seed);
            evalkit::average_precision(&s, &l).unwrap() != common::brute_force_ap(&s, &l)
        })
        .count();
    let hand = evalkit::average_precision(&[0.9, 0.8, 0.1], &[Label::Fake, Label::Real, Label::Fake]).unwrap();
    line(
        "ap_oracle",
        mismatches == 0 && (hand - AP_HAND).abs() <= AP_HAND_TOL,
        format!("{mismatches}/{AP_INSTANCES} mismatches vs brute force; hand case {hand:.10}"),
    )
}

fn all(results: &[SeedResult], f: impl Fn(&SeedResult) -> bool) -> bool {
    results.iter().all(f)
}

fn per_seed(results: &[SeedResult], f: impl Fn(&SeedResult) -> String) -> String {
    results.iter().map(|r| format!("s{}: {}", r.seed, f(r))).collect::<Vec<_>>().join("; ")
}

fn nondecreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] >= w[0])
}

fn increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

fn pipeline_check() -> Line {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut times = Vec::new();
    let mut sums = Vec::new();
    for d in &dirs {
        let cfg = ExperimentConfig {
            out_dir: d.path().join("run"),
            ..ExperimentConfig::default()
        };
        let clock = Instant::now();
        let summary = run_full_experiment(&cfg).unwrap();
        times.push(clock.elapsed());
        let mut on_disk = Vec::new();
        for (rel, sum) in &summary.checksums {
            let bytes = fs::read(cfg.out_dir.join(rel)).unwrap();
            assert_eq!(&sha256_hex(&bytes), sum, "{rel}");
            on_disk.push((rel.clone(), sum.clone()));
        }
        sums.push(on_disk);
    }
    let identical = !sums[0].is_empty() && sums[0] == sums[1];
    let slowest = times.iter().max().unwrap();
    line(
        "reproducible_pipeline",
        identical && *slowest < PIPELINE_BUDGET,
        format!(
            "{} result files, checksums identical: {identical}; slowest run {:.1} s (budget {} s)",
            sums[0].len(),
            slowest.as_secs_f64(),
            PIPELINE_BUDGET.as_secs()
        ),
    )
}

fn main() {
    let clock = Instant::now();
    let mut lines = vec![gradient_check()];
    let results: Vec<SeedResult> = SEEDS.iter().map(|&s| run_seed(s)).collect();
    let r = &results;

    lines.push(line(
        "projection_invariants",
        all(r, |x| x.projection_min >= 0.0 && x.projection_steps > 0 && x.backbone_frozen),
        per_seed(r, |x| format!("min(w) {} over {} steps, frozen {}", x.projection_min, x.projection_steps, x.backbone_frozen)),
    ));
    lines.push(decomposition_check(r));
    lines.push(ap_check());

    let compression_time: Duration = r.iter().map(|x| x.compression_time).sum();
    lines.push(line(
        "compression_bias_drop",
        all(r, |x| x.drop_biased >= BIASED_MIN_DROP && x.drop_unbiased <= UNBIASED_MAX_DROP)
            && compression_time < COMPRESSION_BUDGET,
        format!(
            "AP drop q100->q10, biased >= {BIASED_MIN_DROP} / unbiased <= {UNBIASED_MAX_DROP}: {}; {:.1} s",
            per_seed(r, |x| format!("{:.4}/{:.4}", x.drop_biased, x.drop_unbiased)),
            compression_time.as_secs_f64()
        ),
    ));
    lines.push(line(
        "stay_positive_smaller_drop",
        all(r, |x| x.drop_stay_positive < x.drop_biased),
        format!("stage1/stay_positive drop: {}", per_seed(r, |x| format!("{:.4}/{:.4}", x.drop_biased, x.drop_stay_positive))),
    ));
    lines.push(line(
        "improved_family_gain",
        all(r, |x| x.improved.1 >= x.improved.0 + IMPROVED_MARGIN && x.base.1 >= x.base.0 - BASE_SLACK),
        format!(
            "IMPROVED stage1->sp (+{IMPROVED_MARGIN}), BASE stage1->sp (-{BASE_SLACK}): {}",
            per_seed(r, |x| format!(
                "{:.4}->{:.4}, {:.4}->{:.4}",
                x.improved.0, x.improved.1, x.base.0, x.base.1
            ))
        ),
    ));
    lines.push(line(
        "inpainting_small_region",
        all(r, |x| {
            x.inpaint_stay_positive[0] > x.inpaint_stage1[0]
                && nondecreasing(&x.inpaint_stage1)
                && nondecreasing(&x.inpaint_stay_positive)
        }),
        format!(
            "AP over rho from {SMALL_RHO} stage1 | sp: {}",
            per_seed(r, |x| format!("{} | {}", fmt(&x.inpaint_stage1), fmt(&x.inpaint_stay_positive)))
        ),
    ));
    let majority = r.iter().filter(|x| x.aggregates[1].max(x.aggregates[2]) <= x.aggregates[3]).count();
    lines.push(line(
        "ablation_ordering",
        all(r, |x| x.aggregates[0] <= x.aggregates[3] && x.aggregates[0] <= x.aggregates[1].max(x.aggregates[2]))
            && 2 * majority > r.len(),
        format!(
            "clamp_only/stage1/clamp_full/sp aggregate AP: {}; middle inequality holds on {majority}/{}",
            per_seed(r, |x| fmt(&x.aggregates)),
            r.len()
        ),
    ));
    lines.push(line(
        "upscale_probe_rising",
        all(r, |x| increasing(&x.probe_stage1) && increasing(&x.probe_stay_positive)),
        format!(
            "mean logit on upscaled reals stage1 | sp: {}",
            per_seed(r, |x| format!("{} | {}", fmt(&x.probe_stage1), fmt(&x.probe_stay_positive)))
        ),
    ));
    lines.push(pipeline_check());

    let failed = lines.iter().filter(|l| !l.pass).count();
    for l in &lines {
        println!("[{}] {}: {}", if l.pass { "PASS" } else { "FAIL" }, l.name, l.detail);
    }
    println!(
        "acceptance: {}/{} criteria pass ({:.1} s)",
        lines.len() - failed,
        lines.len(),
        clock.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
