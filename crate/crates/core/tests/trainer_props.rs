use proptest::prelude::*;
use rand::Rng;
use staypos::nnet::MlpParams;
use staypos::scores::{group_stats, GroupSpec};
use staypos::synthgen::{build_training_set, rng_from_seed, DatasetSpec, ImageSample, Label};
use staypos::trainer::{
    clamp_head, fit_head, retrain_stay_positive, retrain_stay_positive_with_hook, train_full_clamped_with_hook,
    train_stage1, validation_accuracy, StepEvent, TrainConfig,
};

fn small_data() -> (Vec<ImageSample>, Vec<ImageSample>) {
    build_training_set(&DatasetSpec {
        n_real: 120,
        n_fake: 120,
        ..DatasetSpec::default()
    })
    .unwrap()
}

fn short(config: TrainConfig) -> TrainConfig {
    TrainConfig {
        max_epochs: 15,
        ..config
    }
}

fn bits(v: &[Vec<f64>]) -> Vec<Vec<u64>> {
    v.iter().map(|t| t.iter().map(|x| x.to_bits()).collect()).collect()
}

#[test]
fn projection_holds_after_every_step() {
    let (train, val) = small_data();
    let dims = [256, 16];
    let (stage1, _) = train_stage1::<f64, _>(&train, &val, &dims, &short(TrainConfig::stage1())).unwrap();

    let mut steps = 0usize;
    let mut worst = f64::INFINITY;
    let mut hook = |e: &StepEvent<'_, f64>| {
        steps += 1;
        worst = e.head_w.iter().copied().fold(worst, f64::min);
    };
    let (sp, _) =
        retrain_stay_positive_with_hook(&stage1, &train, &val, &short(TrainConfig::stay_positive()), Some(&mut hook))
            .unwrap();
    assert!(steps > 0 && worst >= 0.0, "{steps} steps, min {worst}");
    assert!(sp.head_min() >= 0.0);
    assert_eq!(bits(&sp.weights), bits(&stage1.weights));
    assert_eq!(bits(&sp.biases), bits(&stage1.biases));

    let (mut steps, mut worst) = (0usize, f64::INFINITY);
    let mut hook = |e: &StepEvent<'_, f64>| {
        steps += 1;
        worst = e.head_w.iter().copied().fold(worst, f64::min);
    };
    let (full, _) =
        train_full_clamped_with_hook(&train, &val, &dims, &short(TrainConfig::clamp_full_retrain()), Some(&mut hook))
            .unwrap();
    assert!(steps > 0 && worst >= 0.0, "{steps} steps, min {worst}");
    assert!(full.head_min() >= 0.0);
}

#[test]
fn stay_positive_real_scores_vanish_in_group_stats() {
    let (train, val) = small_data();
    let (stage1, _) = train_stage1::<f64, _>(&train, &val, &[256, 16], &short(TrainConfig::stage1())).unwrap();
    let (sp, _) = retrain_stay_positive(&stage1, &train, &val, &short(TrainConfig::stay_positive())).unwrap();
    let groups = [
        GroupSpec::new("real", |s: &ImageSample| s.label == Label::Real),
        GroupSpec::new("fake", |s: &ImageSample| s.label == Label::Fake),
    ];
    for g in group_stats(&sp, &val, &groups).unwrap().groups {
        assert_eq!((g.real_score.mean, g.real_score.std), (0.0, 0.0), "{}", g.group);
    }
}

#[test]
fn selected_checkpoint_has_best_trace_accuracy() {
    let (train, val) = small_data();
    let (m, report) = train_stage1::<f64, _>(&train, &val, &[256, 16], &short(TrainConfig::stage1())).unwrap();
    let best = report.best_accuracy().unwrap();
    assert_eq!(validation_accuracy(&m, &val).unwrap(), best);
    let first = report.val_accuracy.iter().position(|&a| a == best).unwrap();
    assert_eq!(report.best_epoch, Some(first));
}

#[test]
fn training_loss_falls_on_the_default_benchmark() {
    let (train, val) = build_training_set(&DatasetSpec::default()).unwrap();
    let (_, report) =
        train_stage1::<f64, _>(&train, &val, &staypos::nnet::default_dims(16), &TrainConfig::stage1()).unwrap();
    assert!(report.train_loss.last().unwrap() < report.train_loss.first().unwrap());
}

/// Features of width 5 in which only `signal` carries label information:
/// `high_on_fake` makes it larger on fakes, otherwise it is 1 on reals and 0 on fakes.
fn toy(n: usize, signal: usize, high_on_fake: bool, seed: u64) -> Vec<(Vec<f64>, Label)> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { Label::Fake } else { Label::Real };
            let mut h: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
            h[signal] = match (high_on_fake, label) {
                (true, Label::Fake) => 1.0 + rng.random_range(0.0..1.0),
                (true, Label::Real) => rng.random_range(0.0..0.5),
                (false, Label::Fake) => 0.0,
                (false, Label::Real) => 1.0,
            };
            (h, label)
        })
        .collect()
}

fn toy_config() -> TrainConfig {
    TrainConfig {
        max_epochs: 100,
        batch_size: 16,
        ..TrainConfig::stay_positive()
    }
}

#[test]
fn fake_side_coordinate_is_learned_under_the_constraint() {
    let (train, val) = (toy(200, 3, true, 1), toy(60, 3, true, 2));
    let (head, report) = fit_head(&train, &val, &toy_config(), true, None).unwrap();
    assert!(head.w[3] > 0.0);
    assert_eq!(report.best_accuracy(), Some(1.0));
    let (_, oracle) = fit_head(&train, &val, &toy_config(), false, None).unwrap();
    assert_eq!(oracle.best_accuracy(), Some(1.0));
}

#[test]
fn real_indicator_is_unusable_under_the_constraint() {
    let (train, val) = (toy(200, 0, false, 3), toy(60, 0, false, 4));
    // Brute force over the indicator alone: with w ≥ 0 a real can never score
    // below a fake, so the best rule is constant and balanced data caps it at 1/2.
    let mut best = 0.0f64;
    for wi in 0..=40 {
        for bi in -40..=40 {
            let (w, b) = (f64::from(wi) * 0.25, f64::from(bi) * 0.25);
            let hits = val.iter().filter(|(h, l)| (w * h[0] + b >= 0.0) == (*l == Label::Fake)).count();
            best = best.max(hits as f64 / val.len() as f64);
        }
    }
    assert_eq!(best, 0.5);
    let (_, constrained) = fit_head(&train, &val, &toy_config(), true, None).unwrap();
    let acc = constrained.best_accuracy().unwrap();
    assert!((acc - 0.5).abs() <= 0.1, "{acc}");
    let (_, oracle) = fit_head(&train, &val, &toy_config(), false, None).unwrap();
    assert_eq!(oracle.best_accuracy(), Some(1.0));
}

proptest! {
    #[test]
    fn clamp_head_is_idempotent_and_keeps_the_rest(seed in any::<u64>()) {
        let mut p = MlpParams::<f64>::init(&[6, 5, 4], seed).unwrap();
        p.head_b = 0.7;
        let once = clamp_head(&p);
        prop_assert_eq!(&clamp_head(&once), &once);
        prop_assert!(once.head_min() >= 0.0);
        prop_assert_eq!(once.head_b, p.head_b);
        prop_assert_eq!(&once.weights, &p.weights);
        for (a, b) in once.head_w.iter().zip(&p.head_w) {
            prop_assert_eq!(*a, b.max(0.0));
        }
    }
}
