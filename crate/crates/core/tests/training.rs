use anedl::data::{AugmentSpec, GenSpec, OpenSetDataset};
use anedl::losses::LossWeights;
use anedl::network::{NetworkShape, TwoHeadModel};
use anedl::training::{evaluate_test, train, train_with_observer, Stage, TrainConfig};
use anedl::Error;

fn small_config(epochs_pretrain: usize, epochs_total: usize) -> TrainConfig {
    TrainConfig { epochs_pretrain, epochs_total, steps_per_epoch: 8, batch_labeled: 16, batch_unlabeled: 32, ..TrainConfig::default() }
}

fn dataset(seed: u64) -> OpenSetDataset {
    OpenSetDataset::generate(&GenSpec::default(), seed).unwrap()
}

#[test]
fn stage_gate_without_self_training() {
    let ds = dataset(0);
    let out = train(&ds, &small_config(3, 3), &AugmentSpec::default(), 0).unwrap();
    assert_eq!(out.reports.len(), 3);
    for r in &out.reports {
        assert_eq!(r.stage, Stage::Pretrain);
        assert_eq!(r.losses.fixmatch, 0.0);
        assert_eq!(r.selected, 0);
        assert!(r.selected_inlier_fraction.is_none());
    }
}

#[test]
fn stage_boundary_and_selection_cadence() {
    let ds = dataset(1);
    let cfg = TrainConfig { top_o: Some(300), ..small_config(2, 5) };
    let out = train(&ds, &cfg, &AugmentSpec::default(), 1).unwrap();
    let stages: Vec<Stage> = out.reports.iter().map(|r| r.stage).collect();
    assert_eq!(stages, [Stage::Pretrain, Stage::Pretrain, Stage::SelfTraining, Stage::SelfTraining, Stage::SelfTraining]);
    for r in &out.reports[..2] {
        assert_eq!(r.losses.fixmatch, 0.0);
        assert_eq!(r.selected, 0);
    }
    for r in &out.reports[2..] {
        assert_eq!(r.selected, 300);
        assert!(r.selected_inlier_fraction.is_some());
    }
}

#[test]
fn reported_terms_sum_to_total() {
    let ds = dataset(2);
    let cfg = small_config(1, 3);
    let out = train(&ds, &cfg, &AugmentSpec::default(), 2).unwrap();
    for r in &out.reports {
        let l = r.losses;
        let sum = l.ce + l.fixmatch + l.ano + cfg.weights.lambda_con * l.con;
        assert!((sum - l.total).abs() <= 1e-10 * l.total.abs().max(1.0), "{l:?}");
    }
}

#[test]
fn identical_seed_gives_identical_logs() {
    let ds = dataset(3);
    let cfg = small_config(1, 3);
    let run = || {
        let mut lines = Vec::new();
        train_with_observer(&ds, &cfg, &AugmentSpec::default(), 9, |r| {
            lines.push(serde_json::to_string(r).unwrap());
            Ok(())
        })
        .unwrap();
        lines.join("\n")
    };
    assert_eq!(run(), run());
    let other = train(&ds, &cfg, &AugmentSpec::default(), 10).unwrap();
    let first = train(&ds, &cfg, &AugmentSpec::default(), 9).unwrap();
    assert_ne!(first.model.params(), other.model.params());
}

#[test]
fn degenerate_weights_reduce_to_supervised_ce() {
    let ds = dataset(4);
    let weights = LossWeights {
        lambda1: 0.0,
        lambda2: 0.0,
        lambda_pedl: 0.0,
        lambda_nedl: 0.0,
        lambda_con: 0.0,
        fixmatch_threshold: 1.0,
        ..LossWeights::default()
    };
    let cfg = TrainConfig { weights, ..small_config(1, 6) };
    let out = train(&ds, &cfg, &AugmentSpec::default(), 4).unwrap();
    for r in &out.reports {
        assert_eq!(r.losses.fixmatch, 0.0);
        assert_eq!(r.losses.ano, 0.0);
        assert_eq!(r.losses.total, r.losses.ce);
    }
    let first = out.reports.first().unwrap().losses.ce;
    let last = out.reports.last().unwrap().losses.ce;
    assert!(last < first, "CE did not decrease: {first} -> {last}");
}

#[test]
fn closed_set_training_reports_no_auroc() {
    let spec = GenSpec { outlier_means: vec![], unlabeled_outliers: 0, test_outliers: 0, ..GenSpec::default() };
    let ds = OpenSetDataset::generate(&spec, 5).unwrap();
    let out = train(&ds, &small_config(1, 2), &AugmentSpec::default(), 5).unwrap();
    for r in &out.reports {
        assert!(r.test_auroc.is_none());
        assert!(r.unlabeled_auroc.is_none());
        assert!(r.test_error_rate.is_finite());
        let line = serde_json::to_string(r).unwrap();
        assert_eq!(&serde_json::from_str::<anedl::training::RunReport>(&line).unwrap(), r);
    }
}

/// Per-seed AUROC of an untrained model has sd ≈ 0.17, so the mean is taken
/// over 40 seeds to make a ±0.1 window meaningful.
#[test]
fn untrained_models_score_near_chance() {
    let ds = dataset(6);
    let aurocs: Vec<f64> = (0..40)
        .map(|seed| {
            let model = TwoHeadModel::new(NetworkShape::new(2, 4), 1000 + seed).unwrap();
            evaluate_test(&model, &ds, 2).unwrap().auroc.unwrap()
        })
        .collect();
    let mean = aurocs.iter().sum::<f64>() / aurocs.len() as f64;
    assert!((mean - 0.5).abs() <= 0.1, "mean {mean}: {aurocs:?}");
}

#[test]
fn invalid_config_is_rejected_before_training() {
    let ds = dataset(7);
    let cfg = TrainConfig { epochs_pretrain: 5, ..small_config(0, 3) };
    assert!(matches!(train(&ds, &cfg, &AugmentSpec::default(), 0), Err(Error::Config(_))));
    let cfg = TrainConfig { top_o: Some(10_000), ..small_config(1, 2) };
    assert!(matches!(train(&ds, &cfg, &AugmentSpec::default(), 0), Err(Error::Config(_))));
}
