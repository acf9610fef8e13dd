use cerf::config::{Ablation, CerfConfig};
use cerf::model::Model;
use cerf::scene_io::{synthetic_dataset, Checkpoint, Split, SyntheticScene};
use cerf::training::{evaluate, train, train_with, TrainOptions};

fn small(iterations: usize) -> CerfConfig {
    let mut c = CerfConfig::default();
    c.encoder = "W16U4K3D8".into();
    c.sampling.coarse_samples = 16;
    c.sampling.fine_samples = 16;
    c.heads.gru_hidden = 16;
    c.heads.geometry_hidden = vec![16, 16];
    c.train.batch_rays = 128;
    c.train.iterations = iterations;
    c.train.log_every = 10;
    c
}

#[test]
fn zero_iterations_return_the_initialization() {
    let ds = synthetic_dataset(&SyntheticScene::default(), Split::Train, 1, 8, 8).unwrap();
    let cfg = small(0);
    let out = train(&ds, &cfg).unwrap();
    assert_eq!(out.params, Model::new(&cfg).unwrap().init::<f32>(cfg.seed));
    assert!(out.losses.is_empty());
}

#[test]
fn short_run_lowers_the_loss() {
    let ds = synthetic_dataset(&SyntheticScene::default(), Split::Train, 1, 16, 16).unwrap();
    let mut cfg = CerfConfig::default();
    cfg.train.iterations = 200;
    cfg.train.batch_rays = 256;
    let out = train(&ds, &cfg).unwrap();
    let head: f64 = out.losses[..10].iter().sum::<f64>() / 10.0;
    let tail: f64 = out.losses[190..].iter().sum::<f64>() / 10.0;
    assert!(tail < head, "loss {head} -> {tail}");
}

#[test]
fn training_is_deterministic() {
    let ds = synthetic_dataset(&SyntheticScene::default(), Split::Train, 2, 8, 8).unwrap();
    let cfg = small(5);
    let a = train(&ds, &cfg).unwrap();
    let b = train(&ds, &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.losses, b.losses);
}

#[test]
fn ablated_runs_are_tagged() {
    let ds = synthetic_dataset(&SyntheticScene::default(), Split::Train, 1, 8, 8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(10);
    cfg.train.ablation = Ablation::from_variant("no_alpha").unwrap();
    let out = train_with(
        &ds,
        &cfg,
        TrainOptions {
            log_dir: Some(dir.path().to_path_buf()),
            ..Default::default()
        },
    )
    .unwrap();
    assert!(out.losses.iter().all(|l| l.is_finite()));
    assert!(out.log.iter().all(|r| r.variant == "w/o alpha"));
    let text = std::fs::read_to_string(dir.path().join("train_log.txt")).unwrap();
    assert!(text.lines().all(|l| l.starts_with("[w/o alpha]")));
    let json = std::fs::read_to_string(dir.path().join("train_log.jsonl")).unwrap();
    assert_eq!(json.lines().count(), 1);
}

#[test]
fn training_improves_test_metrics() {
    let scene = SyntheticScene::default();
    let train_set = synthetic_dataset(&scene, Split::Train, 4, 16, 16).unwrap();
    let test_set = synthetic_dataset(&scene, Split::Test, 1, 16, 16).unwrap();
    let cfg = small(150);
    let init = Checkpoint {
        params: Model::new(&cfg).unwrap().init::<f32>(cfg.seed),
        config: cfg.clone(),
        step: 0,
    };
    let before = evaluate(&init, &test_set).unwrap();
    assert_eq!(before.rows.len(), 1);
    assert_eq!(before.mean_psnr, before.rows[0].psnr);
    assert_eq!(before.mean_ssim, before.rows[0].ssim);
    let out = train(&train_set, &cfg).unwrap();
    let trained = Checkpoint {
        params: out.params,
        config: cfg,
        step: 150,
    };
    let after = evaluate(&trained, &test_set).unwrap();
    assert!(after.mean_psnr > before.mean_psnr, "{} -> {}", before.mean_psnr, after.mean_psnr);
}
