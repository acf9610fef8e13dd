//! Trains a small model on the sphere scene, evaluates the held-out views, saves a
//! checkpoint and renders one test view with its depth map.
//!
//! `cargo run --release --example train_sphere -- [iterations] [out_dir]`

use std::path::PathBuf;

use cerf::config::CerfConfig;
use cerf::scene_io::{save_checkpoint, synthetic_dataset, write_depth_png16, write_png_rgb, Checkpoint, Split, SyntheticScene};
use cerf::training::{evaluate, render_view, resolve_bounds, train_with, TrainOptions};

fn main() -> cerf::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().map(|s| s.parse().expect("iteration count")).unwrap_or(300);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "runs/train_sphere".into()));

    let mut config = CerfConfig::default();
    config.encoder = "W32U4K3D8".into();
    config.heads.gru_hidden = 32;
    config.heads.geometry_hidden = vec![32, 32];
    config.train.batch_rays = 512;
    config.train.iterations = iterations;
    config.train.log_every = 50;

    let scene = SyntheticScene::default();
    let train_set = synthetic_dataset(&scene, Split::Train, 10, 48, 48)?;
    let test_set = synthetic_dataset(&scene, Split::Test, 2, 48, 48)?;
    let outcome = train_with(
        &train_set,
        &config,
        TrainOptions {
            log_dir: Some(out.clone()),
            ..Default::default()
        },
    )?;
    for r in &outcome.log {
        println!("{}", r.human());
    }

    let ckpt = Checkpoint {
        params: outcome.params,
        config: config.clone(),
        step: iterations as u64,
    };
    save_checkpoint(&ckpt, out.join("model.ckpt"))?;
    print!("{}", evaluate(&ckpt, &test_set)?.to_text());

    let (near, far) = resolve_bounds(&config, &test_set);
    let frame = &test_set.frames[0];
    let view = render_view(&outcome.model, &ckpt.params, frame, near, far)?;
    let rgb: Vec<f32> = view.rgb.iter().map(|v| *v as f32).collect();
    write_png_rgb(out.join("test_0.png"), view.width, view.height, &rgb)?;
    write_depth_png16(out.join("test_0_depth.png"), view.width, view.height, &view.depth)?;
    println!("wrote {}", out.display());
    Ok(())
}
