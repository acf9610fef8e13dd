//! Short side-by-side runs of the full model and each ablation on the sphere scene.
//!
//! `cargo run --release --example ablations -- [iterations]`

use cerf::config::{Ablation, CerfConfig};
use cerf::scene_io::{synthetic_dataset, Checkpoint, Split, SyntheticScene};
use cerf::training::{evaluate, train};

fn main() -> cerf::Result<()> {
    let iterations = std::env::args().nth(1).map(|s| s.parse().expect("iteration count")).unwrap_or(200);
    let scene = SyntheticScene::default();
    let train_set = synthetic_dataset(&scene, Split::Train, 8, 32, 32)?;
    let test_set = synthetic_dataset(&scene, Split::Test, 2, 32, 32)?;
    for variant in ["full", "no_rho_f", "no_rho_g", "no_alpha", "no_beta", "no_l_e"] {
        let mut config = CerfConfig::default();
        config.encoder = "W32U4K3D8".into();
        config.heads.gru_hidden = 32;
        config.heads.geometry_hidden = vec![32, 32];
        config.train.batch_rays = 256;
        config.train.iterations = iterations;
        config.train.ablation = Ablation::from_variant(variant)?;
        let out = train(&train_set, &config)?;
        let table = evaluate(
            &Checkpoint {
                params: out.params,
                config: config.clone(),
                step: iterations as u64,
            },
            &test_set,
        )?;
        println!(
            "{:<12} test PSNR {:6.2}  SSIM {:.4}  final loss {:.4e}",
            config.train.ablation.label(),
            table.mean_psnr,
            table.mean_ssim,
            out.losses.last().copied().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
