//! Renders the analytic sphere scene into a Blender-style dataset and reads it back.
//!
//! `cargo run --release --example synthetic_scene -- [out_dir]`

use std::path::PathBuf;

use cerf::commands::write_synthetic;
use cerf::config::SyntheticSpec;
use cerf::scene_io::{load_blender_dataset, render_synthetic_depth, Split};

fn main() -> cerf::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "runs/synthetic".into()));
    let spec = SyntheticSpec {
        train_views: 8,
        val_views: 2,
        test_views: 2,
        height: 64,
        width: 64,
        ..Default::default()
    };
    write_synthetic(&spec, &root)?;
    for split in [Split::Train, Split::Val, Split::Test] {
        let ds = load_blender_dataset(&root, split)?;
        let f = &ds.frames[0];
        let depth = render_synthetic_depth(&spec.scene, f, f64::INFINITY);
        let hits: Vec<f64> = depth.iter().copied().filter(|d| d.is_finite()).collect();
        let nearest = hits.iter().copied().fold(f64::INFINITY, f64::min);
        println!(
            "{:5}: {} frames, focal {:.1}, camera at {:.2?}, {:.0}% of pixels hit the sphere, nearest hit {nearest:.3}",
            split.as_str(),
            ds.frames.len(),
            f.focal,
            f.pose.translation(),
            100.0 * hits.len() as f64 / depth.len() as f64
        );
    }
    println!("wrote {}", root.display());
    Ok(())
}
