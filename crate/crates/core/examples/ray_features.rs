//! The 1-D U-shaped encoder over the samples of one ray: grammar, receptive field and
//! how far a change at one sample travels through the features.

use cerf::encoder::{extract_ray_features, init_encoder, receptive_field, EncoderConfig};
use cerf::linalg::Mat;

fn main() -> cerf::Result<()> {
    let plain = EncoderConfig::parse("W64U4K3D8")?.without_updown();
    for cfg in [EncoderConfig::parse("W64U4K3D8")?, EncoderConfig::parse("W32U2K5D6")?, plain] {
        println!(
            "{cfg}: {} down layers, length divisible by {}, receptive field {} samples",
            cfg.down_layers(),
            cfg.length_divisor(),
            receptive_field(&cfg)
        );
    }

    let (d, e) = (32, 6);
    let (enc, params) = init_encoder::<f64>(EncoderConfig::parse("W16U4K3D8")?, e, d, 7)?;
    let x = Mat::from_vec(d, e, (0..d * e).map(|i| (i as f64 * 0.37).sin()).collect());
    let base = extract_ray_features(&enc, &params, &x)?;
    let mut poked = x.clone();
    poked.data[10 * e] += 1.0;
    let moved = extract_ray_features(&enc, &params, &poked)?;
    println!("features {}x{}; change per sample after perturbing sample 10:", base.rows, base.cols);
    let line: Vec<String> = (0..d)
        .map(|i| {
            let diff: f64 = base.row(i).iter().zip(moved.row(i)).map(|(a, b)| (a - b).abs()).sum();
            if diff > 1e-12 { "#".into() } else { ".".into() }
        })
        .collect();
    println!("  {}", line.join(""));
    Ok(())
}
