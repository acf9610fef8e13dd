//! Camera rays, stratified coarse samples, inverse-CDF fine samples and the
//! positional encoding fed to the encoder.

use cerf::raygen::{hierarchical_resample, positional_encoding, rays_from_camera, stratified_sample};
use cerf::scene_io::{synthetic_dataset, Split, SyntheticScene};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cerf::Result<()> {
    let ds = synthetic_dataset(&SyntheticScene::default(), Split::Train, 1, 32, 32)?;
    let frame = &ds.frames[0];
    let ray = rays_from_camera(frame, 16, 16, ds.near, ds.far)?;
    println!("centre ray: origin {:.2?}, direction {:.3?}, t in [{:.2}, {:.2}]", ray.origin, ray.direction, ray.near, ray.far);

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let coarse = stratified_sample(&ray, 16, true, &mut rng);
    println!("coarse t: {}", fmt(&coarse.t));

    // weights peaked around the sphere surface pull the fine samples towards it
    let surface = ray.origin.norm() - 1.0;
    let w: Vec<f64> = coarse.t.iter().map(|t| (-(t - surface).powi(2) / 0.05).exp()).collect();
    let fine = hierarchical_resample(&ray, &coarse.t, &w, 16, Some(&mut rng));
    println!("surface at {surface:.3}");
    println!("fine t:   {}", fmt(&fine.t));

    let p = ray.at(surface);
    let enc = positional_encoding(&[p.x(), p.y(), p.z()], 4);
    println!("encoding of the surface point ({} values): {}", enc.len(), fmt(&enc[..9]));
    Ok(())
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" ")
}
