//! Central finite differences of the two-pass loss against backpropagation on a tiny
//! double-precision model.

use cerf::config::CerfConfig;
use cerf::math::Vec3;
use cerf::model::Model;
use cerf::raygen::Ray;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> cerf::Result<()> {
    let mut c = CerfConfig::default();
    c.encoder = "W8U2K3D4".into();
    c.sampling.coarse_samples = 8;
    c.sampling.fine_samples = 8;
    c.heads.gru_hidden = 8;
    c.heads.geometry_hidden = vec![8, 8];
    let model = Model::new(&c)?;
    let params: Vec<f64> = model.init(1);
    let rays = vec![Ray::new(Vec3::new(0.2, -0.1, 3.0), Vec3::new(0.0, 0.0, -1.0), 1.0, 5.0)?];
    let target = vec![[0.8, 0.4, 0.2]];

    let coarse_t = model.coarse_samples::<ChaCha8Rng>(&rays, None);
    let coarse = model.pass_forward(&params, false, &rays, coarse_t.clone(), 8)?;
    let fine_t = model.fine_samples::<f64, ChaCha8Rng>(&rays, &coarse, None);
    let mut grads = vec![0.0; params.len()];
    let loss = model.loss_at(&params, &rays, &target, coarse_t.clone(), fine_t.clone(), Some(&mut grads))?;
    println!("{} parameters, loss {:.6}", params.len(), loss.total);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let i = rng.gen_range(0..params.len());
        let mut p = params.clone();
        p[i] += h;
        let up = model.loss_at(&p, &rays, &target, coarse_t.clone(), fine_t.clone(), None)?.total;
        p[i] -= 2.0 * h;
        let down = model.loss_at(&p, &rays, &target, coarse_t.clone(), fine_t.clone(), None)?.total;
        let fd = (up - down) / (2.0 * h);
        let rel = (fd - grads[i]).abs() / fd.abs().max(grads[i].abs()).max(1e-8);
        worst = worst.max(rel);
        println!("param {i:>5}: analytic {:>12.4e}  numeric {fd:>12.4e}  rel {rel:.1e}", grads[i]);
    }
    println!("worst relative error {worst:.2e}");
    Ok(())
}
