//! Softmax rendering weights with the epipolar slot, compared against volume rendering
//! on two density profiles that give the same colour.

use cerf::config::EpipolarConfig;
use cerf::renderer::{entropy, render_color, render_depth, unique_surface_constraint, volume_render_oracle};

fn main() -> cerf::Result<()> {
    let s = [0.1, 0.2, 0.9, 0.3, 0.1, 0.05, 0.0, 0.0];
    let t: Vec<f64> = (0..s.len()).map(|i| 2.0 + 0.5 * i as f64).collect();
    let colors: Vec<[f64; 3]> = (0..s.len()).map(|i| [i as f64 / 8.0, 0.5, 1.0 - i as f64 / 8.0]).collect();
    for theta in [1.0, 5.0, 10.0, 20.0, 50.0] {
        let ep = EpipolarConfig {
            theta_alpha: theta,
            ..Default::default()
        };
        let w = unique_surface_constraint(&s, &ep)?;
        let c = render_color(&w, &colors, ep.c_e)?;
        let depth = render_depth(&w, &t, ep.t_e)?;
        println!(
            "theta {theta:>4}: peak w {:.3} at sample {}, w_e {:.3}, entropy {:.3}, depth {depth:.2}, colour [{:.2} {:.2} {:.2}]",
            w.samples()[w.argmax()],
            w.argmax(),
            w.epipolar().unwrap_or(0.0),
            entropy(&w.w),
            c[0],
            c[1],
            c[2]
        );
    }

    let shades = [[0.9, 0.1, 0.1], [0.5, 0.1, 0.5], [0.1, 0.1, 0.9]];
    let delta = [0.5; 3];
    let surface = [0.0, 80.0, 0.0];
    let split = [2f64.ln() / 0.5, 0.0, 80.0];
    println!("volume rendering, opaque middle bin: {:?}", volume_render_oracle(&surface, &shades, &delta)?);
    println!("volume rendering, half-and-half:     {:?}", volume_render_oracle(&split, &shades, &delta)?);
    Ok(())
}
