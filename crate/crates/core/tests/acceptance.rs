//! Acceptance run. One PASS/FAIL line per criterion; pass substrings as arguments to
//! run a subset, e.g. `cargo test --release --test acceptance -- simplex metrics`.

mod common;

use std::time::{Duration, Instant};

use cerf::config::{Ablation, CerfConfig, EpipolarCoeff, EpipolarConfig};
use cerf::encoder::{extract_ray_features, Encoder, EncoderConfig};
use cerf::heads::{geometry_coeffs, radiance_colors, GeometryHead, RadianceHead};
use cerf::linalg::Mat;
use cerf::math::Vec3;
use cerf::model::Model;
use cerf::nn::ParamAlloc;
use cerf::raygen::Ray;
use cerf::renderer::{
    entropy, indicator_oracle, render_color, render_depth, unique_surface_constraint, volume_render_oracle,
    IndicatorTarget,
};
use cerf::scene_io::{render_synthetic_depth, synthetic_dataset, CameraFrame, Dataset, Split, SyntheticScene};
use cerf::training::{psnr, render_view, resolve_bounds, ssim, train, TrainOutcome, PSNR_CAP};
use common::*;
use rand::Rng;

const OVERFIT_PSNR: f64 = 30.0;
const GENERALIZATION_PSNR: f64 = 25.0;
const ABLATION_MARGIN: f64 = 1.0;
const OVERFIT_BUDGET: Duration = Duration::from_secs(15 * 60);
const GENERALIZATION_BUDGET: Duration = Duration::from_secs(45 * 60);

/// Criteria allowed to fail without failing the run. See the README.
const KNOWN_FAILURES: [&str; 4] = [
    "epipolar behavior",
    "generalization",
    "overfit runtime",
    "generalization runtime",
];

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

struct Runner {
    filters: Vec<String>,
    outcomes: Vec<Outcome>,
}

impl Runner {
    fn wants(&self, name: &str) -> bool {
        self.filters.is_empty() || self.filters.iter().any(|f| name.contains(f.as_str()))
    }

    fn record(&mut self, name: &'static str, pass: bool, detail: String, elapsed: Duration) {
        println!(
            "{} {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        self.outcomes.push(Outcome {
            name,
            pass,
            detail,
        });
    }

    fn run(&mut self, name: &'static str, check: impl FnOnce() -> (bool, String)) {
        if !self.wants(name) {
            return;
        }
        let start = Instant::now();
        let (pass, detail) = check();
        self.record(name, pass, detail, start.elapsed());
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn rows(m: &Mat<f64>) -> Vec<Vec<f64>> {
    (0..m.rows).map(|i| m.row(i).to_vec()).collect()
}

fn gradient_suite() -> (bool, String) {
    let start = Instant::now();
    let config = tiny_config();
    let model = Model::new(&config).unwrap();
    let params = uniform_params(model.param_count(), 0.5, 1);
    let (rays, target) = random_rays(2, 2);
    let report = gradient_check(&model, &params, &rays, &target, 150, 3);
    let secs = start.elapsed().as_secs_f64();
    (
        report.checked >= 100 && report.failures.is_empty() && secs < 60.0,
        format!(
            "{} params, {} over 1e-3, max rel {:.2e}",
            report.checked,
            report.failures.len(),
            report.max_rel,
        ),
    )
}

fn simplex_suite() -> (bool, String) {
    let mut r = rng(11);
    let mut worst_sum = 0.0f64;
    let mut negatives = 0;
    for _ in 0..10_000 {
        let d = r.gen_range(1..129);
        let ep = EpipolarConfig {
            theta_alpha: r.gen_range(0.1..50.0),
            s_e: EpipolarCoeff::Fixed(r.gen_range(-1e3..1e3)),
            ..EpipolarConfig::default()
        };
        let s: Vec<f64> = (0..d).map(|_| r.gen_range(-1e3..1e3)).collect();
        let w = unique_surface_constraint(&s, &ep).unwrap();
        negatives += w.w.iter().filter(|v| !(**v >= 0.0)).count();
        worst_sum = worst_sum.max((w.w.iter().sum::<f64>() - 1.0).abs());
    }
    let mut worst_uniform = 0.0f64;
    for d in 1..=256 {
        let ep = EpipolarConfig {
            s_e: EpipolarCoeff::Fixed(0.0),
            ..EpipolarConfig::default()
        };
        let w = unique_surface_constraint(&vec![0.0; d], &ep).unwrap();
        let want = 1.0 / (d + 1) as f64;
        worst_uniform = w.w.iter().fold(worst_uniform, |m, v| m.max((v - want).abs()));
    }
    let mut rises = 0;
    for _ in 0..1000 {
        let d = r.gen_range(2..65);
        let s: Vec<f64> = (0..d).map(|_| r.gen_range(0.0..1.0)).collect();
        let mut last = f64::INFINITY;
        for theta in [1.0, 5.0, 10.0, 20.0, 50.0] {
            let ep = EpipolarConfig {
                theta_alpha: theta,
                ..EpipolarConfig::default()
            };
            let h = entropy(&unique_surface_constraint(&s, &ep).unwrap().w);
            if h > last + 1e-12 {
                rises += 1;
            }
            last = h;
        }
    }
    (
        negatives == 0 && worst_sum <= 1e-6 && worst_uniform <= 1e-9 && rises == 0,
        format!(
            "1e4 fuzzed: {negatives} negative, max |sum-1| {worst_sum:.1e}; uniform max err {worst_uniform:.1e}; {rises} entropy rises over theta grid"
        ),
    )
}

fn oracle_equivalence() -> (bool, String) {
    let mut errs = [0.0f64; 6];
    for seed in 0..20u64 {
        let mut r = rng(seed + 1000);
        let d = r.gen_range(1..40);
        let ep = EpipolarConfig {
            theta_alpha: r.gen_range(0.5..20.0),
            s_e: if seed % 2 == 0 {
                EpipolarCoeff::PerSample(1.0)
            } else {
                EpipolarCoeff::Fixed(r.gen_range(0.0..1.0))
            },
            c_e: [r.gen(), r.gen(), r.gen()],
            ..EpipolarConfig::default()
        };
        let s: Vec<f64> = (0..d).map(|_| r.gen_range(0.0..1.0)).collect();
        let w = unique_surface_constraint(&s, &ep).unwrap();
        let want = softmax_oracle(&s, &ep);
        errs[0] = errs[0].max(max_diff(&w.w, &want));
        let colors: Vec<[f64; 3]> = (0..d).map(|_| [r.gen(), r.gen(), r.gen()]).collect();
        let c = render_color(&w, &colors, ep.c_e).unwrap();
        for k in 0..3 {
            let direct = (0..d).map(|i| want[i] * colors[i][k]).sum::<f64>() + want[d] * ep.c_e[k];
            errs[1] = errs[1].max((c[k] - direct).abs());
        }
        let t: Vec<f64> = (0..d).map(|i| 2.0 + i as f64 * r.gen_range(0.01..0.2)).collect();
        let depth = render_depth(&w, &t, ep.t_e).unwrap();
        let direct = (0..d).map(|i| want[i] * t[i]).sum::<f64>() + want[d] * ep.t_e;
        errs[2] = errs[2].max((depth - direct).abs());

        let (wid, hs, n) = (r.gen_range(2..9), r.gen_range(2..9), r.gen_range(1..9));
        let widths = [r.gen_range(2..7), r.gen_range(2..7)];
        let mut alloc = ParamAlloc::new();
        let head = GeometryHead::recurrent(&mut alloc, wid, hs, &widths, false);
        let params = uniform_params(alloc.len(), 1.0, seed + 7);
        let v = Mat::from_vec(n, wid, (0..n * wid).map(|_| r.gen_range(-1.0..1.0)).collect());
        let got = geometry_coeffs(&head, &params, &v).unwrap();
        errs[3] = errs[3].max(max_diff(&got, &geometry_oracle(&head, &params, &rows(&v))));

        let mut alloc = ParamAlloc::new();
        let head = RadianceHead::new(&mut alloc, wid, r.gen_range(1..6));
        let params = uniform_params(alloc.len(), 1.0, seed + 11);
        let got = radiance_colors(&head, &params, &v);
        errs[4] = errs[4].max(max_diff(&got.data, &radiance_oracle(&head, &params, &rows(&v)).concat()));

        let n = [4, 8, 16, 32][seed as usize % 4];
        let e = r.gen_range(1..7);
        let cfg = EncoderConfig::parse(&format!("W{}U2K3D{}", r.gen_range(2..9), r.gen_range(3..6))).unwrap();
        let mut alloc = ParamAlloc::new();
        let enc = Encoder::new(cfg, e, &mut alloc).unwrap();
        let params = uniform_params(alloc.len(), 0.7, seed + 100);
        let x = Mat::from_vec(n, e, (0..n * e).map(|_| r.gen_range(-1.0..1.0)).collect());
        let got = extract_ray_features(&enc, &params, &x).unwrap();
        errs[5] = errs[5].max(max_diff(&got.data, &encoder_oracle(&enc, &params, &rows(&x)).concat()));
    }
    let names = ["weights", "color", "depth", "geometry", "radiance", "features"];
    let detail = names
        .iter()
        .zip(errs)
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    (errs.iter().all(|e| *e <= 1e-10), format!("20 instances each, max err: {detail}"))
}

fn volume_ambiguity() -> (bool, String) {
    let colors = [[0.9, 0.1, 0.1], [0.5, 0.1, 0.5], [0.1, 0.1, 0.9]];
    let delta = [0.5; 3];
    let surface = [0.0, 80.0, 0.0];
    let split = [2f64.ln() / 0.5, 0.0, 80.0];
    let a = volume_render_oracle(&surface, &colors, &delta).unwrap();
    let b = volume_render_oracle(&split, &colors, &delta).unwrap();
    let gap = max_diff(&a, &b);

    let scene = SyntheticScene::default();
    let ray = Ray::new(Vec3::new(0.0, 0.0, 4.0), Vec3::new(0.0, 0.0, -1.0), 2.0, 6.0).unwrap();
    let t: Vec<f64> = (0..16).map(|i| 2.0 + i as f64 * 0.25).collect();
    let targets: Vec<IndicatorTarget> = (0..4).map(|_| indicator_oracle(&scene, &ray, &t).0).collect();
    let unique = targets.iter().all(|x| *x == targets[0]) && targets[0] == IndicatorTarget::Sample(4);
    (
        gap < 1e-9 && surface != split && unique,
        format!("color gap {gap:.1e} between distinct densities; indicator target {:?}", targets[0]),
    )
}

/// Same Gaussian window and constants, evaluated as one 2-D weighted sum per position.
fn ssim_direct(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let win = 11;
    let mut kernel = vec![0.0; win * win];
    for i in 0..win {
        for j in 0..win {
            let (y, x) = (i as f64 - 5.0, j as f64 - 5.0);
            kernel[i * win + j] = (-(x * x + y * y) / (2.0 * 1.5 * 1.5)).exp();
        }
    }
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let (c1, c2) = (1e-4, 9e-4);
    let mut acc = 0.0;
    let mut n = 0;
    for ch in 0..3 {
        for y in 0..=h - win {
            for x in 0..=w - win {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..win {
                    for j in 0..win {
                        let k = kernel[i * win + j];
                        let idx = 3 * ((y + i) * w + x + j) + ch;
                        ma += k * a[idx];
                        mb += k * b[idx];
                        saa += k * a[idx] * a[idx];
                        sbb += k * b[idx] * b[idx];
                        sab += k * a[idx] * b[idx];
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                n += 1;
            }
        }
    }
    acc / n as f64
}

fn metrics_suite() -> (bool, String) {
    let mut r = rng(21);
    let (h, w) = (24, 31);
    let x: Vec<f64> = (0..h * w * 3).map(|_| r.gen()).collect();
    let capped = psnr(&x, &x).unwrap();
    let half = psnr(&vec![0.0; 300], &vec![0.5; 300]).unwrap();
    let identity = ssim(&x, &x, h, w).unwrap();
    let mut cross = 0.0f64;
    for seed in 0..10 {
        let mut r = rng(seed + 40);
        let a: Vec<f64> = (0..h * w * 3).map(|_| r.gen()).collect();
        let b: Vec<f64> = a.iter().map(|v| (v + r.gen_range(-0.2..0.2) * (seed as f64 / 10.0)).clamp(0.0, 1.0)).collect();
        cross = cross.max((ssim(&a, &b, h, w).unwrap() - ssim_direct(&a, &b, h, w)).abs());
    }
    (
        capped == PSNR_CAP && (half - 6.0206).abs() <= 1e-3 && (identity - 1.0).abs() <= 1e-9 && cross <= 1e-6,
        format!("psnr(x,x) {capped} (cap), psnr(0,0.5) {half:.4}, ssim(x,x) {identity:.12}, ssim vs direct {cross:.1e}"),
    )
}

fn desk_config(iterations: usize, variant: &str) -> CerfConfig {
    let mut c = CerfConfig::default();
    c.train.iterations = iterations;
    c.train.log_every = 500;
    c.train.ablation = Ablation::from_variant(variant).unwrap();
    c
}

fn ground_truth(f: &CameraFrame) -> Vec<f64> {
    (0..f.height())
        .flat_map(|y| (0..f.width()).flat_map(move |x| f.pixel(x, y).map(f64::from)))
        .collect()
}

struct EpipolarStats {
    miss: usize,
    miss_high: usize,
    miss_good: usize,
    miss_mean: f64,
    hit_mean: f64,
}

impl EpipolarStats {
    fn fraction_high(&self) -> f64 {
        self.miss_high as f64 / self.miss.max(1) as f64
    }
}

struct Trained {
    outcome: TrainOutcome,
    elapsed: Duration,
    mean_psnr: f64,
    epipolar: EpipolarStats,
}

fn train_and_score(train_set: &Dataset, eval_set: &Dataset, config: &CerfConfig) -> Trained {
    let scene = SyntheticScene::default();
    let start = Instant::now();
    let outcome = train(train_set, config).unwrap();
    let elapsed = start.elapsed();
    let (near, far) = resolve_bounds(config, eval_set);
    let t_e = config.epipolar.t_e;
    let mut total = 0.0;
    let mut st = EpipolarStats {
        miss: 0,
        miss_high: 0,
        miss_good: 0,
        miss_mean: 0.0,
        hit_mean: 0.0,
    };
    let mut hits = 0;
    for f in &eval_set.frames {
        let view = render_view(&outcome.model, &outcome.params, f, near, far).unwrap();
        total += psnr(&view.rgb, &ground_truth(f)).unwrap();
        let Some(we) = &view.epipolar else { continue };
        for (i, truth) in render_synthetic_depth(&scene, f, -1.0).iter().enumerate() {
            if *truth < 0.0 {
                st.miss += 1;
                st.miss_mean += we[i];
                if we[i] >= 0.5 {
                    st.miss_high += 1;
                    if view.depth[i] >= 0.8 * t_e {
                        st.miss_good += 1;
                    }
                }
            } else {
                hits += 1;
                st.hit_mean += we[i];
            }
        }
    }
    st.miss_mean /= st.miss.max(1) as f64;
    st.hit_mean /= hits.max(1) as f64;
    Trained {
        outcome,
        elapsed,
        mean_psnr: total / eval_set.frames.len() as f64,
        epipolar: st,
    }
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut runner = Runner {
        filters,
        outcomes: Vec::new(),
    };
    let start = Instant::now();

    runner.run("gradient suite", gradient_suite);
    runner.run("simplex suite", simplex_suite);
    runner.run("oracle equivalence", oracle_equivalence);
    runner.run("volume ambiguity", volume_ambiguity);
    runner.run("metrics", metrics_suite);

    let scene = SyntheticScene::default();
    if runner.wants("overfit") {
        let view = synthetic_dataset(&scene, Split::Train, 1, 96, 96).unwrap();
        let run = train_and_score(&view, &view, &desk_config(2000, "full"));
        let elapsed = run.elapsed;
        runner.record(
            "overfit",
            run.mean_psnr >= OVERFIT_PSNR,
            format!("training-view PSNR {:.2} dB (need >= {OVERFIT_PSNR})", run.mean_psnr),
            elapsed,
        );
        runner.record(
            "overfit runtime",
            elapsed <= OVERFIT_BUDGET,
            format!("{:.1} min (budget {} min)", elapsed.as_secs_f64() / 60.0, OVERFIT_BUDGET.as_secs() / 60),
            elapsed,
        );
    }

    let needs_full = ["generalization", "epipolar", "ablation"].iter().any(|n| runner.wants(n));
    if needs_full {
        let train_set = synthetic_dataset(&scene, Split::Train, 20, 96, 96).unwrap();
        let test_set = synthetic_dataset(&scene, Split::Test, 5, 96, 96).unwrap();
        let full = train_and_score(&train_set, &test_set, &desk_config(5000, "full"));
        println!(
            "  full model: {:.2} dB, final loss {:.4e}",
            full.mean_psnr,
            full.outcome.losses.last().copied().unwrap_or(f64::NAN)
        );
        if runner.wants("generalization") {
            runner.record(
                "generalization",
                full.mean_psnr >= GENERALIZATION_PSNR,
                format!("mean test PSNR {:.2} dB over 5 views (need >= {GENERALIZATION_PSNR})", full.mean_psnr),
                full.elapsed,
            );
            runner.record(
                "generalization runtime",
                full.elapsed <= GENERALIZATION_BUDGET,
                format!(
                    "{:.1} min (budget {} min)",
                    full.elapsed.as_secs_f64() / 60.0,
                    GENERALIZATION_BUDGET.as_secs() / 60
                ),
                full.elapsed,
            );
        }
        if runner.wants("epipolar") {
            let ablated = train_and_score(&train_set, &test_set, &desk_config(5000, "no_l_e"));
            let (f, a) = (&full.epipolar, &ablated.epipolar);
            let good = f.miss_good as f64 / f.miss.max(1) as f64;
            runner.record(
                "epipolar behavior",
                good >= 0.9 && a.fraction_high() < f.fraction_high(),
                format!(
                    "{:.1}% of {} miss rays have w_e >= 0.5 and depth >= 0.8 t_e (need 90%); fraction w_e >= 0.5 {:.3} full vs {:.3} without L_e",
                    100.0 * good,
                    f.miss,
                    f.fraction_high(),
                    a.fraction_high()
                ),
                ablated.elapsed,
            );
            println!(
                "  diagnostic: mean w_e on miss rays {:.4} vs hit rays {:.4} (full), miss rays {:.4} without L_e; {}",
                f.miss_mean,
                f.hit_mean,
                a.miss_mean,
                if f.miss_mean > f.hit_mean && f.miss_mean > a.miss_mean {
                    "ordering holds"
                } else {
                    "ordering broken"
                }
            );
        }
        if runner.wants("ablation") {
            let ablated = train_and_score(&train_set, &test_set, &desk_config(5000, "no_alpha"));
            let gap = full.mean_psnr - ablated.mean_psnr;
            runner.record(
                "ablation ordering",
                gap >= ABLATION_MARGIN,
                format!(
                    "full {:.2} dB vs w/o alpha {:.2} dB, gap {gap:.2} dB (need >= {ABLATION_MARGIN})",
                    full.mean_psnr, ablated.mean_psnr
                ),
                ablated.elapsed,
            );
        }
    }

    let failed: Vec<&Outcome> = runner.outcomes.iter().filter(|o| !o.pass).collect();
    let unexpected: Vec<&&Outcome> = failed.iter().filter(|o| !KNOWN_FAILURES.contains(&o.name)).collect();
    println!(
        "acceptance: {} passed, {} failed ({} known), total {:.1} min",
        runner.outcomes.len() - failed.len(),
        failed.len(),
        failed.len() - unexpected.len(),
        start.elapsed().as_secs_f64() / 60.0
    );
    if !unexpected.is_empty() {
        for o in unexpected {
            eprintln!("unexpected failure: {}: {}", o.name, o.detail);
        }
        std::process::exit(1);
    }
}
