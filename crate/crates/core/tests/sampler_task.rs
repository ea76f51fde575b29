mod common;

use common::rng;
use din_core::image::{texel_uv, ImageBuffer};
use din_core::optim::TrainConfig;
use din_core::sampler::*;
use rand::Rng;

fn checkerboard(n: usize) -> ImageBuffer {
    let data = (0..n * n).map(|i| ((i % n + i / n) % 2) as f32).collect();
    ImageBuffer::from_data(n, n, 1, data).unwrap()
}

#[test]
fn checkerboard_half_level_blend() {
    let n = 16;
    let img = checkerboard(n);
    let chain = build_mip_chain(&img).unwrap();
    assert_eq!(chain.levels().len(), 5);
    // Level 1 of a one-texel checkerboard is flat grey.
    assert!(chain.levels()[1].data().iter().all(|&v| v == 0.5));
    // LOD 0.5: halfway between the texel value and grey.
    let f = 2f32.powf(0.5) / n as f32;
    assert!((footprint_lod(f, n, 5) - 0.5).abs() < 1e-6);
    for y in 0..n {
        for x in 0..n {
            let base = img.pixel(x, y)[0];
            let got = proxy_trilinear(&chain, texel_uv(x, y, n, n), f)[0];
            assert!((got - (0.5 * base + 0.25)).abs() < 1e-5, "({x},{y}): {got}");
        }
    }
}

#[test]
fn lod_endpoints() {
    assert_eq!(footprint_lod(0.0, 256, 9), 0.0);
    assert_eq!(footprint_lod(1.0 / 256.0, 256, 9), 0.0);
    assert_eq!(footprint_lod(1.0, 256, 9), 8.0);
    assert_eq!(footprint_lod(0.25, 256, 9), 6.0);
}

#[test]
fn mip_levels_preserve_mean() {
    let mut r = rng(1);
    let data = (0..64 * 64 * 3).map(|_| r.random::<f32>()).collect();
    let img = ImageBuffer::from_data(64, 64, 3, data).unwrap();
    let chain = build_mip_chain(&img).unwrap();
    let base = img.mean();
    for level in chain.levels() {
        for (a, b) in level.mean().iter().zip(&base) {
            assert!((a - b).abs() < 1e-5);
        }
    }
    assert_eq!(chain.levels().last().unwrap().width(), 1);
}

#[test]
fn trilinear_is_continuous_in_footprint() {
    let mut r = rng(2);
    let data = (0..32 * 32 * 2).map(|_| r.random::<f32>()).collect();
    let chain = build_mip_chain(&ImageBuffer::from_data(32, 32, 2, data).unwrap()).unwrap();
    for _ in 0..200 {
        let uv = [r.random::<f32>(), r.random::<f32>()];
        // Around every integer LOD, including the level-0 clamp at 1/N.
        for level in 0..6 {
            let f = 2f32.powi(level) / 32.0;
            let a = proxy_trilinear(&chain, uv, f * (1.0 - 1e-4));
            let b = proxy_trilinear(&chain, uv, f * (1.0 + 1e-4));
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-3, "level {level}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn non_power_of_two_rejected() {
    assert!(build_mip_chain(&ImageBuffer::new(12, 12, 1).unwrap()).is_err());
    assert!(build_mip_chain(&ImageBuffer::new(16, 8, 1).unwrap()).is_err());
}

#[test]
fn exponential_law_matches_truncated_cdf() {
    let cfg = FootprintSampleConfig {
        p: 0.5,
        law: FootprintLaw::Exponential,
    };
    let n = 256;
    let lambda = lod_lambda(0.5, 1.0 / n as f64);
    let mut v = sample_footprints(n, &cfg, &mut rng(3), 200_000).unwrap();
    assert!(v.iter().all(|&x| (0.0..1.0).contains(&x)));
    v.sort_by(f64::total_cmp);
    let count = v.len() as f64;
    let norm = 1.0 - (-lambda).exp();
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = (1.0 - (-lambda * x).exp()) / norm;
            (cdf - i as f64 / count).max((i + 1) as f64 / count - cdf)
        })
        .fold(0.0, f64::max);
    assert!(d < 1.9495 / count.sqrt(), "KS D {d}");
    let below = v.iter().filter(|&&x| x <= 1.0 / n as f64).count() as f64 / count;
    assert!((below - 0.5).abs() < 0.005);
}

#[test]
fn power_law_exponent() {
    assert!((lod_exponent(1024, 0.5) - 10.0).abs() < 1e-12);
    assert!((lod_exponent(4096, 0.5) - 12.0).abs() < 1e-12);
    assert!(FootprintSampler::new(1024, &FootprintSampleConfig { p: 1.0, ..Default::default() }).is_err());
}

#[test]
fn footprint_is_parallelogram_area() {
    assert_eq!(footprint_from_derivatives([0.5, 0.0], [0.0, 0.25]), 0.125);
    assert_eq!(footprint_from_derivatives([0.0, 0.25], [0.5, 0.0]), 0.125);
    assert_eq!(footprint_from_derivatives([0.1, 0.1], [0.2, 0.2]), 0.0);
}

#[test]
fn small_sampler_learns_something_and_csv_lists_footprints() {
    let cb = checkerboard(32);
    let img = ImageBuffer::stack(&[cb.clone(), cb.clone(), cb]).unwrap();
    let chain = build_mip_chain(&img).unwrap();
    let cfg = SamplerTaskConfig {
        compression: 2.0,
        train: TrainConfig {
            steps: Some(200),
            batch_size: 256,
            learning_rate: 0.01,
            ..Default::default()
        },
        ..Default::default()
    };
    let t = train_sampler(&img, &cfg).unwrap();
    let fs = evaluation_footprints(32);
    assert_eq!(fs, vec![0.0, 1.0 / 32.0, 1.0 / 16.0, 0.125, 0.25, 0.5, 1.0]);
    let rows = evaluate_sampler(&t.network, &chain, &fs, false).unwrap();
    let csv = footprint_psnr_csv(&rows);
    assert_eq!(csv.lines().count(), fs.len() + 1);
    assert!(csv.starts_with("footprint,lod,psnr_db\n"));
    // Coarse levels are flat grey and easy to fit.
    assert!(rows.last().unwrap().psnr > 20.0, "{rows:?}");
}
