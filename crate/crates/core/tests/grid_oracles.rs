//! Library interpolation and gradients checked against independent oracles:
//! a recursive multilinear interpolator and central finite differences.

mod common;

use common::*;
use din_core::grid::{GridArray, Nonlinearity};
use din_core::net::{DInNetwork, Wire};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn scalar_oracle_example() {
    let cells = [0.0, 0.9, 0.3];
    let o = oracle_interp(&[3], 1, &cells, Nonlinearity::None, &[0.75]);
    assert!((o[0] - 0.6).abs() < 1e-12);
    let a = GridArray::from_cells(&[3], 1, Nonlinearity::None, cells.to_vec()).unwrap();
    assert!((a.interpolate(&[0.75]).unwrap()[0] - o[0]).abs() < 1e-15);
}

#[test]
fn interpolation_matches_recursive_oracle() {
    let mut r = rng(11);
    for _ in 0..200 {
        let dims = r.random_range(1..=4);
        let ch = r.random_range(1..=3);
        let nl = nonlinearities()[r.random_range(0..3)];
        let a = random_array(&mut r, dims, ch, nl);
        let x: Vec<f64> = (0..dims).map(|_| r.random_range(0.0..=1.0)).collect();
        let got = a.interpolate(&x).unwrap();
        let want = oracle_interp(a.shape(), ch, a.cells(), nl, &x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }
}

#[test]
fn random_3d_coordinate_gradient_matches_fd() {
    let mut r = rng(3);
    for _ in 0..50 {
        let a = random_array(&mut r, 3, 2, Nonlinearity::None);
        let x = interior_query(&mut r, a.shape());
        let jac = a.grad_coords(&x).unwrap();
        for ch in 0..2 {
            let fd = central_diff(|p| a.interpolate(p).unwrap()[ch], &x);
            for j in 0..3 {
                assert!(grad_close(jac.get(ch, j), fd[j]), "{} vs {}", jac.get(ch, j), fd[j]);
            }
        }
    }
}

#[test]
fn triangle_2d_cell_gradient_matches_fd() {
    let mut r = rng(4);
    for _ in 0..50 {
        let a = random_array(&mut r, 2, 1, Nonlinearity::Triangle);
        let x = interior_query(&mut r, a.shape());
        let mut g = a.grad_buffer();
        a.grad_cells(&x, &[1.0], &mut g).unwrap();
        for i in 0..a.cells().len() {
            let mut b = a.clone();
            let c0 = a.cells()[i];
            b.cells_mut()[i] = c0 + FD_STEP;
            let hi = b.interpolate(&x).unwrap()[0];
            b.cells_mut()[i] = c0 - FD_STEP;
            let lo = b.interpolate(&x).unwrap()[0];
            let fd = (hi - lo) / (2.0 * FD_STEP);
            assert!(grad_close(g.as_slice()[i], fd), "cell {i}: {} vs {fd}", g.as_slice()[i]);
        }
    }
}

fn random_net(r: &mut impl Rng) -> DInNetwork<f64> {
    let p_cells = (0..4 * 4 * 2).map(|_| smooth_cell(r, 1e-2)).collect();
    let p = GridArray::from_cells(&[4, 4], 2, Nonlinearity::Triangle, p_cells).unwrap();
    let c_cells = (0..4 * 4 * 2).map(|_| r.random_range(-1.0..1.0)).collect();
    let c = GridArray::from_cells(&[4, 4], 2, Nonlinearity::None, c_cells).unwrap();
    DInNetwork::new(
        vec![p],
        c,
        vec![Wire { primary: 0, channel: 1 }, Wire { primary: 0, channel: 0 }],
    )
    .unwrap()
}

/// Query whose cascaded coordinate is also away from cell faces.
fn safe_query(net: &DInNetwork<f64>, r: &mut impl Rng) -> Vec<f64> {
    loop {
        let x = interior_query(r, net.primaries()[0].shape());
        let y = net.primaries()[0].interpolate(&x).unwrap();
        let ok = y.iter().all(|&v| {
            let u = v * 3.0;
            let f = u - u.floor();
            (0.02..0.98).contains(&f)
        });
        if ok {
            return x;
        }
    }
}

#[test]
fn network_forward_matches_two_stage_oracle() {
    let mut r = rng(5);
    for _ in 0..100 {
        let net = random_net(&mut r);
        let x: Vec<f64> = (0..2).map(|_| r.random_range(0.0..=1.0)).collect();
        let p = &net.primaries()[0];
        let y = oracle_interp(p.shape(), 2, p.cells(), p.nonlinearity(), &x);
        let wired = [y[1], y[0]];
        let c = net.cascaded();
        let want = oracle_interp(c.shape(), 2, c.cells(), c.nonlinearity(), &wired);
        let got = net.forward(&[&x]).unwrap();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-6);
        }
    }
}

#[test]
fn network_backward_matches_fd_on_every_cell() {
    let mut r = rng(6);
    for _ in 0..30 {
        let net = random_net(&mut r);
        let x = safe_query(&net, &mut r);
        let w = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        let mut grads = net.grads();
        net.backward(&[&x], &w, &mut grads).unwrap();
        for arr in 0..2 {
            let analytic = if arr == 0 {
                grads.primaries[0].as_slice().to_vec()
            } else {
                grads.cascaded.as_slice().to_vec()
            };
            for (i, a) in analytic.iter().enumerate() {
                let mut n = net.clone();
                fn cell(n: &mut DInNetwork<f64>, arr: usize, i: usize) -> &mut f64 {
                    if arr == 0 {
                        &mut n.primary_mut(0).cells_mut()[i]
                    } else {
                        &mut n.cascaded_mut().cells_mut()[i]
                    }
                }
                let c0 = *cell(&mut n, arr, i);
                *cell(&mut n, arr, i) = c0 + FD_STEP;
                let hi = weighted_output(&n, &[&x], &w);
                *cell(&mut n, arr, i) = c0 - FD_STEP;
                let lo = weighted_output(&n, &[&x], &w);
                let fd = (hi - lo) / (2.0 * FD_STEP);
                assert!(grad_close(*a, fd), "array {arr} cell {i}: {a} vs {fd}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constant_arrays_interpolate_to_the_constant(
        dims in 1usize..=4, ch in 1usize..=3, value in -5.0f64..5.0, seed in 0u64..1000,
    ) {
        let mut r = rng(seed);
        let shape: Vec<usize> = (0..dims).map(|_| r.random_range(2..=5)).collect();
        let mut a = GridArray::new(&shape, ch, Nonlinearity::None).unwrap();
        a.fill(value);
        let x: Vec<f64> = (0..dims).map(|_| r.random_range(0.0..=1.0)).collect();
        for v in a.interpolate(&x).unwrap() {
            prop_assert!((v - value).abs() <= 1e-12 * value.abs().max(1.0));
        }
        let w = a.weights(&x).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn periodic_outputs_stay_in_unit_interval(seed in 0u64..10_000, sine in proptest::bool::ANY) {
        let mut r = rng(seed);
        let dims = r.random_range(1..=4);
        let nl = if sine { Nonlinearity::Sine(1.0) } else { Nonlinearity::Triangle };
        let shape: Vec<usize> = (0..dims).map(|_| r.random_range(2..=5)).collect();
        let len = shape.iter().product::<usize>();
        let cells = (0..len).map(|_| r.random_range(-50.0..50.0)).collect();
        let a = GridArray::from_cells(&shape, 1, nl, cells).unwrap();
        let x: Vec<f64> = (0..dims).map(|_| r.random_range(0.0..=1.0)).collect();
        let v = a.interpolate(&x).unwrap()[0];
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn identity_ramp_is_identity(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let dims = r.random_range(1..=4);
        let shape: Vec<usize> = (0..dims).map(|_| r.random_range(2..=9)).collect();
        let ch = dims * r.random_range(1..=2);
        let mut a = GridArray::<f64>::new(&shape, ch, Nonlinearity::Triangle).unwrap();
        a.init_identity_ramp();
        let x: Vec<f64> = (0..dims).map(|_| r.random_range(0.0..=1.0)).collect();
        for (m, v) in a.interpolate(&x).unwrap().iter().enumerate() {
            prop_assert!((v - x[m % dims]).abs() <= 1e-6);
        }
    }

    #[test]
    fn baking_preserves_queries_bit_for_bit(seed in 0u64..10_000, sine in proptest::bool::ANY) {
        let mut r = rng(seed);
        let nl = if sine { Nonlinearity::Sine(1.0) } else { Nonlinearity::Triangle };
        let (dims, ch) = (r.random_range(1..=4), r.random_range(1..=3));
        let a = random_array(&mut r, dims, ch, nl);
        let baked = a.bake_nonlinearity();
        for _ in 0..100 {
            let x: Vec<f64> = (0..a.dims()).map(|_| r.random_range(0.0..=1.0)).collect();
            prop_assert_eq!(a.interpolate(&x).unwrap(), baked.interpolate(&x).unwrap());
        }
    }

    #[test]
    fn vertex_queries_return_the_vertex(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let nl = nonlinearities()[r.random_range(0..3)];
        let (dims, ch) = (r.random_range(1..=4), r.random_range(1..=3));
        let a = random_array(&mut r, dims, ch, nl);
        let v = r.random_range(0..a.vertex_count());
        let pos = a.vertex_position(v);
        let got = a.interpolate(&pos[..a.dims()]).unwrap();
        for (ch, g) in got.iter().enumerate() {
            let want = nl.apply(a.cells()[v * a.channels() + ch]);
            prop_assert!((g - want).abs() <= 1e-14 * want.abs().max(1.0), "{} vs {}", g, want);
        }
    }

    #[test]
    fn quantized_cells_within_one_step(seed in 0u64..10_000, periodic in proptest::bool::ANY) {
        let mut r = rng(seed);
        let nl = if periodic { Nonlinearity::Triangle } else { Nonlinearity::None };
        let shape = [r.random_range(2..=6), r.random_range(2..=6)];
        let ch = r.random_range(1..=3);
        let cells: Vec<f32> = (0..shape[0] * shape[1] * ch).map(|_| r.random_range(-4.0f32..4.0)).collect();
        let a = GridArray::from_cells(&shape, ch, nl, cells).unwrap();
        let baked = a.bake_nonlinearity();
        let q = a.quantize8();
        let qz = q.quantization().unwrap();
        for (i, (orig, deq)) in baked.cells().iter().zip(q.cells()).enumerate() {
            let step = qz.scales[i % ch] / 255.0;
            prop_assert!((orig - deq).abs() <= step * 0.5 + 1e-6, "{} vs {}", orig, deq);
        }
    }
}
