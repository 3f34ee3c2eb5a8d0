use std::f64::consts::PI;

use bubbly::greens::{green, green_grad, green_static_correction, GreensMethod, GreensParams, C64};
use bubbly::lattice::{Lattice, QuasiMomentum, Vec2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random `(alpha, k, x)` with `k` below the first lattice resonance
/// `min_q |alpha + q|` and `x` away from the lattice.
fn draw(lat: &Lattice, rng: &mut ChaCha8Rng) -> (QuasiMomentum, f64, Vec2) {
    loop {
        let alpha = QuasiMomentum::from_vec(lat.a1 * rng.random_range(0.02..0.98) + lat.a2 * rng.random_range(0.02..0.98));
        let first = (-2..=2)
            .flat_map(|m| (-2..=2).map(move |n| (m, n)))
            .map(|(m, n)| (alpha.vec() + lat.dual_point(m, n)).norm())
            .fold(f64::INFINITY, f64::min);
        let k = rng.random_range(0.0..0.95) * first;
        let x = lat.l1 * rng.random_range(0.05..0.95) + lat.l2 * rng.random_range(0.05..0.95);
        if lat.distance_to_lattice(x) > 0.05 && first > 0.1 {
            return (alpha, k, x);
        }
    }
}

#[test]
fn spectral_and_ewald_agree_on_random_draws() {
    for lat in [Lattice::honeycomb(1.0).unwrap(), Lattice::square(1.0).unwrap()] {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let (alpha, k, x) = draw(&lat, &mut rng);
            let p = GreensParams::new(lat, alpha, k);
            let e = green(&p, x).unwrap();
            let s = green(&p.with_method(GreensMethod::Spectral), x).unwrap();
            worst = worst.max((e - s).norm());
        }
        assert!(worst <= 1e-8, "{:?}: {worst:e}", lat.kind);
    }
}

#[test]
fn reference_point_agreement() {
    let lat = Lattice::honeycomb(1.0).unwrap();
    let p = GreensParams::new(lat, lat.dirac_point(), 0.5);
    let x = Vec2::new(0.31, 0.17);
    let e = green(&p, x).unwrap();
    let s = green(&p.with_method(GreensMethod::Spectral), x).unwrap();
    assert!((e - s).norm() <= 1e-8);
}

#[test]
fn doubling_the_spectral_truncation() {
    let lat = Lattice::honeycomb(1.0).unwrap();
    let mut p = GreensParams::new(lat, QuasiMomentum::new(1.7, 0.6), 0.9).with_method(GreensMethod::Spectral);
    let x = Vec2::new(0.45, -0.2);
    p.spectral_radius = Some(40);
    let a = green(&p, x).unwrap();
    p.spectral_radius = Some(80);
    let b = green(&p, x).unwrap();
    p.spectral_radius = None;
    let auto = green(&p, x).unwrap();
    assert!((a - b).norm() <= 1e-9, "{a} {b}");
    assert!((auto - b).norm() <= 1e-9, "{auto} {b}");
}

#[test]
fn gradient_matches_finite_differences() {
    let lat = Lattice::honeycomb(1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-5;
    for _ in 0..50 {
        let (alpha, k, x) = draw(&lat, &mut rng);
        let p = GreensParams::new(lat, alpha, k);
        let g = green_grad(&p, x).unwrap();
        let dx = (green(&p, x + Vec2::new(h, 0.0)).unwrap() - green(&p, x - Vec2::new(h, 0.0)).unwrap()) / (2.0 * h);
        let dy = (green(&p, x + Vec2::new(0.0, h)).unwrap() - green(&p, x - Vec2::new(0.0, h)).unwrap()) / (2.0 * h);
        let norm = (g[0].norm_sqr() + g[1].norm_sqr()).sqrt();
        let err = ((dx - g[0]).norm_sqr() + (dy - g[1]).norm_sqr()).sqrt();
        assert!(err <= 1e-6 * norm, "{err:e} vs {norm:e}");
    }
}

#[test]
fn static_gradient_is_curl_free() {
    // circulation of grad G around a square loop that avoids the lattice
    let lat = Lattice::honeycomb(1.0).unwrap();
    let p = GreensParams::new(lat, QuasiMomentum::new(1.2, 2.1), 0.0);
    let (c, r) = (Vec2::new(0.5, 0.1), 0.2);
    let n = 400;
    let corners = [Vec2::new(-r, -r), Vec2::new(r, -r), Vec2::new(r, r), Vec2::new(-r, r)];
    let mut circ = C64::new(0.0, 0.0);
    let (nodes, weights) = gauss_legendre(n);
    for s in 0..4 {
        let (a, b) = (c + corners[s], c + corners[(s + 1) % 4]);
        let d = b - a;
        for (t, w) in nodes.iter().zip(&weights) {
            let g = green_grad(&p, a + d * (0.5 * (t + 1.0))).unwrap();
            circ += (g[0] * d.x + g[1] * d.y) * (0.5 * w);
        }
    }
    assert!(circ.norm() <= 1e-8, "{circ}");
}

fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                let (mut q0, mut q1) = (1.0, z);
                for k in 2..=n {
                    let q2 = ((2 * k - 1) as f64 * z * q1 - (k - 1) as f64 * q0) / k as f64;
                    q0 = q1;
                    q1 = q2;
                }
                let dq = n as f64 * (z * q1 - q0) / (z * z - 1.0);
                x[i] = z;
                w[i] = 2.0 / ((1.0 - z * z) * dq * dq);
                break;
            }
        }
    }
    (x, w)
}

#[test]
fn small_k_expansion_has_quartic_remainder() {
    let lat = Lattice::honeycomb(1.0).unwrap();
    let alpha = QuasiMomentum::new(1.4, 0.9);
    let x = Vec2::new(0.37, 0.21);
    let g0 = green(&GreensParams::new(lat, alpha, 0.0), x).unwrap();
    let g1 = green_static_correction(&lat, alpha, x).unwrap();
    let rem = |k: f64| (green(&GreensParams::new(lat, alpha, k), x).unwrap() - g0 - g1 * (k * k)).norm();
    let (ka, kb) = (1e-1, 1e-2);
    let order = (rem(ka) / rem(kb)).log10() / (ka / kb).log10();
    assert!((order - 4.0).abs() < 0.1, "remainder order {order}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn quasi_periodicity(s in 0.05f64..0.95, t in 0.05f64..0.95, u in 0.1f64..0.9, v in 0.1f64..0.9, k in 0.0f64..0.5, m in -2i64..=2, n in -2i64..=2) {
        let lat = Lattice::honeycomb(1.0).unwrap();
        let alpha = QuasiMomentum::from_vec(lat.a1 * s + lat.a2 * t);
        let p = GreensParams::new(lat, alpha, k);
        let x = lat.l1 * u + lat.l2 * v;
        let l = lat.point(m, n);
        prop_assume!(lat.distance_to_lattice(x) > 0.05);
        let g = green(&p, x).unwrap();
        let gl = green(&p, x + l).unwrap();
        let phase = C64::from_polar(1.0, alpha.vec().dot(&l));
        prop_assert!((gl - phase * g).norm() <= 1e-9 * g.norm().max(1.0));
        let d = green_grad(&p, x).unwrap();
        let dl = green_grad(&p, x + l).unwrap();
        prop_assert!((dl[0] - phase * d[0]).norm() <= 1e-9 * (d[0].norm() + d[1].norm()).max(1.0));
        prop_assert!((dl[1] - phase * d[1]).norm() <= 1e-9 * (d[0].norm() + d[1].norm()).max(1.0));
        let c = green_static_correction(&lat, alpha, x).unwrap();
        let cl = green_static_correction(&lat, alpha, x + l).unwrap();
        prop_assert!((cl - phase * c).norm() <= 1e-9 * c.norm().max(1.0));
    }

    #[test]
    fn reflection_flips_quasi_momentum(s in 0.05f64..0.95, t in 0.05f64..0.95, u in 0.1f64..0.9, v in 0.1f64..0.9, k in 0.0f64..0.5) {
        let lat = Lattice::honeycomb(1.0).unwrap();
        let alpha = QuasiMomentum::from_vec(lat.a1 * s + lat.a2 * t);
        let minus = QuasiMomentum::from_vec(-alpha.vec());
        let x = lat.l1 * u + lat.l2 * v;
        prop_assume!(lat.distance_to_lattice(x) > 0.05);
        let a = green(&GreensParams::new(lat, alpha, k), -x).unwrap();
        let b = green(&GreensParams::new(lat, minus, k), x).unwrap();
        prop_assert!((a - b).norm() <= 1e-10 * b.norm().max(1.0));
        let c = green_static_correction(&lat, minus, -x).unwrap();
        let d = green_static_correction(&lat, alpha, x).unwrap();
        prop_assert!((c - d).norm() <= 1e-10 * d.norm().max(1.0));
    }
}
