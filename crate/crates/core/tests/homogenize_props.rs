mod common;

use std::f64::consts::PI;

use bubbly::fields::{eval_points, kernel_densities, BlochField};
use bubbly::greens::C64;
use bubbly::homogenize::{
    dirac_eigenpairs, effective_wavenumber, envelope_fft_for, envelope_frequency_dispersion,
    envelope_frequency_fft, f_curve, fit_curve, sampling_line, DiracSystem, EnvelopeProblem, FitModel,
};
use bubbly::lattice::{LatticeKind, Vec2};
use bubbly::spectral::dirac_velocity;
use bubbly::Error;
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn honeycomb_problem() -> (EnvelopeProblem, DiracSystem) {
    let (lat, basis, material) = common::honeycomb();
    let data = dirac_velocity(&basis, &material, 1e-3 * lat.dirac_point().norm()).unwrap();
    (EnvelopeProblem::new(&basis, &material, Vec2::new(1.0, 0.0), TOL).unwrap(), DiracSystem::from_dirac(&data))
}

fn slope_theory(sys: &DiracSystem, delta: f64) -> f64 {
    1.0 / (2.0 * PI * sys.c.norm() * sys.lambda0 * delta.sqrt())
}

#[test]
fn eigenpairs_along_the_first_axis() {
    let sys = DiracSystem::new(0.5, C64::new(0.3, -1.2));
    let pairs = dirac_eigenpairs(&sys, Vec2::new(1.0, 0.0));
    let s = 0.5 * sys.c.norm();
    assert!((pairs.values[0] + s).abs() < 1e-15 && (pairs.values[1] - s).abs() < 1e-15);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let e = C64::from_polar(1.0, sys.theta_c());
    assert!((pairs.vectors[1][0] - e * h).norm() < 1e-15 && (pairs.vectors[1][1] - h).norm() < 1e-15);
    assert!((pairs.vectors[0][0] + e * h).norm() < 1e-15);
    assert!(dirac_eigenpairs(&sys, Vec2::zeros()).degenerate);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn eigenpairs_diagonalize_the_model(x in -1.0f64..1.0, y in -1.0f64..1.0, re in -2.0f64..2.0, im in -2.0f64..2.0, l0 in 0.1f64..2.0) {
        let c = C64::new(re, im);
        prop_assume!(c.norm() > 1e-3 && x.hypot(y) > 1e-6);
        let sys = DiracSystem::new(l0, c);
        let t = Vec2::new(x, y);
        let m = sys.matrix(t);
        let pairs = dirac_eigenpairs(&sys, t);
        for b in 0..2 {
            let v = nalgebra::Vector2::new(pairs.vectors[b][0], pairs.vectors[b][1]);
            let r = m * v - v * C64::from(pairs.values[b]);
            prop_assert!(r.norm() <= 1e-12 * (1.0 + pairs.values[1]));
            prop_assert!((v.norm() - 1.0).abs() < 1e-12);
        }
        // rotating the offset keeps the spectrum; negating it flips the matrix
        let a = 0.7f64;
        let rot = Vec2::new(a.cos() * x - a.sin() * y, a.sin() * x + a.cos() * y);
        let rp = dirac_eigenpairs(&sys, rot);
        prop_assert!((rp.values[1] - pairs.values[1]).abs() <= 1e-12 * pairs.values[1]);
        prop_assert!((sys.matrix(-t) + m).norm() <= 1e-14);
    }

    #[test]
    fn effective_wavenumber_is_linear(beta in -10.0f64..10.0, s in 0.0f64..5.0) {
        let sys = DiracSystem::new(0.5, C64::new(0.0, -1.6));
        let k = effective_wavenumber(beta, &sys);
        prop_assert!(k >= 0.0);
        prop_assert!((effective_wavenumber(beta * s, &sys) - s * k).abs() <= 1e-12 * (1.0 + s * k));
        prop_assert!((effective_wavenumber(-beta, &sys) - k).abs() == 0.0);
    }

    #[test]
    fn fft_recovers_a_synthetic_envelope(f0 in 0.05f64..0.35, phase in 0.0f64..std::f64::consts::TAU, kappa in -3.0f64..3.0) {
        // periodic micro-structure times a slow plane wave
        let (cell, per_cell, cells) = (1.0f64, 8usize, 128usize);
        let h = cell / per_cell as f64;
        let samples: Vec<C64> = (0..cells * per_cell)
            .map(|i| {
                let x = i as f64 * h;
                let micro = C64::new(1.0 + 0.3 * (2.0 * PI * x / cell).cos(), 0.2 * (4.0 * PI * x / cell).sin());
                micro * C64::from_polar(1.0, kappa * x + 2.0 * PI * f0 * x + phase)
            })
            .collect();
        let est = envelope_frequency_fft(&samples, 0.0, cell, per_cell, kappa).unwrap();
        prop_assert!((est.f - f0).abs() <= 0.1 * est.bin, "{} vs {f0}", est.f);
    }
}

#[test]
fn fft_rejects_short_records() {
    let samples = vec![C64::new(1.0, 0.0); 8 * 32];
    assert!(envelope_frequency_fft(&samples, 0.0, 1.0, 8, 0.0).is_err());
    assert!(envelope_frequency_fft(&samples, 0.0, 1.0, 4, 0.0).is_err());
}

#[test]
fn honeycomb_envelope_near_the_dirac_frequency() {
    let (problem, sys) = honeycomb_problem();
    let delta = problem.material.delta();
    let theory = slope_theory(&sys, delta);

    let zero = envelope_frequency_dispersion(&problem, 0.0).unwrap();
    assert_eq!(zero.f, 0.0);

    let up = envelope_frequency_dispersion(&problem, 1e-3).unwrap();
    let down = envelope_frequency_dispersion(&problem, -1e-3).unwrap();
    assert_eq!((up.band, down.band), (1, 0));
    assert!((up.f / down.f - 1.0).abs() <= 0.02, "{}", up.f / down.f);
    for s in [up, down] {
        assert!((s.f / 1e-3 - theory).abs() <= 0.05 * theory);
        // homogenized wavenumber for beta = epsilon / sqrt(delta)
        let k = effective_wavenumber(s.epsilon / delta.sqrt(), &sys);
        assert!((2.0 * PI * s.f - k).abs() <= 0.05 * k);
    }

    // the branch asymmetry is first order in epsilon
    let up2 = envelope_frequency_dispersion(&problem, 2e-3).unwrap();
    let down2 = envelope_frequency_dispersion(&problem, -2e-3).unwrap();
    let (a1, a2) = (up.f / down.f - 1.0, up2.f / down2.f - 1.0);
    assert!((a2 / a1 - 2.0).abs() <= 0.3, "{a1:e} {a2:e}");

    // slowly varying envelope: a tiny shift keeps the phase almost flat over 100 cells
    let tiny = envelope_frequency_dispersion(&problem, 1e-4).unwrap();
    assert!(tiny.f * 100.0 * problem.basis.lattice.constant <= 0.1, "{}", tiny.f);
}

#[test]
fn fft_agrees_with_dispersion_inversion() {
    let (problem, _) = honeycomb_problem();
    let sol = envelope_frequency_dispersion(&problem, 8e-3).unwrap();
    let fft = envelope_fft_for(&problem, &sol, 64, 8).unwrap();
    assert!((fft.f - sol.f).abs() <= 2.0 * fft.bin, "{} vs {}", fft.f, sol.f);

    // at the Dirac point itself the envelope is flat
    let (origin, period) = sampling_line(&problem).unwrap();
    let at_k = kernel_densities(
        &problem.basis,
        &problem.material,
        problem.basis.lattice.dirac_point(),
        problem.critical.omega,
    )
    .unwrap();
    let field = BlochField::new(&problem.basis, &problem.material, &at_k).unwrap();
    let h = period / 8.0;
    let pts: Vec<Vec2> = (0..64 * 8).map(|i| origin + problem.direction * (0.5 * h + i as f64 * h)).collect();
    let vals: Vec<C64> = eval_points(&field, &pts).iter().map(|s| s.value).collect();
    let kappa = problem.basis.lattice.dirac_point().vec().dot(&problem.direction);
    let flat = envelope_frequency_fft(&vals, 0.5 * h, period, 8, kappa).unwrap();
    assert!(flat.f < flat.bin, "{} vs bin {}", flat.f, flat.bin);
}

#[test]
fn two_by_two_model_tracks_the_computed_cone() {
    let (problem, sys) = honeycomb_problem();
    let a = problem.basis.lattice.dirac_point().norm();
    let sd = problem.material.delta().sqrt();
    for frac in [1e-3, 2e-3, 5e-3, 1e-2, 2e-2] {
        let t = frac * a;
        let tilde = Vec2::new(t, 0.0);
        let model = dirac_eigenpairs(&sys, tilde);
        for band in 0..2 {
            let w = problem.band_omega(band, t).unwrap() - problem.critical.omega;
            let want = sd * model.values[band];
            assert!((w - want).abs() <= 0.05 * want.abs(), "{frac} band {band}: {w:e} vs {want:e}");
        }
    }
}

#[test]
fn square_lattice_envelope() {
    let (_, basis, material) = common::setup(LatticeKind::Square);
    let problem = EnvelopeProblem::new(&basis, &material, Vec2::new(1.0, 0.0), 1e-6).unwrap();
    assert!(matches!(problem.target(-1e-3), Err(Error::NotFound { .. })));
    assert!(matches!(envelope_frequency_dispersion(&problem, -1e-3), Err(Error::NotFound { .. })));
    let curve = f_curve(&problem, &[-2e-3, -1e-3, 1e-3, 4e-3], &[], 64, 8).unwrap();
    assert_eq!(curve.epsilons, vec![1e-3, 4e-3]);
    assert_eq!(curve.fit.model, FitModel::Sqrt);
    // f ~ sqrt(eps): quadrupling the shift doubles f
    assert!((curve.f[1] / curve.f[0] - 2.0).abs() <= 0.1, "{}", curve.f[1] / curve.f[0]);
    assert!(fit_curve(LatticeKind::Square, &[-1e-3, 1e-3], &[0.1, 0.1]).is_err());
}

#[test]
fn curve_fits_on_exact_laws() {
    let eps: Vec<f64> = (-10..=10).map(|i| i as f64 * 1e-3).collect();
    let f: Vec<f64> = eps.iter().map(|e| 6.0 * e.abs()).collect();
    let fit = fit_curve(LatticeKind::Honeycomb, &eps, &f).unwrap();
    assert!((fit.coefficient - 6.0).abs() < 1e-12 && fit.intercept.abs() < 1e-14 && (fit.r2 - 1.0).abs() < 1e-12);
    let pos: Vec<f64> = (1..=10).map(|i| i as f64 * 1e-3).collect();
    let g: Vec<f64> = pos.iter().map(|e| 2.0 * e.sqrt()).collect();
    let fit = fit_curve(LatticeKind::Square, &pos, &g).unwrap();
    assert!((fit.coefficient - 2.0).abs() < 1e-12 && (fit.r2 - 1.0).abs() < 1e-12);
}
