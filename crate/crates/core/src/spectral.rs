//! Capacitance matrices, characteristic values and the Dirac cone.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::boundary::{indicator_rhs, BoundaryBasis};
use crate::error::{Error, Result};
use crate::greens::C64;
use crate::lattice::{BzPath, LatticeKind, QuasiMomentum, Vec2};
use crate::operators::{LayerOperator, Material, OperatorFamily};
use crate::optimize::{fit_line, fit_quadratic, minimize_bracketed};

/// Largest accepted condition number of the static single layer matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Wavenumber range (times `1/L`) covered by the kernel tables of band searches.
pub const SUBWAVELENGTH_K: f64 = PI;

/// `C_ij = -int_{dD_j} psi_i`, one row/column per bubble.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacitanceMatrix {
    pub matrix: DMatrix<C64>,
    pub alpha: QuasiMomentum,
}

impl CapacitanceMatrix {
    pub fn c11(&self) -> C64 {
        self.matrix[(0, 0)]
    }

    pub fn c12(&self) -> C64 {
        self.entry(0, 1)
    }

    pub fn c21(&self) -> C64 {
        self.entry(1, 0)
    }

    pub fn c22(&self) -> C64 {
        self.entry(1, 1)
    }

    fn entry(&self, i: usize, j: usize) -> C64 {
        if i < self.matrix.nrows() && j < self.matrix.ncols() {
            self.matrix[(i, j)]
        } else {
            C64::new(0.0, 0.0)
        }
    }

    pub fn c1(&self) -> f64 {
        self.c11().re
    }

    pub fn c2(&self) -> C64 {
        self.c12()
    }

    /// Ascending eigenvalues `c1 -+ |c2|` (a single value for one bubble).
    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.matrix.nrows() == 1 {
            return vec![self.c1()];
        }
        let c1 = 0.5 * (self.c11().re + self.c22().re);
        let r = self.c12().norm();
        vec![c1 - r, c1 + r]
    }
}

/// Densities `psi_j` with `S^{alpha,0}[psi_j] = chi_{dD_j}`.
pub fn solve_psi(basis: &BoundaryBasis, alpha: QuasiMomentum) -> Result<Vec<DVector<C64>>> {
    let family = OperatorFamily::new(basis, alpha, 0.0)?;
    let (s, _) = family.layer_pair(0.0)?;
    solve_psi_with(basis, &s)
}

pub fn solve_psi_with(basis: &BoundaryBasis, s0: &LayerOperator) -> Result<Vec<DVector<C64>>> {
    let sv = s0.matrix.singular_values();
    let (mx, mn) = sv.iter().fold((0.0f64, f64::INFINITY), |(a, b), &v| (a.max(v), b.min(v)));
    let cond = mx / mn;
    if !(cond < MAX_CONDITION) {
        return Err(Error::IllConditioned(cond));
    }
    let lu = s0.matrix.clone().lu();
    (0..basis.n_bubbles())
        .map(|j| {
            let rhs = indicator_rhs(basis, j)?;
            lu.solve(&rhs).ok_or(Error::IllConditioned(f64::INFINITY))
        })
        .collect()
}

pub fn capacitance_from_psi(basis: &BoundaryBasis, alpha: QuasiMomentum, psi: &[DVector<C64>]) -> CapacitanceMatrix {
    let nb = basis.n_bubbles();
    let matrix = DMatrix::from_fn(nb, nb, |i, j| -basis.integrate(&psi[i], j));
    CapacitanceMatrix { matrix, alpha }
}

pub fn capacitance(basis: &BoundaryBasis, alpha: QuasiMomentum) -> Result<CapacitanceMatrix> {
    let psi = solve_psi(basis, alpha)?;
    Ok(capacitance_from_psi(basis, alpha, &psi))
}

pub fn capacitance_in(family: &OperatorFamily) -> Result<CapacitanceMatrix> {
    let (s, _) = family.layer_pair(0.0)?;
    let psi = solve_psi_with(family.basis(), &s)?;
    Ok(capacitance_from_psi(family.basis(), family.alpha(), &psi))
}

/// Leading-order band frequencies `sqrt(delta lambda_j / |D_1|) v_b`, ascending.
pub fn asymptotic_bands(cap: &CapacitanceMatrix, material: &Material, bubble_area: f64) -> Result<Vec<f64>> {
    let delta = material.delta();
    cap.eigenvalues()
        .into_iter()
        .map(|l| {
            if l < 0.0 {
                Err(Error::NegativeCapacitance(l))
            } else {
                Ok((delta * l / bubble_area).sqrt() * material.v_b())
            }
        })
        .collect()
}

/// Dirac-point data of the honeycomb crystal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiracData {
    pub alpha_star: QuasiMomentum,
    /// Leading-order Dirac frequency `sqrt(delta c1 / |D_1|) v_b`.
    pub omega_star: f64,
    pub c1: f64,
    /// `|c2(alpha*)| / c1`.
    pub c2_ratio: f64,
    /// `c = d conj(c2) / d alpha_1` at `alpha*`.
    pub c_dirac: C64,
    pub lambda0: f64,
    /// `sqrt(delta) lambda0 |c|`.
    pub slope: f64,
    /// `|grad c1(alpha*)| / |c|`.
    pub grad_c1_ratio: f64,
    /// `|d_2 c2 / d_1 c2 - i|`.
    pub pattern_deviation: f64,
    pub step: f64,
}

/// `lambda0 = (1/2) sqrt(v_b^2 / (|D_1| c1))`.
pub fn lambda0(c1: f64, bubble_area: f64, v_b: f64) -> f64 {
    0.5 * (v_b * v_b / (bubble_area * c1)).sqrt()
}

fn central_difference<F: FnMut(Vec2) -> Result<CapacitanceMatrix>>(
    cap_at: &mut F,
    center: Vec2,
    dir: Vec2,
    h: f64,
) -> Result<(C64, C64)> {
    let cp = cap_at(center + dir * h)?;
    let cm = cap_at(center - dir * h)?;
    Ok(((cp.c11() - cm.c11()) / (2.0 * h), (cp.c12() - cm.c12()) / (2.0 * h)))
}

/// Capacitance derivatives at the Dirac point by Richardson-extrapolated
/// central differences with step `h` (and `h/2`).
pub fn dirac_velocity(basis: &BoundaryBasis, material: &Material, h: f64) -> Result<DiracData> {
    let lattice = basis.lattice;
    if lattice.kind != LatticeKind::Honeycomb {
        return Err(Error::InvalidParameter("the Dirac velocity is defined for the honeycomb lattice".into()));
    }
    let alpha_star = lattice.dirac_point();
    let a = alpha_star.norm();
    if !(h >= 1e-5 * a && h <= 1e-2 * a) {
        return Err(Error::InvalidParameter(format!("step h = {h} outside [1e-5, 1e-2] |alpha*|")));
    }
    let center = alpha_star.vec();
    let mut cap_at = |v: Vec2| capacitance(basis, QuasiMomentum::from_vec(v));
    let mut grad = |dir: Vec2| -> Result<(C64, C64)> {
        let (c1h, c2h) = central_difference(&mut cap_at, center, dir, h)?;
        let (c1q, c2q) = central_difference(&mut cap_at, center, dir, 0.5 * h)?;
        Ok(((4.0 * c1q - c1h) / 3.0, (4.0 * c2q - c2h) / 3.0))
    };
    let (d1c1, d1c2) = grad(Vec2::new(1.0, 0.0))?;
    let (d2c1, d2c2) = grad(Vec2::new(0.0, 1.0))?;
    let cap = capacitance(basis, alpha_star)?;
    let c1 = cap.c1();
    if c1 <= 0.0 {
        return Err(Error::NegativeCapacitance(c1));
    }
    let c_dirac = d1c2.conj();
    let pattern_deviation = (d2c2 / d1c2 - C64::new(0.0, 1.0)).norm();
    if !(pattern_deviation <= 1e-2) {
        return Err(Error::PatternMismatch(pattern_deviation));
    }
    let area = PI * basis.radius * basis.radius;
    let l0 = lambda0(c1, area, material.v_b());
    let delta = material.delta();
    Ok(DiracData {
        alpha_star,
        omega_star: (delta * c1 / area).sqrt() * material.v_b(),
        c1,
        c2_ratio: cap.c2().norm() / c1,
        c_dirac,
        lambda0: l0,
        slope: delta.sqrt() * l0 * c_dirac.norm(),
        grad_c1_ratio: (d1c1.norm_sqr() + d2c1.norm_sqr()).sqrt() / c_dirac.norm(),
        pattern_deviation,
        step: h,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicValue {
    pub omega: f64,
    /// `sigma_min / sigma_max` of the equilibrated block operator at `omega`.
    pub residual: f64,
    /// Number of singular values with ratio below the tolerance.
    pub multiplicity: usize,
    pub evaluations: usize,
}

fn sigma_ratio(family: &OperatorFamily, material: &Material, omega: f64) -> Result<f64> {
    Ok(family.block(material, omega)?.probe().ratio())
}

/// Local minimizer of `sigma_min / sigma_max` inside `[lo, hi]`.
pub fn characteristic_in(
    family: &OperatorFamily,
    material: &Material,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<CharacteristicValue> {
    let rel = (1e-3 * tol).max(1e-13);
    let min = minimize_bracketed(
        |w| sigma_ratio(family, material, w).map(|s| s * s),
        lo,
        hi,
        rel,
        1e-15,
        200,
    )?;
    let probe = family.block(material, min.x)?.probe();
    let residual = probe.ratio();
    let edge = 4.0 * (rel * min.x.abs() + 1e-15);
    if residual > tol || min.x - lo.min(hi) < edge || lo.max(hi) - min.x < edge {
        return Err(Error::NotFound { lo, hi });
    }
    let smax = probe.sigma_max();
    let multiplicity = probe.singular_values.iter().filter(|&&s| s <= tol * smax).count();
    Ok(CharacteristicValue { omega: min.x, residual, multiplicity, evaluations: min.evaluations + 1 })
}

/// `(omega, sigma_min / sigma_max)` on `n + 1` equispaced frequencies in
/// `[lo, hi]`. A characteristic value shows up as a dip towards zero.
pub fn sigma_ratio_profile(
    basis: &BoundaryBasis,
    material: &Material,
    alpha: QuasiMomentum,
    lo: f64,
    hi: f64,
    n: usize,
) -> Result<Vec<(f64, f64)>> {
    if !(lo > 0.0 && hi > lo) || n == 0 {
        return Err(Error::InvalidParameter(format!("window [{lo}, {hi}] with {n} steps")));
    }
    let family = OperatorFamily::new(basis, alpha, hi / material.v().min(material.v_b()))?;
    (0..=n)
        .map(|i| {
            let w = lo + (hi - lo) * i as f64 / n as f64;
            sigma_ratio(&family, material, w).map(|r| (w, r))
        })
        .collect()
}

/// Interior local minima of a profile (candidate characteristic values).
pub fn profile_dips(profile: &[(f64, f64)]) -> Vec<(f64, f64)> {
    profile
        .windows(3)
        .filter(|w| w[1].1 < w[0].1 && w[1].1 <= w[2].1)
        .map(|w| w[1])
        .collect()
}

/// Characteristic value near `omega_guess` (assumed within 30%).
///
/// A coarse scan over `[0.7, 1.3] omega_guess` locates the deepest dip, which
/// is then refined.
pub fn find_characteristic(
    basis: &BoundaryBasis,
    material: &Material,
    alpha: QuasiMomentum,
    omega_guess: f64,
    tol: f64,
) -> Result<CharacteristicValue> {
    material.validate()?;
    if !(omega_guess > 0.0) {
        return Err(Error::InvalidParameter(format!("omega guess {omega_guess}")));
    }
    let (lo, hi) = (0.7 * omega_guess, 1.3 * omega_guess);
    let family = OperatorFamily::new(basis, alpha, hi / material.v().min(material.v_b()))?;
    let n = 24;
    let grid: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let vals = grid
        .iter()
        .map(|&w| sigma_ratio(&family, material, w))
        .collect::<Result<Vec<_>>>()?;
    let best = (0..vals.len()).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(n)];
    let mut cv = characteristic_in(&family, material, a, b, tol)?;
    cv.evaluations += vals.len();
    Ok(cv)
}

/// Characteristic values bracketed around ascending `guesses`; nearly equal
/// guesses are treated as one possibly degenerate root.
pub fn characteristic_values_near(
    family: &OperatorFamily,
    material: &Material,
    guesses: &[f64],
    tol: f64,
) -> Vec<Result<CharacteristicValue>> {
    let n = guesses.len();
    let mut out: Vec<Option<Result<CharacteristicValue>>> = (0..n).map(|_| None).collect();
    for j in 0..n {
        if out[j].is_some() {
            continue;
        }
        let result = characteristic_value_near(family, material, guesses, j, tol);
        if is_degenerate(guesses, j) {
            out[j + 1] = Some(match &result {
                Ok(cv) if cv.multiplicity >= 2 => Ok(*cv),
                Ok(cv) => Err(Error::NotFound { lo: cv.omega, hi: cv.omega }),
                Err(_) => Err(Error::NotFound { lo: guesses[j], hi: guesses[j + 1] }),
            });
        }
        out[j] = Some(result);
    }
    out.into_iter().map(|r| r.unwrap()).collect()
}

fn is_degenerate(guesses: &[f64], j: usize) -> bool {
    j + 1 < guesses.len() && guesses[j + 1] - guesses[j] <= 1e-9 * guesses[j]
}

/// The characteristic value seeded by `guesses[j]`, bracketed so that the
/// neighbouring guesses stay outside.
pub fn characteristic_value_near(
    family: &OperatorFamily,
    material: &Material,
    guesses: &[f64],
    j: usize,
    tol: f64,
) -> Result<CharacteristicValue> {
    let n = guesses.len();
    let g = guesses[j];
    let mut gap = f64::INFINITY;
    if j > 0 && !is_degenerate(guesses, j - 1) {
        gap = gap.min(g - guesses[j - 1]);
    }
    if j + 1 < n && !is_degenerate(guesses, j) {
        gap = gap.min(guesses[j + 1] - g);
    }
    let mut width = if gap.is_finite() { (0.45 * gap).min(0.02 * g) } else { 0.02 * g };
    let mut result = Err(Error::NotFound { lo: g - width, hi: g + width });
    for _ in 0..4 {
        result = characteristic_in(family, material, g - width, g + width, tol);
        if result.is_ok() {
            break;
        }
        width *= 2.0;
        if gap.is_finite() && width > 0.95 * gap {
            break;
        }
    }
    result
}

/// Band values along a path of quasi-momenta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStructure {
    pub path: Vec<QuasiMomentum>,
    pub arclength: Vec<f64>,
    /// `omega[b][i]`: band `b` at path point `i`; `NaN` marks a failed point.
    pub omega: Vec<Vec<f64>>,
    pub residual: Vec<Vec<f64>>,
    pub omega_asymptotic: Vec<Vec<f64>>,
    /// Indices of path points where some band could not be resolved.
    pub failures: Vec<usize>,
    /// Points at `alpha = 0` (mod the dual lattice), where the quasi-periodic
    /// kernel is undefined; they are neither solved nor counted as failures.
    pub excluded: Vec<usize>,
}

impl BandStructure {
    pub fn n_bands(&self) -> usize {
        self.omega.len()
    }

    pub fn failure_fraction(&self) -> f64 {
        let solved = self.path.len() - self.excluded.len();
        if solved == 0 {
            0.0
        } else {
            self.failures.len() as f64 / solved as f64
        }
    }
}

/// Sub-wavelength bands at one quasi-momentum, seeded by the capacitance
/// asymptotics shifted by `shift` (one entry per band).
pub fn bands_at(
    basis: &BoundaryBasis,
    material: &Material,
    alpha: QuasiMomentum,
    shift: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, Vec<Result<CharacteristicValue>>)> {
    let area = PI * basis.radius * basis.radius;
    let k_scale = 1.0 / material.v().min(material.v_b());
    let family = OperatorFamily::new(basis, alpha, SUBWAVELENGTH_K / basis.lattice.constant)?;
    let cap = capacitance_in(&family)?;
    let asym = asymptotic_bands(&cap, material, area)?;
    let guesses: Vec<f64> = asym.iter().zip(shift).map(|(a, s)| a + s).collect();
    if guesses.iter().any(|&g| g * k_scale > family.k_max()) {
        return Err(Error::InvalidParameter("band guess above the kernel table range".into()));
    }
    let roots = characteristic_values_near(&family, material, &guesses, tol);
    Ok((asym, roots))
}

/// One band at `alpha`, seeded like [`bands_at`].
pub fn band_at(
    basis: &BoundaryBasis,
    material: &Material,
    alpha: QuasiMomentum,
    band: usize,
    shift: &[f64],
    tol: f64,
) -> Result<CharacteristicValue> {
    let area = PI * basis.radius * basis.radius;
    let family = OperatorFamily::new(basis, alpha, SUBWAVELENGTH_K / basis.lattice.constant)?;
    let cap = capacitance_in(&family)?;
    let asym = asymptotic_bands(&cap, material, area)?;
    if band >= asym.len() {
        return Err(Error::InvalidParameter(format!("band {band} out of range")));
    }
    let guesses: Vec<f64> = asym.iter().zip(shift).map(|(a, s)| a + s).collect();
    if guesses[band] / material.v().min(material.v_b()) > family.k_max() {
        return Err(Error::InvalidParameter("band guess above the kernel table range".into()));
    }
    characteristic_value_near(&family, material, &guesses, band, tol)
}

/// Band sweep along `path` with continuation of the asymptotic offset.
pub fn band_sweep(basis: &BoundaryBasis, material: &Material, path: &BzPath, tol: f64) -> Result<BandStructure> {
    if path.points.is_empty() {
        return Err(Error::InvalidParameter("empty path".into()));
    }
    let nb = basis.n_bubbles();
    let np = path.points.len();
    let mut omega = vec![vec![f64::NAN; np]; nb];
    let mut residual = vec![vec![f64::NAN; np]; nb];
    let mut asym_out = vec![vec![f64::NAN; np]; nb];
    let mut failures = Vec::new();
    let mut excluded = Vec::new();
    let mut shift = vec![0.0; nb];
    for (i, &alpha) in path.points.iter().enumerate() {
        if alpha.reduce(&basis.lattice).is_zero(1e-12) {
            excluded.push(i);
            continue;
        }
        let (asym, roots) = match bands_at(basis, material, alpha, &shift, tol) {
            Ok(r) => r,
            Err(_) => {
                failures.push(i);
                continue;
            }
        };
        let mut failed = false;
        for b in 0..nb {
            asym_out[b][i] = asym[b];
            match &roots[b] {
                Ok(cv) => {
                    omega[b][i] = cv.omega;
                    residual[b][i] = cv.residual;
                    shift[b] = cv.omega - asym[b];
                }
                Err(_) => failed = true,
            }
        }
        // keep the bands ordered by value
        if nb == 2 && omega[0][i] > omega[1][i] {
            let (a, b) = (omega[0][i], omega[1][i]);
            omega[0][i] = b;
            omega[1][i] = a;
            let (ra, rb) = (residual[0][i], residual[1][i]);
            residual[0][i] = rb;
            residual[1][i] = ra;
        }
        if failed {
            failures.push(i);
        }
    }
    Ok(BandStructure {
        path: path.points.clone(),
        arclength: path.arclength.clone(),
        omega,
        residual,
        omega_asymptotic: asym_out,
        failures,
        excluded,
    })
}

/// Exact Dirac frequency (double characteristic value at `alpha*`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiracFrequency {
    pub omega: f64,
    pub omega_asymptotic: f64,
    pub residual: f64,
    pub multiplicity: usize,
    /// `|omega_1 - omega_2|` at `alpha*` when two roots are resolved.
    pub split: f64,
}

/// Solve for the characteristic value(s) at the Dirac point (honeycomb) or
/// at `M` (square).
pub fn dirac_frequency(basis: &BoundaryBasis, material: &Material, tol: f64) -> Result<DiracFrequency> {
    let alpha = basis.lattice.dirac_point();
    let nb = basis.n_bubbles();
    let (asym, roots) = bands_at(basis, material, alpha, &vec![0.0; nb], tol)?;
    let first = roots[0].as_ref().map_err(|_| Error::NotFound { lo: asym[0], hi: asym[0] })?;
    let split = if nb == 2 {
        match &roots[1] {
            Ok(cv) => (cv.omega - first.omega).abs(),
            Err(_) => f64::NAN,
        }
    } else {
        0.0
    };
    Ok(DiracFrequency {
        omega: first.omega,
        omega_asymptotic: asym[0],
        residual: first.residual,
        multiplicity: first.multiplicity,
        split,
    })
}

/// Bands along the ray `alpha* + t (cos theta, sin theta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeSamples {
    pub theta: f64,
    pub radii: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower_asymptotic: Vec<f64>,
    pub upper_asymptotic: Vec<f64>,
}

pub fn cone_samples(
    basis: &BoundaryBasis,
    material: &Material,
    dirac: &DiracFrequency,
    theta: f64,
    radii: &[f64],
    tol: f64,
) -> Result<ConeSamples> {
    let alpha_star = basis.lattice.dirac_point();
    let dir = Vec2::new(theta.cos(), theta.sin());
    let shift = dirac.omega - dirac.omega_asymptotic;
    let mut out = ConeSamples {
        theta,
        radii: radii.to_vec(),
        lower: Vec::new(),
        upper: Vec::new(),
        lower_asymptotic: Vec::new(),
        upper_asymptotic: Vec::new(),
    };
    for &t in radii {
        let alpha = alpha_star.offset(dir, t);
        let (asym, roots) = bands_at(basis, material, alpha, &[shift, shift], tol)?;
        let lo = roots[0].as_ref().map_err(|_| Error::NotFound { lo: asym[0], hi: asym[1] })?;
        let hi = roots[1].as_ref().map_err(|_| Error::NotFound { lo: asym[0], hi: asym[1] })?;
        out.lower.push(lo.omega.min(hi.omega));
        out.upper.push(lo.omega.max(hi.omega));
        out.lower_asymptotic.push(asym[0]);
        out.upper_asymptotic.push(asym[1]);
    }
    Ok(out)
}

/// Result of fitting the two cone branches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiracFit {
    pub omega_star_fit: f64,
    /// Linear coefficients of `omega_2 - omega*` and `omega* - omega_1`.
    pub slope_plus: f64,
    pub slope_minus: f64,
    /// Quadratic coefficients of the same fits.
    pub curvature_plus: f64,
    pub curvature_minus: f64,
    /// `R^2` of straight-line fits of each branch.
    pub r2_plus: f64,
    pub r2_minus: f64,
}

/// Fit `omega_{1,2}(t) = omega* -+ s t + b t^2` on each branch.
///
/// The slope is the linear coefficient; the quadratic term absorbs the
/// `O(t)` relative correction of the cone. Linearity is judged by the
/// `R^2` of a straight-line fit.
pub fn dirac_fit(radii: &[f64], lower: &[f64], upper: &[f64]) -> Result<DiracFit> {
    if radii.len() < 5 || lower.len() != radii.len() || upper.len() != radii.len() {
        return Err(Error::BadFit(format!("need at least 5 radii per branch, got {}", radii.len())));
    }
    let up = fit_quadratic(radii, upper)?;
    let lo = fit_quadratic(radii, lower)?;
    let lin_up = fit_line(radii, upper)?;
    let lin_lo = fit_line(radii, lower)?;
    let fit = DiracFit {
        omega_star_fit: 0.5 * (up[0] + lo[0]),
        slope_plus: up[1],
        slope_minus: -lo[1],
        curvature_plus: up[2],
        curvature_minus: lo[2],
        r2_plus: lin_up.r2,
        r2_minus: lin_lo.r2,
    };
    if fit.r2_plus < 0.999 || fit.r2_minus < 0.999 {
        return Err(Error::BadFit(format!(
            "branches are not conical: R^2 = {:.6}, {:.6}",
            fit.r2_plus, fit.r2_minus
        )));
    }
    Ok(fit)
}
