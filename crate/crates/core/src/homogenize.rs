//! Effective Dirac model near `alpha*`, envelope spatial frequencies and the
//! two homogenization laws (linear for honeycomb, square root for square).

use std::f64::consts::PI;

use nalgebra::Matrix2;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::boundary::BoundaryBasis;
use crate::error::{Error, Result};
use crate::fields::{eval_points, kernel_densities, BlochField};
use crate::greens::C64;
use crate::lattice::{LatticeKind, QuasiMomentum, Vec2};
use crate::operators::Material;
use crate::optimize::{fit_line, fit_scaled, root_bracketed};
use crate::spectral::{band_at, dirac_frequency, DiracData, DiracFrequency};

/// Which way `alpha~` winds in the off-diagonal entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// `c (a1 + i a2)` above the diagonal.
    #[default]
    Direct,
    /// `c (a1 - i a2)` above the diagonal (the mirror image).
    Mirrored,
}

/// `lambda0 [[0, c w], [conj(c w), 0]]` with `w = a1 +- i a2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiracSystem {
    pub lambda0: f64,
    pub c: C64,
    pub orientation: Orientation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiracEigenpairs {
    /// `(-lambda0 |c| |alpha~|, +lambda0 |c| |alpha~|)`.
    pub values: [f64; 2],
    /// `(A, B)` for each value, with `B = 1/sqrt 2`.
    pub vectors: [[C64; 2]; 2],
    /// Set at `alpha~ = 0`, where any orthonormal pair is returned.
    pub degenerate: bool,
}

impl DiracSystem {
    pub fn new(lambda0: f64, c: C64) -> Self {
        Self { lambda0, c, orientation: Orientation::Direct }
    }

    pub fn from_dirac(data: &DiracData) -> Self {
        Self::new(data.lambda0, data.c_dirac)
    }

    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.orientation = orientation;
        self
    }

    fn winding(&self, alpha_tilde: Vec2) -> C64 {
        match self.orientation {
            Orientation::Direct => C64::new(alpha_tilde.x, alpha_tilde.y),
            Orientation::Mirrored => C64::new(alpha_tilde.x, -alpha_tilde.y),
        }
    }

    pub fn matrix(&self, alpha_tilde: Vec2) -> Matrix2<C64> {
        let off = self.c * self.winding(alpha_tilde) * self.lambda0;
        Matrix2::new(C64::new(0.0, 0.0), off, off.conj(), C64::new(0.0, 0.0))
    }

    /// `theta_c = arg c`.
    pub fn theta_c(&self) -> f64 {
        self.c.arg()
    }
}

pub fn dirac_eigenpairs(system: &DiracSystem, alpha_tilde: Vec2) -> DiracEigenpairs {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let size = system.lambda0 * system.c.norm() * alpha_tilde.norm();
    let w = system.c * system.winding(alpha_tilde);
    if w.norm() == 0.0 {
        return DiracEigenpairs {
            values: [0.0, 0.0],
            vectors: [[C64::new(1.0, 0.0), C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]],
            degenerate: true,
        };
    }
    let phase = w / w.norm();
    DiracEigenpairs {
        values: [-size, size],
        vectors: [[-phase * h, C64::new(h, 0.0)], [phase * h, C64::new(h, 0.0)]],
        degenerate: false,
    }
}

/// `k_eff = |beta| / (|c| lambda0)`.
pub fn effective_wavenumber(beta: f64, system: &DiracSystem) -> f64 {
    beta.abs() / (system.c.norm() * system.lambda0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeMethod {
    DispersionInversion,
    FieldFft,
}

/// Band data near the critical point used to invert the dispersion along a
/// fixed direction.
#[derive(Debug, Clone)]
pub struct EnvelopeProblem {
    pub basis: BoundaryBasis,
    pub material: Material,
    pub critical: DiracFrequency,
    pub direction: Vec2,
    pub tol: f64,
}

/// Quasi-momentum offset solving `omega_band(alpha* + t e) = target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSolution {
    pub epsilon: f64,
    pub omega: f64,
    pub band: usize,
    pub t: f64,
    /// `t / 2pi`, cycles per unit length.
    pub f: f64,
    pub alpha: QuasiMomentum,
}

impl EnvelopeProblem {
    pub fn new(basis: &BoundaryBasis, material: &Material, direction: Vec2, tol: f64) -> Result<Self> {
        material.validate()?;
        let n = direction.norm();
        if !(n > 0.0) {
            return Err(Error::InvalidParameter("zero direction".into()));
        }
        let critical = dirac_frequency(basis, material, tol)?;
        Ok(Self { basis: basis.clone(), material: *material, critical, direction: direction / n, tol })
    }

    pub fn kind(&self) -> LatticeKind {
        self.basis.lattice.kind
    }

    fn shift(&self) -> f64 {
        self.critical.omega - self.critical.omega_asymptotic
    }

    /// Target frequency and band for a shift `epsilon`: `omega* + epsilon` on
    /// the honeycomb lattice, `omega* - epsilon` on the square lattice.
    pub fn target(&self, epsilon: f64) -> Result<(f64, usize)> {
        let w = self.critical.omega;
        match self.kind() {
            LatticeKind::Honeycomb => Ok((w + epsilon, usize::from(epsilon > 0.0))),
            LatticeKind::Square if epsilon >= 0.0 => Ok((w - epsilon, 0)),
            LatticeKind::Square => Err(Error::NotFound { lo: w, hi: w - epsilon }),
        }
    }

    pub fn alpha_at(&self, t: f64) -> QuasiMomentum {
        self.basis.lattice.dirac_point().offset(self.direction, t)
    }

    pub fn band_omega(&self, band: usize, t: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(self.critical.omega);
        }
        let nb = self.basis.n_bubbles();
        let shift = vec![self.shift(); nb];
        Ok(band_at(&self.basis, &self.material, self.alpha_at(t), band, &shift, self.tol)?.omega)
    }
}

/// Invert the band along the problem's direction: the smallest `t >= 0`
/// with `omega_band(t) = target`, found by bracketing and regula falsi.
pub fn envelope_frequency_dispersion(problem: &EnvelopeProblem, epsilon: f64) -> Result<EnvelopeSolution> {
    let (target, band) = problem.target(epsilon)?;
    let a = problem.basis.lattice.dirac_point().norm();
    if epsilon == 0.0 {
        return Ok(EnvelopeSolution { epsilon, omega: target, band, t: 0.0, f: 0.0, alpha: problem.alpha_at(0.0) });
    }
    let f0 = problem.critical.omega - target;
    let mut g = |t: f64| problem.band_omega(band, t).map(|w| w - target);
    // first guess from the local shape of the band
    let probe = 1e-2 * a;
    let dp = g(probe)? - f0;
    if dp == 0.0 || dp.signum() == f0.signum() {
        return Err(Error::NotFound { lo: problem.critical.omega, hi: target });
    }
    let ratio = (f0 / dp).abs();
    let guess = match problem.kind() {
        LatticeKind::Honeycomb => probe * ratio,
        LatticeKind::Square => probe * ratio.sqrt(),
    };
    let t_max = 0.5 * a;
    let (mut lo, mut flo) = (0.0, f0);
    let mut hi = (1.1 * guess).min(t_max);
    let mut fhi = g(hi)?;
    let mut steps = 0;
    while fhi.signum() == flo.signum() {
        steps += 1;
        if hi >= t_max || steps > 20 {
            return Err(Error::NotFound { lo: problem.critical.omega, hi: target });
        }
        lo = hi;
        flo = fhi;
        hi = (hi * 1.3).min(t_max);
        fhi = g(hi)?;
    }
    if lo == 0.0 {
        let mid = 0.8 * guess.min(hi);
        let fm = g(mid)?;
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    let t = root_bracketed(&mut g, lo, hi, flo, fhi, 1e-9 * a, 60)?;
    let omega = target;
    Ok(EnvelopeSolution { epsilon, omega, band, t, f: t / (2.0 * PI), alpha: problem.alpha_at(t) })
}

/// Dominant spatial frequency of a sampled line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FftEstimate {
    /// Cycles per unit length.
    pub f: f64,
    /// Width of one natural bin, `1 / (cells * cell_length)`.
    pub bin: f64,
    pub peak_to_median: f64,
}

const FFT_PADDING: usize = 64;

/// Envelope frequency of `samples`, taken at spacing
/// `cell_length / per_cell` starting at `x_start` along a line, for a field
/// whose small-scale structure carries the phase `e^{i kappa x}`.
///
/// Each cell is demodulated by `e^{-i kappa x}` and averaged; the peak of the
/// zero-padded spectrum of these cell averages gives the frequency.
pub fn envelope_frequency_fft(
    samples: &[C64],
    x_start: f64,
    cell_length: f64,
    per_cell: usize,
    kappa: f64,
) -> Result<FftEstimate> {
    if per_cell < 8 {
        return Err(Error::InvalidParameter(format!("{per_cell} samples per cell, need at least 8")));
    }
    let cells = samples.len() / per_cell;
    if cells < 64 {
        return Err(Error::InvalidParameter(format!("{cells} cells sampled, need at least 64")));
    }
    let h = cell_length / per_cell as f64;
    let env: Vec<C64> = (0..cells)
        .map(|m| {
            (0..per_cell)
                .map(|s| {
                    let i = m * per_cell + s;
                    let x = x_start + i as f64 * h;
                    samples[i] * C64::from_polar(1.0, -kappa * x)
                })
                .sum::<C64>()
                / per_cell as f64
        })
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    let mut spec = env.clone();
    planner.plan_fft_forward(cells).process(&mut spec);
    let mut power: Vec<f64> = spec.iter().map(|z| z.norm_sqr()).collect();
    let peak = power.iter().cloned().fold(0.0, f64::max);
    power.sort_by(|a, b| a.total_cmp(b));
    let median = power[cells / 2];
    let peak_to_median = if median > 0.0 { peak / median } else { f64::INFINITY };
    if !(peak > 3.0 * median) {
        return Err(Error::NotFound { lo: 0.0, hi: 0.5 / cell_length });
    }
    let big = cells * FFT_PADDING;
    let mut padded = env;
    padded.resize(big, C64::new(0.0, 0.0));
    planner.plan_fft_forward(big).process(&mut padded);
    let p: Vec<f64> = padded.iter().map(|z| z.norm_sqr()).collect();
    let imax = (0..big).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
    // parabolic refinement on the padded spectrum
    let (pm, p0, pp) = (p[(imax + big - 1) % big], p[imax], p[(imax + 1) % big]);
    let denom = pm - 2.0 * p0 + pp;
    let off = if denom != 0.0 { 0.5 * (pm - pp) / denom } else { 0.0 };
    let mut idx = imax as f64 + off;
    if idx > big as f64 / 2.0 {
        idx -= big as f64;
    }
    let f = (idx / (big as f64 * cell_length)).abs();
    Ok(FftEstimate { f, bin: 1.0 / (cells as f64 * cell_length), peak_to_median })
}

/// Line through the bubble centres along the problem direction (its point
/// closest to the origin) and the lattice period along it.
pub fn sampling_line(problem: &EnvelopeProblem) -> Result<(Vec2, f64)> {
    let lat = &problem.basis.lattice;
    let dir = problem.direction;
    let period = [lat.l1, lat.l2, lat.l1 + lat.l2, lat.l1 - lat.l2]
        .iter()
        .filter(|l| (l.x * dir.y - l.y * dir.x).abs() < 1e-12 * l.norm() && l.dot(&dir) > 0.0)
        .map(|l| l.norm())
        .fold(f64::INFINITY, f64::min);
    if !period.is_finite() {
        return Err(Error::InvalidParameter("direction is not along a short lattice vector".into()));
    }
    Ok((problem.basis.centers[0] - dir * dir.dot(&problem.basis.centers[0]), period))
}

/// FFT estimate for the Bloch mode at `solution`, sampled over `cells`
/// periods with `per_cell` points each.
pub fn envelope_fft_for(
    problem: &EnvelopeProblem,
    solution: &EnvelopeSolution,
    cells: usize,
    per_cell: usize,
) -> Result<FftEstimate> {
    let (origin, period) = sampling_line(problem)?;
    let dens = kernel_densities(&problem.basis, &problem.material, solution.alpha, solution.omega)?;
    let field = BlochField::new(&problem.basis, &problem.material, &dens)?;
    let h = period / per_cell as f64;
    let points: Vec<Vec2> = (0..cells * per_cell)
        .map(|i| origin + problem.direction * (0.5 * h + i as f64 * h))
        .collect();
    let values: Vec<C64> = eval_points(&field, &points).iter().map(|s| s.value).collect();
    let kappa = problem.basis.lattice.dirac_point().vec().dot(&problem.direction);
    envelope_frequency_fft(&values, 0.5 * h, period, per_cell, kappa)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitModel {
    Linear,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveFit {
    pub model: FitModel,
    pub coefficient: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCurve {
    pub kind: LatticeKind,
    pub epsilons: Vec<f64>,
    pub f: Vec<f64>,
    pub method: EnvelopeMethod,
    /// Cross-check by the FFT method where it was computed.
    pub f_fft: Vec<Option<f64>>,
    pub fit: CurveFit,
}

/// Fit of an envelope curve.
///
/// Honeycomb: `sign(eps) f = a eps + b` (the two cone branches carry the two
/// signs of the wavenumber). Square: `f = a sqrt(eps)`.
pub fn fit_curve(kind: LatticeKind, epsilons: &[f64], f: &[f64]) -> Result<CurveFit> {
    match kind {
        LatticeKind::Honeycomb => {
            let signed: Vec<f64> = epsilons.iter().zip(f).map(|(e, v)| e.signum() * v).collect();
            let line = fit_line(epsilons, &signed)?;
            Ok(CurveFit { model: FitModel::Linear, coefficient: line.slope, intercept: line.intercept, r2: line.r2 })
        }
        LatticeKind::Square => {
            if epsilons.iter().any(|&e| e < 0.0) {
                return Err(Error::BadFit("square-lattice shifts must be non-negative".into()));
            }
            let (a, r2) = fit_scaled(epsilons, f, f64::sqrt)?;
            Ok(CurveFit { model: FitModel::Sqrt, coefficient: a, intercept: 0.0, r2 })
        }
    }
}

/// Envelope frequencies over `epsilons` by dispersion inversion, with FFT
/// cross-checks at the shifts listed in `fft_at`.
pub fn f_curve(
    problem: &EnvelopeProblem,
    epsilons: &[f64],
    fft_at: &[f64],
    cells: usize,
    per_cell: usize,
) -> Result<EnvelopeCurve> {
    let kind = problem.kind();
    let mut eps_out = Vec::new();
    let mut f = Vec::new();
    let mut f_fft = Vec::new();
    for &e in epsilons {
        if kind == LatticeKind::Square && e < 0.0 {
            continue;
        }
        let sol = envelope_frequency_dispersion(problem, e)?;
        let fft = if fft_at.iter().any(|&x| (x - e).abs() <= 1e-12) && e != 0.0 {
            Some(envelope_fft_for(problem, &sol, cells, per_cell)?.f)
        } else {
            None
        };
        eps_out.push(e);
        f.push(sol.f);
        f_fft.push(fft);
    }
    let fit = fit_curve(kind, &eps_out, &f)?;
    Ok(EnvelopeCurve { kind, epsilons: eps_out, f, method: EnvelopeMethod::DispersionInversion, f_fft, fit })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenpairs_match_the_closed_form() {
        let sys = DiracSystem::new(0.5, C64::new(0.3, -1.2));
        for &at in &[Vec2::new(1.0, 0.0), Vec2::new(0.2, -0.7)] {
            let ep = dirac_eigenpairs(&sys, at);
            let m = sys.matrix(at);
            for b in 0..2 {
                let v = nalgebra::Vector2::new(ep.vectors[b][0], ep.vectors[b][1]);
                let r = m * v - v * C64::from(ep.values[b]);
                assert!(r.norm() < 1e-14);
                assert!((v.norm() - 1.0).abs() < 1e-14);
            }
            assert!((ep.values[1] - 0.5 * sys.c.norm() * at.norm()).abs() < 1e-14);
        }
        assert!(dirac_eigenpairs(&sys, Vec2::zeros()).degenerate);
    }

    #[test]
    fn fft_recovers_a_synthetic_tone() {
        let (cells, per) = (64, 8);
        let period = 3f64.sqrt();
        let kappa = 2.0 * PI / period;
        let k_env = 2.0 * PI * 0.05;
        let h = period / per as f64;
        let samples: Vec<C64> = (0..cells * per)
            .map(|i| {
                let x = i as f64 * h;
                let micro = 1.0 + 0.5 * (2.0 * PI * x / period).cos();
                C64::from_polar(micro, (kappa + k_env) * x)
            })
            .collect();
        let est = envelope_frequency_fft(&samples, 0.0, period, per, kappa).unwrap();
        assert!((est.f - 0.05).abs() < est.bin, "{est:?}");
    }
}
