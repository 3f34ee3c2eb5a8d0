//! Bloch eigenfunctions: kernel densities, layer potentials off the boundary,
//! the microscopic modes `S_j` and the two-scale comparison.
//!
//! Layer potentials are evaluated with a sharper Ewald split than the
//! operator assembly. The log singularity of each circle is subtracted node
//! by node and added back exactly from the Fourier series of the density, so
//! samples close to a boundary stay accurate.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::boundary::BoundaryBasis;
use crate::error::{Error, Result};
use crate::greens::{cell_radius, expint_ladder, image_points, Ewald, C64};
use crate::lattice::{Lattice, QuasiMomentum, Vec2};
use crate::operators::{Material, OperatorFamily};
use crate::spectral::solve_psi;

/// Largest `sigma_min / sigma_max` accepted for a kernel vector.
pub const MAX_SIGMA_RATIO: f64 = 1e-4;
/// Samples closer than this to a boundary node are moved along the normal.
pub const NUDGE: f64 = 1e-6;
// Ewald split (times 1/L) of the potential evaluator.
const FIELD_SPLIT: f64 = 6.0;

/// Interior and exterior densities of a kernel vector of `A_delta(alpha, omega)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDensities {
    pub phi: DVector<C64>,
    pub psi: DVector<C64>,
    pub omega: f64,
    pub alpha: QuasiMomentum,
    pub sigma_ratio: f64,
}

impl EigenDensities {
    /// `||psi - phi|| / ||phi||`.
    pub fn split_gap(&self) -> f64 {
        (&self.psi - &self.phi).norm() / self.phi.norm()
    }

    /// Same densities multiplied by `z`.
    pub fn scaled(&self, z: C64) -> Self {
        Self { phi: &self.phi * z, psi: &self.psi * z, ..self.clone() }
    }
}

fn gauge_fix(phi: &DVector<C64>, psi: &DVector<C64>) -> (DVector<C64>, DVector<C64>) {
    let norm = phi.norm();
    let lead = if phi[0].norm() > 1e-8 * norm {
        phi[0]
    } else {
        phi.iter().copied().fold(C64::new(0.0, 0.0), |a, z| if z.norm() > a.norm() { z } else { a })
    };
    let z = lead.conj() / (lead.norm() * norm);
    (phi * z, psi * z)
}

/// Kernel vector for the smallest singular value at `(alpha, omega)`,
/// normalised to `||phi|| = 1` with `phi[0]` real and positive.
pub fn kernel_densities(
    basis: &BoundaryBasis,
    material: &Material,
    alpha: QuasiMomentum,
    omega: f64,
) -> Result<EigenDensities> {
    Ok(kernel_space(basis, material, alpha, omega, 1)?.remove(0))
}

/// The `count` right singular vectors of smallest singular value, each
/// gauge-fixed as in [`kernel_densities`].
pub fn kernel_space(
    basis: &BoundaryBasis,
    material: &Material,
    alpha: QuasiMomentum,
    omega: f64,
    count: usize,
) -> Result<Vec<EigenDensities>> {
    material.validate()?;
    if count == 0 {
        return Err(Error::InvalidParameter("empty kernel request".into()));
    }
    let family = OperatorFamily::new(basis, alpha, omega / material.v().min(material.v_b()))?;
    let block = family.block(material, omega)?;
    let (ratios, vectors) = block.null_vectors(count)?;
    let n = basis.n_nodes();
    ratios
        .into_iter()
        .zip(vectors)
        .map(|(ratio, v)| {
            if !(ratio <= MAX_SIGMA_RATIO) {
                return Err(Error::NotCharacteristic(ratio));
            }
            let phi = v.rows(0, n).into_owned();
            let psi = v.rows(n, n).into_owned();
            let (phi, psi) = gauge_fix(&phi, &psi);
            Ok(EigenDensities { phi, psi, omega, alpha, sigma_ratio: ratio })
        })
        .collect()
}

#[derive(Debug, Clone)]
struct CircleDensity {
    center: Vec2,
    radius: f64,
    /// Fourier coefficients `(n, c_n)` of the trigonometric interpolant.
    coeffs: Vec<(i64, C64)>,
}

impl CircleDensity {
    /// `(1/2pi) int ln|x - y| rho(y) dsigma_y`.
    fn log_potential(&self, x: Vec2) -> C64 {
        let d = x - self.center;
        let r = d.norm();
        let theta = d.y.atan2(d.x);
        let (inner, outer) = if r < self.radius { (r, self.radius) } else { (self.radius, r) };
        let ratio = inner / outer;
        let mut acc = C64::new(0.0, 0.0);
        for &(n, c) in &self.coeffs {
            if n == 0 {
                acc += c * (self.radius * outer.ln());
            } else {
                let m = n.unsigned_abs() as i32;
                let f = -self.radius / (2.0 * m as f64) * ratio.powi(m);
                acc += c * C64::from_polar(f, n as f64 * theta);
            }
        }
        acc
    }
}

fn circle_coefficients(values: &[C64]) -> Vec<(i64, C64)> {
    let m = values.len();
    let mut spec = values.to_vec();
    FftPlanner::<f64>::new().plan_fft_forward(m).process(&mut spec);
    let scale = 1.0 / m as f64;
    let half = (m / 2) as i64;
    let mut out = Vec::with_capacity(m + 1);
    for n in -half..=half {
        let idx = n.rem_euclid(m as i64) as usize;
        let mut c = spec[idx] * scale;
        if m.is_multiple_of(2) && n.abs() == half {
            c *= 0.5;
        }
        out.push((n, c));
    }
    out
}

/// Single layer potential `S^{alpha,k}[rho](x)` of a nodal density.
#[derive(Debug, Clone)]
pub struct LayerPotential {
    lattice: Lattice,
    alpha: Vec2,
    k: f64,
    ewald: Ewald,
    images: Vec<(Vec2, C64)>,
    nodes: Vec<Vec2>,
    charges: Vec<C64>,
    structure: Vec<C64>,
    circles: Vec<CircleDensity>,
}

impl LayerPotential {
    pub fn new(basis: &BoundaryBasis, alpha: QuasiMomentum, k: f64, density: &DVector<C64>) -> Result<Self> {
        let n = basis.n_nodes();
        if density.len() != n {
            return Err(Error::InvalidParameter(format!("density has {} entries for {n} nodes", density.len())));
        }
        if k == 0.0 && alpha.reduce(&basis.lattice).is_zero(1e-12) {
            return Err(Error::ZeroQuasiMomentum);
        }
        let lattice = basis.lattice;
        let eta = FIELD_SPLIT / lattice.constant;
        let ewald = Ewald::new(&lattice, alpha.vec(), k, eta, None)?;
        let images = image_points(&lattice, alpha.vec(), ewald.cutoff + cell_radius(&lattice), None);
        let nodes = basis.points();
        let charges: Vec<C64> = (0..n).map(|j| density[j] * basis.nodes[j].weight).collect();
        let structure = ewald
            .spectral
            .iter()
            .map(|&(p, _)| {
                nodes
                    .iter()
                    .zip(&charges)
                    .map(|(y, c)| c * C64::from_polar(1.0, -p.dot(y)))
                    .sum()
            })
            .collect();
        let circles = (0..basis.n_bubbles())
            .map(|b| {
                let vals: Vec<C64> = basis.bubble_range(b).map(|i| density[i]).collect();
                CircleDensity { center: basis.centers[b], radius: basis.radius, coeffs: circle_coefficients(&vals) }
            })
            .collect();
        Ok(Self { lattice, alpha: alpha.vec(), k, ewald, images, nodes, charges, structure, circles })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn alpha(&self) -> QuasiMomentum {
        QuasiMomentum::from_vec(self.alpha)
    }

    /// Value at any point; the potential is extended quasi-periodically.
    pub fn eval(&self, x: Vec2) -> C64 {
        let (r, (m, n)) = self.lattice.reduce_to_cell(x);
        let phase = C64::from_polar(1.0, self.alpha.dot(&self.lattice.point(m, n)));
        phase * self.eval_in_cell(r)
    }

    fn eval_in_cell(&self, x: Vec2) -> C64 {
        let mut spectral = C64::new(0.0, 0.0);
        for (&(p, f), s) in self.ewald.spectral.iter().zip(&self.structure) {
            spectral += f * s * C64::from_polar(1.0, p.dot(&x));
        }
        let nk = self.ewald.kcoef.len();
        let eta2 = self.ewald.eta * self.ewald.eta;
        let cut2 = self.ewald.cutoff * self.ewald.cutoff;
        let mut ladder = Vec::with_capacity(nk + 1);
        let mut spatial = C64::new(0.0, 0.0);
        let mut logs = C64::new(0.0, 0.0);
        for (y, c) in self.nodes.iter().zip(&self.charges) {
            let d0 = x - y;
            logs += c * d0.norm().ln();
            let mut acc = C64::new(0.0, 0.0);
            for &(l, ph) in &self.images {
                let d = d0 - l;
                let dist2 = d.norm_squared();
                if dist2 > cut2 {
                    continue;
                }
                expint_ladder(dist2 * eta2, nk, &mut ladder);
                let mut s = 0.0;
                for m in 0..nk {
                    s += self.ewald.kcoef[m] * ladder[m + 1];
                }
                acc += ph * s;
            }
            spatial += c * acc;
        }
        let exact_logs: C64 = self.circles.iter().map(|c| c.log_potential(x)).sum();
        spectral - spatial / (4.0 * PI) - logs / (2.0 * PI) + exact_logs
    }
}

/// A complex field sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub value: C64,
    pub inside: bool,
    /// Set when the point was moved off a boundary node.
    pub nudged: bool,
}

/// Anything that can be sampled pointwise.
pub trait ScalarField: Sync {
    fn sample(&self, x: Vec2) -> FieldSample;
}

#[derive(Debug, Clone)]
struct Geometry {
    lattice: Lattice,
    centers: Vec<Vec2>,
    radius: f64,
    nodes: Vec<(Vec2, Vec2)>,
}

impl Geometry {
    fn new(basis: &BoundaryBasis) -> Self {
        Self {
            lattice: basis.lattice,
            centers: basis.centers.clone(),
            radius: basis.radius,
            nodes: basis.nodes.iter().map(|n| (n.point, n.normal)).collect(),
        }
    }

    /// Reduced point, lattice translation, inside flag and nudge flag.
    fn locate(&self, x: Vec2) -> (Vec2, Vec2, bool, bool) {
        let (mut r, (m, n)) = self.lattice.reduce_to_cell(x);
        let mut nudged = false;
        for &(y, normal) in &self.nodes {
            let d = r - y;
            if d.norm() < NUDGE {
                let side = if d.dot(&normal) < 0.0 { -1.0 } else { 1.0 };
                r = y + normal * (side * NUDGE);
                nudged = true;
                break;
            }
        }
        let inside = self.centers.iter().any(|c| (r - c).norm() < self.radius);
        (r, self.lattice.point(m, n), inside, nudged)
    }
}

/// The Bloch eigenfunction `u = S^{alpha,k_b}[phi]` in `D` and
/// `S^{alpha,k}[psi]` outside.
#[derive(Debug, Clone)]
pub struct BlochField {
    geometry: Geometry,
    alpha: Vec2,
    interior: LayerPotential,
    exterior: LayerPotential,
}

impl BlochField {
    pub fn new(basis: &BoundaryBasis, material: &Material, densities: &EigenDensities) -> Result<Self> {
        let alpha = densities.alpha;
        let interior = LayerPotential::new(basis, alpha, densities.omega / material.v_b(), &densities.phi)?;
        let exterior = LayerPotential::new(basis, alpha, densities.omega / material.v(), &densities.psi)?;
        Ok(Self { geometry: Geometry::new(basis), alpha: alpha.vec(), interior, exterior })
    }

    pub fn alpha(&self) -> QuasiMomentum {
        QuasiMomentum::from_vec(self.alpha)
    }
}

impl ScalarField for BlochField {
    fn sample(&self, x: Vec2) -> FieldSample {
        let (r, l, inside, nudged) = self.geometry.locate(x);
        let phase = C64::from_polar(1.0, self.alpha.dot(&l));
        let value = if inside { self.interior.eval_in_cell(r) } else { self.exterior.eval_in_cell(r) };
        FieldSample { value: phase * value, inside, nudged }
    }
}

/// Axis-aligned sampling rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Region {
    /// Bounding box of the fundamental cell.
    pub fn unit_cell(lattice: &Lattice) -> Self {
        let corners = [Vec2::zeros(), lattice.l1, lattice.l2, lattice.l1 + lattice.l2];
        let xs = corners.iter().map(|c| c.x);
        let ys = corners.iter().map(|c| c.y);
        Self {
            x0: xs.clone().fold(f64::INFINITY, f64::min),
            x1: xs.fold(f64::NEG_INFINITY, f64::max),
            y0: ys.clone().fold(f64::INFINITY, f64::min),
            y1: ys.fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

fn axis(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (a + b)];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Samples on a rectangular grid, stored row by row (`y` outer, `x` inner).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub region: Region,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub values: Vec<C64>,
    pub inside: Vec<bool>,
    pub nudged: Vec<bool>,
}

impl FieldGrid {
    pub fn nx(&self) -> usize {
        self.x.len()
    }

    pub fn ny(&self) -> usize {
        self.y.len()
    }

    pub fn at(&self, ix: usize, iy: usize) -> C64 {
        self.values[iy * self.nx() + ix]
    }

    pub fn point(&self, ix: usize, iy: usize) -> Vec2 {
        Vec2::new(self.x[ix], self.y[iy])
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, z| a.max(z.norm()))
    }

    /// Copy scaled so that `max |u| = 1` on the grid.
    pub fn max_normalized(&self) -> Self {
        let m = self.max_abs();
        let s = if m > 0.0 { 1.0 / m } else { 1.0 };
        Self { values: self.values.iter().map(|z| z * s).collect(), ..self.clone() }
    }
}

/// Samples at arbitrary points, in order.
pub fn eval_points<F: ScalarField>(field: &F, points: &[Vec2]) -> Vec<FieldSample> {
    points.par_iter().map(|&x| field.sample(x)).collect()
}

/// Sample `field` on an `nx x ny` grid covering `region` (edges included).
pub fn eval_field<F: ScalarField>(field: &F, region: Region, nx: usize, ny: usize) -> Result<FieldGrid> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidParameter(format!("grid resolution {nx} x {ny}")));
    }
    if !(region.x1 >= region.x0 && region.y1 >= region.y0) {
        return Err(Error::InvalidParameter("empty region".into()));
    }
    let x = axis(region.x0, region.x1, nx);
    let y = axis(region.y0, region.y1, ny);
    let points: Vec<Vec2> = y.iter().flat_map(|&yy| x.iter().map(move |&xx| Vec2::new(xx, yy))).collect();
    let samples = eval_points(field, &points);
    Ok(FieldGrid {
        region,
        x,
        y,
        values: samples.iter().map(|s| s.value).collect(),
        inside: samples.iter().map(|s| s.inside).collect(),
        nudged: samples.iter().map(|s| s.nudged).collect(),
    })
}

/// `S_j = S^{alpha*,0}[psi_j^{alpha*}]`, one per bubble, at the Dirac point
/// (honeycomb) or at `M` (square).
#[derive(Debug, Clone)]
pub struct MicroModes {
    pub alpha: QuasiMomentum,
    pub psi: Vec<DVector<C64>>,
    geometry: Geometry,
    potentials: Vec<LayerPotential>,
}

pub fn micro_modes(basis: &BoundaryBasis) -> Result<MicroModes> {
    let alpha = basis.lattice.dirac_point();
    let psi = solve_psi(basis, alpha)?;
    let potentials = psi
        .iter()
        .map(|p| LayerPotential::new(basis, alpha, 0.0, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(MicroModes { alpha, psi, geometry: Geometry::new(basis), potentials })
}

impl MicroModes {
    pub fn len(&self) -> usize {
        self.potentials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.potentials.is_empty()
    }

    pub fn eval(&self, j: usize, x: Vec2) -> C64 {
        let (r, l, _, _) = self.geometry.locate(x);
        let phase = C64::from_polar(1.0, self.alpha.vec().dot(&l));
        phase * self.potentials[j].eval_in_cell(r)
    }

    /// The combination `sum_j c_j S_j` as a sampleable field.
    pub fn combination<'a>(&'a self, coeffs: &'a [C64]) -> Result<ModeCombination<'a>> {
        if coeffs.len() != self.len() {
            return Err(Error::InvalidParameter(format!("{} coefficients for {} modes", coeffs.len(), self.len())));
        }
        Ok(ModeCombination { modes: self, coeffs })
    }

    /// Grids of every `S_j` over the bounding box of the unit cell.
    pub fn grids(&self, nx: usize, ny: usize) -> Result<Vec<FieldGrid>> {
        let region = Region::unit_cell(&self.geometry.lattice);
        (0..self.len())
            .map(|j| {
                let mut coeffs = vec![C64::new(0.0, 0.0); self.len()];
                coeffs[j] = C64::new(1.0, 0.0);
                eval_field(&self.combination(&coeffs)?, region, nx, ny)
            })
            .collect()
    }
}

pub struct ModeCombination<'a> {
    modes: &'a MicroModes,
    coeffs: &'a [C64],
}

impl ScalarField for ModeCombination<'_> {
    fn sample(&self, x: Vec2) -> FieldSample {
        let (r, l, inside, nudged) = self.modes.geometry.locate(x);
        let phase = C64::from_polar(1.0, self.modes.alpha.vec().dot(&l));
        let value: C64 = self
            .coeffs
            .iter()
            .zip(&self.modes.potentials)
            .map(|(c, p)| c * p.eval_in_cell(r))
            .sum();
        FieldSample { value: phase * value, inside, nudged }
    }
}

/// Coefficients of `phi ~ A psi_1 + B psi_2`, normalised and gauge-fixed
/// (`B` real and non-negative).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoeffPair {
    pub a: C64,
    pub b: C64,
    /// `||phi - A psi_1 - B psi_2|| / ||phi||` before normalisation.
    pub residual: f64,
}

impl CoeffPair {
    pub fn as_array(&self) -> [C64; 2] {
        [self.a, self.b]
    }

    /// `arg(A / B)`.
    pub fn relative_phase(&self) -> f64 {
        (self.a / self.b).arg()
    }
}

/// Least-squares projection of `phi` onto `span{psi_1, psi_2}`.
pub fn project_coeffs(densities: &EigenDensities, psi: &[DVector<C64>]) -> Result<CoeffPair> {
    if psi.len() != 2 {
        return Err(Error::InvalidParameter(format!("two reference densities required, got {}", psi.len())));
    }
    let n = densities.phi.len();
    let basis = DMatrix::from_fn(n, 2, |i, j| psi[j][i]);
    let svd = basis.clone().svd(true, true);
    let x = svd.solve(&densities.phi, 1e-14).map_err(|e| Error::BadFit(e.to_string()))?;
    let fitted = &basis * &x;
    let residual = (&densities.phi - fitted).norm() / densities.phi.norm();
    if residual > 0.1 {
        return Err(Error::BadFit(format!("density outside the two-mode space (residual {residual:.3e})")));
    }
    let norm = (x[0].norm_sqr() + x[1].norm_sqr()).sqrt();
    let gauge = if x[1].norm() > 1e-14 * norm { x[1].conj() / x[1].norm() } else { x[0].conj() / x[0].norm() };
    let s = gauge / norm;
    Ok(CoeffPair { a: x[0] * s, b: x[1] * s, residual })
}

/// Relative misfit between `u` and `e^{i alpha~.x} sum_j c_j S_j(x)` on a
/// `cells x cells` block sampled `per_cell^2` times per cell, after both are
/// normalised and the best global phase is applied.
pub fn two_scale_residual<F: ScalarField>(
    field: &F,
    field_alpha: QuasiMomentum,
    coeffs: &[C64],
    modes: &MicroModes,
    alpha_tilde: Vec2,
    cells: usize,
    per_cell: usize,
) -> Result<f64> {
    if cells == 0 || per_cell == 0 {
        return Err(Error::InvalidParameter("empty sampling block".into()));
    }
    let model = modes.combination(coeffs)?;
    let lattice = modes.geometry.lattice;
    let offsets: Vec<Vec2> = (0..per_cell * per_cell)
        .map(|i| {
            let (s, t) = ((i % per_cell) as f64 + 0.5, (i / per_cell) as f64 + 0.5);
            lattice.l1 * (s / per_cell as f64) + lattice.l2 * (t / per_cell as f64)
        })
        .collect();
    let u0 = eval_points(field, &offsets);
    let m0 = eval_points(&model, &offsets);
    let (mut uu, mut mm, mut um) = (0.0, 0.0, C64::new(0.0, 0.0));
    for i in 0..cells as i64 {
        for j in 0..cells as i64 {
            let l = lattice.point(i, j);
            let pu = C64::from_polar(1.0, field_alpha.vec().dot(&l));
            let pm = C64::from_polar(1.0, modes.alpha.vec().dot(&l));
            for (x, (u, m)) in offsets.iter().zip(u0.iter().zip(&m0)) {
                let u = pu * u.value;
                let m = pm * C64::from_polar(1.0, alpha_tilde.dot(&(x + l))) * m.value;
                uu += u.norm_sqr();
                mm += m.norm_sqr();
                um += m.conj() * u;
            }
        }
    }
    if uu == 0.0 || mm == 0.0 {
        return Err(Error::InvalidParameter("vanishing field in two-scale comparison".into()));
    }
    let overlap = um.norm() / (uu * mm).sqrt();
    Ok((2.0 - 2.0 * overlap).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::make_dimer;
    use crate::greens::{green, GreensParams};

    #[test]
    fn circle_coefficients_reproduce_samples() {
        let m = 16;
        let vals: Vec<C64> = (0..m)
            .map(|j| {
                let t = 2.0 * PI * j as f64 / m as f64;
                C64::new(1.0 + (3.0 * t).cos(), (2.0 * t).sin())
            })
            .collect();
        let c = circle_coefficients(&vals);
        for (j, v) in vals.iter().enumerate() {
            let t = 2.0 * PI * j as f64 / m as f64;
            let s: C64 = c.iter().map(|&(n, cn)| cn * C64::from_polar(1.0, n as f64 * t)).sum();
            assert!((s - v).norm() < 1e-13);
        }
    }

    #[test]
    fn potential_matches_direct_quadrature_far_from_boundary() {
        let lat = Lattice::honeycomb(1.0).unwrap();
        let (_, basis) = make_dimer(&lat, 0.2, 6, 64).unwrap();
        let alpha = QuasiMomentum::new(1.1, 0.4);
        let k = 0.3;
        let dens = DVector::from_fn(basis.n_nodes(), |i, _| {
            let a = basis.nodes[i].angle;
            C64::new(a.cos() + 0.5, (2.0 * a).sin())
        });
        let pot = LayerPotential::new(&basis, alpha, k, &dens).unwrap();
        let params = GreensParams::new(lat, alpha, k);
        let x = Vec2::new(0.05, 0.02);
        let direct: C64 = basis
            .nodes
            .iter()
            .enumerate()
            .map(|(j, n)| green(&params, x - n.point).unwrap() * n.weight * dens[j])
            .sum();
        assert!((pot.eval(x) - direct).norm() < 1e-9 * direct.norm(), "{} {}", pot.eval(x), direct);
    }
}
