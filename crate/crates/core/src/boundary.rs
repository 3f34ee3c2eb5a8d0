//! Bubble geometry in the unit cell and the discrete boundary basis.
//!
//! Each circle carries `n_quad` equispaced nodes `theta_j = 2 pi j / n_quad`
//! with trapezoid weights. Nodes are stored bubble by bubble.

use std::f64::consts::PI;

use nalgebra::DVector;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::greens::C64;
use crate::lattice::{Lattice, LatticeKind, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryNode {
    pub point: Vec2,
    /// Outward unit normal.
    pub normal: Vec2,
    pub weight: f64,
    pub bubble: usize,
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BubbleDimer {
    pub lattice: Lattice,
    pub centers: Vec<Vec2>,
    pub radius: f64,
    /// Multipole truncation order `N` (modes `e^{in theta}`, `|n| <= N`).
    pub n_modes: usize,
    pub n_quad: usize,
}

impl BubbleDimer {
    /// `|D_1| = pi R^2`.
    pub fn bubble_area(&self) -> f64 {
        PI * self.radius * self.radius
    }

    pub fn n_bubbles(&self) -> usize {
        self.centers.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryBasis {
    pub lattice: Lattice,
    pub centers: Vec<Vec2>,
    pub radius: f64,
    pub n_modes: usize,
    pub n_quad: usize,
    pub nodes: Vec<BoundaryNode>,
}

/// Centres of the bubbles in the fundamental cell.
pub fn bubble_centers(lattice: &Lattice) -> Vec<Vec2> {
    match lattice.kind {
        LatticeKind::Honeycomb => {
            let s = lattice.l1 + lattice.l2;
            vec![s / 3.0, s * (2.0 / 3.0)]
        }
        LatticeKind::Square => vec![lattice.cell_center()],
    }
}

/// Build the bubble configuration and its boundary discretization.
pub fn make_dimer(
    lattice: &Lattice,
    radius: f64,
    n_modes: usize,
    n_quad: usize,
) -> Result<(BubbleDimer, BoundaryBasis)> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidParameter(format!("radius R = {radius}")));
    }
    if n_modes < 1 {
        return Err(Error::InvalidParameter("n_modes must be at least 1".into()));
    }
    let required = 4 * n_modes + 4;
    if n_quad < required {
        return Err(Error::UnderResolved { n_quad, required });
    }
    if !n_quad.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("n_quad = {n_quad} must be even")));
    }
    let centers = bubble_centers(lattice);
    let separation = min_separation(lattice, &centers);
    if separation <= 2.0 * radius + 1e-9 {
        return Err(Error::TouchingBubbles { separation, diameter: 2.0 * radius });
    }
    let weight = 2.0 * PI * radius / n_quad as f64;
    let mut nodes = Vec::with_capacity(centers.len() * n_quad);
    for (b, &c) in centers.iter().enumerate() {
        for j in 0..n_quad {
            let angle = 2.0 * PI * j as f64 / n_quad as f64;
            let normal = Vec2::new(angle.cos(), angle.sin());
            nodes.push(BoundaryNode { point: c + normal * radius, normal, weight, bubble: b, angle });
        }
    }
    let dimer = BubbleDimer { lattice: *lattice, centers: centers.clone(), radius, n_modes, n_quad };
    let basis = BoundaryBasis { lattice: *lattice, centers, radius, n_modes, n_quad, nodes };
    Ok((dimer, basis))
}

/// Smallest distance between distinct bubble centres, lattice images included.
fn min_separation(lattice: &Lattice, centers: &[Vec2]) -> f64 {
    let mut best = f64::INFINITY;
    for (a, &ca) in centers.iter().enumerate() {
        for (b, &cb) in centers.iter().enumerate() {
            for m in -2..=2 {
                for n in -2..=2 {
                    if a == b && m == 0 && n == 0 {
                        continue;
                    }
                    best = best.min((ca - cb - lattice.point(m, n)).norm());
                }
            }
        }
    }
    best
}

/// Vector equal to one on the nodes of bubble `bubble` (0-based) and zero elsewhere.
pub fn indicator_rhs(basis: &BoundaryBasis, bubble: usize) -> Result<DVector<C64>> {
    if bubble >= basis.n_bubbles() {
        return Err(Error::InvalidParameter(format!(
            "bubble index {bubble} out of range (have {})",
            basis.n_bubbles()
        )));
    }
    Ok(DVector::from_iterator(
        basis.n_nodes(),
        basis.nodes.iter().map(|n| C64::from(if n.bubble == bubble { 1.0 } else { 0.0 })),
    ))
}

impl BoundaryBasis {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_bubbles(&self) -> usize {
        self.centers.len()
    }

    pub fn points(&self) -> Vec<Vec2> {
        self.nodes.iter().map(|n| n.point).collect()
    }

    pub fn bubble_range(&self, bubble: usize) -> std::ops::Range<usize> {
        bubble * self.n_quad..(bubble + 1) * self.n_quad
    }

    /// Fourier indices `-N..=N` of the multipole basis.
    pub fn modes(&self) -> std::ops::RangeInclusive<i64> {
        -(self.n_modes as i64)..=self.n_modes as i64
    }

    /// Trapezoid integral of nodal values over the boundary of one bubble.
    pub fn integrate(&self, values: &DVector<C64>, bubble: usize) -> C64 {
        self.bubble_range(bubble)
            .map(|i| values[i] * self.nodes[i].weight)
            .sum()
    }

    /// Node permutation realising the reflection `R3`: node `i` maps to
    /// node `perm[i]`. Only defined for the honeycomb dimer.
    pub fn r3_permutation(&self) -> Result<Vec<usize>> {
        if self.lattice.kind != LatticeKind::Honeycomb {
            return Err(Error::InvalidParameter("R3 is a honeycomb symmetry".into()));
        }
        let m = self.n_quad;
        Ok((0..self.n_nodes())
            .map(|i| {
                let (b, j) = (i / m, i % m);
                (1 - b) * m + (m / 2 + m - j) % m
            })
            .collect())
    }

    /// Node permutation realising the point reflection `R0` about the cell centre.
    pub fn r0_permutation(&self) -> Result<Vec<usize>> {
        if self.lattice.kind != LatticeKind::Honeycomb {
            return Err(Error::InvalidParameter("R0 is a honeycomb symmetry".into()));
        }
        let m = self.n_quad;
        Ok((0..self.n_nodes())
            .map(|i| {
                let (b, j) = (i / m, i % m);
                (1 - b) * m + (j + m / 2) % m
            })
            .collect())
    }

    /// Fourier coefficients `c_n`, `|n| <= N`, of nodal values on one bubble.
    pub fn fourier_coefficients(&self, values: &[C64], bubble: usize) -> Vec<C64> {
        let m = self.n_quad as f64;
        let range = self.bubble_range(bubble);
        self.modes()
            .map(|n| {
                range
                    .clone()
                    .map(|i| values[i] * C64::from_polar(1.0, -(n as f64) * self.nodes[i].angle))
                    .sum::<C64>()
                    / m
            })
            .collect()
    }
}

/// Weights `W_j` of the periodic log quadrature
/// `int_0^{2pi} ln(4 sin^2((t_i - tau)/2)) f(tau) dtau ~ sum_j W_{i-j} f(tau_j)`
/// on `n` equispaced nodes (`n` even). Indexed by `(i - j) mod n`.
pub fn log_weights(n: usize) -> Vec<f64> {
    let half = n / 2;
    (0..n)
        .map(|d| {
            let s = 2.0 * PI * d as f64 / n as f64;
            let mut acc = 0.0;
            for m in 1..half {
                acc += (m as f64 * s).cos() / m as f64;
            }
            acc += (half as f64 * s).cos() / n as f64;
            -4.0 * PI / n as f64 * acc
        })
        .collect()
}

/// Trigonometric interpolation of periodic samples onto `factor` times as
/// many equispaced points.
pub fn upsample_periodic(values: &[C64], factor: usize) -> Vec<C64> {
    let n = values.len();
    if factor <= 1 || n == 0 {
        return values.to_vec();
    }
    let big = n * factor;
    let mut planner = FftPlanner::<f64>::new();
    let mut spec = values.to_vec();
    planner.plan_fft_forward(n).process(&mut spec);
    let mut padded = vec![C64::new(0.0, 0.0); big];
    let half = n / 2;
    for k in 0..n {
        let c = spec[k];
        if n.is_multiple_of(2) && k == half {
            // split the Nyquist coefficient symmetrically
            padded[half] += c * 0.5;
            padded[big - half] += c * 0.5;
        } else if k < half || (n % 2 == 1 && k == half) {
            padded[k] += c;
        } else {
            padded[big - (n - k)] += c;
        }
    }
    planner.plan_fft_inverse(big).process(&mut padded);
    let scale = 1.0 / n as f64;
    padded.iter().map(|z| z * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn honeycomb_dimer_defaults() {
        let lat = Lattice::honeycomb(1.0).unwrap();
        let (dimer, basis) = make_dimer(&lat, 0.2, 6, 64).unwrap();
        let s = lat.l1 + lat.l2;
        assert!((dimer.centers[0] - s / 3.0).norm() < 1e-15);
        assert!((dimer.centers[1] - s * (2.0 / 3.0)).norm() < 1e-15);
        assert!((dimer.bubble_area() - 0.04 * PI).abs() < 1e-15);
        for b in 0..2 {
            let total: f64 = basis.bubble_range(b).map(|i| basis.nodes[i].weight).sum();
            assert!((total - 2.0 * PI * 0.2).abs() < 1e-13);
        }
    }

    #[test]
    fn square_has_one_centred_bubble() {
        let lat = Lattice::square(1.0).unwrap();
        let (dimer, basis) = make_dimer(&lat, 0.2, 6, 64).unwrap();
        assert_eq!(dimer.centers.len(), 1);
        assert!((dimer.centers[0] - Vec2::new(0.5, 0.5)).norm() < 1e-15);
        assert_eq!(basis.n_nodes(), 64);
    }

    #[test]
    fn rejects_touching_and_under_resolved() {
        let lat = Lattice::honeycomb(1.0).unwrap();
        assert!(matches!(make_dimer(&lat, 0.3, 6, 64), Err(Error::TouchingBubbles { .. })));
        assert!(matches!(make_dimer(&lat, 0.2, 6, 20), Err(Error::UnderResolved { .. })));
    }

    #[test]
    fn indicator_vectors_partition_unity() {
        let lat = Lattice::honeycomb(1.0).unwrap();
        let (_, basis) = make_dimer(&lat, 0.2, 6, 64).unwrap();
        let a = indicator_rhs(&basis, 0).unwrap();
        let b = indicator_rhs(&basis, 1).unwrap();
        assert_eq!(a[0], C64::from(1.0));
        assert_eq!(a[64], C64::from(0.0));
        assert!((a + b).iter().all(|z| *z == C64::from(1.0)));
        assert!(indicator_rhs(&basis, 2).is_err());
    }

    #[test]
    fn r3_permutation_maps_nodes() {
        let lat = Lattice::honeycomb(1.0).unwrap();
        let (_, basis) = make_dimer(&lat, 0.2, 6, 64).unwrap();
        let r3 = crate::lattice::SymmetryOp::r3(&lat);
        let perm = basis.r3_permutation().unwrap();
        for (i, &j) in perm.iter().enumerate() {
            assert!((r3.apply(basis.nodes[i].point) - basis.nodes[j].point).norm() < 1e-12);
        }
        let r0 = crate::lattice::SymmetryOp::r0(&lat);
        let perm0 = basis.r0_permutation().unwrap();
        for (i, &j) in perm0.iter().enumerate() {
            assert!((r0.apply(basis.nodes[i].point) - basis.nodes[j].point).norm() < 1e-12);
        }
    }

    #[test]
    fn log_quadrature_is_exact_on_trigonometric_data() {
        // int ln(4 sin^2(tau/2)) cos(m tau) dtau = -2 pi / m for m >= 1, 0 for m = 0
        let n = 32;
        let w = log_weights(n);
        for m in 0..10 {
            let approx: f64 = (0..n)
                .map(|j| w[(n - j) % n] * (2.0 * PI * (m * j) as f64 / n as f64).cos())
                .sum();
            let exact = if m == 0 { 0.0 } else { -2.0 * PI / m as f64 };
            assert!((approx - exact).abs() < 1e-12, "m={m}: {approx} vs {exact}");
        }
    }

    #[test]
    fn upsampling_interpolates_band_limited_data() {
        let n = 16;
        let f = |t: f64| C64::new((3.0 * t).cos(), (2.0 * t).sin() + 0.5);
        let vals: Vec<C64> = (0..n).map(|j| f(2.0 * PI * j as f64 / n as f64)).collect();
        let up = upsample_periodic(&vals, 4);
        for (j, z) in up.iter().enumerate() {
            let t = 2.0 * PI * j as f64 / (4 * n) as f64;
            assert!((z - f(t)).norm() < 1e-13);
        }
    }
}
