//! Direct and dual lattices, symmetry points and symmetry operators.
//!
//! Two lattice kinds are supported. The honeycomb lattice is generated by
//! `l1 = L(sqrt3/2, 1/2)`, `l2 = L(sqrt3/2, -1/2)`; the square lattice by the
//! Cartesian unit vectors scaled by `L`. Dual vectors satisfy
//! `a_i . l_j = 2 pi delta_ij`.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeKind {
    Honeycomb,
    Square,
}

impl std::fmt::Display for LatticeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LatticeKind::Honeycomb => write!(f, "honeycomb"),
            LatticeKind::Square => write!(f, "square"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    pub kind: LatticeKind,
    /// Lattice constant `L`.
    pub constant: f64,
    pub l1: Vec2,
    pub l2: Vec2,
    pub a1: Vec2,
    pub a2: Vec2,
    /// `|Y| = |l1 x l2|`.
    pub cell_area: f64,
}

/// A quasi-momentum in the Brillouin zone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuasiMomentum(pub [f64; 2]);

impl QuasiMomentum {
    pub fn new(x: f64, y: f64) -> Self {
        QuasiMomentum([x, y])
    }

    pub fn from_vec(v: Vec2) -> Self {
        QuasiMomentum([v.x, v.y])
    }

    pub fn vec(&self) -> Vec2 {
        Vec2::new(self.0[0], self.0[1])
    }

    pub fn norm(&self) -> f64 {
        self.vec().norm()
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.norm() <= tol
    }

    /// Reduce into the parallelogram `{s a1 + t a2 : 0 <= s, t < 1}`.
    pub fn reduce(&self, lattice: &Lattice) -> QuasiMomentum {
        let (s, t) = lattice.dual_coordinates(self.vec());
        let s = s - s.floor();
        let t = t - t.floor();
        // floor of a value a hair below an integer can leave s == 1.0
        let s = if s >= 1.0 { 0.0 } else { s };
        let t = if t >= 1.0 { 0.0 } else { t };
        QuasiMomentum::from_vec(lattice.a1 * s + lattice.a2 * t)
    }

    pub fn offset(&self, direction: Vec2, t: f64) -> QuasiMomentum {
        QuasiMomentum::from_vec(self.vec() + direction * t)
    }
}

impl Lattice {
    pub fn new(kind: LatticeKind, constant: f64) -> Result<Self> {
        if !(constant > 0.0) || !constant.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lattice constant must be positive, got {constant}"
            )));
        }
        let (l1, l2) = match kind {
            LatticeKind::Honeycomb => (
                Vec2::new(3f64.sqrt() / 2.0, 0.5) * constant,
                Vec2::new(3f64.sqrt() / 2.0, -0.5) * constant,
            ),
            LatticeKind::Square => (Vec2::new(constant, 0.0), Vec2::new(0.0, constant)),
        };
        // Rows of the transpose are l1, l2; its inverse columns give the dual basis.
        let lt = Matrix2::new(l1.x, l1.y, l2.x, l2.y);
        let inv = lt
            .try_inverse()
            .ok_or_else(|| Error::InvalidParameter("degenerate lattice basis".into()))?;
        let a1 = Vec2::new(inv[(0, 0)], inv[(1, 0)]) * (2.0 * PI);
        let a2 = Vec2::new(inv[(0, 1)], inv[(1, 1)]) * (2.0 * PI);
        let cell_area = (l1.x * l2.y - l1.y * l2.x).abs();
        Ok(Lattice {
            kind,
            constant,
            l1,
            l2,
            a1,
            a2,
            cell_area,
        })
    }

    pub fn honeycomb(constant: f64) -> Result<Self> {
        Self::new(LatticeKind::Honeycomb, constant)
    }

    pub fn square(constant: f64) -> Result<Self> {
        Self::new(LatticeKind::Square, constant)
    }

    pub fn point(&self, m: i64, n: i64) -> Vec2 {
        self.l1 * m as f64 + self.l2 * n as f64
    }

    pub fn dual_point(&self, m: i64, n: i64) -> Vec2 {
        self.a1 * m as f64 + self.a2 * n as f64
    }

    /// Fractional coordinates `(s, t)` with `x = s l1 + t l2`.
    pub fn fractional(&self, x: Vec2) -> (f64, f64) {
        (self.a1.dot(&x) / (2.0 * PI), self.a2.dot(&x) / (2.0 * PI))
    }

    /// Coordinates `(s, t)` with `alpha = s a1 + t a2`.
    pub fn dual_coordinates(&self, alpha: Vec2) -> (f64, f64) {
        (self.l1.dot(&alpha) / (2.0 * PI), self.l2.dot(&alpha) / (2.0 * PI))
    }

    /// Split `x = r + l` with `l` in the lattice and `r` in the centred cell
    /// (fractional coordinates in `[-1/2, 1/2)`).
    pub fn reduce_centered(&self, x: Vec2) -> (Vec2, (i64, i64)) {
        let (s, t) = self.fractional(x);
        let m = (s + 0.5).floor() as i64;
        let n = (t + 0.5).floor() as i64;
        (x - self.point(m, n), (m, n))
    }

    /// Split `x = r + l` with `r` in the fundamental parallelogram `Y`.
    pub fn reduce_to_cell(&self, x: Vec2) -> (Vec2, (i64, i64)) {
        let (s, t) = self.fractional(x);
        let m = s.floor() as i64;
        let n = t.floor() as i64;
        (x - self.point(m, n), (m, n))
    }

    /// Distance from `x` to the nearest lattice point.
    pub fn distance_to_lattice(&self, x: Vec2) -> f64 {
        let (r, _) = self.reduce_centered(x);
        let mut best = f64::INFINITY;
        for m in -1..=1 {
            for n in -1..=1 {
                best = best.min((r - self.point(m, n)).norm());
            }
        }
        best
    }

    pub fn gamma(&self) -> QuasiMomentum {
        QuasiMomentum::new(0.0, 0.0)
    }

    /// Honeycomb: `alpha1* = (2 a1 + a2)/3`. Square: `M = (pi/L, pi/L)`.
    pub fn dirac_point(&self) -> QuasiMomentum {
        match self.kind {
            LatticeKind::Honeycomb => {
                QuasiMomentum::from_vec((self.a1 * 2.0 + self.a2) / 3.0)
            }
            LatticeKind::Square => QuasiMomentum::from_vec((self.a1 + self.a2) / 2.0),
        }
    }

    /// The second honeycomb Dirac point `alpha2* = (a1 + 2 a2)/3`.
    pub fn second_dirac_point(&self) -> QuasiMomentum {
        QuasiMomentum::from_vec((self.a1 + self.a2 * 2.0) / 3.0)
    }

    /// Edge midpoint of the first zone adjacent to the Dirac point.
    pub fn m_point(&self) -> QuasiMomentum {
        QuasiMomentum::from_vec((self.a1 + self.a2) / 2.0)
    }

    /// Square lattice `X = (pi/L, 0)`; honeycomb returns `a1/2`.
    pub fn x_point(&self) -> QuasiMomentum {
        QuasiMomentum::from_vec(self.a1 / 2.0)
    }

    /// Symmetry operators of the honeycomb cell; empty for the square lattice.
    pub fn symmetry_ops(&self) -> Vec<SymmetryOp> {
        match self.kind {
            LatticeKind::Honeycomb => vec![
                SymmetryOp::r0(self),
                SymmetryOp::r1(self),
                SymmetryOp::r2(self),
                SymmetryOp::r3(self),
            ],
            LatticeKind::Square => Vec::new(),
        }
    }

    /// `x0 = (l1 + l2)/2`, the cell centre.
    pub fn cell_center(&self) -> Vec2 {
        (self.l1 + self.l2) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SymmetryTag {
    R0,
    R1,
    R2,
    R3,
}

/// Affine map `x -> matrix x + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetryOp {
    pub tag: SymmetryTag,
    pub matrix: Matrix2<f64>,
    pub offset: Vec2,
}

fn rotation(angle: f64) -> Matrix2<f64> {
    let (s, c) = angle.sin_cos();
    Matrix2::new(c, -s, s, c)
}

impl SymmetryOp {
    /// Point reflection through the cell centre.
    pub fn r0(lattice: &Lattice) -> Self {
        SymmetryOp {
            tag: SymmetryTag::R0,
            matrix: -Matrix2::identity(),
            offset: lattice.cell_center() * 2.0,
        }
    }

    /// Rotation by `-2pi/3` about `x1`.
    pub fn r1(lattice: &Lattice) -> Self {
        SymmetryOp {
            tag: SymmetryTag::R1,
            matrix: rotation(-2.0 * PI / 3.0),
            offset: lattice.l1,
        }
    }

    /// Rotation by `-2pi/3` about `x2`.
    pub fn r2(lattice: &Lattice) -> Self {
        SymmetryOp {
            tag: SymmetryTag::R2,
            matrix: rotation(-2.0 * PI / 3.0),
            offset: lattice.l1 * 2.0,
        }
    }

    /// Reflection across the vertical line through the cell centre.
    pub fn r3(lattice: &Lattice) -> Self {
        SymmetryOp {
            tag: SymmetryTag::R3,
            matrix: Matrix2::new(-1.0, 0.0, 0.0, 1.0),
            offset: Vec2::new(2.0 * lattice.cell_center().x, 0.0),
        }
    }

    pub fn apply(&self, x: Vec2) -> Vec2 {
        self.matrix * x + self.offset
    }

    /// Group order of the operator.
    pub fn order(&self) -> usize {
        match self.tag {
            SymmetryTag::R0 | SymmetryTag::R3 => 2,
            SymmetryTag::R1 | SymmetryTag::R2 => 3,
        }
    }
}

pub fn apply_symmetry(op: &SymmetryOp, x: Vec2) -> Vec2 {
    op.apply(x)
}

/// Piecewise-linear path through the Brillouin zone.
#[derive(Debug, Clone, PartialEq)]
pub struct BzPath {
    pub points: Vec<QuasiMomentum>,
    pub arclength: Vec<f64>,
    /// Index of each waypoint in `points`.
    pub waypoint_indices: Vec<usize>,
}

pub fn bz_path(waypoints: &[QuasiMomentum], n_per_segment: usize) -> Result<BzPath> {
    if waypoints.len() < 2 {
        return Err(Error::InvalidParameter(
            "a path needs at least two waypoints".into(),
        ));
    }
    if n_per_segment == 0 {
        return Err(Error::InvalidParameter("n_per_segment must be >= 1".into()));
    }
    let mut points = vec![waypoints[0]];
    let mut arclength = vec![0.0];
    let mut waypoint_indices = vec![0];
    for pair in waypoints.windows(2) {
        let (a, b) = (pair[0].vec(), pair[1].vec());
        let s0 = *arclength.last().unwrap();
        let len = (b - a).norm();
        for i in 1..=n_per_segment {
            let f = i as f64 / n_per_segment as f64;
            points.push(QuasiMomentum::from_vec(a + (b - a) * f));
            arclength.push(s0 + len * f);
        }
        waypoint_indices.push(points.len() - 1);
    }
    Ok(BzPath {
        points,
        arclength,
        waypoint_indices,
    })
}
