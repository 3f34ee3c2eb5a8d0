//! Dense Nyström realizations of the single layer potential, the
//! Neumann-Poincaré operator and the block operator `A_delta(alpha, omega)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::boundary::{log_weights, BoundaryBasis};
use crate::error::{Error, Result};
use crate::greens::{KernelTable, KernelValues, C64};
use crate::lattice::QuasiMomentum;
use crate::special::{bessel_j0, bessel_j1};

/// Densities and bulk moduli inside (`_b`) and outside the bubbles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub rho: f64,
    pub kappa: f64,
    pub rho_b: f64,
    pub kappa_b: f64,
}

impl Default for Material {
    fn default() -> Self {
        Self { rho: 1000.0, kappa: 1000.0, rho_b: 1.0, kappa_b: 1.0 }
    }
}

impl Material {
    pub fn new(rho: f64, kappa: f64, rho_b: f64, kappa_b: f64) -> Result<Self> {
        let m = Self { rho, kappa, rho_b, kappa_b };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rho", self.rho), ("kappa", self.kappa), ("rho_b", self.rho_b), ("kappa_b", self.kappa_b)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        let d = self.delta();
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::InvalidParameter(format!("contrast delta = {d} must lie in (0, 1)")));
        }
        Ok(())
    }

    /// Contrast `delta = rho_b / rho`.
    pub fn delta(&self) -> f64 {
        self.rho_b / self.rho
    }

    pub fn v(&self) -> f64 {
        (self.kappa / self.rho).sqrt()
    }

    pub fn v_b(&self) -> f64 {
        (self.kappa_b / self.rho_b).sqrt()
    }

    /// Same wave speeds, contrast replaced by `delta` (scales `rho_b` and `kappa_b`).
    pub fn with_delta(&self, delta: f64) -> Self {
        let s = delta / self.delta();
        Self { rho_b: self.rho_b * s, kappa_b: self.kappa_b * s, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    SingleLayer,
    NeumannPoincare,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerOperator {
    pub matrix: DMatrix<C64>,
    pub kind: LayerKind,
    pub alpha: QuasiMomentum,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockOperator {
    pub matrix: DMatrix<C64>,
    pub delta: f64,
    pub omega: f64,
    pub v: f64,
    pub v_b: f64,
}

/// Row-equilibrated singular value data of a block operator.
#[derive(Debug, Clone)]
pub struct SigmaProbe {
    /// Ascending singular values of the equilibrated matrix.
    pub singular_values: Vec<f64>,
    /// Scale applied to each row.
    pub row_scale: Vec<f64>,
}

impl SigmaProbe {
    pub fn sigma_min(&self) -> f64 {
        self.singular_values[0]
    }

    pub fn sigma_max(&self) -> f64 {
        *self.singular_values.last().unwrap()
    }

    /// `sigma_min / sigma_max`.
    pub fn ratio(&self) -> f64 {
        let m = self.sigma_max();
        if m > 0.0 {
            self.sigma_min() / m
        } else {
            0.0
        }
    }
}

fn equilibrate(matrix: &DMatrix<C64>) -> (DMatrix<C64>, Vec<f64>) {
    let mut m = matrix.clone();
    let mut scale = Vec::with_capacity(m.nrows());
    for i in 0..m.nrows() {
        let mx = m.row(i).iter().fold(0.0f64, |a, z| a.max(z.norm()));
        let s = if mx > 0.0 { 1.0 / mx } else { 1.0 };
        m.row_mut(i).iter_mut().for_each(|z| *z *= s);
        scale.push(s);
    }
    (m, scale)
}

impl BlockOperator {
    pub fn probe(&self) -> SigmaProbe {
        let (m, row_scale) = equilibrate(&self.matrix);
        let mut singular_values: Vec<f64> = m.singular_values().iter().copied().collect();
        singular_values.sort_by(|a, b| a.total_cmp(b));
        SigmaProbe { singular_values, row_scale }
    }

    /// Right singular vectors of the equilibrated matrix for the `count`
    /// smallest singular values, with their ratios `sigma / sigma_max`.
    pub fn null_vectors(&self, count: usize) -> Result<(Vec<f64>, Vec<DVector<C64>>)> {
        let (m, _) = equilibrate(&self.matrix);
        let svd = SVD::new(m, false, true);
        let vt = svd.v_t.ok_or(Error::IllConditioned(f64::INFINITY))?;
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        let smax = svd.singular_values.iter().fold(0.0f64, |a, &b| a.max(b));
        let smax = if smax > 0.0 { smax } else { 1.0 };
        let mut values = Vec::new();
        let mut vecs = Vec::new();
        for &i in order.iter().take(count) {
            values.push(svd.singular_values[i] / smax);
            vecs.push(vt.row(i).adjoint().into_owned());
        }
        Ok((values, vecs))
    }
}

/// Smallest singular value of the row-equilibrated block matrix.
pub fn sigma_min(op: &BlockOperator) -> f64 {
    op.probe().sigma_min()
}

/// Operators at one quasi-momentum for any wavenumber up to `k_max`.
#[derive(Debug, Clone)]
pub struct OperatorFamily {
    basis: BoundaryBasis,
    alpha: QuasiMomentum,
    table: KernelTable,
    log_w: Vec<f64>,
}

impl OperatorFamily {
    pub fn new(basis: &BoundaryBasis, alpha: QuasiMomentum, k_max: f64) -> Result<Self> {
        let pts = basis.points();
        let table = KernelTable::new(&basis.lattice, alpha, &pts, &pts, k_max)?;
        Ok(Self { basis: basis.clone(), alpha, table, log_w: log_weights(basis.n_quad) })
    }

    pub fn alpha(&self) -> QuasiMomentum {
        self.alpha
    }

    pub fn basis(&self) -> &BoundaryBasis {
        &self.basis
    }

    pub fn k_max(&self) -> f64 {
        self.table.k_max()
    }

    /// Single layer and Neumann-Poincaré matrices at wavenumber `k`.
    pub fn layer_pair(&self, k: f64) -> Result<(LayerOperator, LayerOperator)> {
        let kv = self.table.eval(k)?;
        let (s, kstar) = self.assemble(&kv, k);
        Ok((
            LayerOperator { matrix: s, kind: LayerKind::SingleLayer, alpha: self.alpha, k },
            LayerOperator { matrix: kstar, kind: LayerKind::NeumannPoincare, alpha: self.alpha, k },
        ))
    }

    fn assemble(&self, kv: &KernelValues, k: f64) -> (DMatrix<C64>, DMatrix<C64>) {
        let basis = &self.basis;
        let n = basis.n_nodes();
        let mq = basis.n_quad;
        let r = basis.radius;
        let ln_r = r.ln();
        let trap = 2.0 * PI / mq as f64;
        let mut s = DMatrix::<C64>::zeros(n, n);
        let mut kstar = DMatrix::<C64>::zeros(n, n);
        for i in 0..n {
            let ni = &basis.nodes[i];
            for j in 0..n {
                let nj = &basis.nodes[j];
                let w = nj.weight;
                let g = kv.value[(i, j)];
                let dn = kv.grad_x[(i, j)] * ni.normal.x + kv.grad_y[(i, j)] * ni.normal.y;
                if ni.bubble != nj.bubble {
                    s[(i, j)] = g * w;
                    kstar[(i, j)] = dn * w;
                    continue;
                }
                let lw = 0.5 * self.log_w[(i + mq - j) % mq] + trap * ln_r;
                if i == j {
                    // regular limits stored in the table
                    s[(i, j)] = g * w + C64::from(r / (2.0 * PI) * lw);
                    kstar[(i, j)] = (dn + 1.0 / (4.0 * PI * r)) * w;
                    continue;
                }
                let dist = (ni.point - nj.point).norm();
                let j0 = bessel_j0(k * dist);
                let phi1 = -(k / (2.0 * PI)) * bessel_j1(k * dist) * dist / (2.0 * r);
                let smooth_s = g - j0 * dist.ln() / (2.0 * PI);
                let smooth_k = dn - phi1 * dist.ln();
                s[(i, j)] = smooth_s * w + C64::from(r / (2.0 * PI) * j0 * lw);
                kstar[(i, j)] = smooth_k * w + C64::from(r * phi1 * lw);
            }
        }
        (s, kstar)
    }

    /// `A_delta(alpha, omega)`.
    pub fn block(&self, material: &Material, omega: f64) -> Result<BlockOperator> {
        if !(omega >= 0.0) {
            return Err(Error::InvalidParameter(format!("omega = {omega}")));
        }
        let (sb, kb) = self.layer_pair(omega / material.v_b())?;
        let (s, k) = self.layer_pair(omega / material.v())?;
        Ok(compose_block(&sb, &kb, &s, &k, material, omega))
    }
}

/// `[[S_b, -S], [-I/2 + K*_b, -delta (I/2 + K*)]]`.
pub fn compose_block(
    s_b: &LayerOperator,
    k_b: &LayerOperator,
    s: &LayerOperator,
    k: &LayerOperator,
    material: &Material,
    omega: f64,
) -> BlockOperator {
    let n = s.matrix.nrows();
    let delta = material.delta();
    let half = DMatrix::<C64>::identity(n, n) * C64::from(0.5);
    let mut m = DMatrix::<C64>::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&s_b.matrix);
    m.view_mut((0, n), (n, n)).copy_from(&(-&s.matrix));
    m.view_mut((n, 0), (n, n)).copy_from(&(&k_b.matrix - &half));
    m.view_mut((n, n), (n, n)).copy_from(&((&half + &k.matrix) * C64::from(-delta)));
    BlockOperator { matrix: m, delta, omega, v: material.v(), v_b: material.v_b() }
}

pub fn assemble_single_layer(basis: &BoundaryBasis, alpha: QuasiMomentum, k: f64) -> Result<LayerOperator> {
    Ok(OperatorFamily::new(basis, alpha, k)?.layer_pair(k)?.0)
}

/// Matrix of `(K^{-alpha,k})^*`.
pub fn assemble_np(basis: &BoundaryBasis, alpha: QuasiMomentum, k: f64) -> Result<LayerOperator> {
    Ok(OperatorFamily::new(basis, alpha, k)?.layer_pair(k)?.1)
}

pub fn assemble_a(
    basis: &BoundaryBasis,
    material: &Material,
    alpha: QuasiMomentum,
    omega: f64,
) -> Result<BlockOperator> {
    material.validate()?;
    let k_max = omega / material.v().min(material.v_b());
    OperatorFamily::new(basis, alpha, k_max)?.block(material, omega)
}
