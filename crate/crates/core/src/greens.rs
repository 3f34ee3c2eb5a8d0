//! The alpha-quasi-periodic Helmholtz Green's function
//!
//! `G(x) = (1/|Y|) sum_q e^{i(alpha+q).x} / (k^2 - |alpha+q|^2)`,
//!
//! which behaves like `ln|x| / 2pi` near the origin. Two evaluators are
//! provided: an Ewald split (the production path) and a spectral sum in
//! which one dual index is summed in closed form, used as an independent
//! oracle.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Lattice, QuasiMomentum, Vec2};
use crate::special::{expint, EULER_GAMMA};

pub type C64 = Complex64;
/// A complex 2-vector (gradient of a complex scalar field).
pub type CVec2 = [C64; 2];

/// Smallest admissible `|k^2 - |alpha+q|^2|`.
pub const RESONANCE_GAP: f64 = 1e-12;
/// Smallest admissible distance to the source lattice, relative to `L`.
pub const SINGULAR_DISTANCE: f64 = 1e-10;

// Terms whose Gaussian factor is below e^{-40} are dropped.
const EXP_CUTOFF: f64 = 40.0;
const SERIES_TOL: f64 = 1e-18;

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GreensMethod {
    Spectral,
    #[default]
    Ewald,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreensParams {
    pub lattice: Lattice,
    pub alpha: QuasiMomentum,
    pub k: f64,
    pub method: GreensMethod,
    /// Cutoff on the outer dual index of the spectral sum. `None` sums until
    /// the remaining terms are negligible.
    pub spectral_radius: Option<usize>,
    /// Ewald splitting parameter `eta`; defaults to `sqrt(pi)/L`.
    pub ewald_split: Option<f64>,
    /// Index half-widths `[real, reciprocal]` of the Ewald sums; `None` picks
    /// them from the Gaussian decay.
    pub ewald_trunc: Option<[usize; 2]>,
}

impl GreensParams {
    pub fn new(lattice: Lattice, alpha: QuasiMomentum, k: f64) -> Self {
        Self {
            lattice,
            alpha,
            k,
            method: GreensMethod::Ewald,
            spectral_radius: None,
            ewald_split: None,
            ewald_trunc: None,
        }
    }

    pub fn with_method(mut self, method: GreensMethod) -> Self {
        self.method = method;
        self
    }

    pub fn split(&self) -> f64 {
        self.ewald_split
            .unwrap_or_else(|| default_split(self.lattice.constant))
    }

    fn validate(&self) -> Result<()> {
        if !(self.k >= 0.0) || !self.k.is_finite() {
            return Err(Error::InvalidParameter(format!("wavenumber k = {}", self.k)));
        }
        if self.alpha.norm() < 1e-12 {
            return Err(Error::ZeroQuasiMomentum);
        }
        if let Some(eta) = self.ewald_split {
            if !(eta > 0.0) {
                return Err(Error::InvalidParameter(format!("ewald split {eta}")));
            }
        }
        Ok(())
    }
}

pub fn default_split(constant: f64) -> f64 {
    PI.sqrt() / constant
}

fn check_point(lattice: &Lattice, x: Vec2) -> Result<()> {
    let distance = lattice.distance_to_lattice(x);
    if distance < SINGULAR_DISTANCE * lattice.constant {
        return Err(Error::Singular { distance });
    }
    Ok(())
}

/// Value of `G^{alpha,k}(x)`.
pub fn green(params: &GreensParams, x: Vec2) -> Result<C64> {
    params.validate()?;
    check_point(&params.lattice, x)?;
    match params.method {
        GreensMethod::Ewald => Ok(Ewald::from_params(params, params.k)?.eval(x, false).0),
        GreensMethod::Spectral => Ok(spectral_sum(params, x, false)?.0),
    }
}

/// Gradient of `G^{alpha,k}` at `x`.
pub fn green_grad(params: &GreensParams, x: Vec2) -> Result<CVec2> {
    params.validate()?;
    check_point(&params.lattice, x)?;
    match params.method {
        GreensMethod::Ewald => Ok(Ewald::from_params(params, params.k)?.eval(x, true).1),
        GreensMethod::Spectral => Ok(spectral_sum(params, x, true)?.1),
    }
}

/// Value and gradient together (one lattice sum).
pub fn green_with_grad(params: &GreensParams, x: Vec2) -> Result<(C64, CVec2)> {
    params.validate()?;
    check_point(&params.lattice, x)?;
    match params.method {
        GreensMethod::Ewald => Ok(Ewald::from_params(params, params.k)?.eval(x, true)),
        GreensMethod::Spectral => spectral_sum(params, x, true),
    }
}

/// Limits at the origin of `G(x) - ln|x|/2pi` and of its gradient.
pub fn green_regular(params: &GreensParams) -> Result<(C64, CVec2)> {
    params.validate()?;
    Ok(Ewald::from_params(params, params.k)?.regular())
}

/// First-order small-`k` term `G_1` in `G^{alpha,k} = G^{alpha,0} + k^2 G_1 + O(k^4)`:
///
/// `G_1(x) = -(1/|Y|) sum_q e^{i(alpha+q).x} / |alpha+q|^4`.
pub fn green_static_correction(lattice: &Lattice, alpha: QuasiMomentum, x: Vec2) -> Result<C64> {
    let params = GreensParams::new(*lattice, alpha, 0.0);
    params.validate()?;
    check_point(lattice, x)?;
    Ewald::from_params(&params, 0.0)?.static_correction(x)
}

/// Ewald representation with precomputed reciprocal terms and image list.
#[derive(Debug, Clone)]
pub(crate) struct Ewald {
    pub(crate) lattice: Lattice,
    pub(crate) alpha: Vec2,
    pub(crate) eta: f64,
    pub(crate) t0: f64,
    /// `(k^2 t0)^m / m!`.
    pub(crate) kcoef: Vec<f64>,
    /// Reciprocal vectors `p = alpha + q` and coefficients of `e^{ip.x}`.
    pub(crate) spectral: Vec<(Vec2, C64)>,
    /// Lattice points with their Bloch phases `e^{i alpha.n}`.
    pub(crate) images: Vec<(Vec2, C64)>,
    pub(crate) cutoff: f64,
}

fn k_series(c: f64) -> Vec<f64> {
    let mut coef = vec![1.0];
    let mut term = 1.0;
    let mut m = 1.0;
    if c <= 0.0 {
        return coef;
    }
    loop {
        term *= c / m;
        if term < SERIES_TOL {
            return coef;
        }
        coef.push(term);
        m += 1.0;
    }
}

/// Index half-widths covering a disc of radius `r`: for points
/// `m b1 + n b2`, `|m| <= r |c1| / 2pi` where `c1` is the dual of `b1`.
fn index_box(c1: Vec2, c2: Vec2, r: f64) -> (i64, i64) {
    (
        (r * c1.norm() / (2.0 * PI)).ceil() as i64 + 1,
        (r * c2.norm() / (2.0 * PI)).ceil() as i64 + 1,
    )
}

pub(crate) fn reciprocal_terms(
    lattice: &Lattice,
    alpha: Vec2,
    p_max: f64,
    trunc: Option<usize>,
) -> Vec<Vec2> {
    let (mm, nn) = match trunc {
        Some(t) => (t as i64, t as i64),
        None => index_box(lattice.l1, lattice.l2, p_max + alpha.norm()),
    };
    let mut out = Vec::new();
    for m in -mm..=mm {
        for n in -nn..=nn {
            let p = alpha + lattice.dual_point(m, n);
            if trunc.is_some() || p.norm() <= p_max {
                out.push(p);
            }
        }
    }
    out
}

pub(crate) fn cell_radius(lattice: &Lattice) -> f64 {
    0.5 * (lattice.l1 + lattice.l2).norm().max((lattice.l1 - lattice.l2).norm())
}

pub(crate) fn image_points(lattice: &Lattice, alpha: Vec2, radius: f64, trunc: Option<usize>) -> Vec<(Vec2, C64)> {
    let reach = radius + cell_radius(lattice);
    let (mm, nn) = match trunc {
        Some(t) => (t as i64, t as i64),
        None => index_box(lattice.a1, lattice.a2, reach),
    };
    let mut out = Vec::new();
    for m in -mm..=mm {
        for n in -nn..=nn {
            let l = lattice.point(m, n);
            if trunc.is_some() || l.norm() <= reach {
                out.push((l, C64::from_polar(1.0, alpha.dot(&l))));
            }
        }
    }
    out
}

fn spectral_coefficient(k2: f64, p: Vec2, t0: f64, area: f64) -> Result<C64> {
    let gap = k2 - p.norm_squared();
    if gap.abs() < RESONANCE_GAP {
        return Err(Error::Resonance { m: 0, n: 0, gap: gap.abs() });
    }
    Ok(C64::from((gap * t0).exp() / (area * gap)))
}

/// `E_0(x), ..., E_{n}(x)` by upward recurrence; `E_0` is only meaningful for `x > 0`.
pub(crate) fn expint_ladder(x: f64, n: usize, out: &mut Vec<f64>) {
    out.clear();
    let emx = (-x).exp();
    out.push(if x > 0.0 { emx / x } else { f64::INFINITY });
    if n == 0 {
        return;
    }
    out.push(expint(1, x));
    for m in 1..n {
        let next = (emx - x * out[m]) / m as f64;
        out.push(next);
    }
}

impl Ewald {
    pub(crate) fn from_params(params: &GreensParams, k: f64) -> Result<Self> {
        Self::new(&params.lattice, params.alpha.vec(), k, params.split(), params.ewald_trunc)
    }

    pub(crate) fn new(
        lattice: &Lattice,
        alpha: Vec2,
        k: f64,
        eta: f64,
        trunc: Option<[usize; 2]>,
    ) -> Result<Self> {
        let t0 = 1.0 / (4.0 * eta * eta);
        let k2 = k * k;
        let p_max = (k2 + EXP_CUTOFF / t0).sqrt();
        let spectral = reciprocal_terms(lattice, alpha, p_max, trunc.map(|t| t[1]))
            .into_iter()
            .map(|p| Ok((p, spectral_coefficient(k2, p, t0, lattice.cell_area)?)))
            .collect::<Result<Vec<_>>>()?;
        let cutoff = EXP_CUTOFF.sqrt() / eta;
        let images = image_points(lattice, alpha, cutoff, trunc.map(|t| t[0]));
        Ok(Self {
            lattice: *lattice,
            alpha,
            eta,
            t0,
            kcoef: k_series(k2 * t0),
            spectral,
            images,
            cutoff,
        })
    }

    /// Value and (optionally) gradient at `x`, which must avoid the lattice.
    pub(crate) fn eval(&self, x: Vec2, with_grad: bool) -> (C64, CVec2) {
        let (r, (m0, n0)) = self.lattice.reduce_centered(x);
        let phase0 = C64::from_polar(1.0, self.alpha.dot(&self.lattice.point(m0, n0)));
        let (mut v, mut g) = self.spectral_part(r, with_grad);
        let (sv, sg) = self.spatial_part(r, with_grad, false);
        v += sv;
        g[0] += sg[0];
        g[1] += sg[1];
        (phase0 * v, [phase0 * g[0], phase0 * g[1]])
    }

    fn spectral_part(&self, r: Vec2, with_grad: bool) -> (C64, CVec2) {
        let mut v = C64::new(0.0, 0.0);
        let mut g = [C64::new(0.0, 0.0); 2];
        for &(p, f) in &self.spectral {
            let t = f * C64::from_polar(1.0, p.dot(&r));
            v += t;
            if with_grad {
                g[0] += I * p.x * t;
                g[1] += I * p.y * t;
            }
        }
        (v, g)
    }

    /// Real-space sum at a reduced point. With `skip_origin`, the `n = 0`
    /// image is omitted (used for limits at the origin).
    fn spatial_part(&self, r: Vec2, with_grad: bool, skip_origin: bool) -> (C64, CVec2) {
        let nk = self.kcoef.len();
        let eta2 = self.eta * self.eta;
        let mut ladder = Vec::with_capacity(nk + 1);
        let mut v = C64::new(0.0, 0.0);
        let mut g = [C64::new(0.0, 0.0); 2];
        for &(l, ph) in &self.images {
            if skip_origin && l.norm_squared() == 0.0 {
                continue;
            }
            let d = r - l;
            let dist2 = d.norm_squared();
            if dist2 > self.cutoff * self.cutoff {
                continue;
            }
            let xx = dist2 * eta2;
            expint_ladder(xx, nk, &mut ladder);
            let mut s = 0.0;
            for m in 0..nk {
                s += self.kcoef[m] * ladder[m + 1];
            }
            v += ph * s;
            if with_grad {
                let mut sg = 0.0;
                for m in 0..nk {
                    sg += self.kcoef[m] * ladder[m];
                }
                g[0] += ph * (sg * d.x);
                g[1] += ph * (sg * d.y);
            }
        }
        let vs = -v / (4.0 * PI);
        let gs = eta2 / (2.0 * PI);
        (vs, [g[0] * gs, g[1] * gs])
    }

    pub(crate) fn regular(&self) -> (C64, CVec2) {
        let (mut v, mut g) = self.spectral_part(Vec2::zeros(), true);
        let (sv, sg) = self.spatial_part(Vec2::zeros(), true, true);
        v += sv;
        g[0] += sg[0];
        g[1] += sg[1];
        v += self.origin_regular();
        (v, g)
    }

    /// Contribution of the `n = 0` real-space image to `lim G - ln|x|/2pi`.
    fn origin_regular(&self) -> C64 {
        let mut tail = 0.0;
        for (m, c) in self.kcoef.iter().enumerate().skip(1) {
            tail += c / m as f64;
        }
        C64::from((EULER_GAMMA + 2.0 * self.eta.ln() - tail) / (4.0 * PI))
    }

    fn static_correction(&self, x: Vec2) -> Result<C64> {
        let (r, (m0, n0)) = self.lattice.reduce_centered(x);
        let phase0 = C64::from_polar(1.0, self.alpha.dot(&self.lattice.point(m0, n0)));
        let t0 = self.t0;
        let mut v = C64::new(0.0, 0.0);
        for &(p, _) in &self.spectral {
            let p2 = p.norm_squared();
            if p2 < RESONANCE_GAP {
                return Err(Error::ZeroQuasiMomentum);
            }
            let coef = (-p2 * t0).exp() * (-t0 / p2 - 1.0 / (p2 * p2)) / self.lattice.cell_area;
            v += coef * C64::from_polar(1.0, p.dot(&r));
        }
        let eta2 = self.eta * self.eta;
        let mut s = C64::new(0.0, 0.0);
        for &(l, ph) in &self.images {
            let dist2 = (r - l).norm_squared();
            if dist2 > self.cutoff * self.cutoff {
                continue;
            }
            s += ph * expint(2, dist2 * eta2);
        }
        v -= s * (t0 / (4.0 * PI));
        Ok(phase0 * v)
    }
}

/// Sum over `F(theta, a) = sum_n e^{i n theta} / (n - a)` for `0 < theta < 2pi`.
fn harmonic_pole(theta: f64, a: C64) -> C64 {
    let two_pi_i = C64::new(0.0, 2.0 * PI);
    if a.im >= 0.0 {
        two_pi_i * (I * a * theta).exp() / (1.0 - (two_pi_i * a).exp())
    } else {
        -two_pi_i * (I * a * (theta - 2.0 * PI)).exp() / (1.0 - (-two_pi_i * a).exp())
    }
}

/// `dF/da` for real `a` (used at double roots).
fn harmonic_pole_derivative(theta: f64, a: C64) -> C64 {
    let two_pi_i = C64::new(0.0, 2.0 * PI);
    let e = (two_pi_i * a).exp();
    let num = (I * a * theta).exp() * (I * theta * (1.0 - e) + two_pi_i * e);
    two_pi_i * num / ((1.0 - e) * (1.0 - e))
}

/// Spectral evaluation: the sum over the inner dual index is done in
/// closed form, the outer one is truncated adaptively.
fn spectral_sum(params: &GreensParams, x: Vec2, with_grad: bool) -> Result<(C64, CVec2)> {
    let lat = &params.lattice;
    let alpha = params.alpha.vec();
    let k2 = params.k * params.k;
    let (r, (m0, n0)) = lat.reduce_to_cell(x);
    let phase0 = C64::from_polar(1.0, alpha.dot(&lat.point(m0, n0)));
    let (s, t) = lat.fractional(r);
    let dist = |f: f64| f.min(1.0 - f);
    // inner direction: the one whose phase stays farthest from 0 mod 2pi
    let (a_in, a_out, frac) = if dist(s) >= dist(t) {
        (lat.a1, lat.a2, s)
    } else {
        (lat.a2, lat.a1, t)
    };
    let theta = 2.0 * PI * frac;
    let a2n = a_in.norm_squared();
    let perp = Vec2::new(-a_in.y, a_in.x) / a_in.norm();
    let pref_scale = -1.0 / (a2n * lat.cell_area);

    let term = |m: i64| -> Result<(C64, CVec2)> {
        let beta = alpha + a_out * m as f64;
        let b = beta.dot(&a_in) / a2n;
        let c = (beta.norm_squared() - k2) / a2n;
        let disc = b * b - c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for root in [-b + sq, -b - sq] {
                for n in [root.floor(), root.ceil()] {
                    let gap = (k2 - (beta + a_in * n).norm_squared()).abs();
                    if gap < RESONANCE_GAP {
                        return Err(Error::Resonance { m, n: n as i64, gap });
                    }
                }
            }
        }
        let sq = C64::new(disc, 0.0).sqrt();
        let np = -b + sq;
        let nm = -b - sq;
        let pref = pref_scale * C64::from_polar(1.0, beta.dot(&r));
        let diff = np - nm;
        if diff.norm() < 1e-7 {
            let a0 = C64::new(-b, 0.0);
            let f = harmonic_pole(theta, a0);
            let fd = harmonic_pole_derivative(theta, a0);
            let v = pref * fd;
            let mut g = [C64::new(0.0, 0.0); 2];
            if with_grad {
                let w = f + a0 * fd;
                g = [
                    pref * I * (beta.x * fd + a_in.x * w),
                    pref * I * (beta.y * fd + a_in.y * w),
                ];
            }
            return Ok((v, g));
        }
        let fp = harmonic_pole(theta, np);
        let fm = harmonic_pole(theta, nm);
        let v = pref * (fp - fm) / diff;
        let mut g = [C64::new(0.0, 0.0); 2];
        if with_grad {
            let w = (np * fp - nm * fm) / diff;
            let u = (fp - fm) / diff;
            g = [
                pref * I * (beta.x * u + a_in.x * w),
                pref * I * (beta.y * u + a_in.y * w),
            ];
        }
        Ok((v, g))
    };

    let (mut v, mut g) = term(0)?;
    let cap = params.spectral_radius.map(|r| r as i64).unwrap_or(2_000_000);
    for sign in [1i64, -1] {
        let mut quiet = 0;
        let mut m = 1i64;
        while m <= cap {
            let (tv, tg) = term(sign * m)?;
            v += tv;
            g[0] += tg[0];
            g[1] += tg[1];
            if params.spectral_radius.is_none() {
                let beta = alpha + a_out * (sign * m) as f64;
                let decaying = beta.dot(&perp).abs() > 1.5 * params.k + a_out.norm();
                let mag = tv.norm() + if with_grad { tg[0].norm() + tg[1].norm() } else { 0.0 };
                let scale = v.norm() + if with_grad { g[0].norm() + g[1].norm() } else { 0.0 };
                if decaying && mag <= 1e-17 * scale.max(1e-300) {
                    quiet += 1;
                    if quiet >= 3 {
                        break;
                    }
                } else {
                    quiet = 0;
                }
            }
            m += 1;
        }
    }
    Ok((phase0 * v, [phase0 * g[0], phase0 * g[1]]))
}

/// Lattice sums for all target/source pairs at a fixed quasi-momentum,
/// stored so that the kernel can be evaluated at any `k <= k_max` cheaply.
///
/// Coincident pairs hold the regular limits `lim G - ln|x|/2pi` and the
/// gradient limit.
#[derive(Debug, Clone)]
pub struct KernelTable {
    lattice: Lattice,
    alpha: QuasiMomentum,
    eta: f64,
    t0: f64,
    k_max: f64,
    n_terms: usize,
    n_targets: usize,
    n_sources: usize,
    spatial: Vec<C64>,
    spatial_grad: Vec<CVec2>,
    coincident: Vec<bool>,
    momenta: Vec<Vec2>,
    phase_targets: DMatrix<C64>,
    phase_sources: DMatrix<C64>,
}

/// Kernel matrices `G(x_i - y_j)` and its gradient components.
#[derive(Debug, Clone)]
pub struct KernelValues {
    pub value: DMatrix<C64>,
    pub grad_x: DMatrix<C64>,
    pub grad_y: DMatrix<C64>,
}

impl KernelTable {
    pub fn new(
        lattice: &Lattice,
        alpha: QuasiMomentum,
        targets: &[Vec2],
        sources: &[Vec2],
        k_max: f64,
    ) -> Result<Self> {
        if alpha.norm() < 1e-12 {
            return Err(Error::ZeroQuasiMomentum);
        }
        let eta = default_split(lattice.constant);
        let t0 = 1.0 / (4.0 * eta * eta);
        let n_terms = k_series(k_max * k_max * t0).len();
        let p_max = (k_max * k_max + EXP_CUTOFF / t0).sqrt();
        let av = alpha.vec();
        let momenta = reciprocal_terms(lattice, av, p_max, None);
        let cutoff = EXP_CUTOFF.sqrt() / eta;
        let images = image_points(lattice, av, cutoff, None);
        let nt = targets.len();
        let ns = sources.len();
        let tol = SINGULAR_DISTANCE * lattice.constant;

        let rows: Vec<(Vec<C64>, Vec<CVec2>, Vec<bool>)> = targets
            .par_iter()
            .map(|&x| {
                let mut sp = Vec::with_capacity(ns * n_terms);
                let mut sg = Vec::with_capacity(ns * n_terms);
                let mut co = Vec::with_capacity(ns);
                let mut ladder = Vec::with_capacity(n_terms + 1);
                let mut acc = vec![C64::new(0.0, 0.0); n_terms];
                let mut accg = vec![[C64::new(0.0, 0.0); 2]; n_terms];
                for &y in sources {
                    let (r, (m0, n0)) = lattice.reduce_centered(x - y);
                    let phase0 = C64::from_polar(1.0, av.dot(&lattice.point(m0, n0)));
                    acc.iter_mut().for_each(|a| *a = C64::new(0.0, 0.0));
                    accg.iter_mut().for_each(|a| *a = [C64::new(0.0, 0.0); 2]);
                    let same = r.norm() < tol;
                    for &(l, ph) in &images {
                        let d = r - l;
                        let dist2 = d.norm_squared();
                        if dist2 > cutoff * cutoff {
                            continue;
                        }
                        if same && l.norm_squared() == 0.0 {
                            // regular part of the origin image
                            acc[0] += C64::from(-EULER_GAMMA - 2.0 * eta.ln());
                            for (m, a) in acc.iter_mut().enumerate().skip(1) {
                                *a += C64::from(1.0 / m as f64);
                            }
                            continue;
                        }
                        let xx = dist2 * eta * eta;
                        expint_ladder(xx, n_terms, &mut ladder);
                        for m in 0..n_terms {
                            acc[m] += ph * ladder[m + 1];
                            let e = ph * ladder[m];
                            accg[m][0] += e * d.x;
                            accg[m][1] += e * d.y;
                        }
                    }
                    for m in 0..n_terms {
                        sp.push(phase0 * acc[m]);
                        sg.push([phase0 * accg[m][0], phase0 * accg[m][1]]);
                    }
                    co.push(same);
                }
                (sp, sg, co)
            })
            .collect();

        let mut spatial = Vec::with_capacity(nt * ns * n_terms);
        let mut spatial_grad = Vec::with_capacity(nt * ns * n_terms);
        let mut coincident = Vec::with_capacity(nt * ns);
        for (sp, sg, co) in rows {
            spatial.extend(sp);
            spatial_grad.extend(sg);
            coincident.extend(co);
        }
        let nq = momenta.len();
        let phase_targets =
            DMatrix::from_fn(nt, nq, |i, q| C64::from_polar(1.0, momenta[q].dot(&targets[i])));
        let phase_sources =
            DMatrix::from_fn(nq, ns, |q, j| C64::from_polar(1.0, -momenta[q].dot(&sources[j])));
        Ok(Self {
            lattice: *lattice,
            alpha,
            eta,
            t0,
            k_max,
            n_terms,
            n_targets: nt,
            n_sources: ns,
            spatial,
            spatial_grad,
            coincident,
            momenta,
            phase_targets,
            phase_sources,
        })
    }

    pub fn alpha(&self) -> QuasiMomentum {
        self.alpha
    }

    pub fn k_max(&self) -> f64 {
        self.k_max
    }

    pub fn is_coincident(&self, i: usize, j: usize) -> bool {
        self.coincident[i * self.n_sources + j]
    }

    /// Kernel matrices at wavenumber `k`.
    pub fn eval(&self, k: f64) -> Result<KernelValues> {
        if !(k >= 0.0) || k > self.k_max * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "k = {k} outside table range [0, {}]",
                self.k_max
            )));
        }
        let k2 = k * k;
        let coef = {
            let mut c = k_series(k2 * self.t0);
            c.resize(self.n_terms, 0.0);
            c
        };
        let nq = self.momenta.len();
        let mut f = Vec::with_capacity(nq);
        for &p in &self.momenta {
            f.push(spectral_coefficient(k2, p, self.t0, self.lattice.cell_area)?);
        }
        let scale_v = |d: &DMatrix<C64>, w: &dyn Fn(usize) -> C64| {
            let mut m = self.phase_targets.clone();
            for q in 0..nq {
                let s = w(q);
                m.column_mut(q).iter_mut().for_each(|z| *z *= s);
            }
            &m * d
        };
        let mut value = scale_v(&self.phase_sources, &|q| f[q]);
        let mut grad_x = scale_v(&self.phase_sources, &|q| I * self.momenta[q].x * f[q]);
        let mut grad_y = scale_v(&self.phase_sources, &|q| I * self.momenta[q].y * f[q]);

        let eta2 = self.eta * self.eta;
        let vs = -1.0 / (4.0 * PI);
        let gs = eta2 / (2.0 * PI);
        let nt = self.n_terms;
        for i in 0..self.n_targets {
            for j in 0..self.n_sources {
                let base = (i * self.n_sources + j) * nt;
                let mut v = C64::new(0.0, 0.0);
                let mut gx = C64::new(0.0, 0.0);
                let mut gy = C64::new(0.0, 0.0);
                for m in 0..nt {
                    v += coef[m] * self.spatial[base + m];
                    let g = self.spatial_grad[base + m];
                    gx += coef[m] * g[0];
                    gy += coef[m] * g[1];
                }
                value[(i, j)] += vs * v;
                grad_x[(i, j)] += gs * gx;
                grad_y[(i, j)] += gs * gy;
            }
        }
        Ok(KernelValues { value, grad_x, grad_y })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn honeycomb() -> Lattice {
        Lattice::honeycomb(1.0).unwrap()
    }

    #[test]
    fn ewald_matches_spectral_at_reference_point() {
        let lat = honeycomb();
        let p = GreensParams::new(lat, lat.dirac_point(), 0.5);
        let x = Vec2::new(0.31, 0.17);
        let e = green(&p, x).unwrap();
        let s = green(&p.with_method(GreensMethod::Spectral), x).unwrap();
        assert!((e - s).norm() < 1e-9, "{e} vs {s}");
    }

    #[test]
    fn gradients_agree_between_methods() {
        let lat = Lattice::square(1.0).unwrap();
        let p = GreensParams::new(lat, QuasiMomentum::new(1.1, -0.4), 0.7);
        let x = Vec2::new(0.23, -0.61);
        let e = green_grad(&p, x).unwrap();
        let s = green_grad(&p.with_method(GreensMethod::Spectral), x).unwrap();
        assert!((e[0] - s[0]).norm() < 1e-8 && (e[1] - s[1]).norm() < 1e-8);
    }

    #[test]
    fn split_independence() {
        let lat = honeycomb();
        let mut p = GreensParams::new(lat, QuasiMomentum::new(0.9, 1.3), 0.3);
        let x = Vec2::new(0.4, 0.05);
        let a = green(&p, x).unwrap();
        p.ewald_split = Some(3.0);
        let b = green(&p, x).unwrap();
        assert!((a - b).norm() < 1e-11);
    }

    #[test]
    fn regular_limit_matches_small_offsets() {
        let lat = honeycomb();
        let p = GreensParams::new(lat, QuasiMomentum::new(0.9, 1.3), 0.4);
        let (g0, grad0) = green_regular(&p).unwrap();
        let h = 1e-5;
        let x = Vec2::new(h, 0.0);
        let g = green(&p, x).unwrap() - C64::from(h.ln() / (2.0 * PI));
        assert!((g - g0).norm() < 1e-4, "{g} vs {g0}");
        // symmetric difference removes the log part
        let gp = green(&p, Vec2::new(h, 0.0)).unwrap();
        let gm = green(&p, Vec2::new(-h, 0.0)).unwrap();
        let dx = (gp - gm) / (2.0 * h);
        assert!((dx - grad0[0]).norm() < 1e-6, "{dx} vs {}", grad0[0]);
    }

    #[test]
    fn singular_and_resonant_inputs_are_rejected() {
        let lat = Lattice::square(1.0).unwrap();
        let p = GreensParams::new(lat, QuasiMomentum::new(1.0, 0.0), 1.0);
        assert!(matches!(green(&p, Vec2::new(0.3, 0.2)), Err(Error::Resonance { .. })));
        let q = GreensParams::new(lat, QuasiMomentum::new(1.0, 0.5), 0.2);
        assert!(matches!(green(&q, Vec2::new(1.0, 0.0)), Err(Error::Singular { .. })));
        let z = GreensParams::new(lat, QuasiMomentum::new(0.0, 0.0), 0.2);
        assert!(matches!(green(&z, Vec2::new(0.3, 0.2)), Err(Error::ZeroQuasiMomentum)));
    }

    #[test]
    fn table_reproduces_direct_evaluation() {
        let lat = honeycomb();
        let alpha = QuasiMomentum::new(2.0, 1.0);
        let pts = vec![Vec2::new(0.1, 0.2), Vec2::new(0.7, -0.3), Vec2::new(1.4, 0.05)];
        let table = KernelTable::new(&lat, alpha, &pts, &pts, 1.0).unwrap();
        for &k in &[0.0, 0.35, 1.0] {
            let kv = table.eval(k).unwrap();
            let p = GreensParams::new(lat, alpha, k);
            for i in 0..3 {
                for j in 0..3 {
                    if i == j {
                        let (g0, gr) = green_regular(&p).unwrap();
                        assert!((kv.value[(i, j)] - g0).norm() < 1e-12);
                        assert!((kv.grad_x[(i, j)] - gr[0]).norm() < 1e-12);
                        continue;
                    }
                    let (g, gr) = green_with_grad(&p, pts[i] - pts[j]).unwrap();
                    assert!((kv.value[(i, j)] - g).norm() < 1e-12);
                    assert!((kv.grad_x[(i, j)] - gr[0]).norm() < 1e-12);
                    assert!((kv.grad_y[(i, j)] - gr[1]).norm() < 1e-12);
                }
            }
        }
    }
}
