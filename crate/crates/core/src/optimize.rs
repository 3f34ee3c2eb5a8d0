//! Scalar minimization, bracketed root finding and small least-squares fits.

use crate::error::{Error, Result};

const GOLDEN: f64 = 0.381_966_011_250_105_1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub fx: f64,
    pub evaluations: usize,
}

/// Golden-section search with parabolic steps (Brent) on `[a, b]`.
///
/// Stops when the bracket is narrower than `2 (rel_tol |x| + abs_tol)`.
pub fn minimize_bracketed<F>(mut f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64, max_iter: usize) -> Result<Minimum>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b) = if a < b { (a, b) } else { (b, a) };
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x)?;
    let (mut fw, mut fv) = (fx, fx);
    let mut evaluations = 1;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let xm = 0.5 * (a + b);
        let tol1 = rel_tol * x.abs() + abs_tol;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u)?;
        evaluations += 1;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Ok(Minimum { x, fx, evaluations })
}

/// Root of `f` in `[a, b]` where `f(a)` and `f(b)` have opposite signs
/// (Illinois variant of regula falsi, safeguarded by bisection).
pub fn root_bracketed<F>(mut f: F, a: f64, b: f64, fa: f64, fb: f64, xtol: f64, max_iter: usize) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NotFound { lo: a, hi: b });
    }
    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    let mut side = 0i32;
    for it in 0..max_iter {
        if (b - a).abs() <= xtol {
            break;
        }
        let mut c = (a * fb - b * fa) / (fb - fa);
        if it % 4 == 3 || !c.is_finite() || c <= a.min(b) || c >= a.max(b) {
            c = 0.5 * (a + b);
        }
        let fc = f(c)?;
        if fc == 0.0 {
            return Ok(c);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Ok(if fa.abs() < fb.abs() { a } else { b })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

fn r_squared(y: &[f64], fitted: impl Iterator<Item = f64>) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = y.iter().zip(fitted).map(|(v, f)| (v - f).powi(2)).sum();
    if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Ordinary least-squares line `y = slope x + intercept`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::BadFit(format!("need matching samples, got {} and {}", x.len(), y.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::BadFit("degenerate abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = r_squared(y, x.iter().map(|v| slope * v + intercept));
    Ok(LineFit { slope, intercept, r2 })
}

/// Least-squares `y = coefficient * g(x)` with the uncentred `R^2`.
pub fn fit_scaled<G: Fn(f64) -> f64>(x: &[f64], y: &[f64], g: G) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::BadFit("need matching, non-empty samples".into()));
    }
    let gx: Vec<f64> = x.iter().map(|&v| g(v)).collect();
    let sgg: f64 = gx.iter().map(|v| v * v).sum();
    if sgg == 0.0 {
        return Err(Error::BadFit("degenerate model".into()));
    }
    let coef = gx.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sgg;
    let syy: f64 = y.iter().map(|v| v * v).sum();
    let ss_res: f64 = gx.iter().zip(y).map(|(a, b)| (b - coef * a).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok((coef, r2))
}

/// Least-squares quadratic `y = c0 + c1 x + c2 x^2`.
pub fn fit_quadratic(x: &[f64], y: &[f64]) -> Result<[f64; 3]> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::BadFit("need at least three samples".into()));
    }
    let a = nalgebra::DMatrix::from_fn(x.len(), 3, |i, j| x[i].powi(j as i32));
    let b = nalgebra::DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    let c = svd
        .solve(&b, 1e-14)
        .map_err(|e| Error::BadFit(e.to_string()))?;
    Ok([c[0], c[1], c[2]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic_to_high_precision() {
        let m = minimize_bracketed(|x| Ok((x - 0.3141592653589793f64).powi(2) * 1e-4), 0.0, 1.0, 1e-13, 1e-16, 200).unwrap();
        assert!((m.x - 0.3141592653589793).abs() < 1e-12, "{}", m.x);
        assert!(m.evaluations < 60);
    }

    #[test]
    fn minimizes_non_parabolic_function() {
        let m = minimize_bracketed(|x: f64| Ok((x - 2.0).abs().sqrt() + 0.1 * x), 0.0, 3.0, 1e-10, 1e-12, 500).unwrap();
        assert!((m.x - 2.0).abs() < 1e-6);
    }

    #[test]
    fn finds_bracketed_root() {
        let f = |x: f64| Ok(x.powi(3) - 2.0);
        let r = root_bracketed(f, 0.0, 2.0, -2.0, 6.0, 1e-14, 200).unwrap();
        assert!((r - 2f64.powf(1.0 / 3.0)).abs() < 1e-12);
        assert!(root_bracketed(f, 2.0, 3.0, 6.0, 25.0, 1e-14, 200).is_err());
    }

    #[test]
    fn line_and_quadratic_fits() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let f = fit_line(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept + 1.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        let yq: Vec<f64> = x.iter().map(|v| 0.5 + 0.25 * v - 0.125 * v * v).collect();
        let c = fit_quadratic(&x, &yq).unwrap();
        assert!((c[0] - 0.5).abs() < 1e-10 && (c[1] - 0.25).abs() < 1e-10 && (c[2] + 0.125).abs() < 1e-10);
        let ys: Vec<f64> = x.iter().map(|v| 3.0 * v.sqrt()).collect();
        let (a, r2) = fit_scaled(&x, &ys, f64::sqrt).unwrap();
        assert!((a - 3.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}
