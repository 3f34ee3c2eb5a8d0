//! Special functions needed by the lattice sums and the boundary quadrature.

use std::f64::consts::PI;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const EPS: f64 = 1e-17;
const MAX_ITER: usize = 500;

/// Generalized exponential integral `E_n(x) = int_1^inf e^{-xt} t^{-n} dt`.
///
/// `E_0(x) = e^{-x}/x`. For `x = 0` only `n >= 2` is finite.
pub fn expint(n: usize, x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if n == 0 {
        return (-x).exp() / x;
    }
    if x == 0.0 {
        return if n >= 2 { 1.0 / (n as f64 - 1.0) } else { f64::INFINITY };
    }
    let nm1 = n - 1;
    if x > 1.0 {
        // modified Lentz continued fraction
        let tiny = 1e-300;
        let mut b = x + n as f64;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=MAX_ITER {
            let an = -(i as f64) * (nm1 as f64 + i as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < EPS {
                break;
            }
        }
        h * (-x).exp()
    } else {
        let mut ans = if nm1 != 0 {
            1.0 / nm1 as f64
        } else {
            -x.ln() - EULER_GAMMA
        };
        let mut fact = 1.0;
        for i in 1..=MAX_ITER {
            fact *= -x / i as f64;
            let del = if i != nm1 {
                -fact / (i as f64 - nm1 as f64)
            } else {
                let psi = -EULER_GAMMA + (1..=nm1).map(|k| 1.0 / k as f64).sum::<f64>();
                fact * (-x.ln() + psi)
            };
            ans += del;
            if del.abs() < ans.abs() * EPS {
                break;
            }
        }
        ans
    }
}

/// `E_1(x) + ln x`, finite at `x = 0` where it equals `-gamma`.
pub fn expint1_regular(x: f64) -> f64 {
    if x == 0.0 {
        return -EULER_GAMMA;
    }
    if x > 1.0 {
        return expint(1, x) + x.ln();
    }
    // E_1(x) = -gamma - ln x - sum_{k>=1} (-x)^k / (k k!)
    let mut sum = 0.0;
    let mut term = 1.0;
    for k in 1..MAX_ITER {
        term *= -x / k as f64;
        let del = term / k as f64;
        sum += del;
        if del.abs() < EPS * sum.abs().max(1e-300) {
            break;
        }
    }
    -EULER_GAMMA - sum
}

/// Bessel function of the first kind, order 0.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 12.0 {
        let q = -x * x / 4.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..200 {
            term *= q / (k as f64 * k as f64);
            sum += term;
            if term.abs() < 1e-17 * sum.abs().max(1e-300) && k > 2 {
                break;
            }
        }
        sum
    } else {
        let (p, q) = hankel_pq(0.0, x);
        let chi = x - PI / 4.0;
        (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
    }
}

/// Bessel function of the first kind, order 1.
pub fn bessel_j1(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let value = if x <= 12.0 {
        let q = -x * x / 4.0;
        let mut term = x / 2.0;
        let mut sum = term;
        for k in 1..200 {
            term *= q / (k as f64 * (k as f64 + 1.0));
            sum += term;
            if term.abs() < 1e-17 * sum.abs().max(1e-300) && k > 2 {
                break;
            }
        }
        sum
    } else {
        let (p, q) = hankel_pq(1.0, x);
        let chi = x - 3.0 * PI / 4.0;
        (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
    };
    sign * value
}

// Hankel asymptotic series P, Q for J_nu at large x.
fn hankel_pq(nu: f64, x: f64) -> (f64, f64) {
    let mu = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..40 {
        let kf = k as f64;
        let next = term * (mu - (2.0 * kf - 1.0).powi(2)) / (kf * 8.0 * x);
        if next.abs() > prev {
            break;
        }
        prev = next.abs();
        term = next;
        if k % 2 == 1 {
            let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            q += sign * term;
        } else {
            let sign = if (k / 2) % 2 == 1 { -1.0 } else { 1.0 };
            p += sign * term;
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    (p, q)
}
