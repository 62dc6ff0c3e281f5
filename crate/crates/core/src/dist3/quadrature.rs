//! Quadrature for Laplace transforms of cone measures.
//!
//! In spherical coordinates around the cone axis, the angle about the axis
//! integrates to a modified Bessel function `2 pi I0`, the radius is handled by
//! generalized Gauss-Laguerre after an exact rate change, and the polar angle by
//! adaptive Simpson.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::DMatrix;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

pub const GAUSS_LAGUERRE_ORDER: usize = 64;

const SERIES_RATIO_CUTOFF: f64 = 1e-18;
const SERIES_LIMIT: f64 = 30.0;
const SIMPSON_TOL: f64 = 1e-10;
const SIMPSON_MAX_DEPTH: u32 = 40;

/// `exp(-z) I0(z)` for `z >= 0`.
pub fn bessel_i0_scaled(z: f64) -> f64 {
    let z = z.abs();
    if z <= SERIES_LIMIT {
        let quarter = 0.25 * z * z;
        let mut term: f64 = 1.0;
        let mut sum = 1.0;
        let mut n = 1.0;
        loop {
            term *= quarter / (n * n);
            sum += term;
            if term <= SERIES_RATIO_CUTOFF * sum {
                break;
            }
            n += 1.0;
        }
        (-z).exp() * sum
    } else {
        let mut term: f64 = 1.0;
        let mut sum = 1.0;
        let mut k: f64 = 1.0;
        loop {
            let next = term * (2.0 * k - 1.0).powi(2) / (8.0 * k * z);
            if next >= term || next <= SERIES_RATIO_CUTOFF * sum {
                break;
            }
            term = next;
            sum += term;
            k += 1.0;
        }
        sum / (2.0 * PI * z).sqrt()
    }
}

/// Nodes and weights for `int_0^inf s^alpha e^{-s} f(s) ds`, via the
/// eigendecomposition of the Jacobi matrix of the Laguerre recurrence.
pub fn gauss_laguerre(order: usize, alpha: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if alpha <= -1.0 || order == 0 {
        return Err(Error::InvalidParam(format!(
            "Gauss-Laguerre needs alpha > -1 and a positive order (alpha {alpha}, order {order})"
        )));
    }
    let jacobi = DMatrix::from_fn(order, order, |r, c| {
        if r == c {
            2.0 * r as f64 + alpha + 1.0
        } else if r.abs_diff(c) == 1 {
            let i = r.max(c) as f64;
            (i * (i + alpha)).sqrt()
        } else {
            0.0
        }
    });
    let eig = jacobi.symmetric_eigen();
    let mass = gamma(alpha + 1.0);
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|k| (eig.eigenvalues[k], mass * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(pairs.into_iter().unzip())
}

fn simpson<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> f64 {
    let (flo, fmid, fhi) = (f(lo), f(0.5 * (lo + hi)), f(hi));
    let whole = simpson_rule(lo, hi, flo, fmid, fhi);
    let tol = SIMPSON_TOL * whole.abs().max(f64::MIN_POSITIVE);
    adaptive(f, lo, hi, flo, fmid, fhi, whole, tol, 0)
}

fn simpson_rule(lo: f64, hi: f64, flo: f64, fmid: f64, fhi: f64) -> f64 {
    (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)
}

#[allow(clippy::too_many_arguments)]
fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    flo: f64,
    fmid: f64,
    fhi: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let mid = 0.5 * (lo + hi);
    let (fl, fr) = (f(0.5 * (lo + mid)), f(0.5 * (mid + hi)));
    let left = simpson_rule(lo, mid, flo, fl, fmid);
    let right = simpson_rule(mid, hi, fmid, fr, fhi);
    let delta = left + right - whole;
    if depth >= SIMPSON_MAX_DEPTH || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, lo, mid, flo, fl, fmid, left, 0.5 * tol, depth + 1)
        + adaptive(f, mid, hi, fmid, fr, fhi, right, 0.5 * tol, depth + 1)
}

/// `(|t_perp|, |t3|)` after checking that `-t` lies in the open cone.
fn cone_dual(t: [f64; 3]) -> Result<(f64, f64)> {
    let perp = t[0].hypot(t[1]);
    if !(t[2] < 0.0 && perp < -t[2]) {
        return Err(Error::DomainError {
            t,
            reason: "need t3 < 0 and t1^2 + t2^2 < t3^2".to_string(),
        });
    }
    Ok((perp, -t[2]))
}

/// `int_0^inf s^alpha e^{-s} e^{-kappa s} I0(kappa s) ds` on the given rule.
fn laguerre_bessel(nodes: &[f64], weights: &[f64], kappa: f64) -> f64 {
    nodes
        .iter()
        .zip(weights)
        .map(|(&s, &w)| w * bessel_i0_scaled(kappa * s))
        .sum()
}

/// Numerical value of `int_Omega e^{t.x} (x3^2 - x1^2 - x2^2)^p dx` over the
/// cone `x3 > |x_perp|`, for `p > -1` and `-t` inside the cone.
pub fn quadrature_cone_lt(p: f64, t: [f64; 3]) -> Result<f64> {
    if !(p > -1.0) {
        return Err(Error::InvalidParam(format!(
            "cone exponent must exceed -1, got {p}"
        )));
    }
    let (perp, axial) = cone_dual(t)?;
    let alpha = 2.0 * p + 2.0;
    let (nodes, weights) = gauss_laguerre(GAUSS_LAGUERRE_ORDER, alpha)?;

    // radial and azimuthal integrals at polar angle phi, without the cos(2 phi)^p factor
    let shell = |phi: f64| {
        let b = perp * phi.sin();
        let rate = axial * phi.cos() - b;
        2.0 * PI
            * phi.sin()
            * rate.powf(-(alpha + 1.0))
            * laguerre_bessel(&nodes, &weights, b / rate)
    };

    // phi = pi/4 (1 - y^2) so that cos(2 phi) = sin(pi y^2 / 2) vanishes like y^2
    let value = if p >= 0.0 {
        let f = |y: f64| {
            let phi = FRAC_PI_4 * (1.0 - y * y);
            FRAC_PI_2 * y * (FRAC_PI_2 * y * y).sin().powf(p) * shell(phi)
        };
        simpson(&f, 0.0, 1.0)
    } else {
        // y = u^(1/(2p+2)) absorbs the integrable y^(2p+1) singularity
        let f = |u: f64| {
            let y = u.powf(1.0 / alpha);
            let phi = FRAC_PI_4 * (1.0 - y * y);
            let ratio = if y == 0.0 {
                FRAC_PI_2
            } else {
                (FRAC_PI_2 * y * y).sin() / (y * y)
            };
            FRAC_PI_2 * ratio.powf(p) / alpha * shell(phi)
        };
        simpson(&f, 0.0, 1.0)
    };
    Ok(value)
}

/// Numerical value of `int_0^inf int_0^{2 pi} e^{t3 r + r (t1 cos th + t2 sin th)} dth dr`,
/// the Laplace transform of the cone surface measure `dth dr`.
pub fn quadrature_cylinder_lt(t: [f64; 3]) -> Result<f64> {
    let (perp, axial) = cone_dual(t)?;
    let (nodes, weights) = gauss_laguerre(GAUSS_LAGUERRE_ORDER, 0.0)?;
    let rate = axial - perp;
    Ok(2.0 * PI / rate * laguerre_bessel(&nodes, &weights, perp / rate))
}
