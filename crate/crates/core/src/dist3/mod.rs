//! The canonical three-dimensional law with parameter `0 < a <= 1`.
//!
//! For `a < 1` the law has a density on the shifted cone
//! `Omega_a = { x : x3/a + 1/a^2 > sqrt(x1^2 + x2^2)/a }`; for `a = 1` it is a
//! measure on the boundary of that cone.

mod quadrature;
mod sampler;

pub use quadrature::{
    bessel_i0_scaled, gauss_laguerre, quadrature_cone_lt, quadrature_cylinder_lt,
    GAUSS_LAGUERRE_ORDER,
};
pub use sampler::{sample_case2, sample_interior, sample_surface, Sampler};

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Canonical law, parameterized by `a` in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CanonicalGamma3 {
    a: f64,
}

impl CanonicalGamma3 {
    pub fn new(a: f64) -> Result<Self> {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "a must lie in (0, 1], got {a}"
            )));
        }
        Ok(Self { a })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// `p = 1 / (2 a^2)`.
    pub fn p(&self) -> f64 {
        0.5 / (self.a * self.a)
    }

    /// Exponent of the density, `p - 3/2`; greater than `-1` exactly when `a < 1`.
    pub fn interior_exponent(&self) -> f64 {
        self.p() - 1.5
    }

    /// Whether the law is carried by the cone surface (`a = 1`).
    pub fn is_singular(&self) -> bool {
        self.a == 1.0
    }

    /// Membership in the Laplace domain `a |s_perp| < 1 - a s3`.
    pub fn in_domain(&self, s: [f64; 3]) -> bool {
        self.a * s[0].hypot(s[1]) < 1.0 - self.a * s[2]
    }

    /// `(1 - a s3)^2 - a^2 (s1^2 + s2^2)`.
    fn quadratic(&self, s: [f64; 3]) -> f64 {
        let a = self.a;
        (1.0 - a * s[2]).powi(2) - a * a * (s[0] * s[0] + s[1] * s[1])
    }

    /// `E[exp(s . X)] = exp(-s3/a) Q(s)^(-1/(2a^2))`.
    pub fn laplace(&self, s: [f64; 3]) -> Result<f64> {
        if !self.in_domain(s) {
            return Err(Error::OutOfDomain { point: s });
        }
        Ok((-s[2] / self.a - self.p() * self.quadratic(s).ln()).exp())
    }

    /// Gradient of `log E[exp(s . X)]`.
    pub fn log_laplace_gradient(&self, s: [f64; 3]) -> Result<[f64; 3]> {
        if !self.in_domain(s) {
            return Err(Error::OutOfDomain { point: s });
        }
        let a = self.a;
        let q = self.quadratic(s);
        let perp = s[0] * s[0] + s[1] * s[1];
        Ok([s[0] / q, s[1] / q, (s[2] - a * s[2] * s[2] + a * perp) / q])
    }

    /// `log C_a`, the density's normalizing constant.
    fn log_constant(&self) -> f64 {
        let a = self.a;
        let p = self.p();
        let log_gamma_cone =
            0.5 * (2.0 * std::f64::consts::PI).ln() + ln_gamma(p) + ln_gamma(p - 0.5);
        -((1.0 / (a * a) - 1.5) * std::f64::consts::LN_2 + 3.0 * a.ln() + log_gamma_cone)
    }

    /// Cone coordinates `(x3/a + 1/a^2, |x_perp| / a)`.
    fn cone_coordinates(&self, x: [f64; 3]) -> (f64, f64) {
        let a = self.a;
        (x[2] / a + 1.0 / (a * a), x[0].hypot(x[1]) / a)
    }

    /// Membership in the open support cone `Omega_a`.
    pub fn in_support(&self, x: [f64; 3]) -> bool {
        let (axial, radial) = self.cone_coordinates(x);
        axial > 0.0 && axial * axial > radial * radial
    }

    /// Membership in the closed support, allowing a relative rounding margin.
    ///
    /// For `a` near 1 much of the mass sits within rounding distance of the
    /// boundary, so exact draws can fail [`Self::in_support`].
    pub fn in_support_closure(&self, x: [f64; 3], rel_tol: f64) -> bool {
        let (axial, radial) = self.cone_coordinates(x);
        let scale = axial.abs().max(radial).max(1.0);
        axial >= -rel_tol * scale && radial - axial <= rel_tol * scale
    }

    /// Density with respect to Lebesgue measure; zero off the support.
    pub fn density(&self, x: [f64; 3]) -> Result<f64> {
        if self.is_singular() {
            return Err(Error::InvalidParam(
                "the law with a = 1 has no density".to_string(),
            ));
        }
        if !self.in_support(x) {
            return Ok(0.0);
        }
        let (axial, radial) = self.cone_coordinates(x);
        let gap = axial * axial - radial * radial;
        Ok((self.log_constant() - axial + self.interior_exponent() * gap.ln()).exp())
    }

    /// Sampler matching this law.
    pub fn sampler(&self) -> Sampler {
        if self.is_singular() {
            Sampler::Surface { a: 1.0 }
        } else {
            Sampler::Interior(*self)
        }
    }
}

/// `C_a a^3`: the density's constant after the substitution `y = (x + e3/a) / a`.
pub fn scaled_density_constant(g: &CanonicalGamma3) -> f64 {
    (g.log_constant() + 3.0 * g.a.ln()).exp()
}

/// Closed-form Laplace transform of the canonical law.
pub fn laplace_closed_form(g: &CanonicalGamma3, s: [f64; 3]) -> Result<f64> {
    g.laplace(s)
}

/// Density of the canonical law for `a < 1`.
pub fn density(g: &CanonicalGamma3, x: [f64; 3]) -> Result<f64> {
    g.density(x)
}

/// Membership in the unshifted cone `x3 > sqrt(x1^2 + x2^2)`.
pub fn in_cone(x: [f64; 3]) -> bool {
    x[2] > x[0].hypot(x[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::marginal_params_1d;

    #[test]
    fn parameter_range() {
        assert!(CanonicalGamma3::new(0.0).is_err());
        assert!(CanonicalGamma3::new(1.2).is_err());
        assert!(CanonicalGamma3::new(f64::NAN).is_err());
        assert!(CanonicalGamma3::new(1.0).unwrap().is_singular());
        assert!(CanonicalGamma3::new(0.99).unwrap().interior_exponent() > -1.0);
    }

    #[test]
    fn laplace_examples() {
        let g = CanonicalGamma3::new(0.5).unwrap();
        assert_eq!(g.laplace([0.0; 3]).unwrap(), 1.0);
        let expected = (-1.0f64).exp() * 0.75f64.powi(-4);
        assert!((g.laplace([0.0, 0.0, 0.5]).unwrap() - expected).abs() < 1e-14);
        assert!((expected - 1.162_681).abs() < 1e-6);

        let g = CanonicalGamma3::new(1.0).unwrap();
        let v = g.laplace([0.0, 0.0, -1.0]).unwrap();
        assert!((v - std::f64::consts::E / 2.0).abs() < 1e-14);
        assert!(g.laplace([0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn domain_matches_positivity_of_quadratic() {
        let g = CanonicalGamma3::new(0.6).unwrap();
        for s in [
            [0.5, 0.2, 0.3],
            [1.0, 0.0, 0.0],
            [2.0, 0.0, 0.0],
            [0.0, 0.0, 1.7],
            [0.0, 3.0, -2.0],
        ] {
            let q = g.quadratic(s);
            let inside = g.in_domain(s);
            assert_eq!(inside, q > 0.0 && 1.0 - 0.6 * s[2] > 0.0, "{s:?}");
            match g.laplace(s) {
                Ok(v) => assert!(inside && v.is_finite() && v > 0.0),
                Err(_) => assert!(!inside),
            }
        }
    }

    #[test]
    fn third_axis_section_is_one_dimensional_gamma() {
        for a in [0.3, 0.5, 0.8, 1.0] {
            let g = CanonicalGamma3::new(a).unwrap();
            let m = marginal_params_1d(a);
            for k in 0..20 {
                let s = -2.0 + 0.15 * k as f64;
                let lhs = g.laplace([0.0, 0.0, s]).unwrap();
                let rhs = m.laplace(s).unwrap();
                assert!((lhs - rhs).abs() <= 1e-13 * rhs, "{a} {s}");
            }
        }
    }

    #[test]
    fn log_gradient_matches_finite_differences() {
        let g = CanonicalGamma3::new(0.7).unwrap();
        let s = [0.1, -0.2, 0.15];
        let grad = g.log_laplace_gradient(s).unwrap();
        for k in 0..3 {
            let h = 1e-6;
            let mut up = s;
            let mut down = s;
            up[k] += h;
            down[k] -= h;
            let fd = (g.laplace(up).unwrap().ln() - g.laplace(down).unwrap().ln()) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn density_support_and_boundary() {
        let g = CanonicalGamma3::new(0.5).unwrap();
        // apex of Omega_a sits at x3 = -1/a
        assert_eq!(g.density([0.0, 0.0, -2.5]).unwrap(), 0.0);
        assert_eq!(g.density([3.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!(g.density([0.0, 0.0, 0.0]).unwrap() > 0.0);
        // approach the boundary x_perp = x3 + 1/a at height x3 = 0
        let near: Vec<f64> = [1e-2, 1e-4, 1e-6]
            .iter()
            .map(|eps| g.density([2.0 - eps, 0.0, 0.0]).unwrap())
            .collect();
        assert!(near[0] > near[1] && near[1] > near[2] && near[2] < 1e-3);
        assert!(CanonicalGamma3::new(1.0)
            .unwrap()
            .density([0.0; 3])
            .is_err());
    }

    #[test]
    fn density_integrates_to_one() {
        // substituting y = (x + e3/a)/a turns the mass into a cone integral
        for a in [0.3, 0.5, 0.8] {
            let g = CanonicalGamma3::new(a).unwrap();
            let cone = quadrature_cone_lt(g.interior_exponent(), [0.0, 0.0, -1.0]).unwrap();
            let mass = scaled_density_constant(&g) * cone;
            assert!((mass - 1.0).abs() < 1e-6, "{a}: {mass}");
        }
    }

    #[test]
    fn density_moments_by_cone_quadrature() {
        // mass of e^{t.x} under the density equals the closed-form transform
        let a = 0.5;
        let g = CanonicalGamma3::new(a).unwrap();
        let s = [0.2, 0.0, 0.1];
        // e^{s.x} with x = a y - e3/a gives e^{-s3/a} e^{(a s - e3).y} against the cone weight
        let t = [a * s[0], a * s[1], a * s[2] - 1.0];
        let cone = quadrature_cone_lt(g.interior_exponent(), t).unwrap();
        let value = scaled_density_constant(&g) * (-s[2] / a).exp() * cone;
        let expected = g.laplace(s).unwrap();
        assert!((value - expected).abs() < 1e-6 * expected);
    }

    #[test]
    fn cone_membership() {
        assert!(in_cone([0.1, 0.1, 1.0]));
        assert!(!in_cone([1.0, 0.0, 1.0]));
        assert!(!in_cone([0.0, 0.0, -1.0]));
    }
}
