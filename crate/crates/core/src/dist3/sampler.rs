//! Exact samplers with one counter-based RNG stream per draw.
//!
//! Draw `k` of a run with seed `s` always uses stream `k` of the ChaCha8
//! generator seeded by `s`, so output does not depend on the thread count.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use rayon::prelude::*;

use super::CanonicalGamma3;
use crate::classify::Marginal1d;
use crate::error::{Error, Result};
use crate::tensor::{orthogonality_defect, ORTHOGONALITY_TOL};

#[derive(Debug, Clone)]
pub enum Sampler {
    /// Density on the shifted cone, `0 < a < 1`.
    Interior(CanonicalGamma3),
    /// Measure on the cone surface, `a = +-1`.
    Surface { a: f64 },
    /// Independent components rotated back by `U^T`.
    Product {
        components: [Marginal1d; 3],
        u: DMatrix<f64>,
    },
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn gamma_draw(rng: &mut ChaCha8Rng, shape: f64, scale: f64) -> f64 {
    Gamma::new(shape, scale)
        .expect("shape and scale validated by the caller")
        .sample(rng)
}

impl Sampler {
    pub fn interior(g: CanonicalGamma3) -> Result<Self> {
        if g.is_singular() {
            return Err(Error::InvalidParam(
                "interior sampler needs 0 < a < 1".to_string(),
            ));
        }
        Ok(Sampler::Interior(g))
    }

    pub fn surface(a: f64) -> Result<Self> {
        if a.abs() != 1.0 {
            return Err(Error::InvalidParam(format!(
                "surface sampler needs |a| = 1, got {a}"
            )));
        }
        Ok(Sampler::Surface { a })
    }

    pub fn product(components: [Marginal1d; 3], u: DMatrix<f64>) -> Result<Self> {
        if u.nrows() != 3 || u.ncols() != 3 {
            return Err(Error::InvalidParam("rotation must be 3 x 3".to_string()));
        }
        let deviation = orthogonality_defect(&u);
        if deviation > ORTHOGONALITY_TOL {
            return Err(Error::NotOrthogonal { deviation });
        }
        for c in &components {
            if let Marginal1d::Gamma {
                shape,
                scale,
                shift,
            } = *c
            {
                if !(shape > 0.0
                    && shape.is_finite()
                    && scale != 0.0
                    && scale.is_finite()
                    && shift.is_finite())
                {
                    return Err(Error::InvalidParam(format!(
                        "invalid Gamma component {c:?}"
                    )));
                }
            }
        }
        Ok(Sampler::Product { components, u })
    }

    /// Draw number `index` of the run keyed by `seed`.
    pub fn draw(&self, seed: u64, index: u64) -> [f64; 3] {
        let mut rng = stream(seed, index);
        match self {
            Sampler::Interior(g) => {
                let a = g.a();
                let theta = rng.random_range(0.0..2.0 * PI);
                // w = tan^2(phi) ~ Beta(1, p' + 1)
                let v: f64 = rng.random();
                let w = 1.0 - (1.0 - v).powf(1.0 / (g.interior_exponent() + 1.0));
                let phi = w.sqrt().atan();
                let r = gamma_draw(&mut rng, 1.0 / (a * a), 1.0 / phi.cos());
                let rho = r * phi.sin();
                [
                    a * rho * theta.cos(),
                    a * rho * theta.sin(),
                    a * r * phi.cos() - 1.0 / a,
                ]
            }
            Sampler::Surface { a } => {
                let theta = rng.random_range(0.0..2.0 * PI);
                let r: f64 = Exp1.sample(&mut rng);
                [a * r * theta.cos(), a * r * theta.sin(), a * (r - 1.0)]
            }
            Sampler::Product { components, u } => {
                let mut z = Vector3::zeros();
                for (k, c) in components.iter().enumerate() {
                    z[k] = match *c {
                        Marginal1d::Gaussian => StandardNormal.sample(&mut rng),
                        Marginal1d::Gamma {
                            shape,
                            scale,
                            shift,
                        } => scale * gamma_draw(&mut rng, shape, 1.0) + shift,
                    };
                }
                let x = u.transpose() * z;
                [x[0], x[1], x[2]]
            }
        }
    }

    /// Draws `start..start + count`, in parallel.
    pub fn sample_range(&self, seed: u64, start: u64, count: usize) -> Vec<[f64; 3]> {
        (0..count as u64)
            .into_par_iter()
            .map(|k| self.draw(seed, start + k))
            .collect()
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<[f64; 3]> {
        self.sample_range(seed, 0, n)
    }
}

/// `n` draws from the density for `0 < a < 1`.
pub fn sample_interior(g: &CanonicalGamma3, n: usize, seed: u64) -> Result<Vec<[f64; 3]>> {
    Ok(Sampler::interior(*g)?.sample(n, seed))
}

/// `n` draws from the surface law with `a = +-1`.
pub fn sample_surface(a: f64, n: usize, seed: u64) -> Result<Vec<[f64; 3]>> {
    Ok(Sampler::surface(a)?.sample(n, seed))
}

/// `n` draws of `U^T Z` with independent components `Z_k`.
pub fn sample_case2(
    components: [Marginal1d; 3],
    u: &DMatrix<f64>,
    n: usize,
    seed: u64,
) -> Result<Vec<[f64; 3]>> {
    Ok(Sampler::product(components, u.clone())?.sample(n, seed))
}
