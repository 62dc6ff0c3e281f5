//! Necessary conditions for the Laplace-transform PDE system to be integrable.
//!
//! With slices `A_k = (alpha_{k,r,s})` and `B(t) = sum_k t_k A_k`, a
//! realizable tensor satisfies, for every pair `i < j` and `1 <= n <= d - 1`,
//! the polynomial identity `(C_ij t) . B(t)^n t == 0` where `C_ij = [A_i, A_j]`.
//! The identities are expanded exactly over the polynomial ring, not sampled.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::moments::{multi_indices_of_degree, MomentTable, MultiIndex};
use crate::tensor::SymmetricCubicTensor;

/// Default pass threshold on normalized identity coefficients.
pub const DEFAULT_OBSTRUCTION_TOL: f64 = 1e-9;

/// Homogeneous polynomial in `d` variables with real coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousPoly {
    dimension: usize,
    degree: usize,
    coeffs: BTreeMap<MultiIndex, f64>,
}

impl HomogeneousPoly {
    pub fn zero(dimension: usize, degree: usize) -> Self {
        Self {
            dimension,
            degree,
            coeffs: BTreeMap::new(),
        }
    }

    /// The linear form `sum_k c_k t_k`.
    pub fn linear(coeffs: &[f64]) -> Self {
        let d = coeffs.len();
        let mut p = Self::zero(d, 1);
        for (k, &c) in coeffs.iter().enumerate() {
            p.add_term(MultiIndex::unit(d, k), c);
        }
        p
    }

    /// The coordinate `t_k`.
    pub fn variable(dimension: usize, k: usize) -> Self {
        let mut p = Self::zero(dimension, 1);
        p.add_term(MultiIndex::unit(dimension, k), 1.0);
        p
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    fn add_term(&mut self, idx: MultiIndex, c: f64) {
        debug_assert_eq!(idx.length(), self.degree);
        if c == 0.0 {
            return;
        }
        *self.coeffs.entry(idx).or_insert(0.0) += c;
    }

    pub fn coefficient(&self, idx: &MultiIndex) -> f64 {
        self.coeffs.get(idx).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.coeffs.iter().map(|(k, &v)| (k, v))
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.degree, other.degree, "degree mismatch");
        for (k, v) in other.terms() {
            self.add_term(k.clone(), v);
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = Self::zero(self.dimension, self.degree);
        for (k, v) in self.terms() {
            out.add_term(k.clone(), c * v);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.dimension, self.degree + other.degree);
        for (ka, va) in self.terms() {
            for (kb, vb) in other.terms() {
                out.add_term(ka.sum(kb), va * vb);
            }
        }
        out
    }

    pub fn evaluate(&self, t: &[f64]) -> f64 {
        self.terms().map(|(k, v)| v * k.monomial(t)).sum()
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.coeffs.values().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn polynomial_matrix_vector(
    matrix: &[Vec<HomogeneousPoly>],
    vector: &[HomogeneousPoly],
) -> Vec<HomogeneousPoly> {
    matrix
        .iter()
        .map(|row| {
            let mut acc =
                HomogeneousPoly::zero(vector[0].dimension(), row[0].degree() + vector[0].degree());
            for (entry, v) in row.iter().zip(vector) {
                acc.add_assign(&entry.mul(v));
            }
            acc
        })
        .collect()
}

/// `C_ij = A_i A_j - A_j A_i`.
pub fn commutator(t: &SymmetricCubicTensor, i: usize, j: usize) -> Result<DMatrix<f64>> {
    let ai = t.slice_matrix(i)?.into_inner();
    let aj = t.slice_matrix(j)?.into_inner();
    Ok(&ai * &aj - &aj * &ai)
}

/// `B(t) = sum_k t_k A_k` as a matrix of linear forms: `B_{rs} = sum_k alpha_{k,r,s} t_k`.
fn linear_form_matrix(t: &SymmetricCubicTensor) -> Vec<Vec<HomogeneousPoly>> {
    let d = t.dimension();
    (0..d)
        .map(|r| {
            (0..d)
                .map(|s| {
                    let c: Vec<f64> = (0..d).map(|k| t.get(k, r, s)).collect();
                    HomogeneousPoly::linear(&c)
                })
                .collect()
        })
        .collect()
}

/// Symbolic expansion of `(C_ij t) . B(t)^n t`, homogeneous of degree `n + 2`.
pub fn identity_polynomial(
    t: &SymmetricCubicTensor,
    i: usize,
    j: usize,
    n: usize,
) -> Result<HomogeneousPoly> {
    let c = commutator(t, i, j)?;
    let d = t.dimension();
    let b = linear_form_matrix(t);
    let mut power: Vec<HomogeneousPoly> = (0..d).map(|k| HomogeneousPoly::variable(d, k)).collect();
    for _ in 0..n {
        power = polynomial_matrix_vector(&b, &power);
    }
    let ct: Vec<HomogeneousPoly> = (0..d)
        .map(|r| HomogeneousPoly::linear(&c.row(r).iter().copied().collect::<Vec<_>>()))
        .collect();
    let mut out = HomogeneousPoly::zero(d, n + 2);
    for (x, y) in ct.iter().zip(&power) {
        out.add_assign(&x.mul(y));
    }
    Ok(out)
}

/// Direct numeric evaluation of `(C_ij t) . B(t)^n t` at a point.
pub fn identity_value(
    t: &SymmetricCubicTensor,
    i: usize,
    j: usize,
    n: usize,
    point: &[f64],
) -> Result<f64> {
    let d = t.dimension();
    if point.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: point.len(),
        });
    }
    let c = commutator(t, i, j)?;
    let p = DVector::from_column_slice(point);
    let mut b = DMatrix::zeros(d, d);
    for (k, &pk) in point.iter().enumerate() {
        b += t.slice_matrix(k)?.into_inner() * pk;
    }
    let mut v = p.clone();
    for _ in 0..n {
        v = &b * v;
    }
    Ok((&c * p).dot(&v))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObstructionEntry {
    pub i: usize,
    pub j: usize,
    pub n: usize,
    /// Largest absolute coefficient of the expanded identity.
    pub max_coefficient: f64,
    /// `max_coefficient / max|alpha|^(n+2)`; compared against the tolerance.
    pub normalized: f64,
    /// Nonzero coefficients as `(exponents, value)`.
    pub coefficients: Vec<(Vec<u32>, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObstructionReport {
    pub dimension: usize,
    pub tolerance: f64,
    pub entries: Vec<ObstructionEntry>,
    /// Largest coefficient of the `n = 0` identity, which vanishes for every tensor.
    pub n0_max_coefficient: f64,
    pub passed: bool,
    pub verdict: String,
}

impl ObstructionReport {
    pub fn entry(&self, i: usize, j: usize, n: usize) -> Option<&ObstructionEntry> {
        self.entries
            .iter()
            .find(|e| e.i == i && e.j == j && e.n == n)
    }

    pub fn max_normalized(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.normalized))
    }
}

/// Expands every identity for `i < j`, `1 <= n <= d - 1` and reports the
/// largest coefficients. A pass means the necessary conditions hold; it does
/// not certify that a random vector with this tensor exists.
pub fn necessary_conditions(t: &SymmetricCubicTensor, tol: f64) -> ObstructionReport {
    let d = t.dimension();
    let scale = t.max_abs();
    let mut entries = Vec::new();
    let mut n0_max: f64 = 0.0;
    for i in 0..d {
        for j in (i + 1)..d {
            let zero = identity_polynomial(t, i, j, 0).expect("indices in range");
            n0_max = n0_max.max(zero.max_abs_coefficient());
            for n in 1..d {
                let poly = identity_polynomial(t, i, j, n).expect("indices in range");
                let max_coefficient = poly.max_abs_coefficient();
                let normalized = if scale > 0.0 {
                    max_coefficient / scale.powi(n as i32 + 2)
                } else {
                    0.0
                };
                entries.push(ObstructionEntry {
                    i,
                    j,
                    n,
                    max_coefficient,
                    normalized,
                    coefficients: poly
                        .terms()
                        .filter(|(_, v)| *v != 0.0)
                        .map(|(k, v)| (k.counts().to_vec(), v))
                        .collect(),
                });
            }
        }
    }
    let passed = entries.iter().all(|e| e.normalized <= tol);
    let verdict = if passed {
        "necessary conditions satisfied"
    } else {
        "necessary conditions violated"
    };
    ObstructionReport {
        dimension: d,
        tolerance: tol,
        entries,
        n0_max_coefficient: n0_max,
        passed,
        verdict: verdict.to_string(),
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(m)` by scaling and squaring with a Taylor series at `||m / 2^k||_1 <= 0.5`.
pub fn matrix_exponential(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = one_norm(m);
    let mut squarings = 0;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as i32;
    }
    let scaled = m / 2f64.powi(squarings);
    let mut result = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..=30 {
        term = &term * &scaled / k as f64;
        result += &term;
        if one_norm(&term) <= f64::EPSILON * one_norm(&result) {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Largest `|F(exp(s C_ij) xi) - F(xi)|` over the grid of flow times.
pub fn flow_invariance(
    t: &SymmetricCubicTensor,
    i: usize,
    j: usize,
    xi: &[f64],
    grid: &[f64],
) -> Result<f64> {
    let c = commutator(t, i, j)?;
    let start = DVector::from_column_slice(xi);
    let f0 = t.cubic_form(xi)?;
    let mut worst: f64 = 0.0;
    for &s in grid {
        let point = matrix_exponential(&(&c * s)) * &start;
        let f = t.cubic_form(point.as_slice())?;
        worst = worst.max((f - f0).abs());
    }
    Ok(worst)
}

/// Uniformly spaced flow times `0, .., end` (inclusive), `count` points.
pub fn uniform_grid(end: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![0.0];
    }
    (0..count)
        .map(|k| end * k as f64 / (count - 1) as f64)
        .collect()
}

/// Largest `|F(v) - E[(v.X)^3] / 2|` over random unit vectors `v`.
pub fn cubic_matches_third_moments(
    t: &SymmetricCubicTensor,
    tbl: &mut MomentTable<f64>,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let d = t.dimension();
    tbl.fill_to_degree(3)?;
    let cubes = multi_indices_of_degree(d, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let third: f64 = cubes
            .iter()
            .map(|idx| 6.0 / idx.factorial() * idx.monomial(&v) * tbl.get(idx).expect("filled"))
            .sum();
        worst = worst.max((t.cubic_form(&v)? - 0.5 * third).abs());
    }
    Ok(worst)
}
