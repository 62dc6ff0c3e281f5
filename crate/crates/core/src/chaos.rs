//! Operators reconstructed from moments on a truncated chaos decomposition.
//!
//! Monomials of degree `<= N` are orthogonalized degree by degree under
//! `<x^u, x^v> = E[X^(u+v)]`. Each chaos space `G_n` is obtained from the
//! Schur complement of the degree-`n` Gram block against `F_{n-1}`. The
//! multiplication operators `X_i` are then expressed in chaos coordinates and
//! split by grading into annihilation, preservation and creation blocks.
//!
//! Float mode builds an orthonormal basis from an eigendecomposition of each
//! Schur complement. Exact mode runs Gram-Schmidt on the same Schur
//! complement in rational arithmetic and keeps the basis orthogonal but not
//! normalized; the squared norms are carried in [`ChaosBasis::norms`].

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_rational::BigRational;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::moments::{multi_indices_up_to, MomentTable, MultiIndex};
use crate::scalar::Scalar;

/// Default truncation degree.
pub const DEFAULT_DEGREE: usize = 4;

/// Condition estimate of a Schur complement above which float mode gives up.
pub const MAX_CONDITION: f64 = 1e12;

/// Eigenvalues below this fraction of the largest are treated as rank loss.
const RANK_CUTOFF: f64 = 1e-14;

/// Tolerance for negative Gram eigenvalues, relative to the largest.
const PSD_TOL: f64 = 1e-10;

/// Small dense row-major matrix over a [`Scalar`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for k in 0..n {
            m.set(k, k, S::one());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> &S {
        &self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.cols + c] = v;
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r).clone())
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a.is_zero() {
                    continue;
                }
                for c in 0..other.cols {
                    let b = other.get(k, c);
                    if b.is_zero() {
                        continue;
                    }
                    let idx = r * out.cols + c;
                    out.data[idx] = out.data[idx].clone() + a.clone() * b.clone();
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a.clone() + b.clone())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a.clone() - b.clone())
    }

    pub fn scale(&self, s: &S) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v.clone() * s.clone()).collect(),
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(&S, &S) -> S) -> Self {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "shape mismatch"
        );
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(a, b))
                .collect(),
        }
    }

    /// `self * other - other * self`.
    pub fn commutator(&self, other: &Self) -> Self {
        self.mul(other).sub(&other.mul(self))
    }

    /// Keeps the first `n` columns.
    pub fn leading_columns(&self, n: usize) -> Self {
        Self::from_fn(self.rows, n, |r, c| self.get(r, c).clone())
    }

    pub fn frobenius(&self) -> f64 {
        self.data
            .iter()
            .map(|v| v.to_f64().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.to_f64().abs()))
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| self.get(r, c).to_f64())
    }
}

/// Orthogonalization of one Schur complement block.
///
/// Given the Gram matrix `s` of the residual monomials, returns `t` whose
/// columns combine residuals into new basis vectors, and their squared norms.
pub trait ChaosScalar: Scalar {
    fn orthogonalize_block(s: &Mat<Self>, degree: usize) -> Result<(Mat<Self>, Vec<Self>)>;
}

impl ChaosScalar for f64 {
    fn orthogonalize_block(s: &Mat<f64>, degree: usize) -> Result<(Mat<f64>, Vec<f64>)> {
        let k = s.rows();
        let eig = s.to_dmatrix().symmetric_eigen();
        let largest = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut kept = Vec::new();
        for &c in &order {
            let lambda = eig.eigenvalues[c];
            if lambda < -PSD_TOL * largest {
                return Err(Error::IndefiniteGram {
                    degree,
                    eigenvalue: lambda,
                });
            }
            if lambda > RANK_CUTOFF * largest {
                kept.push(c);
            }
        }
        if let Some(&smallest) = kept.last() {
            let condition = largest / eig.eigenvalues[smallest];
            if condition > MAX_CONDITION {
                return Err(Error::IllConditioned { degree, condition });
            }
        }
        let t = Mat::from_fn(k, kept.len(), |r, c| {
            let col = kept[c];
            eig.eigenvectors[(r, col)] / eig.eigenvalues[col].sqrt()
        });
        Ok((t, vec![1.0; kept.len()]))
    }
}

impl ChaosScalar for BigRational {
    fn orthogonalize_block(
        s: &Mat<BigRational>,
        degree: usize,
    ) -> Result<(Mat<BigRational>, Vec<BigRational>)> {
        let k = s.rows();
        let mut columns: Vec<Vec<BigRational>> = Vec::new();
        let mut norms: Vec<BigRational> = Vec::new();
        // s times each accepted column, cached for the projections
        let mut s_columns: Vec<Vec<BigRational>> = Vec::new();
        for m in 0..k {
            let mut t = vec![BigRational::from_usize(0); k];
            t[m] = BigRational::from_usize(1);
            for ((col, sc), norm) in columns.iter().zip(&s_columns).zip(&norms) {
                let coef = sc[m].clone() / norm.clone();
                for (x, y) in t.iter_mut().zip(col) {
                    *x = x.clone() - coef.clone() * y.clone();
                }
            }
            let st: Vec<BigRational> = (0..k)
                .map(|r| {
                    (0..k).fold(BigRational::from_usize(0), |acc, c| {
                        acc + s.get(r, c).clone() * t[c].clone()
                    })
                })
                .collect();
            let norm = t
                .iter()
                .zip(&st)
                .fold(BigRational::from_usize(0), |acc, (a, b)| {
                    acc + a.clone() * b.clone()
                });
            if norm < BigRational::from_usize(0) {
                return Err(Error::IndefiniteGram {
                    degree,
                    eigenvalue: norm.to_f64(),
                });
            }
            if norm == BigRational::from_usize(0) {
                continue;
            }
            columns.push(t);
            s_columns.push(st);
            norms.push(norm);
        }
        let t = Mat::from_fn(k, columns.len(), |r, c| columns[c][r].clone());
        Ok((t, norms))
    }
}

/// Graded basis of `F_N` in monomial coordinates.
#[derive(Debug, Clone)]
pub struct ChaosBasis<S> {
    max_degree: usize,
    dimension: usize,
    monomials: Vec<MultiIndex>,
    /// Column `b` holds the monomial coefficients of basis vector `b`.
    vectors: Mat<S>,
    /// Squared norms of the basis vectors (all one in float mode).
    norms: Vec<S>,
    /// Chaos degree of each basis vector.
    degrees: Vec<usize>,
    /// Gram matrix of the monomials up to degree `N`.
    gram: Mat<S>,
}

impl<S: Scalar> ChaosBasis<S> {
    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn monomials(&self) -> &[MultiIndex] {
        &self.monomials
    }

    pub fn vectors(&self) -> &Mat<S> {
        &self.vectors
    }

    pub fn norms(&self) -> &[S] {
        &self.norms
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    /// `dim G_n` for `n = 0..=N`.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![0; self.max_degree + 1];
        for &g in &self.degrees {
            dims[g] += 1;
        }
        dims
    }

    /// Number of basis vectors of degree `<= m`.
    pub fn prefix_len(&self, m: usize) -> usize {
        self.degrees.iter().take_while(|&&g| g <= m).count()
    }

    /// Largest entry of `Q^T G Q - diag(norms)`.
    pub fn orthogonality_defect(&self) -> f64 {
        let inner = self.vectors.transpose().mul(&self.gram).mul(&self.vectors);
        let n = self.norms.len();
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in 0..n {
                let target = if r == c {
                    self.norms[r].clone()
                } else {
                    S::zero()
                };
                worst = worst.max((inner.get(r, c).clone() - target).to_f64().abs());
            }
        }
        worst
    }
}

fn gram_matrix<S: Scalar>(
    tbl: &MomentTable<S>,
    monomials: &[MultiIndex],
    shift: Option<usize>,
) -> Mat<S> {
    let n = monomials.len();
    Mat::from_fn(n, n, |r, c| {
        let mut idx = monomials[r].sum(&monomials[c]);
        if let Some(i) = shift {
            idx = idx.plus(i);
        }
        tbl.get(&idx)
            .expect("moments filled before assembly")
            .clone()
    })
}

/// Orthogonalizes the monomials of degree `<= max_degree`.
///
/// Fills the moment table to degree `2 * max_degree + 1` so the same table can
/// be handed to [`build_operators`].
pub fn build_chaos_basis<S: ChaosScalar>(
    tbl: &mut MomentTable<S>,
    max_degree: usize,
) -> Result<ChaosBasis<S>> {
    tbl.fill_to_degree(2 * max_degree + 1)?;
    let d = tbl.dimension();
    let monomials = multi_indices_up_to(d, max_degree);
    let m = monomials.len();
    let gram = gram_matrix(tbl, &monomials, None);

    // basis columns, and the Gram matrix applied to each of them
    let mut q_cols: Vec<Vec<S>> = Vec::new();
    let mut gq_cols: Vec<Vec<S>> = Vec::new();
    let mut norms: Vec<S> = Vec::new();
    let mut degrees = Vec::new();

    let mut start = 0;
    for degree in 0..=max_degree {
        let block: Vec<usize> = (start..m)
            .take_while(|&u| monomials[u].length() == degree)
            .collect();
        start += block.len();
        let k = block.len();

        // projection coefficients of each new monomial onto the existing basis
        let coef: Vec<Vec<S>> = gq_cols
            .iter()
            .zip(&norms)
            .map(|(gq, nb)| block.iter().map(|&u| gq[u].clone() / nb.clone()).collect())
            .collect();

        let schur = Mat::from_fn(k, k, |r, c| {
            let mut v = gram.get(block[r], block[c]).clone();
            for (cb, nb) in coef.iter().zip(&norms) {
                v = v - cb[r].clone() * cb[c].clone() * nb.clone();
            }
            v
        });
        let (t, new_norms) = S::orthogonalize_block(&schur, degree)?;

        // residual r_u = e_u - sum_b coef[b][u] q_b, and G r_u
        let residual = |col: &Vec<Vec<S>>, base: &dyn Fn(usize, usize) -> S| -> Vec<Vec<S>> {
            (0..k)
                .map(|j| {
                    let mut v: Vec<S> = (0..m).map(|row| base(row, block[j])).collect();
                    for (cb, qb) in coef.iter().zip(col) {
                        let c = cb[j].clone();
                        if c.is_zero() {
                            continue;
                        }
                        for (x, y) in v.iter_mut().zip(qb) {
                            *x = x.clone() - c.clone() * y.clone();
                        }
                    }
                    v
                })
                .collect()
        };
        let r_cols = residual(&q_cols, &|row, u| {
            if row == u {
                S::one()
            } else {
                S::zero()
            }
        });
        let gr_cols = residual(&gq_cols, &|row, u| gram.get(row, u).clone());

        for (c, nb) in new_norms.into_iter().enumerate() {
            let combine = |cols: &Vec<Vec<S>>| -> Vec<S> {
                (0..m)
                    .map(|row| {
                        (0..k).fold(S::zero(), |acc, j| {
                            acc + cols[j][row].clone() * t.get(j, c).clone()
                        })
                    })
                    .collect()
            };
            q_cols.push(combine(&r_cols));
            gq_cols.push(combine(&gr_cols));
            norms.push(nb);
            degrees.push(degree);
        }
    }

    let vectors = Mat::from_fn(m, q_cols.len(), |r, c| q_cols[c][r].clone());
    Ok(ChaosBasis {
        max_degree,
        dimension: d,
        monomials,
        vectors,
        norms,
        degrees,
        gram,
    })
}

/// Multiplication operators and their graded blocks in chaos coordinates.
#[derive(Debug, Clone)]
pub struct OperatorSet<S> {
    max_degree: usize,
    degrees: Vec<usize>,
    norms: Vec<S>,
    x: Vec<Mat<S>>,
    lower: Vec<Mat<S>>,
    diagonal: Vec<Mat<S>>,
    upper: Vec<Mat<S>>,
    off_band: Vec<Mat<S>>,
    u: Vec<Mat<S>>,
    v: Vec<Mat<S>>,
}

impl<S: Scalar> OperatorSet<S> {
    pub fn dimension(&self) -> usize {
        self.x.len()
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn norms(&self) -> &[S] {
        &self.norms
    }

    /// Matrix of `P_N X_i` on `F_N`.
    pub fn x(&self, i: usize) -> &Mat<S> {
        &self.x[i]
    }

    /// `a-(i)`: the part of `X_i` lowering the chaos degree by one.
    pub fn annihilation(&self, i: usize) -> &Mat<S> {
        &self.lower[i]
    }

    /// `a0(i)`: the degree-preserving part of `X_i`.
    pub fn preservation(&self, i: usize) -> &Mat<S> {
        &self.diagonal[i]
    }

    /// `a+(i)`: the part of `X_i` raising the chaos degree by one.
    pub fn creation(&self, i: usize) -> &Mat<S> {
        &self.upper[i]
    }

    /// Entries of `X_i` more than one degree off the diagonal; zero for a valid law.
    pub fn off_band(&self, i: usize) -> &Mat<S> {
        &self.off_band[i]
    }

    pub fn semi_annihilation(&self, i: usize) -> &Mat<S> {
        &self.u[i]
    }

    pub fn semi_creation(&self, i: usize) -> &Mat<S> {
        &self.v[i]
    }

    /// Number of chaos coordinates of degree `<= m`.
    pub fn prefix_len(&self, m: usize) -> usize {
        self.degrees.iter().take_while(|&&g| g <= m).count()
    }

    /// `diag(norms) * m`, turning coordinates into inner products.
    fn weighted(&self, m: &Mat<S>) -> Mat<S> {
        Mat::from_fn(m.rows(), m.cols(), |r, c| {
            self.norms[r].clone() * m.get(r, c).clone()
        })
    }

    /// `||a+(i) - a-(i)^*||` restricted to `F_{N-1}`, where the creation block is complete.
    pub fn duality_defect(&self, i: usize) -> f64 {
        let m = self.prefix_len(self.max_degree.saturating_sub(1));
        let plus = self.weighted(&self.upper[i]);
        let minus = self.weighted(&self.lower[i]).transpose();
        plus.sub(&minus).leading_columns(m).max_abs()
    }

    /// Asymmetry of the weighted preservation block.
    pub fn preservation_asymmetry(&self, i: usize) -> f64 {
        let w = self.weighted(&self.diagonal[i]);
        w.sub(&w.transpose()).max_abs()
    }
}

/// Computes `<X_i e_a, e_b> / ||e_b||^2` for every variable from moments.
pub fn build_operators<S: Scalar>(
    basis: &ChaosBasis<S>,
    tbl: &MomentTable<S>,
) -> Result<OperatorSet<S>> {
    let needed = 2 * basis.max_degree + 1;
    if tbl.filled_degree().is_none_or(|f| f < needed) {
        return Err(Error::Truncation(format!(
            "operators need moments to degree {needed}"
        )));
    }
    let q = basis.vectors();
    let qt = q.transpose();
    let n = basis.norms.len();
    let degrees = basis.degrees.clone();

    let x: Vec<Mat<S>> = (0..basis.dimension)
        .into_par_iter()
        .map(|i| {
            let h = gram_matrix(tbl, &basis.monomials, Some(i));
            let inner = qt.mul(&h).mul(q);
            Mat::from_fn(n, n, |r, c| {
                inner.get(r, c).clone() / basis.norms[r].clone()
            })
        })
        .collect();

    let band = |m: &Mat<S>, keep: &dyn Fn(usize, usize) -> bool| {
        Mat::from_fn(n, n, |r, c| {
            if keep(degrees[r], degrees[c]) {
                m.get(r, c).clone()
            } else {
                S::zero()
            }
        })
    };
    let lower: Vec<Mat<S>> = x.iter().map(|m| band(m, &|r, c| r + 1 == c)).collect();
    let diagonal: Vec<Mat<S>> = x.iter().map(|m| band(m, &|r, c| r == c)).collect();
    let upper: Vec<Mat<S>> = x.iter().map(|m| band(m, &|r, c| r == c + 1)).collect();
    let off_band: Vec<Mat<S>> = x
        .iter()
        .map(|m| band(m, &|r, c| r.abs_diff(c) > 1))
        .collect();

    let half = S::one() / S::from_usize(2);
    let u = lower
        .iter()
        .zip(&diagonal)
        .map(|(l, z)| l.add(&z.scale(&half)))
        .collect();
    let v = upper
        .iter()
        .zip(&diagonal)
        .map(|(p, z)| p.add(&z.scale(&half)))
        .collect();

    Ok(OperatorSet {
        max_degree: basis.max_degree,
        degrees,
        norms: basis.norms.clone(),
        x,
        lower,
        diagonal,
        upper,
        off_band,
        u,
        v,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomReport {
    /// Checks are restricted to `F_m`.
    pub degree_cap: usize,
    /// Largest residual over all pairs `(i, j)`, one entry per rule.
    pub residuals: Vec<Residual>,
    pub max_residual: f64,
}

fn check_region(ops_degree: usize, m: usize, lag: usize) -> Result<()> {
    if m + lag > ops_degree {
        return Err(Error::Truncation(format!(
            "degree cap {m} needs truncation degree at least {}",
            m + lag
        )));
    }
    Ok(())
}

/// Residuals of the five commutation rules, the semi-quantum symmetry
/// `[U_i, X_j] = [U_j, X_i]` and the structural checks, on `F_m` with `m <= N - 2`.
pub fn check_axioms<S: Scalar>(ops: &OperatorSet<S>, m: usize) -> Result<AxiomReport> {
    check_region(ops.max_degree, m, 2)?;
    let cols = ops.prefix_len(m);
    let d = ops.dimension();
    let restricted = |mat: Mat<S>| mat.leading_columns(cols).max_abs();

    let mut worst = vec![0.0_f64; 6];
    for i in 0..d {
        for j in 0..d {
            let (lm_i, lm_j) = (&ops.lower[i], &ops.lower[j]);
            let (z_i, z_j) = (&ops.diagonal[i], &ops.diagonal[j]);
            let (up_i, up_j) = (&ops.upper[i], &ops.upper[j]);
            let values = [
                restricted(lm_i.commutator(lm_j)),
                restricted(lm_i.commutator(z_j).sub(&lm_j.commutator(z_i))),
                restricted(
                    z_i.commutator(z_j)
                        .sub(&lm_j.commutator(up_i))
                        .add(&lm_i.commutator(up_j)),
                ),
                restricted(z_i.commutator(up_j).sub(&z_j.commutator(up_i))),
                restricted(up_i.commutator(up_j)),
                restricted(
                    ops.u[i]
                        .commutator(&ops.x[j])
                        .sub(&ops.u[j].commutator(&ops.x[i])),
                ),
            ];
            for (w, v) in worst.iter_mut().zip(values) {
                *w = w.max(v);
            }
        }
    }
    let names = [
        "annihilation_commute",
        "annihilation_preservation",
        "preservation_commutator",
        "preservation_creation",
        "creation_commute",
        "semi_quantum_symmetry",
    ];
    let mut residuals: Vec<Residual> = names
        .iter()
        .zip(worst)
        .map(|(n, v)| Residual {
            name: n.to_string(),
            value: v,
        })
        .collect();

    let mut structure = [0.0_f64; 4];
    let inner = ops.prefix_len(ops.max_degree - 1);
    for i in 0..d {
        structure[0] = structure[0].max(ops.off_band[i].max_abs());
        structure[1] = structure[1].max(ops.duality_defect(i));
        structure[2] = structure[2].max(ops.preservation_asymmetry(i));
        for j in 0..d {
            let c = ops.x[i].commutator(&ops.x[j]).leading_columns(inner);
            structure[3] = structure[3].max(c.max_abs());
        }
    }
    for (name, value) in [
        "off_band",
        "duality",
        "preservation_symmetry",
        "multiplication_commute",
    ]
    .iter()
    .zip(structure)
    {
        residuals.push(Residual {
            name: name.to_string(),
            value,
        });
    }
    let max_residual = residuals.iter().fold(0.0, |m: f64, r| m.max(r.value));
    Ok(AxiomReport {
        degree_cap: m,
        residuals,
        max_residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeixnerFit {
    /// `(i, i_1)` for single commutators, `(i, i_1, i_2)` for double ones.
    pub indices: Vec<usize>,
    pub b: Vec<f64>,
    /// Coefficient of the identity; absent for double commutators.
    pub c: Option<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeixnerReport {
    pub order: usize,
    pub degree_cap: usize,
    pub fits: Vec<MeixnerFit>,
    pub max_residual: f64,
}

impl MeixnerReport {
    pub fn fit(&self, indices: &[usize]) -> Option<&MeixnerFit> {
        self.fits.iter().find(|f| f.indices == indices)
    }
}

/// Solves the least-squares problem `target ~ sum_l z_l basis_l` by normal equations.
fn fit_span<S: Scalar>(target: &Mat<S>, basis: &[Mat<S>]) -> Result<(Vec<S>, f64)> {
    let p = basis.len();
    let dot = |a: &Mat<S>, b: &Mat<S>| {
        a.data
            .iter()
            .zip(&b.data)
            .fold(S::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
    };
    let mut a: Vec<Vec<S>> = (0..p)
        .map(|r| (0..p).map(|c| dot(&basis[r], &basis[c])).collect())
        .collect();
    let mut rhs: Vec<S> = basis.iter().map(|b| dot(b, target)).collect();
    let scale = a
        .iter()
        .enumerate()
        .fold(0.0_f64, |m, (k, row)| m.max(row[k].to_f64().abs()));

    // Gaussian elimination with partial pivoting
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&x, &y| {
                a[x][col]
                    .to_f64()
                    .abs()
                    .total_cmp(&a[y][col].to_f64().abs())
            })
            .expect("nonempty range");
        let singular = if S::EXACT {
            a[pivot][col].is_zero()
        } else {
            a[pivot][col].to_f64().abs() <= 1e-12 * scale
        };
        if singular {
            return Err(Error::RankDeficientFit);
        }
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        for r in (col + 1)..p {
            let f = a[r][col].clone() / a[col][col].clone();
            if f.is_zero() {
                continue;
            }
            for c in col..p {
                a[r][c] = a[r][c].clone() - f.clone() * a[col][c].clone();
            }
            rhs[r] = rhs[r].clone() - f * rhs[col].clone();
        }
    }
    let mut z = vec![S::zero(); p];
    for r in (0..p).rev() {
        let mut v = rhs[r].clone();
        for c in (r + 1)..p {
            v = v - a[r][c].clone() * z[c].clone();
        }
        z[r] = v / a[r][r].clone();
    }
    let mut fitted = Mat::zeros(target.rows(), target.cols());
    for (zl, bl) in z.iter().zip(basis) {
        fitted = fitted.add(&bl.scale(zl));
    }
    Ok((z, target.sub(&fitted).frobenius()))
}

/// Fits nested commutators of `U_i` with multiplication operators.
///
/// `order = 1`: `[U_i, X_j]` on `F_m` (`m <= N - 1`) against `X_1..X_d, I`.
/// `order = 2`: `[[U_i, X_j], X_k]` on `F_m` (`m <= N - 2`) against `X_l - 2 U_l`.
pub fn check_n_meixner<S: Scalar>(
    ops: &OperatorSet<S>,
    order: usize,
    m: usize,
) -> Result<MeixnerReport> {
    let d = ops.dimension();
    let cols = ops.prefix_len(m);
    let n = ops.degrees.len();
    let mut fits = Vec::new();
    match order {
        1 => {
            check_region(ops.max_degree, m, 1)?;
            let mut basis: Vec<Mat<S>> = ops.x.iter().map(|x| x.leading_columns(cols)).collect();
            basis.push(Mat::identity(n).leading_columns(cols));
            for i in 0..d {
                for j in 0..d {
                    let target = ops.u[i].commutator(&ops.x[j]).leading_columns(cols);
                    let (z, residual) = fit_span(&target, &basis)?;
                    fits.push(MeixnerFit {
                        indices: vec![i, j],
                        b: z[..d].iter().map(Scalar::to_f64).collect(),
                        c: Some(z[d].to_f64()),
                        residual,
                    });
                }
            }
        }
        2 => {
            check_region(ops.max_degree, m, 2)?;
            let two = S::from_usize(2);
            let basis: Vec<Mat<S>> = (0..d)
                .map(|l| ops.x[l].sub(&ops.u[l].scale(&two)).leading_columns(cols))
                .collect();
            for i in 0..d {
                for j in 0..d {
                    let inner = ops.u[i].commutator(&ops.x[j]);
                    for k in 0..d {
                        let target = inner.commutator(&ops.x[k]).leading_columns(cols);
                        let (z, residual) = fit_span(&target, &basis)?;
                        fits.push(MeixnerFit {
                            indices: vec![i, j, k],
                            b: z.iter().map(Scalar::to_f64).collect(),
                            c: None,
                            residual,
                        });
                    }
                }
            }
        }
        other => {
            return Err(Error::InvalidParam(format!(
                "commutator order must be 1 or 2, got {other}"
            )))
        }
    }
    let max_residual = fits.iter().fold(0.0, |acc: f64, f| acc.max(f.residual));
    Ok(MeixnerReport {
        order,
        degree_cap: m,
        fits,
        max_residual,
    })
}

/// Convenience: basis and operators at truncation degree `n`.
pub fn operators_from_moments<S: ChaosScalar>(
    tbl: &mut MomentTable<S>,
    n: usize,
) -> Result<(ChaosBasis<S>, OperatorSet<S>)> {
    let basis = build_chaos_basis(tbl, n)?;
    let ops = build_operators(&basis, tbl)?;
    Ok((basis, ops))
}

/// Map from monomial to its position, for callers inspecting basis vectors.
pub fn monomial_positions(basis: &ChaosBasis<impl Scalar>) -> HashMap<MultiIndex, usize> {
    basis
        .monomials()
        .iter()
        .enumerate()
        .map(|(k, m)| (m.clone(), k))
        .collect()
}
