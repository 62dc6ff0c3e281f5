//! Reduction of a three-dimensional coefficient tensor to canonical form.
//!
//! Either some commutator `[A_i, A_j]` is nonzero, and a rotation brings the
//! tensor to the one-parameter family with cubic form
//! `3a s3 (s1^2 + s2^2) + a s3^3`, or all slices commute and the vector splits
//! into independent one-dimensional Gamma or Gaussian components.

use nalgebra::{DMatrix, SymmetricEigen, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrability::commutator;
use crate::tensor::SymmetricCubicTensor;

pub const DEFAULT_CLASSIFY_TOL: f64 = 1e-9;

/// Relative eigenvalue gap below which eigenvalues are treated as one cluster.
const CLUSTER_GAP: f64 = 1e-8;

/// Fixed weights for the generic combination of commuting slices.
const GENERIC_WEIGHTS: [f64; 3] = [1.0, 0.577_215_664_901_532_9, 0.318_309_886_183_790_7];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    Gamma,
    Gaussian,
}

/// Law of a standardized one-dimensional component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Marginal1d {
    /// Mean zero, variance one.
    Gaussian,
    /// `scale * G + shift` with `G ~ Gamma(shape, 1)`. The scale carries the sign of `b`.
    Gamma { shape: f64, scale: f64, shift: f64 },
}

impl Marginal1d {
    /// Laplace transform `E[exp(s X)]`, `None` outside the domain.
    pub fn laplace(&self, s: f64) -> Option<f64> {
        match *self {
            Marginal1d::Gaussian => Some((0.5 * s * s).exp()),
            Marginal1d::Gamma {
                shape,
                scale,
                shift,
            } => {
                let base = 1.0 - scale * s;
                (base > 0.0).then(|| (s * shift).exp() * base.powf(-shape))
            }
        }
    }
}

/// Marginal law of a normalized component with `[U, X] = bX + I`.
pub fn marginal_params_1d(b: f64) -> Marginal1d {
    if b == 0.0 {
        Marginal1d::Gaussian
    } else {
        Marginal1d::Gamma {
            shape: 1.0 / (b * b),
            scale: b,
            shift: -1.0 / b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Component {
    pub b: f64,
    pub kind: ComponentKind,
    pub marginal: Marginal1d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// The rotated tensor is not of the form `alpha_002 = alpha_112 = alpha_222`.
    CanonicalPatternViolated,
    /// `a > 1`: the would-be law has no positive representing measure.
    Positivity,
    /// Commuting slices that still leave off-diagonal entries after diagonalization.
    NotDiagonalizable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectionData {
    /// Rotation used to probe the tensor (rows are the new axes).
    #[serde(serialize_with = "serialize_matrix")]
    pub u: DMatrix<f64>,
    /// Largest deviation of the rotated tensor from the expected pattern.
    pub pattern_deviation: f64,
    /// `alpha'_002` after rotation.
    pub a: Option<f64>,
    /// `alpha'_222` after rotation.
    pub b: Option<f64>,
    /// Value of the lowest-order integrability identity, `-a^2 (b - a)`.
    pub obstruction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "variant")]
pub enum Classification3 {
    CaseI {
        a: f64,
        #[serde(serialize_with = "serialize_matrix")]
        u: DMatrix<f64>,
    },
    CaseII {
        #[serde(serialize_with = "serialize_matrix")]
        u: DMatrix<f64>,
        components: Vec<Component>,
    },
    Rejected {
        reason: RejectReason,
        data: RejectionData,
    },
}

pub(crate) fn serialize_matrix<S: serde::Serializer>(
    m: &DMatrix<f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    // adding 0.0 turns -0.0 into 0.0
    let rows: Vec<Vec<f64>> = m
        .row_iter()
        .map(|r| r.iter().map(|v| v + 0.0).collect())
        .collect();
    serde::Serialize::serialize(&rows, s)
}

impl Classification3 {
    pub fn rotation(&self) -> &DMatrix<f64> {
        match self {
            Classification3::CaseI { u, .. } | Classification3::CaseII { u, .. } => u,
            Classification3::Rejected { data, .. } => &data.u,
        }
    }

    pub fn is_rejected(&self) -> bool {
        matches!(self, Classification3::Rejected { .. })
    }
}

fn axial(c: &DMatrix<f64>) -> Vector3<f64> {
    Vector3::new(c[(2, 1)], c[(0, 2)], c[(1, 0)])
}

fn rows_to_matrix(rows: &[Vector3<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(3, 3, |r, c| rows[r][c])
}

/// Reduces `t` to canonical form. Rejection is a result, not an error.
pub fn classify(t: &SymmetricCubicTensor, tol: f64) -> Result<Classification3> {
    if t.dimension() != 3 {
        return Err(Error::DimensionNot3(t.dimension()));
    }
    let scale = t.max_abs();
    let threshold = tol * 1f64.max(scale * scale);
    let mut largest: Option<(f64, DMatrix<f64>)> = None;
    for (i, j) in [(0, 1), (1, 2), (0, 2)] {
        let c = commutator(t, i, j)?;
        let norm = c.norm();
        if norm > threshold && largest.as_ref().is_none_or(|(n, _)| norm > *n) {
            largest = Some((norm, c));
        }
    }
    match largest {
        Some((_, c)) => case_one(t, &c, tol),
        None => case_two(t, tol),
    }
}

fn case_one(t: &SymmetricCubicTensor, c: &DMatrix<f64>, tol: f64) -> Result<Classification3> {
    let mut f3 = axial(c).normalize();
    let seed = if f3.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let f1 = (seed - f3 * f3.dot(&seed)).normalize();
    let mut rotated = t.rotate(&rows_to_matrix(&[f1, f3.cross(&f1), f3]))?;
    if rotated.get(2, 2, 2) < 0.0 {
        // f2 = f3 x f1 follows f3, so this is a half-turn about f1 and flips a
        f3 = -f3;
        rotated = t.rotate(&rows_to_matrix(&[f1, f3.cross(&f1), f3]))?;
    }
    let u = rows_to_matrix(&[f1, f3.cross(&f1), f3]);
    let a = rotated.get(0, 0, 2);
    let b = rotated.get(2, 2, 2);
    let target = SymmetricCubicTensor::canonical(a);
    let deviation = rotated.max_abs_diff(&target);
    let data = RejectionData {
        u: u.clone(),
        pattern_deviation: deviation,
        a: Some(a),
        b: Some(b),
        obstruction: Some(-a * a * (b - a)),
    };
    if deviation > tol * 1f64.max(t.max_abs()) {
        return Ok(Classification3::Rejected {
            reason: RejectReason::CanonicalPatternViolated,
            data,
        });
    }
    if a > 1.0 + tol {
        return Ok(Classification3::Rejected {
            reason: RejectReason::Positivity,
            data,
        });
    }
    Ok(Classification3::CaseI { a, u })
}

/// Orthonormal columns spanning a common eigenbasis of the given symmetric matrices.
fn joint_eigenbasis(mats: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = mats[0].nrows();
    if n == 1 {
        return DMatrix::identity(1, 1);
    }
    let mut combo = DMatrix::zeros(n, n);
    for (k, m) in mats.iter().enumerate() {
        combo += m * GENERIC_WEIGHTS[k % GENERIC_WEIGHTS.len()];
    }
    let spectral = mats.iter().map(|m| m.norm()).fold(0.0, f64::max);
    if spectral == 0.0 {
        return DMatrix::identity(n, n);
    }
    let eig = SymmetricEigen::new(combo);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));

    let mut out = DMatrix::zeros(n, n);
    let mut filled = 0;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n
            && eig.eigenvalues[order[end]] - eig.eigenvalues[order[end - 1]]
                <= CLUSTER_GAP * spectral
        {
            end += 1;
        }
        let cluster = DMatrix::from_fn(n, end - start, |r, c| {
            eig.eigenvectors[(r, order[start + c])]
        });
        let block = if end - start == 1 || end - start == n {
            // a cluster covering everything means the combination could not separate;
            // projecting again would not help, so keep the eigenvectors as they are
            cluster
        } else {
            let projected: Vec<DMatrix<f64>> = mats
                .iter()
                .map(|m| cluster.transpose() * m * &cluster)
                .collect();
            &cluster * joint_eigenbasis(&projected)
        };
        out.columns_mut(filled, block.ncols()).copy_from(&block);
        filled += block.ncols();
        start = end;
    }
    out
}

fn case_two(t: &SymmetricCubicTensor, tol: f64) -> Result<Classification3> {
    let slices: Vec<DMatrix<f64>> = t.slices().into_iter().map(|s| s.into_inner()).collect();
    let basis = joint_eigenbasis(&slices);

    // sign: largest component positive; order: by position of that component
    let mut rows: Vec<(usize, usize, Vector3<f64>)> = (0..3)
        .map(|c| {
            let mut v = Vector3::new(basis[(0, c)], basis[(1, c)], basis[(2, c)]);
            let pos = v.iamax();
            if v[pos] < 0.0 {
                v = -v;
            }
            (pos, c, v)
        })
        .collect();
    rows.sort_by_key(|&(pos, c, _)| (pos, c));
    let vectors: Vec<Vector3<f64>> = rows.into_iter().map(|(_, _, v)| v).collect();
    let u = rows_to_matrix(&vectors);

    let rotated = t.rotate(&u)?;
    let diag: Vec<f64> = (0..3).map(|k| rotated.get(k, k, k)).collect();
    let deviation = rotated.max_abs_diff(&SymmetricCubicTensor::diagonal(&diag));
    if deviation > tol * 1f64.max(t.max_abs()) {
        return Ok(Classification3::Rejected {
            reason: RejectReason::NotDiagonalizable,
            data: RejectionData {
                u,
                pattern_deviation: deviation,
                a: None,
                b: None,
                obstruction: None,
            },
        });
    }
    let components = diag
        .into_iter()
        .map(|b| {
            if b.abs() <= tol {
                Component {
                    b,
                    kind: ComponentKind::Gaussian,
                    marginal: Marginal1d::Gaussian,
                }
            } else {
                Component {
                    b,
                    kind: ComponentKind::Gamma,
                    marginal: marginal_params_1d(b),
                }
            }
        })
        .collect();
    Ok(Classification3::CaseII { u, components })
}
