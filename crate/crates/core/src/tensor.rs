//! Coefficient tensor data model.
//!
//! The commutator coefficients `alpha[i][j][k]` of a 1-Meixner vector are
//! invariant under every permutation of `(i, j, k)`. [`SymmetricCubicTensor`]
//! stores one value per multiset `{i, j, k}`, so the symmetry holds by
//! construction. All indices are 0-based.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

/// Spectral-norm tolerance on `U^T U - I` for a matrix to count as orthogonal.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

/// Relative tolerance for duplicate (permutation-equivalent) input entries.
pub const DUPLICATE_REL_TOL: f64 = 1e-12;

/// Position of the sorted triple `i <= j <= k` in canonical storage.
fn canonical_offset(i: usize, j: usize, k: usize) -> usize {
    k * (k + 1) * (k + 2) / 6 + j * (j + 1) / 2 + i
}

fn sorted([a, b, c]: [usize; 3]) -> [usize; 3] {
    let mut t = [a, b, c];
    t.sort_unstable();
    t
}

/// Number of distinct index orderings of a sorted triple.
pub fn triple_multiplicity([i, j, k]: [usize; 3]) -> usize {
    if i == j && j == k {
        1
    } else if i == j || j == k || i == k {
        3
    } else {
        6
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricCubicTensor {
    dimension: usize,
    values: Vec<f64>,
}

impl SymmetricCubicTensor {
    pub fn zeros(dimension: usize) -> Self {
        let len = dimension * (dimension + 1) * (dimension + 2) / 6;
        Self {
            dimension,
            values: vec![0.0; len],
        }
    }

    /// Builds a tensor from raw `(i, j, k, value)` entries in any index order.
    ///
    /// Unspecified multisets are zero. Two entries naming the same multiset
    /// must agree to [`DUPLICATE_REL_TOL`].
    pub fn from_entries<I>(dimension: usize, raw: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, usize, f64)>,
    {
        let mut tensor = Self::zeros(dimension);
        let mut seen = vec![false; tensor.values.len()];
        for (i, j, k, value) in raw {
            for index in [i, j, k] {
                if index >= dimension {
                    return Err(Error::IndexOutOfRange { index, dimension });
                }
            }
            if !value.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "non-finite value {value} at ({i}, {j}, {k})"
                )));
            }
            let [a, b, c] = sorted([i, j, k]);
            let slot = canonical_offset(a, b, c);
            if seen[slot] {
                let prev = tensor.values[slot];
                let scale = prev.abs().max(value.abs());
                if (prev - value).abs() > DUPLICATE_REL_TOL * scale {
                    return Err(Error::ConflictingEntry {
                        triple: [a, b, c],
                        first: prev,
                        second: value,
                    });
                }
            } else {
                seen[slot] = true;
                tensor.values[slot] = value;
            }
        }
        Ok(tensor)
    }

    /// The canonical d = 3 family: `alpha_{002} = alpha_{112} = a`, `alpha_{222} = b`.
    pub fn canonical_family(a: f64, b: f64) -> Self {
        let mut t = Self::zeros(3);
        t.set(0, 0, 2, a);
        t.set(1, 1, 2, a);
        t.set(2, 2, 2, b);
        t
    }

    /// Canonical d = 3 tensor with cubic form `3a s3 (s1^2 + s2^2) + a s3^3`.
    pub fn canonical(a: f64) -> Self {
        Self::canonical_family(a, a)
    }

    /// Tensor whose only nonzero entries are `alpha_{kkk} = diag[k]`.
    pub fn diagonal(diag: &[f64]) -> Self {
        let mut t = Self::zeros(diag.len());
        for (k, &v) in diag.iter().enumerate() {
            t.set(k, k, k, v);
        }
        t
    }

    fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let [a, b, c] = sorted([i, j, k]);
        self.values[canonical_offset(a, b, c)] = value;
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Value at `(i, j, k)`. Panics if an index is out of range.
    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        assert!(
            i < self.dimension && j < self.dimension && k < self.dimension,
            "tensor index ({i}, {j}, {k}) out of range for dimension {}",
            self.dimension
        );
        let [a, b, c] = sorted([i, j, k]);
        self.values[canonical_offset(a, b, c)]
    }

    pub fn try_get(&self, i: usize, j: usize, k: usize) -> Result<f64> {
        self.check_index(i)?;
        self.check_index(j)?;
        self.check_index(k)?;
        Ok(self.get(i, j, k))
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index < self.dimension {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index,
                dimension: self.dimension,
            })
        }
    }

    /// Sorted triples with their values, in storage order.
    pub fn canonical_entries(&self) -> impl Iterator<Item = ([usize; 3], f64)> + '_ {
        let d = self.dimension;
        (0..d).flat_map(move |k| {
            (0..=k).flat_map(move |j| (0..=j).map(move |i| ([i, j, k], self.get(i, j, k))))
        })
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Slice `A_k` with `(A_k)[r][s] = alpha[k][r][s]`.
    pub fn slice_matrix(&self, k: usize) -> Result<SliceMatrix> {
        self.check_index(k)?;
        let d = self.dimension;
        Ok(SliceMatrix(DMatrix::from_fn(d, d, |r, s| {
            self.get(k, r, s)
        })))
    }

    pub fn slices(&self) -> Vec<SliceMatrix> {
        (0..self.dimension)
            .map(|k| self.slice_matrix(k).expect("index in range"))
            .collect()
    }

    /// `F(v) = sum_{i,j,k} alpha_ijk v_i v_j v_k` over all ordered triples.
    pub fn cubic_form(&self, v: &[f64]) -> Result<f64> {
        if v.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: v.len(),
            });
        }
        Ok(self
            .canonical_entries()
            .map(|(t @ [i, j, k], a)| triple_multiplicity(t) as f64 * a * v[i] * v[j] * v[k])
            .sum())
    }

    /// Gradient of the cubic form: `3 sum_{j,k} alpha_ijk v_j v_k`.
    pub fn cubic_form_gradient(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dimension;
        (0..d)
            .map(|i| {
                let mut g = 0.0;
                for j in 0..d {
                    for k in 0..d {
                        g += self.get(i, j, k) * v[j] * v[k];
                    }
                }
                3.0 * g
            })
            .collect()
    }

    /// `alpha'_ijk = sum U_ip U_jq U_kr alpha_pqr`, the tensor of `U X`.
    pub fn rotate(&self, u: &DMatrix<f64>) -> Result<Self> {
        let d = self.dimension;
        if u.nrows() != d || u.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: u.nrows().max(u.ncols()),
            });
        }
        let deviation = orthogonality_defect(u);
        if deviation > ORTHOGONALITY_TOL {
            return Err(Error::NotOrthogonal { deviation });
        }
        // contract one leg at a time on the dense array
        let at = |i: usize, j: usize, k: usize| (i * d + j) * d + k;
        let mut dense = vec![0.0; d * d * d];
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    dense[at(i, j, k)] = self.get(i, j, k);
                }
            }
        }
        let mut step1 = vec![0.0; d * d * d];
        for i in 0..d {
            for q in 0..d {
                for r in 0..d {
                    step1[at(i, q, r)] = (0..d).map(|p| u[(i, p)] * dense[at(p, q, r)]).sum();
                }
            }
        }
        let mut step2 = vec![0.0; d * d * d];
        for i in 0..d {
            for j in 0..d {
                for r in 0..d {
                    step2[at(i, j, r)] = (0..d).map(|q| u[(j, q)] * step1[at(i, q, r)]).sum();
                }
            }
        }
        let mut out = Self::zeros(d);
        for k in 0..d {
            for j in 0..=k {
                for i in 0..=j {
                    let v = (0..d).map(|r| u[(k, r)] * step2[at(i, j, r)]).sum();
                    out.set(i, j, k, v);
                }
            }
        }
        Ok(out)
    }

    /// `E[X_i X_j X_k] = 2 alpha_ijk` for a normalized vector.
    pub fn third_moment(&self, i: usize, j: usize, k: usize) -> Result<f64> {
        Ok(2.0 * self.try_get(i, j, k)?)
    }
}

/// Rotation `R_z(psi) R_y(theta) R_z(phi)` in three dimensions.
pub fn euler_rotation(phi: f64, theta: f64, psi: f64) -> DMatrix<f64> {
    let rz = |x: f64| {
        DMatrix::from_row_slice(
            3,
            3,
            &[x.cos(), -x.sin(), 0.0, x.sin(), x.cos(), 0.0, 0.0, 0.0, 1.0],
        )
    };
    let (c, s) = (theta.cos(), theta.sin());
    let ry = DMatrix::from_row_slice(3, 3, &[c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c]);
    rz(psi) * ry * rz(phi)
}

/// Symmetric `d x d` slice `A_k` of the coefficient tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceMatrix(pub DMatrix<f64>);

impl SliceMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// Spectral norm of `U^T U - I`.
pub fn orthogonality_defect(u: &DMatrix<f64>) -> f64 {
    let n = u.ncols();
    let g = u.transpose() * u - DMatrix::<f64>::identity(n, n);
    SymmetricEigen::new(g)
        .eigenvalues
        .iter()
        .fold(0.0, |m, e| m.max(e.abs()))
}

/// Coefficients of a candidate vector: tensor, covariance and mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MeixnerSpec {
    pub alpha: SymmetricCubicTensor,
    pub beta: DMatrix<f64>,
    pub mean: DVector<f64>,
}

impl MeixnerSpec {
    /// Centered, orthonormal spec (`beta = I`, mean 0).
    pub fn normalized(alpha: SymmetricCubicTensor) -> Self {
        let d = alpha.dimension();
        Self {
            alpha,
            beta: DMatrix::identity(d, d),
            mean: DVector::zeros(d),
        }
    }

    pub fn new(
        alpha: SymmetricCubicTensor,
        beta: DMatrix<f64>,
        mean: DVector<f64>,
    ) -> Result<Self> {
        let d = alpha.dimension();
        if beta.nrows() != d || beta.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: beta.nrows().max(beta.ncols()),
            });
        }
        if mean.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: mean.len(),
            });
        }
        Ok(Self { alpha, beta, mean })
    }

    pub fn dimension(&self) -> usize {
        self.alpha.dimension()
    }

    pub fn is_normalized(&self) -> bool {
        let d = self.dimension();
        self.mean.iter().all(|&m| m == 0.0) && self.beta == DMatrix::identity(d, d)
    }

    /// Largest absolute entry of `beta`.
    pub fn beta_max_abs(&self) -> f64 {
        self.beta.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LccReport {
    pub passed: bool,
    pub checks: Vec<ConsistencyCheck>,
}

const BETA_SYMMETRY_TOL: f64 = 1e-12;
const BETA_PSD_TOL: f64 = 1e-12;

/// Consistency report for a spec: tensor symmetry, `beta` symmetric and PSD,
/// and `beta = I`, mean 0 when the spec claims to be normalized.
pub fn validate_lcc(spec: &MeixnerSpec, normalized_mode: bool) -> LccReport {
    let mut checks = vec![ConsistencyCheck {
        name: "alpha_permutation_symmetry",
        passed: true,
        detail: "structural (canonical storage)".into(),
    }];

    let asym = (&spec.beta - spec.beta.transpose())
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let beta_symmetric = asym <= BETA_SYMMETRY_TOL * spec.beta_max_abs().max(1.0);
    checks.push(ConsistencyCheck {
        name: "beta_symmetric",
        passed: beta_symmetric,
        detail: format!("max |beta - beta^T| = {asym:e}"),
    });

    let sym = (&spec.beta + spec.beta.transpose()) * 0.5;
    let min_eig = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, &e| m.min(e));
    let min_eig = if min_eig.is_finite() { min_eig } else { 0.0 };
    checks.push(ConsistencyCheck {
        name: "beta_psd",
        passed: min_eig >= -BETA_PSD_TOL * spec.beta_max_abs().max(1.0),
        detail: format!("smallest eigenvalue {min_eig:e}"),
    });

    if normalized_mode {
        let d = spec.dimension();
        let dev = (&spec.beta - DMatrix::<f64>::identity(d, d))
            .iter()
            .chain(spec.mean.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        checks.push(ConsistencyCheck {
            name: "normalized_beta_identity_mean_zero",
            passed: dev <= BETA_SYMMETRY_TOL,
            detail: format!("max deviation {dev:e}"),
        });
    }

    LccReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

/// Whitening map `x -> W x + shift` taking the given first two moments to (0, I).
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub matrix: DMatrix<f64>,
    pub shift: DVector<f64>,
}

/// Symmetric inverse square root whitening of `cov`, with `shift = -W mean`.
pub fn standardize(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<AffineMap> {
    let d = mean.len();
    if cov.nrows() != d || cov.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: cov.nrows().max(cov.ncols()),
        });
    }
    let sym = (cov + cov.transpose()) * 0.5;
    let trace = sym.trace();
    let eig = SymmetricEigen::new(sym);
    let min_eigenvalue = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &e| m.min(e));
    if !(min_eigenvalue > 1e-12 * trace.abs()) || trace <= 0.0 {
        return Err(Error::SingularCovariance {
            min_eigenvalue,
            trace,
        });
    }
    let inv_sqrt = DVector::from_iterator(d, eig.eigenvalues.iter().map(|e| 1.0 / e.sqrt()));
    let q = &eig.eigenvectors;
    let w = q * DMatrix::from_diagonal(&inv_sqrt) * q.transpose();
    let shift = -(&w * mean);
    Ok(AffineMap { matrix: w, shift })
}
