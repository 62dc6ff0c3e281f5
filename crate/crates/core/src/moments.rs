//! Exact joint moments from the commutator coefficients.
//!
//! For a centered vector with `[U_w, X_p] = sum_r alpha_{w,p,r} X_r + beta_{w,p} I`,
//! writing `X^i = X_w X^j` and commuting the semi-annihilation operator `U_w`
//! through `X^j` gives
//!
//! ```text
//! E[X^i] = sum_{p,r} j_p alpha_{w,p,r} E[X_r X^{j-e_p}] + sum_p j_p beta_{w,p} E[X^{j-e_p}]
//! ```
//!
//! with `E[X^0] = 1`. Both sums only reference lower total degree, so the
//! table is filled layer by layer.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::MeixnerSpec;

/// Default maximum total degree of a [`MomentTable`].
pub const DEFAULT_DEGREE_CAP: usize = 16;

/// Relative tolerance for pivot agreement in [`PivotPolicy::AllAndCompare`].
pub const PIVOT_REL_TOL: f64 = 1e-9;

/// Exponent vector `(i_1, .., i_d)` of the monomial `X_1^{i_1} .. X_d^{i_d}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(counts: Vec<u32>) -> Self {
        Self(counts)
    }

    pub fn zero(dimension: usize) -> Self {
        Self(vec![0; dimension])
    }

    pub fn unit(dimension: usize, r: usize) -> Self {
        let mut counts = vec![0; dimension];
        counts[r] = 1;
        Self(counts)
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    /// Total degree `|i| = i_1 + .. + i_d`.
    pub fn length(&self) -> usize {
        self.0.iter().map(|&c| c as usize).sum()
    }

    pub fn plus(&self, r: usize) -> Self {
        let mut c = self.0.clone();
        c[r] += 1;
        Self(c)
    }

    /// `self - e_r`; panics if the count is zero.
    pub fn minus(&self, r: usize) -> Self {
        let mut c = self.0.clone();
        c[r] = c[r].checked_sub(1).expect("count underflow");
        Self(c)
    }

    pub fn sum(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `i! = i_1! .. i_d!` as a float.
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&c| factorial(c as usize)).product()
    }

    /// `t^i` for a point `t`.
    pub fn monomial(&self, t: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(t)
            .map(|(&c, &x)| x.powi(c as i32))
            .product()
    }

    /// Parses `"i,j,k"` style counts.
    pub fn parse(s: &str) -> Result<Self> {
        s.split(',')
            .map(|p| {
                p.trim().parse::<u32>().map_err(|e| {
                    Error::InvalidInput(format!("bad multi-index component {p:?}: {e}"))
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|c| c.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// All multi-indices of total degree `n` in dimension `d`, in lexicographic
/// order with the first coordinate varying slowest.
pub fn multi_indices_of_degree(d: usize, n: usize) -> Vec<MultiIndex> {
    fn rec(d: usize, remaining: usize, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
        if prefix.len() + 1 == d {
            prefix.push(remaining as u32);
            out.push(MultiIndex(prefix.clone()));
            prefix.pop();
            return;
        }
        for c in (0..=remaining).rev() {
            prefix.push(c as u32);
            rec(d, remaining - c, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if d == 0 {
        if n == 0 {
            out.push(MultiIndex(Vec::new()));
        }
        return out;
    }
    rec(d, n, &mut Vec::with_capacity(d), &mut out);
    out
}

/// All multi-indices of total degree `<= n`, ordered by degree.
pub fn multi_indices_up_to(d: usize, n: usize) -> Vec<MultiIndex> {
    (0..=n)
        .flat_map(|k| multi_indices_of_degree(d, k))
        .collect()
}

/// Choice of the coordinate `w` peeled off in the recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum PivotPolicy {
    /// Smallest `w` with `i_w >= 1`.
    #[default]
    LowestIndex,
    /// `w` with the largest count (lowest index on ties).
    HighestCount,
    /// Evaluate every admissible pivot and require agreement.
    AllAndCompare,
}

/// Memoized moments `E[X^i]` of a centered spec.
#[derive(Debug, Clone)]
pub struct MomentTable<S: Scalar> {
    dimension: usize,
    alpha: Vec<S>,
    beta: Vec<S>,
    policy: PivotPolicy,
    degree_cap: usize,
    filled_degree: Option<usize>,
    memo: HashMap<MultiIndex, S>,
}

impl<S: Scalar> MomentTable<S> {
    /// Table with the default pivot policy and degree cap.
    pub fn new(spec: &MeixnerSpec) -> Result<Self> {
        Self::with_policy(spec, PivotPolicy::default())
    }

    pub fn with_policy(spec: &MeixnerSpec, policy: PivotPolicy) -> Result<Self> {
        if spec.mean.iter().any(|&m| m != 0.0) {
            return Err(Error::InvalidInput(
                "moment recursion requires a centered spec (mean = 0)".into(),
            ));
        }
        let d = spec.dimension();
        let mut alpha = Vec::with_capacity(d * d * d);
        for w in 0..d {
            for p in 0..d {
                for r in 0..d {
                    alpha.push(S::from_f64(spec.alpha.get(w, p, r)));
                }
            }
        }
        let beta = (0..d)
            .flat_map(|w| (0..d).map(move |p| (w, p)))
            .map(|(w, p)| S::from_f64(spec.beta[(w, p)]))
            .collect();
        let mut memo = HashMap::new();
        memo.insert(MultiIndex::zero(d), S::one());
        Ok(Self {
            dimension: d,
            alpha,
            beta,
            policy,
            degree_cap: DEFAULT_DEGREE_CAP,
            filled_degree: Some(0),
            memo,
        })
    }

    pub fn with_degree_cap(mut self, cap: usize) -> Self {
        self.degree_cap = cap;
        self
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn policy(&self) -> PivotPolicy {
        self.policy
    }

    pub fn degree_cap(&self) -> usize {
        self.degree_cap
    }

    #[inline]
    fn alpha(&self, w: usize, p: usize, r: usize) -> &S {
        &self.alpha[(w * self.dimension + p) * self.dimension + r]
    }

    #[inline]
    fn beta(&self, w: usize, p: usize) -> &S {
        &self.beta[w * self.dimension + p]
    }

    fn stored(&self, idx: &MultiIndex) -> &S {
        self.memo
            .get(idx)
            .expect("lower-degree layers are filled before use")
    }

    /// One application of the recursion with pivot `w`.
    fn expand(&self, idx: &MultiIndex, w: usize) -> S {
        let d = self.dimension;
        let j = idx.minus(w);
        let mut acc = S::zero();
        for p in 0..d {
            let jp = j.counts()[p];
            if jp == 0 {
                continue;
            }
            let jp_s = S::from_usize(jp as usize);
            let reduced = j.minus(p);
            let mut inner = S::zero();
            for r in 0..d {
                let a = self.alpha(w, p, r);
                if a.is_zero() {
                    continue;
                }
                inner = inner + a.clone() * self.stored(&reduced.plus(r)).clone();
            }
            let b = self.beta(w, p);
            if !b.is_zero() {
                inner = inner + b.clone() * self.stored(&reduced).clone();
            }
            acc = acc + jp_s * inner;
        }
        acc
    }

    fn evaluate(&self, idx: &MultiIndex) -> Result<S> {
        let counts = idx.counts();
        let candidates = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(w, _)| w);
        match self.policy {
            PivotPolicy::LowestIndex => {
                let w = candidates.into_iter().next().expect("nonzero index");
                Ok(self.expand(idx, w))
            }
            PivotPolicy::HighestCount => {
                let w = candidates
                    .into_iter()
                    .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
                    .expect("nonzero index");
                Ok(self.expand(idx, w))
            }
            PivotPolicy::AllAndCompare => {
                let mut first: Option<(usize, S)> = None;
                for w in candidates {
                    let v = self.expand(idx, w);
                    match &first {
                        None => first = Some((w, v)),
                        Some((w0, v0)) => {
                            if !v0.close(&v, PIVOT_REL_TOL) {
                                return Err(Error::PivotInconsistency {
                                    index: counts.iter().map(|&c| c as usize).collect(),
                                    first_pivot: *w0,
                                    first: v0.to_f64(),
                                    second_pivot: w,
                                    second: v.to_f64(),
                                });
                            }
                        }
                    }
                }
                Ok(first.expect("nonzero index").1)
            }
        }
    }

    /// Fills every moment of total degree `<= n`, one degree layer at a time.
    pub fn fill_to_degree(&mut self, n: usize) -> Result<()> {
        if n > self.degree_cap {
            return Err(Error::DegreeCap {
                requested: n,
                cap: self.degree_cap,
            });
        }
        let start = match self.filled_degree {
            Some(f) if f >= n => return Ok(()),
            Some(f) => f + 1,
            None => 0,
        };
        for layer in start..=n {
            let indices = multi_indices_of_degree(self.dimension, layer);
            let values: Vec<Result<S>> = {
                let this = &*self;
                indices.par_iter().map(|idx| this.evaluate(idx)).collect()
            };
            // keep successful values so a later query below the failing layer still works
            let mut failure = None;
            for (idx, v) in indices.into_iter().zip(values) {
                match v {
                    Ok(v) => {
                        self.memo.insert(idx, v);
                    }
                    Err(e) => {
                        failure.get_or_insert(e);
                    }
                }
            }
            if let Some(e) = failure {
                return Err(e);
            }
            self.filled_degree = Some(layer);
        }
        Ok(())
    }

    /// `E[X^idx]`.
    pub fn moment(&mut self, idx: &MultiIndex) -> Result<S> {
        if idx.dimension() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: idx.dimension(),
            });
        }
        if let Some(v) = self.memo.get(idx) {
            return Ok(v.clone());
        }
        self.fill_to_degree(idx.length())?;
        Ok(self.stored(idx).clone())
    }

    /// Moment lookup for an already-filled degree.
    pub fn get(&self, idx: &MultiIndex) -> Option<&S> {
        self.memo.get(idx)
    }

    /// Highest degree for which every moment is available.
    pub fn filled_degree(&self) -> Option<usize> {
        self.filled_degree
    }
}

/// `K = max(d A + B, 1)` with `A = max |alpha|`, `B = max |beta|`.
pub fn bound_constant(spec: &MeixnerSpec) -> f64 {
    let d = spec.dimension() as f64;
    (d * spec.alpha.max_abs() + spec.beta_max_abs()).max(1.0)
}

/// `K^{|i|} |i|!`, an upper bound on `|E[X^i]|`.
pub fn moment_bound(spec: &MeixnerSpec, idx: &MultiIndex) -> f64 {
    let n = idx.length();
    bound_constant(spec).powi(n as i32) * factorial(n)
}

/// `R = 1 / (2 K d)`: the Laplace series converges for `||t||_inf < R`.
pub fn laplace_radius(spec: &MeixnerSpec) -> f64 {
    1.0 / (2.0 * bound_constant(spec) * spec.dimension() as f64)
}

/// Upper bound on the omitted terms `sum_{n > N} E[(t.X)^n] / n!`, from
/// `|E[(t.X)^n]| / n! <= (K ||t||_1)^n`. Infinite when the ratio is `>= 1`.
pub fn taylor_tail_bound(spec: &MeixnerSpec, t: &[f64], max_degree: usize) -> f64 {
    let q = bound_constant(spec) * t.iter().map(|x| x.abs()).sum::<f64>();
    if q >= 1.0 {
        f64::INFINITY
    } else {
        q.powi(max_degree as i32 + 1) / (1.0 - q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaylorValue {
    pub value: f64,
    /// `||t||_inf < laplace_radius`.
    pub inside_radius: bool,
}

/// Partial sum `sum_{n <= N} E[(t.X)^n] / n! = sum_{|i| <= N} t^i E[X^i] / i!`.
pub fn taylor_laplace(
    tbl: &mut MomentTable<f64>,
    spec: &MeixnerSpec,
    t: &[f64],
    max_degree: usize,
) -> Result<TaylorValue> {
    let d = tbl.dimension();
    if t.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: t.len(),
        });
    }
    tbl.fill_to_degree(max_degree)?;
    let mut value = 0.0;
    // sum high degrees first so small terms accumulate before the leading 1
    for n in (0..=max_degree).rev() {
        let mut layer = 0.0;
        for idx in multi_indices_of_degree(d, n) {
            let m = tbl.get(&idx).expect("filled");
            if *m != 0.0 {
                layer += idx.monomial(t) / idx.factorial() * m;
            }
        }
        value += layer;
    }
    let sup = t.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    Ok(TaylorValue {
        value,
        inside_radius: sup < laplace_radius(spec),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::SymmetricCubicTensor;
    use num_rational::BigRational;

    fn canonical_table(a: f64, policy: PivotPolicy) -> (MeixnerSpec, MomentTable<f64>) {
        let spec = MeixnerSpec::normalized(SymmetricCubicTensor::canonical(a));
        let tbl = MomentTable::with_policy(&spec, policy).unwrap();
        (spec, tbl)
    }

    fn mi(c: &[u32]) -> MultiIndex {
        MultiIndex::new(c.to_vec())
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(multi_indices_of_degree(3, 0).len(), 1);
        assert_eq!(multi_indices_of_degree(3, 2).len(), 6);
        assert_eq!(multi_indices_of_degree(3, 4).len(), 15);
        assert_eq!(multi_indices_up_to(3, 4).len(), 35);
        assert!(multi_indices_of_degree(4, 5)
            .iter()
            .all(|m| m.length() == 5));
    }

    #[test]
    fn low_order_examples() {
        let a = 0.5;
        let (_, mut tbl) = canonical_table(a, PivotPolicy::AllAndCompare);
        assert_eq!(tbl.moment(&mi(&[0, 0, 0])).unwrap(), 1.0);
        assert_eq!(tbl.moment(&mi(&[2, 0, 0])).unwrap(), 1.0);
        assert_eq!(tbl.moment(&mi(&[0, 0, 3])).unwrap(), 2.0 * a);
        // fourth central moment of the standardized Gamma marginal: 3 + 6 a^2
        assert!((tbl.moment(&mi(&[0, 0, 4])).unwrap() - 4.5).abs() < 1e-14);
    }

    #[test]
    fn first_and_second_moments_are_normalized() {
        let (_, mut tbl) = canonical_table(0.8, PivotPolicy::AllAndCompare);
        for r in 0..3 {
            assert_eq!(tbl.moment(&MultiIndex::unit(3, r)).unwrap(), 0.0);
            for s in 0..3 {
                let idx = MultiIndex::unit(3, r).plus(s);
                let expected = if r == s { 1.0 } else { 0.0 };
                assert_eq!(tbl.moment(&idx).unwrap(), expected);
            }
        }
    }

    #[test]
    fn general_beta_second_moments() {
        let alpha = SymmetricCubicTensor::zeros(2);
        let beta = nalgebra::DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let spec = MeixnerSpec::new(alpha, beta, nalgebra::DVector::zeros(2)).unwrap();
        let mut tbl = MomentTable::<f64>::new(&spec).unwrap();
        assert_eq!(tbl.moment(&mi(&[1, 1])).unwrap(), 0.5);
        assert_eq!(tbl.moment(&mi(&[2, 0])).unwrap(), 2.0);
        // Gaussian with covariance beta: E[X1^4] = 3 beta_11^2
        assert!((tbl.moment(&mi(&[4, 0])).unwrap() - 12.0).abs() < 1e-12);
    }

    #[test]
    fn exact_mode_matches_float() {
        let spec = MeixnerSpec::normalized(SymmetricCubicTensor::canonical(0.25));
        let mut exact =
            MomentTable::<BigRational>::with_policy(&spec, PivotPolicy::AllAndCompare).unwrap();
        let mut float = MomentTable::<f64>::new(&spec).unwrap();
        for idx in multi_indices_up_to(3, 8) {
            let e = Scalar::to_f64(&exact.moment(&idx).unwrap());
            let f = float.moment(&idx).unwrap();
            assert!(
                (e - f).abs() <= 1e-12 * e.abs().max(1.0),
                "{idx}: {e} vs {f}"
            );
        }
    }

    #[test]
    fn degree_cap_enforced() {
        let (_, tbl) = canonical_table(0.5, PivotPolicy::LowestIndex);
        let mut tbl = tbl.with_degree_cap(4);
        assert!(matches!(
            tbl.moment(&mi(&[0, 0, 5])),
            Err(Error::DegreeCap {
                requested: 5,
                cap: 4
            })
        ));
    }

    #[test]
    fn centered_spec_required() {
        let mut spec = MeixnerSpec::normalized(SymmetricCubicTensor::zeros(2));
        spec.mean[0] = 1.0;
        assert!(MomentTable::<f64>::new(&spec).is_err());
    }

    #[test]
    fn bound_examples() {
        let spec = MeixnerSpec::normalized(SymmetricCubicTensor::canonical(0.5));
        assert!((moment_bound(&spec, &mi(&[1, 1, 0])) - 12.5).abs() < 1e-12);
        assert_eq!(moment_bound(&spec, &mi(&[0, 0, 0])), 1.0);
        let zero = MeixnerSpec::normalized(SymmetricCubicTensor::zeros(3));
        assert_eq!(moment_bound(&zero, &mi(&[1, 1, 1])), 6.0);
    }

    #[test]
    fn radius_examples() {
        let spec = MeixnerSpec::normalized(SymmetricCubicTensor::canonical(0.5));
        assert!((laplace_radius(&spec) - 1.0 / 15.0).abs() < 1e-15);
        let zero = MeixnerSpec::normalized(SymmetricCubicTensor::zeros(3));
        assert!((laplace_radius(&zero) - 1.0 / 6.0).abs() < 1e-15);
        let one = MeixnerSpec::normalized(SymmetricCubicTensor::zeros(1));
        assert_eq!(laplace_radius(&one), 0.5);
    }

    #[test]
    fn taylor_at_origin_is_one() {
        let (spec, mut tbl) = canonical_table(0.5, PivotPolicy::LowestIndex);
        for n in [0, 3, 7] {
            let v = taylor_laplace(&mut tbl, &spec, &[0.0, 0.0, 0.0], n).unwrap();
            assert_eq!(v.value, 1.0);
            assert!(v.inside_radius);
        }
    }

    #[test]
    fn taylor_matches_marginal_gamma_transform() {
        // s3-section of the canonical law: exp(-s/a) (1 - a s)^(-1/a^2)
        let a: f64 = 0.5;
        let s: f64 = 0.05;
        let closed = (-s / a).exp() * (1.0 - a * s).powf(-1.0 / (a * a));
        let (spec, mut tbl) = canonical_table(a, PivotPolicy::LowestIndex);
        let v = taylor_laplace(&mut tbl, &spec, &[0.0, 0.0, s], 6).unwrap();
        assert!((v.value - closed).abs() < 1e-6, "{} vs {closed}", v.value);
        assert!(
            !taylor_laplace(&mut tbl, &spec, &[0.0, 0.0, 0.5], 2)
                .unwrap()
                .inside_radius
        );
    }
}
