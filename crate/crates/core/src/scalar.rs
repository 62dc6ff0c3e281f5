//! Scalar abstraction shared by the moment engine and the chaos oracle.
//!
//! Two instantiations exist: `f64` for the fast path and [`BigRational`] for
//! exact arithmetic when the coefficient tensor has dyadic/rational entries.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, Signed, ToPrimitive, Zero};

pub trait Scalar: Num + Clone + Debug + Send + Sync + std::ops::Neg<Output = Self> {
    /// Whether arithmetic in this type is exact.
    const EXACT: bool;

    fn from_f64(x: f64) -> Self;

    fn to_f64(&self) -> f64;

    fn abs_val(&self) -> Self;

    fn from_usize(n: usize) -> Self;

    /// Equality up to `rel_tol` relative to `max(1, |a|, |b|)`; exact types ignore the tolerance.
    fn close(&self, other: &Self, rel_tol: f64) -> bool;
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_f64(x: f64) -> Self {
        x
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn abs_val(&self) -> Self {
        self.abs()
    }

    fn from_usize(n: usize) -> Self {
        n as f64
    }

    fn close(&self, other: &Self, rel_tol: f64) -> bool {
        let scale = 1.0_f64.max(self.abs()).max(other.abs());
        (self - other).abs() <= rel_tol * scale
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    /// Exact binary expansion of a finite double.
    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).unwrap_or_else(BigRational::zero)
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn abs_val(&self) -> Self {
        self.abs()
    }

    fn from_usize(n: usize) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }

    fn close(&self, other: &Self, _rel_tol: f64) -> bool {
        self == other
    }
}
