//! Tensor JSON files.
//!
//! ```json
//! {"dimension": 3,
//!  "alpha": [{"index": [0, 0, 2], "value": 0.5}],
//!  "beta": [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
//!  "mean": [0, 0, 0]}
//! ```
//!
//! `beta` defaults to the identity and `mean` to zero. Unlisted triples are
//! zero; any permutation of a triple may be listed, but repeated triples must agree.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{MeixnerSpec, SymmetricCubicTensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub index: [usize; 3],
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorFile {
    pub dimension: usize,
    pub alpha: Vec<TensorEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
}

fn finite(what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidInput(format!("non-finite {what} value {v}")))
    }
}

impl TensorFile {
    pub fn into_spec(self) -> Result<MeixnerSpec> {
        let d = self.dimension;
        if d == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        let alpha = SymmetricCubicTensor::from_entries(
            d,
            self.alpha
                .iter()
                .map(|e| (e.index[0], e.index[1], e.index[2], e.value)),
        )?;
        let beta = match self.beta {
            None => DMatrix::identity(d, d),
            Some(rows) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::InvalidInput(format!("beta must be {d} x {d}")));
                }
                let mut m = DMatrix::zeros(d, d);
                for (r, row) in rows.iter().enumerate() {
                    for (c, &v) in row.iter().enumerate() {
                        m[(r, c)] = finite("beta", v)?;
                    }
                }
                m
            }
        };
        let mean = match self.mean {
            None => DVector::zeros(d),
            Some(v) => {
                if v.len() != d {
                    return Err(Error::InvalidInput(format!("mean must have length {d}")));
                }
                for &x in &v {
                    finite("mean", x)?;
                }
                DVector::from_vec(v)
            }
        };
        MeixnerSpec::new(alpha, beta, mean)
    }

    /// Canonical entries only; `beta` and `mean` are written when not the defaults.
    pub fn from_spec(spec: &MeixnerSpec) -> Self {
        let d = spec.dimension();
        let alpha = spec
            .alpha
            .canonical_entries()
            .filter(|(_, v)| *v != 0.0)
            .map(|(index, value)| TensorEntry { index, value })
            .collect();
        let beta = (spec.beta != DMatrix::identity(d, d)).then(|| {
            spec.beta
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect()
        });
        let mean = spec
            .mean
            .iter()
            .any(|&m| m != 0.0)
            .then(|| spec.mean.iter().copied().collect());
        Self {
            dimension: d,
            alpha,
            beta,
            mean,
        }
    }
}

pub fn spec_from_json(text: &str) -> Result<MeixnerSpec> {
    let file: TensorFile =
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
    file.into_spec()
}

pub fn read_spec(path: &Path) -> Result<MeixnerSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    spec_from_json(&text)
}

pub fn spec_to_json(spec: &MeixnerSpec) -> String {
    serde_json::to_string_pretty(&TensorFile::from_spec(spec)).expect("plain data serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_canonical_file() {
        let text = r#"{"dimension": 3, "alpha": [
            {"index": [0, 0, 2], "value": 0.5},
            {"index": [1, 2, 1], "value": 0.5},
            {"index": [2, 2, 2], "value": 0.5}]}"#;
        let spec = spec_from_json(text).unwrap();
        assert!(spec.is_normalized());
        assert_eq!(spec.alpha, SymmetricCubicTensor::canonical(0.5));
    }

    #[test]
    fn round_trip() {
        let mut spec = MeixnerSpec::normalized(SymmetricCubicTensor::canonical_family(0.3, -0.7));
        spec.mean[1] = 2.0;
        spec.beta[(0, 0)] = 4.0;
        let back = spec_from_json(&spec_to_json(&spec)).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn rejects_bad_input() {
        let conflict = r#"{"dimension": 2, "alpha": [
            {"index": [0, 0, 1], "value": 1.0},
            {"index": [1, 0, 0], "value": 2.0}]}"#;
        assert!(matches!(
            spec_from_json(conflict),
            Err(Error::ConflictingEntry { triple: [0, 0, 1], .. })
        ));
        let range = r#"{"dimension": 2, "alpha": [{"index": [0, 0, 2], "value": 1.0}]}"#;
        assert!(matches!(spec_from_json(range), Err(Error::IndexOutOfRange { .. })));
        // 1e999 overflows to infinity or fails to parse; either way it is rejected
        let inf = r#"{"dimension": 1, "alpha": [{"index": [0, 0, 0], "value": 1e999}]}"#;
        assert!(spec_from_json(inf).is_err());
        assert!(spec_from_json(r#"{"dimension": 1, "alpha": [], "mean": [NaN]}"#).is_err());
        assert!(spec_from_json(r#"{"dimension": 2, "alpha": [], "beta": [[1, 0]]}"#).is_err());
        assert!(spec_from_json(r#"{"dimension": 1, "alpha": [], "extra": 1}"#).is_err());
    }
}
