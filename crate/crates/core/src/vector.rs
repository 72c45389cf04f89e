//! Unit-hypersphere geometry: cosine similarity, angles and geodesic mixing.
//!
//! Embeddings are stored as 32-bit floats on disk but every computation here
//! runs in `f64`.
//!
//! The geodesic mix follows the great circle from the image feature `f_i`
//! (`lambda = 0`) to the text feature `f_t` (`lambda = 1`):
//!
//! ```text
//! m(lambda) = f_t * sin(lambda * theta) / sin(theta)
//!           + f_i * sin((1 - lambda) * theta) / sin(theta)
//! theta     = arccos(f_t . f_i)
//! ```

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Angles below this (radians) use normalized linear interpolation; angles
/// above `PI - THETA_MIN` have no well-defined geodesic.
pub const THETA_MIN: f64 = 1e-4;

/// Allowed deviation of a [`UnitVector`]'s norm from 1.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-5;

/// A finite, unit-norm embedding.
#[derive(Clone, PartialEq)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Wraps values that are already unit norm (within [`UNIT_NORM_TOLERANCE`]).
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let norm = checked_norm(&values)?;
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "vector norm {norm} is not within {UNIT_NORM_TOLERANCE} of 1"
            )));
        }
        Ok(Self(values))
    }

    /// Scales arbitrary finite, non-zero values onto the unit sphere.
    pub fn normalize(mut values: Vec<f64>) -> Result<Self> {
        let norm = checked_norm(&values)?;
        if norm == 0.0 {
            return Err(Error::InvalidInput("cannot normalize a zero vector".into()));
        }
        values.iter_mut().for_each(|x| *x /= norm);
        Ok(Self(values))
    }

    /// Converts stored single-precision values, renormalizing in `f64`.
    pub fn normalize_f32(values: &[f32]) -> Result<Self> {
        Self::normalize(values.iter().map(|&x| f64::from(x)).collect())
    }

    /// The `axis`-th standard basis vector of dimension `dim`.
    pub fn basis(dim: usize, axis: usize) -> Result<Self> {
        if axis >= dim {
            return Err(Error::InvalidInput(format!(
                "axis {axis} out of range for dimension {dim}"
            )));
        }
        let mut values = vec![0.0; dim];
        values[axis] = 1.0;
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// Values narrowed to `f32` for bundle storage.
    pub fn to_f32(&self) -> Vec<f32> {
        self.0.iter().map(|&x| x as f32).collect()
    }
}

impl fmt::Debug for UnitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("UnitVector").field(&self.0).finish()
    }
}

impl AsRef<[f64]> for UnitVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn checked_norm(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("vector has dimension 0".into()));
    }
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(
            "vector contains a non-finite value".into(),
        ));
    }
    Ok(norm(values))
}

pub(crate) fn norm(values: &[f64]) -> f64 {
    values.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Clamped dot product; `+ 0.0` folds negative zero into zero so ties
/// compare equal.
pub(crate) fn clamped_dot(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b).clamp(-1.0, 1.0) + 0.0
}

/// Mixing weight of the text feature, in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct MixRatio(f64);

impl MixRatio {
    pub const IMAGE: MixRatio = MixRatio(0.0);
    pub const TEXT: MixRatio = MixRatio(1.0);

    pub fn new(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidInput(format!(
                "mix ratio {lambda} is outside [0, 1]"
            )));
        }
        Ok(Self(lambda))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for MixRatio {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<MixRatio> for f64 {
    fn from(ratio: MixRatio) -> f64 {
        ratio.0
    }
}

impl fmt::Display for MixRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

fn check_dims(u: &UnitVector, v: &UnitVector) -> Result<()> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            found: v.dim(),
        });
    }
    Ok(())
}

/// Cosine similarity of two unit vectors, clamped to `[-1, 1]`.
pub fn cosine(u: &UnitVector, v: &UnitVector) -> Result<f64> {
    check_dims(u, v)?;
    Ok(clamped_dot(u.as_slice(), v.as_slice()))
}

/// Angle in `[0, PI]` between two unit vectors.
pub fn angle_between(f_t: &UnitVector, f_i: &UnitVector) -> Result<f64> {
    Ok(cosine(f_t, f_i)?.acos())
}

/// Geodesic mix of the text feature `f_t` and image feature `f_i`.
///
/// `lambda = 0` returns `f_i`, `lambda = 1` returns `f_t`. The output is
/// renormalized. Near-parallel inputs (`theta < THETA_MIN`) fall back to
/// normalized linear interpolation; near-antipodal inputs are rejected with
/// [`Error::DegenerateGeometry`].
pub fn slerp(f_t: &UnitVector, f_i: &UnitVector, lambda: MixRatio) -> Result<UnitVector> {
    let theta = angle_between(f_t, f_i)?;
    if theta > PI - THETA_MIN {
        return Err(Error::DegenerateGeometry { theta });
    }
    let lambda = lambda.value();
    if lambda == 0.0 {
        return Ok(f_i.clone());
    }
    if lambda == 1.0 {
        return Ok(f_t.clone());
    }

    let (w_text, w_image) = if theta < THETA_MIN {
        (lambda, 1.0 - lambda)
    } else {
        let sin_theta = theta.sin();
        (
            (lambda * theta).sin() / sin_theta,
            ((1.0 - lambda) * theta).sin() / sin_theta,
        )
    };
    let mixed = f_t
        .as_slice()
        .iter()
        .zip(f_i.as_slice())
        .map(|(t, i)| w_text * t + w_image * i)
        .collect();
    UnitVector::normalize(mixed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn e(dim: usize, axis: usize) -> UnitVector {
        UnitVector::basis(dim, axis).unwrap()
    }

    fn neg(v: &UnitVector) -> UnitVector {
        UnitVector::new(v.as_slice().iter().map(|x| -x).collect()).unwrap()
    }

    #[test]
    fn cosine_of_basis_pairs() {
        let (e1, e2) = (e(3, 0), e(3, 1));
        assert_eq!(cosine(&e1, &e1).unwrap(), 1.0);
        assert_eq!(cosine(&e1, &e2).unwrap(), 0.0);
        assert_eq!(cosine(&e1, &neg(&e1)).unwrap(), -1.0);
    }

    #[test]
    fn cosine_rejects_dimension_mismatch() {
        let err = cosine(&e(3, 0), &e(4, 0)).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                expected: 3,
                found: 4
            }
        ));
    }

    #[test]
    fn angles() {
        assert_abs_diff_eq!(angle_between(&e(2, 0), &e(2, 1)).unwrap(), PI / 2.0);
        assert_eq!(angle_between(&e(2, 0), &e(2, 0)).unwrap(), 0.0);
        let half = UnitVector::normalize(vec![0.5, 0.75f64.sqrt()]).unwrap();
        assert_abs_diff_eq!(
            angle_between(&half, &e(2, 0)).unwrap(),
            PI / 3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn slerp_endpoints_and_midpoint() {
        let (e1, e2) = (e(2, 0), e(2, 1));
        assert_eq!(slerp(&e1, &e2, MixRatio::TEXT).unwrap(), e1);
        assert_eq!(slerp(&e1, &e2, MixRatio::IMAGE).unwrap(), e2);
        let mid = slerp(&e1, &e2, MixRatio::new(0.5).unwrap()).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(mid.as_slice()[0], r, epsilon = 1e-12);
        assert_abs_diff_eq!(mid.as_slice()[1], r, epsilon = 1e-12);
    }

    #[test]
    fn slerp_rejects_antipodal() {
        let e1 = e(3, 0);
        let err = slerp(&e1, &neg(&e1), MixRatio::new(0.5).unwrap()).unwrap_err();
        match err {
            Error::DegenerateGeometry { theta } => assert_abs_diff_eq!(theta, PI),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn slerp_near_parallel_falls_back_to_lerp() {
        let a = e(2, 0);
        let b = UnitVector::normalize(vec![1.0, 1e-6]).unwrap();
        let m = slerp(&a, &b, MixRatio::new(0.5).unwrap()).unwrap();
        assert_abs_diff_eq!(m.norm(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.as_slice()[1], 0.5e-6, epsilon = 1e-9);
    }

    #[test]
    fn mix_ratio_bounds() {
        assert!(MixRatio::new(-0.01).is_err());
        assert!(MixRatio::new(1.01).is_err());
        assert!(MixRatio::new(f64::NAN).is_err());
        assert_eq!(MixRatio::new(0.7).unwrap().value(), 0.7);
        let parsed: Result<MixRatio, _> = serde_json::from_str("1.5");
        assert!(parsed.is_err());
    }

    #[test]
    fn unit_vector_constructors() {
        assert!(UnitVector::new(vec![1.0, 1.0]).is_err());
        assert!(UnitVector::new(vec![]).is_err());
        assert!(UnitVector::normalize(vec![0.0, 0.0]).is_err());
        assert!(UnitVector::normalize(vec![f64::INFINITY, 0.0]).is_err());
        let v = UnitVector::normalize(vec![3.0, 4.0]).unwrap();
        assert_eq!(v.as_slice(), &[0.6, 0.8]);
    }
}
