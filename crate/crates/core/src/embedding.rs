//! Embeddings and the distance metrics an authentication system compares them with.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the norm of an embedding that is claimed to be unit length.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-9;

/// A fixed-length real feature vector with finite entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyEmbedding);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { values })
    }

    pub fn from_dvector(v: &DVector<f64>) -> Result<Self> {
        Self::new(v.iter().copied().collect())
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_NORM_TOLERANCE
    }

    pub fn scaled(&self, factor: f64) -> Result<Embedding> {
        Embedding::new(self.values.iter().map(|v| v * factor).collect())
    }

    pub(crate) fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: self.dim(),
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Embedding::new(values)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Self {
        e.values
    }
}

/// Distance used by an embedding system.
///
/// `Cosine` is one minus cosine similarity, so identical directions sit at 0
/// and orthogonal ones at 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    SquaredL2,
    L2,
    Cosine,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::SquaredL2 => "squared-l2",
            Metric::L2 => "l2",
            Metric::Cosine => "cosine",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "squared-l2" | "squared_l2" | "sql2" => Ok(Metric::SquaredL2),
            "l2" | "euclidean" => Ok(Metric::L2),
            "cosine" | "cos" => Ok(Metric::Cosine),
            other => Err(Error::InvalidArgument(format!("unknown metric `{other}`"))),
        }
    }
}

/// Distance between two embeddings under `metric`.
pub fn distance(a: &Embedding, b: &Embedding, metric: Metric) -> Result<f64> {
    b.check_dim(a.dim())?;
    match metric {
        Metric::SquaredL2 => Ok(squared_l2(a.values(), b.values())),
        Metric::L2 => Ok(squared_l2(a.values(), b.values()).sqrt()),
        Metric::Cosine => {
            let na = a.norm();
            let nb = b.norm();
            if na == 0.0 || nb == 0.0 {
                return Err(Error::ZeroVector);
            }
            let sim = (a.dot(b) / (na * nb)).clamp(-1.0, 1.0);
            Ok(1.0 - sim)
        }
    }
}

pub(crate) fn squared_l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Rescales `e` to unit Euclidean norm.
pub fn normalize(e: &Embedding) -> Result<Embedding> {
    let norm = e.norm();
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    e.scaled(1.0 / norm)
}

/// Angle in radians between two non-zero embeddings.
pub fn angle_between(a: &Embedding, b: &Embedding) -> Result<f64> {
    b.check_dim(a.dim())?;
    // Chord between the unit vectors keeps precision for nearly parallel inputs,
    // where acos of the dot product would not.
    let ua = normalize(a)?;
    let ub = normalize(b)?;
    let chord = squared_l2(ua.values(), ub.values()).sqrt();
    Ok(2.0 * (chord / 2.0).min(1.0).asin())
}
