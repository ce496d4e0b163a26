//! Distance and dissimilarity measures between effect vectors.
//!
//! All sums run left to right over coordinates, so a given input always
//! produces the same bits regardless of how callers parallelize.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::asymptotics;
use crate::error::{PdsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceKind {
    L1,
    L2,
    CosineDissim,
    SignCosineDissim,
    /// Large-scale limit of the l2 ranking: negative inner product.
    L2LimitSurrogate,
    /// Large-scale limit of the l1 ranking, including the zero-coordinate term.
    L1LimitSurrogate,
}

impl DistanceKind {
    pub const ALL: [DistanceKind; 6] = [
        DistanceKind::L1,
        DistanceKind::L2,
        DistanceKind::CosineDissim,
        DistanceKind::SignCosineDissim,
        DistanceKind::L2LimitSurrogate,
        DistanceKind::L1LimitSurrogate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistanceKind::L1 => "l1",
            DistanceKind::L2 => "l2",
            DistanceKind::CosineDissim => "cosine",
            DistanceKind::SignCosineDissim => "sign-cosine",
            DistanceKind::L2LimitSurrogate => "l2-limit",
            DistanceKind::L1LimitSurrogate => "l1-limit",
        }
    }

    /// Whether the measure depends only on direction (or sign pattern).
    pub fn is_scale_invariant(self) -> bool {
        matches!(self, DistanceKind::CosineDissim | DistanceKind::SignCosineDissim)
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistanceKind {
    type Err = PdsError;

    fn from_str(s: &str) -> Result<Self> {
        DistanceKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| {
                let names: Vec<_> = DistanceKind::ALL.iter().map(|k| k.name()).collect();
                PdsError::BadParameter(format!(
                    "unknown metric `{s}`; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceSpec {
    pub kind: DistanceKind,
    /// Coordinates with `|x| <= sign_threshold` get sign 0.
    pub sign_threshold: f64,
}

impl DistanceSpec {
    pub fn new(kind: DistanceKind) -> Self {
        Self {
            kind,
            sign_threshold: 0.0,
        }
    }

    pub fn with_sign_threshold(kind: DistanceKind, sign_threshold: f64) -> Result<Self> {
        if !(sign_threshold >= 0.0 && sign_threshold.is_finite()) {
            return Err(PdsError::BadParameter(format!(
                "sign threshold must be a nonnegative finite number, got {sign_threshold}"
            )));
        }
        Ok(Self {
            kind,
            sign_threshold,
        })
    }
}

impl From<DistanceKind> for DistanceSpec {
    fn from(kind: DistanceKind) -> Self {
        Self::new(kind)
    }
}

impl fmt::Display for DistanceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.name())
    }
}

pub(crate) fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(PdsError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

pub fn squared_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |acc, x| acc + x * x)
}

pub fn norm_l2(a: &[f64]) -> f64 {
    squared_norm(a).sqrt()
}

pub fn norm_l1(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |acc, x| acc + x.abs())
}

pub fn dist_l1(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    Ok(a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + (x - y).abs()))
}

pub fn dist_l2(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    Ok(a
        .iter()
        .zip(b)
        .fold(0.0, |acc, (x, y)| {
            let d = x - y;
            acc + d * d
        })
        .sqrt())
}

/// Cosine similarity. A zero vector has no direction and is an error.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    let na = norm_l2(a);
    let nb = norm_l2(b);
    if na == 0.0 || nb == 0.0 {
        return Err(PdsError::ZeroVector);
    }
    Ok(dot(a, b) / (na * nb))
}

#[inline]
pub fn sign_of(x: f64, threshold: f64) -> i8 {
    if x.abs() <= threshold {
        0
    } else if x > 0.0 {
        1
    } else {
        -1
    }
}

pub fn sign_vector(a: &[f64], threshold: f64) -> Vec<i8> {
    a.iter().map(|&x| sign_of(x, threshold)).collect()
}

/// Cosine between sign vectors: (agreements - disagreements) / sqrt(nnz(a) nnz(b)).
pub fn sign_cosine(a: &[f64], b: &[f64], threshold: f64) -> Result<f64> {
    check_dims(a, b)?;
    let (mut nnz_a, mut nnz_b, mut net) = (0i64, 0i64, 0i64);
    for (&x, &y) in a.iter().zip(b) {
        let sx = sign_of(x, threshold) as i64;
        let sy = sign_of(y, threshold) as i64;
        nnz_a += sx.abs();
        nnz_b += sy.abs();
        net += sx * sy;
    }
    if nnz_a == 0 || nnz_b == 0 {
        return Err(PdsError::ZeroSignVector);
    }
    Ok(net as f64 / ((nnz_a as f64) * (nnz_b as f64)).sqrt())
}

/// Dispatches to the measure named by `spec`. For the limit surrogates `a` is
/// the prediction and `b` the candidate truth.
pub fn distance(spec: &DistanceSpec, a: &[f64], b: &[f64]) -> Result<f64> {
    match spec.kind {
        DistanceKind::L1 => dist_l1(a, b),
        DistanceKind::L2 => dist_l2(a, b),
        DistanceKind::CosineDissim => cosine(a, b).map(|c| 1.0 - c),
        DistanceKind::SignCosineDissim => sign_cosine(a, b, spec.sign_threshold).map(|c| 1.0 - c),
        DistanceKind::L2LimitSurrogate => asymptotics::l2_limit_score(a, b),
        DistanceKind::L1LimitSurrogate => asymptotics::l1_limit_score(a, b, spec.sign_threshold),
    }
}
