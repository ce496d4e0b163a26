//! When can a short, orthogonal distractor beat a well-aligned truth in l2?
//!
//! Place the prediction `x` and a unit direction `u` orthogonal to it. Points
//! `t u` (t > 0) get arbitrarily close to distance `||x||` from `x` as `t -> 0`,
//! so the truth `y` is safe from every such ray iff `||x - y|| <= ||x||`, i.e.
//! `cos(x, y) >= ||y|| / (2 ||x||)`. With matched norms the bound is 1/2.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PdsError, Result};
use crate::metrics::{norm_l1, norm_l2};
use crate::transforms::NormKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateResult {
    pub safe: bool,
    pub cosine: f64,
    /// Cosine required for safety.
    pub threshold: f64,
    pub margin: f64,
}

pub fn orthogonal_ray_certificate(
    pred_norm: f64,
    true_norm: f64,
    cosine_to_true: f64,
) -> Result<CertificateResult> {
    if !(pred_norm > 0.0 && true_norm > 0.0 && pred_norm.is_finite() && true_norm.is_finite()) {
        return Err(PdsError::NonpositiveNorm);
    }
    if !(-1.0..=1.0).contains(&cosine_to_true) {
        return Err(PdsError::BadParameter(format!(
            "cosine must lie in [-1, 1], got {cosine_to_true}"
        )));
    }
    let threshold = true_norm / (2.0 * pred_norm);
    let margin = cosine_to_true - threshold;
    Ok(CertificateResult {
        safe: margin >= 0.0,
        cosine: cosine_to_true,
        threshold,
        margin,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloRegionResult {
    pub dimension: usize,
    pub norm_ratio: f64,
    pub true_cosine: f64,
    pub distance: NormKind,
    pub samples: u64,
    pub fraction_closer: f64,
    pub standard_error: f64,
}

const BATCH: u64 = 4096;

/// Fraction of distractors `rho * u`, `u` uniform on the unit sphere in
/// `R^dimension`, that are strictly closer to a unit prediction than a unit
/// truth at cosine `true_cosine`.
///
/// Draws are split into fixed batches, each with its own ChaCha stream, so the
/// count does not depend on the number of worker threads.
pub fn region_fraction(
    dimension: usize,
    norm_ratio: f64,
    true_cosine: f64,
    samples: u64,
    seed: u64,
    distance: NormKind,
) -> Result<MonteCarloRegionResult> {
    if dimension < 2 {
        return Err(PdsError::BadParameter(format!("dimension must be >= 2, got {dimension}")));
    }
    if !(norm_ratio > 0.0 && norm_ratio.is_finite()) {
        return Err(PdsError::BadParameter(format!("norm ratio must be positive, got {norm_ratio}")));
    }
    if !(-1.0..=1.0).contains(&true_cosine) {
        return Err(PdsError::BadParameter(format!(
            "true cosine must lie in [-1, 1], got {true_cosine}"
        )));
    }
    if samples == 0 {
        return Err(PdsError::BadParameter("samples must be >= 1".into()));
    }

    let dist = |v: &[f64]| match distance {
        NormKind::L1 => norm_l1(v),
        NormKind::L2 => norm_l2(v),
    };
    // prediction e1; truth kappa e1 + sqrt(1 - kappa^2) e2
    let sine = (1.0 - true_cosine * true_cosine).max(0.0).sqrt();
    let truth_gap = dist(&[1.0 - true_cosine, -sine]);

    let batches = samples.div_ceil(BATCH);
    let closer: u64 = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let n = BATCH.min(samples - b * BATCH);
            let mut u = vec![0.0; dimension];
            let mut count = 0u64;
            for _ in 0..n {
                let len = loop {
                    for v in u.iter_mut() {
                        *v = rng.sample(StandardNormal);
                    }
                    let len = norm_l2(&u);
                    if len > 0.0 {
                        break len;
                    }
                };
                let scale = norm_ratio / len;
                for v in u.iter_mut() {
                    *v *= -scale;
                }
                u[0] += 1.0;
                if dist(&u) < truth_gap {
                    count += 1;
                }
            }
            count
        })
        .sum();

    let fraction_closer = closer as f64 / samples as f64;
    Ok(MonteCarloRegionResult {
        dimension,
        norm_ratio,
        true_cosine,
        distance,
        samples,
        fraction_closer,
        standard_error: (fraction_closer * (1.0 - fraction_closer) / samples as f64).sqrt(),
    })
}
