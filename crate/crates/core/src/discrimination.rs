//! Rank-based perturbation discrimination score (PDS).
//!
//! For each anchor perturbation the distance from its prediction to its own
//! truth is ranked among the distances to every truth. Rank 1 means the true
//! effect is the closest; the rank is mapped linearly onto `[0, 1]` with
//! `pds = 1 - (rank - 1) / (N - 1)`. Ties take the mid-rank.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effects::EffectPair;
use crate::error::{PdsError, Result};
use crate::metrics::{distance, DistanceSpec};
use crate::transforms::TransformDescriptor;

/// What to do with an anchor whose distances cannot be computed, e.g. a zero
/// vector under a cosine measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorPolicy {
    /// Score the anchor as rank N (pds 0) and flag it.
    #[default]
    WorstRank,
    /// Flag the anchor and leave it out of the mean.
    Exclude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PdsOptions {
    pub apply_target_mask: bool,
    pub error_policy: ErrorPolicy,
    pub parallel: bool,
}

impl Default for PdsOptions {
    fn default() -> Self {
        Self {
            apply_target_mask: false,
            error_policy: ErrorPolicy::WorstRank,
            parallel: true,
        }
    }
}

impl PdsOptions {
    pub fn masked(mut self, apply_target_mask: bool) -> Self {
        self.apply_target_mask = apply_target_mask;
        self
    }

    pub fn serial(mut self) -> Self {
        self.parallel = false;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationScore {
    pub perturbation_id: String,
    /// `None` when the anchor could not be scored.
    pub true_distance: Option<f64>,
    pub rank: f64,
    pub pds: f64,
    /// Whether the anchor counts toward `mean_pds`.
    pub included: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdsReport {
    pub metric: DistanceSpec,
    pub apply_target_mask: bool,
    pub error_policy: ErrorPolicy,
    pub per_perturbation: Vec<PerturbationScore>,
    pub mean_pds: f64,
    pub transform_chain: Vec<TransformDescriptor>,
}

impl PdsReport {
    pub fn ranks(&self) -> Vec<f64> {
        self.per_perturbation.iter().map(|s| s.rank).collect()
    }

    pub fn flagged(&self) -> impl Iterator<Item = &PerturbationScore> {
        self.per_perturbation.iter().filter(|s| s.error.is_some())
    }
}

/// Mid-rank of `distances[true_index]` among all entries, and its PDS.
///
/// `rank = 1 + #{closer} + #{tied}/2`, counting other entries only.
pub fn pds_row(distances: &[f64], true_index: usize) -> Result<(f64, f64)> {
    let n = distances.len();
    if n < 2 {
        return Err(PdsError::TooFewPerturbations(n));
    }
    if true_index >= n {
        return Err(PdsError::BadIndex {
            index: true_index,
            len: n,
        });
    }
    if let Some(pos) = distances.iter().position(|d| !d.is_finite()) {
        return Err(PdsError::NonFiniteDistance(pos));
    }
    let target = distances[true_index];
    let (mut closer, mut tied) = (0usize, 0usize);
    for (i, &d) in distances.iter().enumerate() {
        if i == true_index {
            continue;
        }
        if d < target {
            closer += 1;
        } else if d == target {
            tied += 1;
        }
    }
    let rank = 1.0 + closer as f64 + 0.5 * tied as f64;
    Ok((rank, pds_from_rank(rank, n)))
}

pub(crate) fn pds_from_rank(rank: f64, n: usize) -> f64 {
    1.0 - (rank - 1.0) / (n as f64 - 1.0)
}

/// Distances from the anchor's (masked) prediction to every (masked) truth.
pub fn anchor_distances(
    pair: &EffectPair,
    spec: &DistanceSpec,
    anchor: usize,
    apply_target_mask: bool,
) -> Result<Vec<f64>> {
    let view = pair.anchor_view(anchor, apply_target_mask)?;
    let predicted = view.predicted.gather(pair.predicted());
    view.truths
        .iter()
        .map(|t| distance(spec, &predicted, &t.gather(pair.truth())))
        .collect()
}

fn score_anchor(
    pair: &EffectPair,
    spec: &DistanceSpec,
    anchor: usize,
    options: &PdsOptions,
) -> PerturbationScore {
    let n = pair.n_perturbations();
    let perturbation_id = pair.perturbation_ids()[anchor].clone();
    let scored = anchor_distances(pair, spec, anchor, options.apply_target_mask)
        .and_then(|d| pds_row(&d, anchor).map(|(rank, pds)| (d[anchor], rank, pds)));
    match scored {
        Ok((true_distance, rank, pds)) => PerturbationScore {
            perturbation_id,
            true_distance: Some(true_distance),
            rank,
            pds,
            included: true,
            error: None,
        },
        Err(err) => PerturbationScore {
            perturbation_id,
            true_distance: None,
            rank: n as f64,
            pds: 0.0,
            included: options.error_policy == ErrorPolicy::WorstRank,
            error: Some(err.to_string()),
        },
    }
}

/// Scores every perturbation of `pair` under `spec`.
///
/// Anchors are independent; the report is identical for serial and parallel
/// execution because each anchor is computed in isolation and results are
/// collected in row order.
pub fn compute_pds(pair: &EffectPair, spec: &DistanceSpec, options: &PdsOptions) -> Result<PdsReport> {
    let n = pair.n_perturbations();
    if n < 2 {
        return Err(PdsError::TooFewPerturbations(n));
    }
    let per_perturbation: Vec<PerturbationScore> = if options.parallel {
        (0..n)
            .into_par_iter()
            .map(|i| score_anchor(pair, spec, i, options))
            .collect()
    } else {
        (0..n).map(|i| score_anchor(pair, spec, i, options)).collect()
    };
    let included: Vec<f64> = per_perturbation
        .iter()
        .filter(|s| s.included)
        .map(|s| s.pds)
        .collect();
    if included.is_empty() {
        return Err(PdsError::NoScorableAnchors);
    }
    let mean_pds = included.iter().sum::<f64>() / included.len() as f64;
    Ok(PdsReport {
        metric: *spec,
        apply_target_mask: options.apply_target_mask,
        error_policy: options.error_policy,
        per_perturbation,
        mean_pds,
        transform_chain: pair.transform_chain().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effects::EffectMatrix;
    use crate::metrics::DistanceKind;
    use proptest::prelude::*;

    /// Full-sort oracle: average of the 1-based positions the true value's tie
    /// group occupies.
    fn sort_oracle(distances: &[f64], true_index: usize) -> f64 {
        let mut sorted = distances.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let target = distances[true_index];
        let positions: Vec<usize> = sorted
            .iter()
            .enumerate()
            .filter(|(_, &d)| d == target)
            .map(|(i, _)| i + 1)
            .collect();
        positions.iter().sum::<usize>() as f64 / positions.len() as f64
    }

    #[test]
    fn row_examples() {
        assert_eq!(pds_row(&[2.0, 5.0, 1.0], 0).unwrap(), (2.0, 0.5));
        assert_eq!(sort_oracle(&[2.0, 5.0, 1.0], 0), 2.0);
        assert_eq!(pds_row(&[0.0, 3.0, 7.0], 0).unwrap(), (1.0, 1.0));
        assert_eq!(pds_row(&[2.0, 2.0, 3.0], 0).unwrap(), (1.5, 0.75));
        // both orderings of the tie: rank 1 and rank 2
        assert_eq!(sort_oracle(&[2.0, 2.0, 3.0], 0), (1.0 + 2.0) / 2.0);
    }

    #[test]
    fn row_errors() {
        assert!(matches!(pds_row(&[1.0, 2.0], 2), Err(PdsError::BadIndex { index: 2, len: 2 })));
        assert!(matches!(pds_row(&[1.0], 0), Err(PdsError::TooFewPerturbations(1))));
        assert!(matches!(pds_row(&[1.0, f64::NAN], 0), Err(PdsError::NonFiniteDistance(1))));
    }

    #[test]
    fn worst_case_is_zero() {
        assert_eq!(pds_row(&[9.0, 1.0, 2.0, 3.0], 0).unwrap(), (4.0, 0.0));
    }

    fn pair(pred: Vec<Vec<f64>>, truth: Vec<Vec<f64>>) -> EffectPair {
        let n = pred.len();
        let p = pred[0].len();
        let perts: Vec<String> = (0..n).map(|i| format!("P{i}")).collect();
        let genes: Vec<String> = (0..p).map(|j| format!("g{j}")).collect();
        EffectPair::new(
            EffectMatrix::from_rows(pred, perts.clone(), genes.clone()).unwrap(),
            EffectMatrix::from_rows(truth, perts, genes).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let rows = vec![vec![1.0, 0.5, -2.0], vec![-1.0, 2.0, 0.3], vec![0.2, -0.7, 1.1]];
        let pair = pair(rows.clone(), rows);
        for kind in [
            DistanceKind::L1,
            DistanceKind::L2,
            DistanceKind::CosineDissim,
            DistanceKind::SignCosineDissim,
        ] {
            let report = compute_pds(&pair, &kind.into(), &PdsOptions::default()).unwrap();
            assert_eq!(report.mean_pds, 1.0, "{kind}");
        }
    }

    #[test]
    fn zero_prediction_policies() {
        let pair = pair(
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![1.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]],
        );
        let spec = DistanceKind::CosineDissim.into();
        let worst = compute_pds(&pair, &spec, &PdsOptions::default()).unwrap();
        assert_eq!(worst.per_perturbation[0].pds, 0.0);
        assert_eq!(worst.per_perturbation[0].rank, 3.0);
        assert!(worst.per_perturbation[0].error.is_some());
        assert_eq!(worst.flagged().count(), 1);
        assert!((worst.mean_pds - 2.0 / 3.0).abs() < 1e-15);

        let options = PdsOptions {
            error_policy: ErrorPolicy::Exclude,
            ..PdsOptions::default()
        };
        let excluded = compute_pds(&pair, &spec, &options).unwrap();
        assert!(!excluded.per_perturbation[0].included);
        assert_eq!(excluded.mean_pds, 1.0);
    }

    #[test]
    fn mask_changes_the_comparison_subspace() {
        // Without masking the shared large gene makes P1's truth closest to P0's
        // prediction; masking P0's target (g0) removes it.
        let pred = vec![vec![10.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let truth = vec![vec![0.0, 1.0, 0.0], vec![10.0, 0.0, 1.0]];
        let targets = [("P0".to_string(), "g0".to_string())].into_iter().collect();
        let pair = pair(pred, truth).with_targets(targets).unwrap();
        let spec = DistanceKind::L2.into();
        let plain = compute_pds(&pair, &spec, &PdsOptions::default()).unwrap();
        let masked = compute_pds(&pair, &spec, &PdsOptions::default().masked(true)).unwrap();
        assert_eq!(plain.per_perturbation[0].rank, 2.0);
        assert_eq!(masked.per_perturbation[0].rank, 1.0);
    }

    proptest! {
        #[test]
        fn counting_matches_sort_oracle(
            distances in prop::collection::vec(0u8..6, 2..40),
            seed in any::<prop::sample::Index>(),
        ) {
            let d: Vec<f64> = distances.iter().map(|&x| x as f64 * 0.5).collect();
            let t = seed.index(d.len());
            let (rank, pds) = pds_row(&d, t).unwrap();
            prop_assert_eq!(rank, sort_oracle(&d, t));
            prop_assert!((0.0..=1.0).contains(&pds));
        }

        #[test]
        fn rank_invariant_under_monotone_maps(
            d in prop::collection::vec(0.0..100.0f64, 2..40),
            seed in any::<prop::sample::Index>(),
        ) {
            let t = seed.index(d.len());
            let mapped: Vec<f64> = d.iter().map(|x| (x + 1.0).ln() * 3.0 + 2.0).collect();
            prop_assert_eq!(pds_row(&d, t).unwrap(), pds_row(&mapped, t).unwrap());
        }
    }
}
