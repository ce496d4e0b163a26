//! Behaviour of l1/l2 PDS under a global rescaling `c * prediction`.
//!
//! For l2, `||c x - y||^2 = c^2 ||x||^2 + ||y||^2 - 2 c x.y`, so once `c` is
//! large enough the ranking of candidates is the ranking of `-x.y`. For l1,
//! each coordinate with `x_j != 0` contributes `c |x_j| - sign(x_j) y_j` once
//! `c |x_j| >= |y_j|`, and coordinates with `x_j = 0` contribute `|y_j|` for
//! every `c`. Both limits are exact beyond a computable threshold.

use serde::{Deserialize, Serialize};

use crate::discrimination::{compute_pds, PdsOptions};
use crate::effects::{EffectMatrix, EffectPair};
use crate::error::{PdsError, Result};
use crate::metrics::{check_dims, dot, sign_of, squared_norm, DistanceKind, DistanceSpec};
use crate::transforms::global_scale;

/// Surrogate scores of one anchor against all candidate truths; smaller is
/// closer in the large-`c` limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSurrogateRow {
    pub anchor: usize,
    pub scores: Vec<f64>,
}

pub fn l2_limit_score(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    check_dims(predicted, truth)?;
    Ok(-dot(predicted, truth))
}

/// `-sum_{sign(x_j) != 0} sign(x_j) y_j + sum_{sign(x_j) = 0} |y_j|`.
///
/// The second sum is exact only for `threshold = 0`; with a positive threshold
/// small nonzero coordinates are treated as zeros.
pub fn l1_limit_score(predicted: &[f64], truth: &[f64], threshold: f64) -> Result<f64> {
    check_dims(predicted, truth)?;
    Ok(predicted.iter().zip(truth).fold(0.0, |acc, (&x, &y)| {
        match sign_of(x, threshold) {
            0 => acc + y.abs(),
            s => acc - s as f64 * y,
        }
    }))
}

/// Weighted sign agreement without the zero-coordinate term. Agrees with
/// [`l1_limit_score`] only when the prediction has no zero coordinates.
pub fn l1_limit_score_uncorrected(predicted: &[f64], truth: &[f64], threshold: f64) -> Result<f64> {
    check_dims(predicted, truth)?;
    Ok(predicted
        .iter()
        .zip(truth)
        .fold(0.0, |acc, (&x, &y)| acc - sign_of(x, threshold) as f64 * y))
}

fn surrogate_row(
    anchor: usize,
    predicted_row: &[f64],
    truth: &EffectMatrix,
    score: impl Fn(&[f64], &[f64]) -> Result<f64>,
) -> Result<LimitSurrogateRow> {
    let scores = (0..truth.n_perturbations())
        .map(|i| score(predicted_row, truth.row(i)))
        .collect::<Result<_>>()?;
    Ok(LimitSurrogateRow { anchor, scores })
}

pub fn l2_limit_scores(
    anchor: usize,
    predicted_row: &[f64],
    truth: &EffectMatrix,
) -> Result<LimitSurrogateRow> {
    surrogate_row(anchor, predicted_row, truth, l2_limit_score)
}

pub fn l1_limit_scores(
    anchor: usize,
    predicted_row: &[f64],
    truth: &EffectMatrix,
    sign_threshold: f64,
) -> Result<LimitSurrogateRow> {
    surrogate_row(anchor, predicted_row, truth, |x, y| {
        l1_limit_score(x, y, sign_threshold)
    })
}

pub fn l1_limit_scores_uncorrected(
    anchor: usize,
    predicted_row: &[f64],
    truth: &EffectMatrix,
    sign_threshold: f64,
) -> Result<LimitSurrogateRow> {
    surrogate_row(anchor, predicted_row, truth, |x, y| {
        l1_limit_score_uncorrected(x, y, sign_threshold)
    })
}

/// Smallest `c*` such that for every `c > c*` the full l2 ordering of
/// candidates for every anchor equals the ordering by [`l2_limit_score`].
///
/// For candidates `a`, `b` the squared-distance gap is
/// `(|y_a|^2 - |y_b|^2) - 2 c (x.y_a - x.y_b)`, affine in `c`, so the pairwise
/// crossing point is `|.|y_a|^2 - |y_b|^2| / (2 |x.y_a - x.y_b|)`.
pub fn convergence_threshold_l2(pair: &EffectPair, apply_target_mask: bool) -> Result<f64> {
    let n = pair.n_perturbations();
    let mut threshold = 0.0f64;
    for anchor in 0..n {
        let view = pair.anchor_view(anchor, apply_target_mask)?;
        let x = view.predicted.gather(pair.predicted());
        let (inner, sq): (Vec<f64>, Vec<f64>) = view
            .truths
            .iter()
            .map(|t| {
                let y = t.gather(pair.truth());
                (dot(&x, &y), squared_norm(&y))
            })
            .unzip();
        for a in 0..n {
            for b in (a + 1)..n {
                let dg = (inner[a] - inner[b]).abs();
                let dn = (sq[a] - sq[b]).abs();
                if dg == 0.0 {
                    if dn != 0.0 {
                        return Err(PdsError::DegeneratePair {
                            anchor,
                            first: a,
                            second: b,
                        });
                    }
                    continue;
                }
                threshold = threshold.max(dn / (2.0 * dg));
            }
        }
    }
    Ok(threshold)
}

/// Smallest `c` beyond which every coordinate of `c * x - y` with `x_j != 0`
/// has the sign of `x_j`, i.e. `max |y_j| / |x_j|` over anchors, nonzero
/// prediction coordinates and candidates. Past it the l1 distance equals
/// `c ||x||_1 + l1_limit_score(x, y, 0)` exactly.
pub fn l1_flip_threshold(pair: &EffectPair, apply_target_mask: bool) -> Result<f64> {
    let mut threshold = 0.0f64;
    for anchor in 0..pair.n_perturbations() {
        let view = pair.anchor_view(anchor, apply_target_mask)?;
        let x = view.predicted.gather(pair.predicted());
        for t in &view.truths {
            let y = t.gather(pair.truth());
            for (&xj, &yj) in x.iter().zip(y.iter()) {
                if xj != 0.0 {
                    threshold = threshold.max(yj.abs() / xj.abs());
                }
            }
        }
    }
    Ok(threshold)
}

/// The measure whose ranking `spec` approaches as predictions are scaled up.
pub fn limit_spec(spec: &DistanceSpec) -> DistanceSpec {
    let kind = match spec.kind {
        DistanceKind::L1 => DistanceKind::L1LimitSurrogate,
        DistanceKind::L2 => DistanceKind::L2LimitSurrogate,
        other => other,
    };
    DistanceSpec {
        kind,
        sign_threshold: spec.sign_threshold,
    }
}

/// `n` points evenly spaced in log10 between `lo` and `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && lo.is_finite() && hi.is_finite()) || n == 0 {
        return Err(PdsError::BadParameter(format!(
            "grid needs 0 < lo <= hi and n >= 1, got {lo}:{hi}:{n}"
        )));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..n)
        .map(|k| {
            if k == n - 1 {
                hi
            } else {
                10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64)
            }
        })
        .collect())
}

/// 25 points from 1e-2 to 1e4.
pub fn default_grid() -> Vec<f64> {
    log_grid(1e-2, 1e4, 25).expect("valid constants")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub metric: DistanceSpec,
    pub mean_pds: Vec<f64>,
    /// Mean PDS under the limit surrogate (the metric itself when scale
    /// invariant).
    pub limit_mean_pds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSweepResult {
    pub scales: Vec<f64>,
    pub curves: Vec<SweepCurve>,
    /// Present when l2 was swept and a finite threshold exists.
    pub l2_convergence_threshold: Option<f64>,
}

impl ScaleSweepResult {
    pub fn curve(&self, kind: DistanceKind) -> Option<&SweepCurve> {
        self.curves.iter().find(|c| c.metric.kind == kind)
    }
}

pub fn scale_sweep(
    pair: &EffectPair,
    metrics: &[DistanceSpec],
    scales: &[f64],
    options: &PdsOptions,
) -> Result<ScaleSweepResult> {
    if scales.is_empty() {
        return Err(PdsError::BadParameter("empty scale grid".into()));
    }
    if scales.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
        return Err(PdsError::BadParameter("scales must be positive and finite".into()));
    }
    if scales.windows(2).any(|w| w[0] >= w[1]) {
        return Err(PdsError::BadParameter("scales must be strictly ascending".into()));
    }

    let scaled: Vec<EffectPair> = scales
        .iter()
        .map(|&c| {
            let predicted = global_scale(pair.predicted(), c)?;
            Ok(pair.with_predicted(
                predicted,
                crate::transforms::TransformDescriptor::GlobalScale { factor: c },
            ))
        })
        .collect::<Result<_>>()?;

    let mut curves = Vec::with_capacity(metrics.len());
    for spec in metrics {
        let mean_pds = scaled
            .iter()
            .map(|p| compute_pds(p, spec, options).map(|r| r.mean_pds))
            .collect::<Result<Vec<_>>>()?;
        let limit_mean_pds = compute_pds(pair, &limit_spec(spec), options)?.mean_pds;
        curves.push(SweepCurve {
            metric: *spec,
            mean_pds,
            limit_mean_pds,
        });
    }

    let l2_convergence_threshold = if metrics.iter().any(|m| m.kind == DistanceKind::L2) {
        convergence_threshold_l2(pair, options.apply_target_mask).ok()
    } else {
        None
    };

    Ok(ScaleSweepResult {
        scales: scales.to_vec(),
        curves,
        l2_convergence_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{dist_l1, dist_l2};
    use approx::assert_relative_eq;

    fn pair(pred: Vec<Vec<f64>>, truth: Vec<Vec<f64>>) -> EffectPair {
        let n = truth.len();
        let p = truth[0].len();
        let perts: Vec<String> = (0..n).map(|i| format!("P{i}")).collect();
        let genes: Vec<String> = (0..p).map(|j| format!("g{j}")).collect();
        EffectPair::new(
            EffectMatrix::from_rows(pred, perts.clone(), genes.clone()).unwrap(),
            EffectMatrix::from_rows(truth, perts, genes).unwrap(),
        )
        .unwrap()
    }

    fn truth(rows: Vec<Vec<f64>>) -> EffectMatrix {
        let perts = (0..rows.len()).map(|i| format!("P{i}")).collect();
        let genes = (0..rows[0].len()).map(|j| format!("g{j}")).collect();
        EffectMatrix::from_rows(rows, perts, genes).unwrap()
    }

    #[test]
    fn l2_limit_examples() {
        let t = truth(vec![vec![1.0, 1.0], vec![0.1, 0.0]]);
        let row = l2_limit_scores(0, &[1.0, 0.0], &t).unwrap();
        assert_eq!(row.scores, vec![-1.0, -0.1]);

        // orthogonal distractor: any positive alignment with the truth wins
        let t = truth(vec![vec![0.01, 3.0], vec![0.0, -100.0]]);
        let row = l2_limit_scores(0, &[1.0, 0.0], &t).unwrap();
        assert!(row.scores[0] < row.scores[1]);

        // a longer collinear distractor wins the limit ranking
        let t = truth(vec![vec![1.0, 2.0], vec![2.0, 4.0]]);
        let row = l2_limit_scores(0, &[1.0, 2.0], &t).unwrap();
        assert!(row.scores[1] < row.scores[0]);
    }

    #[test]
    fn l1_limit_counterexample() {
        let t = truth(vec![vec![1.0, 5.0], vec![-1.0, 0.0]]);
        let corrected = l1_limit_scores(0, &[1.0, 0.0], &t, 0.0).unwrap();
        assert_eq!(corrected.scores, vec![4.0, 1.0]);
        let uncorrected = l1_limit_scores_uncorrected(0, &[1.0, 0.0], &t, 0.0).unwrap();
        assert_eq!(uncorrected.scores, vec![-1.0, 1.0]);
        // brute force at c = 1e6 sides with the corrected score
        let c = 1e6;
        let d1 = dist_l1(&[c, 0.0], &[1.0, 5.0]).unwrap();
        let d2 = dist_l1(&[c, 0.0], &[-1.0, 0.0]).unwrap();
        assert!(d2 < d1);
    }

    #[test]
    fn l1_limit_without_zeros_matches_uncorrected() {
        let x = [0.5, -2.0, 1.5];
        let y = [3.0, 1.0, -4.0];
        assert_eq!(
            l1_limit_score(&x, &y, 0.0).unwrap(),
            l1_limit_score_uncorrected(&x, &y, 0.0).unwrap()
        );
        assert_eq!(l1_limit_score(&x, &y, 0.0).unwrap(), -(3.0 - 1.0 - 4.0));
    }

    #[test]
    fn l1_limit_full_agreement() {
        let x = [2.0, -1.0, 0.5];
        let agree = [1.0, -3.0, 2.0];
        let disagree = [-1.0, 3.0, -2.0];
        assert_eq!(l1_limit_score(&x, &agree, 0.0).unwrap(), -6.0);
        assert_eq!(l1_limit_score(&x, &disagree, 0.0).unwrap(), 6.0);
    }

    #[test]
    fn l2_threshold_example() {
        let p = pair(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![1.0, 1.0], vec![0.1, 0.0]],
        );
        // Anchor 1 sees inner products (1, 0): crossing at 1.99 / 2 < 1.99 / 1.8.
        let c = convergence_threshold_l2(&p, false).unwrap();
        assert_relative_eq!(c, 1.99 / 1.8, max_relative = 1e-12);
        let d = |c: f64, y: &[f64]| dist_l2(&[c, 0.0], y).unwrap();
        assert!(d(1.0, &[0.1, 0.0]) < d(1.0, &[1.0, 1.0]));
        assert!(d(1.2, &[1.0, 1.0]) < d(1.2, &[0.1, 0.0]));
    }

    #[test]
    fn equal_norm_truths_converge_immediately() {
        let truths = vec![
            vec![3.0, 4.0],
            vec![4.0, 3.0],
            vec![-3.0, 4.0],
            vec![0.0, 5.0],
        ];
        let preds = vec![
            vec![1.0, 0.2],
            vec![0.3, -1.0],
            vec![2.0, 2.0],
            vec![-0.5, 0.7],
        ];
        assert_eq!(convergence_threshold_l2(&pair(preds, truths), false).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_pair_is_reported() {
        // both distractors orthogonal to the prediction but of different length
        let p = pair(
            vec![vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]],
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 2.0]],
        );
        assert!(matches!(
            convergence_threshold_l2(&p, false),
            Err(PdsError::DegeneratePair { anchor: 0, first: 1, second: 2 })
        ));
    }

    #[test]
    fn grids() {
        let g = default_grid();
        assert_eq!(g.len(), 25);
        assert_relative_eq!(g[0], 1e-2, max_relative = 1e-12);
        assert_eq!(g[24], 1e4);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_relative_eq!(g[4], 0.1, max_relative = 1e-12);
        assert!(log_grid(0.0, 1.0, 3).is_err());
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let p = pair(vec![vec![1.0], vec![2.0]], vec![vec![1.0], vec![2.0]]);
        let m = [DistanceSpec::new(DistanceKind::L2)];
        let o = PdsOptions::default();
        assert!(scale_sweep(&p, &m, &[], &o).is_err());
        assert!(scale_sweep(&p, &m, &[2.0, 1.0], &o).is_err());
        assert!(scale_sweep(&p, &m, &[-1.0, 1.0], &o).is_err());
    }
}
