//! Synthetic effect pairs and count matrices with controllable geometry, and
//! brute-force reference implementations used to cross-check the scorers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discrimination::{ErrorPolicy, PdsReport, PerturbationScore};
use crate::effects::{EffectMatrix, EffectPair};
use crate::error::{PdsError, Result};
use crate::metrics::{dist_l1, distance, dot, norm_l2, DistanceSpec};
use crate::preprocessing::{CountMatrix, CONTROL_LABEL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_perturbations: usize,
    pub n_genes: usize,
    /// Truth norms are `exp(mu + sigma z)`, `z ~ N(0, 1)`.
    pub truth_norm_mu: f64,
    pub truth_norm_sigma: f64,
    /// Exact cosine between each prediction and its own truth.
    pub target_cosine: f64,
    /// Norm of every prediction.
    pub prediction_scale: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_perturbations: 100,
            n_genes: 500,
            truth_norm_mu: 0.0,
            truth_norm_sigma: 1.0,
            target_cosine: 0.6,
            prediction_scale: 1.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(PdsError::BadSpec(msg));
        if self.n_perturbations < 2 {
            return bad(format!("n_perturbations must be >= 2, got {}", self.n_perturbations));
        }
        if self.n_genes < 1 {
            return bad("n_genes must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.target_cosine) {
            return bad(format!("target_cosine must lie in [0, 1], got {}", self.target_cosine));
        }
        if self.n_genes == 1 && self.target_cosine < 1.0 {
            return bad("a single gene admits no orthogonal component".into());
        }
        if !(self.truth_norm_sigma >= 0.0 && self.truth_norm_sigma.is_finite()) {
            return bad(format!("truth_norm_sigma must be >= 0, got {}", self.truth_norm_sigma));
        }
        if !self.truth_norm_mu.is_finite() {
            return bad("truth_norm_mu must be finite".into());
        }
        if !(self.prediction_scale > 0.0 && self.prediction_scale.is_finite()) {
            return bad(format!("prediction_scale must be positive, got {}", self.prediction_scale));
        }
        Ok(())
    }
}

/// One ChaCha stream per row so rows can be generated in any order.
fn row_rng(seed: u64, row: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row);
    rng
}

fn gaussian_vec(rng: &mut impl Rng, p: usize) -> Vec<f64> {
    (0..p).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit_gaussian(rng: &mut impl Rng, p: usize) -> Vec<f64> {
    loop {
        let v = gaussian_vec(rng, p);
        let len = norm_l2(&v);
        if len > 0.0 {
            return v.into_iter().map(|x| x / len).collect();
        }
    }
}

/// Unit vector orthogonal to the unit vector `e` (Gram-Schmidt on a fresh draw).
fn orthogonal_unit(rng: &mut impl Rng, e: &[f64]) -> Vec<f64> {
    loop {
        let h = gaussian_vec(rng, e.len());
        let proj = dot(&h, e);
        let w: Vec<f64> = h.iter().zip(e).map(|(a, b)| a - proj * b).collect();
        let residual = dot(&w, &w);
        if residual >= 1e-12 * dot(&h, &h) && residual > 0.0 {
            let len = residual.sqrt();
            return w.into_iter().map(|x| x / len).collect();
        }
    }
}

/// Isotropic truths with log-normal norms; each prediction sits at exactly
/// `target_cosine` from its own truth and has norm `prediction_scale`.
pub fn generate(spec: &SynthSpec) -> Result<EffectPair> {
    spec.validate()?;
    let (n, p) = (spec.n_perturbations, spec.n_genes);
    let rho = spec.target_cosine;
    let orth = (1.0 - rho * rho).max(0.0).sqrt();

    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = row_rng(spec.seed, i as u64);
            let e = unit_gaussian(&mut rng, p);
            let z: f64 = rng.sample(StandardNormal);
            let r = (spec.truth_norm_mu + spec.truth_norm_sigma * z).exp();
            let truth: Vec<f64> = e.iter().map(|x| r * x).collect();
            let pred: Vec<f64> = if orth == 0.0 {
                e.iter().map(|x| spec.prediction_scale * x).collect()
            } else {
                let w = orthogonal_unit(&mut rng, &e);
                e.iter()
                    .zip(&w)
                    .map(|(a, b)| spec.prediction_scale * (rho * a + orth * b))
                    .collect()
            };
            (pred, truth)
        })
        .collect();

    let perts: Vec<String> = (0..n).map(|i| format!("P{i:04}")).collect();
    let genes: Vec<String> = (0..p).map(|j| format!("G{j:05}")).collect();
    let (pred, truth): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    EffectPair::new(
        EffectMatrix::from_rows(pred, perts.clone(), genes.clone())?,
        EffectMatrix::from_rows(truth, perts, genes)?,
    )
}

/// Reference PDS: sorts every anchor's distances and averages the 1-based
/// positions occupied by the true distance's tie group. Masking is rebuilt
/// here by filtering columns instead of going through row views.
pub fn oracle_pds(pair: &EffectPair, spec: &DistanceSpec, apply_target_mask: bool) -> Result<PdsReport> {
    let n = pair.n_perturbations();
    if n < 2 {
        return Err(PdsError::TooFewPerturbations(n));
    }
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let drop = if apply_target_mask { pair.target_index(i) } else { None };
        let keep = |row: &[f64]| -> Vec<f64> {
            row.iter()
                .enumerate()
                .filter(|(j, _)| Some(*j) != drop)
                .map(|(_, &v)| v)
                .collect()
        };
        let x = keep(pair.predicted().row(i));
        let id = pair.perturbation_ids()[i].clone();
        let distances: Result<Vec<f64>> = (0..n)
            .map(|k| distance(spec, &x, &keep(pair.truth().row(k))))
            .collect();
        let score = match distances {
            Ok(d) => {
                let rank = average_position_rank(&d, i);
                PerturbationScore {
                    perturbation_id: id,
                    true_distance: Some(d[i]),
                    rank,
                    pds: 1.0 - (rank - 1.0) / (n as f64 - 1.0),
                    included: true,
                    error: None,
                }
            }
            Err(e) => PerturbationScore {
                perturbation_id: id,
                true_distance: None,
                rank: n as f64,
                pds: 0.0,
                included: true,
                error: Some(e.to_string()),
            },
        };
        scores.push(score);
    }
    let mean_pds = scores.iter().map(|s| s.pds).sum::<f64>() / n as f64;
    Ok(PdsReport {
        metric: *spec,
        apply_target_mask,
        error_policy: ErrorPolicy::WorstRank,
        per_perturbation: scores,
        mean_pds,
        transform_chain: pair.transform_chain().to_vec(),
    })
}

fn average_position_rank(distances: &[f64], true_index: usize) -> f64 {
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]));
    let target = distances[true_index];
    let (sum, count) = order
        .iter()
        .enumerate()
        .filter(|(_, &k)| distances[k] == target)
        .fold((0usize, 0usize), |(s, c), (pos, _)| (s + pos + 1, c + 1));
    sum as f64 / count as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorRanking {
    pub anchor: usize,
    /// Candidate indices from closest to farthest (stable on ties).
    pub order: Vec<usize>,
    /// Mid-rank of the true candidate.
    pub true_rank: f64,
}

/// Brute-force l1 ranking of every anchor with predictions scaled by `c`.
pub fn oracle_l1_limit(pair: &EffectPair, c: f64) -> Result<Vec<AnchorRanking>> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(PdsError::NonpositiveScale(c));
    }
    let n = pair.n_perturbations();
    (0..n)
        .map(|i| {
            let x: Vec<f64> = pair.predicted().row(i).iter().map(|v| c * v).collect();
            let d = (0..n)
                .map(|k| dist_l1(&x, pair.truth().row(k)))
                .collect::<Result<Vec<_>>>()?;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
            Ok(AnchorRanking {
                anchor: i,
                order,
                true_rank: average_position_rank(&d, i),
            })
        })
        .collect()
}

/// Poisson counts with heterogeneous sequencing depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountSynthSpec {
    pub n_cells: usize,
    pub n_genes: usize,
    pub n_perturbations: usize,
    pub control_fraction: f64,
    /// Expected library size of a cell with depth factor 1.
    pub mean_library_size: f64,
    /// Log-scale spread of per-cell depth factors.
    pub library_sigma: f64,
    /// Log-scale spread of baseline gene abundances.
    pub abundance_sigma: f64,
    /// Fraction of genes each perturbation shifts.
    pub affected_fraction: f64,
    /// Standard deviation of natural-log fold changes on affected genes.
    pub log_fold_sd: f64,
    pub seed: u64,
}

impl Default for CountSynthSpec {
    fn default() -> Self {
        Self {
            n_cells: 2000,
            n_genes: 1000,
            n_perturbations: 40,
            control_fraction: 0.2,
            mean_library_size: 2000.0,
            library_sigma: 0.6,
            abundance_sigma: 1.0,
            affected_fraction: 0.1,
            log_fold_sd: 1.0,
            seed: 0,
        }
    }
}

const PROFILE_STREAM: u64 = u64::MAX;

pub fn generate_counts(spec: &CountSynthSpec) -> Result<CountMatrix> {
    let bad = |msg: &str| Err(PdsError::BadSpec(msg.to_string()));
    if spec.n_genes == 0 || spec.n_perturbations == 0 {
        return bad("need at least one gene and one perturbation");
    }
    if !(spec.control_fraction > 0.0 && spec.control_fraction < 1.0) {
        return bad("control_fraction must lie in (0, 1)");
    }
    let n_control = ((spec.n_cells as f64) * spec.control_fraction).round() as usize;
    if n_control == 0 || spec.n_cells < n_control + spec.n_perturbations {
        return bad("too few cells for one control and one cell per perturbation");
    }
    if spec.mean_library_size.is_nan() || spec.mean_library_size <= 0.0 || spec.library_sigma < 0.0 || spec.abundance_sigma < 0.0 {
        return bad("library size must be positive and spreads nonnegative");
    }
    if !(0.0..=1.0).contains(&spec.affected_fraction) || spec.log_fold_sd < 0.0 {
        return bad("affected_fraction must lie in [0, 1] and log_fold_sd be >= 0");
    }

    let p = spec.n_genes;
    let mut profile_rng = row_rng(spec.seed, PROFILE_STREAM);
    let raw: Vec<f64> = (0..p)
        .map(|_| (spec.abundance_sigma * profile_rng.sample::<f64, _>(StandardNormal)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    let abundance: Vec<f64> = raw.iter().map(|a| a / total).collect();
    let folds: Vec<Vec<f64>> = (0..spec.n_perturbations)
        .map(|_| {
            (0..p)
                .map(|_| {
                    let hit = profile_rng.random::<f64>() < spec.affected_fraction;
                    let z: f64 = profile_rng.sample(StandardNormal);
                    if hit {
                        (spec.log_fold_sd * z).exp()
                    } else {
                        1.0
                    }
                })
                .collect()
        })
        .collect();

    let condition = |cell: usize| -> Option<usize> {
        (cell >= n_control).then(|| (cell - n_control) % spec.n_perturbations)
    };
    let sigma = spec.library_sigma;
    let cells: Vec<Vec<u64>> = (0..spec.n_cells)
        .into_par_iter()
        .map(|c| {
            let mut rng = row_rng(spec.seed, c as u64);
            let z: f64 = rng.sample(StandardNormal);
            let depth = spec.mean_library_size * (sigma * z - sigma * sigma / 2.0).exp();
            loop {
                let row: Vec<u64> = (0..p)
                    .map(|g| {
                        let fold = condition(c).map_or(1.0, |k| folds[k][g]);
                        let rate = depth * abundance[g] * fold;
                        Poisson::new(rate).map_or(0, |d| d.sample(&mut rng) as u64)
                    })
                    .collect();
                if row.iter().any(|&x| x > 0) {
                    return row;
                }
            }
        })
        .collect();

    let flat: Vec<u64> = cells.into_iter().flatten().collect();
    let counts = ndarray::Array2::from_shape_vec((spec.n_cells, p), flat).expect("shape");
    let cell_ids = (0..spec.n_cells).map(|c| format!("cell{c:06}")).collect();
    let conditions = (0..spec.n_cells)
        .map(|c| condition(c).map_or(CONTROL_LABEL.to_string(), |k| format!("P{k:04}")))
        .collect();
    let genes = (0..p).map(|g| format!("G{g:05}")).collect();
    CountMatrix::new(counts, cell_ids, conditions, genes)
}
