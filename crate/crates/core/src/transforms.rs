//! Rescaling and sign transforms applied to predictions before scoring.
//!
//! Truth matrices are never modified. Each step applied through
//! [`apply_chain`] is appended to the pair's transform chain so reports can
//! record how predictions were prepared.
//!
//! Chain grammar (comma separated): `scale:<c>`, `norm-match:l1`,
//! `norm-match:l2`, `sign:<threshold>`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::effects::{EffectMatrix, EffectPair};
use crate::error::{PdsError, Result};
use crate::metrics::{norm_l1, norm_l2, sign_of};

pub const CHAIN_GRAMMAR: &str =
    "comma-separated steps: scale:<c> | norm-match:l1 | norm-match:l2 | sign:<threshold>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    L1,
    L2,
}

impl NormKind {
    pub fn norm(self, v: &[f64]) -> f64 {
        match self {
            NormKind::L1 => norm_l1(v),
            NormKind::L2 => norm_l2(v),
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormKind::L1 => "l1",
            NormKind::L2 => "l2",
        })
    }
}

impl FromStr for NormKind {
    type Err = PdsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "l1" | "1" => Ok(NormKind::L1),
            "l2" | "2" => Ok(NormKind::L2),
            other => Err(PdsError::BadParameter(format!(
                "unknown norm `{other}`; expected l1 or l2"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TransformDescriptor {
    GlobalScale { factor: f64 },
    NormMatch { norm: NormKind },
    SignProject { threshold: f64 },
}

impl fmt::Display for TransformDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformDescriptor::GlobalScale { factor } => write!(f, "scale:{factor}"),
            TransformDescriptor::NormMatch { norm } => write!(f, "norm-match:{norm}"),
            TransformDescriptor::SignProject { threshold } => write!(f, "sign:{threshold}"),
        }
    }
}

impl FromStr for TransformDescriptor {
    type Err = PdsError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || PdsError::BadParameter(format!("bad transform `{s}`; {CHAIN_GRAMMAR}"));
        let (name, arg) = s.trim().split_once(':').ok_or_else(bad)?;
        let step = match name {
            "scale" => {
                let factor: f64 = arg.parse().map_err(|_| bad())?;
                if !(factor > 0.0 && factor.is_finite()) {
                    return Err(PdsError::NonpositiveScale(factor));
                }
                TransformDescriptor::GlobalScale { factor }
            }
            "norm-match" => TransformDescriptor::NormMatch {
                norm: arg.parse().map_err(|_| bad())?,
            },
            "sign" => {
                let threshold: f64 = arg.parse().map_err(|_| bad())?;
                if !(threshold >= 0.0 && threshold.is_finite()) {
                    return Err(bad());
                }
                TransformDescriptor::SignProject { threshold }
            }
            _ => return Err(bad()),
        };
        Ok(step)
    }
}

/// Parses a chain such as `scale:3.0,norm-match:l2`. An empty string is the
/// empty chain.
pub fn parse_chain(s: &str) -> Result<Vec<TransformDescriptor>> {
    s.split(',')
        .map(str::trim)
        .filter(|part| !part.is_empty())
        .map(str::parse)
        .collect()
}

pub fn format_chain(chain: &[TransformDescriptor]) -> String {
    chain
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

pub fn global_scale(predicted: &EffectMatrix, c: f64) -> Result<EffectMatrix> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(PdsError::NonpositiveScale(c));
    }
    predicted.with_values(predicted.values() * c)
}

/// Per-row factors `c_i = ||truth_i|| / ||pred_i||`.
pub fn norm_match_factors(pair: &EffectPair, norm: NormKind) -> Result<Vec<f64>> {
    (0..pair.n_perturbations())
        .map(|i| {
            let pred = norm.norm(pair.predicted().row(i));
            if pred == 0.0 {
                return Err(PdsError::ZeroPredictionNorm(pair.perturbation_ids()[i].clone()));
            }
            Ok(norm.norm(pair.truth().row(i)) / pred)
        })
        .collect()
}

/// Rescales each prediction so its norm equals that of its own truth.
pub fn norm_match(pair: &EffectPair, norm: NormKind) -> Result<EffectPair> {
    let factors = norm_match_factors(pair, norm)?;
    let mut values = pair.predicted().values().clone();
    Zip::from(values.axis_iter_mut(Axis(0)))
        .and(&ndarray::ArrayView1::from(&factors))
        .for_each(|mut row, &c| row.mapv_inplace(|x| x * c));
    let predicted = pair.predicted().with_values(values)?;
    Ok(pair.with_predicted(predicted, TransformDescriptor::NormMatch { norm }))
}

pub fn sign_project(predicted: &EffectMatrix, threshold: f64) -> Result<EffectMatrix> {
    let values: Array2<f64> = predicted
        .values()
        .mapv(|x| sign_of(x, threshold) as f64);
    predicted.with_values(values)
}

/// Applies `chain` left to right to the predictions.
pub fn apply_chain(pair: &EffectPair, chain: &[TransformDescriptor]) -> Result<EffectPair> {
    let mut current = pair.clone();
    for step in chain {
        current = match *step {
            TransformDescriptor::GlobalScale { factor } => {
                let predicted = global_scale(current.predicted(), factor)?;
                current.with_predicted(predicted, *step)
            }
            TransformDescriptor::NormMatch { norm } => norm_match(&current, norm)?,
            TransformDescriptor::SignProject { threshold } => {
                let predicted = sign_project(current.predicted(), threshold)?;
                current.with_predicted(predicted, *step)
            }
        };
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single(pred: Vec<f64>, truth: Vec<f64>) -> EffectPair {
        let genes: Vec<String> = (0..pred.len()).map(|j| format!("g{j}")).collect();
        let perts = vec!["A".to_string(), "B".to_string()];
        let other: Vec<f64> = vec![1.0; pred.len()];
        EffectPair::new(
            EffectMatrix::from_rows(vec![pred, other.clone()], perts.clone(), genes.clone()).unwrap(),
            EffectMatrix::from_rows(vec![truth, other], perts, genes).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn scale_examples() {
        let pair = single(vec![3.0, 4.0], vec![1.0, 1.0]);
        let same = global_scale(pair.predicted(), 1.0).unwrap();
        assert_eq!(&same, pair.predicted());
        let doubled = global_scale(pair.predicted(), 2.0).unwrap();
        assert_eq!(doubled.row(0), &[6.0, 8.0]);
        assert!(matches!(
            global_scale(pair.predicted(), 0.0),
            Err(PdsError::NonpositiveScale(_))
        ));
        assert!(global_scale(pair.predicted(), -1.0).is_err());
    }

    #[test]
    fn norm_match_l2_example() {
        let pair = single(vec![3.0, 4.0], vec![1.0, 1.0]);
        let factors = norm_match_factors(&pair, NormKind::L2).unwrap();
        assert_relative_eq!(factors[0], 2f64.sqrt() / 5.0, max_relative = 1e-15);
        let matched = norm_match(&pair, NormKind::L2).unwrap();
        let row = matched.predicted().row(0);
        assert_relative_eq!(row[0], 0.848528137423857, max_relative = 1e-12);
        assert_relative_eq!(row[1], 1.131370849898476, max_relative = 1e-12);
        assert_relative_eq!(norm_l2(row), 2f64.sqrt(), max_relative = 1e-12);
        assert_eq!(matched.truth(), pair.truth());
    }

    #[test]
    fn norm_match_l1_example() {
        let pair = single(vec![3.0, 4.0], vec![1.0, 1.0]);
        let factors = norm_match_factors(&pair, NormKind::L1).unwrap();
        assert_relative_eq!(factors[0], 2.0 / 7.0, max_relative = 1e-15);
        let matched = norm_match(&pair, NormKind::L1).unwrap();
        let row = matched.predicted().row(0);
        assert_relative_eq!(row[0], 6.0 / 7.0, max_relative = 1e-15);
        assert_relative_eq!(row[1], 8.0 / 7.0, max_relative = 1e-15);
        assert_relative_eq!(norm_l1(row), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn norm_match_fixed_point() {
        let pair = single(vec![1.0, -1.0], vec![-1.0, 1.0]);
        assert_eq!(norm_match_factors(&pair, NormKind::L2).unwrap(), vec![1.0, 1.0]);
        let matched = norm_match(&pair, NormKind::L1).unwrap();
        assert_eq!(matched.predicted().values(), pair.predicted().values());
    }

    #[test]
    fn zero_prediction_cannot_be_matched() {
        let pair = single(vec![0.0, 0.0], vec![1.0, 1.0]);
        assert!(matches!(
            norm_match(&pair, NormKind::L2),
            Err(PdsError::ZeroPredictionNorm(ref id)) if id == "A"
        ));
    }

    #[test]
    fn sign_projection() {
        let pair = single(vec![-2.5, 0.0, 3.0], vec![1.0, 1.0, 1.0]);
        let signs = sign_project(pair.predicted(), 0.0).unwrap();
        assert_eq!(signs.row(0), &[-1.0, 0.0, 1.0]);
        assert_eq!(signs.row(1), &[1.0, 1.0, 1.0]);
        let pair = single(vec![0.05, -0.2], vec![1.0, 1.0]);
        assert_eq!(sign_project(pair.predicted(), 0.1).unwrap().row(0), &[0.0, -1.0]);
    }

    #[test]
    fn chains() {
        let pair = single(vec![3.0, 4.0], vec![1.0, 2.0]);
        let same = apply_chain(&pair, &[]).unwrap();
        assert_eq!(same, pair);

        let chain = parse_chain("scale:2,norm-match:l2").unwrap();
        let scaled = apply_chain(&pair, &chain).unwrap();
        let direct = apply_chain(&pair, &parse_chain("norm-match:l2").unwrap()).unwrap();
        for i in 0..2 {
            for (a, b) in scaled.predicted().row(i).iter().zip(direct.predicted().row(i)) {
                assert_relative_eq!(*a, *b, max_relative = 1e-12);
            }
        }
        assert_eq!(scaled.transform_chain(), chain.as_slice());

        let l1 = apply_chain(&pair, &parse_chain("norm-match:l1").unwrap()).unwrap();
        for i in 0..2 {
            assert_relative_eq!(
                norm_l1(l1.predicted().row(i)),
                norm_l1(l1.truth().row(i)),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn chain_grammar() {
        let chain = parse_chain("scale:3.0, norm-match:l1,sign:0.1").unwrap();
        assert_eq!(
            chain,
            vec![
                TransformDescriptor::GlobalScale { factor: 3.0 },
                TransformDescriptor::NormMatch { norm: NormKind::L1 },
                TransformDescriptor::SignProject { threshold: 0.1 },
            ]
        );
        assert_eq!(parse_chain(&format_chain(&chain)).unwrap(), chain);
        assert!(parse_chain("").unwrap().is_empty());
        assert!(parse_chain("scale:-1").is_err());
        assert!(parse_chain("norm-match:l3").is_err());
        assert!(parse_chain("rotate:1").is_err());
        assert!(parse_chain("scale").is_err());
    }
}
