#![allow(dead_code)]

use pds_core::{EffectMatrix, EffectPair};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn pair_from_rows(pred: Vec<Vec<f64>>, truth: Vec<Vec<f64>>) -> EffectPair {
    let n = truth.len();
    let p = truth[0].len();
    EffectPair::new(
        EffectMatrix::from_rows(pred, labels("P", n), labels("g", p)).unwrap(),
        EffectMatrix::from_rows(truth, labels("P", n), labels("g", p)).unwrap(),
    )
    .unwrap()
}

pub fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..p).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

/// Independent Gaussian predictions and truths.
pub fn gaussian_pair(n: usize, p: usize, seed: u64) -> EffectPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pred = gaussian_rows(&mut rng, n, p);
    let truth = gaussian_rows(&mut rng, n, p);
    pair_from_rows(pred, truth)
}

/// Small-integer entries with duplicated truth rows, so distances tie often.
pub fn tied_pair(rng: &mut ChaCha8Rng, n: usize, p: usize) -> EffectPair {
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..p).map(|_| rng.random_range(-2i32..=2) as f64).collect()
    };
    let mut truth: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 && rng.random_bool(0.3) {
            let k = rng.random_range(0..i);
            truth.push(truth[k].clone());
        } else {
            truth.push(draw(rng));
        }
    }
    let pred = (0..n).map(|_| draw(rng)).collect();
    pair_from_rows(pred, truth)
}
