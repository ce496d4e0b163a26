//! Count normalization and mean perturbation effects.
//!
//! Two pipelines are supported: per-10k scaling followed by `ln(1 + x)`, and
//! median library-size scaling (each cell divided by `libsize / median`),
//! optionally followed by `ln(1 + x)`.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::effects::EffectMatrix;
use crate::error::{PdsError, Result};
use crate::metrics::{cosine, norm_l1, norm_l2, sign_cosine};

pub const CONTROL_LABEL: &str = "control";

#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    counts: Array2<u64>,
    cell_ids: Vec<String>,
    cell_condition: Vec<String>,
    gene_ids: Vec<String>,
}

impl CountMatrix {
    pub fn new(
        counts: Array2<u64>,
        cell_ids: Vec<String>,
        cell_condition: Vec<String>,
        gene_ids: Vec<String>,
    ) -> Result<Self> {
        let (cells, genes) = counts.dim();
        if cells != cell_ids.len() || cells != cell_condition.len() || genes != gene_ids.len() {
            return Err(PdsError::ShapeMismatch {
                expected_rows: cell_ids.len(),
                expected_cols: gene_ids.len(),
                rows: cells,
                cols: genes,
            });
        }
        if cells == 0 || genes == 0 {
            return Err(PdsError::EmptyMatrix);
        }
        for (i, row) in counts.axis_iter(Axis(0)).enumerate() {
            if row.sum() == 0 {
                return Err(PdsError::ZeroLibrarySize(cell_ids[i].clone()));
            }
        }
        if !cell_condition.iter().any(|c| c == CONTROL_LABEL) {
            return Err(PdsError::MissingControl);
        }
        Ok(Self {
            counts,
            cell_ids,
            cell_condition,
            gene_ids,
        })
    }

    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    pub fn cell_ids(&self) -> &[String] {
        &self.cell_ids
    }

    pub fn cell_condition(&self) -> &[String] {
        &self.cell_condition
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn n_cells(&self) -> usize {
        self.counts.nrows()
    }

    pub fn library_sizes(&self) -> Vec<u64> {
        self.counts.sum_axis(Axis(1)).to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineKind {
    MedianLibrarySize,
    Per10kLog1p,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub kind: PipelineKind,
    pub apply_log1p: bool,
}

impl PipelineSpec {
    pub fn per_10k_log1p() -> Self {
        Self {
            kind: PipelineKind::Per10kLog1p,
            apply_log1p: true,
        }
    }

    pub fn median(apply_log1p: bool) -> Self {
        Self {
            kind: PipelineKind::MedianLibrarySize,
            apply_log1p,
        }
    }
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite library sizes"));
    let mid = sorted.len() / 2;
    if sorted.len().is_multiple_of(2) {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    }
}

/// `libsize / median(libsize)` per cell.
pub fn size_factors(counts: &CountMatrix) -> Vec<f64> {
    let libs: Vec<f64> = counts.library_sizes().iter().map(|&l| l as f64).collect();
    let med = median(&libs);
    libs.iter().map(|l| l / med).collect()
}

/// Library-size scaling without the log step.
pub fn library_scaled(counts: &CountMatrix, kind: PipelineKind) -> Array2<f64> {
    let divisors: Vec<f64> = match kind {
        PipelineKind::Per10kLog1p => counts
            .library_sizes()
            .iter()
            .map(|&l| l as f64 / 10_000.0)
            .collect(),
        PipelineKind::MedianLibrarySize => size_factors(counts),
    };
    let mut out = counts.counts().mapv(|c| c as f64);
    for (mut row, d) in out.axis_iter_mut(Axis(0)).zip(divisors) {
        row.mapv_inplace(|x| x / d);
    }
    out
}

pub fn normalize(counts: &CountMatrix, spec: &PipelineSpec) -> Array2<f64> {
    let scaled = library_scaled(counts, spec.kind);
    let log = match spec.kind {
        PipelineKind::Per10kLog1p => true,
        PipelineKind::MedianLibrarySize => spec.apply_log1p,
    };
    if log {
        scaled.mapv(f64::ln_1p)
    } else {
        scaled
    }
}

/// Per-perturbation mean minus control mean. Perturbations come out in
/// lexicographic order.
pub fn mean_effects(
    normalized: &Array2<f64>,
    cell_condition: &[String],
    gene_ids: &[String],
) -> Result<EffectMatrix> {
    if normalized.nrows() != cell_condition.len() {
        return Err(PdsError::DimensionMismatch {
            left: normalized.nrows(),
            right: cell_condition.len(),
        });
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, c) in cell_condition.iter().enumerate() {
        groups.entry(c.as_str()).or_default().push(i);
    }
    let control_cells = groups.remove(CONTROL_LABEL).ok_or(PdsError::MissingControl)?;
    let group_mean = |cells: &[usize]| -> Array1<f64> {
        normalized
            .select(Axis(0), cells)
            .mean_axis(Axis(0))
            .expect("nonempty group")
    };
    let control = group_mean(&control_cells);
    let mut rows = Vec::with_capacity(groups.len());
    let mut ids = Vec::with_capacity(groups.len());
    for (pert, cells) in groups {
        rows.push((group_mean(&cells) - &control).to_vec());
        ids.push(pert.to_string());
    }
    EffectMatrix::from_rows(rows, ids, gene_ids.to_vec())
}

pub fn effects_for(counts: &CountMatrix, spec: &PipelineSpec) -> Result<EffectMatrix> {
    mean_effects(&normalize(counts, spec), counts.cell_condition(), counts.gene_ids())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineComparisonRow {
    pub perturbation_id: String,
    pub l1_norm_a: f64,
    pub l1_norm_b: f64,
    pub l2_norm_a: f64,
    pub l2_norm_b: f64,
    /// `None` when either effect is the zero vector.
    pub cosine_between: Option<f64>,
    pub sign_cosine_between: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineComparison {
    pub pipeline_a: PipelineSpec,
    pub pipeline_b: PipelineSpec,
    pub sign_threshold: f64,
    pub rows: Vec<PipelineComparisonRow>,
}

pub fn compare_effects(
    a: &EffectMatrix,
    b: &EffectMatrix,
    sign_threshold: f64,
) -> Vec<PipelineComparisonRow> {
    (0..a.n_perturbations())
        .map(|i| {
            let (x, y) = (a.row(i), b.row(i));
            PipelineComparisonRow {
                perturbation_id: a.perturbation_ids()[i].clone(),
                l1_norm_a: norm_l1(x),
                l1_norm_b: norm_l1(y),
                l2_norm_a: norm_l2(x),
                l2_norm_b: norm_l2(y),
                cosine_between: cosine(x, y).ok(),
                sign_cosine_between: sign_cosine(x, y, sign_threshold).ok(),
            }
        })
        .collect()
}

pub fn compare_pipelines(
    counts: &CountMatrix,
    spec_a: &PipelineSpec,
    spec_b: &PipelineSpec,
    sign_threshold: f64,
) -> Result<PipelineComparison> {
    let a = effects_for(counts, spec_a)?;
    let b = effects_for(counts, spec_b)?;
    Ok(PipelineComparison {
        pipeline_a: *spec_a,
        pipeline_b: *spec_b,
        sign_threshold,
        rows: compare_effects(&a, &b, sign_threshold),
    })
}
