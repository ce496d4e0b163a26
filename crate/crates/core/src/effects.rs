//! Perturbation-effect matrices and aligned prediction/truth pairs.
//!
//! An [`EffectMatrix`] holds one effect vector per perturbation (rows) over a
//! fixed gene panel (columns). An [`EffectPair`] couples a predicted and an
//! observed matrix that share labels in the same order, and optionally records
//! the target gene of each perturbation so it can be masked during scoring.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{PdsError, Result};
use crate::transforms::TransformDescriptor;

/// Dense perturbations × genes matrix with unique row and column labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectMatrix {
    values: Array2<f64>,
    perturbation_ids: Vec<String>,
    gene_ids: Vec<String>,
}

fn check_unique(labels: &[String], kind: &'static str) -> Result<()> {
    let mut seen = HashSet::with_capacity(labels.len());
    for label in labels {
        if !seen.insert(label.as_str()) {
            return Err(PdsError::DuplicateLabel {
                kind,
                label: label.clone(),
            });
        }
    }
    Ok(())
}

impl EffectMatrix {
    pub fn new(
        values: Array2<f64>,
        perturbation_ids: Vec<String>,
        gene_ids: Vec<String>,
    ) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows != perturbation_ids.len() || cols != gene_ids.len() {
            return Err(PdsError::ShapeMismatch {
                expected_rows: perturbation_ids.len(),
                expected_cols: gene_ids.len(),
                rows,
                cols,
            });
        }
        if rows == 0 || cols == 0 {
            return Err(PdsError::EmptyMatrix);
        }
        check_unique(&perturbation_ids, "perturbation")?;
        check_unique(&gene_ids, "gene")?;
        if let Some(((row, col), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(PdsError::NonFinite { row, col });
        }
        // Row slices are handed out as contiguous `&[f64]`.
        let values = values.as_standard_layout().into_owned();
        Ok(Self {
            values,
            perturbation_ids,
            gene_ids,
        })
    }

    /// Builds a matrix from row vectors.
    pub fn from_rows(
        rows: Vec<Vec<f64>>,
        perturbation_ids: Vec<String>,
        gene_ids: Vec<String>,
    ) -> Result<Self> {
        let n = rows.len();
        let p = gene_ids.len();
        let mut flat = Vec::with_capacity(n * p);
        for row in &rows {
            if row.len() != p {
                return Err(PdsError::ShapeMismatch {
                    expected_rows: n,
                    expected_cols: p,
                    rows: n,
                    cols: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        let values = Array2::from_shape_vec((n, p), flat).expect("shape checked above");
        Self::new(values, perturbation_ids, gene_ids)
    }

    pub fn n_perturbations(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_genes(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn perturbation_ids(&self) -> &[String] {
        &self.perturbation_ids
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_genes();
        &self.values.as_slice().expect("standard layout")[i * p..(i + 1) * p]
    }

    pub fn row_view(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.index_axis(Axis(0), i)
    }

    pub fn perturbation_index(&self, id: &str) -> Option<usize> {
        self.perturbation_ids.iter().position(|p| p == id)
    }

    pub fn gene_index(&self, id: &str) -> Option<usize> {
        self.gene_ids.iter().position(|g| g == id)
    }

    /// Same labels, new values. Used by transforms that never change shape.
    pub(crate) fn with_values(&self, values: Array2<f64>) -> Result<Self> {
        Self::new(values, self.perturbation_ids.clone(), self.gene_ids.clone())
    }

    /// Restricts to the given row and column indices, in that order.
    fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let values = self
            .values
            .select(Axis(0), rows)
            .select(Axis(1), cols)
            .as_standard_layout()
            .into_owned();
        Self {
            values,
            perturbation_ids: rows.iter().map(|&r| self.perturbation_ids[r].clone()).collect(),
            gene_ids: cols.iter().map(|&c| self.gene_ids[c].clone()).collect(),
        }
    }
}

/// Predicted and observed effects over identical, identically ordered labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectPair {
    predicted: EffectMatrix,
    truth: EffectMatrix,
    target_gene_of: BTreeMap<String, String>,
    target_index: Vec<Option<usize>>,
    transform_chain: Vec<TransformDescriptor>,
}

impl EffectPair {
    /// Pairs two matrices that already share labels in the same order.
    pub fn new(predicted: EffectMatrix, truth: EffectMatrix) -> Result<Self> {
        if predicted.perturbation_ids != truth.perturbation_ids {
            return Err(PdsError::LabelMismatch {
                kind: "perturbation",
            });
        }
        if predicted.gene_ids != truth.gene_ids {
            return Err(PdsError::LabelMismatch { kind: "gene" });
        }
        let n = predicted.n_perturbations();
        Ok(Self {
            predicted,
            truth,
            target_gene_of: BTreeMap::new(),
            target_index: vec![None; n],
            transform_chain: Vec::new(),
        })
    }

    /// Declares target genes. Every key must be a perturbation of the pair and
    /// every value a gene of the pair.
    pub fn with_targets(mut self, targets: BTreeMap<String, String>) -> Result<Self> {
        let mut index = vec![None; self.n_perturbations()];
        for (pert, gene) in &targets {
            let row = self
                .truth
                .perturbation_index(pert)
                .ok_or_else(|| PdsError::UnknownPerturbation(pert.clone()))?;
            let col = self
                .truth
                .gene_index(gene)
                .ok_or_else(|| PdsError::UnknownGene(gene.clone()))?;
            index[row] = Some(col);
        }
        self.target_gene_of = targets;
        self.target_index = index;
        Ok(self)
    }

    /// Uses the gene carrying the same label as the perturbation, where present.
    pub fn with_targets_from_labels(self) -> Result<Self> {
        let genes: HashSet<&str> = self.gene_ids().iter().map(String::as_str).collect();
        let targets = self
            .perturbation_ids()
            .iter()
            .filter(|p| genes.contains(p.as_str()))
            .map(|p| (p.clone(), p.clone()))
            .collect();
        self.with_targets(targets)
    }

    pub fn predicted(&self) -> &EffectMatrix {
        &self.predicted
    }

    pub fn truth(&self) -> &EffectMatrix {
        &self.truth
    }

    pub fn target_gene_of(&self) -> &BTreeMap<String, String> {
        &self.target_gene_of
    }

    pub fn target_index(&self, row: usize) -> Option<usize> {
        self.target_index[row]
    }

    pub fn transform_chain(&self) -> &[TransformDescriptor] {
        &self.transform_chain
    }

    pub fn n_perturbations(&self) -> usize {
        self.truth.n_perturbations()
    }

    pub fn n_genes(&self) -> usize {
        self.truth.n_genes()
    }

    pub fn perturbation_ids(&self) -> &[String] {
        self.truth.perturbation_ids()
    }

    pub fn gene_ids(&self) -> &[String] {
        self.truth.gene_ids()
    }

    /// Replaces the predicted matrix and records the transform that produced it.
    pub(crate) fn with_predicted(&self, predicted: EffectMatrix, step: TransformDescriptor) -> Self {
        debug_assert_eq!(predicted.perturbation_ids, self.truth.perturbation_ids);
        let mut chain = self.transform_chain.clone();
        chain.push(step);
        Self {
            predicted,
            truth: self.truth.clone(),
            target_gene_of: self.target_gene_of.clone(),
            target_index: self.target_index.clone(),
            transform_chain: chain,
        }
    }

    /// Masked views of the anchor row and of every candidate truth row.
    pub fn row_view(&self, perturbation_id: &str, apply_target_mask: bool) -> Result<RowView> {
        let anchor = self
            .truth
            .perturbation_index(perturbation_id)
            .ok_or_else(|| PdsError::UnknownPerturbation(perturbation_id.to_string()))?;
        self.anchor_view(anchor, apply_target_mask)
    }

    pub fn anchor_view(&self, anchor: usize, apply_target_mask: bool) -> Result<RowView> {
        if anchor >= self.n_perturbations() {
            return Err(PdsError::BadIndex {
                index: anchor,
                len: self.n_perturbations(),
            });
        }
        let excluded: Vec<usize> = match self.target_index[anchor] {
            Some(col) if apply_target_mask => vec![col],
            _ => Vec::new(),
        };
        if self.n_genes() - excluded.len() == 0 {
            return Err(PdsError::EmptyView(
                self.perturbation_ids()[anchor].clone(),
            ));
        }
        let truths = (0..self.n_perturbations())
            .map(|row| MaskedVectorView {
                row,
                excluded: excluded.clone(),
            })
            .collect();
        Ok(RowView {
            anchor,
            predicted: MaskedVectorView { row: anchor, excluded },
            truths,
        })
    }
}

/// A matrix row with some columns dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedVectorView {
    pub row: usize,
    /// Sorted, unique column indices.
    pub excluded: Vec<usize>,
}

impl MaskedVectorView {
    pub fn effective_dim(&self, n_genes: usize) -> usize {
        n_genes - self.excluded.len()
    }

    /// The retained coordinates, borrowing when nothing is excluded.
    pub fn gather<'a>(&self, matrix: &'a EffectMatrix) -> Cow<'a, [f64]> {
        let row = matrix.row(self.row);
        if self.excluded.is_empty() {
            return Cow::Borrowed(row);
        }
        let mut out = Vec::with_capacity(row.len() - self.excluded.len());
        let mut skip = self.excluded.iter().peekable();
        for (j, &v) in row.iter().enumerate() {
            if skip.peek() == Some(&&j) {
                skip.next();
                continue;
            }
            out.push(v);
        }
        Cow::Owned(out)
    }
}

/// Views used to score one anchor perturbation: its prediction and all truths,
/// sharing one mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowView {
    pub anchor: usize,
    pub predicted: MaskedVectorView,
    pub truths: Vec<MaskedVectorView>,
}

/// Restricts both matrices to their shared labels in lexicographic order.
pub fn align_pair(predicted: &EffectMatrix, truth: &EffectMatrix) -> Result<EffectPair> {
    // Constructors already reject duplicates; this guards hand-built inputs.
    check_unique(&predicted.perturbation_ids, "perturbation")?;
    check_unique(&truth.perturbation_ids, "perturbation")?;
    check_unique(&predicted.gene_ids, "gene")?;
    check_unique(&truth.gene_ids, "gene")?;

    let shared = |a: &[String], b: &[String]| -> Vec<String> {
        let a: BTreeSet<&String> = a.iter().collect();
        let b: BTreeSet<&String> = b.iter().collect();
        a.intersection(&b).map(|s| (*s).clone()).collect()
    };
    let perts = shared(&predicted.perturbation_ids, &truth.perturbation_ids);
    let genes = shared(&predicted.gene_ids, &truth.gene_ids);
    if perts.len() < 2 || genes.is_empty() {
        return Err(PdsError::EmptyIntersection {
            perturbations: perts.len(),
            genes: genes.len(),
        });
    }

    let positions = |labels: &[String], wanted: &[String]| -> Vec<usize> {
        let lookup: HashMap<&str, usize> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        wanted.iter().map(|w| lookup[w.as_str()]).collect()
    };
    let pred = predicted.select(
        &positions(&predicted.perturbation_ids, &perts),
        &positions(&predicted.gene_ids, &genes),
    );
    let tru = truth.select(
        &positions(&truth.perturbation_ids, &perts),
        &positions(&truth.gene_ids, &genes),
    );
    EffectPair::new(pred, tru)
}
