//! CSV matrix formats and report emission.
//!
//! Effect matrices: header `perturbation,<gene>...`, one row per perturbation.
//! Counts: header `cell,condition,<gene>...`, condition `control` or a
//! perturbation id. Targets: header `perturbation,gene`.
//!
//! Reports are written as JSON (full detail wrapped in a [`ReportEnvelope`])
//! and/or flat CSV. CSV floats carry 17 significant digits; JSON floats use the
//! shortest representation that parses back to the same bits.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::asymptotics::ScaleSweepResult;
use crate::discrimination::PdsReport;
use crate::effects::EffectMatrix;
use crate::error::{PdsError, Result};
use crate::geometry::{CertificateResult, MonteCarloRegionResult};
use crate::preprocessing::{CountMatrix, PipelineComparison};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> PdsError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => PdsError::Io(io),
        kind => PdsError::Parse {
            line,
            column: 0,
            reason: format!("{kind:?}"),
        },
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path)?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn header_labels(rdr: &mut csv::Reader<File>, leading: usize) -> Result<Vec<String>> {
    let header = rdr.headers().map_err(csv_err)?;
    if header.len() <= leading {
        return Err(PdsError::Parse {
            line: 1,
            column: header.len(),
            reason: format!("header needs {leading} label column(s) and at least one gene"),
        });
    }
    Ok(header.iter().skip(leading).map(str::to_string).collect())
}

fn parse_field<T: FromStr>(field: &str, line: u64, column: usize, what: &str) -> Result<T> {
    field.parse().map_err(|_| PdsError::Parse {
        line,
        column,
        reason: format!("expected {what}, found `{field}`"),
    })
}

fn validation(e: PdsError) -> PdsError {
    match e {
        PdsError::Io(_) | PdsError::Parse { .. } => e,
        other => PdsError::Validation(other.to_string()),
    }
}

pub fn read_effect_matrix(path: impl AsRef<Path>) -> Result<EffectMatrix> {
    let mut rdr = reader(path.as_ref())?;
    let genes = header_labels(&mut rdr, 1)?;
    let mut ids = Vec::new();
    let mut flat = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != genes.len() + 1 {
            return Err(PdsError::Parse {
                line,
                column: record.len(),
                reason: format!("expected {} fields, found {}", genes.len() + 1, record.len()),
            });
        }
        ids.push(record[0].to_string());
        for (k, field) in record.iter().enumerate().skip(1) {
            let v: f64 = parse_field(field, line, k + 1, "a number")?;
            if !v.is_finite() {
                return Err(PdsError::Parse {
                    line,
                    column: k + 1,
                    reason: format!("non-finite value `{field}`"),
                });
            }
            flat.push(v);
        }
    }
    let values = Array2::from_shape_vec((ids.len(), genes.len()), flat).expect("row widths checked");
    EffectMatrix::new(values, ids, genes).map_err(validation)
}

pub fn write_effect_matrix(path: impl AsRef<Path>, matrix: &EffectMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "perturbation")?;
    for g in matrix.gene_ids() {
        write!(w, ",{g}")?;
    }
    writeln!(w)?;
    for (i, id) in matrix.perturbation_ids().iter().enumerate() {
        write!(w, "{id}")?;
        for &v in matrix.row(i) {
            write!(w, ",{}", fmt_f64(v))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_counts(path: impl AsRef<Path>) -> Result<CountMatrix> {
    let mut rdr = reader(path.as_ref())?;
    let genes = header_labels(&mut rdr, 2)?;
    let (mut cells, mut conditions, mut flat) = (Vec::new(), Vec::new(), Vec::new());
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != genes.len() + 2 {
            return Err(PdsError::Parse {
                line,
                column: record.len(),
                reason: format!("expected {} fields, found {}", genes.len() + 2, record.len()),
            });
        }
        cells.push(record[0].to_string());
        conditions.push(record[1].to_string());
        for (k, field) in record.iter().enumerate().skip(2) {
            flat.push(parse_field::<u64>(field, line, k + 1, "a nonnegative integer count")?);
        }
    }
    let counts = Array2::from_shape_vec((cells.len(), genes.len()), flat).expect("row widths checked");
    CountMatrix::new(counts, cells, conditions, genes).map_err(validation)
}

pub fn write_counts(path: impl AsRef<Path>, counts: &CountMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "cell,condition")?;
    for g in counts.gene_ids() {
        write!(w, ",{g}")?;
    }
    writeln!(w)?;
    for (i, row) in counts.counts().outer_iter().enumerate() {
        write!(w, "{},{}", counts.cell_ids()[i], counts.cell_condition()[i])?;
        for v in row {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_targets(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let mut rdr = reader(path.as_ref())?;
    let mut out = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(PdsError::Parse {
                line,
                column: record.len(),
                reason: "expected `perturbation,gene`".into(),
            });
        }
        if out.insert(record[0].to_string(), record[1].to_string()).is_some() {
            return Err(PdsError::Validation(format!(
                "perturbation `{}` has more than one target",
                &record[0]
            )));
        }
    }
    Ok(out)
}

pub fn file_digest(path: impl AsRef<Path>) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = PdsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(PdsError::BadParameter(format!(
                "unknown format `{other}`; expected json or csv"
            ))),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        })
    }
}

/// Everything needed to reproduce a run: command, inputs, and every option
/// with its effective (possibly default) value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub inputs: BTreeMap<String, PathBuf>,
    pub metrics: Vec<String>,
    pub transform_chain: String,
    pub apply_target_mask: bool,
    pub sweep_grid: Option<Vec<f64>>,
    pub output_dir: PathBuf,
    pub seed: Option<u64>,
    pub formats: Vec<ReportFormat>,
    /// Subcommand-specific options.
    pub options: BTreeMap<String, serde_json::Value>,
}

impl RunConfig {
    pub fn input_digests(&self) -> Result<BTreeMap<String, String>> {
        self.inputs
            .iter()
            .map(|(name, path)| Ok((name.clone(), file_digest(path)?)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEnvelope<T> {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub input_digests: BTreeMap<String, String>,
    pub result: T,
}

impl<T> ReportEnvelope<T> {
    pub fn new(config: RunConfig, input_digests: BTreeMap<String, String>, result: T) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            input_digests,
            result,
        }
    }
}

/// Flat tabular form of a report.
pub trait CsvReport {
    fn csv_header(&self) -> Vec<&'static str>;
    fn csv_rows(&self) -> Vec<Vec<String>>;
}

impl CsvReport for PdsReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["perturbation_id", "metric", "true_distance", "rank", "pds", "included", "error"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.per_perturbation
            .iter()
            .map(|s| {
                vec![
                    s.perturbation_id.clone(),
                    self.metric.to_string(),
                    fmt_opt(s.true_distance),
                    fmt_f64(s.rank),
                    fmt_f64(s.pds),
                    s.included.to_string(),
                    s.error.clone().unwrap_or_default(),
                ]
            })
            .collect()
    }
}

impl CsvReport for ScaleSweepResult {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["c", "metric", "mean_pds"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        let mut rows = Vec::new();
        for (k, &c) in self.scales.iter().enumerate() {
            for curve in &self.curves {
                rows.push(vec![fmt_f64(c), curve.metric.to_string(), fmt_f64(curve.mean_pds[k])]);
            }
        }
        rows
    }
}

impl CsvReport for PipelineComparison {
    fn csv_header(&self) -> Vec<&'static str> {
        vec![
            "perturbation_id",
            "l1_norm_a",
            "l1_norm_b",
            "l2_norm_a",
            "l2_norm_b",
            "cosine_between",
            "sign_cosine_between",
        ]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.perturbation_id.clone(),
                    fmt_f64(r.l1_norm_a),
                    fmt_f64(r.l1_norm_b),
                    fmt_f64(r.l2_norm_a),
                    fmt_f64(r.l2_norm_b),
                    fmt_opt(r.cosine_between),
                    fmt_opt(r.sign_cosine_between),
                ]
            })
            .collect()
    }
}

impl CsvReport for Vec<MonteCarloRegionResult> {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["d", "rho", "kappa", "fraction", "stderr"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.iter()
            .map(|r| {
                vec![
                    r.dimension.to_string(),
                    fmt_f64(r.norm_ratio),
                    fmt_f64(r.true_cosine),
                    fmt_f64(r.fraction_closer),
                    fmt_f64(r.standard_error),
                ]
            })
            .collect()
    }
}

impl CsvReport for CertificateResult {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["safe", "cosine", "threshold", "margin"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        vec![vec![
            self.safe.to_string(),
            fmt_f64(self.cosine),
            fmt_f64(self.threshold),
            fmt_f64(self.margin),
        ]]
    }
}

pub fn write_csv_report(path: impl AsRef<Path>, report: &impl CsvReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(report.csv_header()).map_err(csv_err)?;
    for row in report.csv_rows() {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json_report<T: Serialize>(path: impl AsRef<Path>, envelope: &ReportEnvelope<T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, envelope)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json_report<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<ReportEnvelope<T>> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

/// Writes `<dir>/<stem>.json` and/or `<dir>/<stem>.csv`; returns the paths.
pub fn write_report<T: Serialize + CsvReport + Clone>(
    dir: impl AsRef<Path>,
    stem: &str,
    envelope: &ReportEnvelope<T>,
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for format in formats {
        let path = dir.join(format!("{stem}.{format}"));
        match format {
            ReportFormat::Json => write_json_report(&path, envelope)?,
            ReportFormat::Csv => write_csv_report(&path, &envelope.result)?,
        }
        written.push(path);
    }
    Ok(written)
}
