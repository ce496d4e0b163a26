mod common;

use std::collections::BTreeMap;

use pds_core::asymptotics::ScaleSweepResult;
use pds_core::io::{read_effect_matrix, read_json_report, write_effect_matrix, write_report, ReportEnvelope, ReportFormat, RunConfig};
use pds_core::*;
use tempfile::TempDir;

use common::gaussian_pair;

const BOTH: [ReportFormat; 2] = [ReportFormat::Json, ReportFormat::Csv];

#[test]
fn pds_report_round_trips_bitwise() {
    let tmp = TempDir::new().unwrap();
    for seed in 0..10 {
        let pair = gaussian_pair(17, 9, seed);
        let report = compute_pds(&pair, &DistanceSpec::from(DistanceKind::L1), &PdsOptions::default()).unwrap();
        let envelope = ReportEnvelope::new(RunConfig::default(), BTreeMap::new(), report.clone());
        write_report(tmp.path(), "r", &envelope, &BOTH).unwrap();
        let back: ReportEnvelope<PdsReport> = read_json_report(tmp.path().join("r.json")).unwrap();
        assert_eq!(back.result.mean_pds.to_bits(), report.mean_pds.to_bits());
        assert_eq!(back.result, report);
        let csv = std::fs::read_to_string(tmp.path().join("r.csv")).unwrap();
        assert_eq!(csv.lines().count(), 17 + 1);
    }
}

#[test]
fn sweep_csv_has_plot_columns() {
    let tmp = TempDir::new().unwrap();
    let pair = gaussian_pair(8, 5, 1);
    let metrics = [DistanceSpec::from(DistanceKind::L2), DistanceSpec::from(DistanceKind::CosineDissim)];
    let sweep = scale_sweep(&pair, &metrics, &[0.1, 1.0, 10.0], &PdsOptions::default()).unwrap();
    let envelope = ReportEnvelope::new(RunConfig::default(), BTreeMap::new(), sweep.clone());
    write_report(tmp.path(), "sweep", &envelope, &BOTH).unwrap();
    let csv = std::fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "c,metric,mean_pds");
    assert_eq!(rows.len(), 1 + 6);
    assert!(rows[1..].iter().all(|r| r.split(',').count() == 3));
    let back: ReportEnvelope<ScaleSweepResult> = read_json_report(tmp.path().join("sweep.json")).unwrap();
    assert_eq!(back.result, sweep);
}

#[test]
fn effect_matrix_csv_round_trips_exactly() {
    let tmp = TempDir::new().unwrap();
    let pair = gaussian_pair(6, 11, 2);
    let path = tmp.path().join("m.csv");
    write_effect_matrix(&path, pair.truth()).unwrap();
    assert_eq!(&read_effect_matrix(&path).unwrap(), pair.truth());
}
