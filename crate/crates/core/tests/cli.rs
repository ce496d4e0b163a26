use std::path::Path;
use std::process::{Command, Output};

use pds_core::discrimination::PdsReport;
use pds_core::io::{read_effect_matrix, read_json_report, ReportEnvelope};
use pds_core::*;
use serde_json::Value;
use tempfile::TempDir;

fn pds_bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pds")).args(args).output().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn synth(dir: &Path, extra: &[&str]) {
    let d = dir.to_str().unwrap();
    let mut args = vec!["synth", "--n-perturbations", "25", "--n-genes", "40", "--seed", "3", "--out", d];
    args.extend_from_slice(extra);
    ok(&pds_bin(&args));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pds_writes_one_report_per_metric() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &[]);
    let (pred, truth, out) = (tmp.path().join("pred.csv"), tmp.path().join("truth.csv"), tmp.path().join("out"));
    ok(&pds_bin(&[
        "pds", "--pred", s(&pred), "--truth", s(&truth), "--metric", "l1,l2,cosine,sign-cosine", "--mask-target", "--out", s(&out),
    ]));

    let pair = align_pair(&read_effect_matrix(&pred).unwrap(), &read_effect_matrix(&truth).unwrap()).unwrap();
    for kind in [DistanceKind::L1, DistanceKind::L2, DistanceKind::CosineDissim, DistanceKind::SignCosineDissim] {
        let json = out.join(format!("pds_{kind}.json"));
        let csv = out.join(format!("pds_{kind}.csv"));
        let envelope: ReportEnvelope<PdsReport> = read_json_report(&json).unwrap();
        let direct = compute_pds(&pair, &DistanceSpec::from(kind), &PdsOptions::default().masked(true)).unwrap();
        assert_eq!(envelope.result.mean_pds.to_bits(), direct.mean_pds.to_bits());
        assert_eq!(envelope.result.per_perturbation.len(), 25);
        assert!(envelope.config.apply_target_mask);
        assert_eq!(envelope.input_digests.len(), 2);
        assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 25 + 1);
    }
}

#[test]
fn runs_are_reproducible_and_thread_independent() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &[]);
    let (pred, truth) = (tmp.path().join("pred.csv"), tmp.path().join("truth.csv"));
    let run = |dir: &str, serial: bool| {
        let out = tmp.path().join(dir);
        let mut args = vec!["pds", "--pred", s(&pred), "--truth", s(&truth), "--metric", "l2", "--out", s(&out)];
        if serial {
            args.push("--serial");
        }
        ok(&pds_bin(&args));
        let mut json: Value = serde_json::from_str(&std::fs::read_to_string(out.join("pds_l2.json")).unwrap()).unwrap();
        // the echoed config differs in output dir and the serial flag only
        json["config"] = Value::Null;
        (json, std::fs::read_to_string(out.join("pds_l2.csv")).unwrap())
    };
    let a = run("a", false);
    assert_eq!(a, run("b", false));
    assert_eq!(a, run("c", true));
}

#[test]
fn sweep_writes_plot_columns_and_limits() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &[]);
    let out = tmp.path().join("sweep");
    let res = pds_bin(&[
        "sweep", "--pred", s(&tmp.path().join("pred.csv")), "--truth", s(&tmp.path().join("truth.csv")),
        "--metric", "l1,l2", "--grid", "1e-2:1e4:25", "--out", s(&out),
    ]);
    ok(&res);
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("limit_mean_pds"));
    assert!(stdout.contains("convergence_threshold"));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "c,metric,mean_pds");
    assert_eq!(lines.count(), 2 * 25);
    let json: Value = serde_json::from_str(&std::fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["sweep_grid"].as_array().unwrap().len(), 25);
}

#[test]
fn unknown_metric_is_a_usage_error() {
    let out = pds_bin(&["pds", "--pred", "p.csv", "--truth", "t.csv", "--metric", "manhattan"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for name in ["l1", "l2", "cosine", "sign-cosine"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn bad_transform_prints_the_grammar() {
    let out = pds_bin(&["pds", "--pred", "p.csv", "--truth", "t.csv", "--transform", "scale:abc"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("norm-match:l1"), "{err}");
    assert!(err.contains("sign:"), "{err}");
}

#[test]
fn validation_errors_exit_one() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, "perturbation,g1\nA,1\nA,2\n").unwrap();
    let out = pds_bin(&["pds", "--pred", s(&bad), "--truth", s(&bad), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains('A'));

    let missing = pds_bin(&["pds", "--pred", "/nonexistent/p.csv", "--truth", "/nonexistent/t.csv"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn norm_match_emits_matched_predictions() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &[]);
    let matched = tmp.path().join("matched.csv");
    let truth = tmp.path().join("truth.csv");
    ok(&pds_bin(&[
        "norm-match", "--pred", s(&tmp.path().join("pred.csv")), "--truth", s(&truth), "--norm", "l1", "--out", s(&matched),
    ]));
    let m = read_effect_matrix(&matched).unwrap();
    let t = read_effect_matrix(&truth).unwrap();
    for i in 0..m.n_perturbations() {
        let (a, b) = (NormKind::L1.norm(m.row(i)), NormKind::L1.norm(t.row(i)));
        assert!((a - b).abs() <= 1e-12 * b);
    }
}

#[test]
fn geometry_subcommands() {
    let tmp = TempDir::new().unwrap();
    let out = pds_bin(&[
        "geometry", "certificate", "--pred-norm", "1", "--true-norm", "1", "--cosine", "0.4", "--out", s(tmp.path()),
    ]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("safe=false"));
    assert!(tmp.path().join("certificate.json").exists());

    ok(&pds_bin(&[
        "geometry", "region", "--dims", "2,5", "--samples", "5000", "--seed", "4", "--out", s(tmp.path()),
    ]));
    let csv = std::fs::read_to_string(tmp.path().join("region.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "d,rho,kappa,fraction,stderr");
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn preprocess_compares_pipelines() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &["--counts", "--n-cells", "300", "--count-genes", "50", "--count-perturbations", "6"]);
    let out = tmp.path().join("pre");
    ok(&pds_bin(&["preprocess", "--counts", s(&tmp.path().join("counts.csv")), "--out", s(&out)]));
    let csv = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6 + 1);
    let a = read_effect_matrix(out.join("effects_a.csv")).unwrap();
    assert_eq!(a.n_perturbations(), 6);
    let json: Value = serde_json::from_str(&std::fs::read_to_string(out.join("comparison.json")).unwrap()).unwrap();
    assert!(json["input_digests"]["counts"].as_str().unwrap().len() == 64);
}

#[test]
fn help_exits_zero() {
    let out = pds_bin(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let sweep_help = String::from_utf8_lossy(&pds_bin(&["sweep", "--help"]).stdout).to_string();
    assert!(sweep_help.contains("1e-2:1e4:25"));
}
