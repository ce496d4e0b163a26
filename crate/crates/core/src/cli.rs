//! Command-line front end. `run` returns the process exit code: 0 on success,
//! 1 on validation or I/O errors, 2 on usage errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::asymptotics::{log_grid, scale_sweep};
use crate::discrimination::{compute_pds, ErrorPolicy, PdsOptions};
use crate::effects::{align_pair, EffectPair};
use crate::error::{PdsError, Result};
use crate::geometry::{orthogonal_ray_certificate, region_fraction};
use crate::io::{
    read_counts, read_effect_matrix, read_targets, write_counts, write_effect_matrix, write_report,
    ReportEnvelope, ReportFormat, RunConfig,
};
use crate::metrics::{DistanceKind, DistanceSpec};
use crate::preprocessing::{compare_pipelines, effects_for, PipelineKind, PipelineSpec};
use crate::synth::{generate, generate_counts, CountSynthSpec, SynthSpec};
use crate::transforms::{apply_chain, format_chain, norm_match, parse_chain, NormKind, TransformDescriptor, CHAIN_GRAMMAR};

#[derive(Debug, Parser)]
#[command(name = "pds", version, about = "Perturbation discrimination scores and their geometry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score predictions against truths under one or more metrics.
    Pds(PdsArgs),
    /// Mean PDS of globally rescaled predictions over a grid of scales.
    Sweep(SweepArgs),
    /// Write predictions rescaled to the l1 or l2 norm of their truths.
    NormMatch(NormMatchArgs),
    /// Orthogonal-distractor certificate and Monte Carlo region fractions.
    Geometry(GeometryArgs),
    /// Normalize counts under two pipelines and compare mean effects.
    Preprocess(PreprocessArgs),
    /// Generate synthetic effect pairs and, optionally, counts.
    Synth(SynthArgs),
}

fn parse_metric(s: &str) -> std::result::Result<DistanceKind, String> {
    s.parse().map_err(|e: PdsError| e.to_string())
}

// Newtypes keep clap from treating a parsed list as repeated occurrences.
#[derive(Debug, Clone)]
struct Chain(Vec<TransformDescriptor>);

#[derive(Debug, Clone)]
struct Grid(Vec<f64>);

fn parse_transforms(s: &str) -> std::result::Result<Chain, String> {
    parse_chain(s)
        .map(Chain)
        .map_err(|e| format!("{e}\n  grammar: {CHAIN_GRAMMAR}"))
}

fn parse_format(s: &str) -> std::result::Result<ReportFormat, String> {
    s.parse().map_err(|e: PdsError| e.to_string())
}

fn parse_norm(s: &str) -> std::result::Result<NormKind, String> {
    s.parse().map_err(|e: PdsError| e.to_string())
}

fn parse_grid(s: &str) -> std::result::Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else {
        return Err("grid must be lo:hi:n, e.g. 1e-2:1e4:25".into());
    };
    let lo: f64 = lo.parse().map_err(|_| format!("bad grid start `{lo}`"))?;
    let hi: f64 = hi.parse().map_err(|_| format!("bad grid end `{hi}`"))?;
    let n: usize = n.parse().map_err(|_| format!("bad grid size `{n}`"))?;
    log_grid(lo, hi, n).map(Grid).map_err(|e| e.to_string())
}

fn parse_pipeline(s: &str) -> std::result::Result<PipelineKind, String> {
    match s {
        "per10k-log1p" | "per10k" => Ok(PipelineKind::Per10kLog1p),
        "median" => Ok(PipelineKind::MedianLibrarySize),
        other => Err(format!("unknown pipeline `{other}`; expected per10k-log1p or median")),
    }
}

#[derive(Debug, Args)]
struct PairInput {
    /// Predicted effects CSV (header `perturbation,<gene>...`).
    #[arg(long = "pred")]
    pred: PathBuf,
    /// Observed effects CSV, same layout.
    #[arg(long = "truth")]
    truth: PathBuf,
    /// Optional `perturbation,gene` CSV of target genes. Without it, a gene
    /// named like the perturbation is taken as its target.
    #[arg(long)]
    targets: Option<PathBuf>,
    /// Exclude each anchor's target gene from all of its comparisons.
    #[arg(long = "mask-target")]
    mask_target: bool,
}

#[derive(Debug, Args)]
struct Output {
    /// Output directory.
    #[arg(long, default_value = "pds-out")]
    out: PathBuf,
    /// Report formats.
    #[arg(long, value_delimiter = ',', value_parser = parse_format, default_value = "json,csv")]
    format: Vec<ReportFormat>,
}

#[derive(Debug, Args)]
struct PdsArgs {
    #[command(flatten)]
    input: PairInput,
    /// Metrics: l1, l2, cosine, sign-cosine, l2-limit, l1-limit.
    #[arg(long, value_delimiter = ',', value_parser = parse_metric, default_value = "l1,l2,cosine,sign-cosine")]
    metric: Vec<DistanceKind>,
    /// |x| at or below this maps to sign 0 (sign-cosine and l1-limit).
    #[arg(long, default_value_t = 0.0)]
    sign_threshold: f64,
    /// Transform chain applied to predictions, e.g. `scale:3.0,norm-match:l2`.
    #[arg(long, value_parser = parse_transforms, default_value = "")]
    transform: Chain,
    /// Anchors that cannot be scored: `worst-rank` (pds 0) or `exclude`.
    #[arg(long, default_value = "worst-rank", value_parser = ["worst-rank", "exclude"])]
    on_error: String,
    /// Score anchors on one thread.
    #[arg(long)]
    serial: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    input: PairInput,
    #[arg(long, value_delimiter = ',', value_parser = parse_metric, default_value = "l1,l2")]
    metric: Vec<DistanceKind>,
    #[arg(long, default_value_t = 0.0)]
    sign_threshold: f64,
    /// Log-spaced grid `lo:hi:n`.
    #[arg(long, value_parser = parse_grid, default_value = "1e-2:1e4:25")]
    grid: Grid,
    #[arg(long)]
    serial: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct NormMatchArgs {
    #[arg(long = "pred")]
    pred: PathBuf,
    #[arg(long = "truth")]
    truth: PathBuf,
    /// Norm to match: l1 or l2.
    #[arg(long, value_parser = parse_norm, default_value = "l2")]
    norm: NormKind,
    /// Output CSV of rescaled predictions (aligned to the shared labels).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GeometryArgs {
    #[command(subcommand)]
    mode: GeometryMode,
}

#[derive(Debug, Subcommand)]
enum GeometryMode {
    /// Closed-form safety against orthogonal distractor rays.
    Certificate {
        #[arg(long)]
        pred_norm: f64,
        #[arg(long)]
        true_norm: f64,
        #[arg(long, allow_hyphen_values = true)]
        cosine: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Monte Carlo fraction of short random distractors that beat the truth.
    Region {
        #[arg(long, value_delimiter = ',', default_value = "2,10,100,1000")]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 0.3)]
        rho: f64,
        #[arg(long, default_value_t = 0.6, allow_hyphen_values = true)]
        kappa: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Distance used for "closer": l1 or l2.
        #[arg(long, value_parser = parse_norm, default_value = "l2")]
        distance: NormKind,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    /// Counts CSV (header `cell,condition,<gene>...`).
    #[arg(long)]
    counts: PathBuf,
    #[arg(long, value_parser = parse_pipeline, default_value = "per10k-log1p")]
    pipeline_a: PipelineKind,
    #[arg(long, value_parser = parse_pipeline, default_value = "median")]
    pipeline_b: PipelineKind,
    /// Apply log1p after median library-size scaling.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    median_log1p: bool,
    #[arg(long, default_value_t = 0.0)]
    sign_threshold: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    n_perturbations: usize,
    #[arg(long, default_value_t = 500)]
    n_genes: usize,
    /// Log-normal location of truth norms.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    norm_mu: f64,
    /// Log-normal scale of truth norms.
    #[arg(long, default_value_t = 1.0)]
    norm_sigma: f64,
    #[arg(long, default_value_t = 0.6)]
    target_cosine: f64,
    #[arg(long, default_value_t = 1.0)]
    prediction_scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write a synthetic counts matrix.
    #[arg(long)]
    counts: bool,
    #[arg(long, default_value_t = 2000)]
    n_cells: usize,
    #[arg(long, default_value_t = 1000)]
    count_genes: usize,
    #[arg(long, default_value_t = 40)]
    count_perturbations: usize,
    /// Output directory.
    #[arg(long, default_value = "pds-out")]
    out: PathBuf,
}

fn load_pair(input: &PairInput) -> Result<EffectPair> {
    let pred = read_effect_matrix(&input.pred)?;
    let truth = read_effect_matrix(&input.truth)?;
    let pair = align_pair(&pred, &truth)?;
    match &input.targets {
        Some(path) => {
            let all = read_targets(path)?;
            let total = all.len();
            let kept: BTreeMap<String, String> = all
                .into_iter()
                .filter(|(p, g)| {
                    pair.truth().perturbation_index(p).is_some() && pair.truth().gene_index(g).is_some()
                })
                .collect();
            if kept.len() < total {
                eprintln!(
                    "note: {} of {total} target entries refer to labels outside the shared set and were ignored",
                    total - kept.len()
                );
            }
            pair.with_targets(kept)
        }
        None => pair.with_targets_from_labels(),
    }
}

fn pair_config(command: &str, input: &PairInput, output: &Output) -> RunConfig {
    let mut inputs = BTreeMap::new();
    inputs.insert("predicted".to_string(), input.pred.clone());
    inputs.insert("truth".to_string(), input.truth.clone());
    if let Some(t) = &input.targets {
        inputs.insert("targets".to_string(), t.clone());
    }
    RunConfig {
        command: command.to_string(),
        inputs,
        apply_target_mask: input.mask_target,
        output_dir: output.out.clone(),
        formats: output.format.clone(),
        ..RunConfig::default()
    }
}

fn specs(kinds: &[DistanceKind], sign_threshold: f64) -> Result<Vec<DistanceSpec>> {
    kinds
        .iter()
        .map(|&k| DistanceSpec::with_sign_threshold(k, sign_threshold))
        .collect()
}

fn run_pds(args: PdsArgs) -> Result<()> {
    let chain = &args.transform.0;
    let pair = apply_chain(&load_pair(&args.input)?, chain)?;
    let policy = match args.on_error.as_str() {
        "exclude" => ErrorPolicy::Exclude,
        _ => ErrorPolicy::WorstRank,
    };
    let options = PdsOptions {
        apply_target_mask: args.input.mask_target,
        error_policy: policy,
        parallel: !args.serial,
    };
    let mut config = pair_config("pds", &args.input, &args.output);
    config.metrics = args.metric.iter().map(|m| m.to_string()).collect();
    config.transform_chain = format_chain(chain);
    config.options.insert("sign_threshold".into(), json!(args.sign_threshold));
    config.options.insert("on_error".into(), json!(args.on_error));
    config.options.insert("serial".into(), json!(args.serial));
    let digests = config.input_digests()?;

    for spec in specs(&args.metric, args.sign_threshold)? {
        let report = compute_pds(&pair, &spec, &options)?;
        println!("{}\tmean_pds={}\tflagged={}", spec, report.mean_pds, report.flagged().count());
        let envelope = ReportEnvelope::new(config.clone(), digests.clone(), report);
        write_report(&args.output.out, &format!("pds_{spec}"), &envelope, &args.output.format)?;
    }
    Ok(())
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    let pair = load_pair(&args.input)?;
    let options = PdsOptions {
        apply_target_mask: args.input.mask_target,
        error_policy: ErrorPolicy::WorstRank,
        parallel: !args.serial,
    };
    let mut config = pair_config("sweep", &args.input, &args.output);
    config.metrics = args.metric.iter().map(|m| m.to_string()).collect();
    let grid = &args.grid.0;
    config.sweep_grid = Some(grid.clone());
    config.options.insert("sign_threshold".into(), json!(args.sign_threshold));
    config.options.insert("serial".into(), json!(args.serial));
    let digests = config.input_digests()?;

    let result = scale_sweep(&pair, &specs(&args.metric, args.sign_threshold)?, grid, &options)?;
    for curve in &result.curves {
        println!("{}\tlimit_mean_pds={}", curve.metric, curve.limit_mean_pds);
    }
    if let Some(c) = result.l2_convergence_threshold {
        println!("l2\tconvergence_threshold={c}");
    }
    let envelope = ReportEnvelope::new(config, digests, result);
    write_report(&args.output.out, "sweep", &envelope, &args.output.format)?;
    Ok(())
}

fn run_norm_match(args: NormMatchArgs) -> Result<()> {
    let pair = align_pair(&read_effect_matrix(&args.pred)?, &read_effect_matrix(&args.truth)?)?;
    let matched = norm_match(&pair, args.norm)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_effect_matrix(&args.out, matched.predicted())?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn run_geometry(args: GeometryArgs) -> Result<()> {
    match args.mode {
        GeometryMode::Certificate {
            pred_norm,
            true_norm,
            cosine,
            output,
        } => {
            let cert = orthogonal_ray_certificate(pred_norm, true_norm, cosine)?;
            println!(
                "safe={}\tthreshold={}\tmargin={}",
                cert.safe, cert.threshold, cert.margin
            );
            let mut config = RunConfig {
                command: "geometry certificate".into(),
                output_dir: output.out.clone(),
                formats: output.format.clone(),
                ..RunConfig::default()
            };
            config.options.insert("pred_norm".into(), json!(pred_norm));
            config.options.insert("true_norm".into(), json!(true_norm));
            config.options.insert("cosine".into(), json!(cosine));
            let envelope = ReportEnvelope::new(config, BTreeMap::new(), cert);
            write_report(&output.out, "certificate", &envelope, &output.format)?;
        }
        GeometryMode::Region {
            dims,
            rho,
            kappa,
            samples,
            seed,
            distance,
            output,
        } => {
            let results = dims
                .iter()
                .map(|&d| region_fraction(d, rho, kappa, samples, seed, distance))
                .collect::<Result<Vec<_>>>()?;
            for r in &results {
                println!("d={}\tfraction={}\tstderr={}", r.dimension, r.fraction_closer, r.standard_error);
            }
            let mut config = RunConfig {
                command: "geometry region".into(),
                output_dir: output.out.clone(),
                formats: output.format.clone(),
                seed: Some(seed),
                ..RunConfig::default()
            };
            config.options.insert("dims".into(), json!(dims));
            config.options.insert("rho".into(), json!(rho));
            config.options.insert("kappa".into(), json!(kappa));
            config.options.insert("samples".into(), json!(samples));
            config.options.insert("distance".into(), json!(distance));
            let envelope = ReportEnvelope::new(config, BTreeMap::new(), results);
            write_report(&output.out, "region", &envelope, &output.format)?;
        }
    }
    Ok(())
}

fn pipeline_spec(kind: PipelineKind, median_log1p: bool) -> PipelineSpec {
    match kind {
        PipelineKind::Per10kLog1p => PipelineSpec::per_10k_log1p(),
        PipelineKind::MedianLibrarySize => PipelineSpec::median(median_log1p),
    }
}

fn run_preprocess(args: PreprocessArgs) -> Result<()> {
    let counts = read_counts(&args.counts)?;
    let a = pipeline_spec(args.pipeline_a, args.median_log1p);
    let b = pipeline_spec(args.pipeline_b, args.median_log1p);
    std::fs::create_dir_all(&args.output.out)?;
    write_effect_matrix(args.output.out.join("effects_a.csv"), &effects_for(&counts, &a)?)?;
    write_effect_matrix(args.output.out.join("effects_b.csv"), &effects_for(&counts, &b)?)?;
    let comparison = compare_pipelines(&counts, &a, &b, args.sign_threshold)?;

    let mut config = RunConfig {
        command: "preprocess".into(),
        output_dir: args.output.out.clone(),
        formats: args.output.format.clone(),
        ..RunConfig::default()
    };
    config.inputs.insert("counts".into(), args.counts.clone());
    config.options.insert("pipeline_a".into(), json!(a));
    config.options.insert("pipeline_b".into(), json!(b));
    config.options.insert("sign_threshold".into(), json!(args.sign_threshold));
    let digests = config.input_digests()?;
    println!("compared {} perturbations", comparison.rows.len());
    let envelope = ReportEnvelope::new(config, digests, comparison);
    write_report(&args.output.out, "comparison", &envelope, &args.output.format)?;
    Ok(())
}

fn run_synth(args: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        n_perturbations: args.n_perturbations,
        n_genes: args.n_genes,
        truth_norm_mu: args.norm_mu,
        truth_norm_sigma: args.norm_sigma,
        target_cosine: args.target_cosine,
        prediction_scale: args.prediction_scale,
        seed: args.seed,
    };
    let pair = generate(&spec)?;
    std::fs::create_dir_all(&args.out)?;
    write_effect_matrix(args.out.join("pred.csv"), pair.predicted())?;
    write_effect_matrix(args.out.join("truth.csv"), pair.truth())?;
    let mut echo = json!({ "effects": spec });
    if args.counts {
        let counts_spec = CountSynthSpec {
            n_cells: args.n_cells,
            n_genes: args.count_genes,
            n_perturbations: args.count_perturbations,
            seed: args.seed,
            ..CountSynthSpec::default()
        };
        write_counts(args.out.join("counts.csv"), &generate_counts(&counts_spec)?)?;
        echo["counts"] = json!(counts_spec);
    }
    std::fs::write(args.out.join("synth.json"), serde_json::to_string_pretty(&echo)?)?;
    println!("wrote synthetic data to {}", args.out.display());
    Ok(())
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match cli.command {
        Command::Pds(a) => run_pds(a),
        Command::Sweep(a) => run_sweep(a),
        Command::NormMatch(a) => run_norm_match(a),
        Command::Geometry(a) => run_geometry(a),
        Command::Preprocess(a) => run_preprocess(a),
        Command::Synth(a) => run_synth(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
