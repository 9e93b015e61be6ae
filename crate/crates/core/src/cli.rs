//! Command-line front end: `segment`, `eval`, `phantom` and `bench`.
//!
//! Exit codes: 0 success, 2 input/output or usage error, 3 pipeline failure,
//! 4 bench with fewer than 90% successful runs.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::acm::AcmParams;
use crate::bench::{run_bench, workers_from_env, BenchSample};
use crate::error::Error;
use crate::fcm::FcmParams;
use crate::imgcore::{BinaryMask, LungSelection};
use crate::io::{load_gray, load_mask, overlay, save_gray, save_mask};
use crate::metrics::evaluate;
use crate::morph::{AmfParams, BorderCorrection, GmmParams};
use crate::phantom::{default_suite_sized, generate_phantom, NoduleKind, PhantomSpec};
use crate::pipeline::{candidate, finish, Method, PipelineConfig, StageRaster};
use crate::threshold::ThresholdParams;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 2;
pub const EXIT_PIPELINE: i32 = 3;
pub const EXIT_PARTIAL: i32 = 4;

/// Failure carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn io(e: impl std::fmt::Display) -> Self {
        CliError {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }

    fn pipeline(e: impl std::fmt::Display) -> Self {
        CliError {
            code: EXIT_PIPELINE,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RollingBallParams {
    pub radius: usize,
}

impl Default for RollingBallParams {
    fn default() -> Self {
        Self {
            radius: BorderCorrection::DEFAULT_ROLLING_BALL_RADIUS,
        }
    }
}

/// Everything a run can be configured with. Loaded from an optional TOML
/// file, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub correction: String,
    pub seed: u64,
    pub threshold: ThresholdParams,
    pub fcm: FcmParams,
    pub acm: AcmParams,
    pub selection: LungSelection,
    pub amf: AmfParams,
    pub rolling_ball: RollingBallParams,
    pub gmm: GmmParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Threshold,
            correction: "amf".into(),
            seed: 0,
            threshold: ThresholdParams::default(),
            fcm: FcmParams::default(),
            acm: AcmParams::default(),
            selection: LungSelection::default(),
            amf: AmfParams::default(),
            rolling_ball: RollingBallParams::default(),
            gmm: GmmParams::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> crate::Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            threshold: self.threshold.clone(),
            fcm: self.fcm.clone(),
            acm: self.acm,
            selection: self.selection,
            seed: self.seed,
        }
    }

    /// Correction of the given name with this config's parameters.
    pub fn correction_named(&self, name: &str) -> crate::Result<BorderCorrection> {
        Ok(match BorderCorrection::from_name(name)? {
            BorderCorrection::None => BorderCorrection::None,
            BorderCorrection::Amf(_) => BorderCorrection::Amf(self.amf),
            BorderCorrection::RollingBall { .. } => BorderCorrection::RollingBall {
                radius: self.rolling_ball.radius,
            },
            BorderCorrection::Gmm(_) => BorderCorrection::Gmm(self.gmm),
        })
    }

    pub fn correction(&self) -> crate::Result<BorderCorrection> {
        self.correction_named(&self.correction)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "lungseg",
    version,
    about = "Lung parenchyma segmentation of CT slices"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment one slice and write the mask, stages and a JSON summary.
    Segment(SegmentArgs),
    /// Compare a predicted mask with a reference mask.
    Eval(EvalArgs),
    /// Write a seeded suite of synthetic slices with ground truth.
    Phantom(PhantomArgs),
    /// Run the method x correction grid and write bench.csv and bench.json.
    Bench(BenchArgs),
}

/// Config file and per-parameter overrides shared by `segment` and `bench`.
#[derive(Debug, Args, Default)]
pub struct ParamArgs {
    /// TOML config file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub median_window: Option<usize>,
    #[arg(long)]
    pub fcm_clusters: Option<usize>,
    #[arg(long)]
    pub fcm_m: Option<f64>,
    #[arg(long)]
    pub fcm_tol: Option<f64>,
    #[arg(long)]
    pub fcm_max_iter: Option<usize>,
    #[arg(long)]
    pub acm_mu: Option<f64>,
    #[arg(long)]
    pub acm_dt: Option<f64>,
    #[arg(long)]
    pub acm_max_iter: Option<usize>,
    #[arg(long)]
    pub acm_stop_tol: Option<f64>,
    #[arg(long)]
    pub acm_epsilon: Option<f64>,
    #[arg(long)]
    pub amf_max_radius: Option<usize>,
    #[arg(long)]
    pub amf_depth_threshold: Option<f64>,
    #[arg(long)]
    pub amf_window: Option<usize>,
    #[arg(long)]
    pub rolling_ball_radius: Option<usize>,
    #[arg(long)]
    pub gmm_band: Option<usize>,
}

impl ParamArgs {
    fn load(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
                RunConfig::from_toml(&text).map_err(CliError::io)?
            }
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:ident => $($field:ident).+) => {
                if let Some(v) = self.$flag {
                    cfg.$($field).+ = v;
                }
            };
        }
        set!(seed => seed);
        set!(median_window => threshold.median_window);
        set!(fcm_clusters => fcm.clusters);
        set!(fcm_m => fcm.m);
        set!(fcm_tol => fcm.tol);
        set!(fcm_max_iter => fcm.max_iter);
        set!(acm_mu => acm.mu);
        set!(acm_dt => acm.dt);
        set!(acm_max_iter => acm.max_iter);
        set!(acm_stop_tol => acm.stop_tol);
        set!(acm_epsilon => acm.epsilon);
        set!(amf_max_radius => amf.max_radius);
        set!(amf_depth_threshold => amf.depth_threshold);
        set!(amf_window => amf.window);
        set!(rolling_ball_radius => rolling_ball.radius);
        set!(gmm_band => gmm.band);
        cfg.acm.validate().map_err(CliError::io)?;
        cfg.amf.validate().map_err(CliError::io)?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// 8-bit PGM/PNG or 16-bit PGM slice.
    pub input: PathBuf,
    /// threshold, fcm or acm.
    #[arg(long)]
    pub method: Option<String>,
    /// none, amf, rolling_ball or gmm.
    #[arg(long)]
    pub correction: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub pred: PathBuf,
    pub truth: PathBuf,
    /// Append a row of metrics to this CSV file.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 512)]
    pub size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Directory written by `phantom`; without it a suite is generated.
    #[arg(long)]
    pub suite: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    /// Seed of the generated suite.
    #[arg(long, default_value_t = 7)]
    pub suite_seed: u64,
    #[arg(long, default_value_t = 512)]
    pub size: usize,
    #[arg(long, value_delimiter = ',', default_value = "threshold,fcm,acm")]
    pub methods: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "none,amf,rolling_ball")]
    pub corrections: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub params: ParamArgs,
}

/// Parses the process arguments and runs; returns the exit code.
pub fn run() -> i32 {
    run_with(std::env::args_os())
}

pub fn run_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    EXIT_OK
                }
                _ => EXIT_IO,
            };
        }
    };
    let result = match cli.command {
        Command::Segment(a) => cmd_segment(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Phantom(a) => cmd_phantom(&a),
        Command::Bench(a) => cmd_bench(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("lungseg: {}", e.message);
            e.code
        }
    }
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn millis(t: Instant) -> f64 {
    (t.elapsed().as_secs_f64() * 1e6).round() / 1e3
}

pub fn cmd_segment(a: &SegmentArgs) -> CliResult<i32> {
    let mut cfg = a.params.load()?;
    if let Some(m) = &a.method {
        cfg.method = Method::from_name(m).map_err(CliError::io)?;
    }
    if let Some(c) = &a.correction {
        cfg.correction = c.clone();
    }
    let correction = cfg.correction().map_err(CliError::io)?;
    let img = load_gray(&a.input).map_err(CliError::io)?;

    let start = Instant::now();
    let (cand, info) = candidate(&img, cfg.method, &cfg.pipeline()).map_err(CliError::pipeline)?;
    let t_candidate = millis(start);
    let mid = Instant::now();
    let done = finish(&img, &cand, &correction).map_err(CliError::pipeline)?;
    let t_correction = millis(mid);
    let t_total = millis(start);

    let out = &a.out;
    save_mask(&done.mask, out.join("mask.png")).map_err(CliError::io)?;
    save_gray(&done.parenchyma, out.join("parenchyma.png")).map_err(CliError::io)?;
    let ov = overlay(&img, &done.mask).map_err(CliError::io)?;
    save_gray(&ov, out.join("overlay.png")).map_err(CliError::io)?;
    for stage in &done.stages {
        let path = out.join("stages").join(format!("{}.png", stage.name));
        match &stage.raster {
            StageRaster::Gray(g) => save_gray(g, &path),
            StageRaster::Mask(m) => save_mask(m, &path),
        }
        .map_err(CliError::io)?;
    }
    let input_name = a
        .input
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let summary = json!({
        "input": input_name,
        "width": img.width(),
        "height": img.height(),
        "method": cfg.method,
        "correction": correction,
        "seed": cfg.seed,
        "threshold": info.threshold,
        "centers": info.centers,
        "iterations": info.iterations,
        "mask_pixels": done.mask.count(),
        "stages": done.stages.iter().map(|s| s.name.clone()).collect::<Vec<_>>(),
        "timings_ms": {
            "candidate": t_candidate,
            "correction": t_correction,
            "total": t_total,
        },
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_text(&out.join("result.json"), &(text + "\n"))?;
    Ok(EXIT_OK)
}

fn fixed4(v: Option<f64>) -> String {
    v.map_or_else(|| "null".to_string(), |v| format!("{v:.4}"))
}

pub fn cmd_eval(a: &EvalArgs) -> CliResult<i32> {
    let pred = load_mask(&a.pred).map_err(CliError::io)?;
    let truth = load_mask(&a.truth).map_err(CliError::io)?;
    let ev = evaluate(&pred, &truth).map_err(CliError::io)?;
    let fields = [
        ("dsc", Some(ev.dsc)),
        ("recall", ev.recall),
        ("sensitivity_eq4", ev.sensitivity_eq4),
        ("specificity", ev.specificity),
        ("hausdorff_px", ev.hausdorff),
    ];
    for (name, v) in &fields {
        if v.is_none() {
            eprintln!("warning: {name} is undefined for these masks");
        }
    }
    let body: Vec<String> = fields
        .iter()
        .map(|(k, v)| format!("  \"{k}\": {}", fixed4(*v)))
        .collect();
    println!("{{\n{}\n}}", body.join(",\n"));

    if let Some(path) = &a.csv {
        let fresh = !path.exists();
        let file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        let mut w = csv::Writer::from_writer(file);
        let csv_err = |e: csv::Error| CliError::io(format!("{}: {e}", path.display()));
        if fresh {
            let mut header = vec!["pred", "truth"];
            header.extend(fields.iter().map(|(k, _)| *k));
            w.write_record(header).map_err(csv_err)?;
        }
        let mut row = vec![a.pred.display().to_string(), a.truth.display().to_string()];
        row.extend(
            fields
                .iter()
                .map(|(_, v)| v.map_or(String::new(), |v| format!("{v:.4}"))),
        );
        w.write_record(row).map_err(csv_err)?;
        w.flush()
            .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    }
    Ok(EXIT_OK)
}

/// Manifest entry of a written phantom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSample {
    pub id: usize,
    pub category: String,
    pub image: String,
    pub truth: String,
    pub nodule_kinds: Vec<NoduleKind>,
    pub spec: PhantomSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub size: usize,
    pub samples: Vec<ManifestSample>,
}

pub const MANIFEST: &str = "manifest.json";

pub fn cmd_phantom(a: &PhantomArgs) -> CliResult<i32> {
    if a.n < 1 {
        return Err(CliError::io("phantom needs --n >= 1"));
    }
    // Suites have a floor of five samples; smaller requests take a prefix.
    let mut suite = default_suite_sized(a.n.max(5), a.seed, a.size).map_err(CliError::io)?;
    suite.truncate(a.n);
    fs::create_dir_all(&a.out).map_err(|e| CliError::io(format!("{}: {e}", a.out.display())))?;
    let mut samples = Vec::new();
    for s in &suite {
        let image = format!("sample_{:03}_image.png", s.id);
        let truth = format!("sample_{:03}_truth.png", s.id);
        save_gray(&s.image, a.out.join(&image)).map_err(CliError::io)?;
        save_mask(&s.truth, a.out.join(&truth)).map_err(CliError::io)?;
        samples.push(ManifestSample {
            id: s.id,
            category: s.category.name().to_string(),
            image,
            truth,
            nodule_kinds: s.spec.nodules.iter().map(|n| n.kind).collect(),
            spec: s.spec.clone(),
        });
    }
    let manifest = Manifest {
        seed: a.seed,
        size: a.size,
        samples,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_text(&a.out.join(MANIFEST), &(text + "\n"))?;
    Ok(EXIT_OK)
}

/// Reads a directory written by `phantom`. Nodule footprints are rebuilt
/// from each sample's spec.
pub fn load_suite(dir: &Path) -> CliResult<Vec<BenchSample>> {
    let path = dir.join(MANIFEST);
    let text =
        fs::read_to_string(&path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    manifest
        .samples
        .into_iter()
        .map(|m| {
            let image = load_gray(dir.join(&m.image)).map_err(CliError::io)?;
            let truth = load_mask(dir.join(&m.truth)).map_err(CliError::io)?;
            let (_, _, footprints) = generate_phantom(&m.spec).map_err(CliError::io)?;
            let juxta_footprints: Vec<BinaryMask> = m
                .nodule_kinds
                .iter()
                .zip(footprints)
                .filter(|(k, _)| **k == NoduleKind::JuxtaPleural)
                .map(|(_, f)| f)
                .collect();
            Ok(BenchSample {
                id: m.id,
                category: m.category,
                image,
                truth,
                juxta_footprints,
            })
        })
        .collect()
}

pub fn cmd_bench(a: &BenchArgs) -> CliResult<i32> {
    let cfg = a.params.load()?;
    let methods = a
        .methods
        .iter()
        .map(|m| Method::from_name(m.trim()))
        .collect::<crate::Result<Vec<_>>>()
        .map_err(CliError::io)?;
    let corrections = a
        .corrections
        .iter()
        .map(|c| cfg.correction_named(c.trim()))
        .collect::<crate::Result<Vec<_>>>()
        .map_err(CliError::io)?;
    let samples = match &a.suite {
        Some(dir) => load_suite(dir)?,
        None => default_suite_sized(a.n, a.suite_seed, a.size)
            .map_err(CliError::io)?
            .into_iter()
            .map(BenchSample::from)
            .collect(),
    };
    let workers = workers_from_env().map_err(CliError::io)?;
    let report = run_bench(&samples, &methods, &corrections, &cfg.pipeline(), workers)
        .map_err(CliError::io)?;

    let csv = report.to_csv().map_err(CliError::io)?;
    write_text(&a.out.join("bench.csv"), &csv)?;
    write_text(&a.out.join("bench.json"), &(report.rows_json() + "\n"))?;
    for c in &report.cells {
        let dsc = c.dsc_pct.map_or("-".into(), |s| format!("{:.2}", s.mean));
        let hd = c.hd.map_or("-".into(), |s| format!("{:.2}", s.mean));
        println!(
            "{:<10} {:<13} DSC% {:>7} HD {:>6} failed {}/{}",
            c.method.name(),
            c.correction,
            dsc,
            hd,
            c.failed,
            c.samples
        );
    }
    if report.passed() {
        Ok(EXIT_OK)
    } else {
        eprintln!(
            "lungseg: only {:.1}% of runs succeeded",
            100.0 * report.success_rate()
        );
        Ok(EXIT_PARTIAL)
    }
}
