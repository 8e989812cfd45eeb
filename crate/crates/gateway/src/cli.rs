//! Command-line interface: `serve`, `replay`, `decimate`, `assess`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use palpsim_core::ctplane::CtStack;
use palpsim_core::geometry::{
    decimate, load_mesh, primitives, sampled_hausdorff, save_obj, DeformableMesh, MeshFormat,
};
use palpsim_core::session::{parse_tape, replay_session, validate_report, AssessmentReport, SessionConfig};
use palpsim_core::tissue::ScenarioKind;
use palpsim_core::validity::{
    aggregate_validity, inter_rater, test_retest, InterRater, ReliabilityInput, TestRetest,
    ValidityScoreSheet, ValiditySummary,
};

use crate::live::{EngineConfig, DEFAULT_FRAME_RATE_HZ};
use crate::server::{ClockMode, ServeConfig};

/// Samples per direction for the Hausdorff estimate printed by `decimate`.
const HAUSDORFF_SAMPLES: usize = 20_000;
/// Sheets directory entry holding reliability inputs rather than a score sheet.
pub const RELIABILITY_FILE: &str = "reliability.json";

#[derive(Debug, Parser)]
#[command(name = "palpsim", version, about = "Haptic liver-palpation training simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Host a live session over WebSocket (protocol palpsim/1).
    Serve(ServeArgs),
    /// Run a recorded probe tape through a session and write the report.
    Replay(ReplayArgs),
    /// Reduce a mesh to a triangle budget.
    Decimate(DecimateArgs),
    /// Summarise score sheets and reports.
    Assess(AssessArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8765)]
    pub port: u16,
    /// OBJ or X3D liver mesh; the built-in phantom when omitted.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// CT manifest (JSON).
    #[arg(long)]
    pub ct: Option<PathBuf>,
    /// Directory for finished reports.
    #[arg(long)]
    pub out: PathBuf,
    /// Session config template (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_FRAME_RATE_HZ)]
    pub frame_rate: u32,
    /// Step queued input immediately instead of on the wall clock.
    #[arg(long)]
    pub max_speed: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// JSON-lines probe tape.
    #[arg(long)]
    pub tape: PathBuf,
    /// Scenario kinds, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub scenario: Vec<ScenarioKind>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Session config (JSON); its seed and scenario set are replaced.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Diagnosis per scenario in presentation order; missing ones time out.
    #[arg(long)]
    pub answer: Vec<String>,
    /// Seconds taken to answer each questionnaire.
    #[arg(long, default_value_t = 20.0)]
    pub answer_elapsed: f64,
}

#[derive(Debug, Args)]
pub struct DecimateArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub target: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AssessArgs {
    #[arg(long)]
    pub reports_dir: PathBuf,
    #[arg(long)]
    pub sheets_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve(args) => serve(args),
        Command::Replay(args) => {
            let report = replay(&args)?;
            print_replay_summary(&report);
            Ok(())
        }
        Command::Decimate(args) => {
            let s = decimate_file(&args)?;
            println!("input triangles: {}", s.input_triangles);
            println!("output triangles: {}", s.output_triangles);
            println!(
                "sampled Hausdorff: {:.6} mm ({:.3}% of bounding radius)",
                s.hausdorff_mm,
                100.0 * s.hausdorff_mm / s.bounding_radius_mm
            );
            Ok(())
        }
        Command::Assess(args) => {
            let summary = assess(&args)?;
            println!(
                "{} sheets, {} reports -> {}",
                summary.validity.sheet_count,
                summary.reports.len(),
                args.out.display()
            );
            Ok(())
        }
    }
}

pub fn load_mesh_file(path: &Path) -> Result<DeformableMesh> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let format = match ext.as_str() {
        "obj" => MeshFormat::Obj,
        "x3d" => MeshFormat::X3dTriangleSet,
        other => bail!("{}: unknown mesh format `{other}` (expected .obj or .x3d)", path.display()),
    };
    load_mesh(&bytes, format).with_context(|| format!("cannot load mesh {}", path.display()))
}

fn mesh_or_phantom(path: Option<&Path>) -> Result<DeformableMesh> {
    match path {
        Some(p) => load_mesh_file(p),
        None => Ok(primitives::liver_phantom()),
    }
}

fn read_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))
}

fn write_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Runs a replay and writes the report; the report is also returned.
pub fn replay(args: &ReplayArgs) -> Result<AssessmentReport> {
    let text = fs::read_to_string(&args.tape).with_context(|| format!("cannot read {}", args.tape.display()))?;
    let tape = parse_tape(&text).with_context(|| format!("bad tape {}", args.tape.display()))?;
    let mesh = mesh_or_phantom(args.mesh.as_deref())?;
    let mut config = match &args.config {
        Some(path) => read_json::<SessionConfig>(path)?,
        None => SessionConfig::new(args.seed, args.scenario.clone()),
    };
    config.seed = args.seed;
    config.scenario_set = args.scenario.clone();
    let answers: Vec<Option<String>> = args.answer.iter().cloned().map(Some).collect();
    let (report, _) = replay_session(config, mesh, &tape, &answers, args.answer_elapsed)?;
    report.write_to(&args.report)?;
    Ok(report)
}

fn print_replay_summary(report: &AssessmentReport) {
    for r in &report.scenarios {
        let outcome = match r.fail_time_s {
            Some(t) => format!("FAILED at t = {t:.3} s"),
            None => format!("score {:.2}", r.score),
        };
        println!(
            "{:>2}. {:<14} peaks {:>2}  warnings {:>2}  {outcome}",
            r.order_index + 1,
            r.kind.as_str(),
            r.peaks.len(),
            r.warning_count
        );
    }
    println!("total score {:.2}", report.total_score);
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecimateSummary {
    pub input_triangles: usize,
    pub output_triangles: usize,
    pub hausdorff_mm: f64,
    pub bounding_radius_mm: f64,
}

pub fn decimate_file(args: &DecimateArgs) -> Result<DecimateSummary> {
    let mesh = load_mesh_file(&args.input)?;
    let result = decimate(&mesh, args.target as usize)?;
    fs::write(&args.out, save_obj(&result.mesh)).with_context(|| format!("cannot write {}", args.out.display()))?;
    Ok(DecimateSummary {
        input_triangles: mesh.triangle_count(),
        output_triangles: result.mesh.triangle_count(),
        hausdorff_mm: sampled_hausdorff(&mesh, &result.mesh, HAUSDORFF_SAMPLES, 0),
        bounding_radius_mm: mesh.bounding_radius(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportDigest {
    pub file: String,
    pub session_id: String,
    pub seed: u64,
    pub total_score: f64,
    pub failed_scenarios: usize,
    pub scores: BTreeMap<ScenarioKind, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssessmentSummary {
    pub validity: ValiditySummary,
    /// Raters x metrics, over the metrics every sheet scores.
    pub inter_rater: Option<InterRater>,
    pub test_retest: Option<TestRetest>,
    pub reports: Vec<ReportDigest>,
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot list {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn assess(args: &AssessArgs) -> Result<AssessmentSummary> {
    let mut sheets: Vec<ValidityScoreSheet> = Vec::new();
    let mut reliability = ReliabilityInput::default();
    for path in json_files(&args.sheets_dir)? {
        if path.file_name().is_some_and(|n| n == RELIABILITY_FILE) {
            reliability = read_json(&path)?;
        } else {
            sheets.push(read_json(&path)?);
        }
    }
    let validity = aggregate_validity(&sheets)?;

    let mut inter = match &reliability.inter_rater {
        Some(matrix) => Some(inter_rater(matrix)?),
        None => None,
    };
    if inter.is_none() && sheets.len() >= 2 {
        let common: Vec<_> = validity
            .overall
            .keys()
            .filter(|m| sheets.iter().all(|s| s.scores.contains_key(m)))
            .copied()
            .collect();
        if !common.is_empty() {
            let matrix: Vec<Vec<f64>> = sheets
                .iter()
                .map(|s| common.iter().map(|m| s.scores[m] as f64).collect())
                .collect();
            inter = Some(inter_rater(&matrix)?);
        }
    }
    let retest = match &reliability.test_retest {
        Some(pairs) => Some(test_retest(pairs)?),
        None => None,
    };

    let mut reports = Vec::new();
    for path in json_files(&args.reports_dir)? {
        let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
        let report = validate_report(&text).with_context(|| format!("invalid report {}", path.display()))?;
        reports.push(ReportDigest {
            file: path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            session_id: report.session_id.clone(),
            seed: report.seed,
            total_score: report.total_score,
            failed_scenarios: report.scenarios.iter().filter(|r| r.failed).count(),
            scores: report.scenarios.iter().map(|r| (r.kind, r.score)).collect(),
        });
    }
    let summary = AssessmentSummary {
        validity,
        inter_rater: inter,
        test_retest: retest,
        reports,
    };
    write_pretty(&args.out, &summary)?;
    Ok(summary)
}

fn serve(args: ServeArgs) -> Result<()> {
    let mesh = mesh_or_phantom(args.mesh.as_deref())?;
    let ct = match &args.ct {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            Some(CtStack::from_json(&text)?)
        }
        None => None,
    };
    let session = match &args.config {
        Some(path) => Some(read_json::<SessionConfig>(path)?),
        None => None,
    };
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let engine = EngineConfig {
        mesh,
        ct,
        session,
        frame_rate_hz: args.frame_rate,
        report_dir: Some(args.out.clone()),
    };
    engine.validate().map_err(anyhow::Error::msg)?;
    let config = ServeConfig {
        engine,
        clock: if args.max_speed { ClockMode::MaxSpeed } else { ClockMode::RealTime },
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", args.port))
            .await
            .with_context(|| format!("cannot bind port {}", args.port))?;
        eprintln!("palpsim/1 listening on {}", listener.local_addr()?);
        crate::server::serve(listener, config).await?;
        Ok(())
    })
}
