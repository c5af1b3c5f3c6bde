mod config;
mod render;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use polypscan::eval::manifest::load_manifest;
use polypscan::eval::report::{write_reports, write_roc_files};
use polypscan::eval::score::score_dataset;
use polypscan::eval::{self, report_from_scores, roc, EvaluateOptions, OperatingPoint};
use polypscan::exec::{with_threads, Execution};
use polypscan::params::StudyParam;
use polypscan::pipeline::process_path;
use polypscan::synth::{self, DatasetCounts, NormalKind, PhantomSpec};
use polypscan::{io, Error, FrameDecision, PipelineParams};

use config::{load_params, ExitClass, Failure};
use render::{render_overlay, Style};

#[derive(Debug, Parser)]
#[command(name = "polypscan", version, about = "Polyp detection in capsule endoscopy frames")]
struct Cli {
    /// Parameter file of `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    params: Option<PathBuf>,

    /// Parameter override, applied after the file; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,

    /// Worker threads for dataset commands.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct DatasetArgs {
    #[arg(long)]
    manifest: PathBuf,

    /// JSON-lines score cache, reused when the parameters match.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CalibrationArgs {
    /// Patient whose frames calibrate `R_P`.
    #[arg(long)]
    train_patient: String,

    /// Target specificity in percent.
    #[arg(long, default_value_t = 90.0)]
    target_spec: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PhantomKind {
    Flat,
    Folds,
    TexturedFolds,
    Bubbles,
    Polyp,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Classify frames and print one decision JSON line per frame.
    Classify {
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Score a dataset, calibrate R_P and write the reports.
    Evaluate {
        #[command(flatten)]
        data: DatasetArgs,
        #[command(flatten)]
        calibration: CalibrationArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also run the robustness study over these parameters.
        #[arg(long, value_delimiter = ',')]
        study: Vec<StudyParam>,
    },
    /// Write per-frame and per-polyp ROC curves.
    Roc {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the smallest R_P reaching the target specificity.
    Calibrate {
        #[command(flatten)]
        data: DatasetArgs,
        #[command(flatten)]
        calibration: CalibrationArgs,
    },
    /// One-at-a-time +10% robustness study.
    Sensitivity {
        #[command(flatten)]
        data: DatasetArgs,
        /// Calibrate R_P on this patient first instead of using the parameter value.
        #[arg(long)]
        train_patient: Option<String>,
        #[arg(long, default_value_t = 90.0)]
        target_spec: f64,
        /// Parameters to perturb; all seven by default.
        #[arg(long, value_delimiter = ',')]
        study: Vec<StudyParam>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a phantom dataset, or a single frame with --kind.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long, default_value_t = 16)]
        sequences: usize,
        #[arg(long, default_value_t = 10)]
        frames: usize,
        #[arg(long, default_value_t = 400)]
        normals: usize,
        #[arg(long, value_enum)]
        kind: Option<PhantomKind>,
        /// Polyp radius in pixels for --kind polyp.
        #[arg(long, default_value_t = 40.0)]
        radius: f64,
    },
    /// Draw ellipses, centres of mass and the R_max circle onto a frame.
    Render {
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Reuse a stored decision instead of running the pipeline.
        #[arg(long)]
        decision: Option<PathBuf>,
        #[arg(long)]
        no_ellipses: bool,
        #[arg(long)]
        no_markers: bool,
        #[arg(long)]
        no_circle: bool,
    },
}

type Outcome = Result<(), Failure>;

fn print_json(value: &impl serde::Serialize) -> Outcome {
    let line = serde_json::to_string(value).map_err(|e| Failure::from(Error::from(e)))?;
    println!("{line}");
    Ok(())
}

fn frame_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn classify(images: &[PathBuf], params: &PipelineParams) -> Outcome {
    let mut first_failure = None;
    for path in images {
        match process_path(&frame_id(path), path, params, Execution::default()) {
            Ok(d) => print_json(&d)?,
            Err(e) => {
                let f = Failure::from(e);
                eprintln!("{}", f.json_line());
                first_failure.get_or_insert(f);
            }
        }
    }
    first_failure.map_or(Ok(()), Err)
}

fn evaluate(data: &DatasetArgs, cal: &CalibrationArgs, out: &Path, study: &[StudyParam], params: &PipelineParams) -> Outcome {
    let records = load_manifest(&data.manifest)?;
    let opts = EvaluateOptions {
        cache: data.cache.clone(),
        study: study.to_vec(),
        ..EvaluateOptions::new(cal.train_patient.clone(), cal.target_spec)
    };
    let (report, _) = eval::evaluate(&records, params, &opts)?;
    write_reports(&report, out)?;
    print_json(&serde_json::json!({
        "r_p": report.r_p,
        "training": report.training,
        "held_out": report.held_out,
        "overall": report.overall,
        "auc_frame": report.roc_frame.auc,
        "failed": report.failed.len(),
        "out": out,
    }))
}

fn roc_curves(data: &DatasetArgs, out: &Path, params: &PipelineParams) -> Outcome {
    let records = load_manifest(&data.manifest)?;
    let run = score_dataset(&records, params, data.cache.as_deref(), Execution::default())?;
    let frame = eval::roc_per_frame(&run.scores)?;
    let polyp = eval::roc_per_polyp(&run.scores).ok();
    write_roc_files(&frame, polyp.as_ref(), out)?;
    print_json(&serde_json::json!({
        "auc_frame": frame.auc,
        "auc_polyp": polyp.as_ref().map(|p| p.auc),
        "points": frame.points.len(),
        "failed": run.failed.len(),
        "out": out,
    }))
}

fn calibrate(data: &DatasetArgs, cal: &CalibrationArgs, params: &PipelineParams) -> Outcome {
    let records = load_manifest(&data.manifest)?;
    let run = score_dataset(&records, params, data.cache.as_deref(), Execution::default())?;
    let opts = EvaluateOptions::new(cal.train_patient.clone(), cal.target_spec);
    let report = report_from_scores(&run.scores, run.failed, params, &opts)?;
    print_json(&serde_json::json!({
        "train_patient": report.train_patient,
        "target_spec": report.target_spec,
        "r_p": report.r_p,
        "training": report.training,
        "held_out": report.held_out,
    }))
}

fn sensitivity(
    data: &DatasetArgs,
    train_patient: Option<&str>,
    target_spec: f64,
    study: &[StudyParam],
    out: &Path,
    params: &PipelineParams,
) -> Outcome {
    let records = load_manifest(&data.manifest)?;
    let mut base = *params;
    if let Some(patient) = train_patient {
        let run = score_dataset(&records, params, data.cache.as_deref(), Execution::default())?;
        let training: Vec<_> = run.scores.iter().filter(|s| s.patient == patient).cloned().collect();
        base.r_p = roc::select_threshold(&training, target_spec)?;
        log::info!("calibrated R_P = {} on patient {patient}", base.r_p);
    }
    let study = if study.is_empty() { StudyParam::ALL.to_vec() } else { study.to_vec() };
    let report = eval::sensitivity_study(&records, &base, &study, Execution::default())?;
    std::fs::create_dir_all(out).map_err(|e| Failure::from(Error::io(out, e)))?;
    let path = out.join("sensitivity.json");
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| Failure::from(Error::from(e)))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Failure::from(Error::io(&path, e)))?;
    let base_point: OperatingPoint = report.base;
    print_json(&serde_json::json!({ "base": base_point, "rows": report.rows.len(), "out": path }))
}

fn single_phantom(kind: PhantomKind, size: usize, radius: f64, seed: u64) -> PhantomSpec {
    match kind {
        PhantomKind::Flat => PhantomSpec::flat(size, seed),
        PhantomKind::Folds => synth::normal_spec(NormalKind::Folds, size, seed),
        PhantomKind::TexturedFolds => synth::normal_spec(NormalKind::TexturedFolds, size, seed),
        PhantomKind::Bubbles => synth::normal_spec(NormalKind::Bubbles, size, seed),
        PhantomKind::Polyp => synth::polyp_spec(size, radius, seed),
    }
}

fn generate(out: &Path, seed: u64, size: usize, counts: DatasetCounts, kind: Option<PhantomKind>, radius: f64) -> Outcome {
    match kind {
        Some(kind) => {
            let phantom = synth::generate_frame(&single_phantom(kind, size, radius, seed))?;
            io::write_rgb(&phantom.image, out)?;
            print_json(&serde_json::json!({
                "image": out,
                "label": phantom.truth.label,
                "polyp_center": phantom.truth.polyp_center,
                "polyp_radius": phantom.truth.polyp_radius,
            }))
        }
        None => {
            let records = synth::generate_dataset(counts, size, seed, out, Execution::default())?;
            print_json(&serde_json::json!({
                "manifest": synth::manifest_path(out),
                "frames": records.len(),
            }))
        }
    }
}

fn render_frame(image: &Path, out: &Path, decision: Option<&Path>, style: Style, params: &PipelineParams) -> Outcome {
    let rgb = io::read_rgb(image)?;
    let decision: FrameDecision = match decision {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::from(Error::io(p, e)))?;
            serde_json::from_str(text.trim()).map_err(|e| {
                Failure::from(Error::Parse {
                    line: e.line(),
                    message: e.to_string(),
                })
            })?
        }
        None => process_path(&frame_id(image), image, params, Execution::default())?,
    };
    io::write_rgb(&render_overlay(&rgb, &decision, style), out)?;
    print_json(&serde_json::json!({ "out": out, "label": decision.label, "r_max": decision.r_max }))
}

fn run(cli: &Cli) -> Outcome {
    let params = load_params(cli.params.as_deref(), &cli.sets)?;
    match &cli.command {
        Command::Classify { images } => classify(images, &params),
        Command::Evaluate {
            data,
            calibration,
            out,
            study,
        } => evaluate(data, calibration, out, study, &params),
        Command::Roc { data, out } => roc_curves(data, out, &params),
        Command::Calibrate { data, calibration } => calibrate(data, calibration, &params),
        Command::Sensitivity {
            data,
            train_patient,
            target_spec,
            study,
            out,
        } => sensitivity(data, train_patient.as_deref(), *target_spec, study, out, &params),
        Command::Synth {
            out,
            seed,
            size,
            sequences,
            frames,
            normals,
            kind,
            radius,
        } => {
            let counts = DatasetCounts {
                sequences: *sequences,
                frames_per_sequence: *frames,
                normals: *normals,
            };
            generate(out, *seed, *size, counts, *kind, *radius)
        }
        Command::Render {
            image,
            out,
            decision,
            no_ellipses,
            no_markers,
            no_circle,
        } => {
            let style = Style {
                ellipses: !no_ellipses,
                markers: !no_markers,
                circle: !no_circle,
            };
            render_frame(image, out, decision.as_deref(), style, &params)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let failure = Failure::config("usage", e.to_string().trim().to_string());
            eprintln!("{}", failure.json_line());
            return ExitCode::from(ExitClass::Config as u8);
        }
    };
    match with_threads(cli.threads, || run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.json_line());
            ExitCode::from(f.class as u8)
        }
    }
}
