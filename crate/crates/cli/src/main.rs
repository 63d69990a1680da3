//! `silmorph` command-line driver.
//!
//! Exit codes: 0 success, 2 configuration error, 3 stage error, 4 I/O or
//! parse error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use silmorph::error::{Error, Result};
use silmorph::geometry::{save_mesh, shapes};
use silmorph::imaging::ViewName;
use silmorph::pipeline::{self, Overrides, SynthConfig};

#[derive(Parser)]
#[command(name = "silmorph", version, about = "Silhouette-driven implant reconstruction")]
struct Cli {
    /// Root that relative case and output paths are resolved against.
    #[arg(long, global = true, env = pipeline::OUTPUT_ROOT_ENV)]
    output_root: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON document whose keys override the stored configuration.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Random seed (overrides the configured one).
    #[arg(long, value_name = "K")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic case with known ground truth.
    Synth {
        #[arg(long, value_name = "DIR")]
        case: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Detector side in pixels.
        #[arg(long, value_name = "PX")]
        resolution: Option<u32>,
        /// Template mesh (STL).
        #[arg(long, value_name = "STL")]
        template: Option<PathBuf>,
        /// Truth = template scaled by this factor.
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long)]
        case_id: Option<String>,
    },
    /// Threshold four mask images into a case's contours.
    ImportMasks {
        #[arg(long, value_name = "DIR")]
        case: PathBuf,
        /// VIEW=FILE, once per view (views: AP, ML, ROT+45, ROT-45).
        #[arg(long = "mask", value_name = "VIEW=FILE", required = true, value_parser = parse_mask)]
        masks: Vec<(ViewName, PathBuf)>,
    },
    /// Register and morph the template of one or more cases.
    Reconstruct {
        #[arg(long = "case", value_name = "DIR", required = true)]
        cases: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
        /// Cases run concurrently.
        #[arg(long, default_value_t = 1, value_name = "N")]
        jobs: usize,
    },
    /// Compare reconstructed meshes against their ground truth.
    Evaluate {
        #[arg(long = "case", value_name = "DIR", required = true)]
        cases: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1, value_name = "N")]
        jobs: usize,
    },
    /// Summarize evaluated cases in a cohort table.
    Cohort {
        #[arg(long = "case", value_name = "DIR", required_unless_present = "from_csv")]
        cases: Vec<PathBuf>,
        /// Summarize an existing `case,rms_mm,largest_mm` table instead.
        #[arg(long, value_name = "CSV", conflicts_with = "cases")]
        from_csv: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Compare a reconstructed kinematic trace with a reference one.
    Kinematics {
        /// Trace CSV or per-frame pose JSON.
        #[arg(long, value_name = "FILE")]
        recon: PathBuf,
        #[arg(long, value_name = "FILE")]
        truth: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Write one of the built-in template shapes as STL.
    Shape {
        #[arg(value_enum)]
        kind: ShapeKind,
        /// Overall size in mm (lobed) or the x semi-axis (ellipsoid).
        #[arg(long, default_value_t = 30.0)]
        size: f64,
        #[arg(long, default_value_t = 4)]
        subdivisions: u32,
        #[arg(long, value_name = "STL")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeKind {
    Lobed,
    Ellipsoid,
    Sphere,
}

fn parse_mask(s: &str) -> std::result::Result<(ViewName, PathBuf), String> {
    let (view, file) = s.split_once('=').ok_or_else(|| format!("expected VIEW=FILE, got `{s}`"))?;
    let view = view.parse::<ViewName>().map_err(|e| e.to_string())?;
    Ok((view, PathBuf::from(file)))
}

fn resolve(root: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

fn overrides(common: &Common) -> Result<Overrides> {
    let mut o = Overrides::from_file(common.config.as_deref())?;
    o.seed = common.seed;
    Ok(o)
}

fn print(value: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&value).expect("value serializes"));
}

/// Runs `f` on every case; reports each failure and returns the first.
fn batch<T: serde::Serialize + Send>(
    cases: &[PathBuf],
    jobs: usize,
    f: impl Fn(&Path) -> Result<T> + Sync,
) -> Result<()> {
    let results = pipeline::for_each_case(cases, jobs, f);
    let mut first_err = None;
    let mut out = Vec::new();
    for (case, r) in cases.iter().zip(results) {
        match r {
            Ok(v) => out.push(json!({"case": case, "result": v})),
            Err(e) => {
                eprintln!("{}: {e}", case.display());
                first_err.get_or_insert(e);
            }
        }
    }
    if !out.is_empty() {
        print(serde_json::Value::Array(out));
    }
    first_err.map_or(Ok(()), Err)
}

fn run(cli: Cli) -> Result<()> {
    let root = cli.output_root.unwrap_or_else(|| PathBuf::from("."));
    match cli.command {
        Command::Synth {
            case,
            common,
            resolution,
            template,
            scale,
            case_id,
        } => {
            let mut cfg = match &common.config {
                Some(p) => SynthConfig::load(p)?,
                None => SynthConfig::default(),
            };
            let o = Overrides {
                seed: common.seed,
                resolution,
                ..Overrides::default()
            };
            cfg.apply(&o)?;
            if let Some(t) = template {
                cfg.template = Some(t);
            }
            if let Some(s) = scale {
                cfg.scale = s;
            }
            if let Some(id) = case_id {
                cfg.case_id = id;
            }
            let dir = resolve(&root, &case);
            let synth = pipeline::cmd_synth(&cfg, &dir)?;
            print(json!({
                "case": dir,
                "case_id": synth.case_id,
                "scale": synth.scale,
                "views": synth.views.len(),
            }));
        }
        Command::ImportMasks { case, masks } => {
            let dir = resolve(&root, &case);
            let contours = pipeline::cmd_import_masks(&dir, &masks)?;
            print(json!({
                "case": dir,
                "contour_points": contours.iter().map(|c| c.len()).collect::<Vec<_>>(),
            }));
        }
        Command::Reconstruct { cases, common, jobs } => {
            let o = overrides(&common)?;
            let dirs: Vec<_> = cases.iter().map(|c| resolve(&root, c)).collect();
            batch(&dirs, jobs, |d| pipeline::cmd_reconstruct(d, &o))?;
        }
        Command::Evaluate { cases, common, jobs } => {
            let o = overrides(&common)?;
            let dirs: Vec<_> = cases.iter().map(|c| resolve(&root, c)).collect();
            batch(&dirs, jobs, |d| pipeline::cmd_evaluate(d, &o))?;
        }
        Command::Cohort { cases, from_csv, out } => {
            let out = resolve(&root, out.as_deref().unwrap_or(Path::new(".")));
            let summary = match from_csv {
                Some(csv) => pipeline::cmd_cohort_from_csv(&csv, &out)?,
                None => {
                    let dirs: Vec<_> = cases.iter().map(|c| resolve(&root, c)).collect();
                    pipeline::cmd_cohort(&dirs, &out)?
                }
            };
            print(json!({
                "cases": summary.cases.len(),
                "rms_mm": summary.rms_mm,
                "largest_mm": summary.largest_mm,
            }));
        }
        Command::Kinematics { recon, truth, out } => {
            let out = resolve(&root, out.as_deref().unwrap_or(Path::new(".")));
            let e = pipeline::cmd_kinematics(&recon, &truth, &out)?;
            print(serde_json::to_value(&e).expect("error serializes"));
        }
        Command::Shape {
            kind,
            size,
            subdivisions,
            out,
        } => {
            if !(size > 0.0) {
                return Err(Error::Config {
                    field: "size".into(),
                    message: "must be positive".into(),
                });
            }
            let mesh = match kind {
                ShapeKind::Lobed => shapes::lobed(size, subdivisions),
                ShapeKind::Ellipsoid => shapes::ellipsoid([size, size * 0.63, size * 0.46], subdivisions),
                ShapeKind::Sphere => shapes::icosphere(size, subdivisions),
            };
            save_mesh(&mesh, resolve(&root, &out))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
