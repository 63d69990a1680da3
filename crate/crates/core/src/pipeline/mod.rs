//! Case directories and the commands run on them.
//!
//! A case directory looks like
//!
//! ```text
//! case.json                 configuration (paths relative to the directory)
//! template.stl  truth.stl   meshes (truth optional)
//! init_pose.json            starting object → world pose (optional)
//! views/{ap,ml,rot+45,rot-45}/camera.json, mask.pgm, contour.json, pose_true.json
//! registration.json  morphed.stl  morph_history.csv  morph_summary.json  displacements.csv
//! report.json  errors.csv  heatmap.ply  alignment.json
//! case_result.json  run_log.jsonl
//! ```
//!
//! Every command appends one line per stage to `run_log.jsonl`.

mod runlog;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::evaluation::{
    error_report, export_heatmap, icp_align, load_cohort_csv, summarize_cohort, vertex_surface_errors,
    CohortSummary, ErrorReport, IcpConfig, IcpResult,
};
use crate::geometry::{load_mesh, save_mesh, transform_mesh, RigidTransform, SurfaceIndex, TriMesh};
use crate::imaging::{
    extract_contour, generate_synthetic_case, import_mask, Camera, Contour, NoiseConfig, SyntheticCase, View,
    ViewName, DEFAULT_ISOCENTER_MM,
};
use crate::kinematics::{compare_traces, reduce_trace, FramePoses, KinematicsError, KinematicsTrace};
use crate::morphing::{morph, save_displacements, save_history, MorphConfig, MorphSummary};
use crate::registration::{register_multi_view, RegistrationConfig, RegistrationResult};

pub use runlog::{LogEntry, RunLog, RUN_LOG};

pub const CASE_FILE: &str = "case.json";

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "SILMORPH_OUTPUT_ROOT";

/// `$SILMORPH_OUTPUT_ROOT`, or the current directory.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Per-case configuration stored as `case.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseConfig {
    pub case_id: String,
    pub template: PathBuf,
    #[serde(default)]
    pub truth: Option<PathBuf>,
    /// `view.json`-style camera file of each view; the view's contour is the
    /// sibling `contour.json`.
    pub views: BTreeMap<ViewName, PathBuf>,
    /// Starting pose; when absent the template centroid is placed at the
    /// isocenter.
    #[serde(default)]
    pub init_pose: Option<PathBuf>,
    #[serde(default)]
    pub registration: RegistrationConfig,
    #[serde(default)]
    pub morph: MorphConfig,
    #[serde(default)]
    pub icp: IcpConfig,
    /// Seeds the registration restarts (replaces `registration.seed`).
    #[serde(default)]
    pub seed: u64,
}

impl CaseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.case_id.is_empty() {
            return Err(Error::config("case_id", "must not be empty"));
        }
        let missing: Vec<&str> = ViewName::ALL
            .iter()
            .filter(|v| !self.views.contains_key(v))
            .map(|v| v.label())
            .collect();
        if !missing.is_empty() {
            return Err(Error::config("views", format!("missing view(s): {}", missing.join(", "))));
        }
        self.registration.validate()?;
        self.morph.validate()?;
        Ok(())
    }

    /// Registration settings with the case seed applied.
    pub fn registration_config(&self) -> RegistrationConfig {
        RegistrationConfig {
            seed: self.seed,
            ..self.registration.clone()
        }
    }
}

/// Command-line overrides applied on top of a stored configuration.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// JSON document merged key-by-key over the stored configuration.
    pub config: Option<Value>,
    pub seed: Option<u64>,
    pub resolution: Option<u32>,
}

impl Overrides {
    pub fn from_file(path: Option<&Path>) -> Result<Self> {
        let config = match path {
            Some(p) => Some(read_json_value(p)?),
            None => None,
        };
        Ok(Overrides {
            config,
            ..Overrides::default()
        })
    }
}

fn read_json_value(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Recursive object merge: keys of `patch` replace those of `base`.
pub fn merge_json(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge_json(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p.clone(),
    }
}

fn config_from_value<T: serde::de::DeserializeOwned>(value: Value, source: &Path) -> Result<T> {
    serde_json::from_value(value).map_err(|e| {
        // serde reports e.g. "missing field `template`"
        let msg = e.to_string();
        let field = msg
            .split('`')
            .nth(1)
            .unwrap_or("<document>")
            .to_string();
        Error::config(field, format!("{msg} ({})", source.display()))
    })
}

/// Loads `case.json` with overrides applied.
pub fn load_case_config(case_dir: &Path, overrides: &Overrides) -> Result<CaseConfig> {
    let path = case_dir.join(CASE_FILE);
    let mut value = read_json_value(&path)?;
    if let Some(patch) = &overrides.config {
        merge_json(&mut value, patch);
    }
    let mut cfg: CaseConfig = config_from_value(value, &path)?;
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn read_mesh(path: &Path) -> Result<TriMesh> {
    load_mesh(path).map_err(|e| match e {
        Error::MalformedStl(m) => Error::MalformedStl(format!("{}: {m}", path.display())),
        e => e,
    })
}

/// Places the template centroid at the isocenter without rotating it.
pub fn centered_pose(template: &TriMesh) -> RigidTransform {
    RigidTransform::from_translation(-template.centroid().coords)
}

// ---------------------------------------------------------------- synth

/// Settings for generating a synthetic case with known ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub case_id: String,
    pub template: Option<PathBuf>,
    /// Truth = template scaled about its centroid by this factor.
    pub scale: f64,
    /// Detector side in pixels; the field of view stays that of `camera`.
    pub resolution: u32,
    pub camera: Camera,
    pub isocenter_mm: f64,
    /// True object → world pose; default centers the template at the isocenter.
    pub object_pose: Option<RigidTransform>,
    /// The written starting pose is the true pose perturbed by up to this
    /// much per rotation axis (about the object centroid) and per translation axis.
    pub init_perturbation_deg: f64,
    pub init_perturbation_mm: f64,
    pub boundary_flip_probability: f64,
    /// Seeds mask noise, the starting-pose perturbation and registration.
    pub seed: u64,
    pub registration: RegistrationConfig,
    pub morph: MorphConfig,
    pub icp: IcpConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            case_id: "case".into(),
            template: None,
            scale: 1.0,
            resolution: 1024,
            camera: Camera::default(),
            isocenter_mm: DEFAULT_ISOCENTER_MM,
            object_pose: None,
            init_perturbation_deg: 5.0,
            init_perturbation_mm: 5.0,
            boundary_flip_probability: 0.0,
            seed: 0,
            registration: RegistrationConfig::default(),
            morph: MorphConfig::default(),
            icp: IcpConfig::default(),
        }
    }
}

impl SynthConfig {
    /// Reads a config file; a relative `template` is taken relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: SynthConfig = config_from_value(read_json_value(path)?, path)?;
        if let (Some(t), Some(dir)) = (&cfg.template, path.parent()) {
            if t.is_relative() {
                cfg.template = Some(dir.join(t));
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(patch) = &o.config {
            let mut v = serde_json::to_value(&*self).expect("config serializes");
            merge_json(&mut v, patch);
            *self = config_from_value(v, Path::new("<override>"))?;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(r) = o.resolution {
            self.resolution = r;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let template = self
            .template
            .as_ref()
            .ok_or_else(|| Error::config("template", "no template mesh path given"))?;
        if !template.is_file() {
            return Err(Error::config("template", format!("{} does not exist", template.display())));
        }
        if self.case_id.is_empty() {
            return Err(Error::config("case_id", "must not be empty"));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::config("scale", "must be positive"));
        }
        if self.resolution < 16 {
            return Err(Error::config("resolution", "must be at least 16 px"));
        }
        if !(self.isocenter_mm > 0.0) {
            return Err(Error::config("isocenter_mm", "must be positive"));
        }
        if !(self.init_perturbation_deg >= 0.0) || !(self.init_perturbation_mm >= 0.0) {
            return Err(Error::config("init_perturbation_deg", "perturbations must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.boundary_flip_probability) {
            return Err(Error::config("boundary_flip_probability", "must lie in [0, 1]"));
        }
        self.camera.validate().map_err(|e| Error::config("camera", e.to_string()))?;
        self.registration.validate()?;
        self.morph.validate()
    }
}

fn perturbed_pose(pose: &RigidTransform, centroid: &nalgebra::Point3<f64>, deg: f64, mm: f64, seed: u64) -> RigidTransform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // views use streams 0..4 for mask noise
    rng.set_stream(4);
    let mut draw = |r: f64| if r > 0.0 { rng.gen_range(-r..=r) } else { 0.0 };
    let (rx, ry, rz) = (draw(deg), draw(deg), draw(deg));
    let t = Vector3::new(draw(mm), draw(mm), draw(mm));
    let dq = UnitQuaternion::from_euler_angles(rx.to_radians(), ry.to_radians(), rz.to_radians());
    let c = pose.apply_point(centroid).coords;
    RigidTransform::from_quaternion(dq * pose.quaternion(), dq * (pose.translation() - c) + c + t)
}

/// Writes a synthetic case into `case_dir`: meshes, per-view camera, mask,
/// contour and true pose, a perturbed starting pose and `case.json`.
pub fn cmd_synth(cfg: &SynthConfig, case_dir: &Path) -> Result<SyntheticCase> {
    cfg.validate()?;
    create_dir(case_dir)?;
    let log = RunLog::in_dir(case_dir);
    let template = log.stage("load", |_| read_mesh(cfg.template.as_ref().unwrap()))?;
    let camera = cfg.camera.with_resolution(cfg.resolution);
    let views = View::standard_set(camera, cfg.isocenter_mm);
    let object_pose = cfg.object_pose.unwrap_or_else(|| centered_pose(&template));
    let case = log.stage("synthesize", |_| {
        let noise = NoiseConfig {
            boundary_flip_probability: cfg.boundary_flip_probability,
            seed: cfg.seed,
        };
        generate_synthetic_case(&cfg.case_id, &template, cfg.scale, &views, &object_pose, &noise)
    })?;
    log.stage("write", |_| {
        save_mesh(&case.template, case_dir.join("template.stl"))?;
        save_mesh(&case.truth, case_dir.join("truth.stl"))?;
        write_json(&case_dir.join("object_pose_true.json"), &case.object_pose)?;
        let init = perturbed_pose(
            &case.object_pose,
            &case.template.centroid(),
            cfg.init_perturbation_deg,
            cfg.init_perturbation_mm,
            cfg.seed,
        );
        write_json(&case_dir.join("init_pose.json"), &init)?;
        let mut view_paths = BTreeMap::new();
        for v in &case.views {
            let rel = Path::new("views").join(v.view.name().dir_name());
            let dir = case_dir.join(&rel);
            create_dir(&dir)?;
            write_json(&dir.join("camera.json"), &v.view)?;
            v.mask.save_pgm(dir.join("mask.pgm"))?;
            v.contour.save(dir.join("contour.json"))?;
            write_json(&dir.join("pose_true.json"), &v.pose_true)?;
            view_paths.insert(v.view.name(), rel.join("camera.json"));
        }
        let case_cfg = CaseConfig {
            case_id: cfg.case_id.clone(),
            template: "template.stl".into(),
            truth: Some("truth.stl".into()),
            views: view_paths,
            init_pose: Some("init_pose.json".into()),
            registration: cfg.registration.clone(),
            morph: cfg.morph.clone(),
            icp: cfg.icp.clone(),
            seed: cfg.seed,
        };
        write_json(&case_dir.join(CASE_FILE), &case_cfg)
    })?;
    Ok(case)
}

// ---------------------------------------------------------------- import-masks

/// Thresholds four grayscale masks into the case's `views/*/mask.pgm` and
/// extracts their contours. Fragmented masks keep their largest component
/// and are flagged in the run log.
pub fn cmd_import_masks(case_dir: &Path, masks: &[(ViewName, PathBuf)]) -> Result<Vec<Contour>> {
    let log = RunLog::in_dir(case_dir);
    log.stage("import-masks", |warnings| {
        let mut by_view: BTreeMap<ViewName, &PathBuf> = BTreeMap::new();
        for (v, p) in masks {
            if by_view.insert(*v, p).is_some() {
                return Err(Error::config("masks", format!("view {v} given more than once")));
            }
        }
        let missing: Vec<&str> = ViewName::ALL
            .iter()
            .filter(|v| !by_view.contains_key(v))
            .map(|v| v.label())
            .collect();
        if !missing.is_empty() {
            return Err(Error::config("masks", format!("missing view(s): {}", missing.join(", "))));
        }
        let mut out = Vec::with_capacity(4);
        for (view, path) in by_view {
            let in_view = |e| Error::in_view(view.label(), e);
            let mask = import_mask(path).map_err(in_view)?;
            if mask.is_empty() {
                return Err(in_view(Error::EmptyMask));
            }
            let dir = case_dir.join("views").join(view.dir_name());
            create_dir(&dir)?;
            let camera_path = dir.join("camera.json");
            if camera_path.is_file() {
                let v: View = read_json(&camera_path).map_err(in_view)?;
                if (v.camera.width_px, v.camera.height_px) != (mask.width(), mask.height()) {
                    return Err(in_view(Error::InvalidArgument(format!(
                        "mask is {}x{} but the camera is {}x{}",
                        mask.width(),
                        mask.height(),
                        v.camera.width_px,
                        v.camera.height_px
                    ))));
                }
            }
            let contour = extract_contour(&mask).map_err(in_view)?;
            if contour.fragmented {
                warnings.push(format!(
                    "{view}: mask has several components; the largest was used"
                ));
            }
            mask.save_pgm(dir.join("mask.pgm"))?;
            contour.save(dir.join("contour.json"))?;
            out.push(contour);
        }
        Ok(out)
    })
}

// ---------------------------------------------------------------- reconstruct

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case_id: String,
    pub registration: RegistrationResult,
    pub morph: MorphSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ErrorReport>,
    /// Written files, relative to the case directory.
    pub artifacts: Vec<PathBuf>,
    /// Wall-clock seconds per stage.
    pub timings_s: BTreeMap<String, f64>,
}

struct LoadedCase {
    cfg: CaseConfig,
    template: TriMesh,
    views: Vec<View>,
    targets: Vec<Contour>,
    init: RigidTransform,
}

fn load_case(case_dir: &Path, cfg: CaseConfig) -> Result<LoadedCase> {
    let template = read_mesh(&case_dir.join(&cfg.template))?;
    let mut views = Vec::with_capacity(4);
    let mut targets = Vec::with_capacity(4);
    for (name, rel) in &cfg.views {
        let in_view = |e| Error::in_view(name.label(), e);
        let cam_path = case_dir.join(rel);
        let view: View = read_json(&cam_path).map_err(in_view)?;
        view.camera.validate().map_err(in_view)?;
        if view.name() != *name {
            return Err(in_view(Error::config(
                "views",
                format!("{} describes view {}", cam_path.display(), view.name()),
            )));
        }
        let contour_path = cam_path.with_file_name("contour.json");
        let contour = Contour::load(&contour_path).map_err(in_view)?;
        if contour.is_empty() {
            return Err(in_view(Error::EmptyContour));
        }
        views.push(view);
        targets.push(contour);
    }
    let init = match &cfg.init_pose {
        Some(p) => read_json(&case_dir.join(p))?,
        None => centered_pose(&template),
    };
    Ok(LoadedCase {
        cfg,
        template,
        views,
        targets,
        init,
    })
}

/// Registers the template to the case's four contours, morphs it and writes
/// `registration.json`, `morphed.stl`, `morph_history.csv`,
/// `morph_summary.json`, `displacements.csv` and `case_result.json`.
pub fn cmd_reconstruct(case_dir: &Path, overrides: &Overrides) -> Result<CaseResult> {
    let log = RunLog::in_dir(case_dir);
    let mut timings = BTreeMap::new();
    let mut timed = |name: &str, t: Instant| {
        timings.insert(name.to_string(), t.elapsed().as_secs_f64());
    };

    let t = Instant::now();
    let case = log.stage("load", |_| {
        let cfg = load_case_config(case_dir, overrides)?;
        load_case(case_dir, cfg)
    })?;
    timed("load", t);
    let reg_cfg = case.cfg.registration_config();

    let t = Instant::now();
    let reg = log.stage("register", |warnings| {
        let r = register_multi_view(&case.views, &case.template, &case.targets, &case.init, &reg_cfg)?;
        if !r.converged {
            warnings.push(format!("registration did not converge (mean residual {:.3} px)", r.residual_px));
        }
        Ok(r)
    })?;
    timed("register", t);

    let t = Instant::now();
    let morphed = log.stage("morph", |warnings| {
        let m = morph(&case.template, &case.views, &case.targets, &reg.pose, &case.cfg.morph, &reg_cfg)?;
        if !m.converged {
            warnings.push(format!("morph did not converge in {} iterations", m.iterations));
        }
        Ok(m)
    })?;
    timed("morph", t);

    let t = Instant::now();
    let summary = MorphSummary::from_result(&morphed);
    let artifacts = log.stage("write", |_| {
        let files = [
            "registration.json",
            "morphed.stl",
            "morph_history.csv",
            "morph_summary.json",
            "displacements.csv",
        ];
        reg.save(case_dir.join(files[0]))?;
        save_mesh(&morphed.mesh, case_dir.join(files[1]))?;
        save_history(case_dir.join(files[2]), &morphed.history_mm)?;
        summary.save(case_dir.join(files[3]))?;
        save_displacements(case_dir.join(files[4]), &morphed.displacements)?;
        Ok(files.iter().map(PathBuf::from).collect::<Vec<_>>())
    })?;
    timed("write", t);

    let result = CaseResult {
        case_id: case.cfg.case_id.clone(),
        registration: reg,
        morph: summary,
        report: None,
        artifacts,
        timings_s: timings,
    };
    write_json(&case_dir.join("case_result.json"), &result)?;
    Ok(result)
}

// ---------------------------------------------------------------- evaluate

/// ICP-aligns `morphed.stl` onto the case's truth mesh and writes
/// `report.json`, `errors.csv`, `heatmap.ply` and `alignment.json`.
pub fn cmd_evaluate(case_dir: &Path, overrides: &Overrides) -> Result<ErrorReport> {
    let log = RunLog::in_dir(case_dir);
    let cfg = log.stage("load", |_| load_case_config(case_dir, overrides))?;
    let truth_path = cfg
        .truth
        .as_ref()
        .map(|p| case_dir.join(p))
        .unwrap_or_else(|| case_dir.join("truth.stl"));
    let (morphed, truth) = log.stage("load", |_| {
        if !truth_path.is_file() {
            return Err(Error::NoGroundTruth(truth_path.clone()));
        }
        Ok((read_mesh(&case_dir.join("morphed.stl"))?, read_mesh(&truth_path)?))
    })?;
    let index = SurfaceIndex::new(&truth);
    let icp: IcpResult = log.stage("align", |warnings| {
        let r = icp_align(&morphed, &index, &RigidTransform::identity(), &cfg.icp)?;
        if !r.converged {
            warnings.push(format!("ICP stopped after {} iterations without converging", r.iterations));
        }
        Ok(r)
    })?;
    let aligned = transform_mesh(&morphed, &icp.transform);
    let report = log.stage("evaluate", |_| {
        let d = vertex_surface_errors(&aligned, &index)?;
        let report = error_report(&d, &cfg.case_id)?;
        report.save(case_dir.join("report.json"))?;
        export_heatmap(&aligned, &d, case_dir.join("heatmap.ply"), case_dir.join("errors.csv"), None)?;
        write_json(&case_dir.join("alignment.json"), &icp)?;
        Ok(report)
    })?;
    // keep case_result.json in step when it exists
    let result_path = case_dir.join("case_result.json");
    if result_path.is_file() {
        let mut r: CaseResult = read_json(&result_path)?;
        r.report = Some(report.clone());
        for f in ["report.json", "errors.csv", "heatmap.ply", "alignment.json"] {
            if !r.artifacts.iter().any(|a| a == Path::new(f)) {
                r.artifacts.push(f.into());
            }
        }
        write_json(&result_path, &r)?;
    }
    Ok(report)
}

// ---------------------------------------------------------------- cohort

/// Collects `report.json` from each case and writes `cohort.csv` and
/// `cohort.json` into `out_dir`. Cases without a report are skipped with a
/// warning.
pub fn cmd_cohort(case_dirs: &[PathBuf], out_dir: &Path) -> Result<CohortSummary> {
    create_dir(out_dir)?;
    let log = RunLog::in_dir(out_dir);
    log.stage("cohort", |warnings| {
        let mut reports = Vec::new();
        for dir in case_dirs {
            let p = dir.join("report.json");
            if p.is_file() {
                reports.push(ErrorReport::load(&p)?);
            } else {
                warnings.push(format!("{}: no report.json, skipped", dir.display()));
            }
        }
        if reports.is_empty() {
            return Err(Error::InvalidArgument("no evaluated cases".into()));
        }
        write_cohort(&reports, out_dir)
    })
}

/// Same as [`cmd_cohort`] from a `case,rms_mm,largest_mm` table.
pub fn cmd_cohort_from_csv(csv: &Path, out_dir: &Path) -> Result<CohortSummary> {
    create_dir(out_dir)?;
    let log = RunLog::in_dir(out_dir);
    log.stage("cohort", |_| {
        let reports = load_cohort_csv(csv)?;
        if reports.is_empty() {
            return Err(Error::InvalidArgument(format!("{} has no cases", csv.display())));
        }
        write_cohort(&reports, out_dir)
    })
}

fn write_cohort(reports: &[ErrorReport], out_dir: &Path) -> Result<CohortSummary> {
    let s = summarize_cohort(reports)?;
    s.save_csv(out_dir.join("cohort.csv"))?;
    s.save_json(out_dir.join("cohort.json"))?;
    Ok(s)
}

// ---------------------------------------------------------------- kinematics

/// A trace CSV, or a JSON array of per-frame femur/tibia poses that is
/// reduced to a trace first.
pub fn load_trace(path: &Path) -> Result<KinematicsTrace> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        reduce_trace(&FramePoses::load_all(path)?)
    } else {
        KinematicsTrace::load_csv(path)
    }
}

/// Compares two traces and writes `kinematics.json` and `kinematics_diff.csv`
/// into `out_dir`.
pub fn cmd_kinematics(recon: &Path, truth: &Path, out_dir: &Path) -> Result<KinematicsError> {
    create_dir(out_dir)?;
    let log = RunLog::in_dir(out_dir);
    log.stage("kinematics", |warnings| {
        let r = load_trace(recon)?;
        let t = load_trace(truth)?;
        for (name, tr) in [("reconstructed", &r), ("truth", &t)] {
            if !tr.degenerate.is_empty() {
                warnings.push(format!("{name}: gimbal-degenerate frames {:?} carried from neighbours", tr.degenerate));
            }
        }
        let e = compare_traces(&r, &t)?;
        e.save_json(out_dir.join("kinematics.json"))?;
        e.save_csv(out_dir.join("kinematics_diff.csv"))?;
        Ok(e)
    })
}

// ---------------------------------------------------------------- batches

/// Runs `f` on every case with up to `jobs` worker threads; results come
/// back in input order.
pub fn for_each_case<T: Send>(
    cases: &[PathBuf],
    jobs: usize,
    f: impl Fn(&Path) -> T + Sync,
) -> Vec<T> {
    let jobs = jobs.clamp(1, cases.len().max(1));
    if jobs == 1 {
        return cases.iter().map(|c| f(c)).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<std::sync::Mutex<Option<T>>> = cases.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= cases.len() {
                    break;
                }
                let r = f(&cases[i]);
                *results[i].lock().unwrap() = Some(r);
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every case ran"))
        .collect()
}
