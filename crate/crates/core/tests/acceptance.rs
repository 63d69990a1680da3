//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Runs without the libtest harness so the report is always visible under
//! `cargo test`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{Matrix3, Point3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use silmorph::evaluation::{
    icp_align, summarize_cohort, vertex_surface_errors, ErrorReport, IcpConfig,
};
use silmorph::geometry::{save_mesh, shapes, transform_mesh, RigidTransform, SurfaceIndex, TriMesh};
use silmorph::imaging::{
    export_coco, extract_contour, perturb_boundary, rasterize_polygon, render_silhouette, Camera, Contour,
    ImplantLabel, Mask, View, DEFAULT_ISOCENTER_MM,
};
use silmorph::kinematics::{cardan_angles, cardan_rotation, compare_traces, KinematicsTrace};
use silmorph::pipeline::{cmd_evaluate, cmd_reconstruct, cmd_synth, Overrides, SynthConfig};
use silmorph::registration::{register_multi_view, RegistrationConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- 1

const TABLE_RMS: [f64; 19] = [
    0.46, 0.54, 0.58, 0.84, 0.45, 0.66, 0.39, 0.53, 0.49, 0.62, 0.49, 0.81, 0.65, 0.53, 0.45, 0.51, 0.83, 0.56,
    0.81,
];
const TABLE_LARGEST: [f64; 19] = [
    1.54, 2.75, 1.76, 3.68, 3.27, 3.47, 1.94, 1.86, 4.52, 2.68, 2.71, 2.97, 2.97, 2.74, 1.75, 2.52, 3.48, 2.35,
    3.75,
];

fn table_statistics() -> Outcome {
    let reports: Vec<ErrorReport> = TABLE_RMS
        .iter()
        .zip(TABLE_LARGEST)
        .enumerate()
        .map(|(i, (&rms_mm, largest_mm))| ErrorReport {
            case_id: (i + 1).to_string(),
            rms_mm,
            largest_mm,
            largest_vertex: 0,
        })
        .collect();
    let s = summarize_cohort(&reports).unwrap();
    let pass = (0.58..=0.59).contains(&s.rms_mm.mean)
        && (0.13..=0.15).contains(&s.rms_mm.std)
        && (s.largest_mm.mean - 2.77).abs() <= 0.01
        && (0.77..=0.81).contains(&s.largest_mm.std);
    outcome(
        pass,
        format!(
            "rms {:.4} ± {:.4} mm, largest {:.4} ± {:.4} mm",
            s.rms_mm.mean, s.rms_mm.std, s.largest_mm.mean, s.largest_mm.std
        ),
    )
}

// ---------------------------------------------------------------- 2, 3, 10

struct ClosedLoopCase {
    id: &'static str,
    shape: &'static str,
    scale: f64,
    seed: u64,
}

const CLOSED_LOOP: [ClosedLoopCase; 5] = [
    ClosedLoopCase { id: "lobed-090", shape: "lobed", scale: 0.90, seed: 11 },
    ClosedLoopCase { id: "lobed-110", shape: "lobed", scale: 1.10, seed: 12 },
    ClosedLoopCase { id: "lobed-115", shape: "lobed", scale: 1.15, seed: 13 },
    ClosedLoopCase { id: "ellipsoid-090", shape: "ellipsoid", scale: 0.90, seed: 14 },
    ClosedLoopCase { id: "ellipsoid-105", shape: "ellipsoid", scale: 1.05, seed: 15 },
];

fn write_templates(dir: &Path) -> BTreeMap<&'static str, PathBuf> {
    let mut out = BTreeMap::new();
    for (name, mesh) in [
        ("lobed", shapes::lobed(30.0, 4)),
        ("ellipsoid", shapes::ellipsoid([35.0, 22.0, 16.0], 4)),
    ] {
        let p = dir.join(format!("{name}.stl"));
        save_mesh(&mesh, &p).unwrap();
        out.insert(name, p);
    }
    out
}

struct CaseRun {
    id: &'static str,
    dir: PathBuf,
    rms_frac: f64,
    largest_frac: f64,
    seconds: f64,
}

fn run_closed_loop(root: &Path) -> Vec<CaseRun> {
    std::fs::create_dir_all(root).unwrap();
    let templates = write_templates(root);
    CLOSED_LOOP
        .iter()
        .map(|c| {
            let dir = root.join(c.id);
            let cfg = SynthConfig {
                case_id: c.id.into(),
                template: Some(templates[c.shape].clone()),
                scale: c.scale,
                seed: c.seed,
                ..SynthConfig::default()
            };
            let synth = cmd_synth(&cfg, &dir).unwrap();
            let t = Instant::now();
            cmd_reconstruct(&dir, &Overrides::default()).unwrap();
            let report = cmd_evaluate(&dir, &Overrides::default()).unwrap();
            let diag = synth.truth.bounding_box().diagonal();
            CaseRun {
                id: c.id,
                dir,
                rms_frac: report.rms_mm / diag,
                largest_frac: report.largest_mm / diag,
                seconds: t.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

fn closed_loop(runs: &[CaseRun]) -> Outcome {
    let pass = runs
        .iter()
        .all(|r| r.rms_frac <= 0.01 && r.largest_frac <= 0.06 && r.seconds < 120.0);
    let detail = runs
        .iter()
        .map(|r| {
            format!(
                "{} rms {:.2}% largest {:.2}% {:.0}s",
                r.id,
                100.0 * r.rms_frac,
                100.0 * r.largest_frac,
                r.seconds
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, format!("{} cases: {detail}", runs.len()))
}

fn fixed_point(root: &Path) -> Outcome {
    let template = root.join("lobed.stl");
    save_mesh(&shapes::lobed(30.0, 4), &template).unwrap();
    let dir = root.join("self");
    let cfg = SynthConfig {
        case_id: "self".into(),
        template: Some(template),
        seed: 21,
        ..SynthConfig::default()
    };
    cmd_synth(&cfg, &dir).unwrap();
    let t = Instant::now();
    let r = cmd_reconstruct(&dir, &Overrides::default()).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let rms = r.morph.rms_displacement_mm;
    outcome(
        rms <= 0.1 && secs < 30.0,
        format!("displacement rms {rms:.4} mm (max {:.4} mm), {secs:.1}s", r.morph.max_displacement_mm),
    )
}

/// Files of a case with timing fields removed.
fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let name = p.strip_prefix(dir).unwrap().display().to_string();
            let bytes = std::fs::read(&p).unwrap();
            let bytes = match name.as_str() {
                "case_result.json" => {
                    let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
                    v.as_object_mut().unwrap().remove("timings_s");
                    serde_json::to_vec(&v).unwrap()
                }
                "run_log.jsonl" => String::from_utf8(bytes)
                    .unwrap()
                    .lines()
                    .map(|l| {
                        let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                        v.as_object_mut().unwrap().remove("duration_s");
                        v.to_string() + "\n"
                    })
                    .collect::<String>()
                    .into_bytes(),
                _ => bytes,
            };
            out.insert(name, bytes);
        }
    }
    out
}

fn determinism(first: &[CaseRun], second: &[CaseRun]) -> Outcome {
    let mut files = 0;
    let mut differing = Vec::new();
    for (a, b) in first.iter().zip(second) {
        let (fa, fb) = (artifacts(&a.dir), artifacts(&b.dir));
        if fa.keys().ne(fb.keys()) {
            differing.push(format!("{}: file sets differ", a.id));
            continue;
        }
        for (name, bytes) in &fa {
            files += 1;
            if fb[name] != *bytes {
                differing.push(format!("{}/{name}", a.id));
            }
        }
    }
    let detail = if differing.is_empty() {
        format!("{files} artifacts identical across two runs")
    } else {
        format!("differing: {}", differing.join(", "))
    };
    outcome(differing.is_empty(), detail)
}

// ---------------------------------------------------------------- 4

fn registration_recovery() -> Outcome {
    let template = shapes::lobed(30.0, 4);
    let centroid = template.centroid();
    let views = View::standard_set(Camera::default(), DEFAULT_ISOCENTER_MM);
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let trials = 50;
    let (mut recovered, mut silent_failures, mut slowest) = (0, 0, 0.0f64);
    for trial in 0..trials {
        let axis = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let truth = RigidTransform::from_axis_angle(axis, rng.gen_range(0.0..0.5), -centroid.coords);
        let targets: Vec<Contour> = views
            .iter()
            .map(|v| extract_contour(&render_silhouette(&v.camera, &v.camera_pose(&truth), &template).unwrap()).unwrap())
            .collect();

        let axis = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let dq = UnitQuaternion::from_scaled_axis(axis.normalize() * rng.gen_range(0.0..10f64.to_radians()));
        let dt = Vector3::new(rng.gen_range(-10.0..=10.0), rng.gen_range(-10.0..=10.0), rng.gen_range(-10.0..=10.0));
        // perturb about the object's centroid so rotation and translation stay separate
        let c = truth.apply_point(&centroid).coords;
        let init = RigidTransform::from_quaternion(dq * truth.quaternion(), dq * (truth.translation() - c) + c + dt);

        let cfg = RegistrationConfig {
            seed: trial,
            ..RegistrationConfig::default()
        };
        let t = Instant::now();
        let r = register_multi_view(&views, &template, &targets, &init, &cfg).unwrap();
        slowest = slowest.max(t.elapsed().as_secs_f64());
        let rot_deg = r.pose.rotation_angle_to(&truth).to_degrees();
        let trans_mm = (r.pose.apply_point(&centroid) - truth.apply_point(&centroid)).norm();
        if rot_deg <= 1.0 && trans_mm <= 1.0 {
            recovered += 1;
        } else if r.converged {
            silent_failures += 1;
        }
    }
    let rate = recovered as f64 / trials as f64;
    outcome(
        rate >= 0.9 && silent_failures == 0 && slowest < 10.0,
        format!(
            "{recovered}/{trials} within 1°/1 mm, {silent_failures} failures reported converged, slowest {slowest:.1}s"
        ),
    )
}

// ---------------------------------------------------------------- 5

fn max_vertex_gap(mesh: &TriMesh, a: &RigidTransform, b: &RigidTransform) -> f64 {
    mesh.vertices()
        .iter()
        .map(|p| (a.apply_point(p) - b.apply_point(p)).norm())
        .fold(0.0, f64::max)
}

fn icp_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0.0f64;
    let mut trials = 0;
    for mesh in [shapes::lobed(30.0, 2), shapes::ellipsoid([25.0, 15.0, 10.0], 3)] {
        let index = SurfaceIndex::new(&mesh);
        for _ in 0..6 {
            let axis = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let motion = RigidTransform::from_axis_angle(
                axis,
                rng.gen_range(0.0..20f64.to_radians()),
                Vector3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)),
            );
            let moved = transform_mesh(&mesh, &motion);
            let r = icp_align(&moved, &index, &RigidTransform::identity(), &IcpConfig::default()).unwrap();
            // r.transform ∘ motion should be the identity
            worst = worst.max(max_vertex_gap(&mesh, &r.transform.compose(&motion), &RigidTransform::identity()));
            trials += 1;
        }
    }
    let mesh = shapes::lobed(30.0, 2);
    let r = icp_align(&mesh, &SurfaceIndex::new(&mesh), &RigidTransform::identity(), &IcpConfig::default()).unwrap();
    let identity_gap = max_vertex_gap(&mesh, &r.transform, &RigidTransform::identity());
    outcome(
        worst <= 1e-6 && identity_gap <= 1e-9,
        format!("{trials} motions ≤ 20°: worst vertex gap {worst:.2e} mm; identity {identity_gap:.2e} mm"),
    )
}

// ---------------------------------------------------------------- 6

/// Closest point on a triangle by minimizing over the interior solution and
/// the three edges; written independently of the library's region test.
fn closest_on_triangle(p: &Point3<f64>, t: &[Point3<f64>; 3]) -> f64 {
    let seg = |a: &Point3<f64>, b: &Point3<f64>| {
        let ab = b - a;
        let s = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
        (p - (a + ab * s)).norm()
    };
    let mut best = seg(&t[0], &t[1]).min(seg(&t[1], &t[2])).min(seg(&t[2], &t[0]));
    let (e0, e1) = (t[1] - t[0], t[2] - t[0]);
    let m = Matrix3::from_columns(&[e0, e1, e0.cross(&e1)]);
    if let Some(inv) = m.try_inverse() {
        let c = inv * (p - t[0]);
        if c.x >= 0.0 && c.y >= 0.0 && c.x + c.y <= 1.0 {
            best = best.min((p - (t[0] + e0 * c.x + e1 * c.y)).norm());
        }
    }
    best
}

fn distance_oracle() -> Outcome {
    let mesh = shapes::lobed(30.0, 2);
    let index = SurfaceIndex::new(&mesh);
    let tris: Vec<_> = (0..mesh.triangle_count()).map(|t| mesh.triangle_points(t)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let queries: Vec<Point3<f64>> = (0..100)
        .map(|_| Point3::new(rng.gen_range(-60.0..60.0), rng.gen_range(-60.0..60.0), rng.gen_range(-60.0..60.0)))
        .collect();
    let mut exact = 0;
    let mut worst_independent = 0.0f64;
    for q in &queries {
        let (a, b) = (index.closest_point(q), index.closest_point_exhaustive(q));
        if a.point == b.point && a.distance == b.distance && a.signed_distance == b.signed_distance {
            exact += 1;
        }
        let oracle = tris.iter().map(|t| closest_on_triangle(q, t)).fold(f64::INFINITY, f64::min);
        worst_independent = worst_independent.max((a.distance - oracle).abs());
    }
    // the queries as vertices of a throwaway strip
    let probe = TriMesh::new(queries.clone(), (0..queries.len() - 2).map(|i| [i, i + 1, i + 2]).collect()).unwrap();
    let errs = vertex_surface_errors(&probe, &index).unwrap();
    let errs_exact = errs
        .iter()
        .zip(&queries)
        .all(|(e, q)| *e == index.closest_point_exhaustive(q).signed_distance);
    outcome(
        exact == 100 && errs_exact && worst_independent <= 1e-9 && tris.len() <= 1000,
        format!(
            "{} triangles: {exact}/100 indexed = exhaustive, surface errors exact: {errs_exact}, independent oracle gap {worst_independent:.1e}",
            tris.len()
        ),
    )
}

// ---------------------------------------------------------------- 7

fn random_mask(rng: &mut ChaCha8Rng) -> Mask {
    let n = rng.gen_range(1..=3);
    let blobs: Vec<(f64, f64, f64, f64, f64)> = (0..n)
        .map(|_| {
            (
                rng.gen_range(30.0..98.0),
                rng.gen_range(30.0..98.0),
                rng.gen_range(6.0..28.0),
                rng.gen_range(4.0..20.0),
                rng.gen_range(0.0..std::f64::consts::PI),
            )
        })
        .collect();
    let clean = Mask::from_fn(128, 128, |x, y| {
        blobs.iter().any(|&(cx, cy, a, b, th)| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let (u, v) = (dx * th.cos() + dy * th.sin(), -dx * th.sin() + dy * th.cos());
            (u / a).powi(2) + (v / b).powi(2) <= 1.0
        })
    });
    perturb_boundary(&clean, 0.2, rng)
}

fn contour_integrity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut good = 0;
    let mut points = 0;
    for _ in 0..20 {
        let mask = random_mask(&mut rng);
        let c = extract_contour(&mask).unwrap();
        points += c.len();
        let on_boundary = c.points.iter().all(|&[x, y]| {
            let (x, y) = (x as i64, y as i64);
            mask.get_signed(x, y)
                && [(1, 0), (-1, 0), (0, 1), (0, -1)]
                    .iter()
                    .any(|(dx, dy)| !mask.get_signed(x + dx, y + dy))
        });
        let [fx, fy] = c.points[0];
        let [lx, ly] = *c.points.last().unwrap();
        let adjacent = |[ax, ay]: [u32; 2], [bx, by]: [u32; 2]| (ax as i64 - bx as i64).abs() <= 1 && (ay as i64 - by as i64).abs() <= 1;
        let closes = c.closed && adjacent([fx, fy], [lx, ly]) && c.points.windows(2).all(|w| adjacent(w[0], w[1]));
        if on_boundary && closes {
            good += 1;
        }
    }
    outcome(good == 20, format!("{good}/20 masks, {points} contour pixels"))
}

// ---------------------------------------------------------------- 8

fn kinematics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let a = rng.gen_range(-180.0f64..180.0).to_radians();
        let b = rng.gen_range(-79.9f64..79.9).to_radians();
        let c = rng.gen_range(-180.0f64..180.0).to_radians();
        let (a2, b2, c2) = cardan_angles(&cardan_rotation(a, b, c)).unwrap();
        let wrap = |d: f64| (d + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
        worst = worst.max(wrap(a2 - a).abs()).max((b2 - b).abs()).max(wrap(c2 - c).abs());
    }
    let trace = |ap: f64, axial: f64| KinematicsTrace {
        frames: (0..6).collect(),
        flexion_deg: (0..6).map(|i| 15.0 * i as f64).collect(),
        ap_mm: (0..6).map(|i| 0.25 * i as f64 + ap).collect(),
        axial_deg: (0..6).map(|i| 0.5 * i as f64 + axial).collect(),
        degenerate: vec![],
    };
    let e = compare_traces(&trace(1.0, -2.0), &trace(0.0, 0.0)).unwrap();
    let offsets_exact = e.translation_mean_mm == 1.0
        && e.translation_std_mm == 0.0
        && e.rotation_mean_deg == 2.0
        && e.rotation_std_deg == 0.0;
    let z = compare_traces(&trace(0.0, 0.0), &trace(0.0, 0.0)).unwrap();
    let zero = z.translation_mean_mm == 0.0 && z.rotation_mean_deg == 0.0;
    outcome(
        worst <= 1e-9 && offsets_exact && zero,
        format!(
            "1000 triples worst {worst:.1e} rad; offset case {:.2} ± {:.2} mm, {:.2} ± {:.2}°",
            e.translation_mean_mm, e.translation_std_mm, e.rotation_mean_deg, e.rotation_std_deg
        ),
    )
}

// ---------------------------------------------------------------- 9

fn coco_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let masks: Vec<(String, Mask, ImplantLabel)> = (0..20)
        .map(|i| {
            let label = if i % 2 == 0 { ImplantLabel::Femur } else { ImplantLabel::Tibia };
            (format!("{i}.png"), random_mask(&mut rng), label)
        })
        .collect();
    let doc = export_coco(&masks).unwrap();
    let mut worst = 1.0f64;
    for ((_, mask, _), ann) in masks.iter().zip(&doc.annotations) {
        let back = rasterize_polygon(&ann.segmentation[0], mask.width(), mask.height());
        // the export traces the largest component only
        let reference = component_of(mask, &extract_contour(mask).unwrap());
        worst = worst.min(reference.iou(&back));
    }
    outcome(
        worst >= 0.98,
        format!("segmentation mAP not reproducible (no dataset); COCO polygon round trip worst IoU {worst:.4} over 20 masks"),
    )
}

/// The 8-connected component of `mask` containing the contour's first point.
fn component_of(mask: &Mask, contour: &Contour) -> Mask {
    let (w, h) = (mask.width(), mask.height());
    let mut out = Mask::new(w, h);
    let mut stack = vec![contour.points[0]];
    out.set(contour.points[0][0], contour.points[0][1], true);
    while let Some([x, y]) = stack.pop() {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if mask.get_signed(nx, ny) && !out.get(nx as u32, ny as u32) {
                    out.set(nx as u32, ny as u32, true);
                    stack.push([nx as u32, ny as u32]);
                }
            }
        }
    }
    out
}

// ----------------------------------------------------------------

fn main() -> ExitCode {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut results: Vec<(u32, &str, Outcome, f64)> = Vec::new();
    // ACCEPTANCE_ONLY=4,6 runs a subset
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|n| n.trim().parse().ok()).collect());
    let mut run = |n: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            return;
        }
        let t = Instant::now();
        let o = std::panic::catch_unwind(std::panic::AssertUnwindSafe(&mut *f))
            .unwrap_or_else(|_| outcome(false, "panicked"));
        let secs = t.elapsed().as_secs_f64();
        println!(
            "{} criterion {n:>2} {name}: {} [{secs:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((n, name, o, secs));
    };

    run(1, "table statistics", &mut table_statistics);
    let mut first = Vec::new();
    run(2, "closed-loop size morph", &mut || {
        first = run_closed_loop(&root.join("run-a"));
        closed_loop(&first)
    });
    run(3, "fixed-point morph", &mut || fixed_point(root));
    run(4, "multi-view registration recovery", &mut registration_recovery);
    run(5, "ICP exactness", &mut icp_exactness);
    run(6, "distance oracle equivalence", &mut distance_oracle);
    run(7, "contour integrity", &mut contour_integrity);
    run(8, "kinematics decomposition", &mut kinematics_oracle);
    run(9, "segmentation substitute (COCO round trip)", &mut coco_round_trip);
    run(10, "determinism", &mut || {
        if first.is_empty() {
            first = run_closed_loop(&root.join("run-a"));
        }
        let second = run_closed_loop(&root.join("run-b"));
        determinism(&first, &second)
    });

    let failed: Vec<_> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
