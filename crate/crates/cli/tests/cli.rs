use std::path::Path;
use std::process::{Command, Output};

fn silmorph(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_silmorph"))
        .args(args)
        .env("SILMORPH_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synth_reconstruct_evaluate_cohort() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let o = silmorph(root, &["shape", "lobed", "--subdivisions", "2", "--out", "lobed.stl"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let template = root.join("lobed.stl");
    let template = template.to_str().unwrap();

    for (case, scale) in [("a", "1.0"), ("b", "1.05")] {
        let o = silmorph(
            root,
            &["synth", "--case", case, "--template", template, "--scale", scale, "--resolution", "256", "--seed", "3"],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let o = silmorph(root, &["reconstruct", "--case", "a", "--case", "b", "--jobs", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(out.as_array().unwrap().len(), 2);
    assert!(root.join("b/morphed.stl").is_file());

    let o = silmorph(root, &["evaluate", "--case", "a", "--case", "b"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = silmorph(root, &["cohort", "--case", "a", "--case", "b", "--out", "cohort"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(root.join("cohort/cohort.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(root.join("cohort/run_log.jsonl").is_file());
}

#[test]
fn exit_codes_separate_config_stage_and_io_failures() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    // no template: configuration
    let o = silmorph(root, &["synth", "--case", "c"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("template"));

    let o = silmorph(root, &["shape", "sphere", "--size", "15", "--subdivisions", "2", "--out", "s.stl"]);
    assert_eq!(code(&o), 0);
    let o = silmorph(root, &["synth", "--case", "c", "--template", "s.stl", "--resolution", "64"]);
    // relative template paths are taken from the working directory
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let t = root.join("s.stl");
    let o = silmorph(root, &["synth", "--case", "c", "--template", t.to_str().unwrap(), "--resolution", "64"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    // no ground truth: stage failure, distinct from i/o
    std::fs::remove_file(root.join("c/truth.stl")).unwrap();
    let o = silmorph(root, &["evaluate", "--case", "c"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("no ground truth"));

    // unreadable template: i/o
    std::fs::write(root.join("c/template.stl"), "solid x\nfacet normal").unwrap();
    let o = silmorph(root, &["reconstruct", "--case", "c"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(stderr(&o).contains("template.stl"));

    // bad command line
    let o = silmorph(root, &["reconstruct"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn import_masks_reports_missing_views() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut pgm = b"P5\n16 16\n255\n".to_vec();
    pgm.extend((0..256).map(|i| if (4..12).contains(&(i % 16)) && (4..12).contains(&(i / 16)) { 255u8 } else { 0 }));
    let mask = root.join("m.pgm");
    std::fs::write(&mask, &pgm).unwrap();
    let m = mask.to_str().unwrap();
    let arg = |v: &str| format!("{v}={m}");
    let (ap, ml, p45, m45) = (arg("AP"), arg("ML"), arg("ROT+45"), arg("ROT-45"));

    let o = silmorph(root, &["import-masks", "--case", "k", "--mask", &ap, "--mask", &ml, "--mask", &p45]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("ROT-45"), "{}", stderr(&o));

    let o = silmorph(
        root,
        &["import-masks", "--case", "k", "--mask", &ap, "--mask", &ml, "--mask", &p45, "--mask", &m45],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for v in ["ap", "ml", "rot+45", "rot-45"] {
        assert!(root.join("k/views").join(v).join("contour.json").is_file());
    }
}

#[test]
fn kinematics_and_csv_cohort() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("a.csv"), "frame,flexion_deg,ap_mm,axial_deg\n0,0,1.0,2.0\n1,30,1.5,3.0\n").unwrap();
    std::fs::write(root.join("b.csv"), "frame,flexion_deg,ap_mm,axial_deg\n0,0,2.0,2.5\n1,30,2.5,3.5\n").unwrap();
    std::fs::write(root.join("c.csv"), "frame,flexion_deg,ap_mm,axial_deg\n0,0,2.0,2.5\n").unwrap();
    let (a, b, c) = (root.join("a.csv"), root.join("b.csv"), root.join("c.csv"));
    let (a, b, c) = (a.to_str().unwrap(), b.to_str().unwrap(), c.to_str().unwrap());

    let o = silmorph(root, &["kinematics", "--recon", a, "--truth", b, "--out", "k"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["translation_mean_mm"], 1.0);
    assert_eq!(v["rotation_mean_deg"], 0.5);
    assert_eq!(v["translation_std_mm"], 0.0);
    assert!(root.join("k/kinematics_diff.csv").is_file());

    let o = silmorph(root, &["kinematics", "--recon", a, "--truth", c, "--out", "k2"]);
    assert_eq!(code(&o), 3);

    std::fs::write(root.join("t.csv"), "case,rms_mm,largest_mm\n1,0.5,2.0\n2,0.7,3.0\n").unwrap();
    let t = root.join("t.csv");
    let o = silmorph(root, &["cohort", "--from-csv", t.to_str().unwrap(), "--out", "co"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["largest_mm"]["mean"], 2.5);
}
