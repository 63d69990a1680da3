//! Randomized invariants across the public API.

use nalgebra::{Point3, Vector3};
use proptest::prelude::*;
use silmorph::evaluation::{error_report, kabsch, summarize_cohort};
use silmorph::geometry::{load_mesh, save_mesh, shapes, transform_mesh, RigidTransform, SurfaceIndex};
use silmorph::imaging::{distance_field, extract_contour, render_silhouette, Camera, Mask};
use silmorph::kinematics::{
    cardan_angles, cardan_rotation, compare_traces, reduce_trace, FramePoses, KinematicsTrace,
};
use silmorph::pipeline::merge_json;

fn rigid() -> impl Strategy<Value = RigidTransform> {
    (
        prop::array::uniform3(-1.0f64..1.0),
        0.0f64..std::f64::consts::PI,
        prop::array::uniform3(-50.0f64..50.0),
    )
        .prop_filter("axis must not vanish", |(a, _, _)| Vector3::from(*a).norm() > 1e-3)
        .prop_map(|(a, angle, t)| RigidTransform::from_axis_angle(Vector3::from(a), angle, Vector3::from(t)))
}

fn point(r: f64) -> impl Strategy<Value = Point3<f64>> {
    prop::array::uniform3(-r..r).prop_map(Point3::from)
}

fn blobs() -> impl Strategy<Value = Mask> {
    prop::collection::vec((8.0f64..56.0, 8.0f64..56.0, 2.0f64..14.0), 1..4).prop_map(|discs| {
        Mask::from_fn(64, 64, |x, y| {
            discs
                .iter()
                .any(|&(cx, cy, r)| (x as f64 - cx).hypot(y as f64 - cy) <= r)
        })
    })
}

fn trace(ap: Vec<f64>, axial: Vec<f64>) -> KinematicsTrace {
    KinematicsTrace {
        frames: (0..ap.len()).collect(),
        flexion_deg: vec![0.0; ap.len()],
        ap_mm: ap,
        axial_deg: axial,
        degenerate: vec![],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rigid_motion_preserves_pairwise_distances(t in rigid()) {
        let mesh = shapes::lobed(20.0, 1);
        let moved = transform_mesh(&mesh, &t);
        let (a, b) = (mesh.vertices(), moved.vertices());
        for i in (0..a.len()).step_by(3) {
            for j in (i + 1..a.len()).step_by(5) {
                prop_assert!(((a[i] - a[j]).norm() - (b[i] - b[j]).norm()).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn compose_with_inverse_is_identity(t in rigid(), p in point(100.0)) {
        let q = t.inverse().apply_point(&t.apply_point(&p));
        prop_assert!((q - p).norm() < 1e-9);
    }

    #[test]
    fn indexed_closest_point_equals_exhaustive(qs in prop::collection::vec(point(40.0), 50)) {
        let index = SurfaceIndex::new(&shapes::lobed(15.0, 2));
        for q in &qs {
            let (a, b) = (index.closest_point(q), index.closest_point_exhaustive(q));
            prop_assert_eq!(a.triangle, b.triangle);
            prop_assert_eq!(a.distance, b.distance);
            prop_assert_eq!(a.point, b.point);
        }
    }

    #[test]
    fn signed_distance_flips_across_a_flat_patch(x in -4.0f64..4.0, y in -4.0f64..4.0, h in 0.01f64..0.9) {
        // +z face of a 10 mm cube is flat over |x|, |y| < 5
        let index = SurfaceIndex::new(&shapes::cube(10.0));
        let above = index.closest_point(&Point3::new(x, y, 5.0 + h));
        let below = index.closest_point(&Point3::new(x, y, 5.0 - h));
        prop_assert!(above.signed_distance > 0.0 && below.signed_distance < 0.0);
        prop_assert!((above.signed_distance + below.signed_distance).abs() < 1e-12);
    }

    #[test]
    fn stl_round_trip_keeps_geometry(t in rigid()) {
        let mesh = transform_mesh(&shapes::ellipsoid([12.0, 7.0, 5.0], 1), &t);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.stl");
        save_mesh(&mesh, &p).unwrap();
        let back = load_mesh(&p).unwrap();
        prop_assert_eq!(back.triangle_count(), mesh.triangle_count());
        let index = SurfaceIndex::new(&mesh);
        for v in back.vertices() {
            prop_assert!(index.closest_point(v).distance <= 1e-5);
        }
    }

    #[test]
    fn contour_pixels_are_one_pixel_thick(mask in blobs()) {
        let c = extract_contour(&mask).unwrap();
        for &[x, y] in &c.points {
            let (x, y) = (x as i64, y as i64);
            prop_assert!(mask.get_signed(x, y));
            prop_assert!([(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|(dx, dy)| !mask.get_signed(x + dx, y + dy)));
        }
        let (f, l) = (c.points[0], *c.points.last().unwrap());
        prop_assert!((f[0] as i64 - l[0] as i64).abs() <= 1 && (f[1] as i64 - l[1] as i64).abs() <= 1);
    }

    #[test]
    fn distance_field_equals_brute_force(mask in blobs()) {
        let c = extract_contour(&mask).unwrap();
        let field = distance_field(&c, 64, 64).unwrap();
        for y in (0..64).step_by(3) {
            for x in (0..64).step_by(3) {
                let best = c
                    .points
                    .iter()
                    .map(|&[px, py]| {
                        let (dx, dy) = (px as f64 - x as f64, py as f64 - y as f64);
                        dx * dx + dy * dy
                    })
                    .fold(f64::INFINITY, f64::min);
                prop_assert_eq!(field.get(x, y), best.sqrt());
            }
        }
    }

    #[test]
    fn rendering_is_deterministic(t in rigid()) {
        let cam = Camera::default().with_resolution(96);
        let pose = RigidTransform::from_translation(Vector3::new(0.0, 0.0, 500.0)).compose(
            &RigidTransform::from_quaternion(t.quaternion(), Vector3::zeros()),
        );
        let mesh = shapes::lobed(20.0, 2);
        let a = render_silhouette(&cam, &pose, &mesh).unwrap();
        let b = render_silhouette(&cam, &pose, &mesh).unwrap();
        prop_assert_eq!(a.data(), b.data());
    }

    #[test]
    fn report_is_homogeneous(d in prop::collection::vec(-5.0f64..5.0, 1..200), k in 0.1f64..10.0) {
        let a = error_report(&d, "a").unwrap();
        let scaled: Vec<f64> = d.iter().map(|x| x * k).collect();
        let b = error_report(&scaled, "a").unwrap();
        prop_assert!((b.rms_mm - k * a.rms_mm).abs() <= 1e-12 * (1.0 + b.rms_mm));
        prop_assert!((b.largest_mm - k * a.largest_mm).abs() <= 1e-12 * (1.0 + b.largest_mm));
        prop_assert!(a.rms_mm <= a.largest_mm);
        prop_assert_eq!(error_report(&d, "a").unwrap(), a);
    }

    #[test]
    fn cohort_std_is_zero_for_equal_cases(v in 0.0f64..5.0, n in 1usize..20) {
        let reports: Vec<_> = (0..n).map(|i| error_report(&[v, -v], &i.to_string()).unwrap()).collect();
        let s = summarize_cohort(&reports).unwrap();
        prop_assert!(s.rms_mm.std.abs() < 1e-12 && (s.rms_mm.mean - v).abs() < 1e-12);
    }

    #[test]
    fn kabsch_recovers_a_rigid_motion(t in rigid(), pts in prop::collection::vec(point(30.0), 4..40)) {
        let moved: Vec<_> = pts.iter().map(|p| t.apply_point(p)).collect();
        let r = kabsch(&pts, &moved).unwrap();
        for (p, q) in pts.iter().zip(&moved) {
            prop_assert!((r.apply_point(p) - q).norm() < 1e-8);
        }
    }

    #[test]
    fn cardan_round_trip(a in -3.1f64..3.1, b in -1.39f64..1.39, c in -3.1f64..3.1) {
        let (a2, b2, c2) = cardan_angles(&cardan_rotation(a, b, c)).unwrap();
        prop_assert!((a2 - a).abs() < 1e-9 && (b2 - b).abs() < 1e-9 && (c2 - c).abs() < 1e-9);
    }

    #[test]
    fn compare_traces_is_symmetric_and_zero_iff_equal(
        x in prop::collection::vec((-5.0f64..5.0, -20.0f64..20.0), 1..30),
        y in prop::collection::vec((-5.0f64..5.0, -20.0f64..20.0), 30),
    ) {
        let n = x.len();
        let a = trace(x.iter().map(|v| v.0).collect(), x.iter().map(|v| v.1).collect());
        let b = trace(y[..n].iter().map(|v| v.0).collect(), y[..n].iter().map(|v| v.1).collect());
        let (ab, ba) = (compare_traces(&a, &b).unwrap(), compare_traces(&b, &a).unwrap());
        prop_assert_eq!(ab.translation_mean_mm, ba.translation_mean_mm);
        prop_assert_eq!(ab.rotation_mean_deg, ba.rotation_mean_deg);
        let zero = ab.translation_mean_mm == 0.0 && ab.rotation_mean_deg == 0.0;
        prop_assert_eq!(zero, a == b);
        let aa = compare_traces(&a, &a).unwrap();
        prop_assert!(aa.translation_mean_mm == 0.0 && aa.rotation_mean_deg == 0.0);
    }

    #[test]
    fn channels_are_independent(
        flex in -1.0f64..1.0, add in -0.5f64..0.5, axial in -1.0f64..1.0,
        t in prop::array::uniform3(-20.0f64..20.0),
        extra_axial in -1.0f64..1.0,
        shift in prop::array::uniform3(-20.0f64..20.0),
    ) {
        let femur = |r: nalgebra::Matrix3<f64>, t: Vector3<f64>| FramePoses {
            frame: 0,
            flexion_deg: None,
            femur: RigidTransform::new(r, t).unwrap(),
            tibia: RigidTransform::identity(),
        };
        let base = reduce_trace(&[femur(cardan_rotation(flex, add, axial), Vector3::from(t))]).unwrap();
        // extra axial rotation leaves the translation alone
        let turned = reduce_trace(&[femur(cardan_rotation(flex, add, axial + extra_axial), Vector3::from(t))]).unwrap();
        prop_assert_eq!(turned.ap_mm[0], base.ap_mm[0]);
        prop_assert!((turned.axial_deg[0] - base.axial_deg[0] - extra_axial.to_degrees()).abs() < 1e-9);
        // extra translation leaves the rotation alone
        let moved = reduce_trace(&[femur(cardan_rotation(flex, add, axial), Vector3::from(t) + Vector3::from(shift))]).unwrap();
        prop_assert_eq!(moved.axial_deg[0], base.axial_deg[0]);
    }

    #[test]
    fn identity_sequences_reduce_to_zero(n in 1usize..20) {
        let frames: Vec<_> = (0..n)
            .map(|i| FramePoses { frame: i, flexion_deg: None, femur: RigidTransform::identity(), tibia: RigidTransform::identity() })
            .collect();
        let t = reduce_trace(&frames).unwrap();
        prop_assert!(t.ap_mm.iter().chain(&t.axial_deg).chain(&t.flexion_deg).all(|&v| v == 0.0));
    }

    #[test]
    fn merging_a_document_into_itself_changes_nothing(a in 0i64..100, b in "[a-z]{0,6}", c in any::<bool>()) {
        let doc = serde_json::json!({"a": a, "m": {"b": b, "n": {"c": c}}});
        let mut merged = doc.clone();
        merge_json(&mut merged, &doc);
        prop_assert_eq!(merged, doc);
    }
}
