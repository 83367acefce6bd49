use std::path::Path;
use std::process::{Command, Output};

use shapegram::geometry::{Point, TriangleType};
use shapegram::shape_doc::ShapeDocument;
use shapegram::synthetic::{render_blobs, Blob};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shapegram"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn blob_image(dir: &Path) {
    let img = render_blobs(32, 32, &[Blob::ellipse(Point::new(16.0, 16.0), 9.0, 6.0, 32)], 4).unwrap();
    std::fs::write(dir.join("blob.pgm"), img.to_pgm()).unwrap();
}

#[test]
fn gen_writes_shapes_and_gallery() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["gen", "--seed", "1", "--out", "g"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for i in 0..20 {
        let doc = ShapeDocument::load(d.path().join(format!("g/shape_{i:03}.json"))).unwrap();
        assert_eq!(doc.provenance.seed, 1);
        assert_eq!(doc.provenance.first_sample, i);
        assert_eq!(doc.shapes.len(), 1);
    }
    assert!(d.path().join("g/gallery.svg").exists());
}

#[test]
fn two_triangle_grammar_gives_quadrilaterals() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("q.toml"), "[grammar]\nexpected_triangles = 2.0\nexpected_junctions = 0.0\n").unwrap();
    let o = run(d.path(), &["gen", "--config", "q.toml", "--samples", "8", "--out", "q"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for i in 0..8 {
        let doc = ShapeDocument::load(d.path().join(format!("q/shape_{i:03}.json"))).unwrap();
        let shape = &doc.polygons().unwrap()[0];
        assert_eq!(shape.len(), 2);
        assert_eq!(shape.boundary().unwrap().len(), 4);
    }
}

#[test]
fn infeasible_expectations_exit_with_grammar_error() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("bad.toml"), "[grammar]\nexpected_triangles = 10.0\nexpected_junctions = 5.0\n").unwrap();
    let o = run(d.path(), &["gen", "--config", "bad.toml"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("E(n) >= 2 E(j) + 2"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(d.path(), &["gen", "--grid", "40"])), 1);
    assert_eq!(code(&run(d.path(), &["frobnicate"])), 1);
    assert_eq!(code(&run(d.path(), &["gen", "--config", "missing.toml"])), 1);
    std::fs::write(d.path().join("typo.toml"), "[run]\nsead = 3\n").unwrap();
    assert_eq!(code(&run(d.path(), &["gen", "--config", "typo.toml"])), 1);
    assert_eq!(code(&run(d.path(), &["infer", "--grid", "8x8"])), 1);
    assert_eq!(code(&run(d.path(), &["--help"])), 0);
}

#[test]
fn stats_reports_and_checks() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["stats", "--samples", "20000", "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["n"]["analytic"].as_f64().unwrap(), 20.0);
    assert!((v["j"]["analytic"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((v["m"]["analytic"].as_f64().unwrap() - 0.9).abs() < 1e-12);
    assert_eq!(v["ok"], true);

    std::fs::write(d.path().join("q.toml"), "[grammar]\nt = [1.0, 0.0, 0.0]\n").unwrap();
    let o = run(d.path(), &["stats", "--config", "q.toml", "--samples", "500", "--json"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for (k, want) in [("n", 2.0), ("j", 0.0), ("m", 0.0)] {
        assert_eq!(v[k]["mean"].as_f64().unwrap(), want);
        assert_eq!(v[k]["se"].as_f64().unwrap(), 0.0);
    }

    let o = run(d.path(), &["stats", "--samples", "2000"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("E(n)") && text.contains("within 4 se"));
}

#[test]
fn infer_writes_samples_and_overlays() {
    let d = tempfile::tempdir().unwrap();
    blob_image(d.path());
    let o = run(
        d.path(),
        &["infer", "--image", "blob.pgm", "--grid", "8x8", "--depth", "3", "--lambda", "3", "--lmax", "4", "--samples", "3", "--out", "i"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for k in 0..3 {
        let doc = ShapeDocument::load(d.path().join(format!("i/sample_{k:03}.json"))).unwrap();
        assert_eq!(doc.provenance.grid, Some([8, 8]));
        assert_eq!(doc.provenance.image_size, Some([32, 32]));
        assert!(doc.shapes[0].log_posterior.unwrap() <= 0.0);
        let svg = std::fs::read_to_string(d.path().join(format!("i/sample_{k:03}.svg"))).unwrap();
        assert!(svg.contains("data:image/png;base64,"));
        assert!(!svg.contains("class=\"dashed\""));
    }
}

#[test]
fn infer_runtime_errors_exit_two() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["infer", "--image", "nope.png", "--grid", "8x8"]);
    assert_eq!(code(&o), 2);
    std::fs::write(d.path().join("junk.png"), b"not an image").unwrap();
    assert_eq!(code(&run(d.path(), &["infer", "--image", "junk.png", "--grid", "8x8"])), 2);
}

#[test]
fn render_is_deterministic_and_marks_junctions() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("j.toml"), "[grammar]\nexpected_triangles = 14.0\nexpected_junctions = 2.0\n").unwrap();
    assert_eq!(code(&run(d.path(), &["gen", "--config", "j.toml", "--samples", "10", "--out", "g"])), 0);
    let files: Vec<String> = (0..10).map(|i| format!("g/shape_{i:03}.json")).collect();
    let mut args = vec!["render"];
    args.extend(files.iter().map(String::as_str));
    args.extend(["--out", "r1"]);
    assert_eq!(code(&run(d.path(), &args)), 0);
    *args.last_mut().unwrap() = "r2";
    assert_eq!(code(&run(d.path(), &args)), 0);
    for (i, f) in files.iter().enumerate() {
        let a = std::fs::read(d.path().join(format!("r1/shape_{i:03}.svg"))).unwrap();
        let b = std::fs::read(d.path().join(format!("r2/shape_{i:03}.svg"))).unwrap();
        assert_eq!(a, b);
        let shape = &ShapeDocument::load(d.path().join(f)).unwrap().polygons().unwrap()[0];
        let j = shape.triangles().iter().filter(|t| t.ttype == TriangleType::Junction).count();
        let svg = String::from_utf8(a).unwrap();
        assert_eq!(svg.matches("class=\"triangle type-2\"").count(), j);
        // every line of a junction group is dashed
        for group in svg.split("<g class=\"triangle type-2\">").skip(1) {
            let body = group.split("</g>").next().unwrap();
            assert_eq!(body.matches("class=\"dashed\"").count(), 3);
            assert_eq!(body.matches("class=\"solid\"").count(), 0);
        }
    }
}

#[test]
fn render_errors() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(d.path(), &["gen", "--samples", "1", "--out", "g"])), 0);
    let o = run(d.path(), &["render", "g/shape_000.json", "--overlay", "--out", "r"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--overlay needs --image"));
    assert_eq!(code(&run(d.path(), &["render", "g/shape_000.json", "--image", "none.png", "--out", "r"])), 2);
    assert_eq!(code(&run(d.path(), &["render"])), 1);

    let text = std::fs::read_to_string(d.path().join("g/shape_000.json")).unwrap();
    std::fs::write(d.path().join("v2.json"), text.replace("\"schema_version\": 1", "\"schema_version\": 2")).unwrap();
    let o = run(d.path(), &["render", "v2.json", "--out", "r"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("schema version 2"));
}

#[test]
fn render_ppm_over_image() {
    let d = tempfile::tempdir().unwrap();
    blob_image(d.path());
    let infer = ["infer", "--image", "blob.pgm", "--grid", "8x8", "--depth", "2", "--lambda", "3", "--lmax", "4", "--samples", "1", "--out", "i"];
    assert_eq!(code(&run(d.path(), &infer)), 0);
    let o = run(d.path(), &["render", "i/sample_000.json", "--image", "blob.pgm", "--overlay", "--format", "ppm", "--out", "r"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ppm = std::fs::read(d.path().join("r/sample_000.ppm")).unwrap();
    let header = b"P6\n32 32\n255\n";
    assert!(ppm.starts_with(header));
    let pixels = &ppm[header.len()..];
    assert_eq!(pixels.len(), 32 * 32 * 3);
    // some boundary pixels are drawn in red
    assert!(pixels.chunks(3).any(|p| p == [220, 30, 30]));
}
