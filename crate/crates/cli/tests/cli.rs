mod common;

use std::process::Command;

use common::{cli, small_config, snapshot};
use shroomgen_cli::CliError;
use shroomgen_core::annotate::AnnotationSet;
use shroomgen_core::eval::{FeatureSet, Prediction};
use shroomgen_genclient::{JobManifest, JobStatus};

fn path(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_scenes_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let cfg = small_config(d.path(), 1, 3, 64, 36);
        cli(&["--config", path(&cfg), "gen-scenes"]).unwrap();
    }
    let (sa, sb) = (snapshot(&a.path().join("out")), snapshot(&b.path().join("out")));
    assert_eq!(sa.len(), 4);
    assert_eq!(sa, sb);
}

#[test]
fn zero_scenes_writes_nothing_and_render_refuses() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path(), 1, 3, 64, 36);
    cli(&["--config", path(&cfg), "--count", "0", "gen-scenes"]).unwrap();
    assert!(snapshot(&d.path().join("out")).is_empty());
    assert!(matches!(cli(&["--config", path(&cfg), "render"]), Err(CliError::Validation(_))));
}

#[test]
fn render_resumes_and_skips_current_outputs() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path(), 5, 3, 96, 54);
    let out = d.path().join("out");
    cli(&["--config", path(&cfg), "gen-scenes"]).unwrap();
    cli(&["--config", path(&cfg), "render"]).unwrap();
    let full = snapshot(&out);

    // An interrupted run: one image missing, another truncated.
    let renders: Vec<_> = full.keys().filter(|p| p.starts_with("renders") && p.extension().unwrap() == "png").collect();
    std::fs::remove_file(out.join(renders[0])).unwrap();
    std::fs::write(out.join(renders[4]), b"partial").unwrap();
    let ctx = shroomgen_cli::context(&global(&cfg)).unwrap();
    let s = shroomgen_cli::stages::render(&ctx).unwrap();
    assert_eq!(s.rendered, 2);
    assert_eq!(snapshot(&out), full);

    let s = shroomgen_cli::stages::render(&ctx).unwrap();
    assert_eq!((s.rendered, s.skipped), (0, 3));

    // A changed descriptor is picked up.
    let scene = full.keys().find(|p| p.starts_with("scenes") && !p.ends_with("index.json")).unwrap();
    let mut doc: serde_json::Value = serde_json::from_slice(&full[scene]).unwrap();
    doc["placements"].as_array_mut().unwrap().truncate(1);
    std::fs::write(out.join(scene), serde_json::to_vec_pretty(&doc).unwrap()).unwrap();
    assert_eq!(shroomgen_cli::stages::render(&ctx).unwrap().rendered, 1);
}

fn global(cfg: &std::path::Path) -> shroomgen_cli::GlobalArgs {
    use clap::Parser;
    shroomgen_cli::Cli::try_parse_from(["shroomgen", "--config", path(cfg), "render"])
        .unwrap()
        .global
}

#[test]
fn pipeline_independent_of_thread_count() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (d, j) in [(&a, "1"), (&b, "3")] {
        let cfg = small_config(d.path(), 11, 2, 128, 72);
        cli(&["--config", path(&cfg), "--jobs", j, "pipeline"]).unwrap();
    }
    let (sa, sb) = (snapshot(&a.path().join("out")), snapshot(&b.path().join("out")));
    assert!(sa.keys().any(|p| p.starts_with("tiles")));
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (k, v) in &sa {
        assert!(sb[k] == *v, "{} differs", k.display());
    }
}

#[test]
fn dry_run_manifest_and_mock_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path(), 2, 2, 128, 72);
    let out = d.path().join("out");
    cli(&["--config", path(&cfg), "pipeline"]).unwrap();
    cli(&["--config", path(&cfg), "--count", "2", "--dry-run", "submit"]).unwrap();
    let m = JobManifest::load(&out.join("jobs/manifest.json")).unwrap();
    assert_eq!(m.entries.len(), 9 * 2);
    assert!(m.entries.iter().all(|e| e.status == JobStatus::Pending));

    let rt = tokio::runtime::Runtime::new().unwrap();
    let mock = rt
        .block_on(shroomgen_genclient::MockServer::start(
            "127.0.0.1:0".parse().unwrap(),
            Default::default(),
        ))
        .unwrap();
    cli(&["--config", path(&cfg), "--endpoint", &mock.endpoint(), "submit"]).unwrap();
    let m = JobManifest::load(&out.join("jobs/manifest.json")).unwrap();
    assert!(m.entries.iter().all(|e| e.status == JobStatus::Done));
    assert_eq!(mock.served_job_ids().len(), 18);
    let generated = AnnotationSet::load(&out.join("generated/instances.json")).unwrap();
    // Text-only images are indexed but not annotated.
    assert_eq!(generated.images.len(), 8 * 2);
    generated.validate().unwrap();

    // A different batch needs --force.
    assert!(matches!(
        cli(&["--config", path(&cfg), "--count", "1", "jobs"]),
        Err(CliError::Validation(_))
    ));
    cli(&["--config", path(&cfg), "--count", "1", "--force", "jobs"]).unwrap();
    assert_eq!(JobManifest::load(&out.join("jobs/manifest.json")).unwrap().entries.len(), 9);
}

#[test]
fn eval_and_distance_reports() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path(), 4, 1, 128, 72);
    let out = d.path().join("out");
    cli(&["--config", path(&cfg), "pipeline"]).unwrap();
    // Scenes hold more instances than the default 100 detections per image.
    let mut doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&cfg).unwrap()).unwrap();
    doc["metrics"] = serde_json::json!({"eval": {"max_dets": 1000}});
    std::fs::write(&cfg, serde_json::to_vec(&doc).unwrap()).unwrap();
    let gt = AnnotationSet::load(&out.join("annotations/instances.json")).unwrap();
    let preds: Vec<Prediction> = gt
        .annotations
        .iter()
        .map(|a| Prediction::from_rle(a.image_id, 1.0, &a.segmentation.to_rle().unwrap()))
        .collect();
    let pred_path = d.path().join("preds.json");
    std::fs::write(&pred_path, serde_json::to_vec(&preds).unwrap()).unwrap();
    cli(&["--config", path(&cfg), "eval", "--pred", path(&pred_path)]).unwrap();
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("reports/eval.json")).unwrap()).unwrap();
    for k in ["ap", "ar", "f1", "miou"] {
        assert_eq!(report[k], 1.0, "{k}");
    }

    let x = FeatureSet::from_rows((0..20).map(|i| vec![i as f64, (i * i) as f64 * 0.1, 1.0 / (i + 1) as f64]).collect(), "x").unwrap();
    let f = d.path().join("x.feat");
    x.save(&f).unwrap();
    cli(&["--config", path(&cfg), "distance", "--a", path(&f), "--b", path(&f)]).unwrap();
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("reports/distance.json")).unwrap()).unwrap();
    assert!(report["fid"].as_f64().unwrap().abs() <= 1e-8);
}

fn exit_code(args: &[&str], env: &[(&str, &str)]) -> i32 {
    let mut c = Command::new(env!("CARGO_BIN_EXE_shroomgen"));
    c.args(args).env("RUST_LOG", "off").env_remove("SHROOMGEN_ENDPOINT");
    for (k, v) in env {
        c.env(k, v);
    }
    c.status().unwrap().code().unwrap()
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let bad = d.path().join("bad.json");
    std::fs::write(&bad, r#"{"scene_cuont": 3}"#).unwrap();
    assert_eq!(exit_code(&["--config", path(&bad), "gen-scenes"], &[]), 1);
    assert_eq!(exit_code(&["--config", path(&d.path().join("absent.json")), "gen-scenes"], &[]), 2);

    let cfg = small_config(d.path(), 3, 1, 128, 72);
    assert_eq!(exit_code(&["--config", path(&cfg), "pipeline"], &[]), 0);
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let dead = format!("http://127.0.0.1:{port}");
    assert_eq!(
        exit_code(&["--config", path(&cfg), "--count", "1", "submit"], &[("SHROOMGEN_ENDPOINT", &dead)]),
        3
    );
    let m = JobManifest::load(&d.path().join("out/jobs/manifest.json")).unwrap();
    assert!(m
        .entries
        .iter()
        .all(|e| matches!(&e.status, JobStatus::Failed { reason } if reason.starts_with("connection"))));
}
