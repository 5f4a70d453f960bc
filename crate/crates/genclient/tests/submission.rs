mod common;

use std::collections::HashSet;
use std::time::Duration;

use shroomgen_genclient::{
    build_ablation_batch, pair_outputs, submit, AblationConfig, GenError, GenerationDefaults, JobManifest, JobStatus,
    MockConfig, MockServer, SubmitOptions,
};

fn local() -> std::net::SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

fn options(dir: &std::path::Path) -> SubmitOptions {
    let mut o = SubmitOptions::new(dir.join("artifacts"));
    o.base_dir = dir.to_path_buf();
    o.initial_backoff = Duration::from_millis(5);
    o.request_timeout = Duration::from_secs(10);
    o.manifest_path = Some(dir.join("manifest.json"));
    o
}

fn full_manifest(dir: &std::path::Path, n: u32, endpoint: &str) -> (JobManifest, shroomgen_core::annotate::AnnotationSet) {
    let (depths, set) = common::fixture(dir, n);
    let seeds: Vec<u64> = (0..u64::from(n)).map(|s| 1000 + s).collect();
    let jobs = build_ablation_batch(&depths, &seeds, &[AblationConfig::Full], &GenerationDefaults::default()).unwrap();
    (JobManifest::new("test", endpoint, jobs).unwrap(), set)
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn mock_echoes_control_and_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let mock = MockServer::start(local(), MockConfig::default()).await.unwrap();
    let (mut m, set) = full_manifest(dir.path(), 10, &mock.endpoint());
    let s = submit(&mut m, &options(dir.path())).await.unwrap();
    assert_eq!((s.posted, s.done, s.failed, s.skipped), (10, 10, 0, 0));
    for e in &m.entries {
        let control = e.job.request.control.as_ref().unwrap();
        let sent = std::fs::read(dir.path().join(&control.image)).unwrap();
        let got = std::fs::read(dir.path().join("artifacts").join(e.artifact.as_ref().unwrap())).unwrap();
        assert_eq!(sent, got, "{}", e.job.job_id);
        assert_eq!(e.attempts, 1);
    }
    let served = mock.served_job_ids();
    assert_eq!(served.iter().collect::<HashSet<_>>().len(), 10);

    let saved = JobManifest::load(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(saved, m);

    let index = pair_outputs(&dir.path().join("artifacts"), &m, &set).unwrap();
    assert_eq!(index.len(), set.images.len());
    for p in &index.entries {
        let img = set.image(p.annotation_image_id).unwrap();
        assert_eq!(p.source_image, img.file_name);
        let prov = img.provenance.as_ref().unwrap();
        assert_eq!((p.scene_seed, p.origin), (prov.scene_seed, prov.origin));
        assert_eq!(p.annotation_ids, vec![p.annotation_image_id]);
    }
    let coco = index.to_annotation_set(&set).unwrap();
    coco.validate().unwrap();
    assert_eq!(coco.annotations.len(), set.annotations.len());

    // Resubmitting a finished batch posts nothing.
    let before = mock.request_count();
    let s = submit(&mut m, &options(dir.path())).await.unwrap();
    assert_eq!((s.posted, s.skipped), (0, 10));
    assert_eq!(mock.request_count(), before);
    mock.shutdown();
    mock.wait().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn unreachable_endpoint_fails_every_job() {
    let dir = tempfile::tempdir().unwrap();
    let port = std::net::TcpListener::bind(local()).unwrap().local_addr().unwrap().port();
    let (mut m, _) = full_manifest(dir.path(), 3, &format!("http://127.0.0.1:{port}"));
    let mut o = options(dir.path());
    o.max_attempts = 2;
    let s = submit(&mut m, &o).await.unwrap();
    assert_eq!((s.done, s.failed), (0, 3));
    let saved = JobManifest::load(&dir.path().join("manifest.json")).unwrap();
    for e in &saved.entries {
        match &e.status {
            JobStatus::Failed { reason } => assert!(reason.starts_with("connection"), "{reason}"),
            other => panic!("{other:?}"),
        }
        assert_eq!(e.attempts, 2);
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn resubmission_posts_only_failed_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let mock = MockServer::start(local(), MockConfig::default()).await.unwrap();
    let (mut m, _) = full_manifest(dir.path(), 5, &mock.endpoint());
    std::fs::create_dir_all(dir.path().join("artifacts")).unwrap();
    for i in 0..5 {
        m.transition(i, JobStatus::Submitted).unwrap();
        if i < 3 {
            let name = format!("{}.png", m.entries[i].job.job_id);
            std::fs::write(dir.path().join("artifacts").join(&name), b"\x89PNG\r\n\x1a\n").unwrap();
            m.entries[i].artifact = Some(name);
            m.transition(i, JobStatus::Done).unwrap();
        } else {
            m.transition(i, JobStatus::Failed { reason: "connection: refused".into() }).unwrap();
        }
    }
    let s = submit(&mut m, &options(dir.path())).await.unwrap();
    assert_eq!((s.posted, s.done, s.skipped), (2, 2, 3));
    let served: HashSet<String> = mock.served_job_ids().into_iter().collect();
    let expected: HashSet<String> = m.entries[3..].iter().map(|e| e.job.job_id.clone()).collect();
    assert_eq!(served, expected);
    assert_eq!(m.count(|s| s.is_done()), 5);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn killed_service_leaves_resumable_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let first = MockServer::start(
        local(),
        MockConfig {
            shutdown_after: Some(4),
            fail_first: 0,
        },
    )
    .await
    .unwrap();
    let (mut m, set) = full_manifest(dir.path(), 10, &first.endpoint());
    let mut o = options(dir.path());
    o.concurrency = 2;
    o.max_attempts = 2;
    let s = submit(&mut m, &o).await.unwrap();
    assert_eq!((s.done, s.failed), (4, 6));
    let served_first = first.served_job_ids();
    first.wait().await.unwrap();

    let mut m = JobManifest::load(&dir.path().join("manifest.json")).unwrap();
    let second = MockServer::start(local(), MockConfig::default()).await.unwrap();
    m.endpoint = second.endpoint();
    let s = submit(&mut m, &o).await.unwrap();
    assert_eq!((s.posted, s.done, s.failed, s.skipped), (6, 6, 0, 4));
    let served_second = second.served_job_ids();

    let mut all: Vec<String> = served_first.iter().chain(&served_second).cloned().collect();
    all.sort();
    let mut ids: Vec<String> = m.entries.iter().map(|e| e.job.job_id.clone()).collect();
    ids.sort();
    assert_eq!(all, ids, "every job served exactly once");
    assert_eq!(pair_outputs(&dir.path().join("artifacts"), &m, &set).unwrap().len(), 10);
    second.shutdown();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn transient_errors_are_retried() {
    let dir = tempfile::tempdir().unwrap();
    let mock = MockServer::start(
        local(),
        MockConfig {
            shutdown_after: None,
            fail_first: 2,
        },
    )
    .await
    .unwrap();
    let (mut m, _) = full_manifest(dir.path(), 1, &mock.endpoint());
    let s = submit(&mut m, &options(dir.path())).await.unwrap();
    assert_eq!(s.done, 1);
    assert_eq!(m.entries[0].attempts, 3);
    assert_eq!(mock.request_count(), 3);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn non_png_response_is_a_protocol_failure() {
    let dir = tempfile::tempdir().unwrap();
    let listener = tokio::net::TcpListener::bind(local()).await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = axum::Router::new().route("/generate", axum::routing::post(|| async { "not an image" }));
    tokio::spawn(async move { axum::serve(listener, app).await });
    let (mut m, _) = full_manifest(dir.path(), 1, &format!("http://{addr}"));
    submit(&mut m, &options(dir.path())).await.unwrap();
    match &m.entries[0].status {
        JobStatus::Failed { reason } => assert!(reason.starts_with("protocol"), "{reason}"),
        other => panic!("{other:?}"),
    }
    assert_eq!(m.entries[0].attempts, 1);
}

#[test]
fn pairing_names_missing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (mut m, set) = full_manifest(dir.path(), 3, "http://unused");
    let art = dir.path().join("artifacts");
    std::fs::create_dir_all(&art).unwrap();
    for e in &mut m.entries {
        std::fs::write(art.join(format!("{}.png", e.job.job_id)), b"png").unwrap();
    }
    assert_eq!(pair_outputs(&art, &m, &set).unwrap().len(), 3);

    let gone = m.entries[1].job.job_id.clone();
    std::fs::remove_file(art.join(format!("{gone}.png"))).unwrap();
    match pair_outputs(&art, &m, &set) {
        Err(GenError::Pairing(msg)) => assert!(msg.contains(&gone), "{msg}"),
        other => panic!("{other:?}"),
    }

    std::fs::write(art.join(format!("{gone}.png")), b"png").unwrap();
    std::fs::write(art.join("stray.png"), b"png").unwrap();
    match pair_outputs(&art, &m, &set) {
        Err(GenError::Pairing(msg)) => assert!(msg.contains("stray.png"), "{msg}"),
        other => panic!("{other:?}"),
    }
    std::fs::remove_file(art.join("stray.png")).unwrap();

    // An annotated image the batch never covered is an orphan annotation.
    m.entries.pop();
    let last = set.images[2].file_name.clone();
    std::fs::remove_dir_all(&art).unwrap();
    std::fs::create_dir_all(&art).unwrap();
    for e in &m.entries {
        std::fs::write(art.join(format!("{}.png", e.job.job_id)), b"png").unwrap();
    }
    match pair_outputs(&art, &m, &set) {
        Err(GenError::Pairing(msg)) => assert!(msg.contains(&last), "{msg}"),
        other => panic!("{other:?}"),
    }
}
