use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use snipadapt_client::{Client, ClientError, ReportFormat};
use snipadapt_core::annotation::{DefectAnnotation, DefectOrigin, RootCause};
use snipadapt_core::api::{CreateRunRequest, RunState};
use snipadapt_core::config::LayeredSettings;
use snipadapt_core::gateway::GatewayMode;
use snipadapt_core::prompt::StrategyKind;
use snipadapt_server::{router, AppState};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

async fn spawn(runs: &std::path::Path) -> Client {
    let mut l = LayeredSettings::default();
    l.settings.benchmark = fixtures().join("benchmark.json");
    l.settings.snippets = fixtures().join("snippets.jsonl");
    l.settings.transcripts = fixtures().join("transcripts.jsonl");
    l.settings.runs_dir = runs.to_path_buf();
    l.settings.mode = GatewayMode::Replay;
    l.settings.provider.model = "fixture-model".into();
    let state = Arc::new(AppState::from_settings(l).await.unwrap());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { snipadapt_server::serve_on(listener, router(state)).await.unwrap() });
    Client::new(format!("http://{addr}/"))
}

#[tokio::test(flavor = "multi_thread")]
async fn round_trip_through_the_service() {
    let dir = tempfile::tempdir().unwrap();
    let client = spawn(dir.path()).await;
    assert!(client.list_runs().await.unwrap().is_empty());

    let req = CreateRunRequest {
        run_id: Some("e1".into()),
        ..CreateRunRequest::new(StrategyKind::Enhanced)
    };
    let started = client.create_run(&req).await.unwrap();
    assert_eq!(started.manifest.run_id, "e1");
    let done = client.wait_for_run("e1", Duration::from_millis(50)).await.unwrap();
    assert_eq!(done.state, RunState::Adapted);
    assert_eq!(done.cases_done, 5);

    let report = client.evaluate("e1", false).await.unwrap();
    let json = client.report("e1", ReportFormat::Json).await.unwrap();
    assert_eq!(json, report.to_json());
    let csv = client.report("e1", ReportFormat::Csv).await.unwrap();
    assert_eq!(csv, report.to_csv().unwrap());
    let detail = client.get_run("e1").await.unwrap();
    let passed: Vec<usize> = detail.cases.iter().map(|c| c.passed.unwrap()).collect();
    assert_eq!(passed, vec![4, 3, 5, 2, 3]);

    let view = client.case("Fixture_1.calculate_circle_area", Some("e1")).await.unwrap();
    assert_eq!(view.samples.len(), 5);
    assert!(view.samples.iter().all(|s| s.codebleu.is_some()));

    assert!(client.pending(Duration::ZERO).await.unwrap().is_empty());
    let err = client.answer("nope", vec!["a".into()]).await.unwrap_err();
    assert_eq!(err.status(), Some(reqwest::StatusCode::NOT_FOUND));

    let ack = client
        .annotate(DefectAnnotation {
            case_id: "Fixture_0.checkout".into(),
            annotator_id: "a1".into(),
            defect_origin: DefectOrigin::Overlooked,
            root_cause: RootCause::MethodMisapplication,
            instance_count: 2,
            note: "calls get_total without self".into(),
        })
        .await
        .unwrap();
    assert!(!ack.id.is_empty());
    assert!(client.annotations_csv().await.unwrap().contains("MethodMisapplication"));

    match client.get_run("missing").await {
        Err(ClientError::Api { status, message }) => {
            assert_eq!(status, reqwest::StatusCode::NOT_FOUND);
            assert!(message.contains("missing"), "{message}");
        }
        other => panic!("expected 404, got {other:?}"),
    }
}

#[tokio::test]
async fn unreachable_service_is_a_transport_error() {
    let err = Client::new("http://127.0.0.1:9").list_runs().await.unwrap_err();
    assert!(matches!(err, ClientError::Transport { .. }), "{err}");
}
