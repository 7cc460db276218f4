mod common;

use common::{spawn, Behaviour};
use scarcity::config::{ForecasterKind, Level, LevelConfig};
use scarcity::engine::{run_episode, simulate};
use scarcity::forecast::{forecast, Backend, ForecasterBinding, HistoryWindow, RemoteClient};
use scarcity::harness::cli::{execute, parse_cli, EXIT_OK, EXIT_REMOTE_UNAVAILABLE};
use scarcity::harness::{run_sweep, SweepPlan};
use scarcity::Error;

fn history(demands: &[u32]) -> HistoryWindow {
    HistoryWindow::from_demands(10, 7, demands).unwrap()
}

#[test]
fn client_skips_ready_and_renormalises() {
    let server = spawn(Behaviour::Empirical);
    let mut client = RemoteClient::connect(&server.endpoint).unwrap();
    let dist = client.forecast(&history(&[3, 1, 2, 4]), 7, "gpt2", 1.0).unwrap();
    assert_eq!(dist.n_max(), 7);
    assert!((dist.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((dist.probs()[3] - 2.0 / 12.0).abs() < 1e-12);
    // a second request on the same connection
    client.forecast(&history(&[0]), 7, "opt-125m", 0.7).unwrap();
    assert_eq!(server.requests.load(std::sync::atomic::Ordering::SeqCst), 2);
}

#[test]
fn one_shot_forecast_matches_synthetic_empirical() {
    let server = spawn(Behaviour::Empirical);
    let h = history(&[5, 5, 2, 0, 7]);
    let remote = ForecasterBinding::new(Backend::Remote {
        endpoint: server.endpoint.clone(),
        model_id: "gpt2".into(),
    });
    let local = ForecasterBinding::new(Backend::Empirical { smoothing: 1.0 });
    let a = forecast(&remote, &h, 7, 1.0).unwrap();
    let b = forecast(&local, &h, 7, 1.0).unwrap();
    for (x, y) in a.probs().iter().zip(b.probs()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn empty_history_is_rejected_before_sending() {
    let server = spawn(Behaviour::Empirical);
    let mut client = RemoteClient::connect(&server.endpoint).unwrap();
    let err = client.forecast(&HistoryWindow::new(10, 7), 7, "gpt2", 1.0).unwrap_err();
    assert!(matches!(err, Error::EmptyPrompt));
}

#[test]
fn server_error_is_forecast_unavailable() {
    let server = spawn(Behaviour::Error);
    let mut client = RemoteClient::connect(&server.endpoint).unwrap();
    let err = client.forecast(&history(&[1]), 7, "gpt2", 1.0).unwrap_err();
    assert!(matches!(err, Error::ForecastUnavailable { ref cause } if cause.contains("model not loaded")));
}

#[test]
fn remote_l2_episode_equals_synthetic_episode() {
    let server = spawn(Behaviour::Empirical);
    let mut cfg = LevelConfig::new(Level::L2, 7, 2);
    cfg.rounds = 60;
    cfg.warmup = 10;
    let local = simulate(&cfg, 3).unwrap();
    cfg.forecaster_kind = ForecasterKind::Remote {
        endpoint: Some(server.endpoint.clone()),
    };
    let remote = simulate(&cfg, 3).unwrap();
    assert_eq!(local.demands(), remote.demands());
    for (a, b) in local.records.iter().zip(&remote.records) {
        for (x, y) in a.p_llm.iter().zip(&b.p_llm) {
            assert!((x - y).abs() < 1e-12);
        }
    }
    // one shared call per round
    assert_eq!(server.requests.load(std::sync::atomic::Ordering::SeqCst), 60);
}

#[test]
fn lost_server_aborts_with_partial_log() {
    let server = spawn(Behaviour::DieAfter(25));
    let mut cfg = LevelConfig::new(Level::L2, 7, 2);
    cfg.rounds = 60;
    let binding = ForecasterBinding::shared(Backend::Remote {
        endpoint: server.endpoint.clone(),
        model_id: "gpt2".into(),
    });
    match run_episode(&cfg, 0, &[binding], None).unwrap_err() {
        Error::EpisodeAborted { round, partial, source } => {
            assert_eq!(round, 25);
            assert_eq!(partial.len(), 25);
            assert!(matches!(*source, Error::ForecastUnavailable { .. }));
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn sweep_records_remote_failures() {
    let mut plan = SweepPlan::new(vec![Level::L2], vec![7]);
    plan.capacity_range = Some((2, 2));
    plan.template.seeds = vec![0, 1];
    plan.template.rounds = 30;
    plan.template.warmup = 5;
    plan.template.forecaster_kind = ForecasterKind::Remote {
        endpoint: Some("127.0.0.1:1".into()),
    };
    let summary = run_sweep(&plan).unwrap();
    assert_eq!(summary.failures.len(), 2);
    assert!(summary.failures.iter().all(|f| f.remote_unavailable));
}

#[test]
fn serve_check_reports_round_trip() {
    let server = spawn(Behaviour::Empirical);
    let cmd = parse_cli(["scarcity", "serve-check", "--endpoint", &server.endpoint]).unwrap();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    assert_eq!(execute(cmd, &mut out, &mut err), EXIT_OK);
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with(&format!("ok {} model=gpt2 n_max=7", server.endpoint)), "{text}");
}

#[test]
fn serve_check_without_server_exits_four() {
    let cmd = parse_cli(["scarcity", "serve-check", "--endpoint", "127.0.0.1:1"]).unwrap();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    assert_eq!(execute(cmd, &mut out, &mut err), EXIT_REMOTE_UNAVAILABLE);
}
