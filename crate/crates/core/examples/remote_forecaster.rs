//! Driving a level with the remote forecaster over line-delimited JSON.
//!
//! With `SCARCITY_LLM_ENDPOINT` set, the episode talks to that server.
//! Otherwise a toy server is started in-process: it answers with smoothed
//! counts of the history it is sent and ignores the model id, so every L4
//! agent sees the same forecast.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::thread;

use scarcity::config::{ForecasterKind, Level, LevelConfig};
use scarcity::engine::simulate;
use scarcity::forecast::{BridgeRequest, BridgeResponse, ENDPOINT_ENV};

fn toy_server() -> std::io::Result<String> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?.to_string();
    thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            thread::spawn(move || {
                let mut out = stream.try_clone().expect("clone socket");
                let _ = out.write_all(b"READY\n");
                for line in BufReader::new(stream).lines().map_while(Result::ok) {
                    let req: BridgeRequest = serde_json::from_str(&line).expect("request");
                    let mut probs = vec![1.0; req.n_max + 1];
                    for &d in &req.history {
                        probs[d as usize] += 1.0;
                    }
                    let resp = BridgeResponse {
                        id: req.id,
                        probs: Some(probs),
                        model: Some(req.model),
                        latency_ms: Some(0.0),
                        warning: None,
                        error: None,
                    };
                    let _ = writeln!(out, "{}", serde_json::to_string(&resp).expect("json"));
                }
            });
        }
    });
    Ok(addr)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let endpoint = match std::env::var(ENDPOINT_ENV) {
        Ok(e) => e,
        Err(_) => toy_server()?,
    };
    println!("forecaster at {endpoint}");

    for level in [Level::L2, Level::L4] {
        let mut cfg = LevelConfig::new(level, 7, 2);
        cfg.rounds = 100;
        cfg.warmup = 10;
        cfg.forecaster_kind = ForecasterKind::Remote {
            endpoint: Some(endpoint.clone()),
        };
        let ep = simulate(&cfg, 0)?;
        let last = ep.records.last().expect("rounds ran");
        println!(
            "{level}: overload {:.3}, last round p_llm {:.3?}",
            ep.overload_rate, last.p_llm
        );
    }
    Ok(())
}
