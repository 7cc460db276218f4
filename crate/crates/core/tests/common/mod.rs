//! In-process stand-in for the remote forecaster server.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use serde_json::{json, Value};

#[derive(Clone, Copy)]
pub enum Behaviour {
    /// Laplace-smoothed counts (smoothing 1), scaled by 3 so the client has
    /// to renormalise.
    Empirical,
    /// Answer with an `error` field.
    Error,
    /// Answer this many requests, then drop the connection.
    DieAfter(usize),
}

pub struct MockServer {
    pub endpoint: String,
    pub requests: Arc<AtomicUsize>,
}

pub fn spawn(behaviour: Behaviour) -> MockServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = listener.local_addr().unwrap().to_string();
    let requests = Arc::new(AtomicUsize::new(0));
    let counter = requests.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { return };
            let counter = counter.clone();
            thread::spawn(move || serve(stream, behaviour, counter));
        }
    });
    MockServer { endpoint, requests }
}

fn serve(stream: std::net::TcpStream, behaviour: Behaviour, counter: Arc<AtomicUsize>) {
    let mut writer = stream.try_clone().unwrap();
    let reader = BufReader::new(stream);
    if writer.write_all(b"READY\n").is_err() {
        return;
    }
    for (answered, line) in reader.lines().enumerate() {
        let Ok(line) = line else { return };
        let req: Value = serde_json::from_str(&line).unwrap();
        counter.fetch_add(1, Ordering::SeqCst);
        if let Behaviour::DieAfter(k) = behaviour {
            if answered >= k {
                return;
            }
        }
        let resp = match behaviour {
            Behaviour::Error => json!({"id": req["id"], "error": "model not loaded"}),
            _ => {
                let n = req["n_max"].as_u64().unwrap() as usize;
                let mut counts = vec![1.0; n + 1];
                for d in req["history"].as_array().unwrap() {
                    counts[d.as_u64().unwrap() as usize] += 1.0;
                }
                let probs: Vec<f64> = counts.iter().map(|c| 3.0 * c).collect();
                json!({"id": req["id"], "probs": probs, "model": req["model"], "latency_ms": 0.1})
            }
        };
        if writeln!(writer, "{resp}").is_err() {
            return;
        }
    }
}
