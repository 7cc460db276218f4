//! Demand forecasters.
//!
//! A forecaster maps the recent demand history to a distribution over next
//! round's demand `0..=N`. The engine then sums the mass at or below capacity
//! to get `p_llm`, the forecaster's belief that the resource will not overload.
//!
//! Three synthetic backends run in-process. The remote backend talks to a
//! language-model server over line-delimited JSON on TCP: one request object
//! per line, one response object per line.
//!
//! ```text
//! -> {"id":0,"history":[3,1,2,4],"n_max":7,"model":"gpt2","temperature":1.0}
//! <- {"id":0,"probs":[...8 values...],"model":"gpt2","latency_ms":4.1}
//! ```
//!
//! The server may announce itself with a `READY <models>` line; the client
//! skips such lines.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable naming the remote forecaster endpoint.
pub const ENDPOINT_ENV: &str = "SCARCITY_LLM_ENDPOINT";

const NORMALIZATION_TOL: f64 = 1e-9;

/// The last `w` demands, most recent last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryWindow {
    demands: VecDeque<u32>,
    window: usize,
    n_agents: u32,
}

impl HistoryWindow {
    pub fn new(window: usize, n_agents: usize) -> Self {
        Self {
            demands: VecDeque::with_capacity(window),
            window,
            n_agents: n_agents as u32,
        }
    }

    pub fn from_demands(window: usize, n_agents: usize, demands: &[u32]) -> Result<Self> {
        let mut h = Self::new(window, n_agents);
        for &d in demands {
            h.push(d)?;
        }
        Ok(h)
    }

    /// Appends a demand, evicting the oldest once the window is full.
    pub fn push(&mut self, demand: u32) -> Result<()> {
        if demand > self.n_agents {
            return Err(Error::InvalidArgument(format!(
                "demand {demand} exceeds population {}",
                self.n_agents
            )));
        }
        if self.demands.len() == self.window {
            self.demands.pop_front();
        }
        self.demands.push_back(demand);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.demands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demands.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.demands.iter().copied()
    }

    pub fn to_vec(&self) -> Vec<u32> {
        self.iter().collect()
    }
}

/// Probability vector over demand outcomes `0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DemandDistribution {
    probs: Vec<f64>,
}

impl DemandDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("empty distribution".into()));
        }
        if let Some(bad) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidArgument(format!("negative or non-finite entry {bad}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidArgument(format!("entries sum to {sum}, not 1")));
        }
        Ok(Self { probs })
    }

    /// Scales non-negative weights to sum to one.
    pub fn renormalized(weights: Vec<f64>) -> Result<Self> {
        if let Some(bad) = weights.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidArgument(format!("negative or non-finite weight {bad}")));
        }
        let total: f64 = weights.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(Error::InvalidArgument("weights have zero total mass".into()));
        }
        Ok(Self {
            probs: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(n_agents: usize) -> Self {
        let cell = 1.0 / (n_agents + 1) as f64;
        Self {
            probs: vec![cell; n_agents + 1],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Largest demand in the support, i.e. `N`.
    pub fn n_max(&self) -> usize {
        self.probs.len() - 1
    }
}

impl TryFrom<Vec<f64>> for DemandDistribution {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DemandDistribution> for Vec<f64> {
    fn from(d: DemandDistribution) -> Self {
        d.probs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    Uniform,
    Fixed(DemandDistribution),
    /// Laplace-smoothed frequencies of the history window.
    Empirical {
        smoothing: f64,
    },
    Remote {
        endpoint: String,
        model_id: String,
    },
}

/// The forecaster an agent (or, when `shared`, the whole population) consults.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecasterBinding {
    pub backend: Backend,
    pub shared: bool,
}

impl ForecasterBinding {
    pub fn new(backend: Backend) -> Self {
        Self {
            backend,
            shared: false,
        }
    }

    pub fn shared(backend: Backend) -> Self {
        Self {
            backend,
            shared: true,
        }
    }
}

/// Forecast next-round demand.
///
/// Synthetic backends are pure and ignore `temperature`; the remote backend
/// forwards it and opens a one-shot connection. Use [`RemoteClient`] directly
/// to keep a connection across calls.
pub fn forecast(
    binding: &ForecasterBinding,
    history: &HistoryWindow,
    n_agents: usize,
    temperature: f64,
) -> Result<DemandDistribution> {
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::InvalidArgument(format!("temperature {temperature} must be > 0")));
    }
    match &binding.backend {
        Backend::Remote { endpoint, model_id } => {
            RemoteClient::connect(endpoint)?.forecast(history, n_agents, model_id, temperature)
        }
        other => synthetic_forecast(other, history, n_agents),
    }
}

pub(crate) fn synthetic_forecast(
    backend: &Backend,
    history: &HistoryWindow,
    n_agents: usize,
) -> Result<DemandDistribution> {
    match backend {
        Backend::Uniform => Ok(DemandDistribution::uniform(n_agents)),
        Backend::Fixed(dist) => {
            if dist.n_max() != n_agents {
                return Err(Error::InvalidArgument(format!(
                    "fixed forecast covers 0..={}, population is {n_agents}",
                    dist.n_max()
                )));
            }
            Ok(dist.clone())
        }
        Backend::Empirical { smoothing } => {
            if history.is_empty() {
                return Ok(DemandDistribution::uniform(n_agents));
            }
            let mut counts = vec![0.0_f64; n_agents + 1];
            for d in history.iter() {
                counts[d as usize] += 1.0;
            }
            let denom = history.len() as f64 + smoothing * (n_agents + 1) as f64;
            Ok(DemandDistribution {
                probs: counts.into_iter().map(|c| (c + smoothing) / denom).collect(),
            })
        }
        Backend::Remote { .. } => unreachable!("remote backend is not synthetic"),
    }
}

/// Probability that demand stays at or below `capacity`.
pub fn p_llm(dist: &DemandDistribution, capacity: usize) -> Result<f64> {
    let n = dist.n_max();
    if capacity > n {
        return Err(Error::InvalidArgument(format!("capacity {capacity} outside 0..={n}")));
    }
    if capacity == n {
        return Ok(1.0);
    }
    let mass: f64 = dist.probs[..=capacity].iter().sum();
    Ok(mass.clamp(0.0, 1.0))
}

/// `3,1,2,4,`: comma-joined decimal demands with a trailing comma.
pub fn render_prompt(history: &HistoryWindow) -> Result<String> {
    if history.is_empty() {
        return Err(Error::EmptyPrompt);
    }
    let mut s = String::new();
    for d in history.iter() {
        s.push_str(&d.to_string());
        s.push(',');
    }
    Ok(s)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BridgeRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u64>,
    pub history: Vec<u32>,
    pub n_max: usize,
    pub model: String,
    pub temperature: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BridgeResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u64>,
    #[serde(default)]
    pub probs: Option<Vec<f64>>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub latency_ms: Option<f64>,
    #[serde(default)]
    pub warning: Option<String>,
    #[serde(default)]
    pub error: Option<String>,
}

/// Resolves the endpoint from an explicit value or the environment.
pub fn resolve_endpoint(explicit: Option<&str>) -> Result<String> {
    if let Some(e) = explicit {
        return Ok(e.to_string());
    }
    std::env::var(ENDPOINT_ENV).map_err(|_| Error::ForecastUnavailable {
        cause: format!("no endpoint given and {ENDPOINT_ENV} is unset"),
    })
}

/// A persistent connection to the remote forecaster server.
pub struct RemoteClient {
    endpoint: String,
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    next_id: u64,
}

fn unavailable(cause: impl std::fmt::Display) -> Error {
    Error::ForecastUnavailable {
        cause: cause.to_string(),
    }
}

impl RemoteClient {
    pub const TIMEOUT: Duration = Duration::from_secs(30);

    pub fn connect(endpoint: &str) -> Result<Self> {
        let addr = endpoint
            .to_socket_addrs()
            .map_err(|e| unavailable(format!("{endpoint}: {e}")))?
            .next()
            .ok_or_else(|| unavailable(format!("{endpoint}: no address")))?;
        let stream = TcpStream::connect_timeout(&addr, Self::TIMEOUT)
            .map_err(|e| unavailable(format!("{endpoint}: {e}")))?;
        stream.set_read_timeout(Some(Self::TIMEOUT)).map_err(unavailable)?;
        stream.set_write_timeout(Some(Self::TIMEOUT)).map_err(unavailable)?;
        let writer = stream.try_clone().map_err(unavailable)?;
        Ok(Self {
            endpoint: endpoint.to_string(),
            reader: BufReader::new(stream),
            writer,
            next_id: 0,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Sends one request and waits for its response line.
    pub fn request(&mut self, mut req: BridgeRequest) -> Result<BridgeResponse> {
        let id = self.next_id;
        self.next_id += 1;
        req.id = Some(id);
        let mut line = serde_json::to_string(&req)?;
        line.push('\n');
        self.writer.write_all(line.as_bytes()).map_err(unavailable)?;
        self.writer.flush().map_err(unavailable)?;

        loop {
            let mut buf = String::new();
            let read = self.reader.read_line(&mut buf).map_err(unavailable)?;
            if read == 0 {
                return Err(unavailable(format!("{}: connection closed", self.endpoint)));
            }
            let text = buf.trim();
            if text.is_empty() || text.starts_with("READY") {
                continue;
            }
            let resp: BridgeResponse = serde_json::from_str(text)
                .map_err(|e| unavailable(format!("malformed response {text:?}: {e}")))?;
            if let Some(err) = resp.error {
                return Err(unavailable(format!("server error: {err}")));
            }
            if resp.id.is_some_and(|got| got != id) {
                return Err(unavailable(format!(
                    "response id {:?} does not match request {id}",
                    resp.id
                )));
            }
            return Ok(resp);
        }
    }

    pub fn forecast(
        &mut self,
        history: &HistoryWindow,
        n_agents: usize,
        model_id: &str,
        temperature: f64,
    ) -> Result<DemandDistribution> {
        if history.is_empty() {
            return Err(Error::EmptyPrompt);
        }
        let resp = self.request(BridgeRequest {
            id: None,
            history: history.to_vec(),
            n_max: n_agents,
            model: model_id.to_string(),
            temperature,
        })?;
        let probs = resp
            .probs
            .ok_or_else(|| unavailable("response carries no probs"))?;
        if probs.len() != n_agents + 1 {
            return Err(unavailable(format!(
                "expected {} probabilities, got {}",
                n_agents + 1,
                probs.len()
            )));
        }
        DemandDistribution::renormalized(probs).map_err(unavailable)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(d: &[u32]) -> HistoryWindow {
        HistoryWindow::from_demands(10, 7, d).unwrap()
    }

    fn fc(backend: Backend, d: &[u32]) -> DemandDistribution {
        forecast(&ForecasterBinding::new(backend), &window(d), 7, 1.0).unwrap()
    }

    #[test]
    fn uniform_gives_eighths() {
        let d = fc(Backend::Uniform, &[1, 2]);
        assert!(d.probs().iter().all(|&p| p == 0.125));
    }

    #[test]
    fn empirical_laplace_smoothing() {
        let d = fc(Backend::Empirical { smoothing: 1.0 }, &[3, 3, 3, 3]);
        for (k, &p) in d.probs().iter().enumerate() {
            let want = if k == 3 { 5.0 / 12.0 } else { 1.0 / 12.0 };
            assert!((p - want).abs() < 1e-15, "k={k} p={p}");
        }
    }

    #[test]
    fn empirical_on_empty_history_is_uniform() {
        let d = fc(Backend::Empirical { smoothing: 1.0 }, &[]);
        assert_eq!(d, DemandDistribution::uniform(7));
    }

    #[test]
    fn heavy_smoothing_approaches_uniform() {
        let d = fc(Backend::Empirical { smoothing: 1e6 }, &[7, 7, 7, 7, 7, 0, 1, 7, 7, 7]);
        assert!(d.probs().iter().all(|&p| (p - 0.125).abs() < 1e-4));
    }

    #[test]
    fn fixed_is_identity() {
        let v = vec![0.1, 0.2, 0.3, 0.4, 0.0, 0.0, 0.0, 0.0];
        let dist = DemandDistribution::new(v.clone()).unwrap();
        assert_eq!(fc(Backend::Fixed(dist), &[5]).probs(), v.as_slice());
    }

    #[test]
    fn p_llm_examples() {
        assert_eq!(p_llm(&DemandDistribution::uniform(7), 3).unwrap(), 0.5);
        let d = DemandDistribution::new(vec![0.1, 0.2, 0.3, 0.4, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((p_llm(&d, 1).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(p_llm(&d, 7).unwrap(), 1.0);
        assert!(matches!(p_llm(&d, 8), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn prompt_rendering() {
        assert_eq!(render_prompt(&window(&[3, 1, 2, 4])).unwrap(), "3,1,2,4,");
        assert_eq!(render_prompt(&window(&[0])).unwrap(), "0,");
        let wide = HistoryWindow::from_demands(10, 11, &[10, 2]).unwrap();
        assert_eq!(render_prompt(&wide).unwrap(), "10,2,");
        assert!(matches!(render_prompt(&window(&[])), Err(Error::EmptyPrompt)));
    }

    #[test]
    fn window_evicts_oldest() {
        let mut h = HistoryWindow::new(3, 7);
        for d in [1, 2, 3, 4] {
            h.push(d).unwrap();
        }
        assert_eq!(h.to_vec(), vec![2, 3, 4]);
        assert!(h.push(8).is_err());
    }

    #[test]
    fn distribution_validation() {
        assert!(DemandDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(DemandDistribution::new(vec![-0.1, 1.1]).is_err());
        let r = DemandDistribution::renormalized(vec![1.0, 3.0]).unwrap();
        assert_eq!(r.probs(), &[0.25, 0.75]);
        assert!(DemandDistribution::renormalized(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn non_positive_temperature_is_rejected() {
        let b = ForecasterBinding::new(Backend::Uniform);
        assert!(forecast(&b, &window(&[1]), 7, 0.0).is_err());
    }

    #[test]
    fn unreachable_remote_is_forecast_unavailable() {
        // Port 1 on localhost is reserved and closed in practice.
        let b = ForecasterBinding::new(Backend::Remote {
            endpoint: "127.0.0.1:1".into(),
            model_id: "gpt2".into(),
        });
        let err = forecast(&b, &window(&[1]), 7, 1.0).unwrap_err();
        assert!(matches!(err, Error::ForecastUnavailable { .. }), "{err}");
    }
}
