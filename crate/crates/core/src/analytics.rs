//! Closed-form overload baselines.
//!
//! L1 demand is Binomial(N, C/N). With a common forecast `x`, L2 agents
//! access independently with probability `p_i·x + (1−p_i)(1−x)`, so demand is
//! Poisson-binomial; its pmf comes from sequential convolution. The Gaussian
//! path approximates any of these tails from the first two moments with a
//! continuity correction.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::config::Level;
use crate::engine::{disposition_filter, RoundRecord};
use crate::error::{Error, Result};

const PMF_TOL: f64 = 1e-12;

/// Compensated (Neumaier) sum, accumulated in iteration order.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Probability mass over demand `0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    values: Vec<f64>,
}

impl Pmf {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("pmf entries must be finite and >= 0".into()));
        }
        let total = compensated_sum(values.iter().copied());
        if (total - 1.0).abs() > PMF_TOL {
            return Err(Error::InvalidArgument(format!("pmf sums to {total}")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_max(&self) -> usize {
        self.values.len() - 1
    }

    pub fn mean(&self) -> f64 {
        compensated_sum(self.values.iter().enumerate().map(|(k, p)| k as f64 * p))
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        compensated_sum(
            self.values
                .iter()
                .enumerate()
                .map(|(k, p)| (k as f64 - mu).powi(2) * p),
        )
    }
}

fn binomial_coefficient(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub fn binomial_pmf(n: usize, q: f64) -> Result<Pmf> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("q = {q} outside [0, 1]")));
    }
    let values = (0..=n)
        .map(|k| binomial_coefficient(n, k) * q.powi(k as i32) * (1.0 - q).powi((n - k) as i32))
        .collect();
    Ok(Pmf { values })
}

/// `P(A > C)` for `A ~ Binomial(n, q)`.
pub fn binomial_overload(n: usize, capacity: usize, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("q = {q} outside [0, 1]")));
    }
    if capacity == 0 || capacity >= n {
        return Err(Error::InvalidArgument(format!(
            "capacity {capacity} must satisfy 1 <= C < n = {n}"
        )));
    }
    Ok(compensated_sum((capacity + 1..=n).map(|k| {
        binomial_coefficient(n, k) * q.powi(k as i32) * (1.0 - q).powi((n - k) as i32)
    })))
}

/// Exact pmf of a sum of independent Bernoulli(`p_i`) by sequential
/// convolution: `new[k] = old[k]·(1−p) + old[k−1]·p`.
pub fn poisson_binomial_pmf(ps: &[f64]) -> Result<Pmf> {
    if let Some(bad) = ps.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidArgument(format!("probability {bad} outside [0, 1]")));
    }
    let mut pmf = vec![0.0; ps.len() + 1];
    pmf[0] = 1.0;
    for (j, &p) in ps.iter().enumerate() {
        for k in (1..=j + 1).rev() {
            pmf[k] = pmf[k] * (1.0 - p) + pmf[k - 1] * p;
        }
        pmf[0] *= 1.0 - p;
    }
    Ok(Pmf { values: pmf })
}

/// Tail mass strictly above `capacity`.
pub fn overload_from_pmf(pmf: &Pmf, capacity: usize) -> Result<f64> {
    let n = pmf.n_max();
    if capacity > n {
        return Err(Error::InvalidArgument(format!("capacity {capacity} outside 0..={n}")));
    }
    Ok(compensated_sum(pmf.values[capacity + 1..].iter().copied()))
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// `1 − Φ((C + 0.5 − μ)/σ)`, evaluated through the complementary error
/// function so the far tail keeps its relative precision.
pub fn gaussian_overload(mu: f64, sigma: f64, capacity: usize) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) || !mu.is_finite() {
        return Err(Error::InvalidArgument(format!("need finite mu and sigma > 0, got ({mu}, {sigma})")));
    }
    let z = (capacity as f64 + 0.5 - mu) / sigma;
    Ok(0.5 * statrs::function::erf::erfc(z / std::f64::consts::SQRT_2))
}

/// Sample variance (n − 1 denominator) of demand after warm-up.
pub fn demand_variance(records: &[RoundRecord], warmup: usize) -> Result<f64> {
    let demands: Vec<f64> = records.iter().skip(warmup).map(|r| r.demand as f64).collect();
    sample_variance(&demands)
}

pub(crate) fn sample_variance(xs: &[f64]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::InvalidArgument("need at least two values for a variance".into()));
    }
    let n = xs.len() as f64;
    let mean = compensated_sum(xs.iter().copied()) / n;
    Ok(compensated_sum(xs.iter().map(|x| (x - mean).powi(2))) / (n - 1.0))
}

/// `(C/N, overload)` points on a shared capacity grid.
pub type Curve = Vec<(f64, f64)>;

/// `C*/N` where `higher − lower` first changes sign, by linear
/// interpolation. `Ok(None)` when the curves never cross.
pub fn crossover(lower: &Curve, higher: &Curve) -> Result<Option<f64>> {
    if lower.len() != higher.len()
        || lower.iter().zip(higher).any(|(a, b)| (a.0 - b.0).abs() > 1e-12)
    {
        return Err(Error::InvalidArgument("curves do not share a capacity grid".into()));
    }
    let diffs: Vec<(f64, f64)> = lower.iter().zip(higher).map(|(a, b)| (a.0, b.1 - a.1)).collect();
    if let Some(&(x, _)) = diffs.iter().find(|(_, d)| *d == 0.0) {
        return Ok(Some(x));
    }
    Ok(diffs.windows(2).find_map(|w| {
        let ((x0, d0), (x1, d1)) = (w[0], w[1]);
        (d0.signum() != d1.signum()).then(|| x0 + (x1 - x0) * d0 / (d0 - d1))
    }))
}

/// Crossover of the L4 curve against the L1 curve.
pub fn crossover_estimate(summary_by_capacity: &BTreeMap<Level, Curve>) -> Result<Option<f64>> {
    let l1 = summary_by_capacity
        .get(&Level::L1)
        .ok_or_else(|| Error::InvalidArgument("no L1 curve".into()))?;
    let l4 = summary_by_capacity
        .get(&Level::L4)
        .ok_or_else(|| Error::InvalidArgument("no L4 curve".into()))?;
    crossover(l1, l4)
}

/// L2 overload with the shared forecast held fixed at each grid value.
pub fn l2_overload_scan(ps: &[f64], capacity: usize, p_llm_grid: &[f64]) -> Result<Vec<(f64, Pmf, f64)>> {
    p_llm_grid
        .iter()
        .map(|&x| {
            let access: Vec<f64> = ps
                .iter()
                .map(|&p| disposition_filter(p, x))
                .collect::<Result<_>>()?;
            let pmf = poisson_binomial_pmf(&access)?;
            let overload = overload_from_pmf(&pmf, capacity)?;
            Ok((x, pmf, overload))
        })
        .collect()
}

/// One line of the analytic CSV export.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticRow {
    pub level: String,
    pub n: usize,
    pub capacity: usize,
    pub method: String,
    pub overload: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Exact binomial and Gaussian-approximated L1 rows for each capacity.
pub fn l1_rows(n: usize, capacities: &[usize], q: Option<f64>) -> Result<Vec<AnalyticRow>> {
    let mut rows = Vec::new();
    for &c in capacities {
        let q = q.unwrap_or(c as f64 / n as f64);
        let mean = n as f64 * q;
        let variance = mean * (1.0 - q);
        rows.push(AnalyticRow {
            level: Level::L1.to_string(),
            n,
            capacity: c,
            method: "binomial".into(),
            overload: binomial_overload(n, c, q)?,
            mean,
            variance,
        });
        if variance > 0.0 {
            rows.push(AnalyticRow {
                level: Level::L1.to_string(),
                n,
                capacity: c,
                method: "gaussian".into(),
                overload: gaussian_overload(mean, variance.sqrt(), c)?,
                mean,
                variance,
            });
        }
    }
    Ok(rows)
}

/// Poisson-binomial L2 rows over a forecast grid, method `pb@<p_llm>`.
pub fn l2_rows(ps: &[f64], capacities: &[usize], p_llm_grid: &[f64]) -> Result<Vec<AnalyticRow>> {
    let mut rows = Vec::new();
    for &c in capacities {
        for (x, pmf, overload) in l2_overload_scan(ps, c, p_llm_grid)? {
            rows.push(AnalyticRow {
                level: Level::L2.to_string(),
                n: ps.len(),
                capacity: c,
                method: format!("pb@{x}"),
                overload,
                mean: pmf.mean(),
                variance: pmf.variance(),
            });
        }
    }
    Ok(rows)
}

pub fn write_rows<W: Write>(rows: &[AnalyticRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
