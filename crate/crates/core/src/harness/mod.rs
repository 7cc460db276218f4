//! Capacity sweeps and their output files.
//!
//! A sweep expands every `(level, N, C)` cell into one episode per seed, runs
//! them on a worker pool and reduces the results in plan order. Output layout:
//!
//! ```text
//! <out>/plan.json
//! <out>/summary.csv        one row per (level, N, C)
//! <out>/ladder.csv         overload vs C/N per level (plus exact L1 rows)
//! <out>/winrate.csv        win rate per disposition class
//! <out>/paired.csv         L5 − L4 paired t-tests per (N, C)
//! <out>/crossover.csv      C*/N of L4 against L1 per N
//! <out>/cells/<L>_<N>_<C>/membership_seed_<s>.csv   (L5 cells)
//! <out>/cells/<L>_<N>_<C>/trace_seed_<s>.jsonl      (with --trace)
//! ```

pub mod cli;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::analytics::{self, binomial_overload, Curve};
use crate::config::{roster, DispositionClass, Level, LevelConfig, PInitMode};
use crate::engine::{simulate, EpisodeResult};
use crate::error::{Error, Result};
use crate::stats::{self, to_pp};
use crate::tribes::{format_partition, membership_timeline, modal_partition, partition_variance_cap, MembershipTimeline};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPlan {
    pub levels: Vec<Level>,
    pub n_values: Vec<usize>,
    /// Inclusive; `None` sweeps `1..=N−1`. Clipped to that range per `N`.
    pub capacity_range: Option<(usize, usize)>,
    /// Every other parameter; `level`, `n_agents` and `capacity` are
    /// overwritten per cell.
    pub template: LevelConfig,
    /// Applied to adaptive levels only; L1/L3 always start at `p = 1`.
    pub p_init: Option<PInitMode>,
    pub out_dir: Option<PathBuf>,
    pub trace: bool,
}

impl SweepPlan {
    pub fn new(levels: Vec<Level>, n_values: Vec<usize>) -> Self {
        Self {
            levels,
            n_values,
            capacity_range: None,
            template: LevelConfig::new(Level::L1, 7, 1),
            p_init: None,
            out_dir: None,
            trace: false,
        }
    }

    pub fn capacities(&self, n: usize) -> Vec<usize> {
        let top = n.saturating_sub(1);
        let (lo, hi) = self.capacity_range.unwrap_or((1, top));
        (lo.max(1)..=hi.min(top)).collect()
    }

    /// Cell configurations in plan order: level, then `N`, then `C`.
    pub fn cells(&self) -> Vec<LevelConfig> {
        let mut out = Vec::new();
        for &level in &self.levels {
            for &n in &self.n_values {
                for c in self.capacities(n) {
                    let mut cfg = self.template.clone();
                    cfg.level = level;
                    cfg.n_agents = n;
                    cfg.capacity = c;
                    cfg.p_init_mode = if level.fixed_p() { None } else { self.p_init };
                    out.push(cfg);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassRate {
    pub class: DispositionClass,
    pub mean: f64,
    pub se: f64,
}

impl Serialize for DispositionClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub level: Level,
    pub n: usize,
    pub capacity: usize,
    pub c_over_n: f64,
    pub seeds_ok: usize,
    pub overload_mean: f64,
    pub overload_se: f64,
    pub win_rates: Vec<ClassRate>,
    pub demand_variance: f64,
    /// Most common post-warm-up partition across all seeds (L5 only).
    pub modal_partition: Option<Vec<usize>>,
    pub per_seed_overload: Vec<(u64, f64)>,
    pub per_seed_variance: Vec<(u64, f64)>,
    pub per_seed_modal_partition: Vec<(u64, Vec<usize>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedRow {
    pub n: usize,
    pub capacity: usize,
    pub c_over_n: f64,
    /// L5 − L4 overload, percentage points.
    pub mean_diff_pp: f64,
    pub se_pp: f64,
    pub t_stat: f64,
    pub dof: usize,
    pub p_value: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderRow {
    pub level: String,
    pub c_over_n: f64,
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimelineEntry {
    pub n: usize,
    pub capacity: usize,
    pub seed: u64,
    pub labels: Vec<String>,
    pub timeline: MembershipTimeline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub level: Level,
    pub n: usize,
    pub capacity: usize,
    pub seed: u64,
    pub message: String,
    pub remote_unavailable: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepSummary {
    pub rows: Vec<SummaryRow>,
    pub paired: Vec<PairedRow>,
    /// Exact rows computed rather than simulated; standard error 0.
    pub analytic: Vec<LadderRow>,
    pub timelines: Vec<TimelineEntry>,
    pub failures: Vec<CellFailure>,
}

/// Mean and standard error; the error is NaN below two values.
fn mean_se(values: &[f64]) -> (f64, f64) {
    match values.len() {
        0 => (f64::NAN, f64::NAN),
        1 => (values[0], f64::NAN),
        _ => {
            let a = stats::aggregate(values).expect("two or more values");
            (a.mean, a.se)
        }
    }
}

fn cell_dir_name(level: Level, n: usize, c: usize) -> String {
    format!("{level}_{n}_{c}")
}

fn is_remote_failure(e: &Error) -> bool {
    match e {
        Error::ForecastUnavailable { .. } => true,
        Error::EpisodeAborted { source, .. } => is_remote_failure(source),
        _ => false,
    }
}

impl SweepSummary {
    /// Exact L1 ladder rows for one population size.
    pub fn analytic_l1(n: usize, capacities: &[usize]) -> Result<Self> {
        let analytic = analytic_l1_rows(n, capacities)?;
        Ok(Self {
            analytic,
            ..Self::default()
        })
    }

    pub fn ladder_rows(&self) -> Vec<LadderRow> {
        let mut rows: Vec<LadderRow> = self
            .rows
            .iter()
            .map(|r| LadderRow {
                level: r.level.to_string(),
                c_over_n: r.c_over_n,
                mean: r.overload_mean,
                se: r.overload_se,
                n: r.n,
            })
            .collect();
        rows.extend(self.analytic.iter().cloned());
        rows
    }

    /// Overload curves per level for one population size.
    pub fn curves(&self, n: usize) -> BTreeMap<Level, Curve> {
        let mut m: BTreeMap<Level, Curve> = BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.n == n) {
            m.entry(r.level).or_default().push((r.c_over_n, r.overload_mean));
        }
        m
    }

    pub fn row(&self, level: Level, n: usize, capacity: usize) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.level == level && r.n == n && r.capacity == capacity)
    }
}

fn analytic_l1_rows(n: usize, capacities: &[usize]) -> Result<Vec<LadderRow>> {
    capacities
        .iter()
        .map(|&c| {
            Ok(LadderRow {
                level: "L1-exact".into(),
                c_over_n: c as f64 / n as f64,
                mean: binomial_overload(n, c, c as f64 / n as f64)?,
                se: 0.0,
                n,
            })
        })
        .collect()
}

fn summarize_cell(cfg: &LevelConfig, episodes: &[&EpisodeResult]) -> SummaryRow {
    let overloads: Vec<f64> = episodes.iter().map(|e| e.overload_rate).collect();
    let (overload_mean, overload_se) = mean_se(&overloads);
    let variances: Vec<f64> = episodes
        .iter()
        .map(|e| analytics::demand_variance(&e.records, e.warmup).unwrap_or(f64::NAN))
        .collect();

    let win_rates = DispositionClass::ALL
        .iter()
        .filter_map(|&class| {
            let per_seed: Vec<f64> = episodes
                .iter()
                .filter_map(|e| {
                    let rates: Vec<f64> = e
                        .final_agents
                        .iter()
                        .filter(|a| DispositionClass::of(a.p_initial) == class)
                        .map(|a| e.win_rate_per_agent[a.agent_id])
                        .collect();
                    (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
                })
                .collect();
            if per_seed.is_empty() {
                return None;
            }
            let (mean, se) = mean_se(&per_seed);
            Some(ClassRate { class, mean, se })
        })
        .collect();

    let per_seed_modal_partition: Vec<(u64, Vec<usize>)> = if cfg.level.has_tribes() {
        episodes
            .iter()
            .filter_map(|e| modal_partition(&e.records, e.warmup).map(|p| (e.seed, p)))
            .collect()
    } else {
        Vec::new()
    };
    let modal = if cfg.level.has_tribes() {
        let mut counts: BTreeMap<&[usize], usize> = BTreeMap::new();
        for e in episodes {
            for r in e.measured() {
                *counts.entry(r.partition.as_slice()).or_default() += 1;
            }
        }
        let best = counts.values().copied().max();
        best.and_then(|b| counts.into_iter().find(|(_, c)| *c == b).map(|(p, _)| p.to_vec()))
    } else {
        None
    };

    SummaryRow {
        level: cfg.level,
        n: cfg.n_agents,
        capacity: cfg.capacity,
        c_over_n: cfg.capacity as f64 / cfg.n_agents as f64,
        seeds_ok: episodes.len(),
        overload_mean,
        overload_se,
        win_rates,
        demand_variance: mean_se(&variances).0,
        modal_partition: modal,
        per_seed_overload: episodes.iter().map(|e| (e.seed, e.overload_rate)).collect(),
        per_seed_variance: episodes.iter().map(|e| e.seed).zip(variances).collect(),
        per_seed_modal_partition,
    }
}

fn paired_rows(rows: &[SummaryRow]) -> Vec<PairedRow> {
    let mut out = Vec::new();
    for l5 in rows.iter().filter(|r| r.level == Level::L5) {
        let Some(l4) = rows
            .iter()
            .find(|r| r.level == Level::L4 && r.n == l5.n && r.capacity == l5.capacity)
        else {
            continue;
        };
        let l4_by_seed: BTreeMap<u64, f64> = l4.per_seed_overload.iter().copied().collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = l5
            .per_seed_overload
            .iter()
            .filter_map(|(s, x)| l4_by_seed.get(s).map(|y| (to_pp(*x), to_pp(*y))))
            .unzip();
        let mut row = PairedRow {
            n: l5.n,
            capacity: l5.capacity,
            c_over_n: l5.c_over_n,
            mean_diff_pp: f64::NAN,
            se_pp: f64::NAN,
            t_stat: f64::NAN,
            dof: xs.len().saturating_sub(1),
            p_value: f64::NAN,
            note: String::new(),
        };
        match stats::paired_t(&xs, &ys) {
            Ok(t) => {
                row.mean_diff_pp = t.mean_diff;
                row.se_pp = t.se_diff;
                row.t_stat = t.t_stat;
                row.dof = t.dof;
                row.p_value = t.p_value;
            }
            Err(e) => {
                if let Some(m) = xs.iter().zip(&ys).map(|(x, y)| x - y).next() {
                    row.mean_diff_pp = m;
                }
                row.note = e.to_string();
            }
        }
        out.push(row);
    }
    out
}

/// Runs every cell of `plan`, writing the output tree when `out_dir` is set.
/// Failed episodes are recorded in `failures`; the rest of the sweep runs.
pub fn run_sweep(plan: &SweepPlan) -> Result<SweepSummary> {
    let cells = plan.cells();
    for cfg in &cells {
        cfg.validate().map_err(Error::InvalidConfig)?;
    }
    let jobs: Vec<(usize, u64)> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, cfg)| cfg.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results: Vec<Result<EpisodeResult>> = jobs
        .par_iter()
        .map(|&(i, seed)| simulate(&cells[i], seed))
        .collect();

    let mut summary = SweepSummary::default();
    let mut by_cell: Vec<Vec<EpisodeResult>> = vec![Vec::new(); cells.len()];
    for (&(i, seed), res) in jobs.iter().zip(results) {
        match res {
            Ok(ep) => by_cell[i].push(ep),
            Err(e) => summary.failures.push(CellFailure {
                level: cells[i].level,
                n: cells[i].n_agents,
                capacity: cells[i].capacity,
                seed,
                remote_unavailable: is_remote_failure(&e),
                message: e.to_string(),
            }),
        }
    }

    if let Some(dir) = &plan.out_dir {
        fs::create_dir_all(dir)?;
    }
    for (cfg, episodes) in cells.iter().zip(&by_cell) {
        let refs: Vec<&EpisodeResult> = episodes.iter().collect();
        summary.rows.push(summarize_cell(cfg, &refs));
        if cfg.level.has_tribes() {
            let labels: Vec<String> = roster(cfg.n_agents).into_iter().map(|(l, _)| l).collect();
            for e in episodes {
                summary.timelines.push(TimelineEntry {
                    n: cfg.n_agents,
                    capacity: cfg.capacity,
                    seed: e.seed,
                    labels: labels.clone(),
                    timeline: membership_timeline(&e.records)?,
                });
            }
        }
        if let (Some(dir), true) = (&plan.out_dir, plan.trace) {
            let cell_dir = dir.join("cells").join(cell_dir_name(cfg.level, cfg.n_agents, cfg.capacity));
            fs::create_dir_all(&cell_dir)?;
            for e in episodes {
                let f = File::create(cell_dir.join(format!("trace_seed_{}.jsonl", e.seed)))?;
                e.write_trace(BufWriter::new(f))?;
            }
        }
    }
    summary.paired = paired_rows(&summary.rows);
    if plan.levels.contains(&Level::L1) {
        for &n in &plan.n_values {
            summary.analytic.extend(analytic_l1_rows(n, &plan.capacities(n))?);
        }
    }

    if let Some(dir) = &plan.out_dir {
        write_outputs(plan, &summary, dir)?;
    }
    Ok(summary)
}

fn write_outputs(plan: &SweepPlan, summary: &SweepSummary, dir: &Path) -> Result<()> {
    fs::write(dir.join("plan.json"), serde_json::to_string_pretty(plan)? + "\n")?;
    write_summary_csv(summary, &dir.join("summary.csv"))?;
    if !summary.rows.is_empty() {
        emit_figure_data(summary, FigureKind::Ladder, dir)?;
        emit_figure_data(summary, FigureKind::Winrate, dir)?;
    }
    if !summary.timelines.is_empty() {
        emit_figure_data(summary, FigureKind::Tribes, dir)?;
    }
    let mut w = csv::Writer::from_path(dir.join("paired.csv"))?;
    if summary.paired.is_empty() {
        w.write_record(["n", "capacity", "c_over_n", "mean_diff_pp", "se_pp", "t_stat", "dof", "p_value", "note"])?;
    }
    for r in &summary.paired {
        w.serialize(r)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("crossover.csv"))?;
    w.write_record(["n", "c_star_over_n"])?;
    for &n in &plan.n_values {
        let curves = summary.curves(n);
        if let Ok(c) = analytics::crossover_estimate(&curves) {
            let v = c.map_or_else(|| "none".to_string(), |x| x.to_string());
            w.write_record([n.to_string(), v])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_summary_csv(summary: &SweepSummary, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = [
        "level",
        "n",
        "capacity",
        "c_over_n",
        "seeds_ok",
        "overload_mean",
        "overload_se",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for class in DispositionClass::ALL {
        header.push(format!("win_{}_mean", class.name()));
        header.push(format!("win_{}_se", class.name()));
    }
    header.extend(["demand_variance", "modal_partition", "modal_variance_cap"].map(String::from));
    w.write_record(&header)?;
    for r in &summary.rows {
        let mut rec = vec![
            r.level.to_string(),
            r.n.to_string(),
            r.capacity.to_string(),
            r.c_over_n.to_string(),
            r.seeds_ok.to_string(),
            r.overload_mean.to_string(),
            r.overload_se.to_string(),
        ];
        for class in DispositionClass::ALL {
            match r.win_rates.iter().find(|c| c.class == class) {
                Some(c) => {
                    rec.push(c.mean.to_string());
                    rec.push(c.se.to_string());
                }
                None => rec.extend([String::new(), String::new()]),
            }
        }
        rec.push(r.demand_variance.to_string());
        match &r.modal_partition {
            Some(p) => {
                rec.push(format_partition(p));
                rec.push(partition_variance_cap(p).to_string());
            }
            None => rec.extend([String::new(), String::new()]),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    /// Overload against C/N per level.
    Ladder,
    /// Win rate per disposition class.
    Winrate,
    /// Tribe membership per round, one file per L5 episode.
    Tribes,
}

#[derive(Serialize)]
struct WinrateRow<'a> {
    experiment: &'a str,
    disposition: &'a str,
    #[serde(rename = "C")]
    capacity: usize,
    mean: f64,
    se: f64,
    n: usize,
}

/// Writes plot-ready data under `dir` and returns the file (or, for tribes,
/// the `cells` directory) written.
pub fn emit_figure_data(summary: &SweepSummary, kind: FigureKind, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    match kind {
        FigureKind::Ladder => {
            let rows = summary.ladder_rows();
            if rows.is_empty() {
                return Err(Error::InvalidArgument("no ladder rows to emit".into()));
            }
            let path = dir.join("ladder.csv");
            let mut w = csv::Writer::from_path(&path)?;
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
            Ok(path)
        }
        FigureKind::Winrate => {
            if summary.rows.iter().all(|r| r.win_rates.is_empty()) {
                return Err(Error::InvalidArgument("no win-rate rows to emit".into()));
            }
            let path = dir.join("winrate.csv");
            let mut w = csv::Writer::from_path(&path)?;
            for r in &summary.rows {
                for c in &r.win_rates {
                    w.serialize(WinrateRow {
                        experiment: r.level.label(),
                        disposition: c.class.name(),
                        capacity: r.capacity,
                        mean: c.mean,
                        se: c.se,
                        n: r.n,
                    })?;
                }
            }
            w.flush()?;
            Ok(path)
        }
        FigureKind::Tribes => {
            if summary.timelines.is_empty() {
                return Err(Error::InvalidArgument("no tribe timelines to emit".into()));
            }
            let cells = dir.join("cells");
            for t in &summary.timelines {
                let cell_dir = cells.join(cell_dir_name(Level::L5, t.n, t.capacity));
                fs::create_dir_all(&cell_dir)?;
                let f = File::create(cell_dir.join(format!("membership_seed_{}.csv", t.seed)))?;
                t.timeline.write_csv(&t.labels, BufWriter::new(f))?;
            }
            Ok(cells)
        }
    }
}
