//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analytics;
use crate::config::{default_seeds, AdaptRule, ForecasterKind, Level, LevelConfig, PInitMode, MODELS};
use crate::error::{Error, Result};
use crate::forecast::{self, HistoryWindow, RemoteClient};
use crate::stats;

use super::{run_sweep, SweepPlan, SweepSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;
pub const EXIT_REMOTE_UNAVAILABLE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "scarcity", version, about = "Forecaster-driven agents competing for a shared resource")]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Debug, Subcommand)]
enum CliCommand {
    /// Run one (level, N, C) cell over all seeds.
    Run(RunArgs),
    /// Sweep levels × N × capacities.
    Sweep(SweepArgs),
    /// Exact and approximate overload baselines.
    Analytic(AnalyticArgs),
    /// Paired t-test on two equal-length samples.
    Ttest(TtestArgs),
    /// Ping the remote forecaster.
    ServeCheck(ServeCheckArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PInitArg {
    Spectrum,
    Random,
    AllOne,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AdaptRuleArg {
    PerturbOnLoss,
    AlwaysPerturb,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed count (`20`) or explicit list (`3,5,8`).
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    /// uniform | empirical[:smoothing] | fixed:p0,p1,... | remote
    #[arg(long)]
    forecaster: Option<String>,
    /// Remote forecaster `host:port` (else SCARCITY_LLM_ENDPOINT).
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, value_enum)]
    p_init: Option<PInitArg>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write per-round JSON lines for every episode.
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    conch_max: Option<f64>,
    #[arg(long)]
    conch_duration: Option<usize>,
    #[arg(long, value_enum)]
    adapt_rule: Option<AdaptRuleArg>,
    #[arg(long)]
    adapt_step: Option<f64>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    level: Option<u8>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    capacity: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Comma-separated level numbers, e.g. `1,4,5`.
    #[arg(long, default_value = "1,2,3,4,5")]
    level: String,
    /// Comma-separated population sizes.
    #[arg(long, default_value = "7")]
    n: String,
    /// Inclusive `lo:hi`.
    #[arg(long)]
    capacity_range: Option<String>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct AnalyticArgs {
    #[arg(long, default_value_t = 7)]
    n: usize,
    /// Access probability; defaults to C/N per capacity.
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    capacity: Option<usize>,
    #[arg(long)]
    capacity_range: Option<String>,
    /// 1 for the binomial baseline, 2 for the Poisson-binomial scan.
    #[arg(long, default_value_t = 1)]
    level: u8,
    /// Shared forecast values for the level-2 scan.
    #[arg(long, default_value = "0,0.25,0.5,0.75,1")]
    p_llm: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TtestArgs {
    #[arg(long, requires = "ys")]
    xs: Option<String>,
    #[arg(long, requires = "xs")]
    ys: Option<String>,
    /// CSV with two numeric columns (header row required).
    #[arg(long, conflicts_with_all = ["xs", "ys"])]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeCheckArgs {
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value_t = 7)]
    n: usize,
    #[arg(long, default_value = "gpt2")]
    model: String,
}

/// A parsed command line.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Run(SweepPlan),
    Sweep(SweepPlan),
    Analytic {
        n: usize,
        q: Option<f64>,
        capacities: Vec<usize>,
        level: Level,
        p_llm_grid: Vec<f64>,
        out: Option<PathBuf>,
    },
    TTest {
        xs: Vec<f64>,
        ys: Vec<f64>,
    },
    ServeCheck {
        endpoint: Option<String>,
        n: usize,
        model: String,
    },
}

fn usage(cmd: &str, msg: impl std::fmt::Display) -> clap::Error {
    clap::Error::raw(clap::error::ErrorKind::ValueValidation, format!("{cmd}: {msg}\n"))
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> std::result::Result<Vec<T>, clap::Error> {
    text.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| usage(what, format!("cannot parse {s:?}"))))
        .collect()
}

fn parse_range(text: &str) -> std::result::Result<(usize, usize), clap::Error> {
    let (lo, hi) = text
        .split_once(':')
        .ok_or_else(|| usage("--capacity-range", "expected lo:hi"))?;
    let lo = lo.trim().parse().map_err(|_| usage("--capacity-range", "bad lower bound"))?;
    let hi = hi.trim().parse().map_err(|_| usage("--capacity-range", "bad upper bound"))?;
    if lo > hi {
        return Err(usage("--capacity-range", "lo must not exceed hi"));
    }
    Ok((lo, hi))
}

fn parse_levels(text: &str) -> std::result::Result<Vec<Level>, clap::Error> {
    parse_list::<u8>(text, "--level")?
        .into_iter()
        .map(|n| Level::from_number(n).ok_or_else(|| usage("--level", format!("no level {n}"))))
        .collect()
}

fn parse_seeds(text: &str) -> std::result::Result<Vec<u64>, clap::Error> {
    let list = parse_list::<u64>(text, "--seeds")?;
    match list.as_slice() {
        [count] => Ok(default_seeds(*count as usize)),
        _ => Ok(list),
    }
}

fn parse_forecaster(text: &str, endpoint: Option<String>) -> std::result::Result<ForecasterKind, clap::Error> {
    let (kind, arg) = match text.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (text, None),
    };
    match (kind, arg) {
        ("uniform", None) => Ok(ForecasterKind::Uniform),
        ("empirical", None) => Ok(ForecasterKind::Empirical { smoothing: 1.0 }),
        ("empirical", Some(s)) => s
            .parse()
            .map(|smoothing| ForecasterKind::Empirical { smoothing })
            .map_err(|_| usage("--forecaster", "bad smoothing")),
        ("fixed", Some(v)) => Ok(ForecasterKind::Fixed(parse_list(v, "--forecaster")?)),
        ("remote", None) => Ok(ForecasterKind::Remote { endpoint }),
        _ => Err(usage("--forecaster", format!("unknown forecaster {text:?}"))),
    }
}

fn template(common: &CommonArgs) -> std::result::Result<LevelConfig, clap::Error> {
    let mut cfg = match &common.config {
        Some(path) => LevelConfig::load(path).map_err(|e| usage("--config", e))?,
        None => LevelConfig::new(Level::L1, 7, 1),
    };
    if let Some(s) = &common.seeds {
        cfg.seeds = parse_seeds(s)?;
    }
    if let Some(r) = common.rounds {
        cfg.rounds = r;
    }
    if let Some(w) = common.warmup {
        cfg.warmup = w;
    }
    if let Some(f) = &common.forecaster {
        cfg.forecaster_kind = parse_forecaster(f, common.endpoint.clone())?;
    } else if let (ForecasterKind::Remote { endpoint }, Some(e)) = (&mut cfg.forecaster_kind, &common.endpoint) {
        *endpoint = Some(e.clone());
    }
    if let Some(c) = common.conch_max {
        cfg.conch_max = c;
    }
    if let Some(d) = common.conch_duration {
        cfg.conch_duration = d;
    }
    if let Some(rule) = common.adapt_rule {
        cfg.adapt_rule = match rule {
            AdaptRuleArg::PerturbOnLoss => AdaptRule::PerturbOnLoss,
            AdaptRuleArg::AlwaysPerturb => AdaptRule::AlwaysPerturb,
        };
    }
    if let Some(s) = common.adapt_step {
        cfg.adaptation_step = s;
    }
    Ok(cfg)
}

fn p_init(common: &CommonArgs, cfg: &LevelConfig) -> Option<PInitMode> {
    common
        .p_init
        .map(|p| match p {
            PInitArg::Spectrum => PInitMode::Spectrum,
            PInitArg::Random => PInitMode::Random,
            PInitArg::AllOne => PInitMode::AllOne,
        })
        .or(cfg.p_init_mode)
}

/// Parses `argv` (program name first).
pub fn parse_cli<I, T>(argv: I) -> std::result::Result<Command, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    Ok(match cli.command {
        CliCommand::Run(a) => {
            let cfg = template(&a.common)?;
            let has_file = a.common.config.is_some();
            let level = match a.level {
                Some(n) => Level::from_number(n).ok_or_else(|| usage("--level", format!("no level {n}")))?,
                None if has_file => cfg.level,
                None => return Err(usage("run", "--level is required without --config")),
            };
            let n = a.n.or(has_file.then_some(cfg.n_agents)).unwrap_or(7);
            let c = match a.capacity {
                Some(c) => c,
                None if has_file => cfg.capacity,
                None => return Err(usage("run", "--capacity is required without --config")),
            };
            let mut plan = SweepPlan::new(vec![level], vec![n]);
            plan.capacity_range = Some((c, c));
            plan.p_init = p_init(&a.common, &cfg);
            let mut cell = cfg.clone();
            cell.level = level;
            cell.n_agents = n;
            cell.capacity = c;
            cell.p_init_mode = if level.fixed_p() { None } else { plan.p_init };
            cell.validated().map_err(|e| usage("run", e))?;
            plan.template = cfg;
            plan.out_dir = a.common.out.clone();
            plan.trace = a.common.trace;
            Command::Run(plan)
        }
        CliCommand::Sweep(a) => {
            let cfg = template(&a.common)?;
            let mut plan = SweepPlan::new(parse_levels(&a.level)?, parse_list(&a.n, "--n")?);
            plan.capacity_range = a.capacity_range.as_deref().map(parse_range).transpose()?;
            plan.p_init = p_init(&a.common, &cfg);
            plan.template = cfg;
            plan.out_dir = Some(a.common.out.clone().unwrap_or_else(|| PathBuf::from("sweep_out")));
            plan.trace = a.common.trace;
            Command::Sweep(plan)
        }
        CliCommand::Analytic(a) => {
            let capacities = match (a.capacity, &a.capacity_range) {
                (Some(c), _) => vec![c],
                (None, Some(r)) => {
                    let (lo, hi) = parse_range(r)?;
                    (lo..=hi).collect()
                }
                (None, None) => (1..a.n).collect(),
            };
            let level = match a.level {
                1 => Level::L1,
                2 => Level::L2,
                other => return Err(usage("--level", format!("analytic baselines exist for levels 1 and 2, not {other}"))),
            };
            Command::Analytic {
                n: a.n,
                q: a.q,
                capacities,
                level,
                p_llm_grid: parse_list(&a.p_llm, "--p-llm")?,
                out: a.out,
            }
        }
        CliCommand::Ttest(a) => match (a.xs, a.ys, a.csv) {
            (Some(x), Some(y), None) => Command::TTest {
                xs: parse_list(&x, "--xs")?,
                ys: parse_list(&y, "--ys")?,
            },
            (None, None, Some(path)) => {
                let (xs, ys) = read_pairs(&path).map_err(|e| usage("--csv", e))?;
                Command::TTest { xs, ys }
            }
            _ => return Err(usage("ttest", "give --xs and --ys, or --csv")),
        },
        CliCommand::ServeCheck(a) => Command::ServeCheck {
            endpoint: a.endpoint,
            n: a.n,
            model: a.model,
        },
    })
}

fn read_pairs(path: &PathBuf) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let get = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::InvalidArgument(format!("row {:?} needs two numbers", rec)))
        };
        xs.push(get(0)?);
        ys.push(get(1)?);
    }
    Ok((xs, ys))
}

fn print_summary<W: Write>(summary: &SweepSummary, out: &mut W) -> Result<()> {
    writeln!(out, "level,n,capacity,c_over_n,overload_mean,overload_se,demand_variance,modal_partition")?;
    for r in &summary.rows {
        let part = r
            .modal_partition
            .as_deref()
            .map(crate::tribes::format_partition)
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{:.4},{:.4},{:.4},{:.3},{}",
            r.level, r.n, r.capacity, r.c_over_n, r.overload_mean, r.overload_se, r.demand_variance, part
        )?;
    }
    for p in &summary.paired {
        writeln!(
            out,
            "# L5-L4 n={} C={}: {:+.1} ± {:.1} pp, t = {:.2}, dof {}, p = {:.3e} {}",
            p.n, p.capacity, p.mean_diff_pp, p.se_pp, p.t_stat, p.dof, p.p_value, p.note
        )?;
    }
    Ok(())
}

fn sweep_exit_code(summary: &SweepSummary) -> i32 {
    if summary.failures.is_empty() {
        EXIT_OK
    } else if summary.failures.iter().any(|f| f.remote_unavailable) {
        EXIT_REMOTE_UNAVAILABLE
    } else {
        EXIT_PARTIAL
    }
}

/// Executes a command, writing human output to `out` and diagnostics to
/// `err`. Returns the process exit code.
pub fn execute<W: Write, E: Write>(command: Command, out: &mut W, err: &mut E) -> i32 {
    match try_execute(command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                Error::InvalidConfig(_) | Error::InvalidArgument(_) | Error::DegenerateTest(_) => EXIT_USAGE,
                Error::ForecastUnavailable { .. } => EXIT_REMOTE_UNAVAILABLE,
                _ => EXIT_PARTIAL,
            }
        }
    }
}

fn try_execute<W: Write, E: Write>(command: Command, out: &mut W, err: &mut E) -> Result<i32> {
    match command {
        Command::Run(plan) | Command::Sweep(plan) => {
            let summary = run_sweep(&plan)?;
            print_summary(&summary, out)?;
            for f in &summary.failures {
                writeln!(err, "failed: {} n={} C={} seed={}: {}", f.level, f.n, f.capacity, f.seed, f.message)?;
            }
            Ok(sweep_exit_code(&summary))
        }
        Command::Analytic {
            n,
            q,
            capacities,
            level,
            p_llm_grid,
            out: path,
        } => {
            let rows = match level {
                Level::L1 => analytics::l1_rows(n, &capacities, q)?,
                _ => {
                    let mut rng = crate::rng::RngStream::new(0, crate::rng::StreamRole::Init);
                    let ps = crate::config::initial_p_spectrum(n, PInitMode::Spectrum, &mut rng)?;
                    analytics::l2_rows(&ps, &capacities, &p_llm_grid)?
                }
            };
            match path {
                Some(p) => analytics::write_rows(&rows, std::fs::File::create(p)?)?,
                None => analytics::write_rows(&rows, &mut *out)?,
            }
            Ok(EXIT_OK)
        }
        Command::TTest { xs, ys } => {
            let t = stats::paired_t(&xs, &ys)?;
            writeln!(out, "n,mean_diff,se_diff,t_stat,dof,p_value")?;
            writeln!(out, "{},{},{},{},{},{}", t.n, t.mean_diff, t.se_diff, t.t_stat, t.dof, t.p_value)?;
            Ok(EXIT_OK)
        }
        Command::ServeCheck { endpoint, n, model } => {
            if !MODELS.contains(&model.as_str()) {
                writeln!(err, "warning: {model} is not one of {}", MODELS.join(","))?;
            }
            let endpoint = forecast::resolve_endpoint(endpoint.as_deref())?;
            let mut client = RemoteClient::connect(&endpoint)?;
            let history = HistoryWindow::from_demands(10, n, &[0])?;
            let started = std::time::Instant::now();
            let dist = client.forecast(&history, n, &model, 1.0)?;
            writeln!(
                out,
                "ok {endpoint} model={model} n_max={} round_trip_ms={:.1}",
                dist.n_max(),
                started.elapsed().as_secs_f64() * 1e3
            )?;
            Ok(EXIT_OK)
        }
    }
}
