//! Acceptance checks, one line per criterion. Exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scarcity::analytics::{binomial_overload, demand_variance, poisson_binomial_pmf};
use scarcity::config::{Level, LevelConfig};
use scarcity::engine::{disposition_filter, settle_round, simulate};
use scarcity::stats::{aggregate, paired_t};
use scarcity::tribes::{conch_level, modal_partition, partition_variance_cap};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn enumerate_pmf(ps: &[f64]) -> Vec<f64> {
    let n = ps.len();
    let mut pmf = vec![0.0; n + 1];
    for mask in 0u32..(1 << n) {
        let mut prob = 1.0;
        for (i, &p) in ps.iter().enumerate() {
            prob *= if mask >> i & 1 == 1 { p } else { 1.0 - p };
        }
        pmf[mask.count_ones() as usize] += prob;
    }
    pmf
}

fn poisson_binomial_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for n in 2..=12 {
        for _ in 0..100 {
            let ps: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let dp = poisson_binomial_pmf(&ps).map_err(|e| e.to_string())?;
            for (a, b) in dp.values().iter().zip(enumerate_pmf(&ps)) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(worst < 1e-12 && secs < 10.0, format!("max error {worst:.2e}, {secs:.2} s"))
}

fn l1_matches_binomial() -> Outcome {
    let started = Instant::now();
    let mut worst_z = 0.0f64;
    for c in 1..=6 {
        let cfg = LevelConfig::new(Level::L1, 7, c);
        let rates: Vec<f64> = (0..20)
            .map(|s| simulate(&cfg, s).map(|e| e.overload_rate))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let agg = aggregate(&rates).map_err(|e| e.to_string())?;
        let exact = binomial_overload(7, c, c as f64 / 7.0).map_err(|e| e.to_string())?;
        worst_z = worst_z.max((agg.mean - exact).abs() / agg.se);
    }
    let secs = started.elapsed().as_secs_f64();
    check(worst_z <= 3.0 && secs < 5.0, format!("worst |z| {worst_z:.2} over C=1..6, {secs:.2} s"))
}

fn filter_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut exact = true;
    for _ in 0..10_000 {
        let p: f64 = rng.random();
        let x: f64 = rng.random();
        let f = |p| disposition_filter(p, x).unwrap();
        worst = worst.max((f(p) + f(1.0 - p) - 1.0).abs());
        exact &= f(0.5) == 0.5 && f(1.0) == x && f(0.0) == 1.0 - x;
    }
    check(worst < 1e-12 && exact, format!("max |f(p)+f(1-p)-1| {worst:.1e}, special cases exact: {exact}"))
}

fn payoff_symmetry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let holds = |actions: &[bool], demand: usize, c: usize, rewards: &[i8]| {
        actions.iter().zip(rewards).all(|(&a, &r)| (r == 1) == ((a && demand <= c) || (!a && demand > c)))
    };
    for _ in 0..10_000 {
        let n = rng.random_range(1..=30);
        let c = rng.random_range(0..=n);
        let actions: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let (demand, rewards) = settle_round(&actions, c);
        if !holds(&actions, demand, c, &rewards) {
            return Err(format!("random round violates the rule: {actions:?} C={c}"));
        }
    }
    let mut rounds = 0;
    for level in [Level::L1, Level::L2, Level::L3, Level::L4, Level::L5] {
        for c in 1..=6 {
            let mut cfg = LevelConfig::new(level, 7, c);
            cfg.rounds = 200;
            let ep = simulate(&cfg, c as u64).map_err(|e| e.to_string())?;
            for r in &ep.records {
                let actions: Vec<bool> = r.actions.iter().map(|&a| a == 1).collect();
                if !holds(&actions, r.demand, c, &r.rewards) {
                    return Err(format!("{level} C={c} round {} violates the rule", r.round_index));
                }
                rounds += 1;
            }
        }
    }
    Ok(format!("10000 random rounds and {rounds} simulated rounds"))
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let mut trees = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let out = Command::new(env!("CARGO_BIN_EXE_scarcity"))
            .current_dir(dir.path())
            .args([
                "sweep", "--level", "3,4,5", "--n", "7", "--capacity-range", "1:6", "--seeds", "5",
                "--forecaster", "empirical", "--out", "out",
            ])
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("sweep exited with {:?}", out.status.code()));
        }
        trees.push(read_tree(&dir.path().join("out")));
    }
    check(
        !trees[0].is_empty() && trees[0] == trees[1],
        format!("{} files compared", trees[0].len()),
    )
}

fn variance_caps() -> Outcome {
    let got: Vec<usize> = [&[3, 3, 1][..], &[3, 4], &[6, 1], &[7]]
        .iter()
        .map(|p| partition_variance_cap(p))
        .collect();
    check(got == [19, 25, 37, 49], format!("{got:?}"))
}

fn conch_ramp() -> Outcome {
    let ok = conch_level(0, 250, 0.8) == 0.0
        && (conch_level(250, 250, 0.8) - 0.8).abs() < 1e-15
        && (1..250).all(|r| (conch_level(r, 250, 0.8) - 0.8 * r as f64 / 250.0).abs() < 1e-15)
        && (250..1000).all(|r| conch_level(r, 250, 0.8) == 0.8);
    check(ok, format!("level(125) = {}", conch_level(125, 250, 0.8)))
}

fn structural_ablation() -> Outcome {
    let mut pairs = 0;
    for c in 1..=6 {
        let mut l4 = LevelConfig::new(Level::L4, 7, c);
        l4.conch_max = 0.0;
        let mut l5 = l4.clone();
        l5.level = Level::L5;
        l5.tribes.defection_enabled = false;
        for seed in 0..20 {
            let a = simulate(&l4, seed).map_err(|e| e.to_string())?;
            let b = simulate(&l5, seed).map_err(|e| e.to_string())?;
            if a.overload_rate != b.overload_rate {
                return Err(format!("C={c} seed {seed}: {} vs {}", a.overload_rate, b.overload_rate));
            }
            pairs += 1;
        }
    }
    Ok(format!("{pairs} seed pairs identical"))
}

fn statistical_layer() -> Outcome {
    let worked = paired_t(&[1.0, 2.0, 3.0, 4.0], &[0.0; 4]).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_anti = 0.0f64;
    let mut worst_scale = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(3..30);
        let xs: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let k: f64 = rng.random_range(0.01..100.0);
        let a = paired_t(&xs, &ys).map_err(|e| e.to_string())?;
        let b = paired_t(&ys, &xs).map_err(|e| e.to_string())?;
        let sx: Vec<f64> = xs.iter().map(|x| x * k).collect();
        let sy: Vec<f64> = ys.iter().map(|y| y * k).collect();
        let s = paired_t(&sx, &sy).map_err(|e| e.to_string())?;
        worst_anti = worst_anti.max((a.t_stat + b.t_stat).abs()).max((a.p_value - b.p_value).abs());
        worst_scale = worst_scale.max((a.t_stat - s.t_stat).abs()).max((a.p_value - s.p_value).abs());
    }
    check(
        (worked.t_stat - 3.873).abs() < 1e-3 && worked.dof == 3 && worst_anti <= 1e-10 && worst_scale <= 1e-10,
        format!(
            "t={:.4} dof={}, antisymmetry {worst_anti:.1e}, scale {worst_scale:.1e}",
            worked.t_stat, worked.dof
        ),
    )
}

fn tribal_property() -> Outcome {
    let seeds = 20;
    let l5 = LevelConfig::new(Level::L5, 7, 2);
    let l2 = LevelConfig::new(Level::L2, 7, 2);
    let mut capped = 0;
    let mut not_above = 0;
    let (mut sum5, mut sum2) = (0.0, 0.0);
    for seed in 0..seeds {
        let e5 = simulate(&l5, seed).map_err(|e| e.to_string())?;
        let e2 = simulate(&l2, seed).map_err(|e| e.to_string())?;
        if modal_partition(&e5.records, e5.warmup).is_some_and(|p| partition_variance_cap(&p) <= 25) {
            capped += 1;
        }
        let v5 = demand_variance(&e5.records, e5.warmup).map_err(|e| e.to_string())?;
        let v2 = demand_variance(&e2.records, e2.warmup).map_err(|e| e.to_string())?;
        sum5 += v5;
        sum2 += v2;
        if v5 <= v2 {
            not_above += 1;
        }
    }
    let needed = (0.95 * seeds as f64).ceil() as u64;
    check(
        not_above >= needed,
        format!(
            "modal partition sum of squares <= 25 in {capped}/{seeds} seeds; \
             L5 variance <= L2 in {not_above}/{seeds} seeds (need {needed}); \
             mean variance L5 {:.3}, L2 {:.3}",
            sum5 / seeds as f64,
            sum2 / seeds as f64
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("poisson-binomial oracle", poisson_binomial_oracle),
        ("L1 simulation vs binomial", l1_matches_binomial),
        ("disposition filter identities", filter_identities),
        ("payoff symmetry", payoff_symmetry),
        ("sweep determinism", determinism),
        ("variance-cap arithmetic", variance_caps),
        ("conch ramp", conch_ramp),
        ("L4/L5 structural ablation", structural_ablation),
        ("paired t statistics", statistical_layer),
        ("tribal variance vs shared forecaster", tribal_property),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
