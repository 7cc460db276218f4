//! Writes plot-ready CSV files for the ladder, win-rate and tribe figures.

use std::path::PathBuf;

use scarcity::config::Level;
use scarcity::harness::{emit_figure_data, run_sweep, FigureKind, SweepPlan};

fn main() -> scarcity::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "figure_data".into()));
    let mut plan = SweepPlan::new(vec![Level::L1, Level::L4, Level::L5], vec![7]);
    plan.template.seeds = (0..5).collect();
    let summary = run_sweep(&plan)?;
    for kind in [FigureKind::Ladder, FigureKind::Winrate, FigureKind::Tribes] {
        let path = emit_figure_data(&summary, kind, &dir)?;
        println!("{kind:?}: {}", path.display());
    }
    Ok(())
}
