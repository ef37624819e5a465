//! CLI layer: configuration files, experiment drivers, CSV emission and
//! reproducibility bookkeeping.

mod config;
mod csvout;
mod studies;

pub use config::{fmt_float, KlMethod, StudyConfig, StudyKind};
pub use csvout::{provenance, read_rows, write_json, OutputFile, VERSION};
pub use studies::{
    cmd_convergence, cmd_epscost, cmd_kl_check, cmd_solve, run_convergence, run_epscost,
    run_kl_check, ConvergenceResult, ConvergenceRow, EpsCostResult, EpsCostRow, KlCheckResult,
};

/// Dispatches one study by kind.
pub fn run_study(kind: StudyKind, cfg: &StudyConfig) -> crate::Result<()> {
    match kind {
        StudyKind::Solve => cmd_solve(cfg),
        StudyKind::Convergence => cmd_convergence(cfg),
        StudyKind::EpsCost => cmd_epscost(cfg),
        StudyKind::KlCheck => cmd_kl_check(cfg),
    }
}
