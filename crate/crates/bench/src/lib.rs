//! Experiment harness for the flow-matching editing lab: configuration,
//! runners for the editor comparison, ablations, noise transfer and the
//! corruption probe, and CSV/SVG reports.

pub mod config;
pub mod error;
pub mod report;
pub mod runners;
pub mod svg;

pub use config::{EditorKind, RunConfig};
pub use error::{BenchError, Result};
pub use report::{emit_probe, emit_report, ProbeReport, ReportRow, RunReport};
pub use runners::{
    ablate, compare_editors, corruption_probe, emit_ablation, make_task, obtain_net, pattern_set, probe_experiment,
    train_net, transfer_experiment, AblationParam,
};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/experiments.md")]
mod book_experiments {}
