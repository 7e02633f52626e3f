//! Experiment runner: configuration, training runs with on-disk artifacts, OT benchmark,
//! SVG charts.

mod bench;
mod config;
mod run;
pub mod svg;

pub use bench::{bench_table, ot_bench, parse_sizes, write_bench_csv, BenchRow, BENCH_HEADER};
pub use config::{parse_config, parse_config_str, DatasetKind, TrainConfig};
pub use run::{
    build_dataset, evaluate_checkpoint, metrics_header, output_dir, run_experiment,
    run_experiment_in, MetricsRow, RunSummary, CHECKPOINT_FILE, LOSS_CURVE_FILE, METRICS_FILE,
    OUT_ENV, SUMMARY_FILE,
};
