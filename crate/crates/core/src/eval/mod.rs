//! Metrics, dataset evaluation and the benchmark runners.

mod bench;
mod evaluate;
mod metrics;
pub mod paper;
mod report;

pub use bench::{
    ablation_cells, benchmark_cells, median, run_ablation, run_benchmark, CellSpec, ResultTable,
    RowResult, Runner, ABLATION_TAGS, ABLATION_TITLE, BENCHMARK_POINTS, BENCHMARK_TITLE,
};
pub use evaluate::{evaluate, evaluate_samples, EvalReport};
pub use metrics::{confusion, mean_iou, pixel_accuracy, Confusion};
pub use report::{
    export_panels, imagery_composite, parse_summary, render_paper_reference, render_summary,
    render_table, render_tsv, AGGREGATION, BANNER, PANEL_NAMES,
};
