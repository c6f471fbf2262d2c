//! Metrics, analysis reports and the synthetic benchmark.

mod export;
mod heatmap;
mod metrics;
mod sweep;
pub mod synth;

pub use export::embeddings_tsv;
pub use heatmap::{attention_heatmap, HeatmapMatrix, HEATMAP_SCHEME};
pub use metrics::{freq_stratified_f1, micro_f1, per_class_f1, ClassScore, EvalReport, FrequencyBin};
pub use sweep::{run_ablation_sweep, SweepAxis, SweepReport, SweepRow, SweepSpec};
pub use synth::{generate_synthetic, SynthConfig};
