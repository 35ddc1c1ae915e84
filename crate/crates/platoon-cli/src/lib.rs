//! IO, file formats, synthetic benchmarks and the pipeline orchestrator
//! around `platoon-core`.

pub mod config;
pub mod formats;
pub mod netload;
pub mod oracle;
pub mod pipeline;
pub mod synth;
