//! Deterministic discrete-event simulation of the network: config loading,
//! the event loop, the experiment presets and artifact emission.

mod config;
mod events;
mod experiment;
mod presets;
mod streams;

pub use config::{
    AuthSection, FeasibilitySection, KmsSection, PipelineSection, ProfileOverride, ReportSection,
    SimConfig,
};
pub use events::EventLoop;
pub use experiment::{hex, report_options, run_experiment, run_pinned, Experiment, RunSummary};
pub use presets::{
    compare_auth_modes, handshake_timing, mean_key_rate, AuthComparison, TimingReport,
};
pub use streams::{stream_seed, stream_u64};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("config: {0}")]
    Config(String),
    #[error("connection {0} is not feasible")]
    Infeasible(String),
    #[error("internal: {0}")]
    Internal(String),
}
