//! Log statistics: 3-sigma key-rate elimination, QBER threshold means,
//! daily series and per-connection reports.

mod report;
mod rules;

pub use report::{
    build_report, daily_key_rates, daily_series, days_in_log, key_rate_samples, parse_report_csv,
    qber_samples, render_daily_csv, render_report_csv, ConnectionReport, DailyRow, ReportOptions,
    SampleKind, SampleSeries, REPORT_HEADER, SECONDS_PER_DAY,
};
pub use rules::{
    eliminate_3sigma, mean, mean_qber_default, mean_qber_with_threshold,
    mean_with_3sigma_elimination, mean_with_sigma_policy, std_dev, SigmaPolicy,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("no values")]
    Empty,
    #[error("non-finite value")]
    NonFinite,
    #[error("timestamps decrease")]
    Unordered,
    #[error("unparseable route `{0}`")]
    BadRoute(String),
    #[error("topology: {0}")]
    Topology(String),
    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },
}
