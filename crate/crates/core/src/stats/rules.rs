//! Outlier and threshold rules applied to per-process samples.

use super::StatsError;
use crate::pipeline::DEFAULT_QBER_THRESHOLD;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SigmaPolicy {
    /// Divide by n - 1 rather than n.
    pub sample_sd: bool,
    /// Repeat elimination until nothing more is removed.
    pub iterate: bool,
}

impl Default for SigmaPolicy {
    fn default() -> Self {
        Self {
            sample_sd: true,
            iterate: false,
        }
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Standard deviation; 0 for a single value.
pub fn std_dev(values: &[f64], sample: bool) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    let d = if sample { n - 1 } else { n };
    (ss / d as f64).sqrt()
}

fn survivors(values: &[f64], policy: &SigmaPolicy) -> Vec<f64> {
    let m = mean(values);
    let sd = std_dev(values, policy.sample_sd);
    if sd == 0.0 {
        return values.to_vec();
    }
    values
        .iter()
        .copied()
        .filter(|v| (v - m).abs() <= 3.0 * sd)
        .collect()
}

/// Values kept by the 3-sigma rule.
pub fn eliminate_3sigma(values: &[f64], policy: &SigmaPolicy) -> Result<Vec<f64>, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut kept = survivors(values, policy);
    if policy.iterate {
        loop {
            let next = survivors(&kept, policy);
            if next.len() == kept.len() {
                break;
            }
            kept = next;
        }
    }
    Ok(kept)
}

/// Mean after one pass of 3-sigma elimination with sample standard deviation.
pub fn mean_with_3sigma_elimination(values: &[f64]) -> Result<f64, StatsError> {
    mean_with_sigma_policy(values, &SigmaPolicy::default())
}

pub fn mean_with_sigma_policy(values: &[f64], policy: &SigmaPolicy) -> Result<f64, StatsError> {
    Ok(mean(&eliminate_3sigma(values, policy)?))
}

/// Mean over values at or below `threshold`; `None` if none remain.
pub fn mean_qber_with_threshold(values: &[f64], threshold: f64) -> Result<Option<f64>, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    let kept: Vec<f64> = values.iter().copied().filter(|q| *q <= threshold).collect();
    Ok((!kept.is_empty()).then(|| mean(&kept)))
}

pub fn mean_qber_default(values: &[f64]) -> Result<Option<f64>, StatsError> {
    mean_qber_with_threshold(values, DEFAULT_QBER_THRESHOLD)
}
