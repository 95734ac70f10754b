//! Per-round QBER threshold handling and the self-calibration trigger.

use std::fmt;

pub const DEFAULT_QBER_THRESHOLD: f64 = 0.03125;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QberPolicy {
    pub threshold: f64,
    pub consecutive_limit: u32,
}

impl Default for QberPolicy {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_QBER_THRESHOLD,
            consecutive_limit: 3,
        }
    }
}

impl QberPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.threshold > 0.0 && self.threshold < 0.5) {
            return Err(format!("qber threshold {} not in (0, 0.5)", self.threshold));
        }
        if self.consecutive_limit < 1 {
            return Err("consecutive_limit must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GateAction {
    Keep,
    Discard,
    /// Discard that completes a run of `consecutive_limit`; the device
    /// recalibrates afterwards.
    Calibrate,
}

impl fmt::Display for GateAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GateAction::Keep => "keep",
            GateAction::Discard => "discard",
            GateAction::Calibrate => "calibrate",
        })
    }
}

/// Streaming form of [`qber_gate`].
#[derive(Clone, Debug)]
pub struct QberGate {
    policy: QberPolicy,
    run: u32,
    calibrations: u64,
}

impl QberGate {
    pub fn new(policy: QberPolicy) -> Self {
        Self {
            policy,
            run: 0,
            calibrations: 0,
        }
    }

    pub fn policy(&self) -> &QberPolicy {
        &self.policy
    }

    pub fn calibrations(&self) -> u64 {
        self.calibrations
    }

    /// Current run of consecutive over-threshold rounds.
    pub fn run_length(&self) -> u32 {
        self.run
    }

    pub fn observe(&mut self, qber: f64) -> GateAction {
        if qber <= self.policy.threshold {
            self.run = 0;
            return GateAction::Keep;
        }
        self.run += 1;
        if self.run >= self.policy.consecutive_limit {
            self.run = 0;
            self.calibrations += 1;
            GateAction::Calibrate
        } else {
            GateAction::Discard
        }
    }
}

pub fn qber_gate(samples: &[f64], policy: &QberPolicy) -> Vec<GateAction> {
    let mut gate = QberGate::new(*policy);
    samples.iter().map(|&q| gate.observe(q)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use GateAction::*;

    #[test]
    fn keep_then_three_discards_calibrates_once() {
        let p = QberPolicy::default();
        let got = qber_gate(&[0.01, 0.05, 0.05, 0.05, 0.01], &p);
        assert_eq!(got, vec![Keep, Discard, Discard, Calibrate, Keep]);
    }

    #[test]
    fn threshold_is_inclusive() {
        let p = QberPolicy::default();
        assert_eq!(qber_gate(&[0.03125], &p), vec![Keep]);
    }

    #[test]
    fn long_run_calibrates_every_limit() {
        let p = QberPolicy::default();
        let got = qber_gate(&[0.1; 7], &p);
        assert_eq!(
            got,
            vec![Discard, Discard, Calibrate, Discard, Discard, Calibrate, Discard]
        );
    }
}
