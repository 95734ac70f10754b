//! Business-driven drain: one connection serves a constant-rate consumer
//! faster than it generates, while the queue keeps re-scheduling.

use std::collections::BTreeMap;

use super::schedule::{feasible_routes, select_with, PairingSchedule, QueuePolicy};
use super::state::{KmsEvent, KmsEventKind, KmsState, MICROS_PER_SECOND};
use super::store::{KeyStore, DEFAULT_CAPACITY_BYTES};
use crate::jinan;
use crate::topology::{ConnectionId, FeasibilityPolicy, Route, Topology};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrainConfig {
    pub connection: String,
    pub initial_bytes: u64,
    #[serde(rename = "consumer_Bps")]
    pub consumer_bytes_per_s: u64,
    pub generation_bps: u64,
    pub requeue_s: u64,
    pub horizon_periods: u32,
    /// Starting buffer of every other feasible connection.
    #[serde(default = "default_peer_initial")]
    pub peer_initial_bytes: u64,
    #[serde(default = "default_capacity")]
    pub capacity_bytes: u64,
}

fn default_peer_initial() -> u64 {
    1 << 20
}

fn default_capacity() -> u64 {
    DEFAULT_CAPACITY_BYTES
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DrainError {
    #[error("invalid drain config: {0}")]
    Invalid(String),
    #[error("connection {0} is not feasible on this topology")]
    NotFeasible(String),
    #[error("config parse error: {0}")]
    Parse(String),
}

impl DrainConfig {
    /// Field scenario for U4-U3.
    pub fn field_scenario() -> Self {
        Self {
            connection: "U4-U3".into(),
            initial_bytes: DEFAULT_CAPACITY_BYTES,
            consumer_bytes_per_s: 65_536,
            generation_bps: 25_951,
            requeue_s: 1800,
            horizon_periods: 7,
            peer_initial_bytes: default_peer_initial(),
            capacity_bytes: DEFAULT_CAPACITY_BYTES,
        }
    }

    pub fn parse(text: &str) -> Result<Self, DrainError> {
        let c: Self = toml::from_str(text).map_err(|e| DrainError::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), DrainError> {
        self.connection
            .parse::<ConnectionId>()
            .map_err(|e| DrainError::Invalid(format!("connection: {e}")))?;
        if self.requeue_s == 0 {
            return Err(DrainError::Invalid("requeue_s must be positive".into()));
        }
        if self.horizon_periods == 0 {
            return Err(DrainError::Invalid(
                "horizon_periods must be positive".into(),
            ));
        }
        if self.initial_bytes > self.capacity_bytes || self.peer_initial_bytes > self.capacity_bytes
        {
            return Err(DrainError::Invalid(
                "initial buffer exceeds capacity".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DrainEpoch {
    pub epoch: u64,
    pub scheduled: bool,
    /// Target buffer when the epoch was scheduled.
    pub buffered_bytes: u64,
    pub min_peer_bytes: Option<u64>,
    pub active: Vec<ConnectionId>,
}

impl DrainEpoch {
    pub fn buffer_is_min(&self) -> bool {
        match self.min_peer_bytes {
            Some(m) => self.buffered_bytes <= m,
            None => true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DrainReport {
    pub connection: ConnectionId,
    pub requeue_s: f64,
    pub time_to_empty_s: Option<f64>,
    pub epochs: Vec<DrainEpoch>,
    pub events: Vec<KmsEvent>,
    pub final_buffered_bytes: u64,
    pub unserved_bytes: u64,
}

impl DrainReport {
    /// Consecutive scheduled epochs starting from the one in which the
    /// store first emptied.
    pub fn consecutive_periods_after_empty(&self) -> u32 {
        let Some(t) = self.time_to_empty_s else {
            return 0;
        };
        let first = (t / self.requeue_s).floor() as usize;
        self.epochs[first.min(self.epochs.len())..]
            .iter()
            .take_while(|e| e.scheduled)
            .count() as u32
    }

    /// Whether the target's buffer was the minimum at every requeue after
    /// the first.
    pub fn priority_retained(&self) -> bool {
        self.epochs.iter().skip(1).all(DrainEpoch::buffer_is_min)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("connection {}\n", self.connection));
        match self.time_to_empty_s {
            Some(t) => s.push_str(&format!("time_to_empty_s {t:.6}\n")),
            None => s.push_str("time_to_empty_s none\n"),
        }
        s.push_str(&format!(
            "consecutive_periods_after_empty {}\n",
            self.consecutive_periods_after_empty()
        ));
        s.push_str(&format!("priority_retained {}\n", self.priority_retained()));
        s.push_str(&format!(
            "final_buffered_bytes {}\n",
            self.final_buffered_bytes
        ));
        s.push_str(&format!("unserved_bytes {}\n", self.unserved_bytes));
        s.push_str("epoch scheduled buffered_bytes min_peer_bytes buffer_is_min active\n");
        for e in &self.epochs {
            let active: Vec<String> = e.active.iter().map(|c| c.to_string()).collect();
            s.push_str(&format!(
                "{} {} {} {} {} {}\n",
                e.epoch,
                e.scheduled,
                e.buffered_bytes,
                e.min_peer_bytes.map_or("-".into(), |m| m.to_string()),
                e.buffer_is_min(),
                active.join(",")
            ));
        }
        s
    }
}

/// Runs the scenario on the shipped Jinan network; peers generate at their
/// field key rates.
pub fn run_drain_scenario(config: &DrainConfig) -> Result<DrainReport, DrainError> {
    let topology = jinan::topology();
    let feasible = feasible_routes(&topology, &FeasibilityPolicy::default());
    run_drain_scenario_on(config, &topology, &feasible, &field_rates())
}

/// The target is already pairing when the scenario starts, so it is kept
/// in the first epoch; from then on the queue alone decides.
pub fn run_drain_scenario_on(
    config: &DrainConfig,
    topology: &Topology,
    feasible: &BTreeMap<ConnectionId, Route>,
    peer_rates: &BTreeMap<ConnectionId, u64>,
) -> Result<DrainReport, DrainError> {
    config.validate()?;
    let target: ConnectionId = config.connection.parse().expect("validated");
    if !feasible.contains_key(&target) {
        return Err(DrainError::NotFeasible(target.to_string()));
    }
    let policy = QueuePolicy {
        requeue_interval_s: config.requeue_s as f64,
        switch_ports: 1,
    };
    let stores = feasible.keys().map(|c| {
        let initial = if *c == target {
            config.initial_bytes
        } else {
            config.peer_initial_bytes
        };
        KeyStore::with_initial(c.clone(), config.capacity_bytes, initial)
    });
    let mut kms = KmsState::new(stores);
    kms.set_consumption(&target, config.consumer_bytes_per_s);

    let mut epochs = Vec::new();
    let mut events = Vec::new();
    for epoch in 0..config.horizon_periods as u64 {
        let pinned = if epoch == 0 {
            vec![target.clone()]
        } else {
            Vec::new()
        };
        let schedule = select_with(feasible, kms.stores(), topology, &policy, epoch, &pinned);
        let buffered = kms.store(&target).map_or(0, KeyStore::buffered_bytes);
        let min_peer = kms
            .stores()
            .iter()
            .filter(|(c, _)| **c != target)
            .map(|(_, s)| s.buffered_bytes())
            .min();
        for c in feasible.keys() {
            let rate = if !schedule.contains(c) {
                0
            } else if *c == target {
                config.generation_bps
            } else {
                peer_rates.get(c).copied().unwrap_or(0)
            };
            kms.set_generation(c, rate);
        }
        events.extend(kms.tick(config.requeue_s * MICROS_PER_SECOND));
        epochs.push(DrainEpoch {
            epoch,
            scheduled: schedule.contains(&target),
            buffered_bytes: buffered,
            min_peer_bytes: min_peer,
            active: schedule.active.iter().map(|(c, _)| c.clone()).collect(),
        });
    }
    let time_to_empty_s = events
        .iter()
        .find(|e| e.connection == target && e.kind == KmsEventKind::StoreEmpty)
        .map(|e| e.at_us as f64 / MICROS_PER_SECOND as f64);
    let store = kms.store(&target).expect("target store");
    Ok(DrainReport {
        connection: target,
        requeue_s: config.requeue_s as f64,
        time_to_empty_s,
        epochs,
        events,
        final_buffered_bytes: store.buffered_bytes(),
        unserved_bytes: store.unserved_bytes(),
    })
}

/// Replays `epochs` requeue periods on `topology`. Every scheduled
/// connection generates at its `rates` entry (bits/s); nothing consumes.
pub fn run_rotation(
    topology: &Topology,
    feasible: &BTreeMap<ConnectionId, Route>,
    policy: &QueuePolicy,
    rates: &BTreeMap<ConnectionId, u64>,
    initial_bytes: u64,
    epochs: u64,
) -> Vec<PairingSchedule> {
    let stores = feasible.keys().map(|c| {
        KeyStore::with_initial(
            c.clone(),
            DEFAULT_CAPACITY_BYTES,
            initial_bytes.min(DEFAULT_CAPACITY_BYTES),
        )
    });
    let mut kms = KmsState::new(stores);
    let step_us = (policy.requeue_interval_s * MICROS_PER_SECOND as f64).round() as u64;
    let mut out = Vec::new();
    for epoch in 0..epochs {
        let schedule = select_with(feasible, kms.stores(), topology, policy, epoch, &[]);
        for c in feasible.keys() {
            let rate = if schedule.contains(c) {
                rates.get(c).copied().unwrap_or(0)
            } else {
                0
            };
            kms.set_generation(c, rate);
        }
        kms.tick(step_us);
        out.push(schedule);
    }
    out
}

/// Field key rates of the shipped network in bits/s.
pub fn field_rates() -> BTreeMap<ConnectionId, u64> {
    jinan::FIELD_RECORDS
        .iter()
        .map(|r| (r.connection(), (r.key_rate_kbps * 1000.0).round() as u64))
        .collect()
}
