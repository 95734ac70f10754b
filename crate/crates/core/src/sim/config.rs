//! Simulation config: a TOML document. Only `seed` and `duration_s` are
//! required; every section falls back to the library defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::crypto::{ChannelModel, OperationCosts};
use crate::jinan;
use crate::kms::{Consumer, QueuePolicy, DEFAULT_CAPACITY_BYTES};
use crate::pipeline::{
    fit_device_factor, AuthMode, DeviceProfile, PipelineParams, QberPolicy, WinnowParams,
    DEFAULT_SAFETY_MARGIN,
};
use crate::stats::SigmaPolicy;
use crate::topology::{ConnectionId, FeasibilityPolicy, Topology};

use super::SimError;

/// Per-connection consumption in the 36-day preset, bytes per second.
pub const BACKGROUND_CONSUMER_BPS: u64 = 32;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeasibilitySection {
    pub max_loss_db: f64,
    pub max_switches_per_path: usize,
}

impl Default for FeasibilitySection {
    fn default() -> Self {
        let p = FeasibilityPolicy::default();
        Self {
            max_loss_db: p.max_loss_db,
            max_switches_per_path: p.max_switches_per_path,
        }
    }
}

impl From<FeasibilitySection> for FeasibilityPolicy {
    fn from(s: FeasibilitySection) -> Self {
        FeasibilityPolicy {
            max_loss_db: s.max_loss_db,
            max_switches_per_path: s.max_switches_per_path,
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub round_s: f64,
    pub block_bits: usize,
    pub safety_margin: u64,
    pub qber_jitter: f64,
    pub qber_drift_per_round: f64,
    pub calibration_blocks: usize,
    pub winnow_schedule: Vec<usize>,
    pub winnow_max_rounds: usize,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let p = PipelineParams::default();
        Self {
            round_s: p.round_s,
            block_bits: p.block_bits,
            safety_margin: DEFAULT_SAFETY_MARGIN,
            qber_jitter: p.qber_jitter,
            qber_drift_per_round: p.qber_drift_per_round,
            calibration_blocks: p.calibration_blocks,
            winnow_schedule: p.winnow.schedule,
            winnow_max_rounds: p.winnow.max_rounds,
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuthSection {
    pub preshared_pool_bytes: u64,
    pub preshared_cost_per_event: u64,
    /// Probability that a tag frame is corrupted in flight (pqc only).
    pub fault_rate: f64,
    pub one_way_delay_ms: f64,
    /// Omit for an unlimited link.
    pub bandwidth_bps: Option<u64>,
    pub op_ms: f64,
}

impl Default for AuthSection {
    fn default() -> Self {
        Self {
            preshared_pool_bytes: 1 << 26,
            preshared_cost_per_event: 32,
            fault_rate: 0.0,
            one_way_delay_ms: 10.0,
            bandwidth_bps: Some(100_000),
            op_ms: 10.0,
        }
    }
}

fn ms(v: f64) -> Duration {
    Duration::from_nanos((v * 1e6).round() as u64)
}

impl AuthSection {
    pub fn channel(&self) -> ChannelModel {
        ChannelModel {
            one_way_delay: ms(self.one_way_delay_ms),
            bandwidth_bps: self.bandwidth_bps,
        }
    }

    pub fn costs(&self) -> OperationCosts {
        OperationCosts::uniform(ms(self.op_ms))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KmsSection {
    pub capacity_bytes: u64,
    pub initial_bytes: u64,
}

impl Default for KmsSection {
    fn default() -> Self {
        Self {
            capacity_bytes: DEFAULT_CAPACITY_BYTES,
            initial_bytes: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub sigma: SigmaPolicy,
}

/// Per-connection overrides on top of the fitted default profile.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileOverride {
    pub qber_base: Option<f64>,
    pub device_factor: Option<f64>,
    pub repetition_rate_hz: Option<f64>,
    pub detector_efficiency: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub duration_s: f64,
    #[serde(default)]
    pub auth_mode: AuthMode,
    /// Topology file, relative to the config file. Defaults to the
    /// shipped Jinan network.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<PathBuf>,
    /// Restricts the run to these connections.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connections: Option<Vec<String>>,
    #[serde(default)]
    pub feasibility: FeasibilitySection,
    #[serde(default)]
    pub queue: QueuePolicy,
    #[serde(default)]
    pub qber: QberPolicy,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub auth: AuthSection,
    #[serde(default)]
    pub kms: KmsSection,
    #[serde(default)]
    pub report: ReportSection,
    #[serde(default)]
    pub consumers: Vec<Consumer>,
    #[serde(default)]
    pub profiles: BTreeMap<String, ProfileOverride>,
    #[serde(skip)]
    pub topology_text: Option<String>,
}

impl SimConfig {
    /// Minimal config on the shipped network.
    pub fn new(seed: u64, duration_s: f64) -> Self {
        Self {
            seed,
            duration_s,
            auth_mode: AuthMode::Pqc,
            topology: None,
            connections: None,
            feasibility: FeasibilitySection::default(),
            queue: QueuePolicy::default(),
            qber: QberPolicy::default(),
            pipeline: PipelineSection::default(),
            auth: AuthSection::default(),
            kms: KmsSection::default(),
            report: ReportSection::default(),
            consumers: Vec::new(),
            profiles: BTreeMap::new(),
            topology_text: None,
        }
    }

    /// The 36-day network run at desk scale, with a light background
    /// consumer on every field connection so stores keep turning over.
    pub fn jinan_36_days(seed: u64) -> Self {
        let mut c = Self::new(seed, jinan::EXPERIMENT_DAYS as f64 * 86_400.0);
        c.pipeline.round_s = 300.0;
        c.consumers = jinan::FIELD_RECORDS
            .iter()
            .map(|f| Consumer {
                connection: f.connection().to_string(),
                rate_bytes_per_s: BACKGROUND_CONSUMER_BPS,
            })
            .collect();
        c
    }

    /// Parses TOML; a relative `topology` path resolves against `base_dir`.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self, SimError> {
        let mut c: Self = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        if let Some(p) = &c.topology {
            let path = match base_dir {
                Some(d) if p.is_relative() => d.join(p),
                _ => p.clone(),
            };
            let t = std::fs::read_to_string(&path)
                .map_err(|e| SimError::Config(format!("topology {}: {e}", path.display())))?;
            c.topology_text = Some(t);
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent())
    }

    /// Canonical TOML form; what the manifest hashes.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn topology_source(&self) -> &str {
        self.topology_text
            .as_deref()
            .unwrap_or(jinan::TOPOLOGY_TEXT)
    }

    pub fn topology(&self) -> Result<Topology, SimError> {
        Topology::parse(self.topology_source())
            .map_err(|e| SimError::Config(format!("topology: {e}")))
    }

    pub fn feasibility_policy(&self) -> FeasibilityPolicy {
        self.feasibility.into()
    }

    pub fn pipeline_params(&self) -> PipelineParams {
        let p = &self.pipeline;
        PipelineParams {
            winnow: WinnowParams {
                schedule: p.winnow_schedule.clone(),
                max_rounds: p.winnow_max_rounds,
                shuffle_seed: 0,
            },
            qber: self.qber,
            safety_margin: p.safety_margin,
            round_s: p.round_s,
            block_bits: p.block_bits,
            qber_jitter: p.qber_jitter,
            qber_drift_per_round: p.qber_drift_per_round,
            calibration_blocks: p.calibration_blocks,
        }
    }

    pub fn rounds_per_epoch(&self) -> u64 {
        (self.queue.requeue_interval_s / self.pipeline.round_s + 1e-9).floor() as u64
    }

    /// Device profile: field QBER and a device factor fitted so the rate
    /// model reproduces the field key rate at `loss_db`, then overrides.
    pub fn profile(&self, connection: &ConnectionId, loss_db: f64) -> DeviceProfile {
        let mut p = DeviceProfile::default();
        if let Some(f) = jinan::field_record(connection) {
            p.qber_base = f.qber;
            p.device_factor = fit_device_factor(f.key_rate_kbps, loss_db, &p);
        }
        if let Some(o) = self.profiles.get(&connection.to_string()) {
            p.qber_base = o.qber_base.unwrap_or(p.qber_base);
            p.device_factor = o.device_factor.unwrap_or(p.device_factor);
            p.repetition_rate_hz = o.repetition_rate_hz.unwrap_or(p.repetition_rate_hz);
            p.detector_efficiency = o.detector_efficiency.unwrap_or(p.detector_efficiency);
        }
        p
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return bad(format!(
                "duration_s must be non-negative, got {}",
                self.duration_s
            ));
        }
        self.queue.validate().map_err(SimError::Config)?;
        self.qber.validate().map_err(SimError::Config)?;
        self.feasibility_policy()
            .validate()
            .map_err(SimError::Config)?;
        self.pipeline_params()
            .validate()
            .map_err(SimError::Config)?;
        if self.rounds_per_epoch() == 0 {
            return bad("round_s is longer than the requeue interval".into());
        }
        if !(0.0..=1.0).contains(&self.auth.fault_rate) {
            return bad(format!(
                "fault_rate must be in [0, 1], got {}",
                self.auth.fault_rate
            ));
        }
        if !(self.auth.one_way_delay_ms >= 0.0 && self.auth.op_ms >= 0.0) {
            return bad("channel delay and op cost must be non-negative".into());
        }
        if self.auth.bandwidth_bps == Some(0) {
            return bad("bandwidth_bps must be positive; omit it for an unlimited link".into());
        }
        if self.auth.preshared_cost_per_event == 0 {
            return bad("preshared_cost_per_event must be positive".into());
        }
        if self.kms.initial_bytes > self.kms.capacity_bytes {
            return bad("kms.initial_bytes exceeds capacity".into());
        }
        let ids = self
            .connections
            .iter()
            .flatten()
            .chain(self.consumers.iter().map(|c| &c.connection))
            .chain(self.profiles.keys());
        for id in ids {
            id.parse::<ConnectionId>()
                .map_err(|e| SimError::Config(format!("connection `{id}`: {e}")))?;
        }
        Ok(())
    }
}
