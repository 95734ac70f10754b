//! Auth-mode comparison and handshake timing.

use std::fmt::Write as _;
use std::time::Duration;

use super::config::{AuthSection, SimConfig};
use super::experiment::{report_options, run_pinned, Experiment};
use super::streams::stream_seed;
use super::SimError;
use crate::crypto::{simulate_handshake, Pki, Role, SessionConfig, TranscriptEntry, Validity};
use crate::pipeline::{AuthMode, LogRecord};
use crate::stats::{key_rate_samples, mean};
use crate::topology::ConnectionId;

#[derive(Clone, Debug, PartialEq)]
pub struct AuthComparison {
    pub connection: ConnectionId,
    pub pqc_kbps: f64,
    pub preshared_kbps: f64,
    /// |pqc - preshared| / preshared.
    pub relative_difference: f64,
    /// Whether both runs logged the same rounds apart from the mode column.
    pub same_outcomes: bool,
    pub pqc: Experiment,
    pub preshared: Experiment,
}

impl AuthComparison {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "connection {}", self.connection);
        let _ = writeln!(s, "mode key_rate_kbps");
        let _ = writeln!(s, "pqc {:.3}", self.pqc_kbps);
        let _ = writeln!(s, "preshared {:.3}", self.preshared_kbps);
        let _ = writeln!(s, "relative_difference {:.6}", self.relative_difference);
        let _ = writeln!(s, "same_outcomes {}", self.same_outcomes);
        s
    }
}

/// Plain mean of per-process rates over the run.
pub fn mean_key_rate(records: &[LogRecord], config: &SimConfig) -> f64 {
    let series = key_rate_samples(records, &report_options(config));
    let v: Vec<f64> = series.values().flat_map(|s| s.values()).collect();
    if v.is_empty() {
        0.0
    } else {
        mean(&v)
    }
}

fn strip_mode(records: &[LogRecord]) -> Vec<LogRecord> {
    records
        .iter()
        .map(|r| LogRecord {
            auth_mode: AuthMode::Pqc,
            ..r.clone()
        })
        .collect()
}

/// Runs `connection` alone twice with the same seed, once per mode.
pub fn compare_auth_modes(
    config: &SimConfig,
    connection: &str,
) -> Result<AuthComparison, SimError> {
    let c: ConnectionId = connection
        .parse()
        .map_err(|e| SimError::Config(format!("{e}")))?;
    let mut base = config.clone();
    base.connections = Some(vec![c.to_string()]);
    base.consumers.retain(|k| k.connection == c.to_string());
    let run = |mode: AuthMode| {
        let mut cfg = base.clone();
        cfg.auth_mode = mode;
        run_pinned(&cfg)
    };
    let pqc = run(AuthMode::Pqc)?;
    let preshared = run(AuthMode::Preshared)?;
    let pqc_kbps = mean_key_rate(&pqc.records, &base);
    let preshared_kbps = mean_key_rate(&preshared.records, &base);
    let relative_difference = if preshared_kbps > 0.0 {
        (pqc_kbps - preshared_kbps).abs() / preshared_kbps
    } else if pqc_kbps == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(AuthComparison {
        connection: c,
        pqc_kbps,
        preshared_kbps,
        relative_difference,
        same_outcomes: strip_mode(&pqc.records) == strip_mode(&preshared.records),
        pqc,
        preshared,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingReport {
    /// Completion time of the simulated exchange.
    pub total: Duration,
    /// Sum of the phases; equals `total` for an honest run.
    pub closed_form: Duration,
    pub phases: Vec<(&'static str, Duration)>,
    pub hello_bytes: usize,
    pub signature_bytes: usize,
    pub bytes_on_wire: usize,
    pub authenticated: bool,
    /// The initiator's view of the exchange.
    pub transcript: Vec<TranscriptEntry>,
}

impl TimingReport {
    pub fn within(&self, budget: Duration) -> bool {
        self.total <= budget
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "hello_bytes {}", self.hello_bytes);
        let _ = writeln!(s, "signature_bytes {}", self.signature_bytes);
        let _ = writeln!(s, "bytes_on_wire {}", self.bytes_on_wire);
        for (name, d) in &self.phases {
            let _ = writeln!(s, "phase {name} {:.3} ms", d.as_secs_f64() * 1e3);
        }
        let _ = writeln!(
            s,
            "closed_form {:.3} ms",
            self.closed_form.as_secs_f64() * 1e3
        );
        let _ = writeln!(s, "total {:.3} ms", self.total.as_secs_f64() * 1e3);
        let _ = writeln!(s, "authenticated {}", self.authenticated);
        s
    }
}

/// One full handshake between two freshly enrolled nodes. Both hellos
/// leave at once, so the critical path is one hello leg, a verify and a
/// sign, one signature leg and a verify.
pub fn handshake_timing(auth: &AuthSection, seed: u64) -> TimingReport {
    let pki = Pki::with_default_scheme(stream_seed(seed, "ca", "", 0));
    let v = Validity {
        not_before: 0,
        not_after: u64::MAX,
    };
    let a = pki.enroll("U4", v, stream_seed(seed, "identity", "U4", 0));
    let b = pki.enroll("U3", v, stream_seed(seed, "identity", "U3", 0));
    let session = |id, role, peer: &str, k: &str| {
        pki.session(
            id,
            SessionConfig {
                role,
                expected_peer: peer.to_string(),
                now: 1,
                rng_seed: stream_seed(seed, "timing", k, 0),
            },
        )
    };
    let mut sa = session(&a, Role::Initiator, "U3", "a");
    let mut sb = session(&b, Role::Responder, "U4", "b");
    let costs = auth.costs();
    let channel = auth.channel();
    let run = simulate_handshake(&mut sa, &mut sb, &costs, &channel);
    let hello_bytes = run.frame_bytes.iter().take(2).copied().max().unwrap_or(0);
    let signature_bytes = run.frame_bytes.iter().skip(2).copied().max().unwrap_or(0);
    let phases = vec![
        ("hello_serialization", channel.serialization(hello_bytes)),
        ("hello_propagation", channel.one_way_delay),
        ("certificate_verify", costs.verify),
        ("transcript_sign", costs.sign),
        (
            "signature_serialization",
            channel.serialization(signature_bytes),
        ),
        ("signature_propagation", channel.one_way_delay),
        ("signature_verify", costs.verify),
    ];
    let closed_form = phases.iter().map(|p| p.1).sum();
    TimingReport {
        total: run.completion,
        closed_form,
        phases,
        hello_bytes,
        signature_bytes,
        bytes_on_wire: run.bytes_on_wire,
        authenticated: run.authenticated(),
        transcript: sa.transcript().to_vec(),
    }
}
