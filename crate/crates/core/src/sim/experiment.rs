//! The network run: requeue epochs, pairing rounds, authentication and
//! consumption on one virtual clock.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use super::config::SimConfig;
use super::events::EventLoop;
use super::streams::{stream_seed, stream_u64};
use super::SimError;
use crate::crypto::{sm3, Identity, Pki, PresharedPool, Validity};
use crate::kms::{feasible_routes, select_pairings, KeyStore, KmsEvent, KmsEventKind, KmsState};
use crate::pipeline::{
    parse_log, render_log, AuthMode, Authenticator, FaultInjector, LogRecord, PairingProcess,
    PqcLink, PresharedLink, RoundAction, YieldModel,
};
use crate::stats::{
    build_report, daily_key_rates, render_daily_csv, render_report_csv, ReportOptions,
};
use crate::topology::{path_loss, ConnectionId, Route, Topology};

const US: f64 = 1e6;

fn to_us(s: f64) -> u64 {
    (s * US).round() as u64
}

enum Event {
    Requeue(u64),
    /// Round `index` of the epoch's pairing on a connection; fires when the
    /// round ends.
    Round {
        connection: ConnectionId,
        epoch: u64,
        index: u64,
    },
}

struct Link {
    route: Route,
    loss_db: f64,
}

struct ActivePairing {
    process: PairingProcess,
    auth: Option<Authenticator>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub epochs: u64,
    pub rounds: u64,
    pub actions: BTreeMap<String, u64>,
    pub key_bits: u64,
    pub credited_bytes: u64,
    pub overflow_bytes: u64,
    pub unserved_bytes: u64,
    pub handshakes: u64,
    pub handshake_failures: u64,
    pub halted_connections: Vec<String>,
}

impl RunSummary {
    pub fn count(&self, a: RoundAction) -> u64 {
        self.actions.get(a.as_str()).copied().unwrap_or(0)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "epochs {}", self.epochs);
        let _ = writeln!(s, "rounds {}", self.rounds);
        for a in RoundAction::ALL {
            let _ = writeln!(
                s,
                "rounds_{} {}",
                a.as_str().replace('-', "_"),
                self.count(a)
            );
        }
        let _ = writeln!(s, "total_key_bits {}", self.key_bits);
        let _ = writeln!(
            s,
            "calibration_events {}",
            self.count(RoundAction::Calibrate)
        );
        let _ = writeln!(s, "auth_failures {}", self.count(RoundAction::AuthFailed));
        let _ = writeln!(s, "handshakes {}", self.handshakes);
        let _ = writeln!(s, "handshake_failures {}", self.handshake_failures);
        let _ = writeln!(s, "credited_bytes {}", self.credited_bytes);
        let _ = writeln!(s, "overflow_bytes {}", self.overflow_bytes);
        let _ = writeln!(s, "unserved_bytes {}", self.unserved_bytes);
        let halted = if self.halted_connections.is_empty() {
            "-".to_string()
        } else {
            self.halted_connections.join(",")
        };
        let _ = writeln!(s, "halted {halted}");
        s
    }
}

/// Everything a run produces, as text in the documented formats.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub records: Vec<LogRecord>,
    pub log: String,
    pub report_csv: String,
    pub daily_csv: String,
    pub kms_events: String,
    pub summary: RunSummary,
    pub summary_text: String,
    pub inputs: Vec<(String, String)>,
}

impl Experiment {
    pub const FILES: [&'static str; 5] = [
        "log.txt",
        "report.csv",
        "daily.csv",
        "kms_events.txt",
        "summary.txt",
    ];

    fn file(&self, name: &str) -> &str {
        match name {
            "log.txt" => &self.log,
            "report.csv" => &self.report_csv,
            "daily.csv" => &self.daily_csv,
            "kms_events.txt" => &self.kms_events,
            "summary.txt" => &self.summary_text,
            _ => unreachable!("unknown artifact"),
        }
    }

    /// `sm3 kind name` lines for inputs and outputs.
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        for (name, text) in &self.inputs {
            let _ = writeln!(s, "{} input {}", hex(&sm3(text.as_bytes())), name);
        }
        for name in Self::FILES {
            let _ = writeln!(
                s,
                "{} output {}",
                hex(&sm3(self.file(name).as_bytes())),
                name
            );
        }
        s
    }

    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, text) in &self.inputs {
            std::fs::write(dir.join(name), text)?;
        }
        for name in Self::FILES {
            std::fs::write(dir.join(name), self.file(name))?;
        }
        std::fs::write(dir.join("manifest.txt"), self.manifest())
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

struct Runner<'a> {
    config: &'a SimConfig,
    topology: Topology,
    links: BTreeMap<ConnectionId, Link>,
    feasible: BTreeMap<ConnectionId, Route>,
    kms: KmsState,
    pki: Option<Pki>,
    identities: BTreeMap<String, Arc<Identity>>,
    yields: BTreeMap<ConnectionId, YieldModel>,
    previous: BTreeMap<ConnectionId, PairingProcess>,
    pools: BTreeMap<ConnectionId, PresharedLink>,
    active: BTreeMap<ConnectionId, ActivePairing>,
    credit_bits: BTreeMap<ConnectionId, u64>,
    records: Vec<LogRecord>,
    kms_events: Vec<KmsEvent>,
    summary: RunSummary,
    /// Pinned connections bypass the queue (used by single-connection runs).
    pin_all: bool,
}

impl<'a> Runner<'a> {
    fn new(config: &'a SimConfig) -> Result<Self, SimError> {
        let topology = config.topology()?;
        let mut feasible = feasible_routes(&topology, &config.feasibility_policy());
        if let Some(list) = &config.connections {
            let mut keep = BTreeMap::new();
            for id in list {
                let c: ConnectionId = id.parse().map_err(|e| SimError::Config(format!("{e}")))?;
                let r = feasible
                    .get(&c)
                    .ok_or_else(|| SimError::Infeasible(id.clone()))?;
                keep.insert(c, r.clone());
            }
            feasible = keep;
        }
        for c in &config.consumers {
            let id: ConnectionId = c
                .connection
                .parse()
                .map_err(|e| SimError::Config(format!("{e}")))?;
            if !feasible.contains_key(&id) {
                return Err(SimError::Infeasible(c.connection.clone()));
            }
        }
        let mut links = BTreeMap::new();
        for (c, r) in &feasible {
            let loss = path_loss(&topology, r).map_err(|e| SimError::Config(e.to_string()))?;
            links.insert(
                c.clone(),
                Link {
                    route: r.clone(),
                    loss_db: loss.total_db,
                },
            );
        }
        let mut kms = KmsState::new(feasible.keys().map(|c| {
            KeyStore::with_initial(
                c.clone(),
                config.kms.capacity_bytes,
                config.kms.initial_bytes,
            )
        }));
        for c in &config.consumers {
            kms.set_consumption(&c.connection.parse().expect("checked"), c.rate_bytes_per_s);
        }
        Ok(Self {
            config,
            topology,
            links,
            feasible,
            kms,
            pki: None,
            identities: BTreeMap::new(),
            yields: BTreeMap::new(),
            previous: BTreeMap::new(),
            pools: BTreeMap::new(),
            active: BTreeMap::new(),
            credit_bits: BTreeMap::new(),
            records: Vec::new(),
            kms_events: Vec::new(),
            summary: RunSummary::default(),
            pin_all: false,
        })
    }

    fn identity(&mut self, node: &str) -> Arc<Identity> {
        let seed = self.config.seed;
        if self.pki.is_none() {
            self.pki = Some(Pki::with_default_scheme(stream_seed(seed, "ca", "", 0)));
        }
        let pki = self.pki.as_ref().expect("set above");
        self.identities
            .entry(node.to_string())
            .or_insert_with(|| {
                let v = Validity {
                    not_before: 0,
                    not_after: u64::MAX,
                };
                pki.enroll(node, v, stream_seed(seed, "identity", node, 0))
            })
            .clone()
    }

    fn authenticator(&mut self, c: &ConnectionId, epoch: u64, now_s: u64) -> Option<Authenticator> {
        let seed = self.config.seed;
        let key = c.to_string();
        match self.config.auth_mode {
            AuthMode::Pqc => {
                let route = &self.links[c].route;
                let (tx, rx) = (
                    route.transmitter().to_string(),
                    route.receiver().to_string(),
                );
                let a = self.identity(&tx);
                let b = self.identity(&rx);
                let pki = self.pki.as_ref().expect("enrolled");
                let auth = &self.config.auth;
                self.summary.handshakes += 1;
                match PqcLink::establish(
                    pki,
                    &a,
                    &b,
                    now_s,
                    stream_seed(seed, "handshake", &key, epoch),
                    &auth.costs(),
                    &auth.channel(),
                ) {
                    Ok((mut link, _)) => {
                        link.faults = FaultInjector::new(
                            auth.fault_rate,
                            stream_u64(seed, "faults", &key, epoch),
                        );
                        Some(Authenticator::Pqc(link))
                    }
                    Err(_) => {
                        self.summary.handshake_failures += 1;
                        None
                    }
                }
            }
            AuthMode::Preshared => {
                let auth = &self.config.auth;
                let link = self.pools.remove(c).unwrap_or_else(|| {
                    let s = stream_seed(seed, "preshared", &key, 0);
                    PresharedLink {
                        a: PresharedPool::new(
                            s,
                            auth.preshared_pool_bytes,
                            auth.preshared_cost_per_event,
                        ),
                        b: PresharedPool::new(
                            s,
                            auth.preshared_pool_bytes,
                            auth.preshared_cost_per_event,
                        ),
                    }
                });
                Some(Authenticator::Preshared(link))
            }
        }
    }

    fn advance(&mut self, to_us: u64) {
        let now = self.kms.now_us();
        if to_us > now {
            let ev = self.kms.tick(to_us - now);
            self.kms_events.extend(ev);
        }
    }

    fn close_epoch(&mut self) {
        for (c, a) in std::mem::take(&mut self.active) {
            if let Some(Authenticator::Preshared(link)) = a.auth {
                self.pools.insert(c.clone(), link);
            }
            if a.process.halted() && !self.summary.halted_connections.contains(&c.to_string()) {
                self.summary.halted_connections.push(c.to_string());
            }
            self.previous.insert(c, a.process);
        }
    }

    fn open_epoch(&mut self, epoch: u64, q: &mut EventLoop<Event>) {
        let cfg = self.config;
        let requeue_s = cfg.queue.requeue_interval_s;
        let start_s = epoch as f64 * requeue_s;
        let halted: Vec<ConnectionId> = self
            .previous
            .iter()
            .filter(|(_, p)| p.halted())
            .map(|(c, _)| c.clone())
            .collect();
        let candidates: BTreeMap<ConnectionId, Route> = self
            .feasible
            .iter()
            .filter(|(c, _)| !halted.contains(c))
            // A full store cannot take more key; pairing it would only block
            // switch ports.
            .filter(|(c, _)| self.kms.store(c).is_some_and(|s| !s.is_full()))
            .map(|(c, r)| (c.clone(), r.clone()))
            .collect();
        let chosen: Vec<ConnectionId> = if self.pin_all {
            candidates.keys().cloned().collect()
        } else {
            select_pairings(
                &candidates,
                self.kms.stores(),
                &self.topology,
                &cfg.queue,
                epoch,
            )
            .active
            .into_iter()
            .map(|(c, _)| c)
            .collect()
        };
        let round_s = cfg.pipeline.round_s;
        let rounds = cfg.rounds_per_epoch();
        let params = cfg.pipeline_params();
        for c in chosen {
            let key = c.to_string();
            let link = &self.links[&c];
            let profile = cfg.profile(&c, link.loss_db);
            let y = *self.yields.entry(c.clone()).or_insert_with(|| {
                YieldModel::calibrate(
                    &profile,
                    link.loss_db,
                    &params,
                    stream_u64(cfg.seed, "yield", &key, 0),
                )
            });
            let mut process = PairingProcess::new(
                &link.route,
                link.loss_db,
                profile,
                params.clone(),
                y,
                stream_u64(cfg.seed, "pairing", &key, epoch),
            );
            if let Some(prev) = self.previous.get(&c) {
                process.resume_from(prev);
            }
            let auth = self.authenticator(&c, epoch, start_s as u64);
            for index in 0..rounds {
                let end_s = start_s + (index + 1) as f64 * round_s;
                if end_s > cfg.duration_s + 1e-9 {
                    break;
                }
                q.schedule(
                    to_us(end_s),
                    Event::Round {
                        connection: c.clone(),
                        epoch,
                        index,
                    },
                );
            }
            self.active.insert(c, ActivePairing { process, auth });
        }
        let next = start_s + requeue_s;
        if next < cfg.duration_s - 1e-9 {
            q.schedule(to_us(next), Event::Requeue(epoch + 1));
        }
    }

    fn run_round(&mut self, c: &ConnectionId, epoch: u64, index: u64) {
        let cfg = self.config;
        let t_start =
            epoch as f64 * cfg.queue.requeue_interval_s + index as f64 * cfg.pipeline.round_s;
        let Some(a) = self.active.get_mut(c) else {
            return;
        };
        if a.process.halted() {
            return;
        }
        let record = match a.auth.as_mut() {
            Some(auth) => a.process.run_round(t_start, auth).record,
            None => LogRecord {
                timestamp_s: t_start,
                connection: c.clone(),
                route: self.links[c].route.to_string(),
                qber: 0.0,
                key_bits_out: 0,
                leaked_bits: 0,
                action: RoundAction::AuthFailed,
                auth_mode: cfg.auth_mode,
            },
        };
        let bits = self.credit_bits.entry(c.clone()).or_insert(0);
        *bits += record.key_bits_out;
        let bytes = *bits / 8;
        *bits %= 8;
        let ev = self.kms.credit(c, bytes);
        self.kms_events.extend(ev);
        self.summary.rounds += 1;
        self.summary.key_bits += record.key_bits_out;
        *self
            .summary
            .actions
            .entry(record.action.as_str().to_string())
            .or_insert(0) += 1;
        self.records.push(record);
    }

    fn run(mut self) -> Result<Experiment, SimError> {
        let mut q = EventLoop::new();
        if self.config.duration_s > 0.0 {
            q.schedule(0, Event::Requeue(0));
        }
        while let Some((at, e)) = q.pop() {
            self.advance(at);
            match e {
                Event::Requeue(epoch) => {
                    self.close_epoch();
                    self.summary.epochs += 1;
                    self.open_epoch(epoch, &mut q);
                }
                Event::Round {
                    connection,
                    epoch,
                    index,
                } => self.run_round(&connection, epoch, index),
            }
        }
        self.advance(to_us(self.config.duration_s));
        self.close_epoch();
        self.finish()
    }

    fn finish(mut self) -> Result<Experiment, SimError> {
        let cfg = self.config;
        self.records.sort_by(|a, b| {
            a.timestamp_s
                .total_cmp(&b.timestamp_s)
                .then_with(|| a.connection.cmp(&b.connection))
        });
        for s in self.kms.stores().values() {
            self.summary.credited_bytes += s.credited_bytes();
            self.summary.overflow_bytes += s.overflow_bytes();
            self.summary.unserved_bytes += s.unserved_bytes();
        }
        let log = render_log(&self.records);
        // Reports are built from the log text, exactly as `report build` does.
        let parsed = parse_log(&log).map_err(|e| SimError::Internal(e.to_string()))?;
        let opts = report_options(cfg);
        let rows = build_report(&parsed, &self.topology, &opts)
            .map_err(|e| SimError::Internal(e.to_string()))?;
        let days = (cfg.duration_s / 86_400.0).ceil() as usize;
        let daily = daily_key_rates(&parsed, &opts, days);
        let mut kms_events = String::new();
        for e in &self.kms_events {
            let kind = match e.kind {
                KmsEventKind::StoreEmpty => "store-empty",
                KmsEventKind::StoreFull => "store-full",
            };
            let _ = writeln!(
                kms_events,
                "{:.6} {} {}",
                e.at_us as f64 / US,
                e.connection,
                kind
            );
        }
        let summary_text = self.summary.render();
        Ok(Experiment {
            records: parsed,
            log,
            report_csv: render_report_csv(&rows),
            daily_csv: render_daily_csv(&daily),
            kms_events,
            summary: self.summary,
            summary_text,
            inputs: vec![
                ("config.toml".into(), cfg.canonical()),
                ("topology.topo".into(), cfg.topology_source().to_string()),
            ],
        })
    }
}

pub fn report_options(cfg: &SimConfig) -> ReportOptions {
    ReportOptions {
        epoch_s: cfg.queue.requeue_interval_s,
        round_s: cfg.pipeline.round_s,
        qber_threshold: cfg.qber.threshold,
        sigma: cfg.report.sigma,
    }
}

/// Runs the configured experiment in memory.
pub fn run_experiment(config: &SimConfig) -> Result<Experiment, SimError> {
    config.validate()?;
    Runner::new(config)?.run()
}

/// As [`run_experiment`], but every configured connection pairs in every
/// epoch regardless of switch conflicts. Meant for single-connection runs.
pub fn run_pinned(config: &SimConfig) -> Result<Experiment, SimError> {
    config.validate()?;
    let mut r = Runner::new(config)?;
    r.pin_all = true;
    r.run()
}
