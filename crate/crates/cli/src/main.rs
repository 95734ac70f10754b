use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use metroqkd_core::crypto::{dump_transcript, Direction, Message};
use metroqkd_core::jinan;
use metroqkd_core::kms::{
    feasible_routes, field_rates, run_drain_scenario, run_rotation, DrainConfig, QueuePolicy,
};
use metroqkd_core::pipeline::parse_log;
use metroqkd_core::sim::{
    compare_auth_modes, handshake_timing, report_options, run_experiment, AuthSection, SimConfig,
};
use metroqkd_core::stats::{
    build_report, daily_key_rates, days_in_log, render_daily_csv, render_report_csv, ReportOptions,
};
use metroqkd_core::topology::{
    classify_connections, derive_segment_losses, parse_loss_matrix, render_topology, ConnectionId,
    ConnectionStatus, FeasibilityPolicy, Topology,
};

#[derive(Parser)]
#[command(
    name = "metroqkd",
    version,
    about = "Switched metropolitan QKD network simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Topology inspection and segment-loss fitting.
    #[command(subcommand)]
    Topo(TopoCmd),
    /// Run a simulation and write its artifacts.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Run directory. Defaults to `runs/seed-<seed>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build reports from a round log.
    #[command(subcommand)]
    Report(ReportCmd),
    /// Same-seed comparison of PQC and pre-shared tag authentication.
    CompareAuth {
        #[arg(long)]
        connection: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's duration.
        #[arg(long)]
        duration_s: Option<f64>,
    },
    /// One timed handshake with its transcript.
    HandshakeDemo {
        #[arg(long, default_value_t = 10.0)]
        delay_ms: f64,
        #[arg(long, default_value_t = 100_000)]
        bandwidth_bps: u64,
        /// Ignore `--bandwidth-bps` and serialize instantly.
        #[arg(long)]
        unlimited_bandwidth: bool,
        #[arg(long, default_value_t = 10.0)]
        op_ms: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write the binary transcript dump here.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Key-management schedules and the drain scenario.
    #[command(subcommand)]
    Kms(KmsCmd),
}

#[derive(Args)]
struct TopoArgs {
    /// Topology file. Defaults to the shipped network.
    #[arg(long)]
    topology: Option<PathBuf>,
}

#[derive(Args)]
struct PolicyArgs {
    #[arg(long, default_value_t = FeasibilityPolicy::default().max_loss_db)]
    max_loss_db: f64,
    #[arg(long, default_value_t = FeasibilityPolicy::default().max_switches_per_path)]
    max_switches: usize,
}

impl PolicyArgs {
    fn policy(&self) -> Result<FeasibilityPolicy> {
        let p = FeasibilityPolicy {
            max_loss_db: self.max_loss_db,
            max_switches_per_path: self.max_switches,
        };
        p.validate().map_err(anyhow::Error::msg)?;
        Ok(p)
    }
}

#[derive(Subcommand)]
enum TopoCmd {
    /// Modelled loss of every transmitter x receiver pair in the loss-matrix grammar.
    LossMatrix {
        #[command(flatten)]
        topo: TopoArgs,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Classify every pair as feasible, loss-excluded or switch-excluded.
    Feasible {
        #[command(flatten)]
        topo: TopoArgs,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Fit segment losses to a measured matrix.
    DeriveSegments {
        #[command(flatten)]
        topo: TopoArgs,
        /// Measured matrix. Defaults to the shipped one.
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Write the topology with fitted losses here.
        #[arg(long)]
        write: Option<PathBuf>,
    },
}

#[derive(Args)]
struct LogArgs {
    #[arg(long)]
    log: PathBuf,
    /// Simulation config supplying topology and report options.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epoch_s: Option<f64>,
    #[arg(long)]
    round_s: Option<f64>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Per-connection summary CSV.
    Build {
        #[command(flatten)]
        log: LogArgs,
    },
    /// Per-day key-rate CSV.
    Daily {
        #[command(flatten)]
        log: LogArgs,
        /// Number of days. Defaults to the days the log spans.
        #[arg(long)]
        days: Option<usize>,
    },
}

#[derive(Subcommand)]
enum KmsCmd {
    /// Replay requeue epochs on the shipped network at field key rates.
    Schedule {
        #[arg(long, default_value_t = 10)]
        epochs: u64,
        #[arg(long, default_value_t = QueuePolicy::default().requeue_interval_s)]
        requeue_s: f64,
        #[arg(long, default_value_t = QueuePolicy::default().switch_ports)]
        switch_ports: u32,
        /// Starting buffer of every store.
        #[arg(long, default_value_t = 0)]
        initial_bytes: u64,
    },
    /// One connection drained by a consumer faster than it generates.
    DrainScenario {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_topology(args: &TopoArgs) -> Result<Topology> {
    match &args.topology {
        Some(p) => Topology::parse(&read(p)?).with_context(|| format!("parsing {}", p.display())),
        None => Ok(jinan::topology()),
    }
}

fn load_config(path: &Path) -> Result<SimConfig> {
    SimConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn loss_matrix(topology: &Topology, policy: &FeasibilityPolicy) -> String {
    let classes = classify_connections(topology, policy);
    let txs = topology.transmitters();
    let mut s = String::from("receiver");
    for tx in &txs {
        let _ = write!(s, " {tx}");
    }
    s.push('\n');
    for rx in topology.receivers() {
        let _ = write!(s, "{rx}");
        for tx in &txs {
            let conn = ConnectionId::new(tx.clone(), rx.clone());
            let cell =
                classes
                    .iter()
                    .find(|c| c.connection == conn)
                    .and_then(|c| match &c.status {
                        ConnectionStatus::Feasible { loss, .. }
                        | ConnectionStatus::ExcludedByLoss { loss, .. } => Some(loss.total_db),
                        ConnectionStatus::ExcludedBySwitches => None,
                    });
            match cell {
                Some(db) => {
                    let _ = write!(s, " {db:.2}");
                }
                None => s.push_str(" -"),
            }
        }
        s.push('\n');
    }
    s
}

fn feasible_table(topology: &Topology, policy: &FeasibilityPolicy) -> String {
    let classes = classify_connections(topology, policy);
    let mut s = String::new();
    let (mut ok, mut by_loss, mut by_switch) = (0, 0, 0);
    for c in &classes {
        match &c.status {
            ConnectionStatus::Feasible { route, loss } => {
                ok += 1;
                let _ = writeln!(s, "{} feasible {route} {:.2}", c.connection, loss.total_db);
            }
            ConnectionStatus::ExcludedByLoss { route, loss } => {
                by_loss += 1;
                let _ = writeln!(
                    s,
                    "{} excluded_loss {route} {:.2}",
                    c.connection, loss.total_db
                );
            }
            ConnectionStatus::ExcludedBySwitches => {
                by_switch += 1;
                let _ = writeln!(s, "{} excluded_switches - -", c.connection);
            }
        }
    }
    let _ = writeln!(
        s,
        "total {} feasible {ok} excluded_loss {by_loss} excluded_switches {by_switch}",
        classes.len()
    );
    s
}

fn derive_segments(
    topo: &TopoArgs,
    matrix: Option<&Path>,
    write_to: Option<&Path>,
) -> Result<String> {
    let topology = load_topology(topo)?;
    let matrix = match matrix {
        Some(p) => {
            parse_loss_matrix(&read(p)?).with_context(|| format!("parsing {}", p.display()))?
        }
        None => jinan::loss_matrix(),
    };
    let fit = derive_segment_losses(&topology, &matrix)?;
    let mut s = String::new();
    let _ = writeln!(s, "equations {}", fit.routes.len());
    let _ = writeln!(s, "unknowns {} rank {}", fit.unknowns, fit.rank);
    if fit.rank_deficient() {
        let _ = writeln!(s, "warning: rank deficient, losses are not unique");
    }
    let _ = writeln!(s, "nonnegative {}", fit.nonnegative.is_some());
    for (k, db) in fit.preferred() {
        let (a, b) = k.endpoints();
        let _ = writeln!(s, "segment {a}-{b} {db:.3}");
    }
    let _ = writeln!(s, "max_residual_db {:.6}", fit.max_residual_db());
    if let Some(p) = write_to {
        let fitted = fit.apply(&topology);
        fs::write(p, render_topology(&fitted))
            .with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(s)
}

fn log_inputs(
    args: &LogArgs,
) -> Result<(
    Vec<metroqkd_core::pipeline::LogRecord>,
    Topology,
    ReportOptions,
)> {
    let records =
        parse_log(&read(&args.log)?).with_context(|| format!("parsing {}", args.log.display()))?;
    let (topology, mut opts) = match &args.config {
        Some(p) => {
            let cfg = load_config(p)?;
            (cfg.topology()?, report_options(&cfg))
        }
        None => (jinan::topology(), ReportOptions::default()),
    };
    if let Some(e) = args.epoch_s {
        opts.epoch_s = e;
    }
    if let Some(r) = args.round_s {
        opts.round_s = r;
    }
    opts.validate().map_err(anyhow::Error::msg)?;
    Ok((records, topology, opts))
}

fn handshake_demo(auth: &AuthSection, seed: u64, transcript: Option<&Path>) -> Result<String> {
    let t = handshake_timing(auth, seed);
    let mut s = String::from("transcript (initiator view)\n");
    for (i, e) in t.transcript.iter().enumerate() {
        let dir = match e.direction {
            Direction::Sent => "sent",
            Direction::Received => "recv",
        };
        let what = Message::decode(&e.frame)
            .map_or_else(|e| format!("undecodable: {e}"), |m| format!("{m:?}"));
        let _ = writeln!(
            s,
            "{i} {dir} type=0x{:02x} {}B {what}",
            e.frame[0],
            e.frame.len()
        );
    }
    s.push_str(&t.render());
    let _ = writeln!(
        s,
        "within_100ms {}",
        t.within(std::time::Duration::from_millis(100))
    );
    if let Some(p) = transcript {
        fs::write(p, dump_transcript(&t.transcript))
            .with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(s)
}

fn kms_schedule(epochs: u64, policy: QueuePolicy, initial_bytes: u64) -> Result<String> {
    policy.validate().map_err(anyhow::Error::msg)?;
    let topology = jinan::topology();
    let feasible = feasible_routes(&topology, &FeasibilityPolicy::default());
    let mut s = String::new();
    for p in run_rotation(
        &topology,
        &feasible,
        &policy,
        &field_rates(),
        initial_bytes,
        epochs,
    ) {
        let ids: Vec<String> = p.active.iter().map(|(c, _)| c.to_string()).collect();
        let _ = writeln!(
            s,
            "epoch {} start_s {} active {}",
            p.epoch,
            p.start_s,
            ids.join(" ")
        );
    }
    Ok(s)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Topo(TopoCmd::LossMatrix { topo, policy }) => emit(
            &loss_matrix(&load_topology(&topo)?, &policy.policy()?),
            None,
        ),
        Command::Topo(TopoCmd::Feasible { topo, policy }) => emit(
            &feasible_table(&load_topology(&topo)?, &policy.policy()?),
            None,
        ),
        Command::Topo(TopoCmd::DeriveSegments {
            topo,
            matrix,
            write,
        }) => emit(
            &derive_segments(&topo, matrix.as_deref(), write.as_deref())?,
            None,
        ),
        Command::Simulate { config, out } => {
            let cfg = load_config(&config)?;
            let dir = out.unwrap_or_else(|| PathBuf::from(format!("runs/seed-{}", cfg.seed)));
            let e = run_experiment(&cfg)?;
            e.write_to(&dir)
                .with_context(|| format!("writing {}", dir.display()))?;
            print!("{}", e.summary_text);
            println!("run_dir {}", dir.display());
            Ok(())
        }
        Command::Report(ReportCmd::Build { log }) => {
            let (records, topology, opts) = log_inputs(&log)?;
            let rows = build_report(&records, &topology, &opts)?;
            emit(&render_report_csv(&rows), log.out.as_deref())
        }
        Command::Report(ReportCmd::Daily { log, days }) => {
            let (records, _, opts) = log_inputs(&log)?;
            let days = days.unwrap_or_else(|| days_in_log(&records));
            emit(
                &render_daily_csv(&daily_key_rates(&records, &opts, days)),
                log.out.as_deref(),
            )
        }
        Command::CompareAuth {
            connection,
            config,
            duration_s,
        } => {
            let mut cfg = match config {
                Some(p) => load_config(&p)?,
                None => SimConfig::new(7, 3600.0),
            };
            if let Some(d) = duration_s {
                cfg.duration_s = d;
            }
            let r = compare_auth_modes(&cfg, &connection)?;
            print!("{}", r.render());
            Ok(())
        }
        Command::HandshakeDemo {
            delay_ms,
            bandwidth_bps,
            unlimited_bandwidth,
            op_ms,
            seed,
            transcript,
        } => {
            if !(delay_ms >= 0.0 && op_ms >= 0.0) {
                bail!("delay and op cost must be non-negative");
            }
            if !unlimited_bandwidth && bandwidth_bps == 0 {
                bail!("bandwidth must be positive; use --unlimited-bandwidth for none");
            }
            let auth = AuthSection {
                one_way_delay_ms: delay_ms,
                bandwidth_bps: (!unlimited_bandwidth).then_some(bandwidth_bps),
                op_ms,
                ..AuthSection::default()
            };
            emit(&handshake_demo(&auth, seed, transcript.as_deref())?, None)
        }
        Command::Kms(KmsCmd::Schedule {
            epochs,
            requeue_s,
            switch_ports,
            initial_bytes,
        }) => {
            let policy = QueuePolicy {
                requeue_interval_s: requeue_s,
                switch_ports,
            };
            emit(&kms_schedule(epochs, policy, initial_bytes)?, None)
        }
        Command::Kms(KmsCmd::DrainScenario { config }) => {
            let cfg = match config {
                Some(p) => DrainConfig::parse(&read(&p)?)?,
                None => DrainConfig::field_scenario(),
            };
            emit(&run_drain_scenario(&cfg)?.render(), None)
        }
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
