//! Key management: per-connection key stores, conflict-free pairing
//! selection ordered by buffered key, continuous-flow accounting and the
//! drain scenario.

mod drain;
mod schedule;
mod state;
mod store;

pub use drain::{
    field_rates, run_drain_scenario, run_drain_scenario_on, run_rotation, DrainConfig, DrainEpoch,
    DrainError, DrainReport,
};
pub use schedule::{
    feasible_routes, queue_order, schedule_conflicts, select_pairings, select_with,
    PairingSchedule, QueuePolicy, ResourceUse,
};
pub use state::{Consumer, KmsEvent, KmsEventKind, KmsState, MICROS_PER_SECOND};
pub use store::{KeyStore, DEFAULT_CAPACITY_BYTES};
