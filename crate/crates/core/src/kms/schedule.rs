//! Queue-by-key-amount pairing selection under optical-switch exclusivity.

use std::collections::{BTreeMap, BTreeSet};

use super::store::KeyStore;
use crate::topology::{
    classify_connections, ConnectionId, ConnectionStatus, FeasibilityPolicy, NodeId, NodeKind,
    Route, Topology,
};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueuePolicy {
    pub requeue_interval_s: f64,
    /// Light paths one switch can carry at once.
    pub switch_ports: u32,
}

impl Default for QueuePolicy {
    fn default() -> Self {
        Self {
            requeue_interval_s: 1800.0,
            switch_ports: 1,
        }
    }
}

impl QueuePolicy {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.requeue_interval_s > 0.0 && self.requeue_interval_s.is_finite()) {
            return Err(format!(
                "requeue interval must be positive, got {}",
                self.requeue_interval_s
            ));
        }
        if self.switch_ports == 0 {
            return Err("switch_ports must be at least 1".into());
        }
        Ok(())
    }
}

/// Feasible connections and the route each one uses.
pub fn feasible_routes(
    topology: &Topology,
    policy: &FeasibilityPolicy,
) -> BTreeMap<ConnectionId, Route> {
    classify_connections(topology, policy)
        .into_iter()
        .filter_map(|c| match c.status {
            ConnectionStatus::Feasible { route, .. } => Some((c.connection, route)),
            _ => None,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairingSchedule {
    pub epoch: u64,
    pub start_s: f64,
    pub length_s: f64,
    /// Admitted connections in admission order.
    pub active: Vec<(ConnectionId, Route)>,
}

impl PairingSchedule {
    pub fn contains(&self, connection: &ConnectionId) -> bool {
        self.active.iter().any(|(c, _)| c == connection)
    }

    pub fn connections(&self) -> BTreeSet<ConnectionId> {
        self.active.iter().map(|(c, _)| c.clone()).collect()
    }
}

fn buffered(stores: &BTreeMap<ConnectionId, KeyStore>, c: &ConnectionId) -> u64 {
    stores.get(c).map_or(0, KeyStore::buffered_bytes)
}

/// Connections in queue order: ascending buffered bytes, ties by id.
pub fn queue_order(
    feasible: &BTreeMap<ConnectionId, Route>,
    stores: &BTreeMap<ConnectionId, KeyStore>,
) -> Vec<ConnectionId> {
    let mut order: Vec<ConnectionId> = feasible.keys().cloned().collect();
    order.sort_by(|a, b| {
        buffered(stores, a)
            .cmp(&buffered(stores, b))
            .then_with(|| a.cmp(b))
    });
    order
}

/// Tracks which endpoints and switch ports are taken.
#[derive(Clone, Debug, Default)]
pub struct ResourceUse {
    endpoints: BTreeSet<NodeId>,
    switch_paths: BTreeMap<NodeId, u32>,
}

impl ResourceUse {
    pub fn fits(&self, topology: &Topology, route: &Route, ports: u32) -> bool {
        if self.endpoints.contains(route.transmitter()) || self.endpoints.contains(route.receiver())
        {
            return false;
        }
        route.interior().iter().all(|n| {
            topology.kind(n) != Some(NodeKind::Switch)
                || self.switch_paths.get(n).copied().unwrap_or(0) < ports
        })
    }

    pub fn take(&mut self, topology: &Topology, route: &Route) {
        self.endpoints.insert(route.transmitter().clone());
        self.endpoints.insert(route.receiver().clone());
        for n in route.interior() {
            if topology.kind(n) == Some(NodeKind::Switch) {
                *self.switch_paths.entry(n.clone()).or_insert(0) += 1;
            }
        }
    }
}

/// Greedy pass in queue order admitting each connection whose transmitter,
/// receiver and switches are still free.
pub fn select_pairings(
    feasible: &BTreeMap<ConnectionId, Route>,
    stores: &BTreeMap<ConnectionId, KeyStore>,
    topology: &Topology,
    policy: &QueuePolicy,
    epoch: u64,
) -> PairingSchedule {
    select_with(feasible, stores, topology, policy, epoch, &[])
}

/// As [`select_pairings`], admitting `pinned` connections first.
pub fn select_with(
    feasible: &BTreeMap<ConnectionId, Route>,
    stores: &BTreeMap<ConnectionId, KeyStore>,
    topology: &Topology,
    policy: &QueuePolicy,
    epoch: u64,
    pinned: &[ConnectionId],
) -> PairingSchedule {
    let mut used = ResourceUse::default();
    let mut active = Vec::new();
    let order = pinned
        .iter()
        .filter(|c| feasible.contains_key(*c))
        .cloned()
        .chain(queue_order(feasible, stores));
    for c in order {
        if active.iter().any(|(a, _): &(ConnectionId, Route)| *a == c) {
            continue;
        }
        let route = &feasible[&c];
        if used.fits(topology, route, policy.switch_ports) {
            used.take(topology, route);
            active.push((c, route.clone()));
        }
    }
    PairingSchedule {
        epoch,
        start_s: epoch as f64 * policy.requeue_interval_s,
        length_s: policy.requeue_interval_s,
        active,
    }
}

/// Nodes used by more than one active route (or switches over their
/// port count), by direct scan.
pub fn schedule_conflicts(
    schedule: &PairingSchedule,
    topology: &Topology,
    ports: u32,
) -> Vec<NodeId> {
    let mut count: BTreeMap<&NodeId, u32> = BTreeMap::new();
    for (_, r) in &schedule.active {
        for n in r.hops() {
            *count.entry(n).or_insert(0) += 1;
        }
    }
    count
        .into_iter()
        .filter(|(n, k)| {
            let limit = if topology.kind(n) == Some(NodeKind::Switch) {
                ports
            } else {
                1
            };
            *k > limit
        })
        .map(|(n, _)| n.clone())
        .collect()
}
