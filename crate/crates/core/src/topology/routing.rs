use std::cmp::Ordering;
use std::collections::BTreeSet;

use super::{ConnectionId, NodeId, NodeKind, Route, Topology, TopologyError};

/// Insertion loss charged for every switch a path passes through.
pub const SWITCH_INSERTION_LOSS_DB: f64 = 1.5;

const LOSS_TIE_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathLoss {
    pub fiber_db: f64,
    pub switch_db: f64,
    pub total_db: f64,
}

impl PathLoss {
    fn new(fiber_db: f64, switches: usize) -> Self {
        let switch_db = SWITCH_INSERTION_LOSS_DB * switches as f64;
        Self {
            fiber_db,
            switch_db,
            total_db: fiber_db + switch_db,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeasibilityPolicy {
    pub max_loss_db: f64,
    pub max_switches_per_path: usize,
}

impl Default for FeasibilityPolicy {
    fn default() -> Self {
        Self {
            max_loss_db: 13.8,
            max_switches_per_path: 2,
        }
    }
}

impl FeasibilityPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.max_loss_db > 0.0) {
            return Err(format!(
                "max_loss_db must be positive, got {}",
                self.max_loss_db
            ));
        }
        if self.max_switches_per_path < 1 {
            return Err("max_switches_per_path must be at least 1".into());
        }
        Ok(())
    }

    fn admits(&self, route: &Route, loss: &PathLoss) -> bool {
        route.switch_count() <= self.max_switches_per_path && loss.total_db <= self.max_loss_db
    }
}

pub fn path_loss(topology: &Topology, route: &Route) -> Result<PathLoss, TopologyError> {
    let mut fiber = 0.0;
    for w in route.hops().windows(2) {
        let seg = topology
            .segment(&w[0], &w[1])
            .ok_or_else(|| TopologyError::MissingSegment(w[0].to_string(), w[1].to_string()))?;
        fiber += seg.loss_db;
    }
    let switches = route
        .interior()
        .iter()
        .filter(|h| topology.kind(h) == Some(NodeKind::Switch))
        .count();
    Ok(PathLoss::new(fiber, switches))
}

/// Every simple path from `tx` to `rx` whose interior is switches only and
/// has at most `max_switches` of them.
fn enumerate_routes(
    topology: &Topology,
    tx: &NodeId,
    rx: &NodeId,
    max_switches: usize,
) -> Vec<(Route, PathLoss)> {
    fn walk(
        topology: &Topology,
        rx: &NodeId,
        max_switches: usize,
        path: &mut Vec<NodeId>,
        fiber: f64,
        out: &mut Vec<(Route, PathLoss)>,
    ) {
        let here = path.last().expect("non-empty path").clone();
        let neighbors: Vec<NodeId> = topology.neighbors(&here).cloned().collect();
        for next in neighbors {
            if path.contains(&next) {
                continue;
            }
            let seg = topology
                .segment(&here, &next)
                .expect("neighbor has a segment");
            let fiber = fiber + seg.loss_db;
            if &next == rx {
                path.push(next);
                let switches = path.len() - 2;
                out.push((Route::new(path.clone()), PathLoss::new(fiber, switches)));
                path.pop();
            } else if topology.kind(&next) == Some(NodeKind::Switch)
                && path.len() - 1 < max_switches
            {
                path.push(next);
                walk(topology, rx, max_switches, path, fiber, out);
                path.pop();
            }
        }
    }

    let mut out = Vec::new();
    if tx == rx || topology.node(tx).is_none() || topology.node(rx).is_none() {
        return out;
    }
    let mut path = vec![tx.clone()];
    walk(topology, rx, max_switches, &mut path, 0.0, &mut out);
    out
}

fn route_order(a: &(Route, PathLoss), b: &(Route, PathLoss)) -> Ordering {
    let (ra, la) = a;
    let (rb, lb) = b;
    let loss = if (la.total_db - lb.total_db).abs() <= LOSS_TIE_EPS {
        Ordering::Equal
    } else {
        la.total_db.total_cmp(&lb.total_db)
    };
    loss.then_with(|| ra.hops().len().cmp(&rb.hops().len()))
        .then_with(|| {
            let na = ra.hops().iter().map(NodeId::as_str);
            let nb = rb.hops().iter().map(NodeId::as_str);
            na.cmp(nb)
        })
}

fn best_route(
    topology: &Topology,
    tx: &NodeId,
    rx: &NodeId,
    max_switches: usize,
) -> Option<(Route, PathLoss)> {
    enumerate_routes(topology, tx, rx, max_switches)
        .into_iter()
        .min_by(route_order)
}

/// Lowest-loss route that satisfies both policy limits. Ties go to fewer
/// hops, then to the lexicographically smaller hop list.
pub fn min_loss_route(
    topology: &Topology,
    transmitter: &NodeId,
    receiver: &NodeId,
    policy: &FeasibilityPolicy,
) -> Option<Route> {
    enumerate_routes(
        topology,
        transmitter,
        receiver,
        policy.max_switches_per_path,
    )
    .into_iter()
    .filter(|(r, l)| policy.admits(r, l))
    .min_by(route_order)
    .map(|(r, _)| r)
}

/// All routes through the fewest switches, in tie-break order. Empty when
/// the receiver is unreachable.
pub fn min_switch_routes(
    topology: &Topology,
    transmitter: &NodeId,
    receiver: &NodeId,
) -> Vec<Route> {
    let switch_total = topology.nodes_of_kind(NodeKind::Switch).len();
    for limit in 0..=switch_total {
        let mut found: Vec<(Route, PathLoss)> =
            enumerate_routes(topology, transmitter, receiver, limit)
                .into_iter()
                .filter(|(r, _)| r.switch_count() == limit)
                .collect();
        if !found.is_empty() {
            found.sort_by(|a, b| {
                a.0.hops()
                    .iter()
                    .map(NodeId::as_str)
                    .cmp(b.0.hops().iter().map(NodeId::as_str))
            });
            return found.into_iter().map(|(r, _)| r).collect();
        }
    }
    Vec::new()
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConnectionStatus {
    Feasible {
        route: Route,
        loss: PathLoss,
    },
    /// A route exists within the switch limit, but the best one is too lossy.
    ExcludedByLoss {
        route: Route,
        loss: PathLoss,
    },
    /// No route exists within the switch limit.
    ExcludedBySwitches,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub connection: ConnectionId,
    pub status: ConnectionStatus,
}

impl Classification {
    pub fn is_feasible(&self) -> bool {
        matches!(self.status, ConnectionStatus::Feasible { .. })
    }
}

/// Classifies every transmitter x receiver pair. A declared route is used
/// when the policy admits it; otherwise the best admissible route found by
/// search.
pub fn classify_connections(
    topology: &Topology,
    policy: &FeasibilityPolicy,
) -> Vec<Classification> {
    let mut out = Vec::new();
    for tx in topology.transmitters() {
        for rx in topology.receivers() {
            let connection = ConnectionId::new(tx.clone(), rx.clone());
            let declared = topology
                .declared_route(&connection)
                .and_then(|r| path_loss(topology, r).ok().map(|l| (r.clone(), l)))
                .filter(|(r, l)| policy.admits(r, l));
            let status = if let Some((route, loss)) = declared {
                ConnectionStatus::Feasible { route, loss }
            } else if let Some(route) = min_loss_route(topology, &tx, &rx, policy) {
                let loss = path_loss(topology, &route).expect("searched route is valid");
                ConnectionStatus::Feasible { route, loss }
            } else {
                match best_route(topology, &tx, &rx, policy.max_switches_per_path) {
                    Some((route, loss)) => ConnectionStatus::ExcludedByLoss { route, loss },
                    None => ConnectionStatus::ExcludedBySwitches,
                }
            };
            out.push(Classification { connection, status });
        }
    }
    out
}

pub fn feasible_connections(
    topology: &Topology,
    policy: &FeasibilityPolicy,
) -> BTreeSet<ConnectionId> {
    classify_connections(topology, policy)
        .into_iter()
        .filter(Classification::is_feasible)
        .map(|c| c.connection)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diamond() -> Topology {
        // A -> X1 -> B and A -> X2 -> B with equal loss.
        Topology::builder()
            .node("A", NodeKind::Transmitter)
            .node("B", NodeKind::Receiver)
            .node("X1", NodeKind::Switch)
            .node("X2", NodeKind::Switch)
            .segment("A", "X1", 1.0, None)
            .segment("X1", "B", 1.0, None)
            .segment("A", "X2", 0.5, None)
            .segment("X2", "B", 1.5, None)
            .build()
            .unwrap()
    }

    #[test]
    fn direct_fiber_is_a_single_segment_route() {
        let t = Topology::builder()
            .node("A", NodeKind::Transmitter)
            .node("B", NodeKind::Receiver)
            .segment("A", "B", 0.0, None)
            .build()
            .unwrap();
        let r =
            min_loss_route(&t, &"A".into(), &"B".into(), &FeasibilityPolicy::default()).unwrap();
        assert_eq!(r.hops().len(), 2);
        let l = path_loss(&t, &r).unwrap();
        assert_eq!(l.total_db, 0.0);
    }

    #[test]
    fn equal_loss_ties_break_lexicographically() {
        let r = min_loss_route(
            &diamond(),
            &"A".into(),
            &"B".into(),
            &FeasibilityPolicy::default(),
        )
        .unwrap();
        assert_eq!(r.to_string(), "A->X1->B");
    }

    #[test]
    fn zero_loss_budget_excludes_everything() {
        let p = FeasibilityPolicy {
            max_loss_db: 0.0,
            ..Default::default()
        };
        assert!(feasible_connections(&diamond(), &p).is_empty());
        assert!(p.validate().is_err());
    }

    #[test]
    fn receivers_are_never_used_as_transit() {
        let t = Topology::builder()
            .node("A", NodeKind::Transmitter)
            .node("B", NodeKind::Receiver)
            .node("C", NodeKind::Receiver)
            .segment("A", "C", 0.1, None)
            .segment("C", "B", 0.1, None)
            .build()
            .unwrap();
        assert!(
            min_loss_route(&t, &"A".into(), &"B".into(), &FeasibilityPolicy::default()).is_none()
        );
        assert!(min_switch_routes(&t, &"A".into(), &"B".into()).is_empty());
    }
}
