//! Switched metro network: nodes, fiber segments, declared routes, path
//! attenuation and connection feasibility.

mod config;
mod fit;
mod routing;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

pub use config::{parse_loss_matrix, render_topology, LossMatrix};
pub use fit::{derive_segment_losses, SegmentFit, MAX_FIT_RESIDUAL_DB};
pub use routing::{
    classify_connections, feasible_connections, min_loss_route, min_switch_routes, path_loss,
    Classification, ConnectionStatus, FeasibilityPolicy, PathLoss, SWITCH_INSERTION_LOSS_DB,
};

/// Symbolic node name such as `U4` or `X1`.
///
/// Ordered naturally: alphabetic prefix first, then the numeric suffix, so
/// `U2 < U10`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn split_numeric(&self) -> (&str, Option<u64>) {
        let idx = self
            .0
            .find(|c: char| c.is_ascii_digit())
            .unwrap_or(self.0.len());
        let (prefix, digits) = self.0.split_at(idx);
        (prefix, digits.parse().ok())
    }
}

impl Ord for NodeId {
    fn cmp(&self, other: &Self) -> Ordering {
        let (pa, na) = self.split_numeric();
        let (pb, nb) = other.split_numeric();
        pa.cmp(pb)
            .then_with(|| match (na, nb) {
                (Some(a), Some(b)) => a.cmp(&b),
                _ => Ordering::Equal,
            })
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for NodeId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

/// A transmitter-to-receiver pairing, written `TX-RX`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConnectionId {
    pub transmitter: NodeId,
    pub receiver: NodeId,
}

impl ConnectionId {
    pub fn new(transmitter: impl Into<NodeId>, receiver: impl Into<NodeId>) -> Self {
        Self {
            transmitter: transmitter.into(),
            receiver: receiver.into(),
        }
    }
}

impl fmt::Display for ConnectionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.transmitter, self.receiver)
    }
}

impl fmt::Debug for ConnectionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for ConnectionId {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('-') {
            Some((tx, rx)) if !tx.is_empty() && !rx.is_empty() && !rx.contains('-') => {
                Ok(Self::new(tx, rx))
            }
            _ => Err(TopologyError::BadConnection(s.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Transmitter,
    Receiver,
    Switch,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Transmitter => "transmitter",
            NodeKind::Receiver => "receiver",
            NodeKind::Switch => "switch",
        }
    }
}

impl FromStr for NodeKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "transmitter" | "tx" => Ok(NodeKind::Transmitter),
            "receiver" | "rx" => Ok(NodeKind::Receiver),
            "switch" | "sw" => Ok(NodeKind::Switch),
            _ => Err(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
}

/// Unordered node pair; stored with the smaller id first.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SegmentKey(NodeId, NodeId);

impl SegmentKey {
    pub fn new(a: NodeId, b: NodeId) -> Self {
        if a <= b {
            Self(a, b)
        } else {
            Self(b, a)
        }
    }

    pub fn endpoints(&self) -> (&NodeId, &NodeId) {
        (&self.0, &self.1)
    }
}

impl fmt::Debug for SegmentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}~{}", self.0, self.1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FiberSegment {
    pub key: SegmentKey,
    pub loss_db: f64,
    pub length_km: Option<f64>,
}

/// Ordered hop list from transmitter to receiver.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Route {
    hops: Vec<NodeId>,
}

impl Route {
    /// Builds a route without validating it against a topology.
    pub fn new(hops: Vec<NodeId>) -> Self {
        assert!(hops.len() >= 2, "a route needs at least two hops");
        Self { hops }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let hops: Vec<NodeId> = s
            .split("->")
            .flat_map(|part| part.split('-'))
            .map(str::trim)
            .filter(|h| !h.is_empty())
            .map(NodeId::new)
            .collect();
        (hops.len() >= 2).then(|| Self::new(hops))
    }

    pub fn hops(&self) -> &[NodeId] {
        &self.hops
    }

    pub fn transmitter(&self) -> &NodeId {
        &self.hops[0]
    }

    pub fn receiver(&self) -> &NodeId {
        self.hops.last().expect("non-empty route")
    }

    pub fn interior(&self) -> &[NodeId] {
        &self.hops[1..self.hops.len() - 1]
    }

    pub fn switch_count(&self) -> usize {
        self.interior().len()
    }

    pub fn connection(&self) -> ConnectionId {
        ConnectionId::new(self.transmitter().clone(), self.receiver().clone())
    }

    pub fn segments(&self) -> impl Iterator<Item = SegmentKey> + '_ {
        self.hops
            .windows(2)
            .map(|w| SegmentKey::new(w[0].clone(), w[1].clone()))
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, h) in self.hops.iter().enumerate() {
            if i > 0 {
                f.write_str("->")?;
            }
            write!(f, "{h}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TopologyError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("duplicate node {0}")]
    DuplicateNode(String),
    #[error("duplicate segment {0}-{1}")]
    DuplicateSegment(String, String),
    #[error("no segment between {0} and {1}")]
    MissingSegment(String, String),
    #[error("route {route}: {reason}")]
    InvalidRoute { route: String, reason: String },
    #[error("bad connection id {0:?}, expected TX-RX")]
    BadConnection(String),
    #[error("least-squares fit inconsistent: residual {residual_db:.4} dB on {connection}")]
    InconsistentFit {
        connection: String,
        residual_db: f64,
    },
    #[error("no route for {0} in the route table or the switch graph")]
    NoRoute(String),
}

/// Validated network description. Read-only after construction.
#[derive(Clone, Debug, Default)]
pub struct Topology {
    nodes: Vec<Node>,
    index: HashMap<NodeId, usize>,
    segments: BTreeMap<SegmentKey, FiberSegment>,
    routes: BTreeMap<ConnectionId, Route>,
}

impl Topology {
    pub fn builder() -> TopologyBuilder {
        TopologyBuilder::default()
    }

    /// Parses the `[nodes]` / `[segments]` / `[routes]` text format.
    pub fn parse(text: &str) -> Result<Self, TopologyError> {
        config::parse_topology(text)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn kind(&self, id: &NodeId) -> Option<NodeKind> {
        self.node(id).map(|n| n.kind)
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = self
            .nodes
            .iter()
            .filter(|n| n.kind == kind)
            .map(|n| n.id.clone())
            .collect();
        ids.sort();
        ids
    }

    pub fn transmitters(&self) -> Vec<NodeId> {
        self.nodes_of_kind(NodeKind::Transmitter)
    }

    pub fn receivers(&self) -> Vec<NodeId> {
        self.nodes_of_kind(NodeKind::Receiver)
    }

    pub fn segments(&self) -> impl Iterator<Item = &FiberSegment> {
        self.segments.values()
    }

    pub fn segment(&self, a: &NodeId, b: &NodeId) -> Option<&FiberSegment> {
        self.segments.get(&SegmentKey::new(a.clone(), b.clone()))
    }

    pub fn neighbors<'a>(&'a self, id: &'a NodeId) -> impl Iterator<Item = &'a NodeId> + 'a {
        self.segments.keys().filter_map(move |k| {
            if &k.0 == id {
                Some(&k.1)
            } else if &k.1 == id {
                Some(&k.0)
            } else {
                None
            }
        })
    }

    /// Declared routes, keyed by connection.
    pub fn routes(&self) -> impl Iterator<Item = &Route> {
        self.routes.values()
    }

    pub fn route_count(&self) -> usize {
        self.routes.len()
    }

    pub fn declared_route(&self, connection: &ConnectionId) -> Option<&Route> {
        self.routes.get(connection)
    }

    /// Checks hop adjacency, node kinds and repetition.
    pub fn validate_route(&self, route: &Route) -> Result<(), TopologyError> {
        let invalid = |reason: String| TopologyError::InvalidRoute {
            route: route.to_string(),
            reason,
        };
        for hop in route.hops() {
            if self.node(hop).is_none() {
                return Err(TopologyError::UnknownNode(hop.to_string()));
            }
        }
        for (i, hop) in route.hops().iter().enumerate() {
            if route.hops()[..i].contains(hop) {
                return Err(invalid(format!("node {hop} repeated")));
            }
        }
        if let Some(hop) = route
            .interior()
            .iter()
            .find(|h| self.kind(h) != Some(NodeKind::Switch))
        {
            return Err(invalid(format!("interior hop {hop} is not a switch")));
        }
        for w in route.hops().windows(2) {
            if self.segment(&w[0], &w[1]).is_none() {
                return Err(TopologyError::MissingSegment(
                    w[0].to_string(),
                    w[1].to_string(),
                ));
            }
        }
        Ok(())
    }

    /// Copy with every segment loss replaced through `f`.
    pub fn map_losses(&self, mut f: impl FnMut(&SegmentKey, f64) -> f64) -> Self {
        let mut out = self.clone();
        for seg in out.segments.values_mut() {
            seg.loss_db = f(&seg.key, seg.loss_db);
        }
        out
    }

    /// Copy with node ids rewritten through `rename`.
    pub fn renamed(&self, rename: impl Fn(&NodeId) -> NodeId) -> Result<Self, TopologyError> {
        let mut b = Topology::builder();
        for n in &self.nodes {
            b = b.node(rename(&n.id), n.kind);
        }
        for s in self.segments.values() {
            let (x, y) = s.key.endpoints();
            b = b.segment(rename(x), rename(y), s.loss_db, s.length_km);
        }
        for r in self.routes.values() {
            b = b.route(Route::new(r.hops().iter().map(&rename).collect()));
        }
        b.build()
    }
}

/// Incremental construction with validation deferred to `build`.
#[derive(Default)]
pub struct TopologyBuilder {
    nodes: Vec<Node>,
    segments: Vec<FiberSegment>,
    routes: Vec<Route>,
}

impl TopologyBuilder {
    pub fn node(mut self, id: impl Into<NodeId>, kind: NodeKind) -> Self {
        self.nodes.push(Node {
            id: id.into(),
            kind,
        });
        self
    }

    pub fn segment(
        mut self,
        a: impl Into<NodeId>,
        b: impl Into<NodeId>,
        loss_db: f64,
        length_km: Option<f64>,
    ) -> Self {
        self.segments.push(FiberSegment {
            key: SegmentKey::new(a.into(), b.into()),
            loss_db,
            length_km,
        });
        self
    }

    pub fn route(mut self, route: Route) -> Self {
        self.routes.push(route);
        self
    }

    pub fn build(self) -> Result<Topology, TopologyError> {
        let mut topo = Topology::default();
        for node in self.nodes {
            if topo.index.contains_key(&node.id) {
                return Err(TopologyError::DuplicateNode(node.id.to_string()));
            }
            topo.index.insert(node.id.clone(), topo.nodes.len());
            topo.nodes.push(node);
        }
        for seg in self.segments {
            let (a, b) = seg.key.endpoints();
            for end in [a, b] {
                if !topo.index.contains_key(end) {
                    return Err(TopologyError::UnknownNode(end.to_string()));
                }
            }
            if a == b {
                return Err(TopologyError::InvalidRoute {
                    route: format!("{a}-{b}"),
                    reason: "segment endpoints must differ".into(),
                });
            }
            if !(seg.loss_db >= 0.0 && seg.loss_db.is_finite()) {
                return Err(TopologyError::Parse {
                    line: 0,
                    message: format!("segment {a}-{b}: loss must be a non-negative number"),
                });
            }
            if topo.segments.contains_key(&seg.key) {
                return Err(TopologyError::DuplicateSegment(
                    a.to_string(),
                    b.to_string(),
                ));
            }
            topo.segments.insert(seg.key.clone(), seg);
        }
        for route in self.routes {
            topo.validate_route(&route)?;
            let conn = route.connection();
            if topo.routes.insert(conn.clone(), route).is_some() {
                return Err(TopologyError::InvalidRoute {
                    route: conn.to_string(),
                    reason: "connection declared twice".into(),
                });
            }
        }
        Ok(topo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_ids_order_naturally() {
        let mut ids: Vec<NodeId> = ["U10", "X1", "U2", "U1"]
            .into_iter()
            .map(NodeId::from)
            .collect();
        ids.sort();
        assert_eq!(
            ids.iter().map(|i| i.as_str()).collect::<Vec<_>>(),
            ["U1", "U2", "U10", "X1"]
        );
    }

    #[test]
    fn connection_id_round_trips() {
        let c: ConnectionId = "U4-U3".parse().unwrap();
        assert_eq!(c, ConnectionId::new("U4", "U3"));
        assert_eq!(c.to_string(), "U4-U3");
        assert!("U4".parse::<ConnectionId>().is_err());
    }

    #[test]
    fn route_parses_both_arrow_styles() {
        let a = Route::parse("U2->X1->X4->U9").unwrap();
        let b = Route::parse("U2-X1-X4-U9").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.switch_count(), 2);
        assert_eq!(a.connection().to_string(), "U2-U9");
    }

    #[test]
    fn builder_rejects_duplicate_segment_in_either_orientation() {
        let err = Topology::builder()
            .node("A", NodeKind::Transmitter)
            .node("B", NodeKind::Receiver)
            .segment("A", "B", 1.0, None)
            .segment("B", "A", 2.0, None)
            .build()
            .unwrap_err();
        assert!(matches!(err, TopologyError::DuplicateSegment(..)));
    }

    #[test]
    fn builder_rejects_negative_loss() {
        let err = Topology::builder()
            .node("A", NodeKind::Transmitter)
            .node("B", NodeKind::Receiver)
            .segment("A", "B", -0.5, None)
            .build();
        assert!(err.is_err());
    }

    #[test]
    fn route_with_non_switch_interior_is_rejected() {
        let err = Topology::builder()
            .node("A", NodeKind::Transmitter)
            .node("B", NodeKind::Receiver)
            .node("C", NodeKind::Receiver)
            .segment("A", "C", 1.0, None)
            .segment("C", "B", 1.0, None)
            .route(Route::parse("A->C->B").unwrap())
            .build()
            .unwrap_err();
        assert!(matches!(err, TopologyError::InvalidRoute { .. }));
    }
}
