//! Text formats for topologies and measured loss matrices.
//!
//! Topology files have three sections:
//!
//! ```text
//! [nodes]
//! U2 transmitter
//! X1 switch
//! [segments]
//! # a b loss_db [length_km]
//! U2 X1 1.0 1.302
//! [routes]
//! # tx rx hops... (hops may include or omit the endpoints)
//! U2 U1 U2 X1 U1
//! ```
//!
//! `#` starts a comment anywhere on a line.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{ConnectionId, NodeId, NodeKind, Route, Topology, TopologyError};

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Nodes,
    Segments,
    Routes,
}

fn strip_comment(line: &str) -> &str {
    line.split_once('#').map_or(line, |(head, _)| head).trim()
}

fn parse_err(line: usize, message: impl Into<String>) -> TopologyError {
    TopologyError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(field: &str, line: usize, what: &str) -> Result<f64, TopologyError> {
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| parse_err(line, format!("{what}: expected a number, got {field:?}")))
}

pub(super) fn parse_topology(text: &str) -> Result<Topology, TopologyError> {
    let mut builder = Topology::builder();
    let mut section = Section::None;
    let mut seen_nodes = std::collections::HashSet::new();
    let mut routes: Vec<Route> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            section = match line {
                "[nodes]" => Section::Nodes,
                "[segments]" => Section::Segments,
                "[routes]" => Section::Routes,
                other => return Err(parse_err(line_no, format!("unknown section {other}"))),
            };
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match section {
            Section::None => return Err(parse_err(line_no, "content before the first section")),
            Section::Nodes => {
                let [id, kind] = fields[..] else {
                    return Err(parse_err(line_no, "expected `id kind`"));
                };
                let kind: NodeKind = kind
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("unknown node kind {kind:?}")))?;
                if !seen_nodes.insert(id.to_string()) {
                    return Err(TopologyError::DuplicateNode(id.to_string()));
                }
                builder = builder.node(id, kind);
            }
            Section::Segments => {
                if !(3..=4).contains(&fields.len()) {
                    return Err(parse_err(line_no, "expected `a b loss_db [length_km]`"));
                }
                let loss = parse_f64(fields[2], line_no, "loss_db")?;
                if loss < 0.0 {
                    return Err(parse_err(line_no, "loss_db must be non-negative"));
                }
                let length = fields
                    .get(3)
                    .map(|f| parse_f64(f, line_no, "length_km"))
                    .transpose()?;
                if length.is_some_and(|l| l < 0.0) {
                    return Err(parse_err(line_no, "length_km must be non-negative"));
                }
                for end in &fields[..2] {
                    if !seen_nodes.contains(*end) {
                        return Err(TopologyError::UnknownNode(end.to_string()));
                    }
                }
                builder = builder.segment(fields[0], fields[1], loss, length);
            }
            Section::Routes => {
                if fields.len() < 2 {
                    return Err(parse_err(line_no, "expected `tx rx hops...`"));
                }
                let (tx, rx) = (fields[0], fields[1]);
                let mut hops: Vec<NodeId> = fields[2..].iter().map(|h| NodeId::new(*h)).collect();
                if hops.first().map(NodeId::as_str) != Some(tx) {
                    hops.insert(0, NodeId::new(tx));
                }
                if hops.last().map(NodeId::as_str) != Some(rx) {
                    hops.push(NodeId::new(rx));
                }
                if hops.len() < 2 {
                    return Err(parse_err(line_no, "route needs two distinct endpoints"));
                }
                routes.push(Route::new(hops));
            }
        }
    }

    for route in routes {
        builder = builder.route(route);
    }
    builder.build()
}

/// Renders a topology in the format accepted by [`Topology::parse`].
pub fn render_topology(topology: &Topology) -> String {
    let mut out = String::new();
    out.push_str("[nodes]\n");
    let mut nodes: Vec<_> = topology.nodes().to_vec();
    nodes.sort_by(|a, b| a.id.cmp(&b.id));
    for n in &nodes {
        let _ = writeln!(out, "{} {}", n.id, n.kind.as_str());
    }
    out.push_str("\n[segments]\n# a b loss_db [length_km]\n");
    for s in topology.segments() {
        let (a, b) = s.key.endpoints();
        match s.length_km {
            Some(len) => {
                let _ = writeln!(out, "{a} {b} {} {}", fmt_num(s.loss_db), fmt_num(len));
            }
            None => {
                let _ = writeln!(out, "{a} {b} {}", fmt_num(s.loss_db));
            }
        }
    }
    out.push_str("\n[routes]\n# tx rx hops...\n");
    for r in topology.routes() {
        let hops: Vec<&str> = r.hops().iter().map(NodeId::as_str).collect();
        let _ = writeln!(
            out,
            "{} {} {}",
            r.transmitter(),
            r.receiver(),
            hops.join(" ")
        );
    }
    out
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Measured receiver x transmitter attenuation grid. Absent cells are
/// pairs that were never measured.
#[derive(Clone, Debug, PartialEq)]
pub struct LossMatrix {
    pub transmitters: Vec<NodeId>,
    pub receivers: Vec<NodeId>,
    pub cells: BTreeMap<ConnectionId, f64>,
}

impl LossMatrix {
    pub fn get(&self, connection: &ConnectionId) -> Option<f64> {
        self.cells.get(connection).copied()
    }

    pub fn total_cells(&self) -> usize {
        self.transmitters.len() * self.receivers.len()
    }
}

/// Parses a grid whose header row lists transmitters and whose remaining
/// rows are `receiver v1 v2 ...`, with `-` for absent cells.
pub fn parse_loss_matrix(text: &str) -> Result<LossMatrix, TopologyError> {
    let mut transmitters: Option<Vec<NodeId>> = None;
    let mut receivers = Vec::new();
    let mut cells = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match &transmitters {
            None => {
                if fields.len() < 2 {
                    return Err(parse_err(line_no, "header needs a label and transmitters"));
                }
                transmitters = Some(fields[1..].iter().map(|f| NodeId::new(*f)).collect());
            }
            Some(txs) => {
                if fields.len() != txs.len() + 1 {
                    return Err(parse_err(
                        line_no,
                        format!("expected {} values, found {}", txs.len(), fields.len() - 1),
                    ));
                }
                let rx = NodeId::new(fields[0]);
                for (tx, field) in txs.iter().zip(&fields[1..]) {
                    if matches!(*field, "-" | "—") {
                        continue;
                    }
                    let v = parse_f64(field, line_no, "loss")?;
                    cells.insert(ConnectionId::new(tx.clone(), rx.clone()), v);
                }
                receivers.push(rx);
            }
        }
    }
    Ok(LossMatrix {
        transmitters: transmitters.unwrap_or_default(),
        receivers,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_sections_give_empty_topology() {
        let t = Topology::parse("[nodes]\n[segments]\n[routes]\n").unwrap();
        assert!(t.nodes().is_empty());
        assert_eq!(t.route_count(), 0);
    }

    #[test]
    fn undeclared_route_hop_is_named_in_the_error() {
        let text =
            "[nodes]\nA tx\nB rx\nX1 switch\n[segments]\nA X1 1\nX1 B 1\n[routes]\nA B A X9 B\n";
        let err = Topology::parse(text).unwrap_err();
        assert!(err.to_string().contains("X9"), "{err}");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "[nodes]\nA tx\nB rx\n[segments]\nA B notanumber\n";
        match Topology::parse(text).unwrap_err() {
            TopologyError::Parse { line, .. } => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn routes_accept_interior_only_hops() {
        let text = "[nodes]\nA tx\nB rx\nX1 switch\n[segments]\nA X1 1\nX1 B 2\n[routes]\nA B X1\n";
        let t = Topology::parse(text).unwrap();
        let r = t.routes().next().unwrap();
        assert_eq!(r.to_string(), "A->X1->B");
    }

    #[test]
    fn render_then_parse_is_stable() {
        let text = "[nodes]\nA tx\nB rx\nX1 switch\n[segments]\nA X1 1.25 0.5\nX1 B 2\n[routes]\nA B A X1 B\n";
        let t = Topology::parse(text).unwrap();
        let rendered = render_topology(&t);
        let again = Topology::parse(&rendered).unwrap();
        assert_eq!(render_topology(&again), rendered);
    }

    #[test]
    fn loss_matrix_skips_absent_cells() {
        let m = parse_loss_matrix("rx A B\nR1 1.5 -\nR2 2 3\n").unwrap();
        assert_eq!(m.cells.len(), 3);
        assert_eq!(m.total_cells(), 4);
        assert_eq!(m.get(&ConnectionId::new("B", "R2")), Some(3.0));
        assert_eq!(m.get(&ConnectionId::new("B", "R1")), None);
    }
}
