//! Simulated cost of signature operations and message transit, and a
//! timed run of the handshake over a modelled channel.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::time::Duration;

use super::handshake::{AuthSession, SessionState};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperationKind {
    Keygen,
    Sign,
    Verify,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OperationCosts {
    pub keygen: Duration,
    pub sign: Duration,
    pub verify: Duration,
}

impl Default for OperationCosts {
    fn default() -> Self {
        Self::uniform(Duration::from_millis(10))
    }
}

impl OperationCosts {
    pub fn uniform(d: Duration) -> Self {
        Self {
            keygen: d,
            sign: d,
            verify: d,
        }
    }

    pub fn cost(&self, kind: OperationKind) -> Duration {
        match kind {
            OperationKind::Keygen => self.keygen,
            OperationKind::Sign => self.sign,
            OperationKind::Verify => self.verify,
        }
    }
}

/// Point-to-point link: fixed one-way delay plus serialization at a
/// finite bit rate (`None` = unlimited).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChannelModel {
    pub one_way_delay: Duration,
    pub bandwidth_bps: Option<u64>,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            one_way_delay: Duration::from_millis(10),
            bandwidth_bps: Some(100_000),
        }
    }
}

impl ChannelModel {
    pub fn ideal() -> Self {
        Self {
            one_way_delay: Duration::ZERO,
            bandwidth_bps: None,
        }
    }

    pub fn serialization(&self, bytes: usize) -> Duration {
        match self.bandwidth_bps {
            None => Duration::ZERO,
            Some(bps) => {
                let nanos = (bytes as u128 * 8 * 1_000_000_000).div_ceil(bps.max(1) as u128);
                Duration::from_nanos(nanos as u64)
            }
        }
    }

    pub fn transit(&self, bytes: usize) -> Duration {
        self.serialization(bytes) + self.one_way_delay
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimedEvent {
    pub at: Duration,
    pub side: &'static str,
    pub what: String,
}

#[derive(Clone, Debug)]
pub struct HandshakeRun {
    /// Time at which the later of the two sides reached a terminal state,
    /// or stopped receiving.
    pub completion: Duration,
    pub state_a: SessionState,
    pub state_b: SessionState,
    pub events: Vec<TimedEvent>,
    pub bytes_on_wire: usize,
    /// Size of every frame sent, in send order.
    pub frame_bytes: Vec<usize>,
}

impl HandshakeRun {
    pub fn authenticated(&self) -> bool {
        self.state_a == SessionState::Authenticated && self.state_b == SessionState::Authenticated
    }
}

/// Runs both sessions to completion. Both hellos leave at t = 0; a frame
/// arrives after serialization plus delay; a hello costs one verify (the
/// certificate) and one sign before the reply leaves; a signature costs
/// one verify.
pub fn simulate_handshake(
    a: &mut AuthSession,
    b: &mut AuthSession,
    costs: &OperationCosts,
    channel: &ChannelModel,
) -> HandshakeRun {
    simulate_handshake_with(a, b, costs, channel, |_, _| {})
}

/// As [`simulate_handshake`], with a hook that may alter frames in flight.
/// The hook receives the index of the frame (in send order) and its bytes.
pub fn simulate_handshake_with(
    a: &mut AuthSession,
    b: &mut AuthSession,
    costs: &OperationCosts,
    channel: &ChannelModel,
    mut in_flight: impl FnMut(usize, &mut Vec<u8>),
) -> HandshakeRun {
    // (arrival, seq, destination is b, frame)
    type InFlight = (Duration, usize, bool, Vec<u8>);
    let mut queue: BinaryHeap<Reverse<InFlight>> = BinaryHeap::new();
    let mut events = Vec::new();
    let mut busy = [Duration::ZERO; 2];
    let mut seq = 0usize;
    let mut bytes_on_wire = 0usize;
    let mut frame_bytes = Vec::new();
    let names = ["A", "B"];

    let mut post = |queue: &mut BinaryHeap<_>, depart: Duration, to_b: bool, mut frame: Vec<u8>| {
        let at = depart + channel.transit(frame.len());
        bytes_on_wire += frame.len();
        frame_bytes.push(frame.len());
        in_flight(seq, &mut frame);
        queue.push(Reverse((at, seq, to_b, frame)));
        seq += 1;
    };

    for (side, session) in [(0usize, &mut *a), (1, &mut *b)] {
        if let Ok(frame) = session.start() {
            events.push(TimedEvent {
                at: Duration::ZERO,
                side: names[side],
                what: format!("send hello ({} B)", frame.len()),
            });
            post(&mut queue, Duration::ZERO, side == 0, frame);
        }
    }

    let mut finish = Duration::ZERO;
    while let Some(Reverse((at, _, to_b, frame))) = queue.pop() {
        let side = usize::from(to_b);
        let session = if to_b { &mut *b } else { &mut *a };
        let before = session.state();
        if before.is_terminal() {
            continue;
        }
        let start = busy[side].max(at);
        let reply = session.step(&frame).ok().flatten();
        let after = session.state();
        let cost = match (before, after) {
            (SessionState::Init, SessionState::Signed) => costs.verify + costs.sign,
            (SessionState::Init, _) => costs.verify,
            (SessionState::Signed, _) => costs.verify,
            _ => Duration::ZERO,
        };
        let done = start + cost;
        busy[side] = done;
        finish = finish.max(done);
        events.push(TimedEvent {
            at: done,
            side: names[side],
            what: format!("processed {} B frame -> {:?}", frame.len(), after),
        });
        if let Some(reply) = reply {
            events.push(TimedEvent {
                at: done,
                side: names[side],
                what: format!("send signature ({} B)", reply.len()),
            });
            post(&mut queue, done, !to_b, reply);
        }
    }

    HandshakeRun {
        completion: finish,
        state_a: a.state(),
        state_b: b.state(),
        events,
        bytes_on_wire,
        frame_bytes,
    }
}

/// Closed-form completion time for symmetric hello and signature frames.
pub fn handshake_duration(
    costs: &OperationCosts,
    channel: &ChannelModel,
    hello_bytes: usize,
    signature_bytes: usize,
) -> Duration {
    channel.transit(hello_bytes)
        + costs.verify
        + costs.sign
        + channel.transit(signature_bytes)
        + costs.verify
}
