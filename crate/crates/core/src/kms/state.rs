//! Integer-time key accounting: continuous generation and consumption
//! flows, discrete credits, and store boundary events.

use std::collections::BTreeMap;

use super::store::KeyStore;
use crate::topology::ConnectionId;

pub const MICROS_PER_SECOND: u64 = 1_000_000;

/// Constant-rate key consumer attached to one connection's store.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Consumer {
    pub connection: String,
    #[serde(rename = "rate_Bps")]
    pub rate_bytes_per_s: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KmsEventKind {
    StoreEmpty,
    StoreFull,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KmsEvent {
    pub at_us: u64,
    pub connection: ConnectionId,
    pub kind: KmsEventKind,
}

#[derive(Clone, Debug, Default)]
struct Flow {
    generation_bps: u64,
    consumption_bytes_per_s: u64,
    // Sub-unit remainders carried between ticks so rates integrate exactly.
    gen_bit_us: u64,
    gen_bits: u64,
    use_byte_us: u64,
}

/// All key stores plus their flows, advanced by [`tick`](Self::tick).
#[derive(Clone, Debug, Default)]
pub struct KmsState {
    now_us: u64,
    stores: BTreeMap<ConnectionId, KeyStore>,
    flows: BTreeMap<ConnectionId, Flow>,
}

impl KmsState {
    pub fn new(stores: impl IntoIterator<Item = KeyStore>) -> Self {
        let stores: BTreeMap<_, _> = stores
            .into_iter()
            .map(|s| (s.connection().clone(), s))
            .collect();
        let flows = stores
            .keys()
            .map(|c| (c.clone(), Flow::default()))
            .collect();
        Self {
            now_us: 0,
            stores,
            flows,
        }
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    pub fn stores(&self) -> &BTreeMap<ConnectionId, KeyStore> {
        &self.stores
    }

    pub fn store(&self, c: &ConnectionId) -> Option<&KeyStore> {
        self.stores.get(c)
    }

    /// Continuous generation rate for a store; 0 when not paired.
    pub fn set_generation(&mut self, c: &ConnectionId, bps: u64) {
        if let Some(f) = self.flows.get_mut(c) {
            f.generation_bps = bps;
        }
    }

    pub fn set_consumption(&mut self, c: &ConnectionId, bytes_per_s: u64) {
        if let Some(f) = self.flows.get_mut(c) {
            f.consumption_bytes_per_s = bytes_per_s;
        }
    }

    pub fn generation(&self, c: &ConnectionId) -> u64 {
        self.flows.get(c).map_or(0, |f| f.generation_bps)
    }

    /// Discrete credit (key delivered by a finished round) at the current
    /// time. Emits `StoreFull` if the store fills.
    pub fn credit(&mut self, c: &ConnectionId, bytes: u64) -> Vec<KmsEvent> {
        let mut events = Vec::new();
        if let Some(s) = self.stores.get_mut(c) {
            let was_full = s.is_full();
            s.credit(bytes);
            if !was_full && s.is_full() {
                events.push(KmsEvent {
                    at_us: self.now_us,
                    connection: c.clone(),
                    kind: KmsEventKind::StoreFull,
                });
            }
        }
        events
    }

    /// Advances every store by `delta_us`, integrating generation and
    /// consumption. Events carry the exact microsecond at which a store
    /// reached empty or full inside the interval.
    pub fn tick(&mut self, delta_us: u64) -> Vec<KmsEvent> {
        let start = self.now_us;
        let mut events = Vec::new();
        for (c, flow) in self.flows.iter_mut() {
            let store = self.stores.get_mut(c).expect("flow without store");
            let before = store.buffered_bytes();
            let was_empty = store.is_empty();
            let was_full = store.is_full();

            flow.gen_bit_us += flow.generation_bps * delta_us;
            flow.gen_bits += flow.gen_bit_us / MICROS_PER_SECOND;
            flow.gen_bit_us %= MICROS_PER_SECOND;
            let gen_bytes = flow.gen_bits / 8;
            flow.gen_bits %= 8;

            flow.use_byte_us += flow.consumption_bytes_per_s * delta_us;
            let use_bytes = flow.use_byte_us / MICROS_PER_SECOND;
            flow.use_byte_us %= MICROS_PER_SECOND;

            // Net flow over the interval is linear, so a crossing time
            // follows from the net rate.
            let in_bits_per_s = flow.generation_bps as i128;
            let out_bits_per_s = flow.consumption_bytes_per_s as i128 * 8;
            let net = in_bits_per_s - out_bits_per_s;
            let cross = |distance_bytes: u64| -> u64 {
                let num = distance_bytes as i128 * 8 * MICROS_PER_SECOND as i128;
                let d = net.unsigned_abs() as i128;
                (start as i128 + (num + d - 1) / d).min((start + delta_us) as i128) as u64
            };

            store.exchange(gen_bytes, use_bytes);

            if !was_empty && store.is_empty() {
                let at = if net < 0 {
                    cross(before)
                } else {
                    start + delta_us
                };
                events.push(KmsEvent {
                    at_us: at,
                    connection: c.clone(),
                    kind: KmsEventKind::StoreEmpty,
                });
            }
            if !was_full && store.is_full() {
                let at = if net > 0 {
                    cross(store.capacity_bytes() - before)
                } else {
                    start + delta_us
                };
                events.push(KmsEvent {
                    at_us: at,
                    connection: c.clone(),
                    kind: KmsEventKind::StoreFull,
                });
            }
        }
        self.now_us = start + delta_us;
        events.sort_by(|a, b| {
            a.at_us
                .cmp(&b.at_us)
                .then_with(|| a.connection.cmp(&b.connection))
        });
        events
    }
}
