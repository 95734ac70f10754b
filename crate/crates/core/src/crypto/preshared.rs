//! Symmetric fallback: tags keyed with bytes drawn from a pre-shared pool.

use super::sm3::{sm3_concat, Sm3};
use super::tag::{Tag, TagCategory};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PresharedError {
    #[error("pre-shared key pool exhausted after {events} events")]
    Exhausted { events: u64 },
    #[error("shared key is empty")]
    EmptyKey,
}

/// Keyed tag `sm3(shared_key || category byte || data)`.
pub fn preshared_authenticate(
    shared_key: &[u8],
    category: TagCategory,
    data: &[u8],
) -> Result<Tag, PresharedError> {
    if shared_key.is_empty() {
        return Err(PresharedError::EmptyKey);
    }
    let digest = Sm3::new()
        .update(shared_key)
        .update(&[category.byte()])
        .update(data)
        .finalize();
    Ok(Tag { category, digest })
}

/// One side's copy of a pre-shared key pool. Both ends construct it from
/// the same seed, so they draw identical key material in the same order.
/// Each authentication event consumes `cost_per_event` bytes.
#[derive(Clone, Debug)]
pub struct PresharedPool {
    seed: [u8; 32],
    total_bytes: u64,
    cost_per_event: u64,
    events_used: u64,
}

pub const DEFAULT_COST_PER_EVENT: u64 = 32;

impl PresharedPool {
    pub fn new(seed: [u8; 32], total_bytes: u64, cost_per_event: u64) -> Self {
        assert!(cost_per_event > 0, "cost per event must be positive");
        Self {
            seed,
            total_bytes,
            cost_per_event,
            events_used: 0,
        }
    }

    pub fn capacity_events(&self) -> u64 {
        self.total_bytes / self.cost_per_event
    }

    pub fn events_used(&self) -> u64 {
        self.events_used
    }

    pub fn remaining_bytes(&self) -> u64 {
        self.total_bytes - self.events_used * self.cost_per_event
    }

    pub fn is_exhausted(&self) -> bool {
        self.events_used >= self.capacity_events()
    }

    /// Key material for the next event.
    pub fn next_key(&mut self) -> Result<Vec<u8>, PresharedError> {
        if self.is_exhausted() {
            return Err(PresharedError::Exhausted {
                events: self.events_used,
            });
        }
        let event = self.events_used;
        self.events_used += 1;
        let mut out = Vec::with_capacity(self.cost_per_event as usize);
        let mut block = 0u64;
        while (out.len() as u64) < self.cost_per_event {
            let d = sm3_concat(&[&self.seed, &event.to_be_bytes(), &block.to_be_bytes()]);
            let take = ((self.cost_per_event as usize) - out.len()).min(d.len());
            out.extend_from_slice(&d[..take]);
            block += 1;
        }
        Ok(out)
    }

    /// Tags `data` with the next chunk of key material.
    pub fn authenticate(
        &mut self,
        category: TagCategory,
        data: &[u8],
    ) -> Result<Tag, PresharedError> {
        let key = self.next_key()?;
        preshared_authenticate(&key, category, data)
    }
}

/// Both sides tag their own copy of the data and compare; returns
/// `(side a accepts, side b accepts)`.
pub fn preshared_exchange(
    a: &mut PresharedPool,
    b: &mut PresharedPool,
    category: TagCategory,
    data_a: &[u8],
    data_b: &[u8],
) -> Result<(bool, bool), PresharedError> {
    let ta = a.authenticate(category, data_a)?;
    let tb = b.authenticate(category, data_b)?;
    let same = ta == tb;
    Ok((same, same))
}
