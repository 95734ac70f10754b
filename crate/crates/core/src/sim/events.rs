use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Virtual-time queue ordered by (timestamp, insertion order).
#[derive(Debug)]
pub struct EventLoop<E> {
    now_us: u64,
    seq: u64,
    queue: BinaryHeap<Reverse<(u64, u64, Slot<E>)>>,
}

// Ordering ignores the payload; seq already makes keys unique.
#[derive(Debug)]
struct Slot<E>(E);

impl<E> PartialEq for Slot<E> {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl<E> Eq for Slot<E> {}

impl<E> PartialOrd for Slot<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Slot<E> {
    fn cmp(&self, _: &Self) -> std::cmp::Ordering {
        std::cmp::Ordering::Equal
    }
}

impl<E> Default for EventLoop<E> {
    fn default() -> Self {
        Self {
            now_us: 0,
            seq: 0,
            queue: BinaryHeap::new(),
        }
    }
}

impl<E> EventLoop<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Panics if `at_us` is earlier than the current clock.
    pub fn schedule(&mut self, at_us: u64, event: E) {
        assert!(at_us >= self.now_us, "event scheduled in the past");
        self.queue.push(Reverse((at_us, self.seq, Slot(event))));
        self.seq += 1;
    }

    /// Pops the next event and advances the clock to it.
    pub fn pop(&mut self) -> Option<(u64, E)> {
        let Reverse((at, _, Slot(e))) = self.queue.pop()?;
        self.now_us = at;
        Some((at, e))
    }
}
