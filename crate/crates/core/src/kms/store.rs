use crate::topology::ConnectionId;

/// 32 MiB.
pub const DEFAULT_CAPACITY_BYTES: u64 = 33_554_432;

/// Key buffer for one connection. Every change goes through [`credit`] or
/// [`debit`], so `buffered = initial + credited - debited` always holds.
///
/// [`credit`]: KeyStore::credit
/// [`debit`]: KeyStore::debit
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyStore {
    connection: ConnectionId,
    initial_bytes: u64,
    buffered_bytes: u64,
    capacity_bytes: u64,
    credited_bytes: u64,
    debited_bytes: u64,
    /// Bytes offered while full and therefore dropped.
    overflow_bytes: u64,
    /// Bytes requested while empty and therefore not served.
    unserved_bytes: u64,
}

impl KeyStore {
    pub fn new(connection: ConnectionId, capacity_bytes: u64) -> Self {
        Self::with_initial(connection, capacity_bytes, 0)
    }

    /// Panics if `initial_bytes` exceeds the capacity.
    pub fn with_initial(connection: ConnectionId, capacity_bytes: u64, initial_bytes: u64) -> Self {
        assert!(
            initial_bytes <= capacity_bytes,
            "initial buffer exceeds capacity"
        );
        Self {
            connection,
            initial_bytes,
            buffered_bytes: initial_bytes,
            capacity_bytes,
            credited_bytes: 0,
            debited_bytes: 0,
            overflow_bytes: 0,
            unserved_bytes: 0,
        }
    }

    pub fn connection(&self) -> &ConnectionId {
        &self.connection
    }

    pub fn buffered_bytes(&self) -> u64 {
        self.buffered_bytes
    }

    pub fn capacity_bytes(&self) -> u64 {
        self.capacity_bytes
    }

    pub fn initial_bytes(&self) -> u64 {
        self.initial_bytes
    }

    pub fn credited_bytes(&self) -> u64 {
        self.credited_bytes
    }

    pub fn debited_bytes(&self) -> u64 {
        self.debited_bytes
    }

    pub fn overflow_bytes(&self) -> u64 {
        self.overflow_bytes
    }

    pub fn unserved_bytes(&self) -> u64 {
        self.unserved_bytes
    }

    pub fn is_empty(&self) -> bool {
        self.buffered_bytes == 0
    }

    pub fn is_full(&self) -> bool {
        self.buffered_bytes == self.capacity_bytes
    }

    /// Adds up to `bytes`; returns how many fit.
    pub fn credit(&mut self, bytes: u64) -> u64 {
        let room = self.capacity_bytes - self.buffered_bytes;
        let taken = bytes.min(room);
        self.buffered_bytes += taken;
        self.credited_bytes += taken;
        self.overflow_bytes += bytes - taken;
        taken
    }

    /// Removes up to `bytes`; returns how many were available.
    pub fn debit(&mut self, bytes: u64) -> u64 {
        let served = bytes.min(self.buffered_bytes);
        self.buffered_bytes -= served;
        self.debited_bytes += served;
        self.unserved_bytes += bytes - served;
        served
    }

    /// Simultaneous inflow and outflow over one interval. Consumption is
    /// served from arrivals as well as the buffer; whichever boundary the
    /// net flow runs into clips the result. Returns (credited, debited).
    pub fn exchange(&mut self, inflow: u64, outflow: u64) -> (u64, u64) {
        let before = self.buffered_bytes;
        let (credited, debited) = if inflow >= outflow {
            let end = (before + inflow - outflow).min(self.capacity_bytes);
            (end + outflow - before, outflow)
        } else {
            let served = outflow.min(before + inflow);
            (inflow, served)
        };
        self.buffered_bytes = before + credited - debited;
        self.credited_bytes += credited;
        self.debited_bytes += debited;
        self.overflow_bytes += inflow - credited;
        self.unserved_bytes += outflow - debited;
        (credited, debited)
    }

    pub fn conserved(&self) -> bool {
        self.initial_bytes + self.credited_bytes - self.debited_bytes == self.buffered_bytes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn credit_stops_at_capacity_and_debit_at_zero() {
        let mut s = KeyStore::new("U4-U3".parse().unwrap(), 100);
        assert_eq!(s.credit(70), 70);
        assert_eq!(s.credit(70), 30);
        assert!(s.is_full());
        assert_eq!(s.overflow_bytes(), 40);
        assert_eq!(s.debit(150), 100);
        assert!(s.is_empty());
        assert_eq!(s.unserved_bytes(), 50);
        assert!(s.conserved());
    }

    #[test]
    fn exchange_clips_at_the_boundary_the_flow_reaches() {
        let mut s = KeyStore::with_initial("U4-U3".parse().unwrap(), 100, 100);
        assert_eq!(s.exchange(10, 500), (10, 110));
        assert_eq!(s.buffered_bytes(), 0);
        assert_eq!(s.exchange(300, 20), (120, 20));
        assert!(s.is_full());
        assert_eq!(s.overflow_bytes(), 180);
        assert!(s.conserved());
    }
}
