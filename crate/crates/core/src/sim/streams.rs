//! Child RNG seeds keyed by (root, component, connection, epoch), so that
//! adding a connection leaves every other stream untouched.

use crate::crypto::sm3;

pub fn stream_seed(root: u64, component: &str, key: &str, epoch: u64) -> [u8; 32] {
    let mut m = Vec::with_capacity(32 + component.len() + key.len());
    m.extend_from_slice(&root.to_le_bytes());
    m.extend_from_slice(component.as_bytes());
    m.push(0);
    m.extend_from_slice(key.as_bytes());
    m.push(0);
    m.extend_from_slice(&epoch.to_le_bytes());
    sm3(&m)
}

pub fn stream_u64(root: u64, component: &str, key: &str, epoch: u64) -> u64 {
    let s = stream_seed(root, component, key, epoch);
    u64::from_le_bytes(s[..8].try_into().expect("8 bytes"))
}
