pub const DEFAULT_SAFETY_MARGIN: u64 = 64;

/// Binary entropy in bits.
pub fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Output length of privacy amplification:
/// `max(0, floor(n_in (1 - h2(q)) - leaked - margin))`.
pub fn compression_ratio(qber: f64, leaked_bits: u64, n_in: usize, safety_margin: u64) -> usize {
    let v = n_in as f64 * (1.0 - h2(qber)) - leaked_bits as f64 - safety_margin as f64;
    if v <= 0.0 {
        0
    } else {
        (v.floor() as usize).min(n_in)
    }
}
