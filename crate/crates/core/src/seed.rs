//! Deterministic seed fan-out.
//!
//! A single run seed expands into independent per-stage seeds via
//! `derive(seed, label)` = splitmix64(seed XOR fnv1a64(label)). Stages add
//! counters into the label (e.g. `"dataset.obs.17"`), so any stage can be
//! re-run in isolation and still see the exact stream the full pipeline
//! would have used.

/// FNV-1a 64-bit hash of a label.
fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// One splitmix64 scramble round.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Stage seed for `label` under the given run seed.
pub fn derive(seed: u64, label: &str) -> u64 {
    splitmix64(seed ^ fnv1a64(label))
}

/// Stage seed with a numeric counter, e.g. per observation or per epoch.
pub fn derive_n(seed: u64, label: &str, n: u64) -> u64 {
    splitmix64(derive(seed, label) ^ splitmix64(n))
}
