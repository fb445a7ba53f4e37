//! Deterministic seed derivation for nested Monte Carlo streams.
//!
//! Seeds are combined by hashing rather than by offsetting so that disjoint
//! study subsets (different scenario points, different method lists) draw
//! identical streams for the work they share.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with one tag.
pub fn derive(master: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(tag.wrapping_mul(0xA24B_AED4_963E_E407)))
}

/// Mixes a master seed with two tags (e.g. scenario point and replicate).
pub fn derive2(master: u64, tag_a: u64, tag_b: u64) -> u64 {
    derive(derive(master, tag_a), tag_b)
}

/// Stable key for a scenario point described by floating-point parameters.
pub fn point_key(params: &[f64]) -> u64 {
    let mut key = 0xD6E8_FEB8_6659_FD93u64;
    for &p in params {
        key = splitmix64(key ^ p.to_bits());
    }
    key
}
