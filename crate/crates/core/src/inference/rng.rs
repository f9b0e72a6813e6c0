use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Splitmix-style mixing of a seed with context words. Used to derive an
/// independent random stream per superpixel and iteration so results do not
/// depend on scheduling.
pub(crate) fn mix(seed: u64, parts: &[u64]) -> u64 {
    let mut z = seed;
    for &p in parts {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(p);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

pub(crate) fn stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, parts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_differ_by_context() {
        assert_ne!(mix(1, &[0, 1]), mix(1, &[1, 0]));
        assert_ne!(mix(1, &[2]), mix(2, &[1]));
        assert_eq!(mix(7, &[3, 4]), mix(7, &[3, 4]));
    }
}
