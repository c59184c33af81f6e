//! Seed fan-out. Every stochastic subsystem draws from its own stream,
//! derived from one root seed and the subsystem's name:
//!
//! ```text
//! seed(root, name) = splitmix64(root ^ fnv1a64(name))
//! ```
//!
//! Names in use: `init/run{r}`, `dropout/run{r}`, `split/run{r}`,
//! `synthetic`, `power-iteration`, `bench`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, name: &str) -> u64 {
    splitmix64(root ^ fnv1a64(name.as_bytes()))
}

pub fn rng_for(root: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, name))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable_and_name_sensitive() {
        assert_eq!(derive_seed(1, "init/run0"), derive_seed(1, "init/run0"));
        assert_ne!(derive_seed(1, "init/run0"), derive_seed(1, "init/run1"));
        assert_ne!(derive_seed(1, "init/run0"), derive_seed(2, "init/run0"));
        // Pinned so that manifests stay reproducible across releases.
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
    }
}
