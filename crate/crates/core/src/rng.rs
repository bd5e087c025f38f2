//! Seeded, splittable random streams.
//!
//! Every random draw in the crate comes from a [`StreamRng`] obtained from a
//! [`SeedTree`]. A tree is a 64-bit master seed plus a path of labels and
//! indices; each distinct path maps to its own ChaCha8 stream. Streams do not
//! depend on the order in which they are created, so replicate `i` sees the
//! same numbers whether it runs first, last, or on another thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    master: u64,
    path: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        Self { master, path: mix(0x5eed_0f_7ee5, master) }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Child node for a named purpose (e.g. `"permutations"`).
    pub fn child(&self, label: &str) -> Self {
        let mut h = self.path;
        for b in label.bytes() {
            h = mix(h, b as u64);
        }
        Self { master: self.master, path: mix(h, label.len() as u64 ^ 0xa5a5) }
    }

    /// Child node for the `index`-th replicate, iteration, seed, ...
    pub fn index(&self, index: u64) -> Self {
        Self { master: self.master, path: mix(self.path ^ 0x1d, index) }
    }

    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.path);
        rng
    }
}

// splitmix64 finalizer applied to a running state.
fn mix(state: u64, value: u64) -> u64 {
    let mut z = state
        .wrapping_add(value)
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_path_same_stream() {
        let a = SeedTree::new(7).child("x").index(3).rng().random::<u64>();
        let b = SeedTree::new(7).child("x").index(3).rng().random::<u64>();
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_paths_differ() {
        let t = SeedTree::new(7);
        let draws: Vec<u64> = [t.child("a"), t.child("b"), t.child("a").index(0), t.child("a").index(1), SeedTree::new(8).child("a")]
            .iter()
            .map(|s| s.rng().random::<u64>())
            .collect();
        for i in 0..draws.len() {
            for j in i + 1..draws.len() {
                assert_ne!(draws[i], draws[j], "{i} vs {j}");
            }
        }
    }
}
