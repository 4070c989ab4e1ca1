use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Per-tree stream: master seed plus tree index. `seed_from_u64` expands
/// through SplitMix64, so adjacent seeds give unrelated streams.
pub fn tree_rng(master_seed: u64, tree_index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(master_seed.wrapping_add(tree_index as u64))
}

/// Stream for a named sub-task (replications, splits, data generation).
/// Tags keep these disjoint from the tree streams.
pub fn derived_rng(master_seed: u64, tag: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master_seed, tag, index))
}

pub fn derive_seed(master_seed: u64, tag: u64, index: usize) -> u64 {
    splitmix64(
        master_seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(tag.wrapping_mul(0xBF58_476D_1CE4_E5B9))
            .wrapping_add(index as u64),
    )
}

pub const TAG_SPLIT: u64 = 1;
pub const TAG_REPLICATION: u64 = 2;
pub const TAG_SYNTHETIC: u64 = 3;
pub const TAG_IMPORTANCE: u64 = 4;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
