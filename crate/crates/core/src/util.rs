//! Small shared helpers.

use rand::Rng;

/// Deterministic partial Fisher-Yates: after the call, `items[..take]`
/// holds `take` uniformly chosen distinct elements.
pub(crate) fn partial_shuffle<T, R: Rng>(items: &mut [T], take: usize, rng: &mut R) {
    let take = take.min(items.len());
    for k in 0..take {
        let j = rng.gen_range(k..items.len());
        items.swap(k, j);
    }
}

/// Uniform random injective assignment of `count` items onto `0..slots`.
pub(crate) fn random_injective<R: Rng>(count: usize, slots: usize, rng: &mut R) -> Vec<usize> {
    debug_assert!(count <= slots);
    let mut pool: Vec<usize> = (0..slots).collect();
    partial_shuffle(&mut pool, count, rng);
    pool.truncate(count);
    pool
}
