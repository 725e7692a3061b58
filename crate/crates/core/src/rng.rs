//! Deterministic per-path random streams.
//!
//! Every stochastic routine derives one PCG64 generator per (master seed,
//! domain, path index). Streams depend only on those keys — never on thread
//! scheduling — so ensemble reductions are reproducible for any worker count.

use rand_pcg::Pcg64;

/// Stream domain for Lamperti-scheme ensembles.
pub const DOMAIN_LAMPERTI: u64 = 1;
/// Stream domain for SDE-scheme ensembles.
pub const DOMAIN_SDE: u64 = 2;
/// Stream domain for martingale test batteries.
pub const DOMAIN_MARTINGALE: u64 = 3;

/// SplitMix64 finalizer.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One independent generator per (seed, domain, index).
pub fn path_rng(master_seed: u64, domain: u64, index: u64) -> Pcg64 {
    let a = mix(master_seed ^ 0x6a09_e667_f3bc_c908);
    let b = mix(a ^ domain);
    let c = mix(b ^ index);
    let d = mix(c ^ 0xbb67_ae85_84ca_a73b);
    let state = ((b as u128) << 64) | c as u128;
    let stream = ((d as u128) << 64) | mix(d) as u128;
    Pcg64::new(state, stream)
}
