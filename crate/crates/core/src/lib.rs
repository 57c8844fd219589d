//! Node embeddings for sparse undirected folding-pattern graphs.
//!
//! Pipeline: exact k-hop neighborhoods ([`graph`]) → DTW structural
//! similarity ([`struct_sim`]) → similarity-weighted multi-hop ROI features
//! ([`features`]) → KAN autoencoder ([`kan`], [`autoencoder`]) → cosine
//! correspondence across subjects ([`correspond`]). [`synth`] generates
//! populations with known ground truth, [`metrics`] scores reconstructions
//! and [`io`] holds the on-disk formats used by the `gyral` CLI.

pub mod autoencoder;
pub mod correspond;
pub mod features;
pub mod graph;
pub mod io;
pub mod kan;
pub mod metrics;
pub mod optim;
pub mod struct_sim;
pub mod synth;

/// Counter-based seed derivation (SplitMix64 finalizer over `base ^ stream`
/// mixing), so every component gets an independent, reproducible stream.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
