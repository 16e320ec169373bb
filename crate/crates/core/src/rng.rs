//! Hierarchical seeded randomness.
//!
//! A [`SharedRandomness`] names a substream by a master seed and a path of
//! labels. The generator for a path is derived from a SHA-256 digest of the
//! seed and the length-prefixed labels, so it is a pure function of its inputs
//! on every platform. Subroutines never share a generator: each one asks for
//! its own labeled child.
//!
//! Paired executions share the [`SharedRandomness::internal`] stream and use
//! distinct [`SharedRandomness::data`] streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// The generator handed out by [`SharedRandomness::rng`].
pub type Stream = ChaCha8Rng;

const DOMAIN_TAG: &[u8] = b"replikit/stream/v1";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SharedRandomness {
    master_seed: u64,
    path: Vec<String>,
}

impl SharedRandomness {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed, path: Vec::new() }
    }

    /// The stream of internal randomness (thresholds, offsets, projections,
    /// oracle seeding) shared by paired executions.
    pub fn internal(master_seed: u64) -> Self {
        Self::new(master_seed).child("internal")
    }

    /// The data-sampling stream of execution `run`. Disjoint from
    /// [`SharedRandomness::internal`] for every `run`.
    pub fn data(master_seed: u64, run: u64) -> Self {
        Self::new(master_seed).child("data").child(&run.to_string())
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn path(&self) -> &[String] {
        &self.path
    }

    /// Derive a labeled child stream. The parent is unchanged.
    ///
    /// # Panics
    /// Panics if `label` is empty.
    pub fn child(&self, label: &str) -> Self {
        assert!(!label.is_empty(), "stream labels must be nonempty");
        let mut path = self.path.clone();
        path.push(label.to_owned());
        Self { master_seed: self.master_seed, path }
    }

    /// Child labeled by an index, e.g. a trial or coordinate number.
    pub fn indexed(&self, label: &str, index: u64) -> Self {
        self.child(&format!("{label}#{index}"))
    }

    fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(DOMAIN_TAG);
        h.update(self.master_seed.to_le_bytes());
        for label in &self.path {
            h.update((label.len() as u64).to_le_bytes());
            h.update(label.as_bytes());
        }
        h.finalize().into()
    }

    /// The keyed 64-bit seed of this substream.
    pub fn seed(&self) -> u64 {
        let d = self.digest();
        u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
    }

    /// A fresh generator positioned at the start of this substream.
    pub fn rng(&self) -> Stream {
        ChaCha8Rng::from_seed(self.digest())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn first_u64(s: &SharedRandomness) -> u64 {
        s.rng().random::<u64>()
    }

    #[test]
    fn split_is_deterministic() {
        let root = SharedRandomness::new(1);
        let a = root.child("hh");
        let b = root.child("hh");
        assert_eq!(a, b);
        let xs: Vec<u64> = a.rng().random_iter().take(16).collect();
        let ys: Vec<u64> = b.rng().random_iter().take(16).collect();
        assert_eq!(xs, ys);
        assert!(root.path().is_empty());
    }

    #[test]
    fn distinct_labels_give_distinct_streams() {
        let root = SharedRandomness::new(1);
        assert_ne!(first_u64(&root.child("hh")), first_u64(&root.child("round")));
        let labels = ["hh", "round", "mass", "oracle", "tree", "opt", "jl", "threshold"];
        let firsts: std::collections::BTreeSet<u64> =
            labels.iter().map(|l| first_u64(&root.child(l))).collect();
        assert_eq!(firsts.len(), labels.len());
    }

    #[test]
    fn nested_path_is_a_pure_function_of_inputs() {
        // Frozen value: changing the derivation breaks every recorded artifact.
        let s = SharedRandomness::new(1).child("coreset").child("layer3");
        assert_eq!(s.seed(), SharedRandomness::new(1).child("coreset").child("layer3").seed());
        assert_ne!(s.seed(), SharedRandomness::new(1).child("coreset/layer3").seed());
        assert_ne!(s.seed(), SharedRandomness::new(2).child("coreset").child("layer3").seed());
    }

    #[test]
    fn internal_and_data_streams_are_disjoint() {
        let internal = SharedRandomness::internal(7);
        let d0 = SharedRandomness::data(7, 0);
        let d1 = SharedRandomness::data(7, 1);
        assert_ne!(internal.seed(), d0.seed());
        assert_ne!(d0.seed(), d1.seed());
    }

    #[test]
    #[should_panic]
    fn empty_label_panics() {
        let _ = SharedRandomness::new(0).child("");
    }

    #[test]
    fn frozen_values() {
        // Digest recomputed by hand: tag, seed, then length-prefixed labels.
        let mut h = Sha256::new();
        h.update(b"replikit/stream/v1");
        h.update(42u64.to_le_bytes());
        for label in ["internal", "opt"] {
            h.update((label.len() as u64).to_le_bytes());
            h.update(label.as_bytes());
        }
        let d: [u8; 32] = h.finalize().into();
        let s = SharedRandomness::internal(42).child("opt");
        assert_eq!(s.seed(), u64::from_le_bytes(d[..8].try_into().unwrap()));
        // Pinned outputs; a change here breaks every recorded result.
        assert_eq!(s.seed(), 3384317575733579242);
        assert_eq!(first_u64(&s), 17162469551805402325);
        assert_eq!(first_u64(&SharedRandomness::data(7, 1).indexed("trial", 3)), 1553040000472063148);
    }
}
