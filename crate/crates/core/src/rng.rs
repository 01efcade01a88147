//! Seeded SplitMix64 streams.
//!
//! Every randomized step draws from its own stream, derived from the master
//! seed, a text label and an index:
//!
//! ```text
//! seed  = mix64(mix64(master) ^ fnv1a64(label))
//! seed  = mix64(seed ^ index * 0x9E3779B97F4A7C15)
//! state = seed
//! next  = { state += 0x9E3779B97F4A7C15; mix64(state) }
//! ```
//!
//! `mix64` is the SplitMix64 finalizer. Field elements are drawn by rejection
//! sampling: a word `w` is accepted when `w < floor(2^64 / p) * p` and mapped
//! to `w mod p`. Results therefore never depend on thread scheduling.

use crate::gf::{Elem, PrimeField};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a over the label bytes.
pub fn fnv1a64(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed of the stream `(master, label, index)`.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let s = mix64(mix64(master) ^ fnv1a64(label));
    mix64(s ^ index.wrapping_mul(GOLDEN))
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn derive(master: u64, label: &str, index: u64) -> Self {
        Self::new(derive_seed(master, label, index))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform element of F_p.
    pub fn next_elem(&mut self, field: &PrimeField) -> Elem {
        let p = field.modulus();
        let zone = u64::MAX - (u64::MAX % p) - 1;
        loop {
            let w = self.next_u64();
            if w <= zone {
                return w % p;
            }
        }
    }

    /// Uniform nonzero element of F_p.
    pub fn next_nonzero(&mut self, field: &PrimeField) -> Elem {
        loop {
            let v = self.next_elem(field);
            if v != 0 {
                return v;
            }
        }
    }

    pub fn elems(&mut self, field: &PrimeField, len: usize) -> Vec<Elem> {
        (0..len).map(|_| self.next_elem(field)).collect()
    }

    /// Uniform integer in `0..bound`.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        let zone = u64::MAX - (u64::MAX % bound) - 1;
        loop {
            let w = self.next_u64();
            if w <= zone {
                return w % bound;
            }
        }
    }
}
