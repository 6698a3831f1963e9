//! Small helpers around SHA-256 used for anchor keys, request digests and
//! advantage digests.

use alloc::string::String;
use sha2::{Digest, Sha256};

/// Length-prefixed byte writer so that concatenated fields cannot collide.
#[derive(Default)]
pub struct CanonicalWriter {
    hasher: Sha256,
}

impl CanonicalWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.hasher.update((b.len() as u64).to_le_bytes());
        self.hasher.update(b);
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.hasher.update(v.to_le_bytes());
        self
    }

    pub fn i64(&mut self, v: i64) -> &mut Self {
        self.hasher.update(v.to_le_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.hasher.update(v.to_bits().to_le_bytes());
        self
    }

    pub fn finish(self) -> [u8; 32] {
        self.hasher.finalize().into()
    }
}

pub fn to_hex(bytes: &[u8]) -> String {
    const HEX: &[u8; 16] = b"0123456789abcdef";
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push(HEX[(b >> 4) as usize] as char);
        s.push(HEX[(b & 0xf) as usize] as char);
    }
    s
}

/// SplitMix64 finalizer; used to derive independent child seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a seed from a parent seed and a sequence of integer labels.
pub fn derive_seed(parent: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(mix64(parent), |acc, &l| mix64(acc ^ mix64(l)))
}

/// Stable 64-bit label for a string (first 8 bytes of its SHA-256).
pub fn str_label(s: &str) -> u64 {
    let mut w = CanonicalWriter::new();
    w.str(s);
    let d = w.finish();
    u64::from_le_bytes([d[0], d[1], d[2], d[3], d[4], d[5], d[6], d[7]])
}

/// Uniform draw in [0, 1) from the top 53 bits of a u64.
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
