use xxhash_rust::xxh3::xxh3_64;

use crate::error::{Error, Result};
use crate::plr::KeyInt;

pub const DEFAULT_BITS_PER_KEY: usize = 10;
pub const DEFAULT_HASH_COUNT: u32 = 7;

/// One filter per sstable, probed with double hashing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BloomFilter {
    bits: Vec<u8>,
    num_bits: u64,
    hash_count: u32,
}

#[inline]
fn key_hash(key: KeyInt) -> (u64, u64) {
    let h = xxh3_64(&key.to_be_bytes());
    let h1 = h & 0xffff_ffff;
    // Odd step so every probe sequence visits distinct bits.
    let h2 = (h >> 32) | 1;
    (h1, h2)
}

impl BloomFilter {
    pub fn build(keys: &[KeyInt], bits_per_key: usize, hash_count: u32) -> Self {
        if keys.is_empty() {
            return BloomFilter {
                bits: Vec::new(),
                num_bits: 0,
                hash_count,
            };
        }
        let num_bits = (keys.len() * bits_per_key).max(64) as u64;
        let mut bits = vec![0u8; num_bits.div_ceil(8) as usize];
        for &k in keys {
            let (h1, h2) = key_hash(k);
            for i in 0..hash_count as u64 {
                let bit = h1.wrapping_add(i.wrapping_mul(h2)) % num_bits;
                bits[(bit / 8) as usize] |= 1 << (bit % 8);
            }
        }
        BloomFilter {
            bits,
            num_bits,
            hash_count,
        }
    }

    pub fn may_contain(&self, key: KeyInt) -> bool {
        if self.num_bits == 0 {
            return false;
        }
        let (h1, h2) = key_hash(key);
        (0..self.hash_count as u64).all(|i| {
            let bit = h1.wrapping_add(i.wrapping_mul(h2)) % self.num_bits;
            self.bits[(bit / 8) as usize] & (1 << (bit % 8)) != 0
        })
    }

    pub fn hash_count(&self) -> u32 {
        self.hash_count
    }

    pub fn num_bits(&self) -> u64 {
        self.num_bits
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.hash_count.to_le_bytes());
        out.extend_from_slice(&self.num_bits.to_le_bytes());
        out.extend_from_slice(&self.bits);
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        if buf.len() < 12 {
            return Err(Error::corrupt("filter block truncated"));
        }
        let hash_count = u32::from_le_bytes(buf[0..4].try_into().unwrap());
        let num_bits = u64::from_le_bytes(buf[4..12].try_into().unwrap());
        let bits = buf[12..].to_vec();
        if bits.len() as u64 != num_bits.div_ceil(8) {
            return Err(Error::corrupt("filter block length mismatch"));
        }
        Ok(BloomFilter {
            bits,
            num_bits,
            hash_count,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_false_negatives() {
        let keys: Vec<KeyInt> = (0..5000u128).map(|i| i * 7919 + 13).collect();
        let f = BloomFilter::build(&keys, DEFAULT_BITS_PER_KEY, DEFAULT_HASH_COUNT);
        assert!(keys.iter().all(|&k| f.may_contain(k)));
    }

    #[test]
    fn false_positive_rate_under_two_percent() {
        let keys: Vec<KeyInt> = (0..10_000u128).map(|i| i * 2).collect();
        let f = BloomFilter::build(&keys, 10, 7);
        let fp = (0..10_000u128)
            .map(|i| i * 2 + 1)
            .filter(|&k| f.may_contain(k))
            .count();
        assert!((fp as f64) / 10_000.0 < 0.02, "fp rate {}", fp as f64 / 1e4);
    }

    #[test]
    fn empty_filter_rejects_everything() {
        let f = BloomFilter::build(&[], 10, 7);
        assert!(!f.may_contain(0));
        assert!(!f.may_contain(12345));
    }

    #[test]
    fn encode_roundtrip() {
        let f = BloomFilter::build(&[1, 2, 3], 10, 7);
        let mut buf = Vec::new();
        f.encode(&mut buf);
        assert_eq!(BloomFilter::decode(&buf).unwrap(), f);
        assert!(BloomFilter::decode(&buf[..buf.len() - 1]).is_err());
    }
}
