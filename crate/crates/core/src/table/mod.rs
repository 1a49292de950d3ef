//! On-disk encodings: sstables of fixed-size `(key, value pointer)` records,
//! the value log, and the manifest.

pub mod bloom;
pub mod manifest;
pub mod sstable;
pub mod vlog;

use crate::error::{Error, Result};
use crate::plr::KeyInt;

pub use bloom::BloomFilter;
pub use manifest::{Manifest, ManifestState, VersionEdit};
pub use sstable::{build_sstable, Chunk, SstReader, BLOCK_SIZE};
pub use vlog::Vlog;

pub const DEFAULT_KEY_SIZE: usize = 16;
pub const MAX_KEY_SIZE: usize = 16;
pub const VALUE_POINTER_LEN: usize = 16;
pub const NUM_LEVELS: usize = 7;

const TOMBSTONE: u8 = 0b1;
const OFFSET_BITS: u32 = 56;
const OFFSET_MASK: u64 = (1 << OFFSET_BITS) - 1;

/// Location of a value in the value log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ValuePointer {
    pub vlog_file_id: u32,
    pub offset: u64,
    pub length: u32,
    pub flags: u8,
}

impl ValuePointer {
    pub fn tombstone() -> Self {
        ValuePointer {
            vlog_file_id: 0,
            offset: 0,
            length: 0,
            flags: TOMBSTONE,
        }
    }

    pub fn is_tombstone(&self) -> bool {
        self.flags & TOMBSTONE != 0
    }

    /// 16 bytes: file id u32 | offset u56 with flags in the top byte | length u32.
    pub fn encode(&self, out: &mut [u8]) {
        debug_assert!(self.offset <= OFFSET_MASK);
        out[0..4].copy_from_slice(&self.vlog_file_id.to_le_bytes());
        let packed = (self.offset & OFFSET_MASK) | ((self.flags as u64) << OFFSET_BITS);
        out[4..12].copy_from_slice(&packed.to_le_bytes());
        out[12..16].copy_from_slice(&self.length.to_le_bytes());
    }

    pub fn decode(buf: &[u8]) -> Self {
        let packed = u64::from_le_bytes(buf[4..12].try_into().unwrap());
        ValuePointer {
            vlog_file_id: u32::from_le_bytes(buf[0..4].try_into().unwrap()),
            offset: packed & OFFSET_MASK,
            length: u32::from_le_bytes(buf[12..16].try_into().unwrap()),
            flags: (packed >> OFFSET_BITS) as u8,
        }
    }
}

pub fn validate_key_size(key_size: usize) -> Result<()> {
    if key_size == 0 || key_size > MAX_KEY_SIZE {
        return Err(Error::invalid(format!(
            "key size {key_size} outside 1..={MAX_KEY_SIZE}"
        )));
    }
    Ok(())
}

pub fn record_size(key_size: usize) -> usize {
    key_size + VALUE_POINTER_LEN
}

/// Interprets a big-endian key of exactly `key_size` bytes.
pub fn key_from_bytes(bytes: &[u8], key_size: usize) -> Result<KeyInt> {
    if bytes.len() != key_size {
        return Err(Error::invalid(format!(
            "key is {} bytes, store uses {key_size}",
            bytes.len()
        )));
    }
    Ok(decode_key(bytes))
}

#[inline]
pub(crate) fn decode_key(bytes: &[u8]) -> KeyInt {
    let mut buf = [0u8; 16];
    buf[16 - bytes.len()..].copy_from_slice(bytes);
    u128::from_be_bytes(buf)
}

#[inline]
pub(crate) fn encode_key(key: KeyInt, key_size: usize, out: &mut [u8]) {
    out[..key_size].copy_from_slice(&key.to_be_bytes()[16 - key_size..]);
}

pub fn key_to_bytes(key: KeyInt, key_size: usize) -> Vec<u8> {
    key.to_be_bytes()[16 - key_size..].to_vec()
}

/// Largest key representable in `key_size` bytes.
pub fn max_key_for(key_size: usize) -> KeyInt {
    if key_size >= 16 {
        u128::MAX
    } else {
        (1u128 << (8 * key_size)) - 1
    }
}

/// Immutable metadata of one sstable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SSTableMeta {
    pub file_id: u64,
    pub level: u8,
    pub min_key: KeyInt,
    pub max_key: KeyInt,
    pub record_count: u64,
    /// Nanoseconds on the store clock.
    pub created_at: u64,
    /// Highest sequence number of any record in the file; orders L0 files.
    pub max_seq: u64,
    pub file_size: u64,
}

impl SSTableMeta {
    pub fn contains(&self, key: KeyInt) -> bool {
        self.min_key <= key && key <= self.max_key
    }

    pub fn overlaps(&self, lo: KeyInt, hi: KeyInt) -> bool {
        self.min_key <= hi && lo <= self.max_key
    }
}

pub fn sst_file_name(file_id: u64) -> String {
    format!("{file_id:06}.sst")
}

pub fn model_file_name(file_id: u64) -> String {
    format!("{file_id:06}.model")
}

pub fn vlog_file_name(file_id: u32) -> String {
    format!("{file_id:06}.vlog")
}
