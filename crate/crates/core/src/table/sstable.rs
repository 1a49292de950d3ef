//! Sstable layout:
//!
//! ```text
//! [data blocks][index block][filter block][footer]
//! footer = index_off u64 | index_len u32 | filter_off u64 | filter_len u32 | "BSST"
//! ```
//!
//! Data blocks hold fixed-size records packed back to back, so record `i`
//! always starts at byte `i * record_size`. The index block stores the key
//! size, then `(last_key, offset u64, size u32)` per block, then a crc32.
//! The filter block is an encoded [`BloomFilter`] followed by a crc32.

use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use super::bloom::{BloomFilter, DEFAULT_BITS_PER_KEY, DEFAULT_HASH_COUNT};
use super::{decode_key, encode_key, record_size, validate_key_size, SSTableMeta, ValuePointer};
use crate::error::{Error, Result};
use crate::plr::KeyInt;

pub const BLOCK_SIZE: usize = 4096;
pub const SST_MAGIC: &[u8; 4] = b"BSST";
pub const FOOTER_LEN: usize = 8 + 4 + 8 + 4 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexEntry {
    pub last_key: KeyInt,
    pub offset: u64,
    pub size: u32,
}

pub fn records_per_block(record_size: usize) -> usize {
    (BLOCK_SIZE / record_size).max(1)
}

/// Encodes a full sstable image from strictly ascending records.
pub fn encode_sstable(key_size: usize, records: &[(KeyInt, ValuePointer)]) -> Result<Vec<u8>> {
    validate_key_size(key_size)?;
    if records.is_empty() {
        return Err(Error::invalid("sstable needs at least one record"));
    }
    if let Some(i) = records.windows(2).position(|w| w[0].0 >= w[1].0) {
        return Err(Error::invalid(format!(
            "sstable records not strictly ascending at index {}",
            i + 1
        )));
    }
    let rs = record_size(key_size);
    let rpb = records_per_block(rs);
    let data_len = records.len() * rs;
    let mut buf = vec![0u8; data_len];
    for (i, (k, p)) in records.iter().enumerate() {
        let rec = &mut buf[i * rs..(i + 1) * rs];
        encode_key(*k, key_size, rec);
        p.encode(&mut rec[key_size..]);
    }

    let index_off = buf.len() as u64;
    buf.extend_from_slice(&(key_size as u32).to_le_bytes());
    let block_count = records.len().div_ceil(rpb);
    buf.extend_from_slice(&(block_count as u32).to_le_bytes());
    let mut key_buf = [0u8; 16];
    for b in 0..block_count {
        let first = b * rpb;
        let last = ((b + 1) * rpb).min(records.len()) - 1;
        encode_key(records[last].0, key_size, &mut key_buf);
        buf.extend_from_slice(&key_buf[..key_size]);
        buf.extend_from_slice(&((first * rs) as u64).to_le_bytes());
        buf.extend_from_slice(&(((last - first + 1) * rs) as u32).to_le_bytes());
    }
    let crc = crc32fast::hash(&buf[index_off as usize..]);
    buf.extend_from_slice(&crc.to_le_bytes());
    let index_len = buf.len() as u64 - index_off;

    let filter_off = buf.len() as u64;
    let keys: Vec<KeyInt> = records.iter().map(|r| r.0).collect();
    BloomFilter::build(&keys, DEFAULT_BITS_PER_KEY, DEFAULT_HASH_COUNT).encode(&mut buf);
    let crc = crc32fast::hash(&buf[filter_off as usize..]);
    buf.extend_from_slice(&crc.to_le_bytes());
    let filter_len = buf.len() as u64 - filter_off;

    buf.extend_from_slice(&index_off.to_le_bytes());
    buf.extend_from_slice(&(index_len as u32).to_le_bytes());
    buf.extend_from_slice(&filter_off.to_le_bytes());
    buf.extend_from_slice(&(filter_len as u32).to_le_bytes());
    buf.extend_from_slice(SST_MAGIC);
    Ok(buf)
}

/// Writes an sstable to `path` and returns its metadata together with an
/// open reader over the written bytes.
#[allow(clippy::too_many_arguments)]
pub fn build_sstable(
    path: &Path,
    file_id: u64,
    level: u8,
    key_size: usize,
    records: &[(KeyInt, ValuePointer)],
    created_at: u64,
    max_seq: u64,
) -> Result<(SSTableMeta, SstReader)> {
    let bytes = encode_sstable(key_size, records)?;
    let mut f = File::create(path)?;
    f.write_all(&bytes)?;
    f.sync_data()?;
    let meta = SSTableMeta {
        file_id,
        level,
        min_key: records[0].0,
        max_key: records[records.len() - 1].0,
        record_count: records.len() as u64,
        created_at,
        max_seq,
        file_size: bytes.len() as u64,
    };
    Ok((meta, SstReader::from_bytes(bytes)?))
}

/// A contiguous run of records loaded from one sstable.
#[derive(Debug, Clone)]
pub struct Chunk {
    pub first: u64,
    key_size: usize,
    record_size: usize,
    bytes: Vec<u8>,
}

impl Chunk {
    pub fn len(&self) -> usize {
        self.bytes.len() / self.record_size
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn byte_len(&self) -> usize {
        self.bytes.len()
    }

    #[inline]
    pub fn key_at(&self, i: usize) -> KeyInt {
        let o = i * self.record_size;
        decode_key(&self.bytes[o..o + self.key_size])
    }

    #[inline]
    pub fn pointer_at(&self, i: usize) -> ValuePointer {
        let o = i * self.record_size + self.key_size;
        ValuePointer::decode(&self.bytes[o..o + 16])
    }

    /// Binary search for `key`; returns the record's file position.
    pub fn search(&self, key: KeyInt) -> Option<(u64, ValuePointer)> {
        let (mut lo, mut hi) = (0usize, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            let k = self.key_at(mid);
            if k < key {
                lo = mid + 1;
            } else if k > key {
                hi = mid;
            } else {
                return Some((self.first + mid as u64, self.pointer_at(mid)));
            }
        }
        None
    }

    /// Checks the record at file position `hint` first and falls back to a
    /// binary search. The second element counts binary-search probes.
    pub fn locate(&self, key: KeyInt, hint: u64) -> (Option<(u64, ValuePointer)>, u32) {
        let len = self.len();
        if hint >= self.first && ((hint - self.first) as usize) < len {
            let i = (hint - self.first) as usize;
            if self.key_at(i) == key {
                return (Some((hint, self.pointer_at(i))), 0);
            }
        }
        let (mut lo, mut hi) = (0usize, len);
        let mut probes = 0;
        while lo < hi {
            probes += 1;
            let mid = (lo + hi) / 2;
            let k = self.key_at(mid);
            if k < key {
                lo = mid + 1;
            } else if k > key {
                hi = mid;
            } else {
                return (
                    Some((self.first + mid as u64, self.pointer_at(mid))),
                    probes,
                );
            }
        }
        (None, probes)
    }
}

#[derive(Debug)]
pub struct SstReader {
    data: Vec<u8>,
    key_size: usize,
    record_size: usize,
    record_count: u64,
    records_per_block: usize,
    index: Vec<IndexEntry>,
    filter: BloomFilter,
}

impl SstReader {
    pub fn open(path: &Path) -> Result<Self> {
        Self::from_bytes(fs::read(path)?)
    }

    pub fn from_bytes(data: Vec<u8>) -> Result<Self> {
        if data.len() < FOOTER_LEN {
            return Err(Error::corrupt("sstable shorter than footer"));
        }
        let f = &data[data.len() - FOOTER_LEN..];
        if &f[24..28] != SST_MAGIC {
            return Err(Error::corrupt("bad sstable magic"));
        }
        let index_off = u64::from_le_bytes(f[0..8].try_into().unwrap()) as usize;
        let index_len = u32::from_le_bytes(f[8..12].try_into().unwrap()) as usize;
        let filter_off = u64::from_le_bytes(f[12..20].try_into().unwrap()) as usize;
        let filter_len = u32::from_le_bytes(f[20..24].try_into().unwrap()) as usize;
        let body_end = data.len() - FOOTER_LEN;
        if index_off + index_len != filter_off
            || filter_off + filter_len != body_end
            || index_len < 12
            || filter_len < 4
        {
            return Err(Error::corrupt("sstable footer offsets inconsistent"));
        }

        let index_block = checked_block(&data[index_off..filter_off], "index")?;
        let key_size = u32::from_le_bytes(index_block[0..4].try_into().unwrap()) as usize;
        validate_key_size(key_size).map_err(|_| Error::corrupt("bad key size in index"))?;
        let block_count = u32::from_le_bytes(index_block[4..8].try_into().unwrap()) as usize;
        let entry_len = key_size + 12;
        if index_block.len() != 8 + block_count * entry_len {
            return Err(Error::corrupt("index block length mismatch"));
        }
        let rs = record_size(key_size);
        if !index_off.is_multiple_of(rs) {
            return Err(Error::corrupt("data section not a multiple of record size"));
        }
        let mut index = Vec::with_capacity(block_count);
        let mut expect_off = 0u64;
        for b in 0..block_count {
            let e = &index_block[8 + b * entry_len..8 + (b + 1) * entry_len];
            let entry = IndexEntry {
                last_key: decode_key(&e[..key_size]),
                offset: u64::from_le_bytes(e[key_size..key_size + 8].try_into().unwrap()),
                size: u32::from_le_bytes(e[key_size + 8..key_size + 12].try_into().unwrap()),
            };
            if entry.offset != expect_off
                || !(entry.size as usize).is_multiple_of(rs)
                || entry.size == 0
            {
                return Err(Error::corrupt("index entry does not tile the data section"));
            }
            expect_off += entry.size as u64;
            index.push(entry);
        }
        if expect_off as usize != index_off || index.is_empty() {
            return Err(Error::corrupt("index does not cover the data section"));
        }

        let filter = BloomFilter::decode(checked_block(&data[filter_off..body_end], "filter")?)?;
        let mut data = data;
        data.truncate(index_off);
        data.shrink_to_fit();
        Ok(SstReader {
            record_count: (index_off / rs) as u64,
            records_per_block: records_per_block(rs),
            data,
            key_size,
            record_size: rs,
            index,
            filter,
        })
    }

    pub fn key_size(&self) -> usize {
        self.key_size
    }

    pub fn record_size(&self) -> usize {
        self.record_size
    }

    pub fn record_count(&self) -> u64 {
        self.record_count
    }

    pub fn data_len(&self) -> usize {
        self.data.len()
    }

    pub fn index(&self) -> &[IndexEntry] {
        &self.index
    }

    pub fn filter(&self) -> &BloomFilter {
        &self.filter
    }

    pub fn block_count(&self) -> usize {
        self.index.len()
    }

    /// Index of the first block whose last key is `>= key`, or `None` when
    /// the key is past the end of the file.
    pub fn search_index_block(&self, key: KeyInt) -> Option<usize> {
        let b = self.index.partition_point(|e| e.last_key < key);
        (b < self.index.len()).then_some(b)
    }

    pub fn may_contain(&self, key: KeyInt) -> bool {
        self.filter.may_contain(key)
    }

    /// Copies one whole data block out of the file.
    pub fn load_block(&self, block: usize) -> Chunk {
        let e = self.index[block];
        let start = e.offset as usize;
        Chunk {
            first: (start / self.record_size) as u64,
            key_size: self.key_size,
            record_size: self.record_size,
            bytes: self.data[start..start + e.size as usize].to_vec(),
        }
    }

    pub fn block_of_record(&self, pos: u64) -> usize {
        pos as usize / self.records_per_block
    }

    /// Loads records `lo..=hi`. Byte offsets come straight from the fixed
    /// record size; when the range crosses a block boundary the index block
    /// supplies each block's extent.
    pub fn load_block_range(&self, lo: u64, hi: u64) -> Result<Chunk> {
        if lo > hi || hi >= self.record_count {
            return Err(Error::invalid(format!(
                "record range {lo}..={hi} outside file of {} records",
                self.record_count
            )));
        }
        let rs = self.record_size as u64;
        let first_block = self.block_of_record(lo);
        let last_block = self.block_of_record(hi);
        let bytes = if first_block == last_block {
            self.data[(lo * rs) as usize..((hi + 1) * rs) as usize].to_vec()
        } else {
            let mut bytes = Vec::with_capacity(((hi - lo + 1) * rs) as usize);
            for b in first_block..=last_block {
                let e = self.index[b];
                let start = (e.offset).max(lo * rs) as usize;
                let end = (e.offset + e.size as u64).min((hi + 1) * rs) as usize;
                bytes.extend_from_slice(&self.data[start..end]);
            }
            bytes
        };
        Ok(Chunk {
            first: lo,
            key_size: self.key_size,
            record_size: self.record_size,
            bytes,
        })
    }

    #[inline]
    pub fn key_at(&self, pos: u64) -> KeyInt {
        let o = pos as usize * self.record_size;
        decode_key(&self.data[o..o + self.key_size])
    }

    #[inline]
    pub fn pointer_at(&self, pos: u64) -> ValuePointer {
        let o = pos as usize * self.record_size + self.key_size;
        ValuePointer::decode(&self.data[o..o + 16])
    }

    pub fn keys(&self) -> Vec<KeyInt> {
        (0..self.record_count).map(|i| self.key_at(i)).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (KeyInt, ValuePointer)> + '_ {
        (0..self.record_count).map(move |i| (self.key_at(i), self.pointer_at(i)))
    }

    /// Position of the first record with key `>= key` (may equal `record_count`).
    pub fn lower_bound(&self, key: KeyInt) -> u64 {
        match self.search_index_block(key) {
            None => self.record_count,
            Some(b) => {
                let chunk = self.load_block(b);
                let mut lo = 0usize;
                let mut hi = chunk.len();
                while lo < hi {
                    let mid = (lo + hi) / 2;
                    if chunk.key_at(mid) < key {
                        lo = mid + 1;
                    } else {
                        hi = mid;
                    }
                }
                chunk.first + lo as u64
            }
        }
    }

    /// Same as [`lower_bound`](Self::lower_bound) but starts from a predicted
    /// range that is known to bracket the answer when `key` is in the file.
    /// Falls back to the index when the bracket does not hold.
    pub fn lower_bound_in(&self, key: KeyInt, lo: u64, hi: u64) -> u64 {
        let before_ok = lo == 0 || self.key_at(lo - 1) < key;
        let after_ok = hi + 1 >= self.record_count || self.key_at(hi + 1) >= key;
        if !(before_ok && after_ok) {
            return self.lower_bound(key);
        }
        let (mut a, mut b) = (lo, hi + 1);
        while a < b {
            let mid = (a + b) / 2;
            if self.key_at(mid) < key {
                a = mid + 1;
            } else {
                b = mid;
            }
        }
        a
    }
}

fn checked_block<'a>(block: &'a [u8], what: &str) -> Result<&'a [u8]> {
    let (body, crc) = block.split_at(block.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().unwrap()) {
        return Err(Error::corrupt(format!("{what} block checksum mismatch")));
    }
    Ok(body)
}
