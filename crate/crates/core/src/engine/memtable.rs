use std::collections::BTreeMap;
use std::ops::RangeFrom;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use parking_lot::{RwLock, RwLockReadGuard};

use crate::plr::KeyInt;
use crate::table::ValuePointer;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemEntry {
    pub ptr: ValuePointer,
    pub seq: u64,
}

/// Sorted in-memory buffer of the newest writes.
pub struct MemTable {
    map: RwLock<BTreeMap<KeyInt, MemEntry>>,
    record_size: usize,
    bytes: AtomicUsize,
    max_seq: AtomicU64,
}

impl MemTable {
    pub fn new(record_size: usize) -> Self {
        MemTable {
            map: RwLock::new(BTreeMap::new()),
            record_size,
            bytes: AtomicUsize::new(0),
            max_seq: AtomicU64::new(0),
        }
    }

    pub fn insert(&self, key: KeyInt, ptr: ValuePointer, seq: u64) {
        let mut m = self.map.write();
        if m.insert(key, MemEntry { ptr, seq }).is_none() {
            self.bytes.fetch_add(self.record_size, Ordering::Relaxed);
        }
        self.max_seq.fetch_max(seq, Ordering::Relaxed);
    }

    pub fn get(&self, key: KeyInt) -> Option<MemEntry> {
        self.map.read().get(&key).copied()
    }

    /// Approximate flushed size: one fixed-size record per distinct key.
    pub fn approx_bytes(&self) -> usize {
        self.bytes.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.map.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.read().is_empty()
    }

    pub fn max_seq(&self) -> u64 {
        self.max_seq.load(Ordering::Relaxed)
    }

    pub fn key_bounds(&self) -> Option<(KeyInt, KeyInt)> {
        let m = self.map.read();
        Some((*m.keys().next()?, *m.keys().next_back()?))
    }

    /// Sorted `(key, pointer)` snapshot, newest version of each key.
    pub fn records(&self) -> Vec<(KeyInt, ValuePointer)> {
        self.map.read().iter().map(|(k, e)| (*k, e.ptr)).collect()
    }

    pub(crate) fn read(&self) -> MemReadGuard<'_> {
        MemReadGuard(self.map.read())
    }
}

pub(crate) struct MemReadGuard<'a>(RwLockReadGuard<'a, BTreeMap<KeyInt, MemEntry>>);

impl MemReadGuard<'_> {
    pub(crate) fn range(
        &self,
        r: RangeFrom<KeyInt>,
    ) -> impl Iterator<Item = (KeyInt, ValuePointer)> + '_ {
        self.0.range(r).map(|(k, e)| (*k, e.ptr))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(o: u64) -> ValuePointer {
        ValuePointer {
            vlog_file_id: 1,
            offset: o,
            length: 1,
            flags: 0,
        }
    }

    #[test]
    fn newest_write_wins_and_size_counts_distinct_keys() {
        let m = MemTable::new(32);
        m.insert(5, p(1), 1);
        m.insert(5, p(2), 2);
        m.insert(3, p(3), 3);
        assert_eq!(m.get(5).unwrap().ptr, p(2));
        assert_eq!(m.approx_bytes(), 64);
        assert_eq!(m.records(), vec![(3, p(3)), (5, p(2))]);
        assert_eq!(m.key_bounds(), Some((3, 5)));
        assert_eq!(m.max_seq(), 3);
    }
}
