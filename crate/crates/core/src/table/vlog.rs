//! Append-only value log. Record layout:
//! `crc32 u32 | key (key_size bytes, big-endian) | value_len u32 | value`,
//! with the crc covering everything after itself.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::os::unix::fs::FileExt;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::Mutex;

use super::{decode_key, encode_key, validate_key_size, ValuePointer};
use crate::error::{Error, Result};
use crate::plr::KeyInt;

const WRITE_BUFFER: usize = 256 * 1024;

struct Tail {
    file: File,
    /// Bytes appended but not yet written to the file.
    buf: Vec<u8>,
}

/// Single-writer value log. Readers may run concurrently with the writer:
/// committed bytes are read with positioned reads, the unflushed tail is
/// served from memory.
pub struct Vlog {
    file_id: u32,
    key_size: usize,
    reader: File,
    tail: Mutex<Tail>,
    /// Bytes durable in the file.
    flushed: AtomicU64,
    /// Total logical length including the in-memory tail.
    len: AtomicU64,
}

impl Vlog {
    pub fn open(path: &Path, file_id: u32, key_size: usize) -> Result<Vlog> {
        validate_key_size(key_size)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .read(true)
            .open(path)?;
        let reader = File::open(path)?;
        let len = file.metadata()?.len();
        Ok(Vlog {
            file_id,
            key_size,
            reader,
            tail: Mutex::new(Tail {
                file,
                buf: Vec::with_capacity(WRITE_BUFFER),
            }),
            flushed: AtomicU64::new(len),
            len: AtomicU64::new(len),
        })
    }

    pub fn file_id(&self) -> u32 {
        self.file_id
    }

    pub fn len(&self) -> u64 {
        self.len.load(Ordering::Acquire)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn record_len(&self, value_len: usize) -> u64 {
        (4 + self.key_size + 4 + value_len) as u64
    }

    pub fn append(&self, key: KeyInt, value: &[u8]) -> Result<ValuePointer> {
        if value.len() >= u32::MAX as usize {
            return Err(Error::invalid("value too large for the value log"));
        }
        let mut tail = self.tail.lock();
        let offset = self.len.load(Ordering::Acquire);
        let start = tail.buf.len();
        tail.buf.extend_from_slice(&[0u8; 4]);
        let mut kb = [0u8; 16];
        encode_key(key, self.key_size, &mut kb);
        tail.buf.extend_from_slice(&kb[..self.key_size]);
        tail.buf
            .extend_from_slice(&(value.len() as u32).to_le_bytes());
        tail.buf.extend_from_slice(value);
        let crc = crc32fast::hash(&tail.buf[start + 4..]);
        tail.buf[start..start + 4].copy_from_slice(&crc.to_le_bytes());
        self.len
            .store(offset + self.record_len(value.len()), Ordering::Release);
        if tail.buf.len() >= WRITE_BUFFER {
            self.flush_locked(&mut tail)?;
        }
        Ok(ValuePointer {
            vlog_file_id: self.file_id,
            offset,
            length: value.len() as u32,
            flags: 0,
        })
    }

    fn flush_locked(&self, tail: &mut Tail) -> Result<()> {
        if tail.buf.is_empty() {
            return Ok(());
        }
        tail.file.write_all(&tail.buf)?;
        let flushed = self.flushed.load(Ordering::Acquire) + tail.buf.len() as u64;
        self.flushed.store(flushed, Ordering::Release);
        tail.buf.clear();
        Ok(())
    }

    /// Writes the in-memory tail to the file.
    pub fn flush(&self) -> Result<()> {
        let mut tail = self.tail.lock();
        self.flush_locked(&mut tail)
    }

    pub fn sync(&self) -> Result<()> {
        let mut tail = self.tail.lock();
        self.flush_locked(&mut tail)?;
        tail.file.sync_data()?;
        Ok(())
    }

    pub fn read(&self, ptr: &ValuePointer) -> Result<(KeyInt, Vec<u8>)> {
        let invalid = || Error::InvalidPointer {
            file_id: ptr.vlog_file_id,
            offset: ptr.offset,
            length: ptr.length,
        };
        if ptr.is_tombstone() || ptr.vlog_file_id != self.file_id {
            return Err(invalid());
        }
        let rec_len = self.record_len(ptr.length as usize);
        let end = ptr.offset.checked_add(rec_len).ok_or_else(invalid)?;
        if end > self.len() {
            return Err(invalid());
        }
        let mut rec = vec![0u8; rec_len as usize];
        if end <= self.flushed.load(Ordering::Acquire) {
            self.reader.read_exact_at(&mut rec, ptr.offset)?;
        } else {
            let tail = self.tail.lock();
            let flushed = self.flushed.load(Ordering::Acquire);
            if ptr.offset >= flushed {
                let s = (ptr.offset - flushed) as usize;
                rec.copy_from_slice(&tail.buf[s..s + rec_len as usize]);
            } else {
                // Straddles the flush point.
                let head = (flushed - ptr.offset) as usize;
                self.reader.read_exact_at(&mut rec[..head], ptr.offset)?;
                rec[head..].copy_from_slice(&tail.buf[..rec_len as usize - head]);
            }
        }
        self.decode_record(&rec, ptr)
    }

    fn decode_record(&self, rec: &[u8], ptr: &ValuePointer) -> Result<(KeyInt, Vec<u8>)> {
        let crc = u32::from_le_bytes(rec[0..4].try_into().unwrap());
        if crc32fast::hash(&rec[4..]) != crc {
            return Err(Error::corrupt(format!(
                "value log record at offset {} fails checksum",
                ptr.offset
            )));
        }
        let ks = self.key_size;
        let key = decode_key(&rec[4..4 + ks]);
        let vlen = u32::from_le_bytes(rec[4 + ks..8 + ks].try_into().unwrap());
        if vlen != ptr.length {
            return Err(Error::corrupt("value length disagrees with pointer"));
        }
        Ok((key, rec[8 + ks..].to_vec()))
    }
}

impl Drop for Vlog {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}
