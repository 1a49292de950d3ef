//! Manifest: an append-only log of version edits.
//!
//! Each record is `len u32 | crc32 u32 | payload` where the crc covers the
//! payload. Replay applies edits in order and stops at the first truncated
//! or corrupt record.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::Path;

use super::{SSTableMeta, NUM_LEVELS};
use crate::error::{Error, Result};

const TAG_ADD: u8 = 1;
const TAG_DELETE: u8 = 2;
const TAG_KEY_SIZE: u8 = 3;
const TAG_NEXT_FILE: u8 = 4;
const TAG_LAST_SEQ: u8 = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VersionEdit {
    AddFile(SSTableMeta),
    DeleteFile { file_id: u64, level: u8 },
    KeySize(u32),
    NextFileId(u64),
    LastSequence(u64),
}

impl VersionEdit {
    fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(80);
        match self {
            VersionEdit::AddFile(m) => {
                b.push(TAG_ADD);
                b.extend_from_slice(&m.file_id.to_le_bytes());
                b.push(m.level);
                b.extend_from_slice(&m.min_key.to_le_bytes());
                b.extend_from_slice(&m.max_key.to_le_bytes());
                b.extend_from_slice(&m.record_count.to_le_bytes());
                b.extend_from_slice(&m.created_at.to_le_bytes());
                b.extend_from_slice(&m.max_seq.to_le_bytes());
                b.extend_from_slice(&m.file_size.to_le_bytes());
            }
            VersionEdit::DeleteFile { file_id, level } => {
                b.push(TAG_DELETE);
                b.extend_from_slice(&file_id.to_le_bytes());
                b.push(*level);
            }
            VersionEdit::KeySize(k) => {
                b.push(TAG_KEY_SIZE);
                b.extend_from_slice(&k.to_le_bytes());
            }
            VersionEdit::NextFileId(n) => {
                b.push(TAG_NEXT_FILE);
                b.extend_from_slice(&n.to_le_bytes());
            }
            VersionEdit::LastSequence(s) => {
                b.push(TAG_LAST_SEQ);
                b.extend_from_slice(&s.to_le_bytes());
            }
        }
        b
    }

    fn decode(p: &[u8]) -> Result<VersionEdit> {
        let bad = || Error::corrupt("malformed manifest edit");
        let u64_at = |o: usize| -> Result<u64> {
            Ok(u64::from_le_bytes(
                p.get(o..o + 8).ok_or_else(bad)?.try_into().unwrap(),
            ))
        };
        let u128_at = |o: usize| -> Result<u128> {
            Ok(u128::from_le_bytes(
                p.get(o..o + 16).ok_or_else(bad)?.try_into().unwrap(),
            ))
        };
        let edit = match *p.first().ok_or_else(bad)? {
            TAG_ADD if p.len() == 1 + 8 + 1 + 16 + 16 + 8 * 4 => {
                VersionEdit::AddFile(SSTableMeta {
                    file_id: u64_at(1)?,
                    level: p[9],
                    min_key: u128_at(10)?,
                    max_key: u128_at(26)?,
                    record_count: u64_at(42)?,
                    created_at: u64_at(50)?,
                    max_seq: u64_at(58)?,
                    file_size: u64_at(66)?,
                })
            }
            TAG_DELETE if p.len() == 10 => VersionEdit::DeleteFile {
                file_id: u64_at(1)?,
                level: p[9],
            },
            TAG_KEY_SIZE if p.len() == 5 => {
                VersionEdit::KeySize(u32::from_le_bytes(p[1..5].try_into().unwrap()))
            }
            TAG_NEXT_FILE if p.len() == 9 => VersionEdit::NextFileId(u64_at(1)?),
            TAG_LAST_SEQ if p.len() == 9 => VersionEdit::LastSequence(u64_at(1)?),
            _ => return Err(bad()),
        };
        Ok(edit)
    }
}

/// Live files per level plus the store-wide counters recorded in the manifest.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ManifestState {
    pub levels: Vec<BTreeMap<u64, SSTableMeta>>,
    pub key_size: Option<u32>,
    pub next_file_id: u64,
    pub last_sequence: u64,
}

impl ManifestState {
    pub fn new() -> Self {
        ManifestState {
            levels: vec![BTreeMap::new(); NUM_LEVELS],
            key_size: None,
            next_file_id: 1,
            last_sequence: 0,
        }
    }

    pub fn apply(&mut self, edit: &VersionEdit) -> Result<()> {
        match edit {
            VersionEdit::AddFile(m) => {
                let level = m.level as usize;
                if level >= NUM_LEVELS {
                    return Err(Error::corrupt(format!("level {level} out of range")));
                }
                self.levels[level].insert(m.file_id, m.clone());
                self.next_file_id = self.next_file_id.max(m.file_id + 1);
            }
            VersionEdit::DeleteFile { file_id, level } => {
                let level = *level as usize;
                if level >= NUM_LEVELS {
                    return Err(Error::corrupt(format!("level {level} out of range")));
                }
                self.levels[level].remove(file_id);
            }
            VersionEdit::KeySize(k) => self.key_size = Some(*k),
            VersionEdit::NextFileId(n) => self.next_file_id = self.next_file_id.max(*n),
            VersionEdit::LastSequence(s) => self.last_sequence = self.last_sequence.max(*s),
        }
        Ok(())
    }

    pub fn file_count(&self) -> usize {
        self.levels.iter().map(|l| l.len()).sum()
    }
}

pub struct Manifest {
    file: File,
}

impl Manifest {
    /// Replays an existing manifest (if any), truncates a torn tail, and
    /// opens it for appending.
    pub fn open(path: &Path) -> Result<(Manifest, ManifestState)> {
        let (state, valid_len) = if path.exists() {
            replay_with_len(path)?
        } else {
            (ManifestState::new(), 0)
        };
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(path)?;
        file.set_len(valid_len)?;
        drop(file);
        let file = OpenOptions::new().append(true).open(path)?;
        Ok((Manifest { file }, state))
    }

    pub fn append(&mut self, edits: &[VersionEdit]) -> Result<()> {
        let mut buf = Vec::new();
        for e in edits {
            let payload = e.encode();
            buf.extend_from_slice(&(payload.len() as u32).to_le_bytes());
            buf.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
            buf.extend_from_slice(&payload);
        }
        self.file.write_all(&buf)?;
        self.file.sync_data()?;
        Ok(())
    }
}

/// Rebuilds the live-file state from the manifest at `path`.
pub fn manifest_replay(path: &Path) -> Result<ManifestState> {
    Ok(replay_with_len(path)?.0)
}

fn replay_with_len(path: &Path) -> Result<(ManifestState, u64)> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let mut state = ManifestState::new();
    let mut off = 0usize;
    while off + 8 <= bytes.len() {
        let len = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
        let crc = u32::from_le_bytes(bytes[off + 4..off + 8].try_into().unwrap());
        let Some(payload) = bytes.get(off + 8..off + 8 + len) else {
            break;
        };
        if crc32fast::hash(payload) != crc {
            break;
        }
        let Ok(edit) = VersionEdit::decode(payload) else {
            break;
        };
        state.apply(&edit)?;
        off += 8 + len;
    }
    if off < bytes.len() {
        log::warn!(
            "manifest {}: ignoring {} trailing bytes",
            path.display(),
            bytes.len() - off
        );
    }
    Ok((state, off as u64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn meta(id: u64, level: u8) -> SSTableMeta {
        SSTableMeta {
            file_id: id,
            level,
            min_key: id as u128 * 10,
            max_key: id as u128 * 10 + 9,
            record_count: 10,
            created_at: id * 1000,
            max_seq: id,
            file_size: 4096,
        }
    }

    #[test]
    fn empty_manifest_gives_empty_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("MANIFEST");
        let (_m, state) = Manifest::open(&path).unwrap();
        assert_eq!(state.file_count(), 0);
        assert_eq!(manifest_replay(&path).unwrap().file_count(), 0);
    }

    #[test]
    fn add_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("MANIFEST");
        let (mut m, _) = Manifest::open(&path).unwrap();
        m.append(&[VersionEdit::KeySize(16), VersionEdit::AddFile(meta(3, 1))])
            .unwrap();
        let s = manifest_replay(&path).unwrap();
        assert_eq!(s.levels[1].get(&3), Some(&meta(3, 1)));
        assert_eq!(s.key_size, Some(16));
        assert_eq!(s.next_file_id, 4);
    }

    #[test]
    fn truncated_tail_stops_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("MANIFEST");
        let (mut m, _) = Manifest::open(&path).unwrap();
        m.append(&[VersionEdit::AddFile(meta(1, 0))]).unwrap();
        m.append(&[VersionEdit::AddFile(meta(2, 0))]).unwrap();
        drop(m);
        let len = std::fs::metadata(&path).unwrap().len();
        let f = OpenOptions::new().write(true).open(&path).unwrap();
        f.set_len(len - 5).unwrap();
        drop(f);
        let (mut m, s) = Manifest::open(&path).unwrap();
        assert_eq!(s.levels[0].len(), 1);
        // appends after a torn tail are readable
        m.append(&[VersionEdit::AddFile(meta(4, 2))]).unwrap();
        let s = manifest_replay(&path).unwrap();
        assert_eq!(s.file_count(), 2);
    }

    #[test]
    fn random_edit_sequence_matches_map_oracle() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("MANIFEST");
        let (mut m, _) = Manifest::open(&path).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let mut oracle: BTreeMap<(u8, u64), SSTableMeta> = BTreeMap::new();
        for _ in 0..1000 {
            let id = rng.random_range(0..200u64);
            let level = rng.random_range(0..NUM_LEVELS as u8);
            let edit = if rng.random_bool(0.6) {
                oracle.insert((level, id), meta(id, level));
                VersionEdit::AddFile(meta(id, level))
            } else {
                oracle.remove(&(level, id));
                VersionEdit::DeleteFile { file_id: id, level }
            };
            m.append(&[edit]).unwrap();
        }
        let s = manifest_replay(&path).unwrap();
        let replayed: BTreeMap<(u8, u64), SSTableMeta> = s
            .levels
            .iter()
            .enumerate()
            .flat_map(|(l, files)| files.iter().map(move |(id, m)| ((l as u8, *id), m.clone())))
            .collect();
        assert_eq!(replayed, oracle);
    }
}
