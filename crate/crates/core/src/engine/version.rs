use std::fs;
use std::io::ErrorKind;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use parking_lot::Mutex;

use crate::error::Result;
use crate::learner::LevelModel;
use crate::plr::{KeyInt, PlrModel};
use crate::table::{SSTableMeta, SstReader, NUM_LEVELS};

/// A live sstable: metadata, its cached contents and an optional model.
pub struct Table {
    pub meta: SSTableMeta,
    pub reader: SstReader,
    model: OnceLock<Arc<PlrModel>>,
    /// Guards the attach/retire race: a model is only published and
    /// persisted while this is false.
    deleted: Mutex<bool>,
    sst_path: PathBuf,
    model_path: PathBuf,
}

impl std::fmt::Debug for Table {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Table")
            .field("meta", &self.meta)
            .field("learned", &self.model.get().is_some())
            .finish()
    }
}

impl Table {
    pub(crate) fn new(
        meta: SSTableMeta,
        reader: SstReader,
        sst_path: PathBuf,
        model_path: PathBuf,
    ) -> Self {
        Table {
            meta,
            reader,
            model: OnceLock::new(),
            deleted: Mutex::new(false),
            sst_path,
            model_path,
        }
    }

    pub fn file_id(&self) -> u64 {
        self.meta.file_id
    }

    pub fn model(&self) -> Option<&Arc<PlrModel>> {
        self.model.get()
    }

    pub fn is_learned(&self) -> bool {
        self.model.get().is_some()
    }

    pub fn is_deleted(&self) -> bool {
        *self.deleted.lock()
    }

    pub fn model_path(&self) -> &PathBuf {
        &self.model_path
    }

    /// Publishes `model` and writes its sidecar file. Returns `false` when
    /// the table was already retired or already had a model.
    pub(crate) fn attach_model(&self, model: PlrModel, persist: bool) -> Result<bool> {
        let deleted = self.deleted.lock();
        if *deleted || self.model.get().is_some() {
            return Ok(false);
        }
        if persist {
            fs::write(&self.model_path, model.serialize()?)?;
        }
        Ok(self.model.set(Arc::new(model)).is_ok())
    }

    /// Marks the table deleted and removes its files. Readers holding an
    /// older version keep working from the cached contents.
    pub(crate) fn retire(&self) -> Result<()> {
        let mut deleted = self.deleted.lock();
        *deleted = true;
        for p in [&self.model_path, &self.sst_path] {
            match fs::remove_file(p) {
                Err(e) if e.kind() != ErrorKind::NotFound => return Err(e.into()),
                _ => {}
            }
        }
        Ok(())
    }
}

/// Immutable snapshot of the live files per level. Replaced wholesale on
/// every edit; readers pin one for the duration of a request.
#[derive(Clone, Default)]
pub struct Version {
    /// L0 newest first; deeper levels sorted by `min_key` and disjoint.
    levels: [Vec<Arc<Table>>; NUM_LEVELS],
    generations: [u64; NUM_LEVELS],
    level_models: [Option<Arc<LevelModel>>; NUM_LEVELS],
}

impl Version {
    pub fn level(&self, level: usize) -> &[Arc<Table>] {
        &self.levels[level]
    }

    pub fn generation(&self, level: usize) -> u64 {
        self.generations[level]
    }

    pub fn level_model(&self, level: usize) -> Option<&Arc<LevelModel>> {
        self.level_models[level].as_ref()
    }

    pub fn level_bytes(&self, level: usize) -> u64 {
        self.levels[level].iter().map(|t| t.meta.file_size).sum()
    }

    pub fn level_records(&self, level: usize) -> u64 {
        self.levels[level].iter().map(|t| t.meta.record_count).sum()
    }

    pub fn file_count(&self) -> usize {
        self.levels.iter().map(|l| l.len()).sum()
    }

    pub fn tables(&self) -> impl Iterator<Item = &Arc<Table>> {
        self.levels.iter().flatten()
    }

    pub fn deepest_populated_level(&self) -> Option<usize> {
        (0..NUM_LEVELS).rev().find(|&l| !self.levels[l].is_empty())
    }

    /// Calls `f(table, index_in_level)` for every candidate file of `key`:
    /// overlapping L0 files newest first, then at most one file per deeper
    /// level. Stops early when `f` returns `true`.
    #[inline]
    pub(crate) fn visit_candidates(
        &self,
        key: KeyInt,
        mut f: impl FnMut(&Arc<Table>, usize) -> bool,
    ) {
        for (i, t) in self.levels[0].iter().enumerate() {
            if t.meta.contains(key) && f(t, i) {
                return;
            }
        }
        for files in &self.levels[1..] {
            let i = files.partition_point(|t| t.meta.max_key < key);
            if i < files.len() && files[i].meta.min_key <= key && f(&files[i], i) {
                return;
            }
        }
    }

    pub fn find_files(&self, key: KeyInt) -> Vec<Arc<Table>> {
        let mut out = Vec::new();
        self.visit_candidates(key, |t, _| {
            out.push(t.clone());
            false
        });
        out
    }

    /// True when no level deeper than `level` has a file overlapping `key`.
    pub(crate) fn is_base_level_for(&self, level: usize, key: KeyInt) -> bool {
        self.levels[level + 1..].iter().all(|files| {
            let i = files.partition_point(|t| t.meta.max_key < key);
            i == files.len() || files[i].meta.min_key > key
        })
    }

    pub(crate) fn overlapping(&self, level: usize, lo: KeyInt, hi: KeyInt) -> Vec<Arc<Table>> {
        self.levels[level]
            .iter()
            .filter(|t| t.meta.overlaps(lo, hi))
            .cloned()
            .collect()
    }

    /// New version with `added` inserted and `removed` dropped. Every level
    /// touched gets a new generation, which invalidates its level model.
    pub(crate) fn apply(&self, added: &[Arc<Table>], removed: &[u64]) -> Version {
        let mut v = self.clone();
        let mut touched = [false; NUM_LEVELS];
        for (level, touched) in v.levels.iter_mut().zip(touched.iter_mut()) {
            let before = level.len();
            level.retain(|t| !removed.contains(&t.meta.file_id));
            *touched = level.len() != before;
        }
        for t in added {
            let l = t.meta.level as usize;
            v.levels[l].push(t.clone());
            touched[l] = true;
        }
        for (l, _) in touched.iter().enumerate().filter(|(_, t)| **t) {
            if l == 0 {
                v.levels[0].sort_by_key(|t| std::cmp::Reverse(t.meta.max_seq));
            } else {
                v.levels[l].sort_by_key(|t| t.meta.min_key);
            }
            v.generations[l] += 1;
            v.level_models[l] = None;
        }
        v
    }

    /// Attaches a level model if the level is unchanged since training.
    pub(crate) fn with_level_model(&self, lm: Arc<LevelModel>) -> Option<Version> {
        let l = lm.level as usize;
        if self.generations[l] != lm.generation {
            return None;
        }
        let mut v = self.clone();
        v.level_models[l] = Some(lm);
        Some(v)
    }

    /// Level >= 1 files sorted and key-disjoint; every file nonempty.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for (l, files) in self.levels.iter().enumerate() {
            for t in files {
                if t.meta.record_count == 0 || t.meta.min_key > t.meta.max_key {
                    return Err(format!("bad bounds on file {}", t.meta.file_id));
                }
                if t.meta.level as usize != l {
                    return Err(format!("file {} filed under wrong level", t.meta.file_id));
                }
            }
            if l == 0 {
                if files
                    .windows(2)
                    .any(|w| w[0].meta.max_seq < w[1].meta.max_seq)
                {
                    return Err("L0 not newest-first".into());
                }
                continue;
            }
            if let Some(w) = files
                .windows(2)
                .find(|w| w[0].meta.max_key >= w[1].meta.min_key)
            {
                return Err(format!(
                    "level {l}: files {} and {} overlap or are unsorted",
                    w[0].meta.file_id, w[1].meta.file_id
                ));
            }
        }
        Ok(())
    }
}
