use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Instant;

use super::{Inner, Options, Table, Version};
use crate::error::Result;
use crate::plr::KeyInt;
use crate::table::{ValuePointer, VersionEdit, NUM_LEVELS};

pub(crate) type CompactPointers = [Option<KeyInt>; NUM_LEVELS];

/// Files chosen for one merge of `level` into `level + 1`.
#[derive(Debug, Clone)]
pub struct CompactionJob {
    pub level: usize,
    /// Files from `level`; for L0, newest first.
    pub inputs: Vec<Arc<Table>>,
    /// Overlapping files of `level + 1`, sorted by key.
    pub next: Vec<Arc<Table>>,
}

impl CompactionJob {
    pub fn output_level(&self) -> usize {
        self.level + 1
    }
}

/// Most urgent compaction, if any level is over its trigger.
pub(crate) fn pick(v: &Version, opts: &Options, ptrs: &CompactPointers) -> Option<CompactionJob> {
    let mut best: Option<(f64, usize)> = None;
    let l0 = v.level(0).len() as f64 / opts.l0_trigger.max(1) as f64;
    if l0 >= 1.0 {
        best = Some((l0, 0));
    }
    for l in 1..NUM_LEVELS - 1 {
        let score = v.level_bytes(l) as f64 / opts.level_limit(l) as f64;
        if score > 1.0 && best.is_none_or(|(s, _)| score > s) {
            best = Some((score, l));
        }
    }
    pick_level(v, best?.1, ptrs)
}

/// Job for `level` regardless of its size. L0 takes every file; deeper
/// levels take the file after the level's compact pointer, wrapping around.
pub(crate) fn pick_level(
    v: &Version,
    level: usize,
    ptrs: &CompactPointers,
) -> Option<CompactionJob> {
    if level + 1 >= NUM_LEVELS {
        return None;
    }
    let files = v.level(level);
    if files.is_empty() {
        return None;
    }
    let inputs: Vec<Arc<Table>> = if level == 0 {
        files.to_vec()
    } else {
        let i = match ptrs[level] {
            Some(p) => files.iter().position(|t| t.meta.min_key > p).unwrap_or(0),
            None => 0,
        };
        vec![files[i].clone()]
    };
    let lo = inputs.iter().map(|t| t.meta.min_key).min()?;
    let hi = inputs.iter().map(|t| t.meta.max_key).max()?;
    Some(CompactionJob {
        level,
        next: v.overlapping(level + 1, lo, hi),
        inputs,
    })
}

/// Newest-wins merge of the job's files. Tombstones are dropped when no
/// deeper level could still hold an older version of the key.
pub(crate) fn merge(job: &CompactionJob, v: &Version) -> Vec<(KeyInt, ValuePointer)> {
    let total: u64 = job
        .inputs
        .iter()
        .chain(&job.next)
        .map(|t| t.meta.record_count)
        .sum();
    let mut all: Vec<(KeyInt, u32, ValuePointer)> = Vec::with_capacity(total as usize);
    for (rank, t) in job.inputs.iter().chain(&job.next).enumerate() {
        all.extend(t.reader.iter().map(|(k, p)| (k, rank as u32, p)));
    }
    all.sort_unstable_by_key(|&(k, r, _)| (k, r));
    all.dedup_by_key(|e| e.0);
    let out_level = job.output_level();
    all.into_iter()
        .filter(|&(k, _, p)| !(p.is_tombstone() && v.is_base_level_for(out_level, k)))
        .map(|(k, _, p)| (k, p))
        .collect()
}

impl Inner {
    /// Runs the most urgent compaction. Caller holds the work lock.
    pub(crate) fn compact_once_locked(&self) -> Result<bool> {
        let ptrs = *self.compact_ptr.lock();
        let v = self.current_version();
        match pick(&v, &self.opts, &ptrs) {
            Some(job) => {
                self.run_compaction(&job)?;
                Ok(true)
            }
            None => Ok(false),
        }
    }

    /// Executes `job`. On error the current version is left untouched and
    /// any output already written is removed. Caller holds the work lock.
    pub(crate) fn run_compaction(&self, job: &CompactionJob) -> Result<()> {
        let start = Instant::now();
        let v = self.current_version();
        let merged = merge(job, &v);
        let out_level = job.output_level();
        let per_file = (self.opts.max_file_bytes / self.record_size).max(1);
        let max_seq = job
            .inputs
            .iter()
            .chain(&job.next)
            .map(|t| t.meta.max_seq)
            .max()
            .unwrap_or(0);

        let mut outputs: Vec<Arc<Table>> = Vec::new();
        for chunk in merged.chunks(per_file) {
            match self.new_table(out_level as u8, chunk, max_seq) {
                Ok(t) => outputs.push(t),
                Err(e) => {
                    outputs.iter().for_each(|t| drop(t.retire()));
                    return Err(e);
                }
            }
        }
        let removed: Vec<u64> = job
            .inputs
            .iter()
            .chain(&job.next)
            .map(|t| t.meta.file_id)
            .collect();
        let mut edits: Vec<VersionEdit> = outputs
            .iter()
            .map(|t| VersionEdit::AddFile(t.meta.clone()))
            .collect();
        edits.extend(
            job.inputs
                .iter()
                .chain(&job.next)
                .map(|t| VersionEdit::DeleteFile {
                    file_id: t.meta.file_id,
                    level: t.meta.level,
                }),
        );
        edits.push(VersionEdit::NextFileId(
            self.next_file_id.load(Ordering::SeqCst),
        ));
        if let Err(e) = self.manifest.lock().append(&edits) {
            outputs.iter().for_each(|t| drop(t.retire()));
            return Err(e);
        }

        for t in &outputs {
            self.cba.on_file_created(&t.meta);
        }
        let installed = {
            let mut st = self.state.write();
            st.version = Arc::new(st.version.apply(&outputs, &removed));
            st.version.clone()
        };
        if job.level > 0 {
            let last = job.inputs.iter().map(|t| t.meta.max_key).max();
            self.compact_ptr.lock()[job.level] = last;
        }
        let now = self.clock.now_nanos();
        for t in job.inputs.iter().chain(&job.next) {
            if let Err(e) = t.retire() {
                log::warn!("removing file {}: {e}", t.meta.file_id);
            }
            self.cba.on_file_deleted(t.meta.file_id, now);
        }
        for t in &outputs {
            self.learner_file_created(t);
        }
        for l in [job.level, out_level] {
            if !installed.level(l).is_empty() {
                self.learner_level_changed(l, installed.generation(l), installed.level_records(l));
            }
        }
        self.counters.compactions.fetch_add(1, Ordering::Relaxed);
        self.counters
            .compaction_ns
            .fetch_add(start.elapsed().as_nanos() as u64, Ordering::Relaxed);
        self.bg_cv.notify_all();
        Ok(())
    }
}
