//! Learning scheduler.
//!
//! A new file (or a changed level) first waits `T_wait`. If it is still
//! live when the timer fires, the configured policy decides whether to
//! enqueue a [`LearningTask`]; workers pop tasks highest priority first,
//! train a model off the foreground path and publish it atomically.

use std::cmp::{Ordering as CmpOrdering, Reverse};
use std::collections::BinaryHeap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use parking_lot::{Condvar, Mutex, RwLock};

use crate::cba::Verdict;
use crate::engine::{CbaMode, Inner, LearningMode, TWait, Table};
use crate::error::{Error, Result};
use crate::plr::{KeyInt, PlrModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LearningTarget {
    File(u64),
    Level(u8),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningTask {
    pub target: LearningTarget,
    /// `B_model - C_model` in nanoseconds (0 for bootstrap and always mode).
    pub priority: f64,
    pub enqueued_at: u64,
    /// Level generation the task was scheduled for (0 for files).
    pub generation: u64,
    seq: u64,
}

impl Eq for LearningTask {}

impl Ord for LearningTask {
    fn cmp(&self, other: &Self) -> CmpOrdering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for LearningTask {
    fn partial_cmp(&self, other: &Self) -> Option<CmpOrdering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Timer {
    fire_at: u64,
    seq: u64,
    target: LearningTarget,
    generation: u64,
}

/// Max-priority queue of learning tasks; equal priorities pop in FIFO order.
#[derive(Debug, Default)]
pub struct TaskQueue {
    heap: BinaryHeap<LearningTask>,
    seq: u64,
}

impl TaskQueue {
    pub fn push(&mut self, target: LearningTarget, priority: f64, now: u64, generation: u64) {
        self.seq += 1;
        self.heap.push(LearningTask {
            target,
            priority,
            enqueued_at: now,
            generation,
            seq: self.seq,
        });
    }

    pub fn pop(&mut self) -> Option<LearningTask> {
        self.heap.pop()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn snapshot(&self) -> Vec<LearningTask> {
        let mut v = self.heap.clone().into_sorted_vec();
        v.reverse();
        v
    }
}

#[derive(Default)]
struct Queues {
    timers: BinaryHeap<Reverse<Timer>>,
    tasks: TaskQueue,
    timer_seq: u64,
}

pub type LearnHook = Box<dyn Fn(LearningTarget) + Send + Sync>;

#[derive(Debug, Default)]
pub struct LearnerCounters {
    pub files_learned: AtomicU64,
    pub levels_learned: AtomicU64,
    /// Level models trained but discarded because the level changed.
    pub level_learn_failed: AtomicU64,
    /// File models discarded because the file was deleted during training.
    pub discarded: AtomicU64,
    /// Timers that found their file already deleted.
    pub expired_dead: AtomicU64,
    pub cba_skipped: AtomicU64,
    pub cba_learn: AtomicU64,
    pub cba_bootstrap: AtomicU64,
    pub learning_ns: AtomicU64,
}

pub(crate) struct LearnerState {
    q: Mutex<Queues>,
    pub(crate) cv: Condvar,
    pub(crate) busy: AtomicUsize,
    hook: RwLock<Option<LearnHook>>,
    pub(crate) counters: LearnerCounters,
}

impl LearnerState {
    pub(crate) fn new() -> Self {
        LearnerState {
            q: Mutex::new(Queues::default()),
            cv: Condvar::new(),
            busy: AtomicUsize::new(0),
            hook: RwLock::new(None),
            counters: LearnerCounters::default(),
        }
    }

    pub(crate) fn set_hook(&self, hook: Option<LearnHook>) {
        *self.hook.write() = hook;
    }

    fn schedule(&self, fire_at: u64, target: LearningTarget, generation: u64) {
        let mut q = self.q.lock();
        q.timer_seq += 1;
        let seq = q.timer_seq;
        q.timers.push(Reverse(Timer {
            fire_at,
            seq,
            target,
            generation,
        }));
        drop(q);
        self.cv.notify_all();
    }

    pub(crate) fn next_deadline(&self) -> Option<u64> {
        self.q.lock().timers.peek().map(|t| t.0.fire_at)
    }

    pub(crate) fn pending_timers(&self) -> usize {
        self.q.lock().timers.len()
    }

    pub(crate) fn queued_tasks(&self) -> Vec<LearningTask> {
        self.q.lock().tasks.snapshot()
    }

    pub(crate) fn has_tasks(&self) -> bool {
        !self.q.lock().tasks.is_empty()
    }

    pub(crate) fn wait(&self, max: std::time::Duration) {
        let mut q = self.q.lock();
        if q.tasks.is_empty() {
            self.cv.wait_for(&mut q, max);
        }
    }

    pub(crate) fn clear(&self) {
        let mut q = self.q.lock();
        q.timers.clear();
        q.tasks = TaskQueue::default();
    }
}

/// One model over a whole sorted level. Positions are global record indexes
/// across the level's files in key order.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelModel {
    pub level: u8,
    pub generation: u64,
    pub plr: PlrModel,
    pub file_ids: Vec<u64>,
    /// `cumulative[i]` = records in files before file `i`; one extra
    /// trailing entry holds the level total.
    pub cumulative: Vec<u64>,
}

impl LevelModel {
    pub fn train(level: u8, generation: u64, tables: &[Arc<Table>], delta: u32) -> Result<Self> {
        if level == 0 {
            return Err(Error::Unsupported(
                "level learning needs a sorted level; L0 files overlap".into(),
            ));
        }
        if tables.is_empty() {
            return Err(Error::invalid(format!("level {level} is empty")));
        }
        let total: u64 = tables.iter().map(|t| t.meta.record_count).sum();
        let mut keys: Vec<KeyInt> = Vec::with_capacity(total as usize);
        let mut counts = Vec::with_capacity(tables.len());
        for t in tables {
            keys.extend(t.reader.iter().map(|(k, _)| k));
            counts.push(t.meta.record_count);
        }
        let plr = PlrModel::fit(&keys, delta)?;
        Ok(Self::from_parts(
            level,
            generation,
            plr,
            tables.iter().map(|t| t.meta.file_id).collect(),
            &counts,
        ))
    }

    pub fn from_parts(
        level: u8,
        generation: u64,
        plr: PlrModel,
        file_ids: Vec<u64>,
        record_counts: &[u64],
    ) -> Self {
        let mut cumulative = Vec::with_capacity(record_counts.len() + 1);
        let mut acc = 0;
        cumulative.push(0);
        for c in record_counts {
            acc += c;
            cumulative.push(acc);
        }
        LevelModel {
            level,
            generation,
            plr,
            file_ids,
            cumulative,
        }
    }

    /// Maps a global position to `(file index, offset within that file)`.
    pub fn locate(&self, global: u64) -> Option<(usize, u64)> {
        if global >= *self.cumulative.last()? {
            return None;
        }
        let i = self.cumulative[1..].partition_point(|&c| c <= global);
        Some((i, global - self.cumulative[i]))
    }

    /// Predicted local `(lo, hi, pos)` inside file `file_index`, or `None`
    /// when the prediction excludes that file.
    pub fn predict_in_file(&self, key: KeyInt, file_index: usize) -> Option<(u64, u64, u64)> {
        let r = self.plr.predict(key)?;
        let start = self.cumulative[file_index];
        let end = self.cumulative[file_index + 1] - 1;
        let lo = r.lo.max(start);
        let hi = r.hi.min(end);
        if lo > hi {
            return None;
        }
        let pos = r.pos.clamp(lo, hi);
        Some((lo - start, hi - start, pos - start))
    }
}

/// Cost model of the wait-then-learn policy. While a file is unlearned every
/// nanosecond of its life costs `penalty` (extra lookup time); learning
/// costs `t_build` once.
pub mod wait_policy {
    /// Cost of waiting `t_wait` and learning if the file is still alive.
    pub fn wait_then_learn_cost(lifetime: u64, t_wait: u64, t_build: u64) -> u64 {
        if lifetime <= t_wait {
            lifetime
        } else {
            t_wait + t_build
        }
    }

    /// Cost of learning immediately at creation.
    pub fn learn_immediately_cost(t_build: u64) -> u64 {
        t_build
    }

    /// Cost of never learning.
    pub fn never_learn_cost(lifetime: u64) -> u64 {
        lifetime
    }
}

impl Inner {
    fn t_wait_for(&self, records: u64) -> u64 {
        match self.opts.t_wait {
            TWait::Fixed(d) => d.as_nanos() as u64,
            TWait::Auto => self.cba.estimate_cost(records) as u64,
        }
    }

    pub(crate) fn learning_active(&self) -> bool {
        self.opts.learning_mode != LearningMode::Off && self.opts.cba_mode != CbaMode::Offline
    }

    /// Starts the wait timer for a newly created file.
    pub(crate) fn learner_file_created(&self, t: &Arc<Table>) {
        if !self.learning_active() || self.opts.learning_mode != LearningMode::File {
            return;
        }
        let fire_at = self.clock.now_nanos() + self.t_wait_for(t.meta.record_count);
        self.learner
            .schedule(fire_at, LearningTarget::File(t.meta.file_id), 0);
    }

    /// Restarts the wait timer of a level whose file set changed.
    pub(crate) fn learner_level_changed(&self, level: usize, generation: u64, records: u64) {
        if !self.learning_active() || self.opts.learning_mode != LearningMode::Level || level == 0 {
            return;
        }
        let fire_at = self.clock.now_nanos() + self.t_wait_for(records);
        self.learner
            .schedule(fire_at, LearningTarget::Level(level as u8), generation);
    }

    /// Fires every timer due at `now`, consulting the policy for each
    /// target that is still current. Returns the number of timers fired.
    pub(crate) fn fire_due_timers(&self, now: u64) -> usize {
        let mut due = Vec::new();
        {
            let mut q = self.learner.q.lock();
            while let Some(Reverse(t)) = q.timers.peek() {
                if t.fire_at > now {
                    break;
                }
                due.push(q.timers.pop().unwrap().0);
            }
            if due.is_empty() {
                return 0;
            }
            // keeps quiescence checks from seeing neither timer nor task
            self.learner.busy.fetch_add(1, Ordering::SeqCst);
        }
        let fired = due.len();
        let c = &self.learner.counters;
        for t in due {
            let (priority, generation) = match t.target {
                LearningTarget::File(id) => {
                    let Some(table) = self.live_table(id) else {
                        c.expired_dead.fetch_add(1, Ordering::Relaxed);
                        continue;
                    };
                    if table.is_learned() {
                        continue;
                    }
                    if self.opts.cba_mode == CbaMode::Cba {
                        let d = self.cba.should_learn(id);
                        match self.note_verdict(d.verdict) {
                            true => (d.priority.max(0.0), 0),
                            false => continue,
                        }
                    } else {
                        (0.0, 0)
                    }
                }
                LearningTarget::Level(l) => {
                    let v = self.current_version();
                    if v.generation(l as usize) != t.generation
                        || v.level(l as usize).is_empty()
                        || v.level_model(l as usize).is_some()
                    {
                        continue;
                    }
                    if self.opts.cba_mode == CbaMode::Cba {
                        let d = self.cba.should_learn_level(l, v.level_records(l as usize));
                        match self.note_verdict(d.verdict) {
                            true => (d.priority.max(0.0), t.generation),
                            false => continue,
                        }
                    } else {
                        (0.0, t.generation)
                    }
                }
            };
            self.learner
                .q
                .lock()
                .tasks
                .push(t.target, priority, now, generation);
        }
        self.learner.busy.fetch_sub(1, Ordering::SeqCst);
        self.learner.cv.notify_all();
        fired
    }

    fn note_verdict(&self, v: Verdict) -> bool {
        let c = &self.learner.counters;
        match v {
            Verdict::Skip => {
                c.cba_skipped.fetch_add(1, Ordering::Relaxed);
                false
            }
            Verdict::Learn => {
                c.cba_learn.fetch_add(1, Ordering::Relaxed);
                true
            }
            Verdict::BootstrapLearn => {
                c.cba_bootstrap.fetch_add(1, Ordering::Relaxed);
                true
            }
        }
    }

    /// Pops and executes the highest-priority task. Returns `false` when the
    /// queue was empty.
    pub(crate) fn run_next_task(&self) -> bool {
        let task = {
            let mut q = self.learner.q.lock();
            let t = q.tasks.pop();
            if t.is_some() {
                self.learner.busy.fetch_add(1, Ordering::SeqCst);
            }
            t
        };
        let Some(task) = task else {
            return false;
        };
        let res = match task.target {
            LearningTarget::File(id) => match self.live_table(id) {
                Some(t) => self.learn_file(&t).map(|_| ()),
                None => Ok(()),
            },
            LearningTarget::Level(l) => self.learn_level(l, Some(task.generation)).map(|_| ()),
        };
        if let Err(e) = res {
            log::warn!("learning {:?} failed: {e}", task.target);
        }
        self.learner.busy.fetch_sub(1, Ordering::SeqCst);
        self.learner.cv.notify_all();
        true
    }

    /// Trains and attaches a file model. Returns whether a model was
    /// attached by this call.
    pub(crate) fn learn_file(&self, t: &Arc<Table>) -> Result<bool> {
        if t.is_learned() || t.is_deleted() {
            return Ok(false);
        }
        let start = Instant::now();
        let keys = t.reader.keys();
        let model = PlrModel::fit(&keys, self.opts.delta)?;
        self.learner
            .counters
            .learning_ns
            .fetch_add(start.elapsed().as_nanos() as u64, Ordering::Relaxed);
        if let Some(hook) = self.learner.hook.read().as_ref() {
            hook(LearningTarget::File(t.meta.file_id));
        }
        let attached = t.attach_model(model, self.opts.persist_models)?;
        let c = &self.learner.counters;
        if attached {
            c.files_learned.fetch_add(1, Ordering::Relaxed);
        } else if t.is_deleted() {
            c.discarded.fetch_add(1, Ordering::Relaxed);
        }
        Ok(attached)
    }

    /// Trains a model over the whole level and publishes it if the level is
    /// unchanged since `expected_generation` (or since training started).
    pub(crate) fn learn_level(&self, level: u8, expected_generation: Option<u64>) -> Result<bool> {
        let v = self.current_version();
        let generation = v.generation(level as usize);
        if expected_generation.is_some_and(|g| g != generation) {
            self.learner
                .counters
                .level_learn_failed
                .fetch_add(1, Ordering::Relaxed);
            return Ok(false);
        }
        if v.level_model(level as usize).is_some() {
            return Ok(false);
        }
        let start = Instant::now();
        let lm = LevelModel::train(level, generation, v.level(level as usize), self.opts.delta)?;
        self.learner
            .counters
            .learning_ns
            .fetch_add(start.elapsed().as_nanos() as u64, Ordering::Relaxed);
        drop(v);
        if let Some(hook) = self.learner.hook.read().as_ref() {
            hook(LearningTarget::Level(level));
        }
        let published = self.publish_level_model(Arc::new(lm));
        let c = &self.learner.counters;
        if published {
            c.levels_learned.fetch_add(1, Ordering::Relaxed);
        } else {
            c.level_learn_failed.fetch_add(1, Ordering::Relaxed);
        }
        Ok(published)
    }
}
