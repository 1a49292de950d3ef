//! The LSM store: memtable, leveled versions, compaction and the two
//! per-file lookup paths.

mod compaction;
mod lookup;
mod memtable;
mod version;

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex, RwLock};

use crate::cba::{calibrated_train_ns_per_point, Cba, CbaConfig, DEFAULT_S_MIN};
use crate::clock::{Clock, SystemClock};
use crate::error::{Error, Result};
use crate::learner::{LearnHook, LearnerState, LearningTask, LevelModel};
use crate::plr::{KeyInt, PlrModel, DEFAULT_DELTA};
use crate::table::{
    build_sstable, key_from_bytes, key_to_bytes, max_key_for, model_file_name, record_size,
    sst_file_name, validate_key_size, vlog_file_name, Manifest, SstReader, ValuePointer,
    VersionEdit, Vlog, DEFAULT_KEY_SIZE, NUM_LEVELS,
};

pub use compaction::CompactionJob;
pub use lookup::{
    lookup_in_file_baseline, lookup_in_file_model, FileLookup, GetTrace, InternalLookupRecord,
    LookupPath, Outcome, Step, StepTimes, STEP_COUNT,
};
pub use memtable::{MemEntry, MemTable};
pub use version::{Table, Version};

use lookup::{probe_baseline, probe_level, probe_model, StepClock};

const MANIFEST_NAME: &str = "MANIFEST";
const VLOG_ID: u32 = 1;
const MB: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearningMode {
    File,
    Level,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbaMode {
    /// Learn a file only when its estimated benefit exceeds the cost.
    Cba,
    /// Learn every file that survives the wait.
    Always,
    /// Learn only on explicit request; nothing is learned as writes happen.
    Offline,
}

impl FromStr for LearningMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "file" => Ok(LearningMode::File),
            "level" => Ok(LearningMode::Level),
            "off" => Ok(LearningMode::Off),
            _ => Err(Error::invalid(format!("unknown learning mode {s:?}"))),
        }
    }
}

impl fmt::Display for LearningMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LearningMode::File => "file",
            LearningMode::Level => "level",
            LearningMode::Off => "off",
        })
    }
}

impl FromStr for CbaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cba" => Ok(CbaMode::Cba),
            "always" => Ok(CbaMode::Always),
            "offline" => Ok(CbaMode::Offline),
            _ => Err(Error::invalid(format!("unknown cba mode {s:?}"))),
        }
    }
}

impl fmt::Display for CbaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CbaMode::Cba => "cba",
            CbaMode::Always => "always",
            CbaMode::Offline => "offline",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TWait {
    Fixed(Duration),
    /// Wait as long as the estimated training time of the target.
    Auto,
}

impl TWait {
    pub const DEFAULT: TWait = TWait::Fixed(Duration::from_millis(50));
}

#[derive(Clone)]
pub struct Options {
    pub key_size: usize,
    pub delta: u32,
    pub t_wait: TWait,
    pub learning_mode: LearningMode,
    pub cba_mode: CbaMode,
    /// Scales every level limit (`10^i MB`) down by this factor.
    pub level_size_divisor: u64,
    pub memtable_bytes: usize,
    pub max_file_bytes: usize,
    pub l0_trigger: usize,
    pub learner_threads: usize,
    /// Run flushes, compactions and learning on background threads. When
    /// false, flushes and compactions run inline on the writer and learning
    /// only happens through [`Engine::pump_learning`].
    pub background: bool,
    pub clock: Option<Arc<dyn Clock>>,
    /// Overrides the calibrated per-point training cost.
    pub train_ns_per_point: Option<f64>,
    pub s_min: u64,
    /// Defaults to twice the fixed wait (100 ms for auto waits).
    pub short_lived: Option<Duration>,
    /// Record per-step durations on every get.
    pub step_timing: bool,
    pub persist_models: bool,
    /// Consult attached models on reads.
    pub use_models: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            key_size: DEFAULT_KEY_SIZE,
            delta: DEFAULT_DELTA,
            t_wait: TWait::DEFAULT,
            learning_mode: LearningMode::File,
            cba_mode: CbaMode::Cba,
            level_size_divisor: 1,
            memtable_bytes: 4 << 20,
            max_file_bytes: 4 << 20,
            l0_trigger: 4,
            learner_threads: 1,
            background: true,
            clock: None,
            train_ns_per_point: None,
            s_min: DEFAULT_S_MIN,
            short_lived: None,
            step_timing: false,
            persist_models: true,
            use_models: true,
        }
    }
}

impl fmt::Debug for Options {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Options")
            .field("key_size", &self.key_size)
            .field("delta", &self.delta)
            .field("t_wait", &self.t_wait)
            .field("learning_mode", &self.learning_mode)
            .field("cba_mode", &self.cba_mode)
            .field("level_size_divisor", &self.level_size_divisor)
            .field("memtable_bytes", &self.memtable_bytes)
            .field("max_file_bytes", &self.max_file_bytes)
            .field("l0_trigger", &self.l0_trigger)
            .field("learner_threads", &self.learner_threads)
            .field("background", &self.background)
            .field(
                "virtual_clock",
                &self.clock.as_ref().is_some_and(|c| !c.is_real()),
            )
            .field("train_ns_per_point", &self.train_ns_per_point)
            .field("s_min", &self.s_min)
            .field("short_lived", &self.short_lived)
            .field("step_timing", &self.step_timing)
            .finish()
    }
}

impl Options {
    /// Size limit of level `level >= 1` in bytes.
    pub fn level_limit(&self, level: usize) -> u64 {
        10u64.pow(level as u32) * MB / self.level_size_divisor.max(1)
    }
}

/// Point-in-time counters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EngineStats {
    pub files_per_level: [usize; NUM_LEVELS],
    pub records_per_level: [u64; NUM_LEVELS],
    pub bytes_per_level: [u64; NUM_LEVELS],
    pub learned_files: usize,
    pub level_models: usize,
    pub model_bytes: u64,
    pub flushes: u64,
    pub compactions: u64,
    /// Nanoseconds spent in flushes and compactions.
    pub compaction_ns: u64,
    pub learning_ns: u64,
    pub files_learned: u64,
    pub levels_learned: u64,
    pub level_learn_failed: u64,
    pub discarded_models: u64,
    pub expired_before_learning: u64,
    pub cba_learn: u64,
    pub cba_skipped: u64,
    pub cba_bootstrap: u64,
    pub model_lookups: u64,
    pub baseline_lookups: u64,
    pub queued_tasks: usize,
    pub pending_timers: usize,
    pub dropped_lookup_records: u64,
}

impl EngineStats {
    pub fn total_files(&self) -> usize {
        self.files_per_level.iter().sum()
    }

    pub fn total_records(&self) -> u64 {
        self.records_per_level.iter().sum()
    }
}

struct State {
    mem: Arc<MemTable>,
    imm: Option<Arc<MemTable>>,
    version: Arc<Version>,
}

#[derive(Default)]
struct Counters {
    flushes: AtomicU64,
    compactions: AtomicU64,
    compaction_ns: AtomicU64,
    model_lookups: AtomicU64,
    baseline_lookups: AtomicU64,
}

pub(crate) struct Inner {
    pub(crate) opts: Options,
    dir: PathBuf,
    key_size: usize,
    record_size: usize,
    pub(crate) clock: Arc<dyn Clock>,
    pub(crate) cba: Cba,
    pub(crate) learner: LearnerState,
    state: RwLock<State>,
    writer: Mutex<()>,
    /// Serializes flushes and compactions.
    work: Mutex<()>,
    manifest: Mutex<Manifest>,
    compact_ptr: Mutex<[Option<KeyInt>; NUM_LEVELS]>,
    vlog: Vlog,
    seq: AtomicU64,
    next_file_id: AtomicU64,
    use_models: AtomicBool,
    shutdown: AtomicBool,
    bg_lock: Mutex<()>,
    bg_cv: Condvar,
    bg_error: Mutex<Option<String>>,
    counters: Counters,
}

/// Handle to an open store. Dropping it closes the store.
pub struct Engine {
    inner: Arc<Inner>,
    threads: Mutex<Vec<JoinHandle<()>>>,
    closed: AtomicBool,
}

impl fmt::Debug for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Engine")
            .field("dir", &self.inner.dir)
            .field("opts", &self.inner.opts)
            .finish()
    }
}

impl Engine {
    /// Opens the store in `dir`, creating it if needed.
    pub fn open(dir: impl AsRef<Path>, opts: Options) -> Result<Engine> {
        let dir = dir.as_ref().to_path_buf();
        validate_key_size(opts.key_size)?;
        if opts.delta == 0 {
            return Err(Error::invalid("delta must be at least 1"));
        }
        fs::create_dir_all(&dir)?;
        let clock: Arc<dyn Clock> = opts
            .clock
            .clone()
            .unwrap_or_else(|| Arc::new(SystemClock::new()));
        let (mut manifest, ms) = Manifest::open(&dir.join(MANIFEST_NAME))?;
        let key_size = match ms.key_size {
            Some(k) if k as usize != opts.key_size => {
                return Err(Error::invalid(format!(
                    "store was created with {k}-byte keys, options ask for {}",
                    opts.key_size
                )))
            }
            Some(k) => k as usize,
            None => {
                manifest.append(&[VersionEdit::KeySize(opts.key_size as u32)])?;
                opts.key_size
            }
        };
        let wait_ns = match opts.t_wait {
            TWait::Fixed(d) => d.as_nanos() as u64,
            TWait::Auto => TWait::DEFAULT_NS,
        };
        let cba = Cba::new(CbaConfig {
            s_min: opts.s_min,
            short_lived_ns: opts
                .short_lived
                .map(|d| d.as_nanos() as u64)
                .unwrap_or(2 * wait_ns),
            train_ns_per_point: opts
                .train_ns_per_point
                .unwrap_or_else(calibrated_train_ns_per_point),
        });

        let now = clock.now_nanos();
        let mut version = Version::default();
        let mut recovered = Vec::new();
        let mut live_names = std::collections::HashSet::new();
        for files in &ms.levels {
            for meta in files.values() {
                let sst_path = dir.join(sst_file_name(meta.file_id));
                let model_path = dir.join(model_file_name(meta.file_id));
                live_names.insert(sst_file_name(meta.file_id));
                live_names.insert(model_file_name(meta.file_id));
                let reader = SstReader::open(&sst_path)?;
                if reader.record_count() != meta.record_count || reader.key_size() != key_size {
                    return Err(Error::corrupt(format!(
                        "sstable {} disagrees with the manifest",
                        meta.file_id
                    )));
                }
                let mut meta = meta.clone();
                meta.created_at = now;
                let t = Arc::new(Table::new(meta, reader, sst_path, model_path.clone()));
                load_sidecar(&t, &model_path, opts.delta);
                recovered.push(t);
            }
        }
        version = version.apply(&recovered, &[]);
        remove_orphans(&dir, &live_names)?;

        let inner = Arc::new(Inner {
            use_models: AtomicBool::new(opts.use_models),
            dir: dir.clone(),
            key_size,
            record_size: record_size(key_size),
            clock,
            cba,
            learner: LearnerState::new(),
            state: RwLock::new(State {
                mem: Arc::new(MemTable::new(record_size(key_size))),
                imm: None,
                version: Arc::new(version),
            }),
            writer: Mutex::new(()),
            work: Mutex::new(()),
            manifest: Mutex::new(manifest),
            compact_ptr: Mutex::new([None; NUM_LEVELS]),
            vlog: Vlog::open(&dir.join(vlog_file_name(VLOG_ID)), VLOG_ID, key_size)?,
            seq: AtomicU64::new(ms.last_sequence),
            next_file_id: AtomicU64::new(ms.next_file_id.max(1)),
            shutdown: AtomicBool::new(false),
            bg_lock: Mutex::new(()),
            bg_cv: Condvar::new(),
            bg_error: Mutex::new(None),
            counters: Counters::default(),
            opts,
        });
        for t in &recovered {
            inner.cba.on_file_created(&t.meta);
            if !t.is_learned() {
                inner.learner_file_created(t);
            }
        }
        let v = inner.current_version();
        for l in 1..NUM_LEVELS {
            if !v.level(l).is_empty() {
                inner.learner_level_changed(l, v.generation(l), v.level_records(l));
            }
        }

        let mut threads = Vec::new();
        if inner.opts.background {
            let i = inner.clone();
            threads.push(
                std::thread::Builder::new()
                    .name("compaction".into())
                    .spawn(move || i.compaction_loop())?,
            );
            for n in 0..inner.opts.learner_threads.max(1) {
                let i = inner.clone();
                threads.push(
                    std::thread::Builder::new()
                        .name(format!("learner-{n}"))
                        .spawn(move || i.learner_loop())?,
                );
            }
        }
        Ok(Engine {
            inner,
            threads: Mutex::new(threads),
            closed: AtomicBool::new(false),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.inner.dir
    }

    pub fn options(&self) -> &Options {
        &self.inner.opts
    }

    pub fn key_size(&self) -> usize {
        self.inner.key_size
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.inner.clock
    }

    pub fn cba(&self) -> &Cba {
        &self.inner.cba
    }

    /// Encodes an integer key at the store's key width.
    pub fn encode_key(&self, key: KeyInt) -> Vec<u8> {
        key_to_bytes(key, self.inner.key_size)
    }

    pub fn put(&self, key: &[u8], value: &[u8]) -> Result<()> {
        let k = key_from_bytes(key, self.inner.key_size)?;
        self.inner.write(k, Some(value))
    }

    pub fn delete(&self, key: &[u8]) -> Result<()> {
        let k = key_from_bytes(key, self.inner.key_size)?;
        self.inner.write(k, None)
    }

    pub fn get(&self, key: &[u8]) -> Result<Option<Vec<u8>>> {
        let k = key_from_bytes(key, self.inner.key_size)?;
        self.inner.get(k, None)
    }

    pub fn put_int(&self, key: KeyInt, value: &[u8]) -> Result<()> {
        self.inner.check_int_key(key)?;
        self.inner.write(key, Some(value))
    }

    pub fn delete_int(&self, key: KeyInt) -> Result<()> {
        self.inner.check_int_key(key)?;
        self.inner.write(key, None)
    }

    pub fn get_int(&self, key: KeyInt) -> Result<Option<Vec<u8>>> {
        self.inner.check_int_key(key)?;
        self.inner.get(key, None)
    }

    /// Like [`get_int`](Self::get_int), also returning every internal lookup
    /// and the step breakdown of the request.
    pub fn get_traced(&self, key: KeyInt) -> Result<(Option<Vec<u8>>, GetTrace)> {
        self.inner.check_int_key(key)?;
        let mut trace = GetTrace::default();
        let v = self.inner.get(key, Some(&mut trace))?;
        Ok((v, trace))
    }

    /// Up to `limit` live entries with key `>= start`, in key order.
    pub fn scan(&self, start: &[u8], limit: usize) -> Result<Vec<(Vec<u8>, Vec<u8>)>> {
        let k = key_from_bytes(start, self.inner.key_size)?;
        Ok(self
            .inner
            .scan(k, limit)?
            .into_iter()
            .map(|(k, v)| (key_to_bytes(k, self.inner.key_size), v))
            .collect())
    }

    pub fn scan_int(&self, start: KeyInt, limit: usize) -> Result<Vec<(KeyInt, Vec<u8>)>> {
        self.inner.scan(start, limit)
    }

    /// Flushes the memtable (if nonempty) to a new L0 file.
    pub fn flush(&self) -> Result<()> {
        let _w = self.inner.writer.lock();
        self.inner.rotate_memtable(true)?;
        self.inner.flush_imm()
    }

    /// Compacts level `level` into the next one regardless of size limits.
    pub fn compact_level(&self, level: usize) -> Result<bool> {
        if level + 1 >= NUM_LEVELS {
            return Err(Error::invalid(format!("cannot compact level {level}")));
        }
        let _m = self.inner.work.lock();
        let v = self.inner.current_version();
        let ptrs = *self.inner.compact_ptr.lock();
        match compaction::pick_level(&v, level, &ptrs) {
            Some(job) => {
                self.inner.run_compaction(&job)?;
                Ok(true)
            }
            None => Ok(false),
        }
    }

    /// Flushes the memtable and runs compactions until every level is within
    /// its limit.
    pub fn compact_until_settled(&self) -> Result<()> {
        self.flush()?;
        let _m = self.inner.work.lock();
        while self.inner.compact_once_locked()? {}
        Ok(())
    }

    pub fn version(&self) -> Arc<Version> {
        self.inner.current_version()
    }

    pub fn set_use_models(&self, on: bool) {
        self.inner.use_models.store(on, Ordering::SeqCst);
    }

    pub fn use_models(&self) -> bool {
        self.inner.use_models.load(Ordering::SeqCst)
    }

    /// Learns every unlearned file (file mode) or every sorted level (level
    /// mode) right now on the calling thread. Used for the initial build
    /// after a load and by offline mode. Returns the number of models built.
    pub fn learn_all_now(&self) -> Result<usize> {
        let inner = &self.inner;
        let v = inner.current_version();
        let mut n = 0;
        match inner.opts.learning_mode {
            LearningMode::Off => {}
            LearningMode::File => {
                for t in v.tables() {
                    if inner.learn_file(t)? {
                        n += 1;
                    }
                }
            }
            LearningMode::Level => {
                for l in 1..NUM_LEVELS {
                    if !v.level(l).is_empty() && inner.learn_level(l as u8, None)? {
                        n += 1;
                    }
                }
            }
        }
        Ok(n)
    }

    /// Fires due wait timers and runs every queued learning task on the
    /// calling thread. Returns the number of tasks executed.
    pub fn pump_learning(&self) -> usize {
        self.inner.fire_due_timers(self.inner.clock.now_nanos());
        let mut n = 0;
        while self.inner.run_next_task() {
            n += 1;
        }
        n
    }

    /// Installs a callback that runs after a model is trained and before it
    /// is attached.
    pub fn set_learn_hook(&self, hook: Option<LearnHook>) {
        self.inner.learner.set_hook(hook);
    }

    pub fn queued_learning_tasks(&self) -> Vec<LearningTask> {
        self.inner.learner.queued_tasks()
    }

    /// Blocks until no flush or compaction is pending and, if `learning` is
    /// set, no wait timer, queued task or running learner remains.
    pub fn wait_for_quiescence(&self, learning: bool) -> Result<()> {
        let inner = &self.inner;
        loop {
            inner.check_bg_error()?;
            // flushes and compactions schedule their timers under the work
            // lock, so this snapshot cannot fall between the two
            let (flush_idle, compaction_idle, learn_idle) = {
                let _m = inner.work.lock();
                let v = inner.current_version();
                let ptrs = *inner.compact_ptr.lock();
                (
                    inner.state.read().imm.is_none(),
                    compaction::pick(&v, &inner.opts, &ptrs).is_none(),
                    !learning
                        || (inner.learner.pending_timers() == 0
                            && !inner.learner.has_tasks()
                            && inner.learner.busy.load(Ordering::SeqCst) == 0),
                )
            };
            if flush_idle && compaction_idle && learn_idle {
                return Ok(());
            }
            if !inner.opts.background {
                if !flush_idle || !compaction_idle {
                    let _m = inner.work.lock();
                    inner.flush_imm_locked()?;
                    while inner.compact_once_locked()? {}
                }
                if !learn_idle {
                    if !inner.clock.is_real() && inner.learner.pending_timers() > 0 {
                        if let Some(d) = inner.learner.next_deadline() {
                            if d > inner.clock.now_nanos() {
                                return Err(Error::invalid(
                                    "learning cannot settle: virtual clock is behind pending timers",
                                ));
                            }
                        }
                    }
                    self.pump_learning();
                }
                continue;
            }
            inner.bg_cv.notify_all();
            std::thread::sleep(Duration::from_millis(1));
        }
    }

    pub fn stats(&self) -> EngineStats {
        let inner = &self.inner;
        let v = inner.current_version();
        let mut s = EngineStats::default();
        for l in 0..NUM_LEVELS {
            s.files_per_level[l] = v.level(l).len();
            s.records_per_level[l] = v.level_records(l);
            s.bytes_per_level[l] = v.level_bytes(l);
            if let Some(lm) = v.level_model(l) {
                s.level_models += 1;
                s.model_bytes += lm.plr.encoded_len() as u64;
            }
        }
        for t in v.tables() {
            if let Some(m) = t.model() {
                s.learned_files += 1;
                s.model_bytes += m.encoded_len() as u64;
            }
        }
        let c = &inner.counters;
        let lc = &inner.learner.counters;
        s.flushes = c.flushes.load(Ordering::Relaxed);
        s.compactions = c.compactions.load(Ordering::Relaxed);
        s.compaction_ns = c.compaction_ns.load(Ordering::Relaxed);
        s.model_lookups = c.model_lookups.load(Ordering::Relaxed);
        s.baseline_lookups = c.baseline_lookups.load(Ordering::Relaxed);
        s.learning_ns = lc.learning_ns.load(Ordering::Relaxed);
        s.files_learned = lc.files_learned.load(Ordering::Relaxed);
        s.levels_learned = lc.levels_learned.load(Ordering::Relaxed);
        s.level_learn_failed = lc.level_learn_failed.load(Ordering::Relaxed);
        s.discarded_models = lc.discarded.load(Ordering::Relaxed);
        s.expired_before_learning = lc.expired_dead.load(Ordering::Relaxed);
        s.cba_learn = lc.cba_learn.load(Ordering::Relaxed);
        s.cba_skipped = lc.cba_skipped.load(Ordering::Relaxed);
        s.cba_bootstrap = lc.cba_bootstrap.load(Ordering::Relaxed);
        s.queued_tasks = inner.learner.queued_tasks().len();
        s.pending_timers = inner.learner.pending_timers();
        s.dropped_lookup_records = inner.cba.dropped_records();
        s
    }

    /// Flushes the memtable, stops background work and syncs the value log.
    pub fn close(&self) -> Result<()> {
        if self.closed.swap(true, Ordering::SeqCst) {
            return Ok(());
        }
        let inner = &self.inner;
        inner.shutdown.store(true, Ordering::SeqCst);
        inner.bg_cv.notify_all();
        inner.learner.cv.notify_all();
        for h in self.threads.lock().drain(..) {
            let _ = h.join();
        }
        inner.learner.clear();
        let res = {
            let _w = inner.writer.lock();
            inner
                .rotate_memtable(true)
                .and_then(|_| inner.flush_imm())
                .and_then(|_| inner.vlog.sync())
        };
        res.and_then(|_| inner.check_bg_error())
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        if let Err(e) = self.close() {
            log::error!("closing store {}: {e}", self.inner.dir.display());
        }
    }
}

fn load_sidecar(t: &Table, path: &Path, delta: u32) {
    let Ok(bytes) = fs::read(path) else {
        return;
    };
    match PlrModel::deserialize(&bytes) {
        Ok(m) if m.num_points() == t.meta.record_count && m.delta() == delta => {
            let _ = t.attach_model(m, false);
        }
        Ok(_) => {
            log::info!("discarding stale model for file {}", t.meta.file_id);
            let _ = fs::remove_file(path);
        }
        Err(e) => {
            log::warn!(
                "discarding unreadable model for file {}: {e}",
                t.meta.file_id
            );
            let _ = fs::remove_file(path);
        }
    }
}

/// Removes sstables and models left behind by an interrupted flush or
/// compaction.
fn remove_orphans(dir: &Path, live: &std::collections::HashSet<String>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        let ours = name.ends_with(".sst") || name.ends_with(".model");
        if ours && !live.contains(&name) {
            fs::remove_file(dir.join(&name))?;
        }
    }
    Ok(())
}

impl TWait {
    const DEFAULT_NS: u64 = 50_000_000;
}

impl Inner {
    pub(crate) fn current_version(&self) -> Arc<Version> {
        self.state.read().version.clone()
    }

    pub(crate) fn live_table(&self, file_id: u64) -> Option<Arc<Table>> {
        self.current_version()
            .tables()
            .find(|t| t.meta.file_id == file_id)
            .cloned()
    }

    /// Publishes a level model if the level has not changed since training.
    pub(crate) fn publish_level_model(&self, lm: Arc<LevelModel>) -> bool {
        let mut st = self.state.write();
        match st.version.with_level_model(lm) {
            Some(v) => {
                st.version = Arc::new(v);
                true
            }
            None => false,
        }
    }

    fn check_int_key(&self, key: KeyInt) -> Result<()> {
        if key > max_key_for(self.key_size) {
            return Err(Error::invalid(format!(
                "key {key} does not fit in {} bytes",
                self.key_size
            )));
        }
        Ok(())
    }

    fn check_bg_error(&self) -> Result<()> {
        match self.bg_error.lock().as_ref() {
            Some(e) => Err(Error::Corruption(format!("background work failed: {e}"))),
            None => Ok(()),
        }
    }

    fn write(&self, key: KeyInt, value: Option<&[u8]>) -> Result<()> {
        if self.shutdown.load(Ordering::SeqCst) {
            return Err(Error::Closed);
        }
        self.check_bg_error()?;
        let _w = self.writer.lock();
        let ptr = match value {
            Some(v) => {
                if v.len() >= u32::MAX as usize {
                    return Err(Error::invalid("value too large"));
                }
                self.vlog.append(key, v)?
            }
            None => ValuePointer::tombstone(),
        };
        let seq = self.seq.fetch_add(1, Ordering::SeqCst) + 1;
        let mem = self.state.read().mem.clone();
        mem.insert(key, ptr, seq);
        if mem.approx_bytes() >= self.opts.memtable_bytes {
            self.rotate_memtable(false)?;
            if !self.opts.background {
                let _m = self.work.lock();
                self.flush_imm_locked()?;
                while self.compact_once_locked()? {}
            }
        } else if self.opts.background {
            self.stall_on_l0();
        }
        Ok(())
    }

    fn stall_on_l0(&self) {
        let limit = self.opts.l0_trigger * 3;
        while self.current_version().level(0).len() >= limit
            && !self.shutdown.load(Ordering::SeqCst)
            && self.bg_error.lock().is_none()
        {
            self.bg_cv.notify_all();
            let mut g = self.bg_lock.lock();
            self.bg_cv.wait_for(&mut g, Duration::from_millis(5));
        }
    }

    /// Moves the memtable to the immutable slot, waiting for a previous
    /// immutable memtable to be flushed first. Caller holds the writer lock.
    fn rotate_memtable(&self, force: bool) -> Result<()> {
        loop {
            {
                let mut st = self.state.write();
                if st.mem.is_empty() || (!force && st.mem.approx_bytes() < self.opts.memtable_bytes)
                {
                    return Ok(());
                }
                if st.imm.is_none() {
                    let fresh = Arc::new(MemTable::new(self.record_size));
                    st.imm = Some(std::mem::replace(&mut st.mem, fresh));
                    break;
                }
            }
            if !self.opts.background || self.shutdown.load(Ordering::SeqCst) {
                self.flush_imm()?;
                continue;
            }
            self.check_bg_error()?;
            self.bg_cv.notify_all();
            let mut g = self.bg_lock.lock();
            self.bg_cv.wait_for(&mut g, Duration::from_millis(5));
        }
        self.bg_cv.notify_all();
        Ok(())
    }

    fn flush_imm(&self) -> Result<()> {
        let _m = self.work.lock();
        self.flush_imm_locked()
    }

    fn alloc_file_id(&self) -> u64 {
        self.next_file_id.fetch_add(1, Ordering::SeqCst)
    }

    fn table_paths(&self, id: u64) -> (PathBuf, PathBuf) {
        (
            self.dir.join(sst_file_name(id)),
            self.dir.join(model_file_name(id)),
        )
    }

    pub(crate) fn new_table(
        &self,
        level: u8,
        records: &[(KeyInt, ValuePointer)],
        max_seq: u64,
    ) -> Result<Arc<Table>> {
        let id = self.alloc_file_id();
        let (sst, model) = self.table_paths(id);
        let (meta, reader) = build_sstable(
            &sst,
            id,
            level,
            self.key_size,
            records,
            self.clock.now_nanos(),
            max_seq,
        )?;
        Ok(Arc::new(Table::new(meta, reader, sst, model)))
    }

    /// Writes the immutable memtable to L0. Caller holds the manifest lock.
    fn flush_imm_locked(&self) -> Result<()> {
        let Some(imm) = self.state.read().imm.clone() else {
            return Ok(());
        };
        let start = Instant::now();
        self.vlog.flush()?;
        let records = imm.records();
        let t = self.new_table(0, &records, imm.max_seq())?;
        let edits = [
            VersionEdit::AddFile(t.meta.clone()),
            VersionEdit::NextFileId(self.next_file_id.load(Ordering::SeqCst)),
            VersionEdit::LastSequence(imm.max_seq()),
        ];
        if let Err(e) = self.manifest.lock().append(&edits) {
            let _ = t.retire();
            return Err(e);
        }
        self.cba.on_file_created(&t.meta);
        {
            let mut st = self.state.write();
            st.version = Arc::new(st.version.apply(std::slice::from_ref(&t), &[]));
            st.imm = None;
        }
        self.learner_file_created(&t);
        self.counters.flushes.fetch_add(1, Ordering::Relaxed);
        self.counters
            .compaction_ns
            .fetch_add(start.elapsed().as_nanos() as u64, Ordering::Relaxed);
        self.bg_cv.notify_all();
        Ok(())
    }

    fn compaction_loop(self: Arc<Self>) {
        loop {
            if self.shutdown.load(Ordering::SeqCst) {
                return;
            }
            let res = {
                let _m = self.work.lock();
                self.flush_imm_locked()
                    .and_then(|_| self.compact_once_locked())
            };
            match res {
                Ok(true) => continue,
                Ok(false) => {}
                Err(e) => {
                    log::error!("background compaction failed: {e}");
                    *self.bg_error.lock() = Some(e.to_string());
                    self.bg_cv.notify_all();
                    return;
                }
            }
            self.bg_cv.notify_all();
            let mut g = self.bg_lock.lock();
            if self.state.read().imm.is_none() && !self.shutdown.load(Ordering::SeqCst) {
                self.bg_cv.wait_for(&mut g, Duration::from_millis(20));
            }
        }
    }

    fn learner_loop(self: Arc<Self>) {
        while !self.shutdown.load(Ordering::SeqCst) {
            let now = self.clock.now_nanos();
            self.fire_due_timers(now);
            if self.run_next_task() {
                continue;
            }
            let max = Duration::from_millis(5);
            let wait = match (self.clock.is_real(), self.learner.next_deadline()) {
                (true, Some(d)) => Duration::from_nanos(d.saturating_sub(now)).min(max),
                _ => max,
            };
            if !wait.is_zero() {
                self.learner.wait(wait);
            }
        }
    }

    fn get(&self, key: KeyInt, mut trace: Option<&mut GetTrace>) -> Result<Option<Vec<u8>>> {
        let t0 = Instant::now();
        let mut sc = StepClock::new(self.opts.step_timing);
        let mut steps = StepTimes::default();
        let (mem, imm, v) = {
            let st = self.state.read();
            (st.mem.clone(), st.imm.clone(), st.version.clone())
        };
        let mut found = mem.get(key).map(|e| e.ptr);
        if found.is_none() {
            found = imm.and_then(|m| m.get(key)).map(|e| e.ptr);
        }
        sc.mark(&mut steps, Step::SearchMemtable);
        let memtable_hit = found.is_some();
        if found.is_none() {
            let use_models = self.use_models.load(Ordering::Relaxed);
            v.visit_candidates(key, |t, idx| {
                sc.mark(&mut steps, Step::FindFiles);
                let p0 = Instant::now();
                let mut pst = StepTimes::default();
                let level = t.meta.level as usize;
                let lm = if use_models && level > 0 {
                    v.level_model(level)
                } else {
                    None
                };
                let (probe, path) = match (lm, t.model().filter(|_| use_models)) {
                    (Some(lm), _) => (
                        probe_level(t, lm, idx, key, &mut sc, &mut pst),
                        LookupPath::Model,
                    ),
                    (None, Some(m)) => {
                        (probe_model(t, m, key, &mut sc, &mut pst), LookupPath::Model)
                    }
                    (None, None) => (
                        probe_baseline(t, key, &mut sc, &mut pst),
                        LookupPath::Baseline,
                    ),
                };
                let duration_ns = if self.opts.step_timing {
                    pst.total()
                } else {
                    p0.elapsed().as_nanos() as u64
                };
                match path {
                    LookupPath::Model => &self.counters.model_lookups,
                    LookupPath::Baseline => &self.counters.baseline_lookups,
                }
                .fetch_add(1, Ordering::Relaxed);
                let rec = InternalLookupRecord {
                    file_id: t.meta.file_id,
                    level: t.meta.level,
                    outcome: if probe.found.is_some() {
                        Outcome::Positive
                    } else {
                        Outcome::Negative
                    },
                    path,
                    duration_ns,
                    steps: pst,
                };
                self.cba.record_internal_lookup(&rec);
                steps.merge(&pst);
                if let Some(tr) = trace.as_deref_mut() {
                    tr.probes.push(rec);
                }
                found = probe.found;
                found.is_some()
            });
        }
        let value = match found {
            Some(p) if !p.is_tombstone() => {
                let (k, val) = self.vlog.read(&p)?;
                if k != key {
                    return Err(Error::corrupt(format!(
                        "value log record at {} holds key {k}, expected {key}",
                        p.offset
                    )));
                }
                sc.mark(&mut steps, Step::ReadValue);
                Some(val)
            }
            _ => None,
        };
        if let Some(tr) = trace {
            tr.steps = steps;
            tr.total_ns = t0.elapsed().as_nanos() as u64;
            tr.memtable_hit = memtable_hit;
        }
        Ok(value)
    }

    /// Position of the first record `>= key` in `t`, seeking with a model
    /// when one is available.
    fn seek(&self, v: &Version, t: &Table, idx: usize, key: KeyInt) -> u64 {
        let r = &t.reader;
        if key <= t.meta.min_key {
            return 0;
        }
        if key > t.meta.max_key {
            return r.record_count();
        }
        if self.use_models.load(Ordering::Relaxed) {
            let level = t.meta.level as usize;
            if let Some(lm) = v.level_model(level).filter(|_| level > 0) {
                if let Some((lo, hi, _)) = lm.predict_in_file(key, idx) {
                    return r.lower_bound_in(key, lo, hi);
                }
            } else if let Some(p) = t.model().and_then(|m| m.predict(key)) {
                return r.lower_bound_in(key, p.lo, p.hi);
            }
        }
        r.lower_bound(key)
    }

    fn scan(&self, start: KeyInt, limit: usize) -> Result<Vec<(KeyInt, Vec<u8>)>> {
        if limit == 0 {
            return Ok(Vec::new());
        }
        let (mem, imm, v) = {
            let st = self.state.read();
            (st.mem.clone(), st.imm.clone(), st.version.clone())
        };
        type Src<'a> = std::iter::Peekable<Box<dyn Iterator<Item = (KeyInt, ValuePointer)> + 'a>>;
        let mg = mem.read();
        let ig = imm.as_ref().map(|m| m.read());
        let mut sources: Vec<Src<'_>> = Vec::new();
        sources.push((Box::new(mg.range(start..)) as Box<dyn Iterator<Item = _>>).peekable());
        if let Some(ig) = &ig {
            sources.push((Box::new(ig.range(start..)) as Box<dyn Iterator<Item = _>>).peekable());
        }
        for (i, t) in v.level(0).iter().enumerate() {
            let from = self.seek(&v, t, i, start);
            let r = &t.reader;
            let it = (from..r.record_count()).map(move |p| (r.key_at(p), r.pointer_at(p)));
            sources.push((Box::new(it) as Box<dyn Iterator<Item = _>>).peekable());
        }
        for l in 1..NUM_LEVELS {
            let files = v.level(l);
            let fi = files.partition_point(|t| t.meta.max_key < start);
            if fi == files.len() {
                continue;
            }
            let first = self.seek(&v, &files[fi], fi, start);
            let it = files[fi..].iter().enumerate().flat_map(move |(j, t)| {
                let r = &t.reader;
                let from = if j == 0 { first } else { 0 };
                (from..r.record_count()).map(move |p| (r.key_at(p), r.pointer_at(p)))
            });
            sources.push((Box::new(it) as Box<dyn Iterator<Item = _>>).peekable());
        }

        let mut heap = BinaryHeap::new();
        for (rank, s) in sources.iter_mut().enumerate() {
            if let Some(&(k, _)) = s.peek() {
                heap.push(Reverse((k, rank)));
            }
        }
        let mut out = Vec::with_capacity(limit.min(1024));
        while let Some(Reverse((k, rank))) = heap.pop() {
            let (_, ptr) = sources[rank].next().expect("peeked");
            if let Some(&(nk, _)) = sources[rank].peek() {
                heap.push(Reverse((nk, rank)));
            }
            // older versions of the same key
            while let Some(&Reverse((k2, r2))) = heap.peek() {
                if k2 != k {
                    break;
                }
                heap.pop();
                sources[r2].next();
                if let Some(&(nk, _)) = sources[r2].peek() {
                    heap.push(Reverse((nk, r2)));
                }
            }
            if ptr.is_tombstone() {
                continue;
            }
            let (_, value) = self.vlog.read(&ptr)?;
            out.push((k, value));
            if out.len() == limit {
                break;
            }
        }
        Ok(out)
    }
}
