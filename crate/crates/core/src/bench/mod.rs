//! Datasets, workloads and a single-threaded driver that reports latency
//! breakdowns, path counts, learning time and per-level file statistics.

mod dataset;
mod workload;

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use xxhash_rust::xxh3::Xxh3;

use crate::cba::FileStats;
use crate::engine::{Engine, EngineStats, LookupPath, Outcome, Step, StepTimes, STEP_COUNT};
use crate::error::Result;
use crate::plr::KeyInt;
use crate::table::NUM_LEVELS;

pub use dataset::{gen_dataset, DatasetKind, DatasetSpec, NORMAL_CENTER, NORMAL_SCALE};
pub use workload::{gen_workload, Distribution, LoadOrder, Op, WorkloadSpec};

pub const DEFAULT_VALUE_SIZE: usize = 64;

/// Deterministic value for `key` written by operation `tag`.
pub fn value_for(key: KeyInt, tag: u64, size: usize) -> Vec<u8> {
    let mut v = Vec::with_capacity(size);
    let mut x = (key as u64)
        ^ ((key >> 64) as u64).rotate_left(17)
        ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    while v.len() < size {
        // splitmix64
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        v.extend_from_slice(&z.to_le_bytes());
    }
    v.truncate(size);
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadReport {
    pub records: u64,
    pub order: LoadOrder,
    pub duration_ns: u64,
}

/// Writes every key once, in key order or shuffled, then flushes and waits
/// for compactions to settle.
pub fn load_dataset(
    engine: &Engine,
    keys: &[KeyInt],
    order: LoadOrder,
    seed: u64,
    value_size: usize,
) -> Result<LoadReport> {
    let start = Instant::now();
    let mut ordered: Vec<KeyInt> = keys.to_vec();
    if order == LoadOrder::Random {
        ordered.shuffle(&mut rand::rngs::StdRng::seed_from_u64(seed ^ 0x5eed));
    }
    for &k in &ordered {
        engine.put_int(k, &value_for(k, 0, value_size))?;
    }
    engine.flush()?;
    engine.wait_for_quiescence(false)?;
    Ok(LoadReport {
        records: keys.len() as u64,
        order,
        duration_ns: start.elapsed().as_nanos() as u64,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct RunConfig {
    pub value_size: usize,
    /// Wait for flushes, compactions and learning to finish before taking
    /// the final counters.
    pub settle: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            value_size: DEFAULT_VALUE_SIZE,
            settle: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LatencySummary {
    pub mean_ns: f64,
    pub p50_ns: u64,
    pub p90_ns: u64,
    pub p99_ns: u64,
    pub max_ns: u64,
}

impl LatencySummary {
    pub fn from_samples(mut s: Vec<u64>) -> Self {
        if s.is_empty() {
            return Self::default();
        }
        s.sort_unstable();
        let pct = |p: f64| s[((s.len() - 1) as f64 * p).round() as usize];
        LatencySummary {
            mean_ns: s.iter().sum::<u64>() as f64 / s.len() as f64,
            p50_ns: pct(0.5),
            p90_ns: pct(0.9),
            p99_ns: pct(0.99),
            max_ns: *s.last().unwrap(),
        }
    }
}

/// Internal lookups of one path.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PathSummary {
    pub positive: u64,
    pub negative: u64,
    pub total_ns: u64,
}

impl PathSummary {
    pub fn count(&self) -> u64 {
        self.positive + self.negative
    }

    pub fn mean_ns(&self) -> Option<f64> {
        (self.count() > 0).then(|| self.total_ns as f64 / self.count() as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchReport {
    pub ops: u64,
    pub gets: u64,
    pub puts: u64,
    pub found: u64,
    pub foreground_ns: u64,
    pub settle_ns: u64,
    pub get_latency: LatencySummary,
    /// Mean per-get time of each step, zero for steps that never ran.
    pub step_means_ns: [f64; STEP_COUNT],
    pub model: PathSummary,
    pub baseline: PathSummary,
    pub learning_ns: u64,
    pub compaction_ns: u64,
    pub files_learned: u64,
    pub levels_learned: u64,
    pub level_learn_failed: u64,
    pub cba_skipped: u64,
    pub flushes: u64,
    pub compactions: u64,
    /// Hash over every get's key and result.
    pub checksum: u64,
    /// Set when an operation failed and the run stopped early.
    pub error: Option<String>,
}

impl BenchReport {
    pub fn internal_lookups(&self) -> u64 {
        self.model.count() + self.baseline.count()
    }

    pub fn negative_lookups(&self) -> u64 {
        self.model.negative + self.baseline.negative
    }

    pub fn positive_lookups(&self) -> u64 {
        self.model.positive + self.baseline.positive
    }

    pub fn throughput(&self) -> f64 {
        if self.foreground_ns == 0 {
            return 0.0;
        }
        self.ops as f64 / (self.foreground_ns as f64 / 1e9)
    }

    /// Foreground plus learning plus compaction time.
    pub fn total_ns(&self) -> u64 {
        self.foreground_ns + self.learning_ns + self.compaction_ns
    }

    pub fn step_sum_ns(&self) -> f64 {
        self.step_means_ns.iter().sum()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let ms = |ns: u64| ns as f64 / 1e6;
        let _ = writeln!(
            s,
            "ops {:>12}   gets {:>10}   puts {:>10}   found {:>10}",
            self.ops, self.gets, self.puts, self.found
        );
        let _ = writeln!(s, "throughput          {:>12.0} ops/s", self.throughput());
        let l = &self.get_latency;
        let _ = writeln!(
            s,
            "get latency (us)    mean {:.3}  p50 {:.3}  p90 {:.3}  p99 {:.3}  max {:.3}",
            l.mean_ns / 1e3,
            l.p50_ns as f64 / 1e3,
            l.p90_ns as f64 / 1e3,
            l.p99_ns as f64 / 1e3,
            l.max_ns as f64 / 1e3
        );
        let _ = writeln!(
            s,
            "time (ms)           foreground {:.1}  learning {:.1}  compaction {:.1}  total {:.1}",
            ms(self.foreground_ns),
            ms(self.learning_ns),
            ms(self.compaction_ns),
            ms(self.total_ns())
        );
        if self.step_sum_ns() > 0.0 {
            let _ = writeln!(s, "\n{:<12} {:>12}", "step", "mean ns/get");
            for step in Step::ALL {
                let v = self.step_means_ns[step as usize];
                if v > 0.0 {
                    let _ = writeln!(s, "{:<12} {:>12.1}", step.name(), v);
                }
            }
            let _ = writeln!(s, "{:<12} {:>12.1}", "sum", self.step_sum_ns());
        }
        let _ = writeln!(
            s,
            "\n{:<10} {:>10} {:>10} {:>12}",
            "path", "positive", "negative", "mean ns"
        );
        for (name, p) in [("model", &self.model), ("baseline", &self.baseline)] {
            let _ = writeln!(
                s,
                "{:<10} {:>10} {:>10} {:>12}",
                name,
                p.positive,
                p.negative,
                p.mean_ns().map_or("-".into(), |m| format!("{m:.1}"))
            );
        }
        let _ = writeln!(s, "\nlearned files {}  levels {}  failed level learnings {}  cba skips {}  flushes {}  compactions {}",
            self.files_learned, self.levels_learned, self.level_learn_failed, self.cba_skipped, self.flushes, self.compactions);
        if let Some(e) = &self.error {
            let _ = writeln!(s, "PARTIAL: {e}");
        }
        s
    }

    /// `key=value` lines for machines.
    pub fn kv(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("ops", self.ops.to_string());
        kv("gets", self.gets.to_string());
        kv("puts", self.puts.to_string());
        kv("found", self.found.to_string());
        kv("throughput_ops", format!("{:.1}", self.throughput()));
        kv("get_mean_ns", format!("{:.1}", self.get_latency.mean_ns));
        kv("get_p50_ns", self.get_latency.p50_ns.to_string());
        kv("get_p99_ns", self.get_latency.p99_ns.to_string());
        for step in Step::ALL {
            kv(
                &format!("step_{}_ns", step.name()),
                format!("{:.1}", self.step_means_ns[step as usize]),
            );
        }
        kv("model_lookups", self.model.count().to_string());
        kv("baseline_lookups", self.baseline.count().to_string());
        kv("negative_lookups", self.negative_lookups().to_string());
        kv("positive_lookups", self.positive_lookups().to_string());
        kv(
            "model_lookup_mean_ns",
            self.model
                .mean_ns()
                .map_or("-".into(), |m| format!("{m:.1}")),
        );
        kv(
            "baseline_lookup_mean_ns",
            self.baseline
                .mean_ns()
                .map_or("-".into(), |m| format!("{m:.1}")),
        );
        kv("foreground_ns", self.foreground_ns.to_string());
        kv("learning_ns", self.learning_ns.to_string());
        kv("compaction_ns", self.compaction_ns.to_string());
        kv("total_ns", self.total_ns().to_string());
        kv("files_learned", self.files_learned.to_string());
        kv("levels_learned", self.levels_learned.to_string());
        kv("level_learn_failed", self.level_learn_failed.to_string());
        kv("cba_skipped", self.cba_skipped.to_string());
        kv("checksum", format!("{:016x}", self.checksum));
        kv("partial", self.error.is_some().to_string());
        s
    }
}

/// Executes `ops` on the calling thread.
pub fn run_workload(engine: &Engine, ops: &[Op], cfg: RunConfig) -> Result<BenchReport> {
    let before = engine.stats();
    let mut r = BenchReport::default();
    let mut lat = Vec::with_capacity(ops.len());
    let mut steps = StepTimes::default();
    let mut hash = Xxh3::new();
    let start = Instant::now();
    for (i, op) in ops.iter().enumerate() {
        let res = match *op {
            Op::Put(k) => {
                r.puts += 1;
                engine.put_int(k, &value_for(k, i as u64 + 1, cfg.value_size))
            }
            Op::Get(k) => engine.get_traced(k).map(|(v, trace)| {
                r.gets += 1;
                lat.push(trace.total_ns);
                steps.merge(&trace.steps);
                for p in &trace.probes {
                    let ps = match p.path {
                        LookupPath::Model => &mut r.model,
                        LookupPath::Baseline => &mut r.baseline,
                    };
                    match p.outcome {
                        Outcome::Positive => ps.positive += 1,
                        Outcome::Negative => ps.negative += 1,
                    }
                    ps.total_ns += p.duration_ns;
                }
                hash.update(&k.to_le_bytes());
                match v {
                    Some(v) => {
                        r.found += 1;
                        hash.update(&(v.len() as u32).to_le_bytes());
                        hash.update(&v);
                    }
                    None => hash.update(&[0xff; 4]),
                }
            }),
        };
        if let Err(e) = res {
            r.error = Some(format!("operation {i} ({op:?}): {e}"));
            break;
        }
        r.ops += 1;
    }
    r.foreground_ns = start.elapsed().as_nanos() as u64;
    if cfg.settle && r.error.is_none() {
        let t = Instant::now();
        engine.wait_for_quiescence(true)?;
        r.settle_ns = t.elapsed().as_nanos() as u64;
    }
    r.get_latency = LatencySummary::from_samples(lat);
    if r.gets > 0 {
        for step in Step::ALL {
            r.step_means_ns[step as usize] = steps.get(step) as f64 / r.gets as f64;
        }
    }
    r.checksum = hash.digest();
    let after = engine.stats();
    fill_deltas(&mut r, &before, &after);
    Ok(r)
}

fn fill_deltas(r: &mut BenchReport, b: &EngineStats, a: &EngineStats) {
    r.learning_ns = a.learning_ns - b.learning_ns;
    r.compaction_ns = a.compaction_ns - b.compaction_ns;
    r.files_learned = a.files_learned - b.files_learned;
    r.levels_learned = a.levels_learned - b.levels_learned;
    r.level_learn_failed = a.level_learn_failed - b.level_learn_failed;
    r.cba_skipped = a.cba_skipped - b.cba_skipped;
    r.flushes = a.flushes - b.flushes;
    r.compactions = a.compactions - b.compactions;
}

/// Lifetime and lookup statistics of one level.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LevelFileStats {
    pub level: u8,
    pub completed_files: usize,
    pub live_files: usize,
    pub mean_lifetime_ms: f64,
    pub p50_lifetime_ms: f64,
    pub p90_lifetime_ms: f64,
    pub mean_completed_lifetime_ms: Option<f64>,
    pub mean_pos_lookups: f64,
    pub mean_neg_lookups: f64,
}

/// Per-level file statistics over the window starting at `since` (store
/// clock nanoseconds). Files created earlier count as created at `since`;
/// files deleted earlier are left out; files still live are measured up to
/// now, so their lifetimes are lower bounds.
pub fn report_file_stats(engine: &Engine, since: u64) -> Vec<LevelFileStats> {
    let now = engine.clock().now_nanos();
    let cba = engine.cba();
    let lifetime = |f: &FileStats| {
        f.deleted_at
            .unwrap_or(now)
            .saturating_sub(f.created_at.max(since))
    };
    let completed: Vec<FileStats> = cba
        .completed_files()
        .into_iter()
        .filter(|f| f.deleted_at.is_some_and(|d| d >= since))
        .collect();
    let live = cba.live_files();
    let mut out = Vec::new();
    for level in 0..NUM_LEVELS as u8 {
        let done: Vec<&FileStats> = completed.iter().filter(|f| f.level == level).collect();
        let alive: Vec<&FileStats> = live.iter().filter(|f| f.level == level).collect();
        if done.is_empty() && alive.is_empty() {
            continue;
        }
        let all: Vec<&FileStats> = done.iter().chain(&alive).copied().collect();
        let n = all.len() as f64;
        let mut lifetimes: Vec<u64> = all.iter().map(|f| lifetime(f)).collect();
        lifetimes.sort_unstable();
        let pct =
            |p: f64| lifetimes[((lifetimes.len() - 1) as f64 * p).round() as usize] as f64 / 1e6;
        out.push(LevelFileStats {
            level,
            completed_files: done.len(),
            live_files: alive.len(),
            mean_lifetime_ms: lifetimes.iter().sum::<u64>() as f64 / n / 1e6,
            p50_lifetime_ms: pct(0.5),
            p90_lifetime_ms: pct(0.9),
            mean_completed_lifetime_ms: (!done.is_empty()).then(|| {
                done.iter().map(|f| lifetime(f)).sum::<u64>() as f64 / done.len() as f64 / 1e6
            }),
            mean_pos_lookups: all.iter().map(|f| f.n_pos()).sum::<u64>() as f64 / n,
            mean_neg_lookups: all.iter().map(|f| f.n_neg()).sum::<u64>() as f64 / n,
        });
    }
    out
}

pub fn render_file_stats(levels: &[LevelFileStats]) -> String {
    let mut s = format!(
        "{:<5} {:>9} {:>6} {:>14} {:>12} {:>12} {:>12} {:>12}\n",
        "level",
        "completed",
        "live",
        "mean_life_ms",
        "p50_life_ms",
        "p90_life_ms",
        "pos/file",
        "neg/file"
    );
    for l in levels {
        let _ = writeln!(
            s,
            "{:<5} {:>9} {:>6} {:>14.1} {:>12.1} {:>12.1} {:>12.1} {:>12.1}",
            l.level,
            l.completed_files,
            l.live_files,
            l.mean_lifetime_ms,
            l.p50_lifetime_ms,
            l.p90_lifetime_ms,
            l.mean_pos_lookups,
            l.mean_neg_lookups
        );
    }
    s
}
