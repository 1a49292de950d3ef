//! Cost-benefit analyzer.
//!
//! Tracks per-file lookup counts and timings while files are live, folds
//! them into per-level running aggregates once a file is deleted, and uses
//! those aggregates to estimate whether training a model for a new file
//! will save more lookup time than the training costs.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::OnceLock;
use std::time::Instant;

use parking_lot::Mutex;

use crate::engine::{InternalLookupRecord, LookupPath, Outcome};
use crate::plr::{KeyInt, PlrModel};
use crate::table::{SSTableMeta, NUM_LEVELS};

pub const DEFAULT_S_MIN: u64 = 10;

const NEG: usize = 0;
const POS: usize = 1;
const BASE: usize = 0;
const MODEL: usize = 1;

fn oi(o: Outcome) -> usize {
    match o {
        Outcome::Negative => NEG,
        Outcome::Positive => POS,
    }
}

fn pi(p: LookupPath) -> usize {
    match p {
        LookupPath::Baseline => BASE,
        LookupPath::Model => MODEL,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileStats {
    pub file_id: u64,
    pub level: u8,
    pub created_at: u64,
    pub deleted_at: Option<u64>,
    pub record_count: u64,
    /// Indexed `[outcome][path]`.
    counts: [[u64; 2]; 2],
    dur_ns: [[u64; 2]; 2],
}

impl FileStats {
    pub fn new(meta: &SSTableMeta) -> Self {
        FileStats {
            file_id: meta.file_id,
            level: meta.level,
            created_at: meta.created_at,
            record_count: meta.record_count,
            ..Default::default()
        }
    }

    pub fn n_neg(&self) -> u64 {
        self.counts[NEG][BASE] + self.counts[NEG][MODEL]
    }

    pub fn n_pos(&self) -> u64 {
        self.counts[POS][BASE] + self.counts[POS][MODEL]
    }

    pub fn count(&self, outcome: Outcome, path: LookupPath) -> u64 {
        self.counts[oi(outcome)][pi(path)]
    }

    /// Mean internal lookup duration in nanoseconds.
    pub fn mean_ns(&self, outcome: Outcome, path: LookupPath) -> Option<f64> {
        let (o, p) = (oi(outcome), pi(path));
        (self.counts[o][p] > 0).then(|| self.dur_ns[o][p] as f64 / self.counts[o][p] as f64)
    }

    pub fn lifetime_ns(&self, now: u64) -> u64 {
        self.deleted_at
            .unwrap_or(now)
            .saturating_sub(self.created_at)
    }

    fn record(&mut self, outcome: Outcome, path: LookupPath, ns: u64) {
        self.counts[oi(outcome)][pi(path)] += 1;
        self.dur_ns[oi(outcome)][pi(path)] += ns;
    }
}

/// Running aggregates over completed, not-short-lived files of one level.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LevelStats {
    pub completed: u64,
    sum_n_neg: u64,
    sum_n_pos: u64,
    sum_records: u64,
    sum_lifetime_ns: u64,
    counts: [[u64; 2]; 2],
    dur_ns: [[u64; 2]; 2],
}

impl LevelStats {
    fn fold(&mut self, f: &FileStats, lifetime_ns: u64) {
        self.completed += 1;
        self.sum_n_neg += f.n_neg();
        self.sum_n_pos += f.n_pos();
        self.sum_records += f.record_count;
        self.sum_lifetime_ns += lifetime_ns;
        for o in 0..2 {
            for p in 0..2 {
                self.counts[o][p] += f.counts[o][p];
                self.dur_ns[o][p] += f.dur_ns[o][p];
            }
        }
    }

    fn avg(sum: u64, n: u64) -> Option<f64> {
        (n > 0).then(|| sum as f64 / n as f64)
    }

    pub fn mean_n_neg(&self) -> Option<f64> {
        Self::avg(self.sum_n_neg, self.completed)
    }

    pub fn mean_n_pos(&self) -> Option<f64> {
        Self::avg(self.sum_n_pos, self.completed)
    }

    pub fn mean_records(&self) -> Option<f64> {
        Self::avg(self.sum_records, self.completed)
    }

    pub fn mean_lifetime_ns(&self) -> Option<f64> {
        Self::avg(self.sum_lifetime_ns, self.completed)
    }

    pub fn mean_ns(&self, outcome: Outcome, path: LookupPath) -> Option<f64> {
        let (o, p) = (oi(outcome), pi(path));
        Self::avg(self.dur_ns[o][p], self.counts[o][p])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Learn,
    Skip,
    BootstrapLearn,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbaDecision {
    pub verdict: Verdict,
    pub c_model_ns: f64,
    pub b_model_ns: f64,
    pub priority: f64,
}

impl CbaDecision {
    pub fn enqueue(&self) -> bool {
        self.verdict != Verdict::Skip
    }
}

/// Quantities entering the benefit estimate. Times in nanoseconds, counts
/// already scaled to the file's size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenefitInputs {
    pub t_nb: f64,
    pub t_nm: f64,
    pub n_n: f64,
    pub t_pb: f64,
    pub t_pm: f64,
    pub n_p: f64,
}

/// `(T_nb - T_nm) * N_n + (T_pb - T_pm) * N_p`, each term floored at zero.
pub fn benefit(i: &BenefitInputs) -> f64 {
    (i.t_nb - i.t_nm).max(0.0) * i.n_n + (i.t_pb - i.t_pm).max(0.0) * i.n_p
}

/// Learn iff benefit exceeds cost; priority is their difference.
pub fn decide(b_model_ns: f64, c_model_ns: f64) -> CbaDecision {
    let verdict = if b_model_ns > c_model_ns {
        Verdict::Learn
    } else {
        Verdict::Skip
    };
    CbaDecision {
        verdict,
        c_model_ns,
        b_model_ns,
        priority: b_model_ns - c_model_ns,
    }
}

/// Average training time per point, measured once per process over one
/// million synthetic keys.
pub fn calibrated_train_ns_per_point() -> f64 {
    static CAL: OnceLock<f64> = OnceLock::new();
    *CAL.get_or_init(|| {
        let mut x: u64 = 0x2545_f491_4f6c_dd1d;
        let mut k: KeyInt = 0;
        let keys: Vec<KeyInt> = (0..1_000_000)
            .map(|_| {
                x ^= x << 13;
                x ^= x >> 7;
                x ^= x << 17;
                k += (x % 64) as KeyInt + 1;
                k
            })
            .collect();
        let t = Instant::now();
        let m = PlrModel::fit(&keys, crate::plr::DEFAULT_DELTA).expect("calibration keys sorted");
        let ns = t.elapsed().as_nanos() as f64 / keys.len() as f64;
        std::hint::black_box(m);
        ns
    })
}

#[derive(Debug, Clone, Copy)]
pub struct CbaConfig {
    /// Completed files a level needs before leaving always-learn mode.
    pub s_min: u64,
    /// Files that lived less than this are excluded from level aggregates.
    pub short_lived_ns: u64,
    pub train_ns_per_point: f64,
}

#[derive(Default)]
struct Inner {
    live: HashMap<u64, FileStats>,
    completed: Vec<FileStats>,
    levels: [LevelStats; NUM_LEVELS],
    dropped: u64,
}

pub struct Cba {
    cfg: CbaConfig,
    inner: Mutex<Inner>,
}

impl Cba {
    pub fn new(cfg: CbaConfig) -> Self {
        Cba {
            cfg,
            inner: Mutex::new(Inner::default()),
        }
    }

    pub fn config(&self) -> &CbaConfig {
        &self.cfg
    }

    pub fn on_file_created(&self, meta: &SSTableMeta) {
        self.inner
            .lock()
            .live
            .insert(meta.file_id, FileStats::new(meta));
    }

    /// Returns `false` when the file is no longer tracked and the record
    /// was dropped.
    pub fn record_internal_lookup(&self, rec: &InternalLookupRecord) -> bool {
        let mut g = self.inner.lock();
        match g.live.get_mut(&rec.file_id) {
            Some(f) => {
                f.record(rec.outcome, rec.path, rec.duration_ns);
                true
            }
            None => {
                g.dropped += 1;
                false
            }
        }
    }

    /// Moves a file's statistics to the completed set and, unless it was
    /// short-lived, into its level's aggregates.
    pub fn on_file_deleted(&self, file_id: u64, now: u64) -> Option<FileStats> {
        let mut g = self.inner.lock();
        let mut f = g.live.remove(&file_id)?;
        f.deleted_at = Some(now);
        let lifetime = f.lifetime_ns(now);
        if lifetime >= self.cfg.short_lived_ns {
            let level = f.level as usize;
            g.levels[level].fold(&f, lifetime);
        }
        g.completed.push(f.clone());
        Some(f)
    }

    /// `C_model`: estimated training time in nanoseconds.
    pub fn estimate_cost(&self, record_count: u64) -> f64 {
        self.cfg.train_ns_per_point * record_count as f64
    }

    fn model_time(g: &Inner, level: usize, outcome: Outcome) -> Option<f64> {
        g.levels[level]
            .mean_ns(outcome, LookupPath::Model)
            .or_else(|| pooled(&g.levels, outcome, LookupPath::Model))
    }

    fn baseline_time(g: &Inner, own: Option<&FileStats>, level: usize, outcome: Outcome) -> f64 {
        own.and_then(|f| f.mean_ns(outcome, LookupPath::Baseline))
            .or_else(|| g.levels[level].mean_ns(outcome, LookupPath::Baseline))
            .or_else(|| pooled(&g.levels, outcome, LookupPath::Baseline))
            .unwrap_or(0.0)
    }

    fn inputs(
        &self,
        g: &Inner,
        own: Option<&FileStats>,
        level: usize,
        record_count: u64,
    ) -> Option<BenefitInputs> {
        let ls = &g.levels[level];
        if ls.completed < self.cfg.s_min {
            return None;
        }
        let t_nm = Self::model_time(g, level, Outcome::Negative)?;
        let t_pm = Self::model_time(g, level, Outcome::Positive)?;
        let mean_records = ls.mean_records()?;
        let f = if mean_records > 0.0 {
            record_count as f64 / mean_records
        } else {
            1.0
        };
        Some(BenefitInputs {
            t_nb: Self::baseline_time(g, own, level, Outcome::Negative),
            t_nm,
            n_n: ls.mean_n_neg()? * f,
            t_pb: Self::baseline_time(g, own, level, Outcome::Positive),
            t_pm,
            n_p: ls.mean_n_pos()? * f,
        })
    }

    /// `B_model` for a live file, or `None` while its level is still
    /// bootstrapping.
    pub fn estimate_benefit(&self, file_id: u64) -> Option<f64> {
        let g = self.inner.lock();
        let own = g.live.get(&file_id)?;
        self.inputs(&g, Some(own), own.level as usize, own.record_count)
            .map(|i| benefit(&i))
    }

    pub fn should_learn(&self, file_id: u64) -> CbaDecision {
        let g = self.inner.lock();
        let Some(own) = g.live.get(&file_id) else {
            return decide(0.0, 0.0);
        };
        let c = self.estimate_cost(own.record_count);
        match self.inputs(&g, Some(own), own.level as usize, own.record_count) {
            None => bootstrap(c),
            Some(i) => decide(benefit(&i), c),
        }
    }

    /// Same analysis for a whole level treated as one learning target.
    pub fn should_learn_level(&self, level: u8, record_count: u64) -> CbaDecision {
        let g = self.inner.lock();
        let c = self.estimate_cost(record_count);
        match self.inputs(&g, None, level as usize, record_count) {
            None => bootstrap(c),
            Some(i) => decide(benefit(&i), c),
        }
    }

    pub fn file_stats(&self, file_id: u64) -> Option<FileStats> {
        self.inner.lock().live.get(&file_id).cloned()
    }

    pub fn level_stats(&self, level: u8) -> LevelStats {
        self.inner.lock().levels[level as usize].clone()
    }

    pub fn dropped_records(&self) -> u64 {
        self.inner.lock().dropped
    }

    pub fn completed_files(&self) -> Vec<FileStats> {
        self.inner.lock().completed.clone()
    }

    pub fn live_files(&self) -> Vec<FileStats> {
        let mut v: Vec<_> = self.inner.lock().live.values().cloned().collect();
        v.sort_by_key(|f| f.file_id);
        v
    }

    /// Tab-separated dump: one row per completed file, then one aggregate
    /// row per level (file_id column `*`).
    pub fn dump_tsv(&self) -> String {
        let g = self.inner.lock();
        let mut out = String::from(
            "level\tfile_id\tlifetime_ms\tn_pos\tn_neg\tt_pb_us\tt_nb_us\tt_pm_us\tt_nm_us\trecords\n",
        );
        let us = |v: Option<f64>| {
            v.map(|ns| format!("{:.3}", ns / 1e3))
                .unwrap_or_else(|| "-".into())
        };
        for f in &g.completed {
            let _ = writeln!(
                out,
                "{}\t{}\t{:.3}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                f.level,
                f.file_id,
                f.lifetime_ns(0) as f64 / 1e6,
                f.n_pos(),
                f.n_neg(),
                us(f.mean_ns(Outcome::Positive, LookupPath::Baseline)),
                us(f.mean_ns(Outcome::Negative, LookupPath::Baseline)),
                us(f.mean_ns(Outcome::Positive, LookupPath::Model)),
                us(f.mean_ns(Outcome::Negative, LookupPath::Model)),
                f.record_count
            );
        }
        for (level, ls) in g.levels.iter().enumerate() {
            if ls.completed == 0 {
                continue;
            }
            let _ = writeln!(
                out,
                "{}\t*\t{:.3}\t{:.1}\t{:.1}\t{}\t{}\t{}\t{}\t{:.0}",
                level,
                ls.mean_lifetime_ns().unwrap_or(0.0) / 1e6,
                ls.mean_n_pos().unwrap_or(0.0),
                ls.mean_n_neg().unwrap_or(0.0),
                us(ls.mean_ns(Outcome::Positive, LookupPath::Baseline)),
                us(ls.mean_ns(Outcome::Negative, LookupPath::Baseline)),
                us(ls.mean_ns(Outcome::Positive, LookupPath::Model)),
                us(ls.mean_ns(Outcome::Negative, LookupPath::Model)),
                ls.mean_records().unwrap_or(0.0)
            );
        }
        out
    }
}

fn bootstrap(c: f64) -> CbaDecision {
    CbaDecision {
        verdict: Verdict::BootstrapLearn,
        c_model_ns: c,
        b_model_ns: 0.0,
        priority: 0.0,
    }
}

fn pooled(levels: &[LevelStats], outcome: Outcome, path: LookupPath) -> Option<f64> {
    let (o, p) = (oi(outcome), pi(path));
    let n: u64 = levels.iter().map(|l| l.counts[o][p]).sum();
    let d: u64 = levels.iter().map(|l| l.dur_ns[o][p]).sum();
    (n > 0).then(|| d as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::StepTimes;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn cfg() -> CbaConfig {
        CbaConfig {
            s_min: 2,
            short_lived_ns: 100,
            train_ns_per_point: 10.0,
        }
    }

    fn meta(id: u64, level: u8, records: u64, created: u64) -> SSTableMeta {
        SSTableMeta {
            file_id: id,
            level,
            min_key: 0,
            max_key: 1,
            record_count: records,
            created_at: created,
            max_seq: 0,
            file_size: 0,
        }
    }

    fn rec(id: u64, outcome: Outcome, path: LookupPath, ns: u64) -> InternalLookupRecord {
        InternalLookupRecord {
            file_id: id,
            level: 1,
            outcome,
            path,
            duration_ns: ns,
            steps: StepTimes::default(),
        }
    }

    #[test]
    fn one_positive_lookup() {
        let cba = Cba::new(cfg());
        cba.on_file_created(&meta(1, 1, 10, 0));
        assert!(cba.record_internal_lookup(&rec(1, Outcome::Positive, LookupPath::Baseline, 6000)));
        let f = cba.file_stats(1).unwrap();
        assert_eq!(f.n_pos(), 1);
        assert_eq!(
            f.mean_ns(Outcome::Positive, LookupPath::Baseline),
            Some(6000.0)
        );
    }

    #[test]
    fn lookups_after_deletion_are_dropped() {
        let cba = Cba::new(cfg());
        cba.on_file_created(&meta(1, 1, 10, 0));
        cba.on_file_deleted(1, 500);
        assert!(!cba.record_internal_lookup(&rec(1, Outcome::Negative, LookupPath::Baseline, 1)));
        assert!(!cba.record_internal_lookup(&rec(9, Outcome::Negative, LookupPath::Baseline, 1)));
        assert_eq!(cba.dropped_records(), 2);
    }

    #[test]
    fn interleaved_counts_match_event_log() {
        let cba = Cba::new(cfg());
        for id in 0..5 {
            cba.on_file_created(&meta(id, 1, 10, 0));
        }
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let mut log = Vec::new();
        for _ in 0..2000 {
            let r = rec(
                rng.random_range(0..5),
                if rng.random_bool(0.4) {
                    Outcome::Positive
                } else {
                    Outcome::Negative
                },
                if rng.random_bool(0.5) {
                    LookupPath::Model
                } else {
                    LookupPath::Baseline
                },
                rng.random_range(1..10_000),
            );
            cba.record_internal_lookup(&r);
            log.push(r);
        }
        for id in 0..5u64 {
            let f = cba.file_stats(id).unwrap();
            let mine: Vec<_> = log.iter().filter(|r| r.file_id == id).collect();
            assert_eq!(
                f.n_pos(),
                mine.iter()
                    .filter(|r| r.outcome == Outcome::Positive)
                    .count() as u64
            );
            assert_eq!(
                f.n_neg(),
                mine.iter()
                    .filter(|r| r.outcome == Outcome::Negative)
                    .count() as u64
            );
            let nb: Vec<u64> = mine
                .iter()
                .filter(|r| r.outcome == Outcome::Negative && r.path == LookupPath::Baseline)
                .map(|r| r.duration_ns)
                .collect();
            let expect = nb.iter().sum::<u64>() as f64 / nb.len() as f64;
            assert_eq!(
                f.mean_ns(Outcome::Negative, LookupPath::Baseline),
                Some(expect)
            );
        }
    }

    #[test]
    fn cost_estimates() {
        let cba = Cba::new(cfg());
        assert_eq!(cba.estimate_cost(0), 0.0);
        // 10 ns per point over 100k records is 1 ms.
        assert_eq!(cba.estimate_cost(100_000), 1_000_000.0);
    }

    #[test]
    fn benefit_equation() {
        let zero = BenefitInputs {
            t_nb: 4000.0,
            t_nm: 2000.0,
            n_n: 0.0,
            t_pb: 6000.0,
            t_pm: 3000.0,
            n_p: 0.0,
        };
        assert_eq!(benefit(&zero), 0.0);
        let i = BenefitInputs {
            n_n: 1000.0,
            n_p: 500.0,
            ..zero
        };
        // 2us * 1000 + 3us * 500 = 3.5 ms
        assert_eq!(benefit(&i), 3_500_000.0);
        let doubled = BenefitInputs {
            n_n: 2000.0,
            n_p: 1000.0,
            ..zero
        };
        assert_eq!(benefit(&doubled), 7_000_000.0);
        // model slower than baseline contributes nothing
        let worse = BenefitInputs { t_nm: 9000.0, ..i };
        assert_eq!(benefit(&worse), 1_500_000.0);
    }

    #[test]
    fn decisions() {
        assert_eq!(decide(0.0, 1e6).verdict, Verdict::Skip);
        let d = decide(3.5e6, 1e6);
        assert_eq!(d.verdict, Verdict::Learn);
        assert_eq!(d.priority, 2.5e6);
        let cba = Cba::new(cfg());
        cba.on_file_created(&meta(1, 2, 100, 0));
        assert_eq!(cba.should_learn(1).verdict, Verdict::BootstrapLearn);
        assert_eq!(cba.estimate_benefit(1), None);
    }

    #[test]
    fn short_lived_files_are_filtered() {
        let cba = Cba::new(cfg());
        cba.on_file_created(&meta(1, 1, 100, 0));
        cba.record_internal_lookup(&rec(1, Outcome::Positive, LookupPath::Baseline, 10));
        cba.on_file_deleted(1, 50);
        assert_eq!(cba.level_stats(1), LevelStats::default());

        for (id, n) in [(2u64, 10u64), (3, 20)] {
            cba.on_file_created(&meta(id, 1, 100, 0));
            for _ in 0..n {
                cba.record_internal_lookup(&rec(id, Outcome::Positive, LookupPath::Baseline, 10));
            }
            cba.on_file_deleted(id, 1000);
        }
        assert_eq!(cba.level_stats(1).mean_n_pos(), Some(15.0));
    }

    #[test]
    fn aggregates_match_batch_recompute() {
        let cba = Cba::new(cfg());
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let mut events: Vec<(u64, u8, u64, u64, u64)> = Vec::new(); // id, level, lifetime, npos, nneg
        for id in 0..300u64 {
            let level = rng.random_range(0..NUM_LEVELS as u8);
            let created = rng.random_range(0..10_000u64);
            cba.on_file_created(&meta(id, level, rng.random_range(1..1000), created));
            let (np, nn) = (rng.random_range(0..50), rng.random_range(0..50));
            for _ in 0..np {
                cba.record_internal_lookup(&rec(id, Outcome::Positive, LookupPath::Model, 7));
            }
            for _ in 0..nn {
                cba.record_internal_lookup(&rec(id, Outcome::Negative, LookupPath::Baseline, 3));
            }
            let life = rng.random_range(0..400u64);
            cba.on_file_deleted(id, created + life);
            events.push((id, level, life, np, nn));
        }
        for level in 0..NUM_LEVELS as u8 {
            let kept: Vec<_> = events
                .iter()
                .filter(|e| e.1 == level && e.2 >= cfg().short_lived_ns)
                .collect();
            let ls = cba.level_stats(level);
            assert_eq!(ls.completed, kept.len() as u64);
            if kept.is_empty() {
                continue;
            }
            let mean_pos = kept.iter().map(|e| e.3).sum::<u64>() as f64 / kept.len() as f64;
            let mean_neg = kept.iter().map(|e| e.4).sum::<u64>() as f64 / kept.len() as f64;
            assert!((ls.mean_n_pos().unwrap() - mean_pos).abs() < 1e-9);
            assert!((ls.mean_n_neg().unwrap() - mean_neg).abs() < 1e-9);
        }
    }

    #[test]
    fn post_bootstrap_decision_uses_level_means() {
        let cba = Cba::new(cfg());
        // two completed level-1 files, 100 records, 1000 neg + 500 pos lookups
        // each, half of them on the model path
        for id in 0..2u64 {
            cba.on_file_created(&meta(id, 1, 100, 0));
            for i in 0..1000 {
                let path = if i % 2 == 0 {
                    LookupPath::Baseline
                } else {
                    LookupPath::Model
                };
                let ns = if path == LookupPath::Baseline {
                    4000
                } else {
                    2000
                };
                cba.record_internal_lookup(&rec(id, Outcome::Negative, path, ns));
            }
            for i in 0..500 {
                let path = if i % 2 == 0 {
                    LookupPath::Baseline
                } else {
                    LookupPath::Model
                };
                let ns = if path == LookupPath::Baseline {
                    6000
                } else {
                    3000
                };
                cba.record_internal_lookup(&rec(id, Outcome::Positive, path, ns));
            }
            cba.on_file_deleted(id, 1_000_000);
        }
        // new file twice the mean size, no lookups of its own yet
        cba.on_file_created(&meta(10, 1, 200, 0));
        let b = cba.estimate_benefit(10).unwrap();
        assert_eq!(b, 2.0 * 3_500_000.0);
        let d = cba.should_learn(10);
        assert_eq!(d.verdict, Verdict::Learn);
        assert_eq!(d.c_model_ns, 2000.0);
    }

    proptest! {
        #[test]
        fn more_lookups_never_flip_learn_to_skip(
            t_nb in 0.0f64..1e4, t_nm in 0.0f64..1e4, t_pb in 0.0f64..1e4, t_pm in 0.0f64..1e4,
            n_n in 0.0f64..1e6, n_p in 0.0f64..1e6, extra_n in 0.0f64..1e6, extra_p in 0.0f64..1e6,
            c in 0.0f64..1e9,
        ) {
            let base = BenefitInputs { t_nb, t_nm, n_n, t_pb, t_pm, n_p };
            let more = BenefitInputs { n_n: n_n + extra_n, n_p: n_p + extra_p, ..base };
            if decide(benefit(&base), c).verdict == Verdict::Learn {
                prop_assert_eq!(decide(benefit(&more), c).verdict, Verdict::Learn);
            }
        }

        #[test]
        fn bigger_files_never_flip_skip_to_learn(
            b in 0.0f64..1e9, records in 1u64..1_000_000, extra in 0u64..1_000_000, c_pt in 0.001f64..100.0,
        ) {
            let cost = |r: u64| c_pt * r as f64;
            if decide(b, cost(records)).verdict == Verdict::Skip {
                prop_assert_eq!(decide(b, cost(records + extra)).verdict, Verdict::Skip);
            }
        }
    }
}
