//! Acceptance suite: eight criteria, run one after another inside a single
//! test so the timing-sensitive ones never share the machine with each
//! other. Each criterion prints one PASS/FAIL line; the test fails if any
//! criterion does.
//!
//! `ACCEPTANCE_ONLY=3,6` restricts the run to the listed criteria.

use std::collections::BTreeMap;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use learned_lsm::bench::{
    gen_dataset, gen_workload, load_dataset, report_file_stats, run_workload, value_for,
    DatasetKind, DatasetSpec, Distribution, LoadOrder, Op, RunConfig, WorkloadSpec,
};
use learned_lsm::clock::VirtualClock;
use learned_lsm::learner::wait_policy;
use learned_lsm::plr::{KeyInt, PlrModel};
use learned_lsm::{CbaMode, Engine, LearningMode, Options, TWait};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

const CRITERIA: [Criterion; 8] = [
    Criterion {
        id: 1,
        name: "delta-soundness",
        budget: Duration::from_secs(60),
        run: delta_soundness,
    },
    Criterion {
        id: 2,
        name: "oracle equivalence",
        budget: Duration::from_secs(300),
        run: oracle_equivalence,
    },
    Criterion {
        id: 3,
        name: "linear dataset segment count",
        budget: Duration::from_secs(300),
        run: linear_segments,
    },
    Criterion {
        id: 4,
        name: "lookup speedup",
        budget: Duration::from_secs(300),
        run: lookup_speedup,
    },
    Criterion {
        id: 5,
        name: "cost-benefit efficiency",
        budget: Duration::from_secs(600),
        run: cba_efficiency,
    },
    Criterion {
        id: 6,
        name: "wait-policy competitiveness",
        budget: Duration::from_secs(60),
        run: wait_policy_ratio,
    },
    Criterion {
        id: 7,
        name: "measurement-study shapes",
        budget: Duration::from_secs(600),
        run: study_shapes,
    },
    Criterion {
        id: 8,
        name: "delta tradeoff",
        budget: Duration::from_secs(300),
        run: delta_tradeoff,
    },
];

#[test]
fn acceptance() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for c in &CRITERIA {
        if only.as_ref().is_some_and(|o| !o.contains(&c.id)) {
            continue;
        }
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = start.elapsed();
        let res = match res {
            Ok(d) if took > c.budget => Err(format!(
                "{d}; took {:.1}s, budget {}s",
                took.as_secs_f64(),
                c.budget.as_secs()
            )),
            r => r,
        };
        let (tag, detail) = match &res {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        // written straight to stderr so the line survives output capture
        let _ = writeln!(
            std::io::stderr().lock(),
            "criterion {} {:<30} {} ({:.1}s) {}",
            c.id,
            c.name,
            tag,
            took.as_secs_f64(),
            detail
        );
        if res.is_err() {
            failed.push(c.id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

fn sync_opts(memtable_records: usize, file_records: usize, divisor: u64) -> Options {
    Options {
        memtable_bytes: memtable_records * 32,
        max_file_bytes: file_records * 32,
        level_size_divisor: divisor,
        background: false,
        clock: Some(Arc::new(VirtualClock::new())),
        train_ns_per_point: Some(20.0),
        ..Options::default()
    }
}

fn dataset(kind: DatasetKind, n: u64, seed: u64) -> Vec<KeyInt> {
    gen_dataset(&DatasetSpec::new(kind, n).seed(seed)).expect("dataset")
}

/// Loads keys into a fresh store and settles compactions.
fn loaded(dir: &Path, opts: Options, keys: &[KeyInt], order: LoadOrder) -> Engine {
    let e = Engine::open(dir, opts).expect("open");
    load_dataset(&e, keys, order, 7, 16).expect("load");
    e.compact_until_settled().expect("settle");
    e
}

/// Compacts everything into the deepest populated level.
fn compact_fully(e: &Engine) {
    e.compact_until_settled().unwrap();
    for level in 0..6 {
        let deepest = e.version().deepest_populated_level().unwrap_or(0);
        if level >= deepest {
            break;
        }
        while !e.version().level(level).is_empty() {
            e.compact_level(level).unwrap();
        }
    }
}

// 1 -----------------------------------------------------------------------

fn delta_soundness() -> Outcome {
    let mut files = 0;
    let mut keys_checked = 0u64;
    for (i, kind) in DatasetKind::SYNTHETIC.into_iter().enumerate() {
        let d = tempfile::tempdir().unwrap();
        let keys = dataset(kind.clone(), 250_000, i as u64);
        let e = loaded(
            d.path(),
            sync_opts(8192, 16384, 16),
            &keys,
            LoadOrder::Random,
        );
        e.learn_all_now().unwrap();
        let v = e.version();
        for t in v.tables() {
            let m = t
                .model()
                .ok_or_else(|| format!("{kind}: file {} unlearned", t.file_id()))?;
            ensure!(m.delta() == 8, "{kind}: model delta {}", m.delta());
            for (pos, k) in t.reader.keys().into_iter().enumerate() {
                let p = m
                    .predict(k)
                    .ok_or_else(|| format!("{kind}: key {k} outside model range"))?;
                ensure!(
                    p.contains(pos as u64) && p.pos.abs_diff(pos as u64) <= 8,
                    "{kind}: file {} key {k} at {pos}, predicted {}",
                    t.file_id(),
                    p.pos
                );
                keys_checked += 1;
            }
            files += 1;
        }
    }
    ensure!(keys_checked == 1_000_000, "checked {keys_checked} keys");
    Ok(format!("{files} files, {keys_checked} keys within +-8"))
}

// 2 -----------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
enum MixedOp {
    Get(KeyInt),
    Put(KeyInt),
    Delete(KeyInt),
    Scan(KeyInt, usize),
}

fn mixed_ops(
    keys: &[KeyInt],
    write_fraction: f64,
    dist: Distribution,
    seed: u64,
    n: u64,
) -> Vec<MixedOp> {
    let spec = WorkloadSpec {
        ops: n,
        write_fraction,
        distribution: dist,
        seed,
        ..WorkloadSpec::default()
    };
    let mut rng = StdRng::seed_from_u64(seed ^ 0xa11ce);
    gen_workload(&spec, keys)
        .unwrap()
        .into_iter()
        .map(|op| match op {
            Op::Put(k) => match rng.random_range(0..10) {
                0 | 1 => MixedOp::Delete(k),
                2 => MixedOp::Put(k + rng.random_range(1..5)),
                _ => MixedOp::Put(k),
            },
            Op::Get(k) => match rng.random_range(0..100) {
                0 | 1 => MixedOp::Scan(k, rng.random_range(1..40)),
                2..=9 => MixedOp::Get(k + rng.random_range(1..5)),
                _ => MixedOp::Get(k),
            },
        })
        .collect()
}

fn check_against_oracle(
    e: &Engine,
    ops: &[MixedOp],
    oracle: &mut BTreeMap<KeyInt, Vec<u8>>,
    label: &str,
) -> Result<(), String> {
    for (i, op) in ops.iter().enumerate() {
        match *op {
            MixedOp::Put(k) => {
                let v = value_for(k, i as u64 + 1, 24);
                e.put_int(k, &v).map_err(|x| format!("{label}: put: {x}"))?;
                oracle.insert(k, v);
            }
            MixedOp::Delete(k) => {
                e.delete_int(k)
                    .map_err(|x| format!("{label}: delete: {x}"))?;
                oracle.remove(&k);
            }
            MixedOp::Get(k) => {
                let got = e.get_int(k).map_err(|x| format!("{label}: get: {x}"))?;
                ensure!(
                    got.as_ref() == oracle.get(&k),
                    "{label}: op {i} get {k} mismatch"
                );
            }
            MixedOp::Scan(k, limit) => {
                let got = e
                    .scan_int(k, limit)
                    .map_err(|x| format!("{label}: scan: {x}"))?;
                let want: Vec<(KeyInt, Vec<u8>)> = oracle
                    .range(k..)
                    .take(limit)
                    .map(|(k, v)| (*k, v.clone()))
                    .collect();
                ensure!(got == want, "{label}: op {i} scan {k}+{limit} mismatch");
            }
        }
    }
    let all = e.scan_int(0, usize::MAX).map_err(|x| x.to_string())?;
    ensure!(
        all.len() == oracle.len(),
        "{label}: final scan has {} entries, oracle {}",
        all.len(),
        oracle.len()
    );
    ensure!(
        all.iter()
            .zip(oracle.iter())
            .all(|(a, b)| a.0 == *b.0 && &a.1 == b.1),
        "{label}: final scan differs"
    );
    Ok(())
}

fn oracle_equivalence() -> Outcome {
    let keys = dataset(DatasetKind::Seg10Pct, 20_000, 0);
    let mut model_lookups = 0;
    let mut runs = 0;
    for write_fraction in [0.05, 0.5] {
        for dist in [Distribution::Uniform, Distribution::Zipfian] {
            let ops = mixed_ops(&keys, write_fraction, dist, 42, 100_000);
            for learning in [true, false] {
                let label = format!(
                    "{:.0}% writes {dist} learning {}",
                    write_fraction * 100.0,
                    if learning { "on" } else { "off" }
                );
                let d = tempfile::tempdir().unwrap();
                let opts = Options {
                    memtable_bytes: 32 * 512,
                    max_file_bytes: 32 * 1024,
                    level_size_divisor: 256,
                    t_wait: TWait::Fixed(Duration::from_millis(1)),
                    cba_mode: CbaMode::Always,
                    learning_mode: if learning {
                        LearningMode::File
                    } else {
                        LearningMode::Off
                    },
                    ..Options::default()
                };
                let e = Engine::open(d.path(), opts).unwrap();
                let mut oracle = BTreeMap::new();
                for &k in &keys {
                    let v = value_for(k, 0, 24);
                    e.put_int(k, &v).unwrap();
                    oracle.insert(k, v);
                }
                check_against_oracle(&e, &ops, &mut oracle, &label)?;
                e.wait_for_quiescence(true).unwrap();
                check_against_oracle(&e, &ops[..2000], &mut oracle, &label)?;
                let s = e.stats();
                if learning {
                    ensure!(s.model_lookups > 0, "{label}: no lookup used a model");
                    model_lookups += s.model_lookups;
                } else {
                    ensure!(
                        s.model_lookups == 0,
                        "{label}: models used with learning off"
                    );
                }
                runs += 1;
            }
        }
    }

    // level models on a read-only phase
    let d = tempfile::tempdir().unwrap();
    let mut opts = sync_opts(512, 1024, 256);
    opts.learning_mode = LearningMode::Level;
    let e = Engine::open(d.path(), opts).unwrap();
    let mut oracle = BTreeMap::new();
    for &k in &keys {
        let v = value_for(k, 0, 24);
        e.put_int(k, &v).unwrap();
        oracle.insert(k, v);
    }
    e.compact_until_settled().unwrap();
    let levels = e.learn_all_now().unwrap();
    ensure!(levels > 0, "no level model trained");
    for dist in [Distribution::Uniform, Distribution::Zipfian] {
        let ops = mixed_ops(&keys, 0.0, dist, 9, 100_000);
        check_against_oracle(&e, &ops, &mut oracle, &format!("level mode {dist}"))?;
    }
    let s = e.stats();
    ensure!(
        s.level_models == levels && s.model_lookups > 0,
        "level models unused: {s:?}"
    );
    Ok(format!(
        "{runs} file-mode runs x 1e5 ops ({model_lookups} model lookups), level mode with {levels} level models x 2e5 ops; all results identical"
    ))
}

// 3 -----------------------------------------------------------------------

fn linear_segments() -> Outcome {
    let keys = dataset(DatasetKind::Linear, 250_000, 0);
    let mut detail = Vec::new();
    for order in [LoadOrder::Sequential, LoadOrder::Random] {
        let d = tempfile::tempdir().unwrap();
        let e = loaded(d.path(), sync_opts(8192, 16384, 16), &keys, order);
        if order == LoadOrder::Random {
            // shuffled inserts leave interleaved key runs across levels
            compact_fully(&e);
        }
        e.learn_all_now().unwrap();
        let v = e.version();
        let mut files = 0;
        for t in v.tables() {
            let m = t
                .model()
                .ok_or_else(|| format!("{order}: file {} unlearned", t.file_id()))?;
            ensure!(
                m.segment_count() == 1,
                "{order}: file {} has {} segments",
                t.file_id(),
                m.segment_count()
            );
            files += 1;
        }
        ensure!(files > 1, "{order}: only {files} file");
        detail.push(format!("{order} load: {files} files x 1 segment"));
    }
    Ok(detail.join(", "))
}

// 4 -----------------------------------------------------------------------

fn lookup_speedup() -> Outcome {
    let d = tempfile::tempdir().unwrap();
    let keys = dataset(DatasetKind::Normal, 1_000_000, 4);
    let opts = Options {
        background: false,
        clock: Some(Arc::new(VirtualClock::new())),
        train_ns_per_point: Some(20.0),
        ..Options::default()
    };
    let e = loaded(d.path(), opts, &keys, LoadOrder::Random);
    e.learn_all_now().unwrap();
    let spec = WorkloadSpec {
        ops: 200_000,
        distribution: Distribution::Uniform,
        seed: 12,
        ..WorkloadSpec::default()
    };
    let ops = gen_workload(&spec, &keys).unwrap();
    let cfg = RunConfig {
        value_size: 16,
        settle: false,
    };
    // warm-up, then alternate paths over the same stream
    e.set_use_models(false);
    run_workload(&e, &ops[..20_000], cfg).unwrap();
    let (mut base_ns, mut base_n, mut model_ns, mut model_n) = (0u64, 0u64, 0u64, 0u64);
    let mut checksums = Vec::new();
    for round in 0..6 {
        let use_models = round % 2 == 1;
        e.set_use_models(use_models);
        let r = run_workload(&e, &ops, cfg).unwrap();
        checksums.push(r.checksum);
        let (p, other) = if use_models {
            (&r.model, &r.baseline)
        } else {
            (&r.baseline, &r.model)
        };
        ensure!(other.count() == 0, "round {round} mixed paths");
        if use_models {
            model_ns += p.total_ns;
            model_n += p.count();
        } else {
            base_ns += p.total_ns;
            base_n += p.count();
        }
    }
    ensure!(
        checksums.windows(2).all(|w| w[0] == w[1]),
        "paths returned different results"
    );
    let base = base_ns as f64 / base_n as f64;
    let model = model_ns as f64 / model_n as f64;
    let speedup = base / model;
    let detail = format!(
        "baseline {base:.1} ns, model {model:.1} ns per internal lookup, speedup {speedup:.2}x"
    );
    ensure!(speedup >= 1.1, "{detail} < 1.1x");
    Ok(detail)
}

// 5 -----------------------------------------------------------------------

#[derive(Default)]
struct ModeRun {
    learning_ns: u64,
    total_ns: u64,
    foreground_ns: u64,
    files_learned: u64,
    baseline_share: f64,
}

impl ModeRun {
    fn add(&mut self, o: &ModeRun) {
        self.learning_ns += o.learning_ns;
        self.total_ns += o.total_ns;
        self.foreground_ns += o.foreground_ns;
        self.files_learned += o.files_learned;
        self.baseline_share += o.baseline_share;
    }
}

/// Loads an unlearned store, reopens it in `mode` so the loaded files are
/// learned during bootstrap, then runs `ops` and reports the deltas.
fn cba_mode_run(keys: &[KeyInt], ops: &[Op], mode: CbaMode) -> ModeRun {
    let d = tempfile::tempdir().unwrap();
    let base = Options {
        memtable_bytes: 32 * 4096,
        max_file_bytes: 32 * 4096,
        level_size_divisor: 40,
        cba_mode: mode,
        ..Options::default()
    };
    {
        let e = loaded(
            d.path(),
            Options {
                learning_mode: LearningMode::Off,
                ..base.clone()
            },
            keys,
            LoadOrder::Random,
        );
        e.close().unwrap();
    }
    let e = Engine::open(d.path(), base).unwrap();
    e.wait_for_quiescence(true).unwrap();
    let r = run_workload(
        &e,
        ops,
        RunConfig {
            value_size: 16,
            settle: true,
        },
    )
    .unwrap();
    let s = e.stats();
    ModeRun {
        learning_ns: r.learning_ns,
        total_ns: r.total_ns(),
        foreground_ns: r.foreground_ns,
        files_learned: s.files_learned,
        baseline_share: r.baseline.count() as f64 / r.internal_lookups().max(1) as f64,
    }
}

fn cba_efficiency() -> Outcome {
    let keys = dataset(DatasetKind::Normal, 200_000, 5);
    let mut detail = Vec::new();

    let write_heavy = gen_workload(
        &WorkloadSpec {
            ops: 600_000,
            write_fraction: 0.5,
            seed: 21,
            ..WorkloadSpec::default()
        },
        &keys,
    )
    .unwrap();
    // always, cba, cba, always: order effects cancel in the sums
    let mut always = ModeRun::default();
    let mut cba = ModeRun::default();
    for mode in [CbaMode::Always, CbaMode::Cba, CbaMode::Cba, CbaMode::Always] {
        let r = cba_mode_run(&keys, &write_heavy, mode);
        match mode {
            CbaMode::Always => always.add(&r),
            _ => cba.add(&r),
        }
    }
    detail.push(format!(
        "50% writes (2 runs each): learning cba {:.1} ms vs always {:.1} ms, total cba {:.1} ms vs always {:.1} ms (foreground {:.1}/{:.1}, baseline share {:.2}/{:.2})",
        cba.learning_ns as f64 / 1e6,
        always.learning_ns as f64 / 1e6,
        cba.total_ns as f64 / 1e6,
        always.total_ns as f64 / 1e6,
        cba.foreground_ns as f64 / 1e6,
        always.foreground_ns as f64 / 1e6,
        cba.baseline_share / 2.0,
        always.baseline_share / 2.0,
    ));
    let heavy_ok = cba.learning_ns < always.learning_ns && cba.total_ns <= always.total_ns;

    let read_only = gen_workload(
        &WorkloadSpec {
            ops: 200_000,
            seed: 22,
            ..WorkloadSpec::default()
        },
        &keys,
    )
    .unwrap();
    let always0 = cba_mode_run(&keys, &read_only, CbaMode::Always);
    let cba0 = cba_mode_run(&keys, &read_only, CbaMode::Cba);
    let ratio = cba0.files_learned as f64 / always0.files_learned.max(1) as f64;
    detail.push(format!(
        "0% writes: cba learned {} of always's {} files ({:.1}%)",
        cba0.files_learned,
        always0.files_learned,
        ratio * 100.0
    ));
    let detail = detail.join("; ");
    ensure!(heavy_ok, "{detail}");
    ensure!(always0.files_learned > 0 && ratio >= 0.95, "{detail}");
    Ok(detail)
}

// 6 -----------------------------------------------------------------------

/// Cheapest cost over every learning instant in `0..=lifetime` and never
/// learning: learning at `t` pays `t` of baseline lookups plus the build.
fn offline_optimum(lifetime: u64, build: u64) -> u64 {
    let never = wait_policy::never_learn_cost(lifetime);
    (0..=lifetime).map(|t| t + build).fold(never, u64::min)
}

fn wait_policy_ratio() -> Outcome {
    let mut rng = StdRng::seed_from_u64(66);
    let mut worst: f64 = 0.0;
    let mut worst_case = (0, 0);
    for i in 0..10_000u32 {
        let build = rng.random_range(1..=2_000u64);
        let lifetime = match i % 5 {
            0 => rng.random_range(0..=4 * build),
            1 => (rng.random::<f64>().powi(4) * 10.0 * build as f64) as u64,
            2 => build.saturating_sub(rng.random_range(0..3)) + rng.random_range(0..3),
            3 => rng.random_range(0..=build / 4),
            _ => rng.random_range(2 * build..=20 * build),
        };
        let wait = wait_policy::wait_then_learn_cost(lifetime, build, build);
        let opt = offline_optimum(lifetime, build);
        ensure!(
            opt <= wait,
            "trace {i}: policy {wait} beat the optimum {opt}"
        );
        let ratio = if opt == 0 {
            if wait == 0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            wait as f64 / opt as f64
        };
        if ratio > worst {
            worst = ratio;
            worst_case = (lifetime, build);
        }
    }
    let detail = format!(
        "worst ratio {worst:.4} at lifetime {} build {}",
        worst_case.0, worst_case.1
    );
    ensure!(worst <= 2.0, "{detail}");
    Ok(detail)
}

// 7 -----------------------------------------------------------------------

fn study_run(order: LoadOrder) -> (Vec<learned_lsm::bench::LevelFileStats>, u64) {
    let d = tempfile::tempdir().unwrap();
    let keys = dataset(DatasetKind::Normal, 200_000, 8);
    let opts = Options {
        memtable_bytes: 32 * 2048,
        max_file_bytes: 32 * 2048,
        level_size_divisor: 40,
        learning_mode: LearningMode::Off,
        ..Options::default()
    };
    let e = loaded(d.path(), opts, &keys, order);
    let spec = WorkloadSpec {
        ops: 400_000,
        write_fraction: 0.5,
        load_order: order,
        seed: 31,
        ..WorkloadSpec::default()
    };
    let ops = gen_workload(&spec, &keys).unwrap();
    let start = e.clock().now_nanos();
    let r = run_workload(
        &e,
        &ops,
        RunConfig {
            value_size: 16,
            settle: true,
        },
    )
    .unwrap();
    (report_file_stats(&e, start), r.negative_lookups())
}

fn study_shapes() -> Outcome {
    let (random, _) = study_run(LoadOrder::Random);
    let lifetimes: Vec<String> = random
        .iter()
        .map(|l| format!("L{} {:.0}ms", l.level, l.mean_lifetime_ms))
        .collect();
    let negs: Vec<String> = random
        .iter()
        .map(|l| format!("L{} {:.0}", l.level, l.mean_neg_lookups))
        .collect();
    let (_, seq_negatives) = study_run(LoadOrder::Sequential);
    let detail = format!(
        "lifetimes [{}]; negatives/file [{}]; sequential negatives {seq_negatives}",
        lifetimes.join(", "),
        negs.join(", ")
    );
    ensure!(
        random.len() >= 3,
        "only {} populated levels: {detail}",
        random.len()
    );
    ensure!(
        random
            .windows(2)
            .all(|w| w[0].mean_lifetime_ms < w[1].mean_lifetime_ms),
        "(a) lifetimes do not increase with depth: {detail}"
    );
    ensure!(seq_negatives == 0, "(b) {detail}");
    let deepest = random.last().unwrap();
    ensure!(
        random
            .iter()
            .filter(|l| l.level <= 1)
            .all(|l| l.mean_neg_lookups > deepest.mean_neg_lookups),
        "(c) upper levels do not see more negatives: {detail}"
    );
    Ok(detail)
}

// 8 -----------------------------------------------------------------------

fn delta_tradeoff() -> Outcome {
    const DELTAS: [u32; 5] = [2, 4, 8, 16, 32];
    let mut detail = Vec::new();
    for (i, kind) in DatasetKind::SYNTHETIC.into_iter().enumerate() {
        let d = tempfile::tempdir().unwrap();
        let keys = dataset(kind.clone(), 250_000, 80 + i as u64);
        let mut opts = sync_opts(8192, 16384, 16);
        opts.learning_mode = LearningMode::Off;
        let e = loaded(d.path(), opts, &keys, LoadOrder::Random);
        let v = e.version();
        let sst_bytes: u64 = v.tables().map(|t| t.meta.file_size).sum();
        let files: Vec<Vec<KeyInt>> = v.tables().map(|t| t.reader.keys()).collect();
        let mut segs = Vec::new();
        let mut bytes = Vec::new();
        for delta in DELTAS {
            let (mut s, mut b) = (0usize, 0usize);
            for f in &files {
                let m = PlrModel::fit(f, delta).unwrap();
                s += m.segment_count();
                b += m.serialize().unwrap().len();
            }
            segs.push(s);
            bytes.push(b);
        }
        let overhead = bytes[2] as f64 / sst_bytes as f64;
        let line = format!(
            "{kind}: segments {segs:?}, overhead at 8 {:.3}%",
            overhead * 100.0
        );
        ensure!(
            segs.windows(2).all(|w| w[1] <= w[0]),
            "segment counts grow: {line}"
        );
        ensure!(
            bytes.windows(2).all(|w| w[1] <= w[0]),
            "model bytes grow {bytes:?}: {line}"
        );
        ensure!(overhead <= 0.02, "overhead above 2%: {line}");
        detail.push(line);
    }
    Ok(detail.join("; "))
}
