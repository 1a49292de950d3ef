//! Command-line front end: `load`, `run`, `bench`, `stats`, `dump-model`.
//!
//! `load` records the dataset and engine options in a `CLI_CONFIG` file inside
//! the store so later commands regenerate the same key population and reopen
//! with the same options unless a flag overrides them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};

use crate::bench::{
    gen_dataset, gen_workload, load_dataset, render_file_stats, report_file_stats, run_workload,
    DatasetKind, DatasetSpec, Distribution, LoadOrder, RunConfig, WorkloadSpec, DEFAULT_VALUE_SIZE,
};
use crate::engine::{CbaMode, Engine, LearningMode, Options, TWait};
use crate::error::{Error, Result};
use crate::plr::PlrModel;
use crate::table::manifest::manifest_replay;
use crate::table::{model_file_name, DEFAULT_KEY_SIZE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

const CONFIG_FILE: &str = "CLI_CONFIG";
const MANIFEST: &str = "MANIFEST";
/// Level learning is discouraged above this write share.
const LEVEL_MODE_WRITE_LIMIT: f64 = 0.1;

#[derive(Parser, Debug)]
#[command(
    name = "learned-lsm",
    version,
    about = "LSM key-value store with learned indexes"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Create a store and load a dataset into it.
    Load {
        #[command(flatten)]
        store: StoreArg,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        engine: EngineArgs,
        /// Replace an existing store.
        #[arg(long)]
        force: bool,
    },
    /// Run a workload against an existing store.
    Run {
        #[command(flatten)]
        store: StoreArg,
        #[command(flatten)]
        work: WorkArgs,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Load a fresh store, then run a workload on it.
    Bench {
        #[command(flatten)]
        store: StoreArg,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        work: WorkArgs,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long)]
        force: bool,
    },
    /// Print per-level tables, the lookup statistics dump and queue state.
    Stats {
        #[command(flatten)]
        store: StoreArg,
    },
    /// Print the model of every live file.
    DumpModel {
        #[command(flatten)]
        store: StoreArg,
    },
}

#[derive(Args, Debug)]
struct StoreArg {
    #[arg(long)]
    store: PathBuf,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// linear, seg1pct, seg10pct, normal or file:PATH
    #[arg(long, default_value = "linear")]
    dataset: DatasetKind,
    #[arg(long, default_value_t = 100_000)]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// seq or random
    #[arg(long, default_value = "random")]
    order: LoadOrder,
    #[arg(long, default_value_t = DEFAULT_KEY_SIZE)]
    key_size: usize,
    #[arg(long, default_value_t = DEFAULT_VALUE_SIZE)]
    value_size: usize,
}

impl Default for DataArgs {
    fn default() -> Self {
        DataArgs {
            dataset: DatasetKind::Linear,
            n: 0,
            seed: 0,
            order: LoadOrder::Random,
            key_size: DEFAULT_KEY_SIZE,
            value_size: DEFAULT_VALUE_SIZE,
        }
    }
}

#[derive(Args, Debug)]
struct WorkArgs {
    #[arg(long, default_value_t = 100_000)]
    ops: u64,
    #[arg(long, default_value_t = 0.0)]
    write_frac: f64,
    #[arg(long, default_value = "uniform")]
    dist: Distribution,
    /// Workload seed; defaults to the dataset seed plus one.
    #[arg(long)]
    work_seed: Option<u64>,
    /// Time every step of each get.
    #[arg(long)]
    step_timing: bool,
    /// Print `key=value` lines instead of tables.
    #[arg(long)]
    kv: bool,
}

#[derive(Args, Debug, Default)]
struct EngineArgs {
    #[arg(long)]
    delta: Option<u32>,
    /// Milliseconds, or `auto`.
    #[arg(long)]
    t_wait_ms: Option<String>,
    #[arg(long)]
    cba_mode: Option<CbaMode>,
    #[arg(long)]
    learning_mode: Option<LearningMode>,
    #[arg(long)]
    memtable_kb: Option<usize>,
    #[arg(long)]
    max_file_kb: Option<usize>,
    /// Divides every level size limit.
    #[arg(long)]
    level_divisor: Option<u64>,
    #[arg(long)]
    learner_threads: Option<usize>,
}

/// Everything needed to reopen a store and regenerate its keys.
#[derive(Debug, Clone, PartialEq)]
struct StoreConfig {
    dataset: DatasetKind,
    n: u64,
    seed: u64,
    order: LoadOrder,
    key_size: usize,
    value_size: usize,
    delta: u32,
    t_wait: String,
    cba_mode: CbaMode,
    learning_mode: LearningMode,
    memtable_kb: usize,
    max_file_kb: usize,
    level_divisor: u64,
    learner_threads: usize,
}

impl StoreConfig {
    fn new(d: &DataArgs) -> Self {
        StoreConfig {
            dataset: d.dataset.clone(),
            n: d.n,
            seed: d.seed,
            order: d.order,
            key_size: d.key_size,
            value_size: d.value_size,
            delta: crate::plr::DEFAULT_DELTA,
            t_wait: "50".into(),
            cba_mode: CbaMode::Cba,
            learning_mode: LearningMode::File,
            memtable_kb: 1024,
            max_file_kb: 1024,
            level_divisor: 10,
            learner_threads: 1,
        }
    }

    fn apply(&mut self, e: &EngineArgs) {
        if let Some(v) = e.delta {
            self.delta = v;
        }
        if let Some(v) = &e.t_wait_ms {
            self.t_wait = v.clone();
        }
        if let Some(v) = e.cba_mode {
            self.cba_mode = v;
        }
        if let Some(v) = e.learning_mode {
            self.learning_mode = v;
        }
        if let Some(v) = e.memtable_kb {
            self.memtable_kb = v;
        }
        if let Some(v) = e.max_file_kb {
            self.max_file_kb = v;
        }
        if let Some(v) = e.level_divisor {
            self.level_divisor = v;
        }
        if let Some(v) = e.learner_threads {
            self.learner_threads = v;
        }
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("dataset", self.dataset.to_string()),
            ("n", self.n.to_string()),
            ("seed", self.seed.to_string()),
            ("order", self.order.to_string()),
            ("key_size", self.key_size.to_string()),
            ("value_size", self.value_size.to_string()),
            ("delta", self.delta.to_string()),
            ("t_wait_ms", self.t_wait.clone()),
            ("cba_mode", self.cba_mode.to_string()),
            ("learning_mode", self.learning_mode.to_string()),
            ("memtable_kb", self.memtable_kb.to_string()),
            ("max_file_kb", self.max_file_kb.to_string()),
            ("level_divisor", self.level_divisor.to_string()),
            ("learner_threads", self.learner_threads.to_string()),
        ]
    }

    fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    fn parse(text: &str) -> Result<Self> {
        let map: BTreeMap<&str, &str> = text
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim(), v.trim()))
            .collect();
        let get = |k: &str| {
            map.get(k)
                .copied()
                .ok_or_else(|| Error::corrupt(format!("{CONFIG_FILE} lacks {k}")))
        };
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::corrupt(format!("{CONFIG_FILE}: bad {k} {v:?}")))
        }
        Ok(StoreConfig {
            dataset: get("dataset")?.parse()?,
            n: num("n", get("n")?)?,
            seed: num("seed", get("seed")?)?,
            order: get("order")?.parse()?,
            key_size: num("key_size", get("key_size")?)?,
            value_size: num("value_size", get("value_size")?)?,
            delta: num("delta", get("delta")?)?,
            t_wait: get("t_wait_ms")?.to_string(),
            cba_mode: get("cba_mode")?.parse()?,
            learning_mode: get("learning_mode")?.parse()?,
            memtable_kb: num("memtable_kb", get("memtable_kb")?)?,
            max_file_kb: num("max_file_kb", get("max_file_kb")?)?,
            level_divisor: num("level_divisor", get("level_divisor")?)?,
            learner_threads: num("learner_threads", get("learner_threads")?)?,
        })
    }

    fn engine_options(&self) -> Result<Options> {
        let t_wait = match self.t_wait.as_str() {
            "auto" => TWait::Auto,
            ms => TWait::Fixed(Duration::from_millis(ms.parse().map_err(|_| {
                Error::invalid(format!(
                    "--t-wait-ms expects milliseconds or auto, got {ms:?}"
                ))
            })?)),
        };
        if self.memtable_kb == 0 || self.max_file_kb == 0 || self.level_divisor == 0 {
            return Err(Error::invalid("sizes and divisor must be positive"));
        }
        Ok(Options {
            key_size: self.key_size,
            delta: self.delta,
            t_wait,
            cba_mode: self.cba_mode,
            learning_mode: self.learning_mode,
            memtable_bytes: self.memtable_kb << 10,
            max_file_bytes: self.max_file_kb << 10,
            level_size_divisor: self.level_divisor,
            learner_threads: self.learner_threads.max(1),
            ..Options::default()
        })
    }

    fn dataset_spec(&self) -> DatasetSpec {
        let mut s = DatasetSpec::new(self.dataset.clone(), self.n).seed(self.seed);
        s.key_size = self.key_size;
        s
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(_) | Error::AlreadyExists(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    let res = match cli.cmd {
        Command::Load {
            store,
            data,
            engine,
            force,
        } => cmd_load(&store.store, &data, &engine, force, out, err),
        Command::Run {
            store,
            work,
            engine,
        } => cmd_run(&store.store, &work, &engine, out, err),
        Command::Bench {
            store,
            data,
            work,
            engine,
            force,
        } => cmd_load(&store.store, &data, &engine, force, out, err)
            .and_then(|_| cmd_run(&store.store, &work, &EngineArgs::default(), out, err)),
        Command::Stats { store } => cmd_stats(&store.store, out),
        Command::DumpModel { store } => cmd_dump_model(&store.store, out),
    };
    match res {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_RUNTIME
        }
    }
}

fn is_store(dir: &Path) -> bool {
    dir.join(MANIFEST).is_file()
}

fn require_store(dir: &Path) -> std::result::Result<StoreConfig, Failure> {
    if !is_store(dir) {
        return Err(Failure::Usage(format!("no store at {}", dir.display())));
    }
    let text = fs::read_to_string(dir.join(CONFIG_FILE))
        .map_err(|e| Failure::Runtime(format!("reading {CONFIG_FILE}: {e}")))?;
    Ok(StoreConfig::parse(&text)?)
}

fn print_header(
    out: &mut dyn Write,
    cmd: &str,
    cfg: &StoreConfig,
    extra: &[(&str, String)],
) -> std::io::Result<()> {
    let mut line = format!("# {cmd}");
    for (k, v) in cfg
        .entries()
        .iter()
        .map(|(k, v)| (*k, v.clone()))
        .chain(extra.iter().map(|(k, v)| (*k, v.clone())))
    {
        let _ = write!(line, " {k}={v}");
    }
    writeln!(out, "{line}")
}

fn cmd_load(
    dir: &Path,
    data: &DataArgs,
    eargs: &EngineArgs,
    force: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CmdResult {
    let mut cfg = StoreConfig::new(data);
    cfg.apply(eargs);
    let opts = cfg.engine_options()?;
    if is_store(dir) {
        if !force {
            return Err(Error::AlreadyExists(format!(
                "{} (pass --force to replace it)",
                dir.display()
            ))
            .into());
        }
        fs::remove_dir_all(dir)?;
    } else if dir.exists() && fs::read_dir(dir)?.next().is_some() {
        return Err(Failure::Usage(format!(
            "{} is a non-empty directory that holds no store",
            dir.display()
        )));
    }
    let keys = gen_dataset(&cfg.dataset_spec())?;
    print_header(out, "load", &cfg, &[])?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CONFIG_FILE), cfg.to_text())?;

    let engine = Engine::open(dir, opts)?;
    let start = Instant::now();
    let load = load_dataset(&engine, &keys, cfg.order, cfg.seed, cfg.value_size)?;
    engine.wait_for_quiescence(true)?;
    let total = start.elapsed();
    let s = engine.stats();
    writeln!(
        out,
        "loaded {} records in {:.3}s ({:.3}s writing)",
        load.records,
        total.as_secs_f64(),
        load.duration_ns as f64 / 1e9
    )?;
    writeln!(
        out,
        "files {}  learned {}  learn time {:.3}s  compactions {}",
        s.total_files(),
        s.learned_files,
        s.learning_ns as f64 / 1e9,
        s.compactions
    )?;
    write!(out, "{}", level_table(&engine))?;
    engine.close()?;
    let _ = err;
    Ok(())
}

fn cmd_run(
    dir: &Path,
    work: &WorkArgs,
    eargs: &EngineArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CmdResult {
    let mut cfg = require_store(dir)?;
    cfg.apply(eargs);
    let mut opts = cfg.engine_options()?;
    opts.step_timing = work.step_timing;
    let spec = WorkloadSpec {
        ops: work.ops,
        write_fraction: work.write_frac,
        distribution: work.dist,
        load_order: cfg.order,
        seed: work.work_seed.unwrap_or(cfg.seed.wrapping_add(1)),
        ..WorkloadSpec::default()
    };
    spec.validate()?;
    if cfg.learning_mode == LearningMode::Level && spec.write_fraction > LEVEL_MODE_WRITE_LIMIT {
        writeln!(
            err,
            "warning: level learning with {:.0}% writes; level models are rebuilt after every compaction of the level",
            spec.write_fraction * 100.0
        )?;
    }
    let keys = gen_dataset(&cfg.dataset_spec())?;
    let ops = gen_workload(&spec, &keys)?;
    print_header(
        out,
        "run",
        &cfg,
        &[
            ("ops", spec.ops.to_string()),
            ("write_frac", spec.write_fraction.to_string()),
            ("dist", spec.distribution.to_string()),
            ("work_seed", spec.seed.to_string()),
            ("step_timing", work.step_timing.to_string()),
        ],
    )?;
    let engine = Engine::open(dir, opts)?;
    let start = engine.clock().now_nanos();
    let report = run_workload(
        &engine,
        &ops,
        RunConfig {
            value_size: cfg.value_size,
            settle: true,
        },
    )?;
    if work.kv {
        write!(out, "{}", report.kv())?;
    } else {
        write!(out, "{}", report.render())?;
        writeln!(out)?;
        write!(
            out,
            "{}",
            render_file_stats(&report_file_stats(&engine, start))
        )?;
    }
    engine.close()?;
    match report.error {
        Some(e) => Err(Failure::Runtime(format!("run stopped early: {e}"))),
        None => Ok(()),
    }
}

fn level_table(engine: &Engine) -> String {
    let v = engine.version();
    let mut s = format!(
        "{:<5} {:>6} {:>10} {:>12} {:>8} {:>12}\n",
        "level", "files", "records", "bytes", "learned", "model_bytes"
    );
    for level in 0..crate::table::NUM_LEVELS {
        let files = v.level(level);
        let learned: Vec<_> = files.iter().filter_map(|t| t.model()).collect();
        let _ = writeln!(
            s,
            "{:<5} {:>6} {:>10} {:>12} {:>8} {:>12}",
            level,
            files.len(),
            v.level_records(level),
            v.level_bytes(level),
            learned.len(),
            learned.iter().map(|m| m.encoded_len()).sum::<usize>()
        );
    }
    s
}

fn cmd_stats(dir: &Path, out: &mut dyn Write) -> CmdResult {
    // stores created through the library carry no CLI_CONFIG
    let cfg = if dir.join(CONFIG_FILE).exists() || !is_store(dir) {
        require_store(dir)?
    } else {
        let state = manifest_replay(&dir.join(MANIFEST))?;
        let mut cfg = StoreConfig::new(&DataArgs::default());
        cfg.key_size = state.key_size.map_or(DEFAULT_KEY_SIZE, |k| k as usize);
        cfg
    };
    let mut opts = cfg.engine_options()?;
    // inspect without scheduling any learning or compaction
    opts.background = false;
    opts.learning_mode = LearningMode::Off;
    let engine = Engine::open(dir, opts)?;
    print_header(out, "stats", &cfg, &[])?;
    write!(out, "{}", level_table(&engine))?;
    let s = engine.stats();
    writeln!(
        out,
        "total records {}  files {}  queued tasks {}  pending timers {}",
        s.total_records(),
        s.total_files(),
        s.queued_tasks,
        s.pending_timers
    )?;
    writeln!(out)?;
    write!(out, "{}", engine.cba().dump_tsv())?;
    engine.close()?;
    Ok(())
}

fn cmd_dump_model(dir: &Path, out: &mut dyn Write) -> CmdResult {
    if !is_store(dir) {
        return Err(Failure::Usage(format!("no store at {}", dir.display())));
    }
    let state = manifest_replay(&dir.join(MANIFEST))?;
    writeln!(
        out,
        "{:<5} {:>8} {:>10} {:>9} {:>6} {:>22} {:>22}",
        "level", "file", "records", "segments", "delta", "min_key", "max_key"
    )?;
    for (level, files) in state.levels.iter().enumerate() {
        for meta in files.values() {
            let path = dir.join(model_file_name(meta.file_id));
            let model = fs::read(&path).ok().map(|b| PlrModel::deserialize(&b));
            match model {
                Some(Ok(m)) => {
                    let (lo, hi) = m.key_range();
                    writeln!(
                        out,
                        "{:<5} {:>8} {:>10} {:>9} {:>6} {:>22} {:>22}",
                        level,
                        meta.file_id,
                        meta.record_count,
                        m.segment_count(),
                        m.delta(),
                        lo,
                        hi
                    )?;
                }
                Some(Err(e)) => writeln!(
                    out,
                    "{:<5} {:>8} {:>10} unreadable model: {e}",
                    level, meta.file_id, meta.record_count
                )?,
                None => writeln!(
                    out,
                    "{:<5} {:>8} {:>10} unlearned",
                    level, meta.file_id, meta.record_count
                )?,
            }
        }
    }
    Ok(())
}
