//! The two per-file lookup paths plus the level-model variant.
//!
//! Baseline: LoadIB+FB, SearchIB, SearchFB, LoadDB, SearchDB.
//! Model:    LoadIB+FB, ModelLookup, SearchFB, LoadChunk, LocateKey.

use std::time::Instant;

use super::version::Table;
use crate::learner::LevelModel;
use crate::plr::{KeyInt, PlrModel};
use crate::table::ValuePointer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Step {
    SearchMemtable,
    FindFiles,
    LoadIbFb,
    SearchIb,
    SearchFb,
    LoadDb,
    SearchDb,
    ModelLookup,
    LoadChunk,
    LocateKey,
    ReadValue,
}

pub const STEP_COUNT: usize = 11;

impl Step {
    pub const ALL: [Step; STEP_COUNT] = [
        Step::SearchMemtable,
        Step::FindFiles,
        Step::LoadIbFb,
        Step::SearchIb,
        Step::SearchFb,
        Step::LoadDb,
        Step::SearchDb,
        Step::ModelLookup,
        Step::LoadChunk,
        Step::LocateKey,
        Step::ReadValue,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Step::SearchMemtable => "SearchMT",
            Step::FindFiles => "FindFiles",
            Step::LoadIbFb => "LoadIB+FB",
            Step::SearchIb => "SearchIB",
            Step::SearchFb => "SearchFB",
            Step::LoadDb => "LoadDB",
            Step::SearchDb => "SearchDB",
            Step::ModelLookup => "ModelLookup",
            Step::LoadChunk => "LoadChunk",
            Step::LocateKey => "LocateKey",
            Step::ReadValue => "ReadValue",
        }
    }

    fn idx(self) -> usize {
        self as usize
    }
}

/// Per-step durations in nanoseconds. A step that never ran reads as 0;
/// use [`StepTimes::ran`] to distinguish.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepTimes {
    ns: [u64; STEP_COUNT],
    hits: u16,
}

impl StepTimes {
    pub fn get(&self, step: Step) -> u64 {
        self.ns[step.idx()]
    }

    pub fn ran(&self, step: Step) -> bool {
        self.hits & (1 << step.idx()) != 0
    }

    pub fn add(&mut self, step: Step, ns: u64) {
        self.ns[step.idx()] += ns;
        self.hits |= 1 << step.idx();
    }

    pub fn merge(&mut self, other: &StepTimes) {
        for i in 0..STEP_COUNT {
            self.ns[i] += other.ns[i];
        }
        self.hits |= other.hits;
    }

    pub fn total(&self) -> u64 {
        self.ns.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Step, u64)> + '_ {
        Step::ALL.iter().map(move |&s| (s, self.get(s)))
    }
}

/// Records elapsed time between consecutive marks. Disabled clocks only
/// note which steps ran.
pub(crate) struct StepClock {
    last: Option<Instant>,
}

impl StepClock {
    pub(crate) fn new(enabled: bool) -> Self {
        StepClock {
            last: enabled.then(Instant::now),
        }
    }

    #[inline]
    pub(crate) fn mark(&mut self, times: &mut StepTimes, step: Step) {
        match &mut self.last {
            Some(last) => {
                let now = Instant::now();
                times.add(step, now.duration_since(*last).as_nanos() as u64);
                *last = now;
            }
            None => times.add(step, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LookupPath {
    Baseline,
    Model,
}

/// One probe of one candidate file during a get.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalLookupRecord {
    pub file_id: u64,
    pub level: u8,
    pub outcome: Outcome,
    pub path: LookupPath,
    pub duration_ns: u64,
    pub steps: StepTimes,
}

/// Everything observed during one get.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GetTrace {
    pub probes: Vec<InternalLookupRecord>,
    /// Steps of the whole request, including memtable search, FindFiles and
    /// ReadValue.
    pub steps: StepTimes,
    pub total_ns: u64,
    pub memtable_hit: bool,
}

/// Result of probing a single file.
pub(crate) struct Probe {
    pub(crate) found: Option<ValuePointer>,
    /// Binary-search probes spent inside the loaded chunk (model paths).
    pub(crate) locate_probes: u32,
    pub(crate) loaded_chunk: bool,
}

impl Probe {
    fn miss(loaded_chunk: bool) -> Self {
        Probe {
            found: None,
            locate_probes: 0,
            loaded_chunk,
        }
    }
}

pub(crate) fn probe_baseline(
    t: &Table,
    key: KeyInt,
    sc: &mut StepClock,
    st: &mut StepTimes,
) -> Probe {
    let r = &t.reader;
    let _ib = r.index();
    let fb = r.filter();
    sc.mark(st, Step::LoadIbFb);
    let block = r.search_index_block(key);
    sc.mark(st, Step::SearchIb);
    let Some(block) = block else {
        return Probe::miss(false);
    };
    let maybe = fb.may_contain(key);
    sc.mark(st, Step::SearchFb);
    if !maybe {
        return Probe::miss(false);
    }
    let chunk = r.load_block(block);
    sc.mark(st, Step::LoadDb);
    let found = chunk.search(key).map(|(_, p)| p);
    sc.mark(st, Step::SearchDb);
    Probe {
        found,
        locate_probes: 0,
        loaded_chunk: true,
    }
}

pub(crate) fn probe_model(
    t: &Table,
    model: &PlrModel,
    key: KeyInt,
    sc: &mut StepClock,
    st: &mut StepTimes,
) -> Probe {
    let r = &t.reader;
    let fb = r.filter();
    sc.mark(st, Step::LoadIbFb);
    let predicted = model.predict(key);
    sc.mark(st, Step::ModelLookup);
    let Some(range) = predicted else {
        return Probe::miss(false);
    };
    let maybe = fb.may_contain(key);
    sc.mark(st, Step::SearchFb);
    if !maybe {
        return Probe::miss(false);
    }
    let chunk = r
        .load_block_range(range.lo, range.hi)
        .expect("model range lies inside the file");
    sc.mark(st, Step::LoadChunk);
    let (hit, probes) = chunk.locate(key, range.pos);
    sc.mark(st, Step::LocateKey);
    Probe {
        found: hit.map(|(_, p)| p),
        locate_probes: probes,
        loaded_chunk: true,
    }
}

/// Model path driven by a level model. `file_index` is the table's position
/// within the level, which the level model was trained over.
pub(crate) fn probe_level(
    t: &Table,
    lm: &LevelModel,
    file_index: usize,
    key: KeyInt,
    sc: &mut StepClock,
    st: &mut StepTimes,
) -> Probe {
    let r = &t.reader;
    let fb = r.filter();
    sc.mark(st, Step::LoadIbFb);
    let local = lm.predict_in_file(key, file_index);
    sc.mark(st, Step::ModelLookup);
    let Some((lo, hi, pos)) = local else {
        return Probe::miss(false);
    };
    let maybe = fb.may_contain(key);
    sc.mark(st, Step::SearchFb);
    if !maybe {
        return Probe::miss(false);
    }
    let chunk = r
        .load_block_range(lo, hi)
        .expect("level model range lies inside the file");
    sc.mark(st, Step::LoadChunk);
    let (hit, probes) = chunk.locate(key, pos);
    sc.mark(st, Step::LocateKey);
    Probe {
        found: hit.map(|(_, p)| p),
        locate_probes: probes,
        loaded_chunk: true,
    }
}

/// Outcome of a standalone per-file lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct FileLookup {
    pub pointer: Option<ValuePointer>,
    pub steps: StepTimes,
    /// Binary-search probes inside the loaded chunk; 0 when the key sat at
    /// the predicted position.
    pub locate_probes: u32,
    pub loaded_chunk: bool,
}

impl FileLookup {
    fn from_probe(p: Probe, steps: StepTimes) -> Self {
        FileLookup {
            pointer: p.found,
            steps,
            locate_probes: p.locate_probes,
            loaded_chunk: p.loaded_chunk,
        }
    }
}

/// Index block, filter, data block, binary search.
pub fn lookup_in_file_baseline(t: &Table, key: KeyInt) -> FileLookup {
    let mut sc = StepClock::new(true);
    let mut st = StepTimes::default();
    let p = probe_baseline(t, key, &mut sc, &mut st);
    FileLookup::from_probe(p, st)
}

/// Model prediction, filter, bounded chunk load, local search.
pub fn lookup_in_file_model(t: &Table, model: &PlrModel, key: KeyInt) -> FileLookup {
    let mut sc = StepClock::new(true);
    let mut st = StepTimes::default();
    let p = probe_model(t, model, key, &mut sc, &mut st);
    FileLookup::from_probe(p, st)
}
