use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::plr::KeyInt;
use crate::table::{max_key_for, DEFAULT_KEY_SIZE};

/// Center and scale that map a standard normal sample onto 64-bit keys.
pub const NORMAL_CENTER: f64 = (1u64 << 63) as f64;
pub const NORMAL_SCALE: f64 = (1u64 << 50) as f64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetKind {
    Linear,
    /// A gap after every 100 consecutive keys.
    Seg1Pct,
    /// A gap after every 10 consecutive keys.
    Seg10Pct,
    Normal,
    /// One decimal key per line.
    FromFile(PathBuf),
}

impl DatasetKind {
    pub const SYNTHETIC: [DatasetKind; 4] = [
        DatasetKind::Linear,
        DatasetKind::Seg1Pct,
        DatasetKind::Seg10Pct,
        DatasetKind::Normal,
    ];

    fn run_len(&self) -> Option<u128> {
        match self {
            DatasetKind::Seg1Pct => Some(100),
            DatasetKind::Seg10Pct => Some(10),
            _ => None,
        }
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(DatasetKind::Linear),
            "seg1pct" | "seg-1%" => Ok(DatasetKind::Seg1Pct),
            "seg10pct" | "seg-10%" => Ok(DatasetKind::Seg10Pct),
            "normal" => Ok(DatasetKind::Normal),
            _ => match s.strip_prefix("file:") {
                Some(p) => Ok(DatasetKind::FromFile(PathBuf::from(p))),
                None => Err(Error::invalid(format!("unknown dataset {s:?}"))),
            },
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetKind::Linear => f.write_str("linear"),
            DatasetKind::Seg1Pct => f.write_str("seg1pct"),
            DatasetKind::Seg10Pct => f.write_str("seg10pct"),
            DatasetKind::Normal => f.write_str("normal"),
            DatasetKind::FromFile(p) => write!(f, "file:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub n: u64,
    pub seed: u64,
    /// Width of each gap in the segmented datasets; defaults to the run
    /// length.
    pub gap: Option<u128>,
    pub key_size: usize,
}

impl DatasetSpec {
    pub fn new(kind: DatasetKind, n: u64) -> Self {
        DatasetSpec {
            kind,
            n,
            seed: 0,
            gap: None,
            key_size: DEFAULT_KEY_SIZE,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Sorted, unique keys of the dataset.
pub fn gen_dataset(spec: &DatasetSpec) -> Result<Vec<KeyInt>> {
    if spec.n == 0 && !matches!(spec.kind, DatasetKind::FromFile(_)) {
        return Err(Error::invalid("dataset needs at least one key"));
    }
    let cap = max_key_for(spec.key_size);
    let n = spec.n as u128;
    let keys = match &spec.kind {
        DatasetKind::Linear => {
            check_cap(n - 1, cap)?;
            (0..spec.n as KeyInt).collect()
        }
        DatasetKind::Seg1Pct | DatasetKind::Seg10Pct => {
            let run = spec.kind.run_len().unwrap();
            let stride = run + spec.gap.unwrap_or(run);
            let last = (n - 1) / run * stride + (n - 1) % run;
            check_cap(last, cap)?;
            (0..n).map(|i| i / run * stride + i % run).collect()
        }
        DatasetKind::Normal => {
            if spec.n > 1 << 40 {
                return Err(Error::invalid("normal dataset limited to 2^40 keys"));
            }
            check_cap(u64::MAX as u128, cap)?;
            let mut rng = rand::rngs::StdRng::seed_from_u64(spec.seed);
            let mut seen = HashSet::with_capacity(spec.n as usize);
            while seen.len() < spec.n as usize {
                let x: f64 = StandardNormal.sample(&mut rng);
                let k = (x * NORMAL_SCALE + NORMAL_CENTER).round();
                if (0.0..u64::MAX as f64).contains(&k) {
                    seen.insert(k as u64 as KeyInt);
                }
            }
            let mut v: Vec<KeyInt> = seen.into_iter().collect();
            v.sort_unstable();
            v
        }
        DatasetKind::FromFile(path) => {
            let text = std::fs::read_to_string(path)?;
            let mut v = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                let k: KeyInt = line.parse().map_err(|_| {
                    Error::invalid(format!("{}:{}: not an integer key", path.display(), i + 1))
                })?;
                check_cap(k, cap)?;
                v.push(k);
            }
            v.sort_unstable();
            v.dedup();
            if v.is_empty() {
                return Err(Error::invalid(format!("{} holds no keys", path.display())));
            }
            if spec.n > 0 {
                v.truncate(spec.n as usize);
            }
            v
        }
    };
    Ok(keys)
}

fn check_cap(max: KeyInt, cap: KeyInt) -> Result<()> {
    if max > cap {
        return Err(Error::invalid(format!(
            "dataset needs key {max}, beyond the key-space maximum {cap}"
        )));
    }
    Ok(())
}
