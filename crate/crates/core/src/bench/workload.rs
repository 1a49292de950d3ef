use std::fmt;
use std::str::FromStr;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution as _, Exp, Zipf};

use crate::error::{Error, Result};
use crate::plr::KeyInt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distribution {
    /// One ascending pass over the keys.
    Sequential,
    Uniform,
    /// Scrambled zipf over the key population.
    Zipfian,
    /// A fixed share of requests to a contiguous hot set at the start.
    Hotspot,
    /// Exponentially decaying popularity from the newest key backwards.
    Exponential,
    /// Zipf over recency: the most recently inserted keys are hottest.
    Latest,
}

impl Distribution {
    pub const ALL: [Distribution; 6] = [
        Distribution::Sequential,
        Distribution::Uniform,
        Distribution::Zipfian,
        Distribution::Hotspot,
        Distribution::Exponential,
        Distribution::Latest,
    ];
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sequential" => Distribution::Sequential,
            "uniform" => Distribution::Uniform,
            "zipfian" => Distribution::Zipfian,
            "hotspot" => Distribution::Hotspot,
            "exponential" => Distribution::Exponential,
            "latest" => Distribution::Latest,
            _ => return Err(Error::invalid(format!("unknown distribution {s:?}"))),
        })
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Distribution::Sequential => "sequential",
            Distribution::Uniform => "uniform",
            Distribution::Zipfian => "zipfian",
            Distribution::Hotspot => "hotspot",
            Distribution::Exponential => "exponential",
            Distribution::Latest => "latest",
        })
    }
}

/// How keys reach the store. Sequential: the dataset is loaded in key order
/// and workload writes append fresh keys above the maximum. Random: the
/// dataset is loaded shuffled and workload writes update existing keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadOrder {
    Sequential,
    Random,
}

impl FromStr for LoadOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seq" | "sequential" => Ok(LoadOrder::Sequential),
            "random" => Ok(LoadOrder::Random),
            _ => Err(Error::invalid(format!("unknown load order {s:?}"))),
        }
    }
}

impl fmt::Display for LoadOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LoadOrder::Sequential => "seq",
            LoadOrder::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub ops: u64,
    pub write_fraction: f64,
    pub distribution: Distribution,
    pub zipf_theta: f64,
    /// Share of the keys forming the hot set.
    pub hotspot_keys: f64,
    /// Share of requests sent to the hot set.
    pub hotspot_ops: f64,
    /// Mean distance from the newest key, as a share of the population.
    pub exponential_mean: f64,
    pub load_order: LoadOrder,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            ops: 0,
            write_fraction: 0.0,
            distribution: Distribution::Uniform,
            zipf_theta: 0.99,
            hotspot_keys: 0.2,
            hotspot_ops: 0.8,
            exponential_mean: 0.1,
            load_order: LoadOrder::Random,
            seed: 0,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.write_fraction) || !unit(self.hotspot_keys) || !unit(self.hotspot_ops) {
            return Err(Error::invalid("fractions must lie in [0, 1]"));
        }
        if !(self.zipf_theta > 0.0 && self.zipf_theta < 1.0) {
            return Err(Error::invalid("zipf theta must lie in (0, 1)"));
        }
        if self.exponential_mean <= 0.0 {
            return Err(Error::invalid("exponential mean must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Get(KeyInt),
    Put(KeyInt),
}

impl Op {
    pub fn key(&self) -> KeyInt {
        match *self {
            Op::Get(k) | Op::Put(k) => k,
        }
    }
}

fn scramble(rank: u64) -> u64 {
    // FNV-1a over the rank's bytes
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in rank.to_le_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic operation stream over `keys` (the loaded, sorted keys).
pub fn gen_workload(spec: &WorkloadSpec, keys: &[KeyInt]) -> Result<Vec<Op>> {
    spec.validate()?;
    if keys.is_empty() && spec.ops > 0 {
        return Err(Error::invalid("workload needs a loaded key space"));
    }
    let mut rng = StdRng::seed_from_u64(spec.seed);
    // population grows with inserts under sequential load order
    let mut population: Vec<KeyInt> = keys.to_vec();
    let mut next_fresh = keys.last().map_or(0, |k| k + 1);
    let mut cursor = 0usize;
    let mut ops = Vec::with_capacity(spec.ops as usize);
    let exp = Exp::new(1.0 / spec.exponential_mean).map_err(|e| Error::invalid(e.to_string()))?;

    for _ in 0..spec.ops {
        let write = spec.write_fraction > 0.0 && rng.random_bool(spec.write_fraction);
        if write && spec.load_order == LoadOrder::Sequential {
            population.push(next_fresh);
            ops.push(Op::Put(next_fresh));
            next_fresh += 1;
            continue;
        }
        let n = population.len();
        let idx = match spec.distribution {
            Distribution::Sequential => {
                let i = cursor % n;
                cursor += 1;
                i
            }
            Distribution::Uniform => rng.random_range(0..n),
            Distribution::Zipfian => {
                let z = Zipf::new(n as f64, spec.zipf_theta)
                    .map_err(|e| Error::invalid(e.to_string()))?;
                let rank = z.sample(&mut rng) as u64;
                (scramble(rank) % n as u64) as usize
            }
            Distribution::Hotspot => {
                let hot = ((n as f64 * spec.hotspot_keys) as usize).clamp(1, n);
                if rng.random_bool(spec.hotspot_ops) || hot == n {
                    rng.random_range(0..hot)
                } else {
                    rng.random_range(hot..n)
                }
            }
            Distribution::Exponential => {
                let back = (exp.sample(&mut rng) * n as f64) as usize;
                n - 1 - back.min(n - 1)
            }
            Distribution::Latest => {
                let z = Zipf::new(n as f64, spec.zipf_theta)
                    .map_err(|e| Error::invalid(e.to_string()))?;
                let back = z.sample(&mut rng) as usize - 1;
                n - 1 - back.min(n - 1)
            }
        };
        let k = population[idx];
        ops.push(if write { Op::Put(k) } else { Op::Get(k) });
    }
    Ok(ops)
}
