//! Greedy piecewise linear regression over sorted keys.
//!
//! A model maps a key to its record position inside a sorted run. Every key
//! the model was trained on is guaranteed to be found within `delta`
//! positions of the prediction, and that guarantee is checked against the
//! same floating-point arithmetic used at lookup time.

use crate::error::{Error, Result};

/// Numeric interpretation of a fixed-size big-endian key.
pub type KeyInt = u128;

pub const MODEL_MAGIC: &[u8; 4] = b"BPLR";
pub const MODEL_VERSION: u32 = 1;
/// magic | version | delta | num_points | segment_count | max_key
pub const MODEL_HEADER_LEN: usize = 4 + 4 + 4 + 8 + 4 + 16;
pub const SEGMENT_ENCODED_LEN: usize = 16 + 8 + 8;
const CRC_LEN: usize = 4;

pub const DEFAULT_DELTA: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start_key: KeyInt,
    pub slope: f64,
    pub intercept: f64,
}

impl Segment {
    /// Unrounded position estimate. The key offset is taken in integer
    /// arithmetic before conversion so wide key spaces keep their precision.
    #[inline]
    pub fn position(&self, key: KeyInt) -> f64 {
        self.slope * (key - self.start_key) as f64 + self.intercept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictedRange {
    pub pos: u64,
    pub lo: u64,
    pub hi: u64,
}

impl PredictedRange {
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> u64 {
        self.hi - self.lo + 1
    }

    pub fn contains(&self, pos: u64) -> bool {
        self.lo <= pos && pos <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlrModel {
    segments: Vec<Segment>,
    delta: u32,
    num_points: u64,
    min_key: KeyInt,
    max_key: KeyInt,
}

#[inline]
fn clamp_round(raw: f64, num_points: u64) -> u64 {
    let last = (num_points - 1) as f64;
    let r = raw.round();
    if r.is_nan() || r <= 0.0 {
        0
    } else if r >= last {
        num_points - 1
    } else {
        r as u64
    }
}

/// Fits one segment starting at `start`, extending it as far as the slope
/// cone allows. Returns the segment and the exclusive end index.
fn greedy_segment(keys: &[KeyInt], start: usize, delta: f64) -> (Segment, usize) {
    let k0 = keys[start];
    let y0 = start as f64;
    if start + 1 == keys.len() {
        return (
            Segment {
                start_key: k0,
                slope: 0.0,
                intercept: y0,
            },
            start + 1,
        );
    }

    // The first two points fix the cone: its apex is their midpoint and its
    // edges are the steepest and flattest lines within delta of both.
    let x1 = (keys[start + 1] - k0) as f64;
    let mut lo = (1.0 - 2.0 * delta) / x1;
    let mut hi = (1.0 + 2.0 * delta) / x1;
    let apex_x = x1 / 2.0;
    let apex_y = y0 + 0.5;

    let mut end = start + 2;
    while end < keys.len() {
        let x = (keys[end] - k0) as f64;
        let y = end as f64;
        let dx = x - apex_x;
        let lower = apex_y + lo * dx;
        let upper = apex_y + hi * dx;
        if y + delta < lower || y - delta > upper {
            break;
        }
        if y + delta < upper {
            hi = (y + delta - apex_y) / dx;
        }
        if y - delta > lower {
            lo = (y - delta - apex_y) / dx;
        }
        end += 1;
    }

    let slope = (lo + hi) / 2.0;
    // Intercept is the line's value at offset 0, i.e. at the segment start key.
    let intercept = apex_y - slope * apex_x;
    (
        Segment {
            start_key: k0,
            slope,
            intercept,
        },
        end,
    )
}

fn first_violation(
    seg: &Segment,
    keys: &[KeyInt],
    start: usize,
    end: usize,
    delta: u32,
) -> Option<usize> {
    let n = keys.len() as u64;
    (start..end).find(|&i| {
        let pos = clamp_round(seg.position(keys[i]), n);
        pos.abs_diff(i as u64) > delta as u64
    })
}

/// Trains a model over `(key, position)` points. Positions must be the
/// consecutive indexes `0..n`.
pub fn train_greedy_plr(points: &[(KeyInt, u64)], delta: u32) -> Result<PlrModel> {
    for (i, &(_, p)) in points.iter().enumerate() {
        if p != i as u64 {
            return Err(Error::invalid(format!(
                "position {p} at index {i}; positions must be 0..n"
            )));
        }
    }
    let keys: Vec<KeyInt> = points.iter().map(|&(k, _)| k).collect();
    PlrModel::fit(&keys, delta)
}

impl PlrModel {
    /// Trains over strictly ascending keys; the position of `keys[i]` is `i`.
    pub fn fit(keys: &[KeyInt], delta: u32) -> Result<PlrModel> {
        if keys.is_empty() {
            return Err(Error::invalid("cannot train a model on zero points"));
        }
        if delta == 0 {
            return Err(Error::invalid("delta must be at least 1"));
        }
        if let Some(w) = keys.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "keys not strictly ascending at index {}",
                w + 1
            )));
        }

        let d = delta as f64;
        let mut segments = Vec::new();
        let mut start = 0;
        while start < keys.len() {
            let (seg, end) = greedy_segment(keys, start, d);
            match first_violation(&seg, keys, start, end, delta) {
                None => {
                    segments.push(seg);
                    start = end;
                }
                Some(i) if i == start => {
                    // A flat line through a single point is always exact.
                    segments.push(Segment {
                        start_key: keys[start],
                        slope: 0.0,
                        intercept: start as f64,
                    });
                    start += 1;
                }
                Some(i) => {
                    segments.push(seg);
                    start = i;
                }
            }
        }

        Ok(PlrModel {
            segments,
            delta,
            num_points: keys.len() as u64,
            min_key: keys[0],
            max_key: keys[keys.len() - 1],
        })
    }

    /// Assembles a model from given segments without training. The error
    /// bound is taken on trust.
    pub fn from_segments(
        segments: Vec<Segment>,
        delta: u32,
        num_points: u64,
        key_range: (KeyInt, KeyInt),
    ) -> Result<PlrModel> {
        if segments.is_empty() || num_points == 0 {
            return Err(Error::invalid(
                "model needs at least one segment and one point",
            ));
        }
        if segments
            .windows(2)
            .any(|w| w[0].start_key >= w[1].start_key)
            || segments[0].start_key > key_range.0
            || key_range.0 > key_range.1
        {
            return Err(Error::invalid(
                "segments must be sorted and cover the key range",
            ));
        }
        Ok(PlrModel {
            segments,
            delta,
            num_points,
            min_key: key_range.0,
            max_key: key_range.1,
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn delta(&self) -> u32 {
        self.delta
    }

    pub fn num_points(&self) -> u64 {
        self.num_points
    }

    pub fn key_range(&self) -> (KeyInt, KeyInt) {
        (self.min_key, self.max_key)
    }

    /// Predicts the position range for `key`, or `None` when the key lies
    /// outside the trained key range.
    pub fn predict(&self, key: KeyInt) -> Option<PredictedRange> {
        if key < self.min_key || key > self.max_key {
            return None;
        }
        let idx = self.segments.partition_point(|s| s.start_key <= key) - 1;
        let pos = clamp_round(self.segments[idx].position(key), self.num_points);
        let d = self.delta as u64;
        Some(PredictedRange {
            pos,
            lo: pos.saturating_sub(d),
            hi: (pos + d).min(self.num_points - 1),
        })
    }

    pub fn encoded_len(&self) -> usize {
        MODEL_HEADER_LEN + self.segments.len() * SEGMENT_ENCODED_LEN + CRC_LEN
    }

    pub fn serialize(&self) -> Result<Vec<u8>> {
        if self.segments.is_empty() {
            return Err(Error::invalid("model has no segments"));
        }
        let mut buf = Vec::with_capacity(self.encoded_len());
        buf.extend_from_slice(MODEL_MAGIC);
        buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.delta.to_le_bytes());
        buf.extend_from_slice(&self.num_points.to_le_bytes());
        buf.extend_from_slice(&(self.segments.len() as u32).to_le_bytes());
        buf.extend_from_slice(&self.max_key.to_le_bytes());
        for s in &self.segments {
            buf.extend_from_slice(&s.start_key.to_le_bytes());
            buf.extend_from_slice(&s.slope.to_le_bytes());
            buf.extend_from_slice(&s.intercept.to_le_bytes());
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        Ok(buf)
    }

    pub fn deserialize(bytes: &[u8]) -> Result<PlrModel> {
        if bytes.len() < MODEL_HEADER_LEN + CRC_LEN {
            return Err(Error::corrupt("model file truncated"));
        }
        if &bytes[0..4] != MODEL_MAGIC {
            return Err(Error::corrupt("bad model magic"));
        }
        let (body, crc_bytes) = bytes.split_at(bytes.len() - CRC_LEN);
        let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(Error::corrupt("model checksum mismatch"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(body[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(body[o..o + 8].try_into().unwrap());
        let u128_at = |o: usize| u128::from_le_bytes(body[o..o + 16].try_into().unwrap());

        let version = u32_at(4);
        if version != MODEL_VERSION {
            return Err(Error::corrupt(format!("unknown model version {version}")));
        }
        let delta = u32_at(8);
        let num_points = u64_at(12);
        let count = u32_at(20) as usize;
        let max_key = u128_at(24);
        if count == 0 || body.len() != MODEL_HEADER_LEN + count * SEGMENT_ENCODED_LEN {
            return Err(Error::corrupt("model segment count does not match length"));
        }
        if num_points == 0 {
            return Err(Error::corrupt("model has zero points"));
        }
        let mut segments = Vec::with_capacity(count);
        for i in 0..count {
            let o = MODEL_HEADER_LEN + i * SEGMENT_ENCODED_LEN;
            segments.push(Segment {
                start_key: u128_at(o),
                slope: f64::from_le_bytes(body[o + 16..o + 24].try_into().unwrap()),
                intercept: f64::from_le_bytes(body[o + 24..o + 32].try_into().unwrap()),
            });
        }
        if segments
            .windows(2)
            .any(|w| w[0].start_key >= w[1].start_key)
            || segments[0].start_key > max_key
        {
            return Err(Error::corrupt("model segments out of order"));
        }
        Ok(PlrModel {
            min_key: segments[0].start_key,
            segments,
            delta,
            num_points,
            max_key,
        })
    }
}
