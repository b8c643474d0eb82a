use crate::error::{Error, Result};

/// Counts of non-negative integer samples (milliseconds).
///
/// Stored as a difference array so that a run of consecutive values, as
/// produced by sampling a sawtooth once per sub-frame, is added in O(1).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IntHistogram {
    delta: Vec<i64>,
    total: u64,
}

impl IntHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    fn reserve(&mut self, len: usize) {
        if self.delta.len() < len {
            self.delta.resize(len, 0);
        }
    }

    pub fn add(&mut self, value: u64) {
        self.add_run(value, 1);
    }

    /// Adds `start, start + 1, …, start + len - 1`, each once.
    pub fn add_run(&mut self, start: u64, len: u64) {
        if len == 0 {
            return;
        }
        let start = start as usize;
        let end = start + len as usize;
        self.reserve(end + 1);
        self.delta[start] += 1;
        self.delta[end] -= 1;
        self.total += len;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// `counts[v]` = number of samples equal to `v`, trailing zeros trimmed.
    pub fn counts(&self) -> Vec<u64> {
        let mut acc = 0i64;
        let mut out: Vec<u64> = self
            .delta
            .iter()
            .map(|d| {
                acc += d;
                acc as u64
            })
            .collect();
        while out.last() == Some(&0) {
            out.pop();
        }
        out
    }

    pub fn max(&self) -> Option<u64> {
        let c = self.counts();
        (!c.is_empty()).then(|| c.len() as u64 - 1)
    }

    pub fn merge(&mut self, other: &IntHistogram) {
        self.reserve(other.delta.len());
        for (a, b) in self.delta.iter_mut().zip(&other.delta) {
            *a += b;
        }
        self.total += other.total;
    }

    pub fn ccdf(&self) -> Result<Ccdf> {
        if self.total == 0 {
            return Err(Error::EmptySamples);
        }
        Ok(Ccdf::from_counts(&self.counts(), self.total))
    }

    /// Nearest-rank percentile `num/den`: the ⌈N·num/den⌉-th smallest sample.
    pub fn nearest_rank(&self, num: u64, den: u64) -> Result<u64> {
        if self.total == 0 {
            return Err(Error::EmptySamples);
        }
        let rank = (self.total * num).div_ceil(den).max(1);
        let mut seen = 0;
        for (v, c) in self.counts().into_iter().enumerate() {
            seen += c;
            if seen >= rank {
                return Ok(v as u64);
            }
        }
        unreachable!("rank {rank} beyond {} samples", self.total)
    }

    pub fn percentile_999(&self) -> Result<u64> {
        self.nearest_rank(999, 1000)
    }

    pub fn mean(&self) -> Option<f64> {
        (self.total > 0).then(|| {
            let sum: f64 = self
                .counts()
                .iter()
                .enumerate()
                .map(|(v, &c)| v as f64 * c as f64)
                .sum();
            sum / self.total as f64
        })
    }
}

/// Empirical CCDF at 1 ms resolution: `F(i)` is the fraction of samples
/// strictly greater than `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ccdf {
    values: Vec<f64>,
}

impl Ccdf {
    fn from_counts(counts: &[u64], total: u64) -> Self {
        let mut above = total;
        let values = counts
            .iter()
            .map(|&c| {
                above -= c;
                above as f64 / total as f64
            })
            .collect();
        Ccdf { values }
    }

    /// From explicit `F(0), F(1), …` values (e.g. read back from a table).
    pub fn from_values(values: Vec<f64>) -> Self {
        Ccdf { values }
    }

    pub fn at(&self, i: u64) -> f64 {
        self.values.get(i as usize).copied().unwrap_or(0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(i, F(i))` rows up to the largest sample.
    pub fn points(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.values.iter().enumerate().map(|(i, &f)| (i as u64, f))
    }
}

/// CCDF of an explicit sample list.
pub fn ccdf(samples: &[u64]) -> Result<Ccdf> {
    let mut h = IntHistogram::new();
    for &s in samples {
        h.add(s);
    }
    h.ccdf()
}

pub fn percentile_999(samples: &[u64]) -> Result<u64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let rank = (sorted.len() as u64 * 999).div_ceil(1000).max(1);
    Ok(sorted[rank as usize - 1])
}

/// Mean relative reduction of a variant CCDF against a baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailImprovement {
    pub mean: f64,
    /// Points where the baseline is non-zero.
    pub defined_points: usize,
    pub excluded_points: usize,
}

/// Averages `(F_base(i) − F_variant(i)) / F_base(i)` over `i` in
/// `[from_ms, to_ms]` at 1 ms steps, skipping points where the baseline is 0.
pub fn tail_improvement(base: &Ccdf, variant: &Ccdf, from_ms: u64, to_ms: u64) -> Result<TailImprovement> {
    let mut sum = 0.0;
    let mut defined = 0usize;
    let mut excluded = 0usize;
    for i in from_ms..=to_ms {
        let fb = base.at(i);
        if fb > 0.0 {
            sum += (fb - variant.at(i)) / fb;
            defined += 1;
        } else {
            excluded += 1;
        }
    }
    if defined == 0 {
        return Err(Error::ZeroBaseline);
    }
    Ok(TailImprovement {
        mean: sum / defined as f64,
        defined_points: defined,
        excluded_points: excluded,
    })
}
