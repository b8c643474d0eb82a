//! Inter-packet gap, information age, packet reception ratio and channel busy
//! ratio statistics.

mod cbr;
mod histogram;
mod recorder;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cbr::{CbrMeter, CbrSummary};
pub use histogram::{ccdf, percentile_999, tail_improvement, Ccdf, IntHistogram, TailImprovement};
pub use recorder::{MetricsRecorder, PairInfo};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// Centres of the IPG/IA distance bins.
    pub ccdf_bins_m: Vec<f64>,
    pub ccdf_half_width_m: f64,
    /// Vehicles within this distance of the highway centre report CBR.
    pub cbr_center_radius_m: f64,
    pub cbr_threshold_dbm: f64,
    /// Range of the tail-improvement average, ms.
    pub tail_from_ms: u64,
    pub tail_to_ms: u64,
    /// Write a per-reception trace log next to the result tables.
    pub trace: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            ccdf_bins_m: vec![100.0, 200.0, 300.0, 400.0, 500.0],
            ccdf_half_width_m: 25.0,
            cbr_center_radius_m: 25.0,
            cbr_threshold_dbm: -94.0,
            tail_from_ms: 3000,
            tail_to_ms: 10_000,
            trace: false,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ccdf_bins_m.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::config("metrics.ccdf_bins_m", "bin centres must be positive"));
        }
        if !(self.ccdf_half_width_m > 0.0) {
            return Err(Error::config("metrics.ccdf_half_width_m", "must be positive"));
        }
        if self.tail_from_ms > self.tail_to_ms {
            return Err(Error::config("metrics.tail_from_ms", "must not exceed tail_to_ms"));
        }
        if !self.cbr_threshold_dbm.is_finite() {
            return Err(Error::config("metrics.cbr_threshold_dbm", "must be finite"));
        }
        Ok(())
    }

    pub fn bins(&self) -> Vec<DistanceBin> {
        self.ccdf_bins_m
            .iter()
            .map(|&c| DistanceBin::new(c, self.ccdf_half_width_m))
            .collect()
    }
}

/// Tx-Rx separations `[center − half_width, center + half_width)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceBin {
    pub center_m: f64,
    pub half_width_m: f64,
}

impl DistanceBin {
    pub fn new(center_m: f64, half_width_m: f64) -> Self {
        DistanceBin { center_m, half_width_m }
    }

    pub fn contains(&self, distance_m: f64) -> bool {
        distance_m >= self.center_m - self.half_width_m && distance_m < self.center_m + self.half_width_m
    }
}

/// Index of the 1 m PRR bin containing `distance_m`.
pub fn prr_bin(distance_m: f64) -> usize {
    (distance_m + 0.5).floor() as usize
}

/// A successfully received BSM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceptionRecord {
    pub tx: u32,
    pub rx: u32,
    pub t_gen: u64,
    pub t_rx: u64,
    pub distance_m: f64,
    /// Generation-to-transmission latency of the received copy.
    pub eta_ms: u64,
}

/// Information age at `t_now` given the last reception.
pub fn information_age(t_now: u64, last_rx: u64, eta_ms: u64) -> u64 {
    t_now - last_rx + eta_ms
}

/// Transmitted/received BSM counts per 1 m distance bin.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PrrTable {
    counts: Vec<(u64, u64)>,
}

impl PrrTable {
    fn slot(&mut self, bin: usize) -> &mut (u64, u64) {
        if self.counts.len() <= bin {
            self.counts.resize(bin + 1, (0, 0));
        }
        &mut self.counts[bin]
    }

    pub fn add_transmitted(&mut self, bin: usize) {
        self.slot(bin).0 += 1;
    }

    pub fn add_received(&mut self, bin: usize) {
        self.slot(bin).1 += 1;
    }

    /// `(transmitted, received)` for one bin.
    pub fn counts(&self, bin: usize) -> (u64, u64) {
        self.counts.get(bin).copied().unwrap_or((0, 0))
    }

    /// `R / T`, absent when nothing was transmitted in the bin.
    pub fn prr(&self, bin: usize) -> Option<f64> {
        let (t, r) = self.counts(bin);
        (t > 0).then(|| r as f64 / t as f64)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn merge(&mut self, other: &PrrTable) {
        for (bin, &(t, r)) in other.counts.iter().enumerate() {
            let s = self.slot(bin);
            s.0 += t;
            s.1 += r;
        }
    }
}

/// Running mean of the generation intervals used by vehicles in the
/// statistics region.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IntervalStats {
    pub sum_ms: f64,
    pub count: u64,
}

impl IntervalStats {
    pub fn record(&mut self, interval_ms: f64) {
        self.sum_ms += interval_ms;
        self.count += 1;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum_ms / self.count as f64)
    }
}

/// All accumulators of one or more runs. Merging is associative, so results
/// of independent seeds combine in any grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsStore {
    pub bins: Vec<DistanceBin>,
    pub ipg: Vec<IntHistogram>,
    pub ia: Vec<IntHistogram>,
    /// Pairs in each bin that never received a BSM.
    pub silent_pairs: Vec<u64>,
    pub prr: PrrTable,
    pub cbr: Vec<CbrSummary>,
    pub interval: IntervalStats,
    pub runs: u64,
}

impl MetricsStore {
    pub fn new(bins: Vec<DistanceBin>) -> Self {
        let n = bins.len();
        MetricsStore {
            bins,
            ipg: vec![IntHistogram::new(); n],
            ia: vec![IntHistogram::new(); n],
            silent_pairs: vec![0; n],
            prr: PrrTable::default(),
            cbr: Vec::new(),
            interval: IntervalStats::default(),
            runs: 1,
        }
    }

    /// Index of the bin centred at `center_m`.
    pub fn bin_index(&self, center_m: f64) -> Option<usize> {
        self.bins.iter().position(|b| b.center_m == center_m)
    }

    pub fn prr(&self, distance_m: f64) -> Option<f64> {
        self.prr.prr(prr_bin(distance_m))
    }

    /// Time-averaged CBR over all reporting vehicles.
    pub fn mean_cbr(&self) -> Option<f64> {
        let (sum, n) = self
            .cbr
            .iter()
            .fold((0.0, 0u64), |(s, n), c| (s + c.sum, n + c.samples));
        (n > 0).then(|| sum / n as f64)
    }

    pub fn merge(&mut self, other: &MetricsStore) -> Result<()> {
        if self.bins != other.bins {
            return Err(Error::config("metrics.ccdf_bins_m", "cannot merge stores with different bins"));
        }
        for (a, b) in self.ipg.iter_mut().zip(&other.ipg) {
            a.merge(b);
        }
        for (a, b) in self.ia.iter_mut().zip(&other.ia) {
            a.merge(b);
        }
        for (a, b) in self.silent_pairs.iter_mut().zip(&other.silent_pairs) {
            *a += b;
        }
        self.prr.merge(&other.prr);
        self.cbr.extend(other.cbr.iter().cloned());
        self.interval.sum_ms += other.interval.sum_ms;
        self.interval.count += other.interval.count;
        self.runs += other.runs;
        Ok(())
    }
}
