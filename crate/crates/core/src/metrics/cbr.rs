use crate::channel::db_to_linear;
use crate::sps::{SensingDatabase, SENSING_PERIOD_MS};

/// Time-averaged CBR of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbrSummary {
    pub vehicle: u32,
    pub sum: f64,
    pub samples: u64,
}

impl CbrSummary {
    pub fn mean(&self) -> Option<f64> {
        (self.samples > 0).then(|| self.sum / self.samples as f64)
    }
}

/// Per-vehicle busy map over the last 100 sub-frames of VRBs.
///
/// A VRB position is busy when its S-RSSI averaged over the sensing history
/// exceeds the threshold. Only the VRBs of the current sub-frame change
/// state on each update, so the map is refreshed one column at a time.
#[derive(Debug, Clone)]
pub struct CbrMeter {
    subchannels: usize,
    threshold_mw: f64,
    busy: Vec<bool>,
    busy_count: usize,
    summary: CbrSummary,
}

impl CbrMeter {
    pub fn new(vehicle: u32, subchannels: usize, threshold_dbm: f64) -> Self {
        CbrMeter {
            subchannels,
            threshold_mw: db_to_linear(threshold_dbm),
            busy: vec![false; SENSING_PERIOD_MS as usize * subchannels],
            busy_count: 0,
            summary: CbrSummary { vehicle, sum: 0.0, samples: 0 },
        }
    }

    /// Refreshes the VRBs of sub-frame `t` (already recorded in `db`) and
    /// returns the instantaneous CBR; `record` adds it to the time average.
    pub fn update(&mut self, db: &SensingDatabase, t: u64, record: bool) -> f64 {
        let residue = t % SENSING_PERIOD_MS;
        for s in 0..self.subchannels {
            let busy = db.residue_mean(residue, s).is_some_and(|m| m > self.threshold_mw);
            let cell = &mut self.busy[residue as usize * self.subchannels + s];
            if *cell != busy {
                *cell = busy;
                if busy {
                    self.busy_count += 1;
                } else {
                    self.busy_count -= 1;
                }
            }
        }
        let cbr = self.busy_count as f64 / self.busy.len() as f64;
        if record {
            self.summary.sum += cbr;
            self.summary.samples += 1;
        }
        cbr
    }

    pub fn summary(&self) -> CbrSummary {
        self.summary
    }
}
