use super::{information_age, prr_bin, DistanceBin, MetricsStore, ReceptionRecord};

/// A monitored ordered (tx, rx) link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairInfo {
    pub tx: u32,
    pub rx: u32,
    pub distance_m: f64,
}

#[derive(Debug, Clone, Copy)]
struct PairState {
    bin: Option<usize>,
    prr_bin: usize,
    last_rx: Option<u64>,
    last_eta: u64,
}

/// Streaming IPG, IA and PRR accumulation.
///
/// IA is sampled once per sub-frame from `stats_start` on. The samples of a
/// pair between two receptions form a run of consecutive integers, so they
/// are written only when the sawtooth resets or the run ends.
#[derive(Debug, Clone)]
pub struct MetricsRecorder {
    pairs: Vec<PairInfo>,
    state: Vec<PairState>,
    stats_start: u64,
    store: MetricsStore,
}

impl MetricsRecorder {
    pub fn new(bins: Vec<DistanceBin>, pairs: Vec<PairInfo>, stats_start: u64) -> Self {
        let state = pairs
            .iter()
            .map(|p| PairState {
                bin: bins.iter().position(|b| b.contains(p.distance_m)),
                prr_bin: prr_bin(p.distance_m),
                last_rx: None,
                last_eta: 0,
            })
            .collect();
        MetricsRecorder { pairs, state, stats_start, store: MetricsStore::new(bins) }
    }

    pub fn pairs(&self) -> &[PairInfo] {
        &self.pairs
    }

    pub fn stats_start(&self) -> u64 {
        self.stats_start
    }

    pub fn store_mut(&mut self) -> &mut MetricsStore {
        &mut self.store
    }

    /// A BSM whose first copy goes out at `t_tx` toward the pair's receiver.
    pub fn on_attempt(&mut self, pair: usize, t_tx: u64) {
        if t_tx >= self.stats_start {
            self.store.prr.add_transmitted(self.state[pair].prr_bin);
        }
    }

    /// A decoded BSM. `attempt_time` is the first-copy time passed to
    /// [`on_attempt`](Self::on_attempt) for the same BSM. Receptions of one
    /// pair must arrive in time order.
    pub fn on_reception(&mut self, pair: usize, rec: &ReceptionRecord, attempt_time: u64) {
        if attempt_time >= self.stats_start {
            self.store.prr.add_received(self.state[pair].prr_bin);
        }
        let st = self.state[pair];
        if let Some(bin) = st.bin {
            if let Some(prev) = st.last_rx {
                debug_assert!(rec.t_rx >= prev);
                if rec.t_rx >= self.stats_start {
                    self.store.ipg[bin].add(rec.t_rx - prev);
                }
            }
            self.flush_ia(pair, rec.t_rx);
        }
        let st = &mut self.state[pair];
        st.last_rx = Some(rec.t_rx);
        st.last_eta = rec.eta_ms;
    }

    /// Adds the IA samples of sub-frames `[max(last_rx, stats_start), until)`.
    fn flush_ia(&mut self, pair: usize, until: u64) {
        let st = self.state[pair];
        let (Some(bin), Some(last)) = (st.bin, st.last_rx) else {
            return;
        };
        let from = last.max(self.stats_start);
        if until > from {
            self.store.ia[bin].add_run(information_age(from, last, st.last_eta), until - from);
        }
    }

    /// Closes all sawtooth runs at `end` (exclusive) and returns the store.
    pub fn finish(mut self, end: u64) -> MetricsStore {
        for pair in 0..self.pairs.len() {
            self.flush_ia(pair, end);
            let st = self.state[pair];
            if let (Some(bin), None) = (st.bin, st.last_rx) {
                self.store.silent_pairs[bin] += 1;
            }
        }
        self.store
    }
}
