use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::resource_grid::SlotCoord;

/// Sensing history is folded onto candidate sub-frames with this period.
pub const SENSING_PERIOD_MS: u64 = 100;

const EMPTY: u64 = u64::MAX;

/// An SCI decoded by this vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SciRecord {
    pub tx: u32,
    pub heard_at: u64,
    pub rsrp_mw: f64,
    /// Future resources announced by the SCI; `None` when not reserving.
    pub reserved: [Option<SlotCoord>; 2],
}

/// What a vehicle measured in one sub-frame it did not transmit in.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    /// S-RSSI per sub-channel, linear mW (noise included).
    pub rssi_mw: &'a [f32],
    pub scis: &'a [SciRecord],
}

/// Rolling per-vehicle record of the last `history_len` sub-frames.
#[derive(Debug, Clone)]
pub struct SensingDatabase {
    history_len: u64,
    subchannels: usize,
    stamps: Vec<u64>,
    own_tx: Vec<bool>,
    rssi: Vec<f32>,
    scis: VecDeque<SciRecord>,
    last: Option<u64>,
}

/// One retained sub-frame of history.
#[derive(Debug, Clone, Copy)]
pub struct HistoryEntry<'a> {
    pub subframe: u64,
    pub own_tx: bool,
    /// Empty when `own_tx`.
    pub rssi_mw: &'a [f32],
}

impl SensingDatabase {
    pub fn new(history_len: u32, subchannels: u32) -> Self {
        let len = history_len as usize;
        let subchannels = subchannels as usize;
        SensingDatabase {
            history_len: u64::from(history_len),
            subchannels,
            stamps: vec![EMPTY; len],
            own_tx: vec![false; len],
            rssi: vec![0.0; len * subchannels],
            scis: VecDeque::new(),
            last: None,
        }
    }

    pub fn history_len(&self) -> u64 {
        self.history_len
    }

    pub fn subchannels(&self) -> usize {
        self.subchannels
    }

    pub fn last_recorded(&self) -> Option<u64> {
        self.last
    }

    /// Advances the history by one sub-frame. An own-transmission sub-frame is
    /// stored as unmonitored and its observation is dropped.
    pub fn record_subframe(&mut self, subframe: u64, obs: Observation<'_>, own_tx: bool) -> Result<()> {
        if let Some(last) = self.last {
            if subframe <= last {
                return Err(Error::DuplicateSubframe { subframe, last });
            }
        }
        debug_assert!(own_tx || obs.rssi_mw.len() == self.subchannels);
        let slot = (subframe % self.history_len) as usize;
        self.stamps[slot] = subframe;
        self.own_tx[slot] = own_tx;
        let row = &mut self.rssi[slot * self.subchannels..(slot + 1) * self.subchannels];
        if own_tx {
            row.fill(0.0);
        } else {
            row.copy_from_slice(obs.rssi_mw);
            self.scis.extend(obs.scis.iter().copied());
        }
        self.last = Some(subframe);
        while self.scis.front().is_some_and(|s| !self.in_history(s.heard_at)) {
            self.scis.pop_front();
        }
        Ok(())
    }

    fn in_history(&self, subframe: u64) -> bool {
        match self.last {
            Some(last) => subframe != EMPTY && subframe + self.history_len > last && subframe <= last,
            None => false,
        }
    }

    /// Retained sub-frames, oldest first.
    pub fn entries(&self) -> impl Iterator<Item = HistoryEntry<'_>> + '_ {
        let mut idx: Vec<usize> = (0..self.stamps.len()).filter(|&i| self.in_history(self.stamps[i])).collect();
        idx.sort_by_key(|&i| self.stamps[i]);
        idx.into_iter().map(move |i| HistoryEntry {
            subframe: self.stamps[i],
            own_tx: self.own_tx[i],
            rssi_mw: if self.own_tx[i] {
                &[]
            } else {
                &self.rssi[i * self.subchannels..(i + 1) * self.subchannels]
            },
        })
    }

    pub fn scis(&self) -> impl Iterator<Item = &SciRecord> + '_ {
        self.scis.iter()
    }

    /// Residues (mod [`SENSING_PERIOD_MS`]) of retained own-transmission sub-frames.
    pub fn unmonitored_residues(&self) -> [bool; SENSING_PERIOD_MS as usize] {
        let mut out = [false; SENSING_PERIOD_MS as usize];
        for (i, &stamp) in self.stamps.iter().enumerate() {
            if self.own_tx[i] && self.in_history(stamp) {
                out[(stamp % SENSING_PERIOD_MS) as usize] = true;
            }
        }
        out
    }

    /// Mean S-RSSI (mW) per residue and sub-channel over monitored history,
    /// `None` where nothing was monitored. Indexed `[residue * subchannels + s]`.
    pub fn rssi_by_residue(&self) -> Vec<Option<f64>> {
        let period = SENSING_PERIOD_MS as usize;
        let mut sum = vec![0.0f64; period * self.subchannels];
        let mut count = vec![0u32; period];
        for (i, &stamp) in self.stamps.iter().enumerate() {
            if self.own_tx[i] || !self.in_history(stamp) {
                continue;
            }
            let r = (stamp % SENSING_PERIOD_MS) as usize;
            count[r] += 1;
            let row = &self.rssi[i * self.subchannels..(i + 1) * self.subchannels];
            for (acc, &v) in sum[r * self.subchannels..(r + 1) * self.subchannels].iter_mut().zip(row) {
                *acc += f64::from(v);
            }
        }
        sum.iter()
            .enumerate()
            .map(|(k, &s)| {
                let c = count[k / self.subchannels];
                (c > 0).then(|| s / f64::from(c))
            })
            .collect()
    }

    /// Mean S-RSSI (mW) of one sub-channel over the retained sub-frames
    /// congruent to `residue`, with the number of entries averaged.
    pub fn residue_mean(&self, residue: u64, subchannel: usize) -> Option<f64> {
        let mut sum = 0.0;
        let mut count = 0u32;
        let mut sf = residue % SENSING_PERIOD_MS;
        let last = self.last?;
        let oldest = (last + 1).saturating_sub(self.history_len);
        if sf < oldest {
            sf += (oldest - sf).div_ceil(SENSING_PERIOD_MS) * SENSING_PERIOD_MS;
        }
        while sf <= last {
            let slot = (sf % self.history_len) as usize;
            if self.stamps[slot] == sf && !self.own_tx[slot] {
                sum += f64::from(self.rssi[slot * self.subchannels + subchannel]);
                count += 1;
            }
            sf += SENSING_PERIOD_MS;
        }
        (count > 0).then(|| sum / f64::from(count))
    }
}
