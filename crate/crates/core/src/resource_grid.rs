//! Time/frequency geometry of the sidelink resource pool.
//!
//! Time is an integer sub-frame counter (1 ms per sub-frame). In frequency the
//! pool is split into sub-channels (VRBs) of `prbs_per_subchannel` PRBs each.
//! A BSM always occupies two contiguous sub-channels of one sub-frame; the SCI
//! sits in the first two PRBs of the first of those sub-channels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bandwidth of one PRB in Hz.
pub const PRB_BANDWIDTH_HZ: f64 = 180_000.0;
/// Sub-channels occupied by one BSM.
pub const SUBCHANNELS_PER_BSM: u32 = 2;
/// PRBs carrying the SCI (PSCCH).
pub const PSCCH_PRBS: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Bandwidth {
    Mhz10,
    Mhz20,
}

impl Bandwidth {
    pub fn mhz(self) -> u32 {
        match self {
            Bandwidth::Mhz10 => 10,
            Bandwidth::Mhz20 => 20,
        }
    }

    /// Sub-channels per sub-frame at 10 PRBs per sub-channel.
    pub fn default_subchannels(self) -> u32 {
        match self {
            Bandwidth::Mhz10 => 5,
            Bandwidth::Mhz20 => 10,
        }
    }
}

impl TryFrom<u32> for Bandwidth {
    type Error = String;

    fn try_from(mhz: u32) -> std::result::Result<Self, Self::Error> {
        match mhz {
            10 => Ok(Bandwidth::Mhz10),
            20 => Ok(Bandwidth::Mhz20),
            other => Err(format!("bandwidth must be 10 or 20 MHz, got {other}")),
        }
    }
}

impl From<Bandwidth> for u32 {
    fn from(bw: Bandwidth) -> u32 {
        bw.mhz()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoolConfig {
    pub bandwidth_mhz: Bandwidth,
    pub subchannels_per_subframe: u32,
    pub prbs_per_subchannel: u32,
    pub sensing_history_len: u32,
    /// Start of the selection window relative to generation, in sub-frames.
    pub t1: u32,
    /// Packet delay budget; fixes the end of the selection window.
    pub pdb_ms: u32,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            bandwidth_mhz: Bandwidth::Mhz20,
            subchannels_per_subframe: 10,
            prbs_per_subchannel: 10,
            sensing_history_len: 1000,
            t1: 4,
            pdb_ms: 100,
        }
    }
}

impl PoolConfig {
    pub fn for_bandwidth(bandwidth: Bandwidth) -> Self {
        PoolConfig {
            bandwidth_mhz: bandwidth,
            subchannels_per_subframe: bandwidth.default_subchannels(),
            ..PoolConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.subchannels_per_subframe != self.bandwidth_mhz.default_subchannels() {
            return Err(Error::config(
                "pool.subchannels_per_subframe",
                format!(
                    "{} sub-channels do not match {} MHz (expected {})",
                    self.subchannels_per_subframe,
                    self.bandwidth_mhz.mhz(),
                    self.bandwidth_mhz.default_subchannels()
                ),
            ));
        }
        if self.prbs_per_subchannel != 10 {
            return Err(Error::config(
                "pool.prbs_per_subchannel",
                format!("only 10 PRBs per sub-channel are supported, got {}", self.prbs_per_subchannel),
            ));
        }
        if self.sensing_history_len == 0 {
            return Err(Error::config("pool.sensing_history_len", "must be positive"));
        }
        if self.t1 > 4 {
            return Err(Error::config("pool.t1", format!("must be <= 4, got {}", self.t1)));
        }
        if self.pdb_ms == 0 {
            return Err(Error::config("pool.pdb_ms", "must be positive"));
        }
        Ok(())
    }

    /// Number of distinct start positions of a two-sub-channel allocation.
    pub fn pair_positions(&self) -> u32 {
        self.subchannels_per_subframe.saturating_sub(SUBCHANNELS_PER_BSM - 1)
    }

    /// PRBs of PSSCH in a BSM allocation.
    pub fn pssch_prbs(&self) -> u32 {
        SUBCHANNELS_PER_BSM * self.prbs_per_subchannel - PSCCH_PRBS
    }

    pub fn window_for_generation(&self, n: u64) -> SelectionWindow {
        window_for_generation(n, self.t1, self.pdb_ms)
    }
}

/// A two-sub-channel allocation in one sub-frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlotCoord {
    pub subframe: u64,
    pub start_subchannel: u32,
}

impl SlotCoord {
    pub fn new(subframe: u64, start_subchannel: u32) -> Self {
        SlotCoord {
            subframe,
            start_subchannel,
        }
    }

    /// True if the two allocations share at least one sub-channel in the same sub-frame.
    pub fn overlaps(&self, other: &SlotCoord) -> bool {
        self.subframe == other.subframe
            && self.start_subchannel.abs_diff(other.start_subchannel) < SUBCHANNELS_PER_BSM
    }

    pub fn subchannels(&self) -> std::ops::Range<u32> {
        self.start_subchannel..self.start_subchannel + SUBCHANNELS_PER_BSM
    }

    fn shifted(self, delta: i64) -> SlotCoord {
        SlotCoord {
            subframe: (self.subframe as i64 + delta) as u64,
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GrantKind {
    Sps,
    OneShot,
}

/// Resources selected in the window anchored at generation time `anchor`.
///
/// Reusing a grant for a later BSM keeps the same offset into the new window,
/// see [`Grant::reanchored`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grant {
    pub anchor: u64,
    pub slot: SlotCoord,
    pub harq_slot: Option<SlotCoord>,
    pub kind: GrantKind,
}

impl Grant {
    pub fn new(anchor: u64, slot: SlotCoord, harq_slot: Option<SlotCoord>, kind: GrantKind) -> Self {
        debug_assert!(harq_slot.is_none_or(|h| h.subframe.abs_diff(slot.subframe) <= 15));
        Grant {
            anchor,
            slot,
            harq_slot,
            kind,
        }
    }

    /// Same relative position inside the window of a BSM generated at `n`.
    pub fn reanchored(&self, n: u64) -> Grant {
        let delta = n as i64 - self.anchor as i64;
        Grant {
            anchor: n,
            slot: self.slot.shifted(delta),
            harq_slot: self.harq_slot.map(|h| h.shifted(delta)),
            kind: self.kind,
        }
    }

    /// Offset of the initial transmission from the anchor, in sub-frames.
    pub fn offset(&self) -> u64 {
        self.slot.subframe - self.anchor
    }

    /// Transmissions in sub-frame order.
    pub fn transmissions(&self) -> impl Iterator<Item = SlotCoord> {
        let mut slots = [Some(self.slot), self.harq_slot];
        if let [Some(a), Some(b)] = slots {
            if b.subframe < a.subframe {
                slots = [Some(b), Some(a)];
            }
        }
        slots.into_iter().flatten()
    }
}

/// Candidate region `[n + t1, n + t2]` following generation time `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionWindow {
    pub n: u64,
    pub t1: u32,
    pub t2: u32,
}

impl SelectionWindow {
    /// Arbitrary window, used for reduced test pools. Panics if `t1 > t2`.
    pub fn new(n: u64, t1: u32, t2: u32) -> Self {
        assert!(t1 <= t2, "selection window start {t1} after end {t2}");
        SelectionWindow { n, t1, t2 }
    }

    pub fn first_subframe(&self) -> u64 {
        self.n + u64::from(self.t1)
    }

    pub fn last_subframe(&self) -> u64 {
        self.n + u64::from(self.t2)
    }

    pub fn len_subframes(&self) -> u32 {
        self.t2 - self.t1 + 1
    }

    pub fn contains(&self, subframe: u64) -> bool {
        (self.first_subframe()..=self.last_subframe()).contains(&subframe)
    }
}

/// End of the selection window for a packet delay budget.
pub fn t2_for_pdb(pdb_ms: u32) -> u32 {
    pdb_ms.saturating_sub(10).max(20)
}

pub fn window_for_generation(n: u64, t1: u32, pdb_ms: u32) -> SelectionWindow {
    SelectionWindow::new(n, t1, t2_for_pdb(pdb_ms))
}

/// Every two-sub-channel allocation in the window, sub-frame major.
pub fn enumerate_candidates(window: &SelectionWindow, pool: &PoolConfig) -> Vec<SlotCoord> {
    let positions = pool.pair_positions();
    (window.first_subframe()..=window.last_subframe())
        .flat_map(|sf| (0..positions).map(move |s| SlotCoord::new(sf, s)))
        .collect()
}

pub fn candidate_count(window: &SelectionWindow, pool: &PoolConfig) -> usize {
    window.len_subframes() as usize * pool.pair_positions() as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy_pool(subchannels: u32) -> PoolConfig {
        PoolConfig {
            subchannels_per_subframe: subchannels,
            ..PoolConfig::default()
        }
    }

    #[test]
    fn candidate_counts() {
        let w = window_for_generation(1000, 4, 100);
        assert_eq!(enumerate_candidates(&w, &toy_pool(10)).len(), 783);
        let w = window_for_generation(0, 4, 100);
        assert_eq!(enumerate_candidates(&w, &toy_pool(5)).len(), 348);
    }

    #[test]
    fn two_subchannels_give_one_position() {
        let w = window_for_generation(0, 4, 100);
        let c = enumerate_candidates(&w, &toy_pool(2));
        assert_eq!(c.len(), 87);
        assert!(c.iter().all(|s| s.start_subchannel == 0));
    }

    #[test]
    fn t2_from_pdb() {
        assert_eq!(t2_for_pdb(100), 90);
        assert_eq!(t2_for_pdb(25), 20);
        assert_eq!(t2_for_pdb(31), 21);
        assert_eq!(t2_for_pdb(5), 20);
    }

    #[test]
    fn bandwidth_mismatch_rejected() {
        let pool = PoolConfig {
            bandwidth_mhz: Bandwidth::Mhz20,
            subchannels_per_subframe: 5,
            ..PoolConfig::default()
        };
        let err = pool.validate().unwrap_err();
        assert!(err.to_string().contains("pool.subchannels_per_subframe"));
        assert!(PoolConfig::for_bandwidth(Bandwidth::Mhz10).validate().is_ok());
    }

    #[test]
    fn reanchoring_keeps_offset() {
        let g = Grant::new(100, SlotCoord::new(150, 3), Some(SlotCoord::new(140, 0)), GrantKind::Sps);
        let r = g.reanchored(420);
        assert_eq!(r.slot, SlotCoord::new(470, 3));
        assert_eq!(r.harq_slot, Some(SlotCoord::new(460, 0)));
        assert_eq!(r.offset(), 50);
        let order: Vec<_> = r.transmissions().map(|s| s.subframe).collect();
        assert_eq!(order, vec![460, 470]);
    }

    #[test]
    fn overlap() {
        let a = SlotCoord::new(5, 3);
        assert!(a.overlaps(&SlotCoord::new(5, 4)));
        assert!(a.overlaps(&SlotCoord::new(5, 2)));
        assert!(!a.overlaps(&SlotCoord::new(5, 5)));
        assert!(!a.overlaps(&SlotCoord::new(6, 3)));
    }

    proptest! {
        #[test]
        fn enumeration_is_complete_and_unique(
            n in 0u64..100_000, t1 in 0u32..=4, pdb in 1u32..200, s in 2u32..=12,
        ) {
            let pool = toy_pool(s);
            let w = window_for_generation(n, t1, pdb);
            let c = enumerate_candidates(&w, &pool);
            prop_assert_eq!(c.len(), ((w.t2 - w.t1 + 1) * (s - 1)) as usize);
            prop_assert_eq!(c.len(), candidate_count(&w, &pool));
            prop_assert!(c.windows(2).all(|p| p[0] < p[1]));
            prop_assert!(c.iter().all(|x| w.contains(x.subframe) && x.start_subchannel <= s - 2));
        }

        #[test]
        fn t2_monotone_above_30(a in 30u32..10_000, b in 30u32..10_000) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(t2_for_pdb(lo) <= t2_for_pdb(hi));
        }
    }
}
