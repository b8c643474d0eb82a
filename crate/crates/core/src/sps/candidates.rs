use std::collections::BTreeMap;

use crate::channel::linear_to_db;
use crate::error::{Error, Result};
use crate::resource_grid::{enumerate_candidates, PoolConfig, SelectionWindow, SlotCoord};

use super::sensing::{SensingDatabase, SENSING_PERIOD_MS};
use super::SchedulerDraws;

/// Step applied to the RSRP threshold while too few candidates survive.
pub const RSRP_STEP_DB: f64 = 3.0;
/// HARQ retransmission must fall within this many sub-frames of the initial one.
pub const HARQ_MAX_GAP: u64 = 15;

/// Number of candidates kept out of `total`: the ceiling of 20 %.
pub fn target_size(total: usize) -> usize {
    total.div_ceil(5)
}

#[derive(Debug, Clone, Copy)]
struct Reservation {
    slot: SlotCoord,
    rsrp_dbm: f64,
}

/// Latest announced resources of every transmitter heard, with that
/// transmitter's mean RSRP over all its retained SCIs.
fn reservations(db: &SensingDatabase) -> Vec<Reservation> {
    let mut by_tx: BTreeMap<u32, (u64, [Option<SlotCoord>; 2], f64, u32)> = BTreeMap::new();
    for sci in db.scis() {
        let e = by_tx.entry(sci.tx).or_insert((sci.heard_at, sci.reserved, 0.0, 0));
        if sci.heard_at >= e.0 {
            e.0 = sci.heard_at;
            e.1 = sci.reserved;
        }
        e.2 += sci.rsrp_mw;
        e.3 += 1;
    }
    by_tx
        .into_values()
        .flat_map(|(_, slots, sum, n)| {
            let rsrp_dbm = linear_to_db(sum / f64::from(n));
            slots.into_iter().flatten().map(move |slot| Reservation { slot, rsrp_dbm })
        })
        .collect()
}

/// Sensing-based candidate list: RSRP exclusion with the 3 dB relaxation loop,
/// then the lowest-S-RSSI 20 % of what remains.
///
/// Candidates in sub-frames the vehicle could not monitor (own transmissions,
/// folded mod 100 ms) are excluded alongside RSRP exclusions. If even an
/// unbounded threshold leaves fewer than 20 %, the own-transmission exclusion
/// is dropped as well.
pub fn build_candidate_list(
    db: &SensingDatabase,
    window: &SelectionWindow,
    pool: &PoolConfig,
    rsrp_threshold_dbm: f64,
) -> Vec<SlotCoord> {
    let all = enumerate_candidates(window, pool);
    let total = all.len();
    let target = target_size(total);
    if total == 0 {
        return all;
    }
    let positions = pool.pair_positions() as usize;
    let first = window.first_subframe();
    let index = |slot: SlotCoord| (slot.subframe - first) as usize * positions + slot.start_subchannel as usize;

    let unmonitored = db.unmonitored_residues();
    let own_excluded: Vec<bool> = all
        .iter()
        .map(|c| unmonitored[(c.subframe % SENSING_PERIOD_MS) as usize])
        .collect();

    let mut in_window: Vec<Reservation> = reservations(db)
        .into_iter()
        .filter(|r| window.contains(r.slot.subframe))
        .collect();
    in_window.sort_by(|a, b| b.rsrp_dbm.total_cmp(&a.rsrp_dbm));
    let strongest = in_window.first().map(|r| r.rsrp_dbm);

    let mut threshold = rsrp_threshold_dbm;
    let mut excluded = vec![false; total];
    let mut apply_own = true;
    loop {
        excluded.copy_from_slice(&own_excluded);
        if !apply_own {
            excluded.fill(false);
        }
        for r in in_window.iter().take_while(|r| r.rsrp_dbm > threshold) {
            let s = r.slot.start_subchannel as usize;
            for start in s.saturating_sub(1)..=(s + 1).min(positions - 1) {
                let c = SlotCoord::new(r.slot.subframe, start as u32);
                excluded[index(c)] = true;
            }
        }
        let remaining = excluded.iter().filter(|&&e| !e).count();
        if remaining >= target {
            break;
        }
        if strongest.is_none_or(|s| s <= threshold) {
            if !apply_own {
                break;
            }
            apply_own = false;
            continue;
        }
        threshold += RSRP_STEP_DB;
    }

    let rssi = db.rssi_by_residue();
    let subchannels = db.subchannels();
    let candidate_rssi = |c: &SlotCoord| -> f64 {
        let r = (c.subframe % SENSING_PERIOD_MS) as usize;
        c.subchannels()
            .map(|s| rssi[r * subchannels + s as usize].unwrap_or(0.0))
            .sum::<f64>()
            / 2.0
    };
    let mut remaining: Vec<(f64, SlotCoord)> = all
        .into_iter()
        .zip(excluded)
        .filter(|(_, e)| !e)
        .map(|(c, _)| (candidate_rssi(&c), c))
        .collect();
    // stable: ties keep sub-frame-major order
    remaining.sort_by(|a, b| a.0.total_cmp(&b.0));
    remaining.truncate(target);
    remaining.into_iter().map(|(_, c)| c).collect()
}

pub fn select_grant<D: SchedulerDraws + ?Sized>(candidates: &[SlotCoord], draws: &mut D) -> Result<SlotCoord> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    Ok(candidates[draws.index(candidates.len())])
}

/// Retransmission slot within [`HARQ_MAX_GAP`] sub-frames of `initial`, never in
/// the initial sub-frame itself.
pub fn select_harq_slot<D: SchedulerDraws + ?Sized>(
    candidates: &[SlotCoord],
    initial: SlotCoord,
    draws: &mut D,
) -> Option<SlotCoord> {
    let eligible: Vec<SlotCoord> = candidates
        .iter()
        .copied()
        .filter(|c| c.subframe != initial.subframe && c.subframe.abs_diff(initial.subframe) <= HARQ_MAX_GAP)
        .collect();
    (!eligible.is_empty()).then(|| eligible[draws.index(eligible.len())])
}
