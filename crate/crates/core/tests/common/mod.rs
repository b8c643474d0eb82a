//! Brute-force reference implementations shared by the integration and
//! acceptance tests.
#![allow(dead_code)]

use cv2x_sim::metrics::{DistanceBin, IntHistogram, MetricsRecorder, MetricsStore, PairInfo, ReceptionRecord};
use cv2x_sim::resource_grid::{Grant, GrantKind, PoolConfig, SelectionWindow, SlotCoord};
use cv2x_sim::sps::{build_candidate_list, target_size};
use cv2x_sim::sps::{Observation, SciRecord, SensingDatabase};
use cv2x_sim::sps::{Action, CounterRange, OneShot, SchedulerConfig, SchedulerDraws, SchedulerState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Candidate list

/// One recorded sub-frame, kept verbatim.
#[derive(Debug, Clone)]
pub struct RawSubframe {
    pub subframe: u64,
    pub own_tx: bool,
    pub rssi_mw: Vec<f32>,
    pub scis: Vec<SciRecord>,
}

/// A randomized selection problem on a small pool.
#[derive(Debug, Clone)]
pub struct SelectionCase {
    pub history_len: u32,
    pub subchannels: u32,
    pub window: SelectionWindow,
    pub threshold_dbm: f64,
    pub history: Vec<RawSubframe>,
}

impl SelectionCase {
    pub fn pool(&self) -> PoolConfig {
        PoolConfig {
            subchannels_per_subframe: self.subchannels,
            sensing_history_len: self.history_len,
            ..PoolConfig::default()
        }
    }

    pub fn database(&self) -> SensingDatabase {
        let mut db = SensingDatabase::new(self.history_len, self.subchannels);
        for h in &self.history {
            let obs = Observation {
                rssi_mw: &h.rssi_mw,
                scis: &h.scis,
            };
            db.record_subframe(h.subframe, obs, h.own_tx).unwrap();
        }
        db
    }
}

/// Random case with at most 20 candidate slots. RSSI and RSRP values are
/// small dyadic multiples so that sums are exact in any order.
pub fn random_selection_case(rng: &mut ChaCha8Rng) -> SelectionCase {
    let subchannels = rng.random_range(2..=5u32);
    let positions = subchannels - 1;
    let max_len = (20 / positions).max(1);
    let len = rng.random_range(1..=max_len);
    let t1 = rng.random_range(1..=4u32);
    let history_len = [100u32, 200, 300, 1000][rng.random_range(0..4)];
    let recorded = rng.random_range(0..=history_len as u64 + 150);
    let n = recorded + rng.random_range(0..3u64);
    let window = SelectionWindow::new(n, t1, t1 + len - 1);
    let own_p = [0.0, 0.02, 0.2][rng.random_range(0..3)];
    let sci_p = [0.0, 0.05, 0.3][rng.random_range(0..3)];
    let txs = rng.random_range(1..=6u32);
    let first = n - recorded;
    let mut history = Vec::new();
    for sf in first..n {
        if rng.random_bool(0.05) {
            continue;
        }
        let own_tx = rng.random_bool(own_p);
        let rssi_mw = (0..subchannels)
            .map(|_| rng.random_range(0..8u32) as f32 * 2f32.powi(-30))
            .collect();
        let mut scis = Vec::new();
        while rng.random_bool(sci_p) && scis.len() < 3 {
            let mut slot = || {
                let reach = window.last_subframe() - sf + 3;
                SlotCoord::new(sf + rng.random_range(1..=reach), rng.random_range(0..positions))
            };
            let a = slot();
            let b = slot();
            let reserved = match rng.random_range(0..4) {
                0 => [None, None],
                1 => [Some(a), None],
                _ => [Some(a), Some(b)],
            };
            scis.push(SciRecord {
                tx: rng.random_range(0..txs),
                heard_at: sf,
                rsrp_mw: f64::from(rng.random_range(1..64u32)) * 2f64.powi(-45),
                reserved,
            });
        }
        history.push(RawSubframe {
            subframe: sf,
            own_tx,
            rssi_mw,
            scis,
        });
    }
    SelectionCase {
        history_len,
        subchannels,
        window,
        threshold_dbm: [-140.0, -128.0, -125.0, -110.0][rng.random_range(0..4)],
        history,
    }
}

/// Straight re-reading of the selection rule over the raw history.
pub fn oracle_candidate_list(case: &SelectionCase) -> Vec<SlotCoord> {
    let positions = case.subchannels - 1;
    let w = &case.window;
    let all: Vec<SlotCoord> = (w.first_subframe()..=w.last_subframe())
        .flat_map(|sf| (0..positions).map(move |s| SlotCoord::new(sf, s)))
        .collect();
    let target = all.len().div_ceil(5);
    let Some(last) = case.history.last().map(|h| h.subframe) else {
        return all[..target].to_vec();
    };
    let kept: Vec<&RawSubframe> = case
        .history
        .iter()
        .filter(|h| h.subframe + u64::from(case.history_len) > last)
        .collect();

    // latest SCI of each transmitter and its mean RSRP
    let mut txs: Vec<u32> = Vec::new();
    for h in kept.iter().filter(|h| !h.own_tx) {
        for s in &h.scis {
            if !txs.contains(&s.tx) {
                txs.push(s.tx);
            }
        }
    }
    let mut reservations: Vec<(SlotCoord, f64)> = Vec::new();
    for tx in txs {
        let mut sum = 0.0;
        let mut n = 0u32;
        let mut latest: Option<&SciRecord> = None;
        for h in kept.iter().filter(|h| !h.own_tx) {
            for s in h.scis.iter().filter(|s| s.tx == tx) {
                sum += s.rsrp_mw;
                n += 1;
                if latest.is_none_or(|l| s.heard_at >= l.heard_at) {
                    latest = Some(s);
                }
            }
        }
        let dbm = 10.0 * (sum / f64::from(n)).log10();
        for slot in latest.unwrap().reserved.into_iter().flatten() {
            if w.contains(slot.subframe) {
                reservations.push((slot, dbm));
            }
        }
    }
    let own_residue = |sf: u64| kept.iter().any(|h| h.own_tx && h.subframe % 100 == sf % 100);
    let excluded = |c: &SlotCoord, threshold: f64, own: bool| {
        (own && own_residue(c.subframe))
            || reservations.iter().any(|(r, dbm)| {
                *dbm > threshold && r.subframe == c.subframe && r.start_subchannel.abs_diff(c.start_subchannel) <= 1
            })
    };

    let mut threshold = case.threshold_dbm;
    let mut own = true;
    loop {
        let left = all.iter().filter(|c| !excluded(c, threshold, own)).count();
        if left >= target {
            break;
        }
        if reservations.iter().all(|(_, dbm)| *dbm <= threshold) {
            if own {
                own = false;
                continue;
            }
            break;
        }
        threshold += 3.0;
    }

    let mean_rssi = |sf: u64, s: u32| -> f64 {
        let mut sum = 0.0;
        let mut n = 0.0;
        for h in kept.iter().filter(|h| !h.own_tx && h.subframe % 100 == sf % 100) {
            sum += f64::from(h.rssi_mw[s as usize]);
            n += 1.0;
        }
        if n > 0.0 {
            sum / n
        } else {
            0.0
        }
    };
    let mut ranked: Vec<(f64, usize, SlotCoord)> = all
        .iter()
        .enumerate()
        .filter(|(_, c)| !excluded(c, threshold, own))
        .map(|(i, c)| {
            let r = (mean_rssi(c.subframe, c.start_subchannel) + mean_rssi(c.subframe, c.start_subchannel + 1)) / 2.0;
            (r, i, *c)
        })
        .collect();
    ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    ranked.into_iter().take(target).map(|(_, _, c)| c).collect()
}

/// Compares the candidate list against the oracle on `cases` random
/// databases.
pub fn check_candidate_lists(seed: u64, cases: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reordered = 0;
    for k in 0..cases {
        let case = random_selection_case(&mut rng);
        let pool = case.pool();
        let got = build_candidate_list(&case.database(), &case.window, &pool, case.threshold_dbm);
        let total = case.window.len_subframes() as usize * (case.subchannels as usize - 1);
        if total > 20 {
            return Err(format!("case {k}: pool of {total} slots"));
        }
        if got.len() != target_size(total) {
            return Err(format!("case {k}: {} candidates out of {total}", got.len()));
        }
        let want = oracle_candidate_list(&case);
        if got != want {
            return Err(format!("case {k}: got {got:?}, oracle {want:?}\n{case:?}"));
        }
        let first = cv2x_sim::resource_grid::enumerate_candidates(&case.window, &pool);
        if got[..] != first[..got.len()] {
            reordered += 1;
        }
    }
    // most databases must actually move the list away from plain slot order
    if reordered * 2 < cases {
        return Err(format!("only {reordered} of {cases} lists were non-trivial"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// One-shot state machine

/// Scripted draws: one reselection outcome, counters at the top of their
/// range.
pub struct Scripted {
    pub reselect: bool,
}

impl SchedulerDraws for Scripted {
    fn reselect(&mut self, _: f64) -> bool {
        self.reselect
    }
    fn counter(&mut self, range: CounterRange) -> u32 {
        range.hi
    }
    fn index(&mut self, _: usize) -> usize {
        0
    }
}

const CS_RANGE: CounterRange = CounterRange::new(5, 15);
const CO_RANGE: CounterRange = CounterRange::new(2, 6);

fn sps_grant(anchor: u64) -> Grant {
    Grant::new(anchor, SlotCoord::new(anchor + 10, 0), None, GrantKind::Sps)
}

fn fresh_grant(kind: GrantKind, n: u64) -> Grant {
    Grant::new(n, SlotCoord::new(n + 40, 3), None, kind)
}

/// Expected `(action, cs, co, transmitted grant, SPS grant kept)` after one
/// opportunity at `n`, written out case by case.
fn expected(cs: u32, co: Option<u32>, reselect: bool, n: u64) -> (Action, u32, Option<u32>, Grant, Grant) {
    let old = sps_grant(0).reanchored(n);
    let new_sps = fresh_grant(GrantKind::Sps, n);
    let one_shot = fresh_grant(GrantKind::OneShot, n);
    let cs_new = CS_RANGE.hi - 1;
    let co_new = CO_RANGE.hi - 1;
    match (cs, co) {
        (0, None) if reselect => (Action::ReselectSps, cs_new, None, new_sps, new_sps),
        (0, None) => (Action::UseCurrentSps, cs_new, None, old, old),
        (c, None) => (Action::UseCurrentSps, c - 1, None, old, old),
        (0, Some(0)) if reselect => (Action::ReselectSps, cs_new, Some(co_new), new_sps, new_sps),
        (0, Some(0)) => (Action::OneShot, cs_new, Some(co_new), one_shot, old),
        (0, Some(_)) if reselect => (Action::ReselectSps, cs_new, Some(co_new), new_sps, new_sps),
        (0, Some(o)) => (Action::UseCurrentSps, cs_new, Some(o - 1), old, old),
        (c, Some(0)) => (Action::OneShot, c - 1, Some(co_new), one_shot, old),
        (c, Some(o)) => (Action::UseCurrentSps, c - 1, Some(o - 1), old, old),
    }
}

/// Every `(cs, co, draw)` with `cs, co ≤ 3`, with and without a pending
/// one-shot, plus the follow-up opportunity after each one-shot.
pub fn check_truth_table() -> Result<(), String> {
    let n = 500;
    for one_shot in [OneShot::Off, OneShot::On(CO_RANGE)] {
        let config = SchedulerConfig {
            cs_range: CS_RANGE,
            one_shot,
            ..SchedulerConfig::default()
        };
        let cos: Vec<Option<u32>> = match one_shot {
            OneShot::Off => vec![None],
            OneShot::On(_) => (0..=3).map(Some).collect(),
        };
        for cs in 0..=3 {
            for &co in &cos {
                for pending in [false, true] {
                    for reselect in [false, true] {
                        let mut state = SchedulerState {
                            cs,
                            co,
                            current: Some(sps_grant(0)),
                            ..SchedulerState::default()
                        };
                        if pending {
                            // a one-shot grant in use; the SPS grant waits
                            state.saved_sps = state.current.take();
                            state.current = Some(fresh_grant(GrantKind::OneShot, 0));
                            state.one_shot_active = true;
                        }
                        let tag = format!("cs={cs} co={co:?} pending={pending} reselect={reselect}");
                        let d = state.on_transmission_opportunity(&config, n, &mut Scripted { reselect }, |k, _| {
                            fresh_grant(k, n)
                        });
                        let (action, cs_after, co_after, tx, sps) = expected(cs, co, reselect, n);
                        if d.action != action || d.grant != tx || state.cs != cs_after || state.co != co_after {
                            return Err(format!(
                                "{tag}: got {:?} {:?} cs={} co={:?}, want {action:?} {tx:?} cs={cs_after} co={co_after:?}",
                                d.action, d.grant, state.cs, state.co
                            ));
                        }
                        let held = if state.one_shot_active { state.saved_sps } else { state.current };
                        if held != Some(sps) {
                            return Err(format!("{tag}: SPS grant {held:?}, want {sps:?}"));
                        }
                        if d.action == Action::OneShot {
                            // the next opportunity reverts to the saved grant
                            let m = n + 300;
                            let next = state.on_transmission_opportunity(&config, m, &mut Scripted { reselect: false }, |k, _| {
                                fresh_grant(k, m)
                            });
                            let want = sps.reanchored(m);
                            if next.grant != want || next.action == Action::OneShot {
                                return Err(format!("{tag}: after one-shot got {next:?}, want {want:?}"));
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Metrics

/// A synthetic reception trace: pairs, first-copy attempts and receptions.
#[derive(Debug, Clone)]
pub struct SyntheticTrace {
    pub pairs: Vec<PairInfo>,
    /// `(pair, t_tx)`.
    pub attempts: Vec<(usize, u64)>,
    /// `(pair, record, attempt time)`, in time order per pair.
    pub receptions: Vec<(usize, ReceptionRecord, u64)>,
    pub stats_start: u64,
    pub end: u64,
}

pub fn trace_bins() -> Vec<DistanceBin> {
    [100.0, 200.0, 300.0].into_iter().map(|c| DistanceBin::new(c, 25.0)).collect()
}

pub fn random_trace(rng: &mut ChaCha8Rng) -> SyntheticTrace {
    let n_pairs = rng.random_range(1..8usize);
    let pairs: Vec<PairInfo> = (0..n_pairs)
        .map(|i| PairInfo {
            tx: i as u32,
            rx: 100 + i as u32,
            distance_m: [rng.random_range(0.0..400.0), 200.0, 124.5, 175.0][rng.random_range(0..4)],
        })
        .collect();
    let end = rng.random_range(500..5000u64);
    let stats_start = rng.random_range(0..end / 2);
    let loss = rng.random_range(0.0..0.9);
    let mut attempts = Vec::new();
    let mut receptions = Vec::new();
    for (p, info) in pairs.iter().enumerate() {
        let period = rng.random_range(20..400u64);
        let mut t_gen = rng.random_range(0..period);
        while t_gen < end {
            let eta = rng.random_range(0..100u64);
            let t_tx = t_gen + eta;
            if t_tx < end {
                attempts.push((p, t_tx));
                if !rng.random_bool(loss) {
                    let t_rx = t_tx + rng.random_range(0..2u64).min(end - 1 - t_tx);
                    let rec = ReceptionRecord {
                        tx: info.tx,
                        rx: info.rx,
                        t_gen,
                        t_rx,
                        distance_m: info.distance_m,
                        eta_ms: t_rx - t_gen,
                    };
                    receptions.push((p, rec, t_tx));
                }
            }
            t_gen += period + rng.random_range(0..3u64);
        }
    }
    // global time order, as the engine delivers
    receptions.sort_by_key(|(_, r, _)| r.t_rx);
    SyntheticTrace {
        pairs,
        attempts,
        receptions,
        stats_start,
        end,
    }
}

pub fn streaming_metrics(trace: &SyntheticTrace) -> MetricsStore {
    let mut rec = MetricsRecorder::new(trace_bins(), trace.pairs.clone(), trace.stats_start);
    for &(p, t) in &trace.attempts {
        rec.on_attempt(p, t);
    }
    for (p, r, attempt) in &trace.receptions {
        rec.on_reception(*p, r, *attempt);
    }
    rec.finish(trace.end)
}

/// Per-pair, per-millisecond recomputation.
pub fn brute_force_metrics(trace: &SyntheticTrace) -> MetricsStore {
    let bins = trace_bins();
    let mut store = MetricsStore::new(bins.clone());
    for (p, info) in trace.pairs.iter().enumerate() {
        let prr_bin = (info.distance_m + 0.5).floor() as usize;
        for &(q, t) in &trace.attempts {
            if q == p && t >= trace.stats_start {
                store.prr.add_transmitted(prr_bin);
            }
        }
        let mine: Vec<&(usize, ReceptionRecord, u64)> = trace.receptions.iter().filter(|(q, _, _)| *q == p).collect();
        for (_, _, attempt) in &mine {
            if *attempt >= trace.stats_start {
                store.prr.add_received(prr_bin);
            }
        }
        let Some(b) = bins.iter().position(|b| b.contains(info.distance_m)) else {
            continue;
        };
        if mine.is_empty() {
            store.silent_pairs[b] += 1;
        }
        let mut ipg = IntHistogram::new();
        for w in mine.windows(2) {
            if w[1].1.t_rx >= trace.stats_start {
                ipg.add(w[1].1.t_rx - w[0].1.t_rx);
            }
        }
        store.ipg[b].merge(&ipg);
        for t in trace.stats_start..trace.end {
            if let Some((_, last, _)) = mine.iter().rev().find(|(_, r, _)| r.t_rx <= t) {
                store.ia[b].add(t - last.t_rx + last.eta_ms);
            }
        }
    }
    store
}

pub fn check_metrics_traces(seed: u64, traces: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..traces {
        let trace = random_trace(&mut rng);
        let got = streaming_metrics(&trace);
        let want = brute_force_metrics(&trace);
        for b in 0..got.bins.len() {
            for (name, g, w) in [("ipg", &got.ipg[b], &want.ipg[b]), ("ia", &got.ia[b], &want.ia[b])] {
                if g.counts() != w.counts() {
                    return Err(format!("trace {k} bin {b}: {name} histograms differ"));
                }
                if !g.is_empty() {
                    let (gc, wc) = (g.ccdf().unwrap(), w.ccdf().unwrap());
                    let same = gc.values().len() == wc.values().len()
                        && gc.values().iter().zip(wc.values()).all(|(a, b)| a.to_bits() == b.to_bits());
                    if !same || g.percentile_999().ok() != w.percentile_999().ok() {
                        return Err(format!("trace {k} bin {b}: {name} CCDF or percentile differs"));
                    }
                }
            }
        }
        if got.silent_pairs != want.silent_pairs {
            return Err(format!("trace {k}: silent pairs {:?} vs {:?}", got.silent_pairs, want.silent_pairs));
        }
        if got.prr != want.prr {
            return Err(format!("trace {k}: PRR tables differ"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Output files

/// Names of files that differ between two result directories, including
/// files present in only one of them.
pub fn differing_files(a: &std::path::Path, b: &std::path::Path) -> Vec<String> {
    let list = |d: &std::path::Path| {
        let mut names: Vec<String> = std::fs::read_dir(d)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        names
    };
    let (na, nb) = (list(a), list(b));
    let mut out: Vec<String> = na.iter().filter(|n| !nb.contains(n)).cloned().collect();
    out.extend(nb.iter().filter(|n| !na.contains(n)).cloned());
    for n in na.iter().filter(|n| nb.contains(n)) {
        if std::fs::read(a.join(n)).unwrap() != std::fs::read(b.join(n)).unwrap() {
            out.push(n.clone());
        }
    }
    out
}
