//! Sub-frame loop: BSM generation, resource selection, transmission,
//! per-link decoding, sensing and metric recording.
//!
//! Every run draws from a single ChaCha8 stream in a fixed order (vehicles by
//! index, links by receiver then transmitter then antenna), so a seed and a
//! configuration determine the output completely.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{db_to_linear, decode, linear_to_db, noise_power_dbm, BlerModel, ChannelKind, FadingSampler, PathLoss};
use crate::config::SimConfig;
use crate::congestion::DensityState;
use crate::error::{Error, Result};
use crate::metrics::{CbrMeter, MetricsRecorder, MetricsStore, PairInfo, ReceptionRecord};
use crate::resource_grid::{Grant, SlotCoord, PSCCH_PRBS, SUBCHANNELS_PER_BSM};
use crate::sps::{
    build_candidate_list, select_grant, Action, select_harq_slot, Observation, RngDraws, SchedulerState, SciRecord,
    SensingDatabase,
};

/// Resource elements per PRB pair used to normalise RSRP.
const SUBCARRIERS_PER_PRB: f64 = 12.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub highway_length_m: f64,
    pub density_vue_per_km: f64,
    pub sim_duration_s: f64,
    pub warmup_s: f64,
    /// Links longer than this are never decoded; their power still interferes.
    pub link_cutoff_m: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            highway_length_m: 5000.0,
            density_vue_per_km: 400.0,
            sim_duration_s: 500.0,
            warmup_s: 10.0,
            link_cutoff_m: 1000.0,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.highway_length_m > 0.0 && self.highway_length_m.is_finite()) {
            return Err(Error::config("scenario.highway_length_m", "must be positive"));
        }
        if !(self.density_vue_per_km > 0.0 && self.density_vue_per_km.is_finite()) {
            return Err(Error::config("scenario.density_vue_per_km", "must be positive"));
        }
        if self.vehicle_count() < 2 {
            return Err(Error::config(
                "scenario.density_vue_per_km",
                "highway must hold at least two vehicles",
            ));
        }
        if !(self.warmup_s >= 0.0 && self.warmup_s.is_finite()) {
            return Err(Error::config("scenario.warmup_s", "must be non-negative"));
        }
        if !(self.sim_duration_s > self.warmup_s && self.sim_duration_s.is_finite()) {
            return Err(Error::config("scenario.sim_duration_s", "must exceed warmup_s"));
        }
        if !(self.link_cutoff_m > 0.0) {
            return Err(Error::config("scenario.link_cutoff_m", "must be positive"));
        }
        Ok(())
    }

    pub fn vehicle_count(&self) -> usize {
        (self.highway_length_m * self.density_vue_per_km / 1000.0).round() as usize
    }

    pub fn spacing_m(&self) -> f64 {
        1000.0 / self.density_vue_per_km
    }

    pub fn duration_ms(&self) -> u64 {
        (self.sim_duration_s * 1000.0).round() as u64
    }

    pub fn warmup_ms(&self) -> u64 {
        (self.warmup_s * 1000.0).round() as u64
    }

    /// Middle third of the highway, `[start, end)` in metres.
    pub fn stats_region_m(&self) -> (f64, f64) {
        (self.highway_length_m / 3.0, 2.0 * self.highway_length_m / 3.0)
    }
}

/// One successfully decoded BSM, as written to the trace log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub tx_id: u32,
    pub rx_id: u32,
    pub t_gen: u64,
    /// First copy of the BSM.
    pub t_tx: u64,
    /// Copy that decoded.
    pub t_rx: u64,
    pub distance_m: f64,
    pub slot: u32,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub store: MetricsStore,
    pub trace: Vec<TraceRow>,
    /// BSMs overwritten by a newer one before all their copies went out.
    pub replaced_bsms: u64,
}

#[derive(Debug, Clone, Copy)]
struct PendingBsm {
    t_gen: u64,
    copies: [Option<SlotCoord>; 2],
    first_tx: u64,
    /// Announced in every SCI of this BSM.
    reserved: [Option<SlotCoord>; 2],
}

impl PendingBsm {
    fn copy_at(&self, t: u64) -> Option<SlotCoord> {
        self.copies.iter().flatten().copied().find(|c| c.subframe == t)
    }

    fn last_tx(&self) -> u64 {
        self.copies.iter().flatten().map(|c| c.subframe).max().unwrap_or(self.first_tx)
    }
}

struct Vehicle {
    scheduler: SchedulerState,
    sensing: SensingDatabase,
    density: DensityState,
    pending: Option<PendingBsm>,
    in_stats: bool,
    cbr: Option<CbrMeter>,
}

#[derive(Debug, Clone, Copy)]
struct Transmission {
    vehicle: usize,
    slot: SlotCoord,
    bsm: PendingBsm,
    first_copy: bool,
}

/// Monitored links of one receiver: transmitters `lo..=hi` except itself.
#[derive(Debug, Clone, Copy)]
struct PairBlock {
    base: usize,
    lo: usize,
    hi: usize,
}

pub struct Simulation {
    config: SimConfig,
    rng: ChaCha8Rng,
    vehicles: Vec<Vehicle>,
    now: u64,
    duration: u64,
    warmup: u64,
    spacing: f64,
    /// Mean received power (mW) by index distance between two vehicles.
    mean_rx_mw: Vec<f64>,
    cutoff_hops: usize,
    fading: FadingSampler,
    noise_pssch_mw: f64,
    noise_pscch_mw: f64,
    noise_subchannel_mw: f64,
    pscch_boost: f64,
    /// Linear decoding thresholds (PSSCH, PSCCH) when decoding is a step.
    step_thresholds: Option<(f64, f64)>,
    /// Leakage by sub-channel distance, truncated after the last non-zero entry.
    leakage: Vec<f64>,
    coupling: Vec<f64>,
    /// Transmitting vehicles by sub-frame modulo the ring length.
    schedule: Vec<Vec<usize>>,
    pair_blocks: Vec<Option<PairBlock>>,
    /// Generation time + 1 of the last BSM each (tx, rx) decoded; only kept
    /// when a BSM can be sent twice.
    delivered: Vec<u32>,
    recorder: MetricsRecorder,
    trace: Option<Vec<TraceRow>>,
    replaced_bsms: u64,
    // scratch buffers reused across receivers
    transmitting: Vec<bool>,
    rx_power: Vec<f64>,
    rssi: Vec<f32>,
    scis: Vec<SciRecord>,
}

impl Simulation {
    pub fn new(config: SimConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self::new_unchecked(config, seed))
    }

    /// Skips validation, so test harnesses can use settings outside the
    /// supported range (for example `p_keep = 1`).
    pub fn new_unchecked(config: SimConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc = &config.scenario;
        let n = sc.vehicle_count();
        let spacing = sc.spacing_m();
        let (stats_lo, stats_hi) = sc.stats_region_m();
        let center = sc.highway_length_m / 2.0;
        let subchannels = config.pool.subchannels_per_subframe;
        let ch = &config.channel;

        let mut vehicles = Vec::with_capacity(n);
        for i in 0..n {
            let pos = i as f64 * spacing;
            let first_gen = rng.random_range(0..100u64);
            vehicles.push(Vehicle {
                scheduler: SchedulerState::default(),
                sensing: SensingDatabase::new(config.pool.sensing_history_len, subchannels),
                density: DensityState::new(first_gen),
                pending: None,
                in_stats: pos >= stats_lo && pos < stats_hi,
                cbr: ((pos - center).abs() <= config.metrics.cbr_center_radius_m).then(|| {
                    CbrMeter::new(i as u32, subchannels as usize, config.metrics.cbr_threshold_dbm)
                }),
            });
        }

        let mean_rx_mw: Vec<f64> = (0..n)
            .map(|k| {
                if k == 0 {
                    0.0
                } else {
                    db_to_linear(ch.tx_power_dbm - ch.path_loss.path_loss_db(k as f64 * spacing))
                }
            })
            .collect();
        let cutoff_hops = ((sc.link_cutoff_m / spacing) + 1e-9).floor() as usize;

        let mut pairs = Vec::new();
        let mut pair_blocks = vec![None; n];
        for (rx, v) in vehicles.iter().enumerate() {
            if !v.in_stats {
                continue;
            }
            let lo = rx.saturating_sub(cutoff_hops);
            let hi = (rx + cutoff_hops).min(n - 1);
            pair_blocks[rx] = Some(PairBlock { base: pairs.len(), lo, hi });
            for tx in (lo..=hi).filter(|&tx| tx != rx) {
                pairs.push(PairInfo {
                    tx: tx as u32,
                    rx: rx as u32,
                    distance_m: tx.abs_diff(rx) as f64 * spacing,
                });
            }
        }
        let warmup = sc.warmup_ms();
        let recorder = MetricsRecorder::new(config.metrics.bins(), pairs, warmup);

        let ibe = &ch.ibe_mask_db;
        let mut leakage: Vec<f64> = (0..subchannels).map(|d| ibe.leakage(d)).collect();
        while leakage.len() > 1 && leakage.last() == Some(&0.0) {
            leakage.pop();
        }
        let step_thresholds = matches!(ch.bler, BlerModel::Step)
            .then(|| (db_to_linear(ch.pssch_sinr_threshold_db), db_to_linear(ch.pscch_sinr_threshold_db)));
        let coupling = (0..subchannels).map(|d| ibe.coupling(d)).collect();
        let ring = (config.pool.pdb_ms as usize + 1).next_power_of_two().max(128);

        Simulation {
            rng,
            vehicles,
            now: 0,
            duration: sc.duration_ms(),
            warmup,
            spacing,
            mean_rx_mw,
            cutoff_hops,
            fading: FadingSampler::default(),
            noise_pssch_mw: db_to_linear(noise_power_dbm(config.pool.pssch_prbs(), ch)),
            noise_pscch_mw: db_to_linear(noise_power_dbm(PSCCH_PRBS, ch)),
            noise_subchannel_mw: db_to_linear(noise_power_dbm(config.pool.prbs_per_subchannel, ch)),
            pscch_boost: db_to_linear(ch.pscch_boost_db),
            step_thresholds,
            leakage,
            coupling,
            schedule: vec![Vec::new(); ring],
            pair_blocks,
            delivered: if config.sps.harq { vec![0; n * n] } else { Vec::new() },
            recorder,
            trace: config.metrics.trace.then(Vec::new),
            replaced_bsms: 0,
            transmitting: vec![false; n],
            rx_power: Vec::new(),
            rssi: vec![0.0; subchannels as usize],
            scis: Vec::new(),
            config,
        }
    }

    /// Fixes a vehicle's first generation time and SPS state, for scripted
    /// scenarios. Must be called before the first step.
    pub fn pin_vehicle(&mut self, vehicle: usize, first_generation_ms: u64, grant: Grant, cs: u32, co: Option<u32>) {
        let v = &mut self.vehicles[vehicle];
        v.density = DensityState::new(first_generation_ms);
        v.scheduler = SchedulerState {
            cs,
            co,
            current: Some(grant),
            saved_sps: None,
            one_shot_active: false,
        };
    }

    pub fn vehicle_count(&self) -> usize {
        self.vehicles.len()
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn is_finished(&self) -> bool {
        self.now >= self.duration
    }

    pub fn scheduler(&self, vehicle: usize) -> &SchedulerState {
        &self.vehicles[vehicle].scheduler
    }

    pub fn density(&self, vehicle: usize) -> &DensityState {
        &self.vehicles[vehicle].density
    }

    pub fn run(mut self) -> Result<SimOutput> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(self.finish())
    }

    pub fn finish(self) -> SimOutput {
        let mut store = self.recorder.finish(self.duration.max(self.now));
        store.cbr = self
            .vehicles
            .iter()
            .filter_map(|v| v.cbr.as_ref().map(CbrMeter::summary))
            .collect();
        SimOutput {
            store,
            trace: self.trace.unwrap_or_default(),
            replaced_bsms: self.replaced_bsms,
        }
    }

    /// Advances one sub-frame.
    pub fn step(&mut self) -> Result<()> {
        let t = self.now;
        for v in 0..self.vehicles.len() {
            if self.vehicles[v].density.should_generate(t) {
                self.generate(v, t);
            }
        }
        let txs = self.collect_transmissions(t);
        self.propagate(t, &txs)?;
        let record = t >= self.warmup;
        for v in &mut self.vehicles {
            if let Some(meter) = v.cbr.as_mut() {
                meter.update(&v.sensing, t, record);
            }
        }
        let w_k = self.config.congestion.w_k_ms;
        if t % w_k == w_k - 1 {
            for v in &mut self.vehicles {
                v.density.update_smoothed(&self.config.congestion, t);
            }
        }
        self.now += 1;
        Ok(())
    }

    fn generate(&mut self, v: usize, t: u64) {
        let pool = &self.config.pool;
        let sps = &self.config.sps;
        let vehicle = &mut self.vehicles[v];
        if vehicle.in_stats && t >= self.warmup {
            self.recorder.store_mut().interval.record(vehicle.density.interval_ms);
        }
        // The interval may have moved since the last SCI predicted this
        // generation; the SPS grant stays on the announced resources whenever
        // they still fit the new window.
        if let Some([Some(slot), harq]) = vehicle.pending.map(|p| p.reserved) {
            if pool.window_for_generation(t).contains(slot.subframe) && !vehicle.scheduler.one_shot_active {
                if let Some(g) = vehicle.scheduler.current.as_mut() {
                    *g = Grant::new(t, slot, harq, g.kind);
                }
            }
        }
        let sensing = &vehicle.sensing;
        let mut draws = RngDraws(&mut self.rng);
        let decision = vehicle
            .scheduler
            .on_transmission_opportunity(sps, t, &mut draws, |kind, draws| {
                let window = pool.window_for_generation(t);
                let candidates = build_candidate_list(sensing, &window, pool, sps.rsrp_threshold_dbm);
                let slot = select_grant(&candidates, draws).expect("candidate list is never empty");
                let harq = if sps.harq {
                    select_harq_slot(&candidates, slot, draws)
                } else {
                    None
                };
                Grant::new(t, slot, harq, kind)
            });

        // One-shot SCIs reserve nothing; SPS SCIs announce the resources of
        // the next BSM while the reselection counter has not run out.
        let sched = &vehicle.scheduler;
        let mut reserved = [None, None];
        if decision.action != Action::OneShot && sched.reserves_next() {
            if let Some(g) = sched.current {
                let last = vehicle.density.last_generation_ms.unwrap_or(t as f64);
                let next = (last + vehicle.density.interval_ms).round() as u64;
                let g = g.reanchored(next);
                reserved = [Some(g.slot), g.harq_slot];
            }
        }

        if let Some(old) = vehicle.pending {
            if old.last_tx() >= t {
                self.replaced_bsms += 1;
            }
        }
        let grant = decision.grant;
        let copies = [Some(grant.slot), grant.harq_slot];
        let bsm = PendingBsm {
            t_gen: t,
            copies,
            first_tx: grant.transmissions().next().map(|s| s.subframe).unwrap_or(grant.slot.subframe),
            reserved,
        };
        vehicle.pending = Some(bsm);
        let ring = self.schedule.len() as u64;
        for c in copies.into_iter().flatten() {
            self.schedule[(c.subframe % ring) as usize].push(v);
        }
    }

    fn collect_transmissions(&mut self, t: u64) -> Vec<Transmission> {
        let ring = self.schedule.len() as u64;
        let bucket = std::mem::take(&mut self.schedule[(t % ring) as usize]);
        let mut txs = Vec::with_capacity(bucket.len());
        for v in bucket {
            let Some(bsm) = self.vehicles[v].pending else { continue };
            let Some(slot) = bsm.copy_at(t) else { continue };
            if txs.iter().any(|x: &Transmission| x.vehicle == v) {
                continue;
            }
            txs.push(Transmission {
                vehicle: v,
                slot,
                bsm,
                first_copy: bsm.first_tx == t,
            });
        }
        txs.sort_by_key(|x| x.vehicle);
        txs
    }

    fn record_attempts(&mut self, t: u64, txs: &[Transmission]) {
        let n = self.vehicles.len();
        for x in txs.iter().filter(|x| x.first_copy) {
            let tx = x.vehicle;
            let lo = tx.saturating_sub(self.cutoff_hops);
            let hi = (tx + self.cutoff_hops).min(n - 1);
            for rx in (lo..=hi).filter(|&rx| rx != tx) {
                if let Some(pair) = self.pair_index(tx, rx) {
                    self.recorder.on_attempt(pair, t);
                }
            }
        }
    }

    fn pair_index(&self, tx: usize, rx: usize) -> Option<usize> {
        let b = self.pair_blocks[rx]?;
        if tx < b.lo || tx > b.hi || tx == rx {
            return None;
        }
        Some(b.base + (tx - b.lo) - usize::from(tx > rx))
    }

    fn propagate(&mut self, t: u64, txs: &[Transmission]) -> Result<()> {
        self.record_attempts(t, txs);
        for x in txs {
            self.transmitting[x.vehicle] = true;
        }
        let n = self.vehicles.len();
        let antennas = self.config.channel.n_rx_antennas as usize;
        let rsrp_norm = SUBCARRIERS_PER_PRB * f64::from(SUBCHANNELS_PER_BSM * self.config.pool.prbs_per_subchannel);

        // transmitters whose power reaches each other's band
        let coupled: Vec<Vec<(usize, f64)>> = txs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                txs.iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(j, y)| (j, self.coupling[y.slot.start_subchannel.abs_diff(x.slot.start_subchannel) as usize]))
                    .filter(|&(_, c)| c > 0.0)
                    .collect()
            })
            .collect();

        for rx in 0..n {
            if self.transmitting[rx] {
                let obs = Observation { rssi_mw: &[], scis: &[] };
                self.vehicles[rx].sensing.record_subframe(t, obs, true)?;
                continue;
            }
            self.rssi.fill(self.noise_subchannel_mw as f32);
            self.scis.clear();
            self.rx_power.clear();
            for x in txs {
                let hops = x.vehicle.abs_diff(rx);
                let mean = self.mean_rx_mw[hops];
                if hops > self.cutoff_hops {
                    // never decoded: only its average power matters
                    self.rx_power.extend(std::iter::repeat_n(mean, antennas));
                } else {
                    let d = hops as f64 * self.spacing;
                    for _ in 0..antennas {
                        let g = self.fading.sample(d, &mut self.rng);
                        self.rx_power.push(mean * g);
                    }
                }
            }
            let reach = self.leakage.len() - 1;
            for (i, x) in txs.iter().enumerate() {
                let p = &self.rx_power[i * antennas..(i + 1) * antennas];
                let per_subchannel = p.iter().sum::<f64>() / antennas as f64 / f64::from(SUBCHANNELS_PER_BSM);
                for u in x.slot.subchannels() {
                    let u = u as usize;
                    let hi = (u + reach).min(self.rssi.len() - 1);
                    for s in u.saturating_sub(reach)..=hi {
                        self.rssi[s] += (per_subchannel * self.leakage[u.abs_diff(s)]) as f32;
                    }
                }
            }
            for (i, x) in txs.iter().enumerate() {
                let hops = x.vehicle.abs_diff(rx);
                if hops > self.cutoff_hops {
                    continue;
                }
                let (sci_ok, bsm_ok) = self.link_decodes(i, &coupled[i], antennas);
                if !sci_ok {
                    continue;
                }
                let p = &self.rx_power[i * antennas..(i + 1) * antennas];
                self.scis.push(SciRecord {
                    tx: x.vehicle as u32,
                    heard_at: t,
                    rsrp_mw: p.iter().sum::<f64>() / antennas as f64 / rsrp_norm,
                    reserved: x.bsm.reserved,
                });
                if bsm_ok {
                    self.deliver(t, x, rx, hops);
                }
            }
            let obs = Observation { rssi_mw: &self.rssi, scis: &self.scis };
            self.vehicles[rx].sensing.record_subframe(t, obs, false)?;
        }
        for x in txs {
            self.transmitting[x.vehicle] = false;
        }
        Ok(())
    }

    /// Post-MRC SINR of transmitter `i` against its coupled interferers on
    /// PSCCH and PSSCH, then the decoders. The PSSCH result is only meaningful
    /// when the SCI decodes.
    fn link_decodes(&mut self, i: usize, coupled: &[(usize, f64)], antennas: usize) -> (bool, bool) {
        let boost = self.pscch_boost;
        let (mut sinr_c, mut sinr_s) = (0.0, 0.0);
        for a in 0..antennas {
            let interference: f64 = coupled.iter().map(|&(j, c)| self.rx_power[j * antennas + a] * c).sum();
            let signal = self.rx_power[i * antennas + a];
            sinr_c += signal * boost / (interference * boost + self.noise_pscch_mw);
            sinr_s += signal / (interference + self.noise_pssch_mw);
        }
        match self.step_thresholds {
            Some((pssch, pscch)) => (sinr_c >= pscch, sinr_s >= pssch),
            None => {
                let ch = &self.config.channel;
                let sci = decode(linear_to_db(sinr_c), ChannelKind::Pscch, ch, &mut self.rng);
                let bsm = sci && decode(linear_to_db(sinr_s), ChannelKind::Pssch, ch, &mut self.rng);
                (sci, bsm)
            }
        }
    }

    fn deliver(&mut self, t: u64, x: &Transmission, rx: usize, hops: usize) {
        let n = self.vehicles.len();
        let tx = x.vehicle;
        if !self.delivered.is_empty() {
            let tag = (x.bsm.t_gen + 1) as u32;
            let seen = &mut self.delivered[tx * n + rx];
            if *seen == tag {
                return;
            }
            *seen = tag;
        }
        let distance_m = hops as f64 * self.spacing;
        self.vehicles[rx]
            .density
            .register_reception(&self.config.congestion, tx as u32, distance_m, t);
        let Some(pair) = self.pair_index(tx, rx) else { return };
        let rec = ReceptionRecord {
            tx: tx as u32,
            rx: rx as u32,
            t_gen: x.bsm.t_gen,
            t_rx: t,
            distance_m,
            eta_ms: t - x.bsm.t_gen,
        };
        self.recorder.on_reception(pair, &rec, x.bsm.first_tx);
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceRow {
                tx_id: rec.tx,
                rx_id: rec.rx,
                t_gen: rec.t_gen,
                t_tx: x.bsm.first_tx,
                t_rx: t,
                distance_m,
                slot: x.slot.start_subchannel,
            });
        }
    }
}

/// Runs one seed to completion.
pub fn run(config: &SimConfig, seed: u64) -> Result<SimOutput> {
    Simulation::new(config.clone(), seed)?.run()
}
