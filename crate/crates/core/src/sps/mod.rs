//! Sensing-based semi-persistent scheduling with interleaved one-shot
//! transmissions.
//!
//! Each vehicle keeps an SPS grant for `Cs` transmissions and, when one-shot
//! is enabled, a second counter `Co`. Both are decremented on every actual
//! transmission. When `Co` expires the vehicle transmits once on freshly
//! selected resources and returns to its SPS grant on the next opportunity.

mod candidates;
mod sensing;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::resource_grid::{Grant, GrantKind};

pub use candidates::{build_candidate_list, select_grant, select_harq_slot, target_size, HARQ_MAX_GAP, RSRP_STEP_DB};
pub use sensing::{HistoryEntry, Observation, SciRecord, SensingDatabase, SENSING_PERIOD_MS};

/// Closed integer range a counter is redrawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CounterRange {
    pub lo: u32,
    pub hi: u32,
}

impl CounterRange {
    pub const fn new(lo: u32, hi: u32) -> Self {
        CounterRange { lo, hi }
    }

    fn validate(&self, key: &str) -> Result<()> {
        if self.lo == 0 || self.lo >= self.hi {
            return Err(Error::config(key, format!("need 0 < lo < hi, got [{}, {}]", self.lo, self.hi)));
        }
        Ok(())
    }
}

impl fmt::Display for CounterRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lo, self.hi)
    }
}

impl FromStr for CounterRange {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (lo, hi) = s.split_once('-').ok_or_else(|| format!("expected `lo-hi`, got `{s}`"))?;
        let parse = |x: &str| x.trim().parse::<u32>().map_err(|e| format!("`{x}`: {e}"));
        Ok(CounterRange::new(parse(lo)?, parse(hi)?))
    }
}

impl Serialize for CounterRange {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CounterRange {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One-shot counter setting: `off` or a `lo-hi` range such as `2-6`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum OneShot {
    #[default]
    Off,
    On(CounterRange),
}

impl OneShot {
    pub fn range(&self) -> Option<CounterRange> {
        match self {
            OneShot::Off => None,
            OneShot::On(r) => Some(*r),
        }
    }

    /// Short legend tag: `OFF`, or the range digits run together (`26`, `515`).
    pub fn tag(&self) -> String {
        match self {
            OneShot::Off => "OFF".to_string(),
            OneShot::On(r) => format!("{}{}", r.lo, r.hi),
        }
    }
}

impl fmt::Display for OneShot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OneShot::Off => f.write_str("off"),
            OneShot::On(r) => r.fmt(f),
        }
    }
}

impl FromStr for OneShot {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("off") {
            Ok(OneShot::Off)
        } else {
            s.parse().map(OneShot::On)
        }
    }
}

impl Serialize for OneShot {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OneShot {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerConfig {
    pub cs_range: CounterRange,
    pub one_shot: OneShot,
    /// Probability of keeping the SPS grant when `Cs` expires.
    pub p_keep: f64,
    pub rsrp_threshold_dbm: f64,
    pub harq: bool,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            cs_range: CounterRange::new(5, 15),
            one_shot: OneShot::Off,
            p_keep: 0.8,
            rsrp_threshold_dbm: -128.0,
            harq: false,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        self.cs_range.validate("sps.cs_range")?;
        if let OneShot::On(r) = self.one_shot {
            r.validate("sps.one_shot")?;
        }
        let steps = self.p_keep / 0.2;
        if !(0.0..=0.8 + 1e-9).contains(&self.p_keep) || (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::config(
                "sps.p_keep",
                format!("must be one of 0, 0.2, 0.4, 0.6, 0.8; got {}", self.p_keep),
            ));
        }
        if !self.rsrp_threshold_dbm.is_finite() {
            return Err(Error::config("sps.rsrp_threshold_dbm", "must be finite"));
        }
        Ok(())
    }

    pub fn p_reselect(&self) -> f64 {
        1.0 - self.p_keep
    }
}

/// Source of the scheduler's random decisions.
pub trait SchedulerDraws {
    /// True with probability `p`.
    fn reselect(&mut self, p: f64) -> bool;
    /// Uniform integer in the closed range.
    fn counter(&mut self, range: CounterRange) -> u32;
    /// Uniform index in `0..len`.
    fn index(&mut self, len: usize) -> usize;
}

/// [`SchedulerDraws`] backed by a random number generator.
pub struct RngDraws<'a, R: ?Sized>(pub &'a mut R);

impl<R: Rng + ?Sized> SchedulerDraws for RngDraws<'_, R> {
    fn reselect(&mut self, p: f64) -> bool {
        self.0.random::<f64>() < p
    }

    fn counter(&mut self, range: CounterRange) -> u32 {
        self.0.random_range(range.lo..=range.hi)
    }

    fn index(&mut self, len: usize) -> usize {
        self.0.random_range(0..len)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SchedulerState {
    pub cs: u32,
    /// `None` when one-shot is disabled.
    pub co: Option<u32>,
    pub current: Option<Grant>,
    /// SPS grant held while a one-shot grant is in use.
    pub saved_sps: Option<Grant>,
    pub one_shot_active: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    UseCurrentSps,
    ReselectSps,
    OneShot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub action: Action,
    /// Resources for this transmission, anchored at the generation time.
    pub grant: Grant,
}

impl SchedulerState {
    /// True if the SPS grant stays reserved for the next opportunity.
    pub fn reserves_next(&self) -> bool {
        self.cs > 0
    }

    fn redraw<D: SchedulerDraws + ?Sized>(&mut self, config: &SchedulerConfig, draws: &mut D, cs: bool, co: bool) {
        if cs {
            self.cs = draws.counter(config.cs_range);
        }
        if co {
            if let Some(r) = config.one_shot.range() {
                self.co = Some(draws.counter(r));
            }
        }
    }

    fn decrement(&mut self) {
        self.cs = self.cs.saturating_sub(1);
        if let Some(co) = self.co.as_mut() {
            *co = co.saturating_sub(1);
        }
    }

    /// Decides the resources for the BSM generated at `n`.
    ///
    /// `select(kind, draws)` performs a fresh sensing-based selection in the
    /// window of this BSM. Call once per actual transmission; opportunities
    /// without a fresh BSM must not reach the scheduler.
    pub fn on_transmission_opportunity<D, F>(
        &mut self,
        config: &SchedulerConfig,
        n: u64,
        draws: &mut D,
        mut select: F,
    ) -> Decision
    where
        D: SchedulerDraws + ?Sized,
        F: FnMut(GrantKind, &mut D) -> Grant,
    {
        if self.one_shot_active {
            self.current = self.saved_sps.take();
            self.one_shot_active = false;
        }
        let Some(current) = self.current else {
            let grant = select(GrantKind::Sps, draws);
            self.current = Some(grant);
            self.redraw(config, draws, true, true);
            self.decrement();
            return Decision {
                action: Action::ReselectSps,
                grant,
            };
        };
        let current = current.reanchored(n);
        self.current = Some(current);

        let cs_expired = self.cs == 0;
        let co_expired = self.co == Some(0);
        let decision = match (cs_expired, co_expired) {
            (false, false) => Decision {
                action: Action::UseCurrentSps,
                grant: current,
            },
            (true, false) => {
                if draws.reselect(config.p_reselect()) {
                    let grant = select(GrantKind::Sps, draws);
                    self.current = Some(grant);
                    self.redraw(config, draws, true, true);
                    Decision {
                        action: Action::ReselectSps,
                        grant,
                    }
                } else {
                    self.redraw(config, draws, true, false);
                    Decision {
                        action: Action::UseCurrentSps,
                        grant: current,
                    }
                }
            }
            (false, true) => {
                let grant = select(GrantKind::OneShot, draws);
                self.saved_sps = Some(current);
                self.one_shot_active = true;
                self.redraw(config, draws, false, true);
                Decision {
                    action: Action::OneShot,
                    grant,
                }
            }
            (true, true) => {
                let reselect = draws.reselect(config.p_reselect());
                let decision = if reselect {
                    let grant = select(GrantKind::Sps, draws);
                    self.current = Some(grant);
                    Decision {
                        action: Action::ReselectSps,
                        grant,
                    }
                } else {
                    let grant = select(GrantKind::OneShot, draws);
                    self.saved_sps = Some(current);
                    self.one_shot_active = true;
                    Decision {
                        action: Action::OneShot,
                        grant,
                    }
                };
                self.redraw(config, draws, true, true);
                decision
            }
        };
        self.decrement();
        decision
    }
}
