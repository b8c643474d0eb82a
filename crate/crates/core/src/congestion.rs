//! Application-layer BSM rate control driven by the smoothed count of nearby
//! transmitters.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generation interval with no congestion, ms.
pub const BASE_INTERVAL_MS: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CongestionConfig {
    pub enabled: bool,
    /// Neighbours farther than this are not counted.
    pub r_m: f64,
    pub lambda: f64,
    pub b_coeff: f64,
    pub i_max_ms: f64,
    /// Look-back window for the neighbour count.
    pub w_t_ms: u64,
    /// Update period of the smoothed density and the interval.
    pub w_k_ms: u64,
}

impl Default for CongestionConfig {
    fn default() -> Self {
        CongestionConfig {
            enabled: true,
            r_m: 100.0,
            lambda: 0.05,
            b_coeff: 25.0,
            i_max_ms: 600.0,
            w_t_ms: 1000,
            w_k_ms: 100,
        }
    }
}

impl CongestionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::config("congestion.lambda", format!("must be in (0, 1], got {}", self.lambda)));
        }
        if !(self.b_coeff > 0.0 && self.b_coeff.is_finite()) {
            return Err(Error::config("congestion.b_coeff", "must be positive"));
        }
        if !(self.i_max_ms >= BASE_INTERVAL_MS && self.i_max_ms.is_finite()) {
            return Err(Error::config("congestion.i_max_ms", "must be at least 100"));
        }
        if !(self.r_m > 0.0) {
            return Err(Error::config("congestion.r_m", "must be positive"));
        }
        if self.w_t_ms == 0 || self.w_k_ms == 0 {
            return Err(Error::config("congestion.w_k_ms", "windows must be positive"));
        }
        Ok(())
    }
}

/// Generation interval for a smoothed density, ms.
pub fn bsm_interval_ms(n_s: f64, config: &CongestionConfig) -> f64 {
    let b = config.b_coeff;
    if n_s < b {
        BASE_INTERVAL_MS
    } else if n_s < config.i_max_ms / BASE_INTERVAL_MS * b {
        BASE_INTERVAL_MS * n_s / b
    } else {
        config.i_max_ms
    }
}

/// Exponential smoothing step of the density estimate.
pub fn smooth(lambda: f64, n_current: f64, n_previous: f64) -> f64 {
    lambda * n_current + (1.0 - lambda) * n_previous
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    pub n_current: usize,
    pub n_smoothed: f64,
    pub interval_ms: f64,
    pub neighbor_last_seen: HashMap<u32, u64>,
    /// Real-valued time of the last BSM generation.
    pub last_generation_ms: Option<f64>,
    /// Sub-frame of the very first generation.
    pub first_generation_ms: u64,
}

impl DensityState {
    pub fn new(first_generation_ms: u64) -> Self {
        DensityState {
            n_current: 0,
            n_smoothed: 0.0,
            interval_ms: BASE_INTERVAL_MS,
            neighbor_last_seen: HashMap::new(),
            last_generation_ms: None,
            first_generation_ms,
        }
    }

    pub fn register_reception(&mut self, config: &CongestionConfig, tx: u32, distance_m: f64, time_ms: u64) {
        if distance_m <= config.r_m {
            let seen = self.neighbor_last_seen.entry(tx).or_insert(time_ms);
            *seen = (*seen).max(time_ms);
        }
    }

    /// Distinct neighbours heard in the `w_t` sub-frames ending at `time_ms`.
    /// Older sightings are dropped.
    pub fn count_neighbors(&mut self, config: &CongestionConfig, time_ms: u64) -> usize {
        self.neighbor_last_seen
            .retain(|_, &mut seen| seen <= time_ms && time_ms - seen < config.w_t_ms);
        self.neighbor_last_seen.len()
    }

    /// Runs at the last sub-frame of every `w_k` period.
    pub fn update_smoothed(&mut self, config: &CongestionConfig, time_ms: u64) -> f64 {
        self.n_current = self.count_neighbors(config, time_ms);
        self.n_smoothed = smooth(config.lambda, self.n_current as f64, self.n_smoothed);
        self.interval_ms = if config.enabled {
            bsm_interval_ms(self.n_smoothed, config)
        } else {
            BASE_INTERVAL_MS
        };
        self.n_smoothed
    }

    /// True when a BSM is due at `time_ms`; records the generation.
    ///
    /// Generation times accumulate in real milliseconds and the due time is
    /// rounded to the nearest sub-frame. A generation that is late by a full
    /// sub-frame or more (interval shrank) restarts the clock at `time_ms`.
    pub fn should_generate(&mut self, time_ms: u64) -> bool {
        let now = time_ms as f64;
        match self.last_generation_ms {
            None => {
                if time_ms >= self.first_generation_ms {
                    self.last_generation_ms = Some(self.first_generation_ms as f64);
                    true
                } else {
                    false
                }
            }
            Some(last) => {
                let due = last + self.interval_ms;
                if now < due.round() {
                    return false;
                }
                self.last_generation_ms = Some(if now - due >= 1.0 { now } else { due });
                true
            }
        }
    }
}
