//! V2V link model: path loss, Nakagami-m fast fading, in-band emission,
//! MRC combining and the SINR-threshold (or BLER table) decoder.
//!
//! Powers are in dBm at the interfaces and linear milliwatts inside the SINR
//! computation. Both PSCCH and PSSCH are evaluated against the full transmit
//! power (PSCCH with its boost) and the noise of their own PRB span. Interference
//! between two BSM allocations is coupled per sub-channel: each of the
//! interferer's two sub-channels carries half its power and leaks into each of
//! the victim's sub-channels through the in-band emission mask.

use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::resource_grid::{PRB_BANDWIDTH_HZ, SUBCHANNELS_PER_BSM};

/// Log-distance path loss with a break point.
///
/// `PL(d) = pl0 + 10·γ₁·log10(d/d0)` up to `breakpoint_m`, slope `γ₂` beyond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DualSlopePathLoss {
    pub pl0_db: f64,
    pub d0_m: f64,
    pub exponent_near: f64,
    pub exponent_far: f64,
    pub breakpoint_m: f64,
}

impl Default for DualSlopePathLoss {
    fn default() -> Self {
        // Free-space loss at 1 m for 5.9 GHz, free-space slope up to the
        // two-ray break point for 1.5 m antennas, fourth-power beyond.
        DualSlopePathLoss {
            pl0_db: 47.86,
            d0_m: 1.0,
            exponent_near: 2.0,
            exponent_far: 4.0,
            breakpoint_m: 177.0,
        }
    }
}

pub trait PathLoss {
    fn path_loss_db(&self, distance_m: f64) -> f64;
}

impl PathLoss for DualSlopePathLoss {
    fn path_loss_db(&self, distance_m: f64) -> f64 {
        let d = distance_m.max(self.d0_m);
        if d <= self.breakpoint_m {
            self.pl0_db + 10.0 * self.exponent_near * (d / self.d0_m).log10()
        } else {
            self.pl0_db
                + 10.0 * self.exponent_near * (self.breakpoint_m / self.d0_m).log10()
                + 10.0 * self.exponent_far * (d / self.breakpoint_m).log10()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathLossModel {
    DualSlope(DualSlopePathLoss),
}

impl Default for PathLossModel {
    fn default() -> Self {
        PathLossModel::DualSlope(DualSlopePathLoss::default())
    }
}

impl PathLoss for PathLossModel {
    fn path_loss_db(&self, distance_m: f64) -> f64 {
        match self {
            PathLossModel::DualSlope(m) => m.path_loss_db(distance_m),
        }
    }
}

/// In-band emission attenuation by sub-channel distance.
///
/// Entry `k` is the attenuation (dB) for a sub-channel `k + 1` away. Distances
/// beyond the mask, or an empty mask, leak nothing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IbeMask(pub Vec<f64>);

impl IbeMask {
    pub fn disabled() -> Self {
        IbeMask(Vec::new())
    }

    /// Linear leakage between two sub-channels `distance` apart.
    pub fn leakage(&self, distance: u32) -> f64 {
        if distance == 0 {
            return 1.0;
        }
        match self.0.get(distance as usize - 1) {
            Some(db) if db.is_finite() => db_to_linear(-db),
            _ => 0.0,
        }
    }

    /// Fraction of an interferer's power that lands in the victim's band when
    /// the two allocations start `offset` sub-channels apart.
    pub fn coupling(&self, offset: u32) -> f64 {
        let width = SUBCHANNELS_PER_BSM;
        let mut total = 0.0;
        for v in 0..width {
            for u in offset..offset + width {
                total += self.leakage(u.abs_diff(v));
            }
        }
        total / f64::from(width)
    }
}

/// Piecewise-linear BLER curve over SINR in dB, clamped at both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlerCurve {
    pub sinr_db: Vec<f64>,
    pub bler: Vec<f64>,
}

impl BlerCurve {
    pub fn validate(&self, key: &str) -> Result<()> {
        if self.sinr_db.is_empty() || self.sinr_db.len() != self.bler.len() {
            return Err(Error::config(key, "sinr_db and bler must be non-empty and equally long"));
        }
        if !self.sinr_db.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::config(key, "sinr_db must be strictly increasing"));
        }
        if !self.bler.iter().all(|b| (0.0..=1.0).contains(b)) {
            return Err(Error::config(key, "bler values must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn bler_at(&self, sinr_db: f64) -> f64 {
        let xs = &self.sinr_db;
        let ys = &self.bler;
        if sinr_db <= xs[0] {
            return ys[0];
        }
        if sinr_db >= xs[xs.len() - 1] {
            return ys[ys.len() - 1];
        }
        let i = xs.partition_point(|&x| x <= sinr_db);
        let (x0, x1, y0, y1) = (xs[i - 1], xs[i], ys[i - 1], ys[i]);
        y0 + (y1 - y0) * (sinr_db - x0) / (x1 - x0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum BlerModel {
    /// Success iff SINR reaches the configured threshold.
    #[default]
    Step,
    Table { pssch: BlerCurve, pscch: BlerCurve },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub tx_power_dbm: f64,
    pub noise_figure_db: f64,
    pub thermal_noise_dbm_per_hz: f64,
    pub pscch_boost_db: f64,
    pub n_tx_antennas: u32,
    pub n_rx_antennas: u32,
    pub pssch_sinr_threshold_db: f64,
    pub pscch_sinr_threshold_db: f64,
    pub path_loss: PathLossModel,
    pub ibe_mask_db: IbeMask,
    pub bler: BlerModel,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            tx_power_dbm: 20.0,
            noise_figure_db: 6.0,
            thermal_noise_dbm_per_hz: -174.0,
            pscch_boost_db: 3.0,
            n_tx_antennas: 1,
            n_rx_antennas: 2,
            pssch_sinr_threshold_db: 3.7,
            pscch_sinr_threshold_db: -1.3,
            path_loss: PathLossModel::default(),
            ibe_mask_db: IbeMask::disabled(),
            bler: BlerModel::Step,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("channel.tx_power_dbm", self.tx_power_dbm),
            ("channel.noise_figure_db", self.noise_figure_db),
            ("channel.thermal_noise_dbm_per_hz", self.thermal_noise_dbm_per_hz),
            ("channel.pscch_boost_db", self.pscch_boost_db),
            ("channel.pssch_sinr_threshold_db", self.pssch_sinr_threshold_db),
            ("channel.pscch_sinr_threshold_db", self.pscch_sinr_threshold_db),
        ];
        for (key, v) in finite {
            if !v.is_finite() {
                return Err(Error::config(key, "must be finite"));
            }
        }
        if self.n_tx_antennas != 1 {
            return Err(Error::config("channel.n_tx_antennas", "only single-antenna transmitters are modelled"));
        }
        if self.n_rx_antennas == 0 {
            return Err(Error::config("channel.n_rx_antennas", "must be at least 1"));
        }
        let PathLossModel::DualSlope(pl) = &self.path_loss;
        if !(pl.d0_m > 0.0 && pl.breakpoint_m >= pl.d0_m && pl.pl0_db.is_finite()) {
            return Err(Error::config("channel.path_loss", "need d0_m > 0, breakpoint_m >= d0_m and finite pl0_db"));
        }
        if self.ibe_mask_db.0.iter().any(|a| a.is_nan() || *a < 0.0) {
            return Err(Error::config("channel.ibe_mask_db", "attenuations must be non-negative dB"));
        }
        if let BlerModel::Table { pssch, pscch } = &self.bler {
            pssch.validate("channel.bler.pssch")?;
            pscch.validate("channel.bler.pscch")?;
        }
        Ok(())
    }

    pub fn threshold_db(&self, kind: ChannelKind) -> f64 {
        match kind {
            ChannelKind::Pssch => self.pssch_sinr_threshold_db,
            ChannelKind::Pscch => self.pscch_sinr_threshold_db,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelKind {
    Pssch,
    Pscch,
}

impl FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pssch" => Ok(ChannelKind::Pssch),
            "pscch" => Ok(ChannelKind::Pscch),
            _ => Err(Error::UnknownChannel(s.to_string())),
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Nakagami shape parameter for a link of the given length.
pub fn nakagami_shape(distance_m: f64) -> f64 {
    if distance_m < 50.0 {
        3.0
    } else if distance_m < 150.0 {
        1.5
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingParams {
    pub m: f64,
    pub omega: f64,
}

impl FadingParams {
    pub fn new(m: f64, omega: f64) -> Result<Self> {
        if !(m >= 0.5 && m.is_finite()) {
            return Err(Error::config("fading.m", format!("shape must be >= 0.5, got {m}")));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::config("fading.omega", format!("must be positive, got {omega}")));
        }
        Ok(FadingParams { m, omega })
    }

    pub fn for_distance(distance_m: f64) -> Self {
        FadingParams {
            m: nakagami_shape(distance_m),
            omega: 1.0,
        }
    }
}

/// Power gain of a Nakagami-m envelope: Gamma(k = m, θ = Ω/m), mean Ω.
pub fn draw_fading_gain<R: Rng + ?Sized>(params: FadingParams, rng: &mut R) -> f64 {
    Gamma::new(params.m, params.omega / params.m)
        .expect("fading params validated")
        .sample(rng)
}

/// Unit-mean power gains for the three distance regimes, with the Gamma
/// samplers built once.
#[derive(Debug, Clone)]
pub struct FadingSampler {
    near: Gamma<f64>,
    mid: Gamma<f64>,
    far: Gamma<f64>,
}

impl Default for FadingSampler {
    fn default() -> Self {
        let g = |m: f64| Gamma::new(m, 1.0 / m).expect("valid shape");
        FadingSampler {
            near: g(3.0),
            mid: g(1.5),
            far: g(1.0),
        }
    }
}

impl FadingSampler {
    pub fn sample<R: Rng + ?Sized>(&self, distance_m: f64, rng: &mut R) -> f64 {
        let m = nakagami_shape(distance_m);
        if m == 3.0 {
            self.near.sample(rng)
        } else if m == 1.5 {
            self.mid.sample(rng)
        } else {
            self.far.sample(rng)
        }
    }
}

pub fn received_power_dbm(
    tx_power_dbm: f64,
    distance_m: f64,
    fading_gain: f64,
    boost_db: f64,
    path_loss: &impl PathLoss,
) -> Result<f64> {
    if distance_m.is_nan() || distance_m <= 0.0 {
        return Err(Error::NonPositiveDistance(distance_m));
    }
    Ok(tx_power_dbm + boost_db - path_loss.path_loss_db(distance_m) + linear_to_db(fading_gain))
}

/// Thermal noise plus noise figure over `prbs` PRBs.
pub fn noise_power_dbm(prbs: u32, config: &ChannelConfig) -> f64 {
    config.thermal_noise_dbm_per_hz + linear_to_db(f64::from(prbs) * PRB_BANDWIDTH_HZ) + config.noise_figure_db
}

#[derive(Debug, Clone, Copy)]
pub struct Interferer<'a> {
    /// Received power per receive antenna, linear.
    pub per_antenna: &'a [f64],
    /// Sub-channel distance between the interferer's and the victim's allocation.
    pub subchannel_offset: u32,
}

/// Combined SINR after maximal ratio combining over independent branches.
pub fn post_mrc_sinr_db(signal: &[f64], interferers: &[Interferer<'_>], ibe: &IbeMask, noise_linear: f64) -> f64 {
    let mut total = 0.0;
    for (a, &s) in signal.iter().enumerate() {
        let interference: f64 = interferers
            .iter()
            .map(|i| i.per_antenna[a] * ibe.coupling(i.subchannel_offset))
            .sum();
        total += s / (interference + noise_linear);
    }
    linear_to_db(total)
}

pub fn decode<R: Rng + ?Sized>(sinr_db: f64, kind: ChannelKind, config: &ChannelConfig, rng: &mut R) -> bool {
    match &config.bler {
        BlerModel::Step => sinr_db >= config.threshold_db(kind),
        BlerModel::Table { pssch, pscch } => {
            let curve = match kind {
                ChannelKind::Pssch => pssch,
                ChannelKind::Pscch => pscch,
            };
            let bler = curve.bler_at(sinr_db);
            rng.random::<f64>() >= bler
        }
    }
}
