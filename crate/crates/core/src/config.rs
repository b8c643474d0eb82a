//! Scenario configuration file (TOML).
//!
//! Every section and key is optional; missing values take the defaults of the
//! reference highway scenario. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::ChannelConfig;
use crate::congestion::CongestionConfig;
use crate::engine::Scenario;
use crate::error::{Error, Result};
use crate::metrics::MetricsConfig;
use crate::resource_grid::{Bandwidth, PoolConfig};
use crate::sps::SchedulerConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub scenario: Scenario,
    pub pool: PoolConfig,
    pub sps: SchedulerConfig,
    pub congestion: CongestionConfig,
    pub channel: ChannelConfig,
    pub metrics: MetricsConfig,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.pool.validate()?;
        self.sps.validate()?;
        self.congestion.validate()?;
        self.channel.validate()?;
        self.metrics.validate()
    }

    /// Legend label: one-shot setting and bandwidth, e.g. `26-20`.
    pub fn label(&self) -> String {
        format!("{}-{}", self.sps.one_shot.tag(), self.pool.bandwidth_mhz.mhz())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

/// Parses and validates a config document.
///
/// A `[pool]` section that sets `bandwidth_mhz` but not
/// `subchannels_per_subframe` gets the sub-channel count of that bandwidth.
pub fn parse_config_str(text: &str) -> Result<SimConfig> {
    let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::ConfigSyntax(e.to_string()))?;
    if let Some(toml::Value::Table(pool)) = doc.get_mut("pool") {
        if !pool.contains_key("subchannels_per_subframe") {
            if let Some(bw) = pool.get("bandwidth_mhz").and_then(toml::Value::as_integer) {
                if let Ok(bw) = Bandwidth::try_from(bw as u32) {
                    pool.insert(
                        "subchannels_per_subframe".into(),
                        toml::Value::Integer(i64::from(bw.default_subchannels())),
                    );
                }
            }
        }
    }
    let config: SimConfig = doc.try_into().map_err(|e: toml::de::Error| Error::ConfigSyntax(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sps::{CounterRange, OneShot};

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse_config_str("").unwrap();
        assert_eq!(c, SimConfig::default());
        assert_eq!(c.scenario.density_vue_per_km, 400.0);
        assert_eq!(c.sps.one_shot, OneShot::Off);
        assert_eq!(c.pool.subchannels_per_subframe, 10);
        assert_eq!(c.label(), "OFF-20");
    }

    #[test]
    fn subchannels_must_match_bandwidth() {
        let err = parse_config_str("[pool]\nbandwidth_mhz = 20\nsubchannels_per_subframe = 5\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "pool.subchannels_per_subframe"), "{err}");
        let c = parse_config_str("[pool]\nbandwidth_mhz = 10\n").unwrap();
        assert_eq!(c.pool.subchannels_per_subframe, 5);
    }

    #[test]
    fn one_shot_range() {
        let c = parse_config_str("[sps]\none_shot = \"2-6\"\n").unwrap();
        assert_eq!(c.sps.one_shot, OneShot::On(CounterRange::new(2, 6)));
        assert_eq!(c.label(), "26-20");
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = parse_config_str("[sps]\nbogus = 1\n").unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
        let err = parse_config_str("[nope]\n").unwrap_err().to_string();
        assert!(err.contains("nope"), "{err}");
    }

    #[test]
    fn round_trip_and_hash() {
        let c = parse_config_str("[scenario]\nhighway_length_m = 2000.0\n[sps]\none_shot = \"5-15\"\nharq = true\n").unwrap();
        let back = parse_config_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_ne!(c.hash(), SimConfig::default().hash());
        assert_eq!(c.hash().len(), 64);
    }
}
