//! Nested TOML configuration covering every stage of the pipeline.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distort::Distortion;
use crate::error::{Error, Result};
use crate::experts::ExpertConfig;
use crate::finetune::TrainConfig;
use crate::mask::{DEFAULT_CAP, DEFAULT_FLOOR};
use crate::sbag::SbagConfig;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneConfig {
    pub tau: f64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self { tau: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskConfig {
    pub cap: [f64; 5],
    pub floor: [f64; 5],
    pub per_point: bool,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            cap: DEFAULT_CAP,
            floor: DEFAULT_FLOOR,
            per_point: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    pub seed: u64,
    pub bits: usize,
    pub resolution: usize,
    pub levels: usize,
    pub row_grid: Option<usize>,
    /// Logit scale applied after projection.
    pub gain: f64,
    /// Zero the mean logits of the pre-watermark renders before training.
    pub calibrate: bool,
    /// Also project the rows off the span of the reference renders.
    pub null_host: bool,
    /// Extra orbit-jittered host renders per training camera used for nulling.
    pub host_jitter_views: usize,
    /// Maximum yaw and pitch of those renders, in degrees.
    pub host_jitter_deg: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            seed: 0x5eed,
            bits: 32,
            resolution: 128,
            levels: 3,
            row_grid: None,
            gain: 30.0,
            calibrate: true,
            null_host: true,
            host_jitter_views: 8,
            host_jitter_deg: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub image: Vec<Distortion>,
    /// Applied in this order for the combined row.
    pub combined: Vec<Distortion>,
    pub remove: f64,
    pub clone: f64,
    pub param_noise: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            image: Distortion::standard_set(),
            combined: Distortion::combined(),
            remove: 0.2,
            clone: 0.2,
            param_noise: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Hex message; a seeded random one is drawn when unset.
    pub message: Option<String>,
    pub synth: SynthConfig,
    pub prune: PruneConfig,
    pub experts: ExpertConfig,
    pub sbag: SbagConfig,
    pub mask: MaskConfig,
    pub decoder: DecoderConfig,
    pub train: TrainConfig,
    pub attack: AttackConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prune.tau >= 0.0) {
            return Err(Error::Config("prune.tau must be >= 0".into()));
        }
        self.experts.validate()?;
        self.sbag.validate()?;
        self.train.validate()?;
        for d in self.attack.image.iter().chain(&self.attack.combined) {
            d.validate()?;
        }
        for (name, v) in [("remove", self.attack.remove), ("clone", self.attack.clone)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("attack.{name} must be in (0, 1]")));
            }
        }
        if !(self.decoder.host_jitter_deg >= 0.0 && self.decoder.host_jitter_deg < 90.0) {
            return Err(Error::Config("decoder.host_jitter_deg must be in [0, 90)".into()));
        }
        if !(self.decoder.gain > 0.0 && self.decoder.gain.is_finite()) {
            return Err(Error::Config("decoder.gain must be positive and finite".into()));
        }
        if !(self.attack.param_noise >= 0.0) {
            return Err(Error::Config("attack.param_noise must be >= 0".into()));
        }
        if let Some(m) = &self.message {
            crate::codec::Message::from_hex(m)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        let text = c.to_toml().unwrap();
        assert_eq!(Config::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c = Config::from_toml("[train]\nepochs = 3\n[decoder]\nbits = 48\n").unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.decoder.bits, 48);
        assert_eq!(c.sbag, SbagConfig::default());
    }

    #[test]
    fn bad_values_are_config_errors() {
        for text in ["[train]\nlr = [0.0, 1.0, 1.0, 1.0, 1.0]\n", "[prune]\ntau = -1.0\n", "[nonsense]\nx = 1\n", "message = \"xyz\"\n"] {
            assert!(matches!(Config::from_toml(text), Err(Error::Config(_))), "{text}");
        }
    }
}
