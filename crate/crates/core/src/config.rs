//! Run configuration: defaults, flat TOML files and explicit overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{AcdcError, Result};
use crate::evolving::ThresholdRule;
use crate::net::{AblationFlags, Hyper};
use crate::stream::EngineConfig;

/// Everything needed to replay a run. Missing keys take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub window_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub noise_fraction: f64,
    pub threshold_rule: ThresholdRule,
    pub model_seed: u64,
    pub stream_seed: u64,
    pub drift_seed: u64,
    /// Concepts injected on the fly into each stream; 1 leaves it untouched.
    pub source_concepts: usize,
    pub target_concepts: usize,
    /// Ablation A.
    pub no_daa: bool,
    /// Ablation B.
    pub no_evolution: bool,
    /// Ablation C.
    pub single_node_dae: bool,
    /// Ablation D.
    pub no_daa_signal: bool,
    pub source_manifest: Option<PathBuf>,
    pub target_manifest: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    /// Write an engine checkpoint every this many windows; 0 disables.
    pub checkpoint_every: usize,
    pub record_predictions: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let h = Hyper::default();
        let e = EngineConfig::default();
        RunConfig {
            name: "run".into(),
            window_size: e.window_size,
            epochs: e.epochs,
            learning_rate: h.learning_rate,
            momentum: h.momentum,
            alpha1: h.alpha1,
            alpha2: h.alpha2,
            noise_fraction: h.noise_fraction,
            threshold_rule: h.threshold_rule,
            model_seed: 0,
            stream_seed: 0,
            drift_seed: 0,
            source_concepts: 1,
            target_concepts: 1,
            no_daa: false,
            no_evolution: false,
            single_node_dae: false,
            no_daa_signal: false,
            source_manifest: None,
            target_manifest: None,
            output_dir: None,
            checkpoint_every: 0,
            record_predictions: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| AcdcError::Config(e.to_string()))?;
        Ok(c)
    }

    /// Reads a config file. Relative manifest and output paths resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| AcdcError::io(path, e))?;
        let mut c = Self::from_toml_str(&text).map_err(|e| AcdcError::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        for p in [&mut c.source_manifest, &mut c.target_manifest, &mut c.output_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| AcdcError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.engine().validate()?;
        let bad = |m: String| Err(AcdcError::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(0.0..1.0).contains(&self.noise_fraction) {
            return bad(format!("noise_fraction must be in [0, 1), got {}", self.noise_fraction));
        }
        if !(self.alpha1 > 0.0 && self.alpha2 > 0.0 && self.alpha1.is_finite() && self.alpha2.is_finite()) {
            return bad(format!("alpha1/alpha2 must be positive, got {}/{}", self.alpha1, self.alpha2));
        }
        if self.source_concepts == 0 || self.target_concepts == 0 {
            return bad("concept counts must be at least 1".into());
        }
        Ok(())
    }

    pub fn hyper(&self) -> Hyper {
        Hyper {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            noise_fraction: self.noise_fraction,
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            threshold_rule: self.threshold_rule,
        }
    }

    pub fn flags(&self) -> AblationFlags {
        AblationFlags {
            daa_enabled: !self.no_daa,
            evolution_enabled: !self.no_evolution,
            dae_starts_single_node: self.single_node_dae,
            daa_signals_disc: !self.no_daa_signal,
        }
    }

    pub fn engine(&self) -> EngineConfig {
        EngineConfig {
            window_size: self.window_size,
            epochs: self.epochs,
            record_predictions: self.record_predictions,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_settings() {
        let c = RunConfig::default();
        assert_eq!((c.window_size, c.epochs), (1000, 1));
        assert_eq!((c.learning_rate, c.momentum), (0.01, 0.95));
        assert_eq!((c.alpha1, c.alpha2, c.noise_fraction), (1.25, 0.75, 0.10));
        assert_eq!(c.flags(), AblationFlags::default());
        c.validate().unwrap();
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c = RunConfig::from_toml_str("epochs = 3\nalpha1 = 1.45\nalpha2 = 0.95\nno_daa = true\n").unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!((c.alpha1, c.alpha2), (1.45, 0.95));
        assert_eq!(c.window_size, 1000);
        assert_eq!(c.flags().label(), "A");
        assert!(RunConfig::from_toml_str("epoch = 3").is_err());
    }

    #[test]
    fn round_trip_and_validation() {
        let c = RunConfig {
            source_manifest: Some("s.toml".into()),
            threshold_rule: ThresholdRule::Linear,
            ..Default::default()
        };
        assert_eq!(RunConfig::from_toml_str(&c.to_toml().unwrap()).unwrap(), c);
        for bad in ["epochs = 0", "window_size = 1", "learning_rate = -1.0", "momentum = 1.0"] {
            assert!(RunConfig::from_toml_str(bad).unwrap().validate().is_err(), "{bad}");
        }
    }
}
