//! Run configuration: a TOML file layered over built-in defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trafficast_core::error::{Error, Result};
use trafficast_core::eval::EvalConfig;
use trafficast_core::pipeline::{PreprocessConfig, SynthSpec};
use trafficast_core::predictors::{
    ArParams, GbParams, GcnnParams, LstmParams, MethodParams, MlpParams,
};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observations: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub set: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clusters: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
    /// Forecast horizon in 15-minute steps.
    pub h: usize,
    pub paths: Paths,
    pub synth: SynthSpec,
    pub preprocess: PreprocessConfig,
    pub eval: EvalConfig,
    pub ar: ArParams,
    pub gb: GbParams,
    pub mlp: MlpParams,
    pub lstm: LstmParams,
    pub bmlp: MlpParams,
    pub cmlp: MlpParams,
    pub gcnn: GcnnParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = MethodParams::default();
        Self {
            seed: 7,
            threads: 0,
            h: m.h,
            paths: Paths::default(),
            synth: SynthSpec::default(),
            preprocess: PreprocessConfig::default(),
            eval: EvalConfig::default(),
            ar: m.ar,
            gb: m.gb,
            mlp: m.mlp,
            lstm: m.lstm,
            bmlp: m.bmlp,
            cmlp: m.cmlp,
            gcnn: m.gcnn,
        }
    }
}

/// Overlays `top` onto `base`, recursing into tables.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl RunConfig {
    /// Parses configuration text; keys not given keep their defaults and unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        let mut merged = match toml::Value::try_from(Self::default()) {
            Ok(toml::Value::Table(t)) => t,
            _ => unreachable!("defaults serialise to a table"),
        };
        merge(&mut merged, file);
        let cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn methods(&self) -> MethodParams {
        MethodParams {
            h: self.h,
            ar: self.ar.clone(),
            gb: self.gb.clone(),
            mlp: self.mlp.clone(),
            lstm: self.lstm.clone(),
            bmlp: self.bmlp.clone(),
            cmlp: self.cmlp.clone(),
            gcnn: self.gcnn.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.methods().validate()?;
        self.synth.validate()?;
        if !(0.0..=1.0).contains(&self.preprocess.coverage_threshold) {
            return Err(Error::Config(
                "preprocess.coverage_threshold must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let d = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&d.to_toml()).unwrap(), d);
        assert_eq!(RunConfig::from_toml("").unwrap(), d);
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let c =
            RunConfig::from_toml("seed = 3\n[cmlp]\nepochs = 5\n[eval.split]\ntrain_weeks = 3\n")
                .unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.cmlp.epochs, 5);
        assert_eq!(c.cmlp.w_n, 16);
        assert_eq!(c.cmlp.batch_size, 100);
        assert_eq!(c.bmlp.layers, 10);
        assert_eq!(c.eval.split.train_weeks, 3);
        assert_eq!(c.eval.split.val_weeks, 1);
    }

    #[test]
    fn unknown_and_mistyped_keys_are_rejected() {
        assert!(RunConfig::from_toml("[gcnn]\nwn = 3\n").is_err());
        assert!(RunConfig::from_toml("bogus = 1\n").is_err());
        assert!(RunConfig::from_toml("[mlp]\nepochs = \"many\"\n").is_err());
        assert!(RunConfig::from_toml("[gcnn]\nschedule_w = [9, 9, 9, 9, 9]\n").is_ok());
        assert!(RunConfig::from_toml("h = 0\n").is_err());
    }

    #[test]
    fn dump_lists_graph_defaults() {
        let text = RunConfig::default().to_toml();
        let gcnn = &text[text.find("[gcnn]").unwrap()..];
        let section = &gcnn[..gcnn[1..].find("\n[").map_or(gcnn.len(), |i| i + 1)];
        assert!(section.contains("w_n = 24"));
        assert!(section.contains("epochs = 70"));
    }
}
