//! Pipeline configuration read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sqcsef::cvcl::{CvclConfig, Preset};
use sqcsef::kmeans::KMeansConfig;
use sqcsef::{Error, Method, Result};

/// Number of factors retained when the config does not say.
pub const DEFAULT_FACTORS: usize = 3;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSection {
    pub n_factors: Option<usize>,
    /// Explicit views as lists of indicator names; replaces the
    /// loading-based partition.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub manual_views: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub view_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: PathBuf,
    pub indicators: PathBuf,
    pub method: Method,
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Run CVCL even when the KMO adequacy gate fails.
    #[serde(default)]
    pub allow_inadequate: bool,
    #[serde(default)]
    pub preset: Option<Preset>,
    #[serde(default)]
    pub factors: FactorSection,
    #[serde(default)]
    pub kmeans: Option<KMeansConfig>,
    #[serde(default)]
    pub cvcl: Option<CvclConfig>,
}

fn default_out() -> PathBuf {
    PathBuf::from("sqcsef-run")
}

impl PipelineConfig {
    pub fn new(
        dataset: impl Into<PathBuf>,
        indicators: impl Into<PathBuf>,
        method: Method,
        k: usize,
    ) -> Self {
        PipelineConfig {
            dataset: dataset.into(),
            indicators: indicators.into(),
            method,
            k,
            seed: 0,
            out: default_out(),
            allow_inadequate: false,
            preset: None,
            factors: FactorSection::default(),
            kmeans: None,
            cvcl: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("pipeline config: {e}")))
    }

    /// Reads a config; relative paths inside it are taken relative to the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_owned(),
            source: e,
        })?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.dataset, &mut cfg.indicators, &mut cfg.out] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("pipeline config is representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!(
                "k must be at least 2 to build a standard, got {}",
                self.k
            )));
        }
        if self.factors.n_factors == Some(0) {
            return Err(Error::Config("n_factors must be positive".into()));
        }
        if !self.factors.view_names.is_empty()
            && self.factors.view_names.len() != self.factors.manual_views.len()
        {
            return Err(Error::Config("view_names must match manual_views".into()));
        }
        Ok(())
    }

    /// K-Means settings with the run-level `k` and `seed` applied.
    pub fn kmeans_config(&self) -> KMeansConfig {
        KMeansConfig {
            k: self.k,
            seed: self.seed,
            ..self.kmeans.clone().unwrap_or_default()
        }
    }

    /// CVCL settings: the explicit block, else the preset, with the
    /// run-level `k` and `seed` applied.
    pub fn cvcl_config(&self) -> CvclConfig {
        let base = match (&self.cvcl, self.preset) {
            (Some(c), _) => c.clone(),
            (None, p) => CvclConfig::preset(p.unwrap_or(Preset::DeskScale), self.k),
        };
        CvclConfig {
            k: self.k,
            seed: self.seed,
            ..base
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_minimal_and_full() {
        let cfg = PipelineConfig::parse(
            r#"
dataset = "d.csv"
indicators = "i.toml"
method = "kmeans"
k = 3
"#,
        )
        .unwrap();
        assert_eq!(cfg.kmeans_config().k, 3);
        assert_eq!(cfg.out, PathBuf::from("sqcsef-run"));

        let cfg = PipelineConfig::parse(
            r#"
dataset = "d.csv"
indicators = "i.toml"
method = "cvcl"
k = 4
seed = 9
preset = "desk-scale"

[factors]
n_factors = 2
manual_views = [["a", "b"], ["c"]]

[cvcl]
pre_epochs = 5
train_epochs = 7
"#,
        )
        .unwrap();
        let c = cfg.cvcl_config();
        assert_eq!((c.k, c.seed, c.pre_epochs, c.train_epochs), (4, 9, 5, 7));
        assert_eq!(c.latent_dim, 128);
        assert_eq!(PipelineConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        let base = "dataset = \"d\"\nindicators = \"i\"\nmethod = \"kmeans\"\n";
        assert!(PipelineConfig::parse(&format!("{base}k = 3\nbogus = 1\n")).is_err());
        assert!(PipelineConfig::parse(&format!("{base}k = 1\n"))
            .unwrap()
            .validate()
            .is_err());
        assert!(PipelineConfig::parse("method = \"spectral\"").is_err());
    }
}
