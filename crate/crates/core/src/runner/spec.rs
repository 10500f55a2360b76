use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LRConfig;
use crate::synth::SynthConfig;

/// A grid axis: an explicit list or an inclusive evenly spaced range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            Grid::List(v) => Ok(v.clone()),
            Grid::Range { start, stop, step } => {
                if !(*step > 0.0) || stop < start {
                    return Err(Error::Config(format!(
                        "bad range: start {start}, stop {stop}, step {step}"
                    )));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                // snap to 12 decimals so 3 * 0.05 reads as 0.15
                Ok((0..=n)
                    .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Featurizer {
    Unigram {
        #[serde(default = "default_min_df")]
        min_df: usize,
    },
    Embedding {
        path: PathBuf,
    },
}

fn default_min_df() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CyFilter {
    pub values: Vec<f64>,
    #[serde(default = "default_cy_tolerance")]
    pub tolerance: f64,
}

fn default_cy_tolerance() -> f64 {
    1e-9
}

impl CyFilter {
    pub fn accepts(&self, cy: f64) -> bool {
        self.values.iter().any(|v| (v - cy).abs() <= self.tolerance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub adjusted: bool,
    #[serde(default = "default_c", alias = "C")]
    pub c: f64,
    #[serde(default = "default_v")]
    pub v: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Label used in reports; defaults to `adjusted` / `unadjusted`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

fn default_c() -> f64 {
    LRConfig::default().c
}
fn default_v() -> f64 {
    LRConfig::default().v
}
fn default_tol() -> f64 {
    LRConfig::default().tol
}
fn default_max_iter() -> usize {
    LRConfig::default().max_iter
}

impl ModelConfig {
    pub fn unadjusted() -> Self {
        ModelConfig {
            adjusted: false,
            c: default_c(),
            v: default_v(),
            tol: default_tol(),
            max_iter: default_max_iter(),
            tag: None,
        }
    }

    pub fn adjusted() -> Self {
        ModelConfig {
            adjusted: true,
            ..Self::unadjusted()
        }
    }

    pub fn lr_config(&self) -> LRConfig {
        LRConfig {
            c: self.c,
            v: self.v,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }

    pub fn tag(&self) -> String {
        match &self.tag {
            Some(t) => t.clone(),
            None if self.adjusted => "adjusted".into(),
            None => "unadjusted".into(),
        }
    }
}

/// A scorer evaluated in every sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Logistic(ModelConfig),
    /// Bayes posterior of the synthetic generator; only meaningful on
    /// corpora produced by that generator.
    Oracle(SynthConfig),
}

impl ModelSpec {
    pub fn tag(&self) -> String {
        match self {
            ModelSpec::Logistic(m) => m.tag(),
            ModelSpec::Oracle(_) => "oracle".into(),
        }
    }
}

/// Which points enter each slope fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlopePoints {
    /// Every `(repeat, alpha_test)` row is a point.
    #[default]
    Rows,
    /// One point per `alpha_test`: the mean over repeats.
    Means,
}

/// A full sweep description. Field names double as config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub corpus: PathBuf,
    pub source_names: [String; 2],
    pub featurizer: Featurizer,
    pub p_train_y1_z0: Grid,
    pub p_train_y1_z1: Grid,
    pub cz: Grid,
    pub alpha_test: Grid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cy_filter: Option<CyFilter>,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_models")]
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub slope_points: SlopePoints,
}

fn default_repeats() -> usize {
    5
}

fn default_models() -> Vec<ModelConfig> {
    vec![ModelConfig::unadjusted(), ModelConfig::adjusted()]
}

/// `1/8, 1/4, 1/2, 1, 2, 4, 8`
pub fn reciprocal_alpha_grid() -> Vec<f64> {
    (-3..=3).map(|k| 2f64.powi(k)).collect()
}

impl SweepSpec {
    /// Grid of training rates and source mix from 0 to 1 in steps of 0.05,
    /// the reciprocal alpha grid, five repeats and both model variants.
    pub fn template(n_train: usize, n_test: usize) -> Self {
        let unit = Grid::Range {
            start: 0.0,
            stop: 1.0,
            step: 0.05,
        };
        SweepSpec {
            corpus: PathBuf::new(),
            source_names: ["source0".into(), "source1".into()],
            featurizer: Featurizer::Unigram { min_df: 1 },
            p_train_y1_z0: unit.clone(),
            p_train_y1_z1: unit.clone(),
            cz: unit,
            alpha_test: Grid::List(reciprocal_alpha_grid()),
            cy_filter: None,
            n_train,
            n_test,
            repeats: default_repeats(),
            seed: 0,
            models: default_models(),
            slope_points: SlopePoints::Rows,
        }
    }

    /// Reads TOML, or JSON when the extension is `.json`. Relative corpus and
    /// embedding paths resolve against the config file's directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: SweepSpec = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        };
        if let Some(dir) = path.parent() {
            if !spec.corpus.as_os_str().is_empty() && spec.corpus.is_relative() {
                spec.corpus = dir.join(&spec.corpus);
            }
            if let Featurizer::Embedding { path: p } = &mut spec.featurizer {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, grid) in [
            ("p_train_y1_z0", &self.p_train_y1_z0),
            ("p_train_y1_z1", &self.p_train_y1_z1),
            ("cz", &self.cz),
            ("alpha_test", &self.alpha_test),
        ] {
            if grid.values()?.is_empty() {
                return Err(Error::Config(format!("grid {name} is empty")));
            }
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::Config("n_train and n_test must be positive".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("no models configured".into()));
        }
        for m in &self.models {
            m.lr_config().validate()?;
        }
        let mut tags: Vec<String> = self.models.iter().map(ModelConfig::tag).collect();
        tags.sort();
        if tags.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("model tags must be unique".into()));
        }
        if let Featurizer::Unigram { min_df: 0 } = self.featurizer {
            return Err(Error::Config("min_df must be positive".into()));
        }
        Ok(())
    }

    pub fn model_specs(&self) -> Vec<ModelSpec> {
        self.models
            .iter()
            .cloned()
            .map(ModelSpec::Logistic)
            .collect()
    }
}
