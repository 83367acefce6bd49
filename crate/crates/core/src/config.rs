//! Run configuration: a TOML file plus command-line overrides.
//!
//! ```toml
//! [grammar]
//! expected_triangles = 20.0     # or: t = [0.15, 0.8, 0.05]
//! expected_junctions = 1.0
//! stiffness = [4.0, 4.0, 4.0]
//!
//! [sampler]
//! d_max = 200
//! candidate_radius_steps = 32
//! candidate_angle_steps = 48
//!
//! [likelihood]
//! lambda = 15.0
//! smooth_sigma = 1.0
//! sample_spacing = 1.0
//!
//! [posterior]
//! grid = [40, 40]
//! depth = 20
//! l_min = 1.0
//! l_max = 8.0
//!
//! [run]
//! samples = 20
//! stats_samples = 100000
//! seed = 1
//! image = "blob.pgm"
//! out = "out"
//! cache_dir = "cache"
//! ```
//!
//! Every key is optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dp::{DpConfig, PosteriorConfig};
use crate::grammar::{GrammarError, GrammarParams, DEFAULT_STIFFNESS};
use crate::grid::Grid;
use crate::image::hex;
use crate::likelihood::LikelihoodConfig;
use crate::prior::SamplerConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrammarSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_triangles: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_junctions: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stiffness: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub d_max: usize,
    pub candidate_radius_steps: usize,
    pub candidate_angle_steps: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let d = SamplerConfig::default();
        SamplerSection {
            d_max: d.d_max,
            candidate_radius_steps: d.candidate_radius_steps,
            candidate_angle_steps: d.candidate_angle_steps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PosteriorSection {
    pub grid: [usize; 2],
    pub depth: usize,
    pub l_min: f64,
    pub l_max: f64,
}

impl Default for PosteriorSection {
    fn default() -> Self {
        let d = DpConfig::default();
        PosteriorSection {
            grid: [40, 40],
            depth: d.depth,
            l_min: d.l_min,
            l_max: d.l_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub samples: usize,
    pub stats_samples: usize,
    pub seed: u64,
    pub image: Option<PathBuf>,
    pub out: PathBuf,
    pub cache_dir: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            samples: 20,
            stats_samples: 100_000,
            seed: 1,
            image: None,
            out: PathBuf::from("out"),
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub grammar: GrammarSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub likelihood: LikelihoodConfig,
    #[serde(default)]
    pub posterior: PosteriorSection,
    #[serde(default)]
    pub run: RunSection,
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub grid: Option<[usize; 2]>,
    pub depth: Option<usize>,
    pub lambda: Option<f64>,
    pub l_max: Option<f64>,
    pub out: Option<PathBuf>,
    pub image: Option<PathBuf>,
}

/// Parses `WxH`.
pub fn parse_grid(s: &str) -> Result<[usize; 2], String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{s:?}: {e}"));
    Ok([p(w)?, p(h)?])
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.run.seed = v;
        }
        if let Some(v) = o.samples {
            self.run.samples = v;
            self.run.stats_samples = v;
        }
        if let Some(v) = o.grid {
            self.posterior.grid = v;
        }
        if let Some(v) = o.depth {
            self.posterior.depth = v;
        }
        if let Some(v) = o.lambda {
            self.likelihood.lambda = v;
        }
        if let Some(v) = o.l_max {
            self.posterior.l_max = v;
        }
        if let Some(v) = &o.out {
            self.run.out = v.clone();
        }
        if let Some(v) = &o.image {
            self.run.image = Some(v.clone());
        }
    }

    pub fn grammar_params(&self) -> Result<GrammarParams, ConfigError> {
        let g = &self.grammar;
        let stiffness = g.stiffness.unwrap_or([DEFAULT_STIFFNESS; 3]);
        let t = match g.t {
            Some(t) => {
                if g.expected_triangles.is_some() || g.expected_junctions.is_some() {
                    return Err(ConfigError::Invalid(
                        "give either grammar.t or grammar.expected_triangles/expected_junctions, not both".into(),
                    ));
                }
                t
            }
            None => crate::grammar::params_from_expectations(
                g.expected_triangles.unwrap_or(20.0),
                g.expected_junctions.unwrap_or(1.0),
            )?,
        };
        Ok(GrammarParams::with_shapes(
            t,
            stiffness,
            crate::grammar::default_ideal_triangles(),
        )?)
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            d_max: self.sampler.d_max,
            candidate_radius_steps: self.sampler.candidate_radius_steps,
            candidate_angle_steps: self.sampler.candidate_angle_steps,
            rng_seed: self.run.seed,
        }
    }

    pub fn posterior_config(&self) -> PosteriorConfig {
        PosteriorConfig {
            dp: DpConfig {
                depth: self.posterior.depth,
                l_min: self.posterior.l_min,
                l_max: self.posterior.l_max,
            },
            likelihood: self.likelihood,
        }
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        let [w, h] = self.posterior.grid;
        Grid::new(w, h).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Checks everything that can be checked without touching the disk.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.grammar_params()?;
        self.sampler_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.likelihood
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.grid()?;
        let p = &self.posterior;
        if p.depth == 0 {
            return Err(ConfigError::Invalid("posterior.depth must be at least 1".into()));
        }
        if !(p.l_min > 0.0 && p.l_max >= p.l_min && p.l_max.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "invalid edge length band [{}, {}]",
                p.l_min, p.l_max
            )));
        }
        Ok(())
    }

    /// SHA-256 over everything that affects sampled shapes; output and
    /// cache locations and the image path are excluded (the image is
    /// identified by its own content hash).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.run.out = PathBuf::new();
        c.run.cache_dir = None;
        c.run.image = None;
        let json = serde_json::to_string(&c).expect("config always serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}
