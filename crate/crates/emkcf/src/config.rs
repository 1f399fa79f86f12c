use std::path::{Path, PathBuf};

use emkcf_core::labeling::LabelMode;
use emkcf_core::solver::SolverOptions;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::FeatureFormat;

fn default_k() -> usize {
    15
}

fn default_max_iter() -> usize {
    100
}

fn default_rel_tol() -> f64 {
    1e-6
}

fn default_sample_cap() -> usize {
    1000
}

fn default_output() -> PathBuf {
    PathBuf::from("emkcf-out")
}

/// One clustering run. Relative paths in a config file are resolved against
/// the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Feature matrix; mutually exclusive with `kernels`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
    /// Inferred from the extension when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_format: Option<FeatureFormat>,
    /// Precomputed base kernels, dense (`EMKK`) or sparse (`EMKS`).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kernels: Vec<PathBuf>,
    /// Ground-truth labels, one per line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    /// `kernels.json`; the twelve-kernel default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<PathBuf>,
    pub c: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: LabelMode,
    /// Points sampled for the gaussian bandwidth anchor.
    #[serde(default = "default_sample_cap")]
    pub base_distance_sample: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

impl RunConfig {
    pub fn new(c: usize) -> Self {
        Self {
            features: None,
            feature_format: None,
            kernels: Vec::new(),
            truth: None,
            recipe: None,
            c,
            k: default_k(),
            max_iter: default_max_iter(),
            rel_tol: default_rel_tol(),
            seed: 0,
            mode: LabelMode::default(),
            base_distance_sample: default_sample_cap(),
            output: default_output(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
        if let Some(base) = path.parent() {
            cfg.resolve_relative(base);
        }
        Ok(cfg)
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.features.iter_mut().for_each(fix);
        self.kernels.iter_mut().for_each(fix);
        self.truth.iter_mut().for_each(fix);
        self.recipe.iter_mut().for_each(fix);
        fix(&mut self.output);
    }

    pub fn validate(&self) -> Result<()> {
        match (self.features.is_some(), self.kernels.is_empty()) {
            (true, false) => return Err(Error::Config("give either features or kernels, not both".into())),
            (false, true) => return Err(Error::Config("no input: give features or kernels".into())),
            _ => {}
        }
        if self.c < 2 {
            return Err(Error::Config(format!("c = {} must be at least 2", self.c)));
        }
        if self.k < 1 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.max_iter < 1 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if !(self.rel_tol.is_finite() && self.rel_tol >= 0.0) {
            return Err(Error::Config(format!("rel_tol = {} must be a nonnegative number", self.rel_tol)));
        }
        if self.base_distance_sample < 2 {
            return Err(Error::Config("base_distance_sample must be at least 2".into()));
        }
        Ok(())
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions { max_iter: self.max_iter, rel_tol: self.rel_tol, seed: self.seed }
    }
}
