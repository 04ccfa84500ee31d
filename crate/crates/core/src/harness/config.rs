use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distances::{Bandwidth, DistanceConfig, Measure, MixtureSpec, Ridge};
use crate::error::{Error, Result};
use crate::model::Architecture;

/// Training settings shared by single- and multi-source runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Distance term: a single measure name or `measure:coef,...`.
    pub mixture: MixtureSpec,
    pub beta: f64,
    pub distance: DistanceConfig,
    pub batch_size: usize,
    pub steps: usize,
    pub eval_interval: usize,
    /// Steps trained on the chosen source per multi-source round.
    pub round_length: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Rescale each gradient to at most this global L2 norm.
    pub max_grad_norm: Option<f64>,
    pub encoder_hidden: Vec<usize>,
    pub rep_dim: usize,
    pub head_hidden: Vec<usize>,
    /// Source domains whose distance term is zeroed.
    pub masked_domains: Vec<String>,
    /// Seeds per configuration in multi-seed summaries.
    pub seeds: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            mixture: MixtureSpec::single(Measure::Mmd),
            beta: 0.1,
            distance: DistanceConfig::default(),
            batch_size: 32,
            steps: 2000,
            eval_interval: 50,
            round_length: 50,
            learning_rate: 0.05,
            momentum: 0.9,
            max_grad_norm: None,
            encoder_hidden: vec![32],
            rep_dim: 32,
            head_hidden: vec![16],
            masked_domains: Vec::new(),
            seeds: 3,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("steps", self.steps),
            ("eval_interval", self.eval_interval),
            ("round_length", self.round_length),
            ("rep_dim", self.rep_dim),
            ("seeds", self.seeds),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.encoder_hidden.contains(&0) || self.head_hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be nonnegative, got {}", self.beta)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if let Some(c) = self.max_grad_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("max_grad_norm must be positive, got {c}")));
            }
        }
        if let Bandwidth::Fixed(s) = self.distance.kernel.bandwidth {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("kernel bandwidth must be positive, got {s}")));
            }
        }
        match self.distance.fld.ridge {
            Ridge::Fixed(v) | Ridge::TraceScaled(v) if !(v >= 0.0 && v.is_finite()) => {
                Err(Error::Config(format!("FLD ridge must be nonnegative, got {v}")))
            }
            _ => Ok(()),
        }
    }

    pub fn architecture(&self, input_dim: usize, num_classes: usize) -> Architecture {
        Architecture {
            input_dim,
            encoder_hidden: self.encoder_hidden.clone(),
            rep_dim: self.rep_dim,
            head_hidden: self.head_hidden.clone(),
            num_classes,
        }
    }

    pub fn is_masked(&self, domain_id: &str) -> bool {
        self.masked_domains.iter().any(|d| d == domain_id)
    }
}
