//! Pipeline hyperparameters with their defaults and layered overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How equal scores are ordered wherever a ranking is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TieBreakPolicy {
    #[default]
    MaskIdAscending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Minimum area ratio kept by the initial filter (inclusive).
    pub tau_area: f64,
    /// Containment ratio at or above which a smaller mask is dropped.
    pub tau_con: f64,
    pub r_min: f64,
    pub r_max: f64,
    /// Floor of the oversize penalty.
    pub sigma: f64,
    /// Slope of the oversize penalty.
    pub gamma: f64,
    /// Weight of the predicted IoU in the balanced score.
    pub alpha: f64,
    /// Weight of the area score in the balanced score.
    pub beta: f64,
    /// Proposals kept after quality ranking.
    pub t_r: usize,
    /// Masks kept after saliency ranking.
    pub t: usize,
    /// Saliency below which the attention fallback replaces all candidates.
    pub tau_fb: f64,
    /// Maximum co-salient score gap for merging an extra instance.
    pub tau_diff: f64,
    /// Percentile of intra-image similarities used as the merge threshold.
    pub sem_percentile: f64,
    #[serde(default)]
    pub tie_break_policy: TieBreakPolicy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tau_area: 0.01,
            tau_con: 0.85,
            r_min: 0.15,
            r_max: 0.7,
            sigma: 0.7,
            gamma: 1.5,
            alpha: 0.7,
            beta: 0.3,
            t_r: 10,
            t: 6,
            tau_fb: 0.05,
            tau_diff: 0.1,
            sem_percentile: 0.8,
            tie_break_policy: TieBreakPolicy::MaskIdAscending,
        }
    }
}

/// Partial configuration, as read from a file or from command-line flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub tau_area: Option<f64>,
    pub tau_con: Option<f64>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub sigma: Option<f64>,
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub t_r: Option<usize>,
    pub t: Option<usize>,
    pub tau_fb: Option<f64>,
    pub tau_diff: Option<f64>,
    pub sem_percentile: Option<f64>,
    pub tie_break_policy: Option<TieBreakPolicy>,
}

impl ConfigOverrides {
    /// Reads overrides from a `.json` or `.toml` file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_toml = path.extension().is_some_and(|e| e == "toml");
        if is_toml {
            toml::from_str(&text).map_err(|e| Error::parse(path, "config", e.to_string()))
        } else {
            serde_json::from_str(&text).map_err(|e| Error::parse(path, "config", e.to_string()))
        }
    }

    /// Fields set in `other` win.
    pub fn merged_with(&self, other: &ConfigOverrides) -> ConfigOverrides {
        macro_rules! pick {
            ($($f:ident),*) => {
                ConfigOverrides { $($f: other.$f.or(self.$f)),* }
            };
        }
        pick!(
            tau_area,
            tau_con,
            r_min,
            r_max,
            sigma,
            gamma,
            alpha,
            beta,
            t_r,
            t,
            tau_fb,
            tau_diff,
            sem_percentile,
            tie_break_policy
        )
    }

    /// Applies onto `base` and validates. A lone `alpha` or `beta` sets its
    /// partner to the complement.
    pub fn apply(&self, base: &PipelineConfig) -> Result<PipelineConfig> {
        let mut c = base.clone();
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(
            tau_area,
            tau_con,
            r_min,
            r_max,
            sigma,
            gamma,
            t_r,
            t,
            tau_fb,
            tau_diff,
            sem_percentile,
            tie_break_policy
        );
        match (self.alpha, self.beta) {
            (Some(a), Some(b)) => {
                c.alpha = a;
                c.beta = b;
            }
            (Some(a), None) => {
                c.alpha = a;
                c.beta = 1.0 - a;
                log::info!("beta not given; set to 1 - alpha = {}", c.beta);
            }
            (None, Some(b)) => {
                c.beta = b;
                c.alpha = 1.0 - b;
                log::info!("alpha not given; set to 1 - beta = {}", c.alpha);
            }
            (None, None) => {}
        }
        c.validate()?;
        Ok(c)
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("tau_area", self.tau_area),
            ("tau_con", self.tau_con),
            ("r_min", self.r_min),
            ("r_max", self.r_max),
            ("sigma", self.sigma),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("tau_fb", self.tau_fb),
            ("tau_diff", self.tau_diff),
            ("sem_percentile", self.sem_percentile),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} must lie in [0, 1]")));
            }
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::Config(format!(
                "gamma = {} must be >= 0",
                self.gamma
            )));
        }
        if (self.alpha + self.beta - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "alpha + beta must equal 1 (got {} + {})",
                self.alpha, self.beta
            )));
        }
        if !(0.0 < self.r_min && self.r_min < self.r_max && self.r_max <= 1.0) {
            return Err(Error::Config(format!(
                "need 0 < r_min < r_max <= 1 (got r_min {}, r_max {})",
                self.r_min, self.r_max
            )));
        }
        if !(0.0 < self.tau_area && self.tau_area < self.r_min) {
            return Err(Error::Config(format!(
                "need 0 < tau_area < r_min (got {} vs {})",
                self.tau_area, self.r_min
            )));
        }
        if !(1 <= self.t && self.t <= self.t_r) {
            return Err(Error::Config(format!(
                "need 1 <= t <= t_r (got t {}, t_r {})",
                self.t, self.t_r
            )));
        }
        Ok(())
    }
}

/// Resolves defaults, then the optional file, then flag overrides.
pub fn config_load(file: Option<&Path>, flags: &ConfigOverrides) -> Result<PipelineConfig> {
    let from_file = match file {
        Some(p) => ConfigOverrides::from_file(p)?,
        None => ConfigOverrides::default(),
    };
    from_file
        .merged_with(flags)
        .apply(&PipelineConfig::default())
}
