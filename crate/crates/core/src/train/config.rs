use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    SeededUniform,
    IdentityPadded,
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitScheme::SeededUniform => "seeded-uniform",
            InitScheme::IdentityPadded => "identity-padded",
        })
    }
}

impl FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seeded-uniform" => Ok(InitScheme::SeededUniform),
            "identity-padded" => Ok(InitScheme::IdentityPadded),
            other => Err(Error::invalid(format!("unknown init_scheme {other:?}"))),
        }
    }
}

/// Hyperparameters for [`train`](super::train).
///
/// Stored on disk as `key = value` lines; `#` starts a comment and
/// missing keys keep their defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub tau: f64,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    pub init_scheme: InitScheme,
    /// Multiplier applied to the initial projections.
    pub init_gain: f64,
    /// `None` means `min(visual_dim, text_dim)`.
    pub shared_dim: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 50,
            tau: 1.0,
            patience: 5,
            validation_fraction: 0.1,
            seed: 0,
            init_scheme: InitScheme::SeededUniform,
            init_gain: 0.01,
            shared_dim: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be > 0"));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::invalid("tau must be > 0"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be > 0"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid("validation_fraction must lie in (0, 1)"));
        }
        if !(self.init_gain.is_finite() && self.init_gain > 0.0) {
            return Err(Error::invalid("init_gain must be > 0"));
        }
        if self.shared_dim == Some(0) {
            return Err(Error::invalid("shared_dim must be > 0"));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::invalid(format!(
                    "config line {}: expected `key = value`",
                    lineno + 1
                ))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: &dyn fmt::Display| {
                Error::invalid(format!("config line {}: {key}: {e}", lineno + 1))
            };
            match key {
                "learning_rate" => cfg.learning_rate = value.parse().map_err(|e| bad(&e))?,
                "batch_size" => cfg.batch_size = value.parse().map_err(|e| bad(&e))?,
                "max_epochs" => cfg.max_epochs = value.parse().map_err(|e| bad(&e))?,
                "tau" => cfg.tau = value.parse().map_err(|e| bad(&e))?,
                "patience" => cfg.patience = value.parse().map_err(|e| bad(&e))?,
                "validation_fraction" => {
                    cfg.validation_fraction = value.parse().map_err(|e| bad(&e))?
                }
                "seed" => cfg.seed = value.parse().map_err(|e| bad(&e))?,
                "init_scheme" => cfg.init_scheme = value.parse()?,
                "init_gain" => cfg.init_gain = value.parse().map_err(|e| bad(&e))?,
                "shared_dim" => {
                    cfg.shared_dim = match value {
                        "auto" => None,
                        n => Some(n.parse().map_err(|e| bad(&e))?),
                    }
                }
                other => {
                    return Err(Error::invalid(format!(
                        "config line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_string()).map_err(|e| Error::io(path, e))
    }
}

/// Canonical text form; also the input to the model's config hash.
impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "learning_rate = {:?}", self.learning_rate)?;
        writeln!(f, "batch_size = {}", self.batch_size)?;
        writeln!(f, "max_epochs = {}", self.max_epochs)?;
        writeln!(f, "tau = {:?}", self.tau)?;
        writeln!(f, "patience = {}", self.patience)?;
        writeln!(f, "validation_fraction = {:?}", self.validation_fraction)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "init_scheme = {}", self.init_scheme)?;
        writeln!(f, "init_gain = {:?}", self.init_gain)?;
        match self.shared_dim {
            Some(d) => writeln!(f, "shared_dim = {d}"),
            None => writeln!(f, "shared_dim = auto"),
        }
    }
}
