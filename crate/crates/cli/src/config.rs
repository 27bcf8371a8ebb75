use std::fs;
use std::path::{Path, PathBuf};

use fdclass::discriminant::ComponentSelection;
use fdclass::eval::JPrior;
use fdclass::mcmc::McmcConfig;
use fdclass::pipeline::{FitOptions, ModelKind, PriorConfig};
use fdclass::simgen::GeneratorSpec;
use fdclass::{Error, Result};
use serde::{Deserialize, Serialize};

fn default_quadrature() -> usize {
    fdclass::probit_unordered::DEFAULT_QUADRATURE_ORDER
}

fn default_draws() -> usize {
    4000
}

/// Contents of a `fit` configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub seed: u64,
    /// Training data CSV; relative paths resolve against the config file.
    pub train: PathBuf,
    /// Run directory for all outputs.
    pub out: PathBuf,
    #[serde(default)]
    pub j_prior: JPrior,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default = "default_quadrature")]
    pub quadrature_order: usize,
    #[serde(default)]
    pub components: ComponentSelection,
    #[serde(default = "default_draws")]
    pub discriminant_draws: usize,
}

impl RunConfig {
    pub fn options(&self) -> FitOptions {
        FitOptions {
            mcmc: self.mcmc,
            prior: self.prior,
            quadrature_order: self.quadrature_order,
            components: self.components,
            discriminant_draws: self.discriminant_draws,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.options().validate()?;
        if self.model.uses_basis() {
            self.j_prior.validate()?;
            if self.j_prior.min < fdclass::basis::DEFAULT_ORDER {
                return Err(Error::Validation(format!(
                    "j_prior.min must be at least {} for cubic B-splines",
                    fdclass::basis::DEFAULT_ORDER
                )));
            }
        }
        Ok(())
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    toml::from_str(&text).map_err(|e| Error::Validation(format!("{}: {}", path.display(), e.message())))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let mut cfg: RunConfig = parse_toml(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    cfg.train = resolve(base, &cfg.train);
    cfg.out = resolve(base, &cfg.out);
    Ok(cfg)
}

pub fn load_generator_spec(path: &Path) -> Result<GeneratorSpec> {
    let spec: GeneratorSpec = parse_toml(path)?;
    Ok(spec)
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::Format(e.to_string()))
}
