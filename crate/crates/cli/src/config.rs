//! Run configuration: file values, flag overrides, presets.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use geodesic_atlas::sampling::ChainConfig;
use geodesic_atlas::train::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// CPU-friendly schedule (2e4 Adam steps, batch 2^10, 200 L-BFGS).
    Desk,
    /// Full schedule (1e5 Adam steps, batch 2^13, 1000 L-BFGS, 5e4 burn-in).
    Paper,
}

/// Optional per-field overrides of [`TrainConfig`], as read from the config
/// file or flags.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub adam_steps: Option<usize>,
    pub lbfgs_steps: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr0: Option<f64>,
    pub decay_factor: Option<f64>,
    pub decay_every: Option<usize>,
    pub warmup_steps: Option<usize>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub eps: Option<f64>,
    pub lbfgs_history: Option<usize>,
    pub heldout_grid: Option<usize>,
}

impl TrainOverrides {
    pub fn apply(&self, mut cfg: TrainConfig) -> TrainConfig {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { cfg.$f = v; } )* };
        }
        set!(
            adam_steps,
            lbfgs_steps,
            batch_size,
            lr0,
            decay_factor,
            decay_every,
            warmup_steps,
            beta1,
            beta2,
            eps,
            lbfgs_history,
            heldout_grid
        );
        cfg
    }

    pub fn merged_over(&self, base: &Self) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => {
                Self { $( $f: self.$f.or(base.$f), )* }
            };
        }
        pick!(
            adam_steps,
            lbfgs_steps,
            batch_size,
            lr0,
            decay_factor,
            decay_every,
            warmup_steps,
            beta1,
            beta2,
            eps,
            lbfgs_history,
            heldout_grid
        )
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainOverrides {
    pub n_chains: Option<usize>,
    pub burn_in: Option<usize>,
    pub n_keep: Option<usize>,
    pub proposal_std: Option<f64>,
}

impl ChainOverrides {
    pub fn apply(&self, mut cfg: ChainConfig) -> ChainConfig {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { cfg.$f = v; } )* };
        }
        set!(n_chains, burn_in, n_keep, proposal_std);
        cfg
    }

    pub fn merged_over(&self, base: &Self) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => {
                Self { $( $f: self.$f.or(base.$f), )* }
            };
        }
        pick!(n_chains, burn_in, n_keep, proposal_std)
    }
}

/// Config file contents; every key optional, unknown keys rejected.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub manifold: Option<String>,
    pub scale: Option<f64>,
    pub origin: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub preset: Option<Preset>,
    pub mix_weight: Option<f64>,
    #[serde(default)]
    pub train: TrainOverrides,
    #[serde(default)]
    pub chains: ChainOverrides,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let cfg: FileConfig = toml::from_str(&text)
            .with_context(|| format!("invalid config file {}", path.display()))?;
        Ok(cfg)
    }
}

/// Fully resolved run configuration, echoed verbatim into artifact headers.
#[derive(Clone, Debug, Serialize)]
pub struct ResolvedConfig {
    pub manifold: String,
    pub scale: f64,
    pub origin: Option<Vec<f64>>,
    pub seed: u64,
    pub preset: Preset,
    pub mix_weight: f64,
    pub train: TrainConfig,
    pub chains: ChainConfig,
}

impl ResolvedConfig {
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        vec![
            ("config", serde_json::to_string(self).expect("config echo")),
            ("seed", self.seed.to_string()),
        ]
    }
}

pub fn resolve_train(preset: Preset, seed: u64, over: &TrainOverrides) -> TrainConfig {
    let base = match preset {
        Preset::Desk => TrainConfig::desk(seed),
        Preset::Paper => TrainConfig::paper(seed),
    };
    over.apply(base)
}

pub fn resolve_chains(preset: Preset, seed: u64, over: &ChainOverrides) -> ChainConfig {
    let base = match preset {
        Preset::Desk => ChainConfig::desk(seed),
        Preset::Paper => ChainConfig::paper(seed),
    };
    over.apply(base)
}

pub fn parse_point(s: &str) -> Result<Vec<f64>> {
    let coords: std::result::Result<Vec<f64>, _> =
        s.split(',').map(|p| p.trim().parse::<f64>()).collect();
    match coords {
        Ok(c) if !c.is_empty() => Ok(c),
        _ => bail!("cannot parse point '{s}' (expected comma-separated numbers)"),
    }
}
