//! Experiment configuration files (TOML).

use std::fs;
use std::path::{Path, PathBuf};

use evacsim_core::dynamics::{FocalSide, NeighborSampling};
use evacsim_core::network::{generate_from_histogram, generate_small_world, load_edge_list, DegreeHistogram, Graph};
use evacsim_core::payoff::{PayoffMode, PayoffParams};
use evacsim_core::scenario::ScenarioVariant;
use evacsim_core::sweep::{SweepConfig, SweepGrid, DEFAULT_THETAS};
use evacsim_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    pub network: NetworkSection,
    pub payoff: PayoffSection,
    pub scenario: ScenarioSection,
    pub dynamics: DynamicsSection,
    pub sweep: SweepSection,
}

impl Default for FileConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            network: NetworkSection::default(),
            payoff: PayoffSection::default(),
            scenario: ScenarioSection::default(),
            dynamics: DynamicsSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkSource {
    /// Configuration model over `histogram` (the reference histogram if unset).
    #[default]
    Histogram,
    SmallWorld,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub source: NetworkSource,
    pub histogram: Option<DegreeHistogram>,
    pub nodes: usize,
    pub k: usize,
    pub rewire_prob: f64,
    /// Edge-list file, relative to the config file.
    pub path: Option<PathBuf>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            source: NetworkSource::Histogram,
            histogram: None,
            nodes: 5000,
            k: 4,
            rewire_prob: 0.3,
            path: None,
        }
    }
}

impl NetworkSection {
    pub fn build(&self, seed: u64) -> Result<Graph> {
        match self.source {
            NetworkSource::Histogram => {
                let hist = self.histogram.clone().unwrap_or_else(DegreeHistogram::reference);
                generate_from_histogram(&hist, seed)
            }
            NetworkSource::SmallWorld => generate_small_world(self.nodes, self.k, self.rewire_prob, seed),
            NetworkSource::File => {
                let path = self
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::Config("network.path is required when source = \"file\"".into()))?;
                load_edge_list(path)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PayoffSection {
    pub mode: PayoffMode,
    pub p: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "r_E")]
    pub r_e: f64,
    #[serde(rename = "r_S")]
    pub r_s: f64,
    #[serde(rename = "r_T")]
    pub r_t: f64,
    #[serde(rename = "r_D")]
    pub r_d: f64,
    pub theta: f64,
    pub property_value: f64,
}

impl Default for PayoffSection {
    fn default() -> Self {
        let d = PayoffParams::default();
        Self {
            mode: PayoffMode::default(),
            p: d.p,
            alpha: d.alpha,
            beta: d.beta,
            r_e: d.r_e,
            r_s: d.r_s,
            r_t: d.r_t,
            r_d: d.r_d,
            theta: d.theta,
            property_value: d.property_value,
        }
    }
}

impl PayoffSection {
    pub fn params(&self) -> PayoffParams {
        PayoffParams {
            p: self.p,
            alpha: self.alpha,
            beta: self.beta,
            r_e: self.r_e,
            r_s: self.r_s,
            r_t: self.r_t,
            r_d: self.r_d,
            theta: self.theta,
            property_value: self.property_value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub variant: ScenarioVariant,
    pub gamma: f64,
    pub random_stay_prob: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            variant: ScenarioVariant::RandomisedHighest,
            gamma: 0.0,
            random_stay_prob: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsSection {
    pub timesteps: usize,
    /// Trailing timesteps averaged into the final rate.
    pub window: usize,
    pub neighbor_sampling: NeighborSampling,
    pub pin_priority: bool,
    pub focal_side: FocalSide,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self {
            timesteps: 3000,
            window: 1000,
            neighbor_sampling: NeighborSampling::default(),
            pin_priority: false,
            focal_side: FocalSide::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub variants: Vec<ScenarioVariant>,
    pub thetas: Vec<f64>,
    /// Explicit γ values; when unset, `0..=1` every `gamma_step`.
    pub gammas: Option<Vec<f64>>,
    pub gamma_step: f64,
    /// Add every degree-class boundary to the γ axis.
    pub thresholds: bool,
    pub runs: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            variants: vec![ScenarioVariant::RandomisedHighest],
            thetas: DEFAULT_THETAS.to_vec(),
            gammas: None,
            gamma_step: 0.002,
            thresholds: true,
            runs: 5,
        }
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut config: FileConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.to_string().trim_end())))?;
        if let Some(p) = config.network.path.as_mut() {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            timesteps: self.dynamics.timesteps,
            window: self.dynamics.window,
            mode: self.payoff.mode,
            payoff: self.payoff.params(),
            neighbor_sampling: self.dynamics.neighbor_sampling,
            focal_side: self.dynamics.focal_side,
            pin_priority: self.dynamics.pin_priority,
            random_stay_prob: self.scenario.random_stay_prob,
        }
    }

    pub fn sweep_grid(&self, graph: &Graph) -> Result<SweepGrid> {
        let gammas = match &self.sweep.gammas {
            Some(g) => g.clone(),
            None => SweepGrid::gamma_range(self.sweep.gamma_step)?,
        };
        let mut grid = SweepGrid {
            variants: self.sweep.variants.clone(),
            thetas: self.sweep.thetas.clone(),
            gammas,
            runs: self.sweep.runs,
            seed: self.seed,
        };
        grid = if self.sweep.thresholds {
            grid.with_thresholds(graph)
        } else {
            grid.normalize();
            grid
        };
        grid.validate()?;
        Ok(grid)
    }
}
