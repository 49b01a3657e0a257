//! TOML pipeline configuration.
//!
//! Every key except `seed` has a default. The only environment input is
//! `COURTFACTOR_OUT`, which overrides `paths.out`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::court::{CourtGrid, DEFAULT_MIN_ATTEMPTS};
use crate::efficiency::LvmPrior;
use crate::error::{Error, Result};
use crate::eval::ModelKind;
use crate::kernel::KernelHyper;
use crate::lgcp::{BiasMode, LgcpConfig};
use crate::nmf::{Loss, NmfConfig};
use crate::synth::SynthConfig;

pub const OUT_ENV: &str = "COURTFACTOR_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub lgcp: LgcpSection,
    #[serde(default)]
    pub nmf: NmfSection,
    #[serde(default)]
    pub efficiency: EfficiencySection,
    #[serde(default)]
    pub render: RenderSection,
    #[serde(default)]
    pub synth: SynthSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub shots: PathBuf,
    pub out: PathBuf,
    /// Planted bases used to score recovery, when known.
    pub truth_bases: Option<PathBuf>,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            shots: PathBuf::from("shots.csv"),
            out: PathBuf::from("out"),
            truth_bases: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub width: f64,
    pub length: f64,
    pub tile_width: f64,
    pub tile_length: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        let g = CourtGrid::coarse();
        GridSection {
            width: g.width,
            length: g.length,
            tile_width: g.tile_width,
            tile_length: g.tile_length,
        }
    }
}

impl GridSection {
    pub fn grid(&self) -> Result<CourtGrid> {
        CourtGrid::with_tiles(self.width, self.length, self.tile_width, self.tile_length)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub min_attempts: usize,
    pub holdout_fraction: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            min_attempts: DEFAULT_MIN_ATTEMPTS,
            holdout_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub variance: f64,
    pub length_scale: f64,
    /// Defaults to `1e-6 * variance`.
    pub jitter: Option<f64>,
}

impl Default for KernelSection {
    fn default() -> Self {
        let k = KernelHyper::default();
        KernelSection {
            variance: k.variance,
            length_scale: k.length_scale,
            jitter: None,
        }
    }
}

impl KernelSection {
    pub fn hyper(&self) -> Result<KernelHyper> {
        KernelHyper::new(self.variance, self.length_scale)
    }

    pub fn jitter(&self) -> f64 {
        self.jitter.unwrap_or(1e-6 * self.variance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LgcpSection {
    pub burn_in: usize,
    pub samples: usize,
    pub thin: usize,
    pub bias: BiasMode,
}

impl Default for LgcpSection {
    fn default() -> Self {
        let c = LgcpConfig::default();
        LgcpSection {
            burn_in: c.burn_in,
            samples: c.samples,
            thin: c.thin,
            bias: c.bias,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmfSection {
    pub ks: Vec<usize>,
    pub loss: Loss,
    pub restarts: usize,
    pub tolerance: f64,
    pub max_iters: usize,
    pub epsilon: f64,
    pub count_jitter: f64,
    /// Models scored by the evaluation stage.
    pub models: Vec<ModelKind>,
}

impl Default for NmfSection {
    fn default() -> Self {
        let c = NmfConfig::default();
        NmfSection {
            ks: vec![1, 2, 4, 6, 8, 12],
            loss: Loss::Kl,
            restarts: c.restarts,
            tolerance: c.tolerance,
            max_iters: c.max_iters,
            epsilon: c.epsilon,
            count_jitter: c.count_jitter,
            models: ModelKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EfficiencySection {
    /// Rank of the factorization whose loadings feed the model; must be in `nmf.ks`.
    pub k: usize,
    pub sweeps: usize,
    pub burn_in: usize,
    pub sigma0_sq: f64,
    pub a: f64,
    pub b: f64,
}

impl Default for EfficiencySection {
    fn default() -> Self {
        let p = LvmPrior::default();
        EfficiencySection {
            k: 4,
            sweeps: 2000,
            burn_in: 500,
            sigma0_sq: p.sigma0_sq,
            a: p.a,
            b: p.b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSection {
    /// Number of players (in row order) whose surfaces are rendered.
    pub players: usize,
}

impl Default for RenderSection {
    fn default() -> Self {
        RenderSection { players: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub players: usize,
    pub bases: usize,
    pub shots_min: usize,
    pub shots_max: usize,
    pub dirichlet_alpha: f64,
    pub logit_spread: f64,
    pub arc_radius: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        SynthSection {
            players: s.players,
            bases: s.bases,
            shots_min: s.shots_min,
            shots_max: s.shots_max,
            dirichlet_alpha: s.dirichlet_alpha,
            logit_spread: s.logit_spread,
            arc_radius: s.arc_radius,
        }
    }
}

impl PipelineConfig {
    /// Defaults everywhere except the seed.
    pub fn with_seed(seed: u64) -> Self {
        PipelineConfig {
            seed,
            paths: PathsSection::default(),
            grid: GridSection::default(),
            data: DataSection::default(),
            kernel: KernelSection::default(),
            lgcp: LgcpSection::default(),
            nmf: NmfSection::default(),
            efficiency: EfficiencySection::default(),
            render: RenderSection::default(),
            synth: SynthSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: PathBuf::from("<config>"),
            message: e.to_string(),
        })
    }

    /// Read a config file and apply the output-directory override.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: PipelineConfig = toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        if let Some(out) = std::env::var_os(OUT_ENV) {
            config.paths.out = PathBuf::from(out);
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.grid()?;
        self.kernel.hyper()?;
        self.lgcp_config().validate()?;
        if !(self.data.holdout_fraction > 0.0 && self.data.holdout_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "holdout fraction {} outside (0, 1)",
                self.data.holdout_fraction
            )));
        }
        if self.nmf.ks.is_empty() || self.nmf.ks.contains(&0) {
            return Err(Error::InvalidParameter("nmf.ks must list positive ranks".into()));
        }
        if !self.nmf.ks.contains(&self.efficiency.k) {
            return Err(Error::InvalidParameter(format!(
                "efficiency.k = {} is not one of nmf.ks",
                self.efficiency.k
            )));
        }
        if self.efficiency.burn_in >= self.efficiency.sweeps {
            return Err(Error::InvalidParameter("efficiency.burn_in must be below sweeps".into()));
        }
        self.synth_config()?.validate()
    }

    pub fn lgcp_config(&self) -> LgcpConfig {
        LgcpConfig {
            kernel: KernelHyper {
                variance: self.kernel.variance,
                length_scale: self.kernel.length_scale,
            },
            bias: self.lgcp.bias,
            burn_in: self.lgcp.burn_in,
            samples: self.lgcp.samples,
            thin: self.lgcp.thin,
            seed: self.seed,
        }
    }

    pub fn nmf_config(&self) -> NmfConfig {
        NmfConfig {
            max_iters: self.nmf.max_iters,
            tolerance: self.nmf.tolerance,
            restarts: self.nmf.restarts,
            seed: self.seed,
            epsilon: self.nmf.epsilon,
            count_jitter: self.nmf.count_jitter,
        }
    }

    pub fn efficiency_config(&self) -> crate::efficiency::EfficiencyConfig {
        crate::efficiency::EfficiencyConfig {
            sweeps: self.efficiency.sweeps,
            burn_in: self.efficiency.burn_in,
            seed: self.seed,
            prior: LvmPrior {
                sigma0_sq: self.efficiency.sigma0_sq,
                a: self.efficiency.a,
                b: self.efficiency.b,
            },
        }
    }

    pub fn synth_config(&self) -> Result<SynthConfig> {
        let s = &self.synth;
        Ok(SynthConfig {
            players: s.players,
            bases: s.bases,
            shots_min: s.shots_min,
            shots_max: s.shots_max,
            grid: self.grid.grid()?,
            seed: self.seed,
            dirichlet_alpha: s.dirichlet_alpha,
            logit_spread: s.logit_spread,
            arc_radius: s.arc_radius,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_required() {
        assert!(PipelineConfig::from_toml("[grid]\nwidth = 35.0\n").is_err());
        let c = PipelineConfig::from_toml("seed = 7\n").unwrap();
        assert_eq!(c, PipelineConfig::with_seed(7));
        c.validate().unwrap();
    }

    #[test]
    fn round_trip_and_overrides() {
        let text = "seed = 3\n[nmf]\nks = [2, 4]\nloss = \"frobenius\"\n[lgcp.bias]\nmode = \"fixed\"\nvalue = -1.5\n";
        let c = PipelineConfig::from_toml(text).unwrap();
        assert_eq!(c.nmf.ks, vec![2, 4]);
        assert_eq!(c.nmf.loss, Loss::Frobenius);
        assert_eq!(c.lgcp.bias, BiasMode::Fixed(-1.5));
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert!(PipelineConfig::from_toml("seed = 1\nbogus = 2\n").is_err());
    }

    #[test]
    fn validation() {
        let mut c = PipelineConfig::with_seed(1);
        c.efficiency.k = 3;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::with_seed(1);
        c.data.holdout_fraction = 1.0;
        assert!(c.validate().is_err());
    }
}
