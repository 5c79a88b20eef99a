//! Versioned run configuration and the built-in presets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{ArrayGeometry, GeneratorSpec, PathParams, ScenarioConfig, SPEED_OF_LIGHT};
use crate::error::{Result, WtmpError};
use crate::estimation::{OmpStop, PolarGrid};
use crate::predictor::{PencilConfig, PencilVariant, PredictorConfig};
use crate::tfproj::TfVariant;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySpec {
    pub n_h: usize,
    pub n_v: usize,
    /// Element spacing in wavelengths.
    #[serde(default = "half")]
    pub spacing: f64,
}

fn half() -> f64 {
    0.5
}

impl ArraySpec {
    pub fn geometry(&self, f_c: f64) -> Result<ArrayGeometry> {
        let lambda = SPEED_OF_LIGHT / f_c;
        ArrayGeometry::new(self.n_h, self.n_v, self.spacing * lambda, self.spacing * lambda, lambda)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub grid: PolarGrid,
    #[serde(default)]
    pub omp: OmpStop,
    pub predictor: PredictorConfig,
    #[serde(default)]
    pub tf_variant: TfVariant,
    /// Build the transform from the true path parameters instead of OMP.
    #[serde(default)]
    pub oracle_transform: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_ue: usize,
    /// Per-UE speeds (m/s); when absent every UE uses the generator speed.
    #[serde(default)]
    pub ue_speeds: Option<Vec<f64>>,
    /// Observation SNR (dB) of the uplink samples; `None` is noise free.
    #[serde(default)]
    pub srs_snr_db: Option<f64>,
    pub snr_axis: Vec<f64>,
    pub n_seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    pub n_t_axis: Vec<usize>,
    pub distance_axis: Vec<f64>,
    #[serde(default = "default_out")]
    pub output_dir: String,
}

fn default_out() -> String {
    "out".into()
}

impl ExperimentConfig {
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_seeds as u64).map(|i| self.base_seed + i).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub scenario: ScenarioConfig,
    pub array: ArraySpec,
    /// Explicit paths; used instead of the generator when present.
    #[serde(default)]
    pub paths: Option<Vec<PathParams>>,
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
    pub algorithm: AlgorithmConfig,
    pub experiment: ExperimentConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Paper,
}

impl RunConfig {
    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Desk => Self::desk(),
            Preset::Paper => Self::paper(),
        }
    }

    /// Desk scale: 1×256 ULA, 4 UEs with five near-field paths each, CSI
    /// delay of 32 slots.
    pub fn desk() -> Self {
        let scenario = ScenarioConfig::desk();
        RunConfig {
            version: CONFIG_VERSION,
            scenario,
            array: ArraySpec { n_h: 1, n_v: 256, spacing: 0.5 },
            paths: None,
            generator: Some(GeneratorSpec::default()),
            algorithm: AlgorithmConfig {
                grid: PolarGrid {
                    theta_range: (0.45, std::f64::consts::PI - 0.45),
                    phi_range: (0.0, 0.0),
                    r_range: (6.0, 40.0),
                    m_theta: 1024,
                    m_phi: 1,
                    m_r: 24,
                },
                omp: OmpStop::default(),
                predictor: PredictorConfig {
                    gamma1: 0.99,
                    pencil: PencilConfig { pencil_size: None, n_predict: 32, variant: PencilVariant::Standard },
                    model_order: None,
                },
                tf_variant: TfVariant::Dynamic,
                oracle_transform: false,
            },
            experiment: ExperimentConfig {
                n_ue: 4,
                ue_speeds: None,
                srs_snr_db: Some(20.0),
                snr_axis: vec![-10.0, 0.0, 10.0, 20.0],
                n_seeds: 20,
                base_seed: 1,
                n_t_axis: vec![32, 64, 128, 256],
                distance_axis: vec![30.0, 60.0, 120.0, 240.0],
                output_dir: default_out(),
            },
        }
    }

    /// Table-scale layout: 2×256 UPA, 16 UEs, 9 clusters of 20 rays at
    /// 30–45 m. The subcarrier count is cut to 48 to stay tractable.
    pub fn paper() -> Self {
        let mut c = Self::desk();
        c.scenario.n_f = 48;
        c.scenario.f_1 = c.scenario.f_c - 24.0 * c.scenario.delta_f;
        c.array = ArraySpec { n_h: 2, n_v: 256, spacing: 0.5 };
        c.generator = Some(GeneratorSpec {
            n_clusters: 9,
            rays_per_cluster: 20,
            distance_range: (30.0, 45.0),
            angular_spreads: [54.4f64.to_radians(), 71.9f64.to_radians(), 38.9f64.to_radians(), 120.5f64.to_radians()],
            speed: 120.0 / 3.6,
            ..GeneratorSpec::default()
        });
        c.algorithm.grid = PolarGrid {
            theta_range: (0.0, std::f64::consts::PI),
            phi_range: (-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2),
            r_range: (7.0, 252.0),
            m_theta: 30,
            m_phi: 900,
            m_r: 360,
        };
        c.experiment.n_ue = 16;
        c
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(s).map_err(|e| WtmpError::InvalidConfig(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| WtmpError::io(path, e))?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        self.array.geometry(self.scenario.f_c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(WtmpError::InvalidConfig(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.scenario.validate()?;
        self.geometry()?;
        if self.paths.is_none() && self.generator.is_none() {
            return Err(WtmpError::InvalidConfig("need either paths or a generator".into()));
        }
        if let Some(ps) = &self.paths {
            if ps.is_empty() {
                return Err(WtmpError::InvalidConfig("explicit path list is empty".into()));
            }
            for p in ps {
                p.validate()?;
            }
        }
        if let Some(g) = &self.generator {
            g.validate()?;
        }
        self.algorithm.grid.validate()?;
        self.algorithm.predictor.validate()?;
        let e = &self.experiment;
        if e.n_ue == 0 || e.n_seeds == 0 {
            return Err(WtmpError::InvalidConfig("n_ue and n_seeds must be positive".into()));
        }
        // TOML integers are signed 64-bit
        let last_seed = e.base_seed.checked_add(e.n_seeds as u64 - 1);
        if last_seed.is_none_or(|s| s > i64::MAX as u64) || self.scenario.seed > i64::MAX as u64 {
            return Err(WtmpError::InvalidConfig(format!("seeds must stay below 2^63 (base seed {})", e.base_seed)));
        }
        if let Some(s) = &e.ue_speeds {
            if s.len() != e.n_ue {
                return Err(WtmpError::InvalidConfig(format!("{} UE speeds for {} UEs", s.len(), e.n_ue)));
            }
        }
        if self.scenario.n_s < 3 {
            return Err(WtmpError::InvalidConfig("need at least 3 samples".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for p in [Preset::Desk, Preset::Paper] {
            let c = RunConfig::preset(p);
            c.validate().unwrap();
            let back = RunConfig::from_toml_str(&c.to_toml()).unwrap();
            assert_eq!(back, c);
        }
        let paper = RunConfig::paper();
        let g = paper.generator.clone().unwrap();
        assert_eq!(g.n_clusters * g.rays_per_cluster, 180);
        assert_eq!(paper.geometry().unwrap().n_t(), 512);
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        let good = RunConfig::desk().to_toml();
        let bad = good.replacen("version = 1", "version = 1\nbogus = 3", 1);
        assert!(matches!(RunConfig::from_toml_str(&bad), Err(WtmpError::InvalidConfig(_))));
        let v2 = good.replacen("version = 1", "version = 2", 1);
        assert!(RunConfig::from_toml_str(&v2).is_err());
        let g = good.replace("gamma1 = 0.99", "gamma1 = 1.5");
        assert!(RunConfig::from_toml_str(&g).is_err());
    }
}
