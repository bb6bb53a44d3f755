use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretization::SpatialGrid;
use crate::error::{Error, Result};
use crate::highfidelity::TimeGrid;
use crate::models::{ModelKind, ModelSpec, ParameterGrid, Theta};
use crate::observation::SensorArray;
use crate::pbdw::DEFAULT_BETA_FLOOR;
use crate::placement::PlacementConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Static,
    Dynamic,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Mode::Static),
            "dynamic" => Ok(Mode::Dynamic),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    /// `L_x` (and `L_y`); the domain is `[-L_x, L_x] x [-L_y, L_y]`.
    pub half_extent: [f64; 2],
    pub points: [usize; 2],
    #[serde(default)]
    pub parameter_box: Option<[[f64; 2]; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub t_final: f64,
    /// Steps of the reduced integrator.
    pub n_steps: usize,
    /// Reduced steps between assimilation times.
    pub stride: usize,
    /// Implicit-midpoint steps per reduced step for the ground truth.
    #[serde(default = "one")]
    pub hf_substeps: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedSection {
    /// Half of the reduced dimension `2n`.
    pub n: usize,
    /// Training points per parameter axis.
    pub training_per_axis: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Layout {
    /// `m` points equispaced in `[a, b]` (1D only).
    Equispaced { interval: [f64; 2] },
    /// `m` points uniform in `[a, b]^d`, drawn from the run seed.
    Random { interval: [f64; 2] },
    Explicit { positions: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSection {
    pub m: usize,
    pub sigma: f64,
    pub layout: Layout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub level: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { level: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub mode: Mode,
    pub seed: u64,
    #[serde(default = "default_floor")]
    pub beta_floor: f64,
    /// Extra parameters tracked individually in `true_theta.csv`.
    #[serde(default)]
    pub true_thetas: Vec<[f64; 2]>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}

fn default_floor() -> f64 {
    DEFAULT_BETA_FLOOR
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub time: TimeSection,
    pub reduced: ReducedSection,
    pub sensors: SensorSection,
    #[serde(default)]
    pub placement: PlacementConfig,
    #[serde(default)]
    pub noise: NoiseSection,
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn preset(name: &str) -> Result<Self> {
        let cfg = match name {
            "nls1d" => nls1d(false),
            "swe1d" => swe1d(false),
            "swe2d" => swe2d(false),
            "paper-nls1d" => nls1d(true),
            "paper-swe1d" => swe1d(true),
            "paper-swe2d" => swe2d(true),
            other => return Err(Error::Config(format!("unknown preset {other:?}"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset_names() -> &'static [&'static str] {
        &["nls1d", "swe1d", "swe2d", "paper-nls1d", "paper-swe1d", "paper-swe2d"]
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.time;
        if t.stride == 0 || t.n_steps % t.stride != 0 {
            return Err(Error::Config(format!(
                "stride {} must divide n_steps {}",
                t.stride, t.n_steps
            )));
        }
        if t.hf_substeps == 0 {
            return Err(Error::Config("hf_substeps must be positive".into()));
        }
        TimeGrid::new(t.t_final, t.n_steps)?;
        if self.reduced.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        if self.sensors.m == 0 {
            return Err(Error::Config("m must be positive".into()));
        }
        if !(self.noise.level >= 0.0 && self.noise.level.is_finite()) {
            return Err(Error::Config(format!("noise level {}", self.noise.level)));
        }
        if !(self.run.beta_floor >= 0.0) {
            return Err(Error::Config(format!("beta floor {}", self.run.beta_floor)));
        }
        self.placement.validate()?;
        let spec = self.spec()?;
        self.parameter_grid()?;
        for th in &self.run.true_thetas {
            if !spec.contains(Theta(*th)) {
                return Err(Error::OutOfBox(th[0], th[1]));
            }
        }
        let sensors = self.initial_sensors()?;
        if sensors.len() != self.sensors.m {
            return Err(Error::Config(format!(
                "{} explicit positions for m = {}",
                sensors.len(),
                self.sensors.m
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<SpatialGrid> {
        let m = &self.model;
        match m.kind.dim() {
            1 => SpatialGrid::new_1d(m.half_extent[0], m.points[0]),
            _ => SpatialGrid::new_2d(m.half_extent, m.points),
        }
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        let spec = ModelSpec::new(self.model.kind, self.grid()?)?;
        Ok(match self.model.parameter_box {
            Some(b) => spec.with_box(b),
            None => spec,
        })
    }

    pub fn parameter_grid(&self) -> Result<ParameterGrid> {
        ParameterGrid::uniform(self.spec()?.parameter_box, self.reduced.training_per_axis)
    }

    /// Time grid of the reduced integrator.
    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid {
            t_final: self.time.t_final,
            n_steps: self.time.n_steps,
        }
    }

    /// Time grid of the ground-truth integrator.
    pub fn truth_time_grid(&self) -> TimeGrid {
        TimeGrid {
            t_final: self.time.t_final,
            n_steps: self.time.n_steps * self.time.hf_substeps,
        }
    }

    /// Snapshot stride of the ground truth, in HF steps.
    pub fn truth_stride(&self) -> usize {
        self.time.stride * self.time.hf_substeps
    }

    pub fn assimilation_count(&self) -> usize {
        self.time.n_steps / self.time.stride + 1
    }

    pub fn initial_sensors(&self) -> Result<SensorArray> {
        let s = &self.sensors;
        let dim = self.model.kind.dim();
        let positions = match &s.layout {
            Layout::Equispaced { interval: [a, b] } => {
                if dim != 1 {
                    return Err(Error::Config("equispaced layout is 1D only".into()));
                }
                if s.m == 1 {
                    vec![[0.5 * (a + b), 0.0]]
                } else {
                    (0..s.m)
                        .map(|i| [a + (b - a) * i as f64 / (s.m - 1) as f64, 0.0])
                        .collect()
                }
            }
            Layout::Random { interval: [a, b] } => {
                if !(a < b) {
                    return Err(Error::Config(format!("empty interval [{a}, {b}]")));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(self.run.seed);
                (0..s.m)
                    .map(|_| {
                        let x = rng.random_range(*a..*b);
                        let y = if dim == 2 { rng.random_range(*a..*b) } else { 0.0 };
                        [x, y]
                    })
                    .collect()
            }
            Layout::Explicit { positions } => positions.clone(),
        };
        SensorArray::new(dim, positions, s.sigma)
    }
}

fn nls1d(full: bool) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelSection {
            kind: ModelKind::Nls1d,
            half_extent: [20.0 * std::f64::consts::PI, 0.0],
            points: [if full { 1000 } else { 256 }, 1],
            parameter_box: None,
        },
        time: TimeSection {
            t_final: 20.0,
            n_steps: if full { 20000 } else { 4000 },
            stride: 10,
            hf_substeps: if full { 1 } else { 5 },
        },
        reduced: ReducedSection {
            n: 4,
            training_per_axis: if full { 10 } else { 4 },
        },
        sensors: SensorSection {
            m: 6,
            sigma: if full { 0.1 } else { 0.5 },
            layout: Layout::Equispaced {
                interval: [-1.25, 1.25],
            },
        },
        placement: PlacementConfig::default(),
        noise: NoiseSection::default(),
        run: RunSection {
            mode: Mode::Dynamic,
            seed: 0,
            beta_floor: DEFAULT_BETA_FLOOR,
            true_thetas: vec![[1.04, 1.04], [1.0933, 1.0933], [1.0267, 0.9867]],
            out_dir: default_out(),
        },
    }
}

fn swe1d(full: bool) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelSection {
            kind: ModelKind::Swe1d,
            half_extent: [30.0, 0.0],
            points: [if full { 1000 } else { 256 }, 1],
            parameter_box: None,
        },
        time: TimeSection {
            t_final: 10.0,
            n_steps: if full { 10000 } else { 2500 },
            stride: 10,
            hf_substeps: 1,
        },
        reduced: ReducedSection {
            n: 6,
            training_per_axis: 5,
        },
        sensors: SensorSection {
            m: 10,
            sigma: if full { 0.1 } else { 0.25 },
            layout: Layout::Equispaced {
                interval: [-3.5, 3.5],
            },
        },
        placement: PlacementConfig::default(),
        noise: NoiseSection::default(),
        run: RunSection {
            mode: Mode::Dynamic,
            seed: 0,
            beta_floor: DEFAULT_BETA_FLOOR,
            true_thetas: vec![[0.1161, 1.0125], [0.1375, 0.3625], [0.1161, 0.3625]],
            out_dir: default_out(),
        },
    }
}

fn swe2d(full: bool) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelSection {
            kind: ModelKind::Swe2d,
            half_extent: [8.0, 8.0],
            points: if full { [50, 50] } else { [32, 32] },
            parameter_box: None,
        },
        time: TimeSection {
            t_final: 10.0,
            n_steps: if full { 10000 } else { 1000 },
            stride: 10,
            hf_substeps: 1,
        },
        reduced: ReducedSection {
            n: 6,
            training_per_axis: 5,
        },
        sensors: SensorSection {
            m: 10,
            sigma: if full { 0.1 } else { 0.5 },
            layout: Layout::Random {
                interval: [-0.8, 0.8],
            },
        },
        placement: PlacementConfig::default(),
        noise: NoiseSection::default(),
        run: RunSection {
            mode: Mode::Dynamic,
            seed: 0,
            beta_floor: DEFAULT_BETA_FLOOR,
            true_thetas: vec![[0.3125, 1.6250]],
            out_dir: default_out(),
        },
    }
}
