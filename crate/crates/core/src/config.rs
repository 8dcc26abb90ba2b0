//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{EventConfig, StepConfig};
use crate::geometry::{ClosedCurve, ReferenceFrame};
use crate::shapegen::{make_dumbbell, ShapeSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    #[default]
    Dumbbell,
    /// Circle of the configured radius; only `radius` and `nodes` are used.
    Circle,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapeConfig {
    pub kind: ShapeKind,
    #[serde(flatten)]
    pub spec: ShapeSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimeConfig {
    pub dt: f64,
    pub omega: f64,
    pub rebaseline_threshold: f64,
    pub max_t: f64,
    pub picard: usize,
    pub touch_tolerance: f64,
    pub onset_depth: f64,
    pub overlap_cap: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        let s = StepConfig::default();
        TimeConfig {
            dt: s.dt,
            omega: s.omega,
            rebaseline_threshold: s.rebaseline_threshold,
            max_t: s.max_t,
            picard: s.picard,
            touch_tolerance: s.events.touch_tolerance,
            onset_depth: s.events.onset_depth,
            overlap_cap: s.events.overlap_cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Opening of the cut curve at the bridge; unset means
    /// `max(1e-3, 2 * bridge spacing)`.
    pub opening: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub frame_every: usize,
    pub svg: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: PathBuf::from("out"),
            frame_every: StepConfig::default().frame_every,
            svg: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub shape: ShapeConfig,
    pub step: TimeConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

/// Initial state built from a config.
#[derive(Debug, Clone)]
pub struct Initial {
    pub frame: ReferenceFrame,
    /// Bridge abscissa for dumbbells.
    pub bridge_x: Option<f64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn step_config(&self) -> StepConfig {
        let s = &self.step;
        StepConfig {
            dt: s.dt,
            omega: s.omega,
            rebaseline_threshold: s.rebaseline_threshold,
            max_t: s.max_t,
            picard: s.picard,
            opening: self.solver.opening,
            frame_every: self.output.frame_every,
            events: EventConfig {
                touch_tolerance: s.touch_tolerance,
                onset_depth: s.onset_depth,
                overlap_cap: s.overlap_cap,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.shape.kind {
            ShapeKind::Dumbbell => self.shape.spec.validate()?,
            ShapeKind::Circle => {
                let s = &self.shape.spec;
                if !(s.radius > 0.0) || s.nodes < 8 {
                    return Err(Error::InvalidSpec(
                        "circle needs a positive radius and at least 8 nodes".into(),
                    ));
                }
            }
        }
        self.step_config().validate()
    }

    pub fn initial(&self) -> Result<Initial> {
        let s = &self.shape.spec;
        match self.shape.kind {
            ShapeKind::Dumbbell => {
                let db = make_dumbbell(s)?;
                Ok(Initial {
                    frame: db.frame,
                    bridge_x: Some(s.x0),
                })
            }
            ShapeKind::Circle => Ok(Initial {
                frame: ReferenceFrame::plain(ClosedCurve::circle(s.nodes, (0.0, 0.0), s.radius)?)?,
                bridge_x: None,
            }),
        }
    }
}
