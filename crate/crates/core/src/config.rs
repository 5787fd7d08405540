//! Experiment configuration (TOML). Field names carry their units; angles
//! are degrees in the file and are converted to radians only here.

use std::path::{Path, PathBuf};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::controller::{ControllerConfig, DerivativeBasis};
use crate::error::{Error, Result};
use crate::filter::HistogramSpec;
use crate::geometry::{load_obj, CameraModel, Intrinsics, TriMesh};
use crate::observation::ConfusionTable;
use crate::simulator::SourceModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Relative to the config file. The command line can override it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub histogram: HistogramConfig,
    /// Label noise the simulator applies.
    pub noise: TableConfig,
    /// Confusion table the estimator assumes.
    pub likelihood: TableConfig,
    pub controller: ControllerFileConfig,
    pub source: SourceConfig,
    pub protocol: ProtocolConfig,
    pub targets: Vec<TargetConfig>,
    #[serde(skip)]
    base_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramConfig {
    pub bins: usize,
    pub v_max_ml: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableConfig {
    pub liquid_given_liquid: f64,
    pub liquid_given_not: f64,
}

impl TableConfig {
    pub fn table(&self) -> Result<ConfusionTable> {
        ConfusionTable::new(self.liquid_given_liquid, self.liquid_given_not)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerFileConfig {
    pub pre_tilt_deg: f64,
    pub kp_deg_s_per_ml: f64,
    pub kd_deg_s_per_ml: f64,
    #[serde(default)]
    pub ki: f64,
    #[serde(default)]
    pub derivative: DerivativeBasis,
    pub pre_tilt_rate_deg_s: f64,
    pub return_rate_deg_s: f64,
    pub max_wrist_rate_deg_s: f64,
}

impl ControllerFileConfig {
    pub fn to_controller(&self) -> Result<ControllerConfig> {
        let c = ControllerConfig {
            pre_tilt_angle: self.pre_tilt_deg.to_radians(),
            kp: self.kp_deg_s_per_ml.to_radians(),
            kd: self.kd_deg_s_per_ml.to_radians(),
            ki: self.ki.to_radians(),
            pre_tilt_rate: self.pre_tilt_rate_deg_s.to_radians(),
            return_rate: self.return_rate_deg_s.to_radians(),
            max_wrist_rate: self.max_wrist_rate_deg_s.to_radians(),
            derivative: self.derivative,
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub mesh: PathBuf,
    /// Tilt pivot; defaults to the center of the rim.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pivot_m: Option<[f64; 3]>,
    pub tilt_axis: [f64; 3],
    pub flow_coefficient_per_s: f64,
    pub transport_delay_s: f64,
    pub spill_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub duration_s: f64,
    pub rate_hz: f64,
    pub source_volumes_ml: Vec<f64>,
    pub collect_targets_ml: Vec<f64>,
    pub eval_targets_ml: Vec<f64>,
    pub min_headroom_ml: f64,
    pub collect_pours: usize,
    pub eval_pours_per_container: usize,
    pub train_fraction: f64,
    /// Stay probability of the transition prior used before fitting.
    pub bootstrap_stay: f64,
    pub transition_smoothing: f64,
}

impl ProtocolConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.rate_hz
    }

    pub fn ticks(&self) -> usize {
        (self.duration_s * self.rate_hz).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub name: String,
    pub mesh: PathBuf,
    pub camera: CameraConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub eye_m: [f64; 3],
    pub look_at_m: [f64; 3],
    /// World direction that appears toward the top of the image.
    pub up: [f64; 3],
}

impl CameraConfig {
    pub fn camera(&self) -> Result<CameraModel> {
        let intr = Intrinsics {
            width: self.width,
            height: self.height,
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
        };
        CameraModel::look_at(
            intr,
            Point3::from(self.eye_m),
            Point3::from(self.look_at_m),
            Vector3::from(self.up),
        )
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base).map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{}: {msg}", path.display())),
            e => e,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Directory relative paths are resolved against.
    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let p = &self.protocol;
        if !(p.duration_s > 0.0 && p.rate_hz > 0.0) {
            return bad(format!("duration_s and rate_hz must be positive ({}, {})", p.duration_s, p.rate_hz));
        }
        if p.source_volumes_ml.is_empty() || p.eval_targets_ml.is_empty() || p.collect_targets_ml.is_empty() {
            return bad("protocol volume lists must not be empty".into());
        }
        let mut all_volumes = p.source_volumes_ml.iter().chain(&p.eval_targets_ml).chain(&p.collect_targets_ml);
        if all_volumes.any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("protocol volumes must be finite and non-negative".into());
        }
        let max_target = p
            .eval_targets_ml
            .iter()
            .chain(&p.collect_targets_ml)
            .copied()
            .fold(0.0, f64::max);
        if self.histogram.v_max_ml < max_target {
            return bad(format!(
                "histogram v_max_ml {} is below the largest protocol target {max_target}",
                self.histogram.v_max_ml
            ));
        }
        if !(0.0..=1.0).contains(&p.train_fraction) {
            return bad(format!("train_fraction must be in [0, 1], got {}", p.train_fraction));
        }
        if !(0.0..=1.0).contains(&p.bootstrap_stay) || !(p.transition_smoothing >= 0.0) {
            return bad("bootstrap_stay must be in [0, 1] and transition_smoothing non-negative".into());
        }
        if self.targets.is_empty() {
            return bad("at least one target container is required".into());
        }
        let mut names: Vec<&str> = self.targets.iter().map(|t| t.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("target container names must be unique".into());
        }
        self.spec()?;
        self.noise.table()?;
        self.likelihood.table()?;
        self.controller.to_controller()?;
        for t in &self.targets {
            t.camera.camera()?;
        }
        for path in std::iter::once(&self.source.mesh).chain(self.targets.iter().map(|t| &t.mesh)) {
            let full = self.resolve(path);
            if !full.is_file() {
                return bad(format!("mesh file not found: {}", full.display()));
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<HistogramSpec> {
        HistogramSpec::new(self.histogram.bins, self.histogram.v_max_ml)
    }

    pub fn source_model(&self) -> Result<SourceModel> {
        let mesh = load_obj(self.resolve(&self.source.mesh))?;
        let s = &self.source;
        let pivot = match s.pivot_m {
            Some(p) => Point3::from(p),
            None => {
                let (lo, hi) = mesh.aabb();
                Point3::new(0.5 * (lo.x + hi.x), 0.5 * (lo.y + hi.y), hi.z)
            }
        };
        SourceModel::new(
            mesh,
            pivot,
            Vector3::from(s.tilt_axis),
            s.flow_coefficient_per_s,
            s.transport_delay_s,
            s.spill_fraction,
        )
    }

    pub fn target_mesh(&self, index: usize) -> Result<TriMesh> {
        let t = &self.targets[index];
        Ok(load_obj(self.resolve(&t.mesh))?.with_name(t.name.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundled() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml")
    }

    #[test]
    fn bundled_config_loads_and_converts_degrees() {
        let cfg = ExperimentConfig::load(bundled()).unwrap();
        let c = cfg.controller.to_controller().unwrap();
        assert_eq!(c, ControllerConfig::default());
        assert_eq!(cfg.protocol.ticks(), 750);
        assert_eq!(cfg.spec().unwrap(), HistogramSpec::fine());
        assert_eq!(cfg.likelihood.table().unwrap(), ConfusionTable::thermal());
        assert_eq!(cfg.targets.len(), 3);
        for i in 0..3 {
            assert!(cfg.target_mesh(i).unwrap().volume() * 1e6 >= cfg.histogram.v_max_ml);
        }
        cfg.source_model().unwrap();
    }

    #[test]
    fn round_trip_is_idempotent() {
        let cfg = ExperimentConfig::load(bundled()).unwrap();
        let text = cfg.to_toml();
        let again = ExperimentConfig::from_toml(&text, cfg.base_dir()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_toml(), text);
    }

    #[test]
    fn rejects_bad_configs() {
        let cfg = ExperimentConfig::load(bundled()).unwrap();
        let text = cfg.to_toml();
        let base = cfg.base_dir().to_path_buf();
        let broken = [
            text.replace("v_max_ml = 400.0", "v_max_ml = 200.0"),
            text.replace("duration_s = 25.0", "duration_s = 0.0"),
            text.replace("cylinder.obj", "missing.obj"),
            text.replace("liquid_given_liquid = 0.9", "liquid_given_liquid = 1.9"),
            text.replace("seed =", "bogus_field = 1\nseed ="),
            text.replace("kd_deg_s_per_ml = 0.2", "kd_deg_s_per_ml = -0.2"),
        ];
        for (i, b) in broken.iter().enumerate() {
            assert_ne!(b, &text, "case {i} did not change the text");
            assert!(
                ExperimentConfig::from_toml(b, &base).is_err_and(|e| e.is_invalid_input()),
                "case {i}"
            );
        }
    }
}
