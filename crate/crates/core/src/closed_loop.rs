//! The closed pouring loop: render a frame, filter it, command the wrist,
//! step the plant.

use std::sync::Arc;

use crate::controller::{controller_step, ControllerConfig, ControllerState};
use crate::error::{Error, Result};
use crate::filter::{HistogramFilter, HistogramSpec, TransitionModel, VolumeEstimate};
use crate::observation::{likelihood_profile, ConfusionTable, ExpectedLabelCache, PixelLabelMap, ViewGeometry};
use crate::pourlog::{inner_labels, PourLog, PourRecord};
use crate::simulator::{render_observation, sim_step, NoiseSpec, PourSimState, SourceModel};

pub const DEFAULT_DURATION_S: f64 = 25.0;

/// Anything that turns a label map into a per-bin log-likelihood.
pub trait LikelihoodModel: Send + Sync {
    fn spec(&self) -> &HistogramSpec;
    fn loglik(&self, obs: &PixelLabelMap) -> Result<Vec<f64>>;
}

/// Geometric likelihood: every bin's expected labels scored against the
/// observation through the confusion table.
#[derive(Debug, Clone)]
pub struct ModelBased {
    cache: Arc<ExpectedLabelCache>,
    table: ConfusionTable,
}

impl ModelBased {
    pub fn new(cache: Arc<ExpectedLabelCache>, table: ConfusionTable) -> Self {
        Self { cache, table }
    }

    pub fn cache(&self) -> &Arc<ExpectedLabelCache> {
        &self.cache
    }
}

impl LikelihoodModel for ModelBased {
    fn spec(&self) -> &HistogramSpec {
        self.cache.spec()
    }

    fn loglik(&self, obs: &PixelLabelMap) -> Result<Vec<f64>> {
        likelihood_profile(obs, &self.cache, &self.table)
    }
}

/// Histogram filter driven by a likelihood model.
pub struct Estimator<'a> {
    filter: HistogramFilter,
    likelihood: &'a dyn LikelihoodModel,
}

impl<'a> Estimator<'a> {
    /// Starts from an empty target.
    pub fn new(trans: TransitionModel, likelihood: &'a dyn LikelihoodModel) -> Result<Self> {
        if trans.spec() != likelihood.spec() {
            return Err(Error::DimensionMismatch {
                expected: likelihood.spec().bins(),
                actual: trans.len(),
            });
        }
        Ok(Self {
            filter: HistogramFilter::empty_target(trans),
            likelihood,
        })
    }

    pub fn observe(&mut self, obs: &PixelLabelMap) -> Result<VolumeEstimate> {
        let ll = self.likelihood.loglik(obs)?;
        self.filter.step(&ll)
    }
}

/// Everything about a pour that is not the estimator or the target amount.
#[derive(Debug, Clone, Copy)]
pub struct PourSetup<'a> {
    pub source: &'a SourceModel,
    pub view: &'a ViewGeometry,
    pub noise: NoiseSpec,
    pub controller: ControllerConfig,
    pub duration_s: f64,
    pub dt: f64,
    /// Keep each frame's inner-pixel labels in the result.
    pub record_frames: bool,
}

#[derive(Debug, Clone)]
pub struct PourRun {
    pub log: PourLog,
    /// Inner-pixel labels per tick, when requested.
    pub frames: Vec<Vec<bool>>,
    pub final_state: PourSimState,
    pub spill_fraction: f64,
}

impl PourRun {
    /// Target volume once everything still in the air has landed.
    pub fn final_ml(&self) -> f64 {
        self.final_state.target_ml + self.final_state.flight_ml() * (1.0 - self.spill_fraction)
    }
}

/// Runs one pour for the whole duration. A degenerate belief ends the run
/// early with the reason recorded in the log.
pub fn run_pour(
    sim: PourSimState,
    estimator: &mut Estimator<'_>,
    setup: &PourSetup<'_>,
    target_ml: f64,
) -> Result<PourRun> {
    if !(setup.duration_s > 0.0) {
        return Err(Error::InvalidConfig(format!("pour duration must be positive, got {}", setup.duration_s)));
    }
    if !(setup.dt > 0.0) {
        return Err(Error::NonPositiveDt(setup.dt));
    }
    let ticks = (setup.duration_s / setup.dt).round() as u64;
    let mut state = sim;
    let mut ctrl = ControllerState::new(target_ml);
    let mut log = PourLog::default();
    let mut frames = Vec::new();

    for _ in 0..ticks {
        let obs = render_observation(&state, setup.view, &setup.noise)?;
        let est = match estimator.observe(&obs) {
            Ok(e) => e,
            Err(Error::DegenerateBelief) => {
                log.aborted = Some(format!("degenerate belief at tick {}", state.tick));
                break;
            }
            Err(e) => return Err(e),
        };
        let (cmd, next_ctrl) = controller_step(&ctrl, &setup.controller, &est, state.wrist_angle, setup.dt)?;
        log.records.push(PourRecord {
            tick: state.tick,
            time_s: state.time_s,
            wrist_rad: state.wrist_angle,
            cmd_rad_s: cmd,
            src_ml: state.source_ml,
            flight_ml: state.flight_ml(),
            tgt_ml: state.target_ml,
            spill_ml: state.spilled_ml,
            est_ml: est.volume_ml,
            liq_px: obs.inner_liquid_count() as u32,
            gt_ml: None,
        });
        if setup.record_frames {
            frames.push(inner_labels(&obs));
        }
        ctrl = next_ctrl;
        state = sim_step(&state, setup.source, cmd, setup.dt)?;
    }
    Ok(PourRun {
        log,
        frames,
        final_state: state,
        spill_fraction: setup.source.spill_fraction(),
    })
}
