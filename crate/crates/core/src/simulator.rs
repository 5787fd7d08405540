//! Deterministic pour plant: a tilting source cup that overflows past its
//! retained capacity, a transport delay before liquid lands in the target,
//! and generative label noise for the camera.

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::{Isometry3, Point3, Translation3, Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::camera::rim_cap_triangles;
use crate::geometry::{volume_below_plane, TriMesh, M3_PER_ML};
use crate::observation::{ConfusionTable, PixelLabelMap, ViewGeometry};

pub const DEFAULT_FLOW_COEFFICIENT: f64 = 4.0;
pub const DEFAULT_TRANSPORT_DELAY: f64 = 0.3;

/// Slack on arrival times so that a zero delay delivers within the same step.
const ARRIVAL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SourceModel {
    mesh: TriMesh,
    pivot: Point3<f64>,
    axis: Unit<Vector3<f64>>,
    /// Vertices on the rim, i.e. corners of the opening cap.
    rim: Vec<usize>,
    /// 1/s
    flow_coefficient: f64,
    /// s
    transport_delay: f64,
    spill_fraction: f64,
}

impl SourceModel {
    /// `mesh` is the upright interior. Tilting rotates it about the line
    /// through `pivot` along `axis`.
    pub fn new(
        mesh: TriMesh,
        pivot: Point3<f64>,
        axis: Vector3<f64>,
        flow_coefficient: f64,
        transport_delay: f64,
        spill_fraction: f64,
    ) -> Result<Self> {
        if !(flow_coefficient > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "flow coefficient must be positive, got {flow_coefficient}"
            )));
        }
        if !(transport_delay >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "transport delay must be non-negative, got {transport_delay}"
            )));
        }
        if !(0.0..=1.0).contains(&spill_fraction) {
            return Err(Error::InvalidConfig(format!(
                "spill fraction must be in [0, 1], got {spill_fraction}"
            )));
        }
        let axis = Unit::try_new(axis, 1e-12)
            .ok_or_else(|| Error::InvalidConfig("tilt axis must be non-zero".into()))?;
        let cap = rim_cap_triangles(&mesh);
        let mut rim: Vec<usize> = mesh
            .triangles()
            .iter()
            .zip(&cap)
            .filter(|(_, &c)| c)
            .flat_map(|(t, _)| *t)
            .collect();
        rim.sort_unstable();
        rim.dedup();
        if rim.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "source mesh '{}' has no flat opening at its top",
                mesh.name()
            )));
        }
        Ok(Self {
            mesh,
            pivot,
            axis,
            rim,
            flow_coefficient,
            transport_delay,
            spill_fraction,
        })
    }

    /// A source with the default flow law, tilting about the x axis through
    /// the rim center.
    pub fn with_defaults(mesh: TriMesh) -> Result<Self> {
        let (lo, hi) = mesh.aabb();
        let pivot = Point3::new(0.5 * (lo.x + hi.x), 0.5 * (lo.y + hi.y), hi.z);
        Self::new(
            mesh,
            pivot,
            Vector3::x(),
            DEFAULT_FLOW_COEFFICIENT,
            DEFAULT_TRANSPORT_DELAY,
            0.0,
        )
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn capacity_ml(&self) -> f64 {
        self.mesh.volume() / M3_PER_ML
    }

    pub fn flow_coefficient(&self) -> f64 {
        self.flow_coefficient
    }

    pub fn transport_delay(&self) -> f64 {
        self.transport_delay
    }

    pub fn spill_fraction(&self) -> f64 {
        self.spill_fraction
    }

    pub fn with_transport_delay(mut self, delay: f64) -> Result<Self> {
        if !(delay >= 0.0) {
            return Err(Error::InvalidConfig(format!("transport delay must be non-negative, got {delay}")));
        }
        self.transport_delay = delay;
        Ok(self)
    }

    pub fn with_spill_fraction(mut self, fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidConfig(format!("spill fraction must be in [0, 1], got {fraction}")));
        }
        self.spill_fraction = fraction;
        Ok(self)
    }

    fn tilt(&self, angle: f64) -> Isometry3<f64> {
        let rot = UnitQuaternion::from_axis_angle(&self.axis, angle);
        let p = self.pivot.coords;
        Translation3::from(p) * rot * Translation3::from(-p)
    }
}

/// Volume (ml) the source holds at `wrist_angle` before liquid crosses its
/// lowest rim point.
pub fn retained_capacity(source: &SourceModel, wrist_angle: f64) -> Result<f64> {
    if !(0.0..=PI).contains(&wrist_angle) {
        return Err(Error::AngleOutOfRange(wrist_angle));
    }
    if wrist_angle == 0.0 {
        return Ok(source.capacity_ml());
    }
    let tilted = source.mesh.transformed(&source.tilt(wrist_angle));
    let lip = source
        .rim
        .iter()
        .map(|&i| tilted.vertices()[i].z)
        .fold(f64::INFINITY, f64::min);
    Ok(volume_below_plane(&tilted, lip) / M3_PER_ML)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InFlight {
    pub volume_ml: f64,
    pub arrival_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PourSimState {
    pub source_ml: f64,
    pub in_flight: VecDeque<InFlight>,
    pub target_ml: f64,
    pub spilled_ml: f64,
    /// rad from vertical
    pub wrist_angle: f64,
    pub time_s: f64,
    pub tick: u64,
    pub initial_ml: f64,
}

impl PourSimState {
    pub fn new(source_ml: f64) -> Self {
        Self {
            source_ml,
            in_flight: VecDeque::new(),
            target_ml: 0.0,
            spilled_ml: 0.0,
            wrist_angle: 0.0,
            time_s: 0.0,
            tick: 0,
            initial_ml: source_ml,
        }
    }

    pub fn flight_ml(&self) -> f64 {
        self.in_flight.iter().map(|f| f.volume_ml).sum()
    }

    /// Sum of all compartments; equals `initial_ml` up to round-off.
    pub fn total_ml(&self) -> f64 {
        self.source_ml + self.flight_ml() + self.target_ml + self.spilled_ml
    }
}

/// Advances the plant by `dt` under a wrist angular velocity command.
///
/// Order within a step: integrate the wrist angle (clamped to [0, pi]),
/// advance time, pour out a first-order share of the overflow excess, then
/// deliver everything whose arrival time has passed.
pub fn sim_step(state: &PourSimState, source: &SourceModel, wrist_rate: f64, dt: f64) -> Result<PourSimState> {
    if !(dt > 0.0) {
        return Err(Error::NonPositiveDt(dt));
    }
    let mut s = state.clone();
    s.wrist_angle = (s.wrist_angle + wrist_rate * dt).clamp(0.0, PI);
    s.time_s += dt;
    s.tick += 1;

    let retained = retained_capacity(source, s.wrist_angle)?;
    let excess = (s.source_ml - retained).max(0.0);
    let out = excess.min(source.flow_coefficient * excess * dt);
    if out > 0.0 {
        s.source_ml -= out;
        s.in_flight.push_back(InFlight {
            volume_ml: out,
            arrival_s: s.time_s + source.transport_delay,
        });
    }

    while let Some(f) = s.in_flight.front() {
        if f.arrival_s > s.time_s + ARRIVAL_SLACK {
            break;
        }
        let spilled = f.volume_ml * source.spill_fraction;
        s.spilled_ml += spilled;
        s.target_ml += f.volume_ml - spilled;
        s.in_flight.pop_front();
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub table: ConfusionTable,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(table: ConfusionTable, seed: u64) -> Result<Self> {
        table.validate()?;
        Ok(Self { table, seed })
    }

    pub fn noiseless(seed: u64) -> Self {
        Self {
            table: ConfusionTable::identity(),
            seed,
        }
    }

    /// Generator for one tick. Each tick has its own stream, so a frame can
    /// be re-rendered without replaying the ones before it.
    fn rng(&self, tick: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(tick);
        rng
    }
}

/// Renders the detector output for the current target volume: the expected
/// labels, with each inner pixel resampled through the confusion table.
pub fn render_observation(state: &PourSimState, view: &ViewGeometry, noise: &NoiseSpec) -> Result<PixelLabelMap> {
    let surface = view.surface_height(state.target_ml)?;
    let mut map = PixelLabelMap::empty(view.mask().clone());
    let mut rng = noise.rng(state.tick);
    let labels = map.labels_mut();
    for (i, expected) in view.inner_labels_at_height(surface) {
        let p = noise.table.prob(true, expected);
        labels[i] = rng.random::<f64>() < p;
    }
    Ok(map)
}

/// Mixes a base seed with an index into an independent seed (splitmix64).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
