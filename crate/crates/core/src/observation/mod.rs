//! Pixel-label observation model.
//!
//! A hypothesized target volume is turned into an expected label per pixel by
//! filling the container mesh to that volume with a level liquid surface and
//! casting each pixel ray: the pixel shows liquid when the ray meets the
//! liquid plane before any wall. Observed labels are scored against the
//! expected ones through a confusion table, treating pixels as independent.

mod pgm;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::HistogramSpec;
use crate::geometry::camera::{opening_and_wall_hits, rim_cap_triangles};
use crate::geometry::{fill_height, CameraModel, Region, RegionMask, TriMesh, DEFAULT_FILL_TOL, M3_PER_ML};

pub use pgm::{read_label_pgm, read_mask_pgm, write_label_pgm, write_mask_pgm};

/// When the liquid plane and a wall are hit within this distance (m) of each
/// other, the wall wins.
pub const TIE_EPSILON: f64 = 1e-9;

/// Detector heatmaps are binarized at this value before scoring.
pub const HEATMAP_THRESHOLD: f64 = 0.5;

/// Binary liquid labels over an image plus the region mask they belong to.
/// Only inner pixels take part in likelihoods.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelLabelMap {
    labels: Vec<bool>,
    mask: Arc<RegionMask>,
}

impl PixelLabelMap {
    pub fn new(labels: Vec<bool>, mask: Arc<RegionMask>) -> Result<Self> {
        let expected = mask.width() * mask.height();
        if labels.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: labels.len(),
            });
        }
        Ok(Self { labels, mask })
    }

    /// All pixels not-liquid.
    pub fn empty(mask: Arc<RegionMask>) -> Self {
        let n = mask.width() * mask.height();
        Self {
            labels: vec![false; n],
            mask,
        }
    }

    /// Thresholds a per-pixel liquid score at [`HEATMAP_THRESHOLD`].
    pub fn from_heatmap(scores: &[f64], mask: Arc<RegionMask>) -> Result<Self> {
        Self::new(scores.iter().map(|&s| s >= HEATMAP_THRESHOLD).collect(), mask)
    }

    pub fn width(&self) -> usize {
        self.mask.width()
    }

    pub fn height(&self) -> usize {
        self.mask.height()
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [bool] {
        &mut self.labels
    }

    pub fn mask(&self) -> &Arc<RegionMask> {
        &self.mask
    }

    pub fn is_liquid(&self, u: usize, v: usize) -> bool {
        self.labels[v * self.width() + u]
    }

    /// Number of inner pixels labeled liquid.
    pub fn inner_liquid_count(&self) -> usize {
        self.mask
            .regions()
            .iter()
            .zip(&self.labels)
            .filter(|(&r, &l)| l && r == Region::Inner)
            .count()
    }

    fn same_view(&self, other: &PixelLabelMap) -> bool {
        Arc::ptr_eq(&self.mask, &other.mask) || *self.mask == *other.mask
    }
}

/// P(observed label | expected label).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionTable {
    /// P(obs = liquid | expected = liquid)
    pub liquid_given_liquid: f64,
    /// P(obs = liquid | expected = not-liquid)
    pub liquid_given_not: f64,
}

impl ConfusionTable {
    pub fn new(liquid_given_liquid: f64, liquid_given_not: f64) -> Result<Self> {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        if !(ok(liquid_given_liquid) && ok(liquid_given_not)) {
            return Err(Error::InvalidTable(format!(
                "probabilities must lie in [0, 1], got {liquid_given_liquid} and {liquid_given_not}"
            )));
        }
        Ok(Self {
            liquid_given_liquid,
            liquid_given_not,
        })
    }

    /// Thermal-camera detector rates: 90/10 for liquid, 20/80 for not-liquid.
    pub fn thermal() -> Self {
        Self {
            liquid_given_liquid: 0.9,
            liquid_given_not: 0.2,
        }
    }

    /// Labels are never flipped.
    pub fn identity() -> Self {
        Self {
            liquid_given_liquid: 1.0,
            liquid_given_not: 0.0,
        }
    }

    /// `P(obs | expected)` for the four cells.
    pub fn prob(&self, observed: bool, expected: bool) -> f64 {
        let p_liquid = if expected {
            self.liquid_given_liquid
        } else {
            self.liquid_given_not
        };
        if observed {
            p_liquid
        } else {
            1.0 - p_liquid
        }
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.liquid_given_liquid, self.liquid_given_not).map(|_| ())
    }

    /// Log-likelihood of a label map summarized by its confusion counts.
    /// Empty cells contribute nothing, so zero probabilities are allowed.
    pub fn loglik_from_counts(&self, counts: &ConfusionCounts) -> f64 {
        let term = |n: usize, observed: bool, expected: bool| {
            if n == 0 {
                0.0
            } else {
                n as f64 * self.prob(observed, expected).ln()
            }
        };
        term(counts.liquid_liquid, true, true)
            + term(counts.not_liquid, false, true)
            + term(counts.liquid_not, true, false)
            + term(counts.not_not, false, false)
    }
}

impl Default for ConfusionTable {
    fn default() -> Self {
        Self::thermal()
    }
}

/// Inner-pixel counts by (observed, expected) label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    /// observed liquid, expected liquid
    pub liquid_liquid: usize,
    /// observed not-liquid, expected liquid
    pub not_liquid: usize,
    /// observed liquid, expected not-liquid
    pub liquid_not: usize,
    /// observed not-liquid, expected not-liquid
    pub not_not: usize,
}

/// Per inner pixel: the vertical component of its ray and the distance at
/// which it meets the walls after entering the opening.
#[derive(Debug, Clone, Copy)]
struct InnerRay {
    index: usize,
    origin_z: f64,
    dir_z: f64,
    wall: f64,
}

impl InnerRay {
    fn is_liquid(&self, surface: f64) -> bool {
        if self.dir_z >= 0.0 {
            return false;
        }
        let t_plane = (surface - self.origin_z) / self.dir_z;
        t_plane >= 0.0 && t_plane < self.wall - TIE_EPSILON
    }
}

/// Ray casts for one (camera, container) pair that do not depend on the
/// liquid level. Building this is the expensive step; label maps at any
/// surface height are then a linear pass over the inner pixels.
#[derive(Debug, Clone)]
pub struct ViewGeometry {
    mesh: TriMesh,
    mask: Arc<RegionMask>,
    inner: Vec<InnerRay>,
}

impl ViewGeometry {
    pub fn new(camera: &CameraModel, mesh: &TriMesh) -> Self {
        let cap = rim_cap_triangles(mesh);
        let rays: Vec<_> = camera.rays().collect();
        let hits: Vec<_> = rays
            .par_iter()
            .map(|ray| opening_and_wall_hits(mesh, &cap, ray))
            .collect();
        let mut regions = Vec::with_capacity(rays.len());
        let mut inner = Vec::new();
        for (index, (ray, hit)) in rays.iter().zip(hits).enumerate() {
            let region = match hit {
                (Some(o), w) if w.is_none_or(|w| o < w) => {
                    inner.push(InnerRay {
                        index,
                        origin_z: ray.origin.z,
                        dir_z: ray.direction.z,
                        wall: w.unwrap_or(f64::INFINITY),
                    });
                    Region::Inner
                }
                (None, None) => Region::Neither,
                _ => Region::Outer,
            };
            regions.push(region);
        }
        let mask = RegionMask::new(camera.width, camera.height, regions)
            .expect("one region per pixel");
        Self {
            mesh: mesh.clone(),
            mask: Arc::new(mask),
            inner,
        }
    }

    pub fn mask(&self) -> &Arc<RegionMask> {
        &self.mask
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    /// Container capacity in ml.
    pub fn capacity_ml(&self) -> f64 {
        self.mesh.volume() / M3_PER_ML
    }

    pub fn inner_count(&self) -> usize {
        self.inner.len()
    }

    /// Surface height (world z) for a liquid volume in ml.
    pub fn surface_height(&self, volume_ml: f64) -> Result<f64> {
        fill_height(&self.mesh, volume_ml * M3_PER_ML, DEFAULT_FILL_TOL)
    }

    /// Expected labels for a liquid surface at world height `surface`.
    pub fn labels_at_height(&self, surface: f64) -> PixelLabelMap {
        let mut map = PixelLabelMap::empty(self.mask.clone());
        for ray in &self.inner {
            map.labels[ray.index] = ray.is_liquid(surface);
        }
        map
    }

    /// Expected labels for a volume in ml.
    pub fn labels_at_volume(&self, volume_ml: f64) -> Result<PixelLabelMap> {
        Ok(self.labels_at_height(self.surface_height(volume_ml)?))
    }

    /// Indices of inner pixels with their expected label at `surface`.
    pub fn inner_labels_at_height(&self, surface: f64) -> impl Iterator<Item = (usize, bool)> + '_ {
        self.inner.iter().map(move |r| (r.index, r.is_liquid(surface)))
    }
}

/// Expected pixel labels when the container holds `volume` cubic meters.
pub fn expected_labels(camera: &CameraModel, mesh: &TriMesh, volume: f64) -> Result<PixelLabelMap> {
    let height = fill_height(mesh, volume, DEFAULT_FILL_TOL)?;
    Ok(ViewGeometry::new(camera, mesh).labels_at_height(height))
}

pub fn confusion_counts(obs: &PixelLabelMap, expected: &PixelLabelMap) -> Result<ConfusionCounts> {
    if obs.labels.len() != expected.labels.len() {
        return Err(Error::DimensionMismatch {
            expected: expected.labels.len(),
            actual: obs.labels.len(),
        });
    }
    if !obs.same_view(expected) {
        return Err(Error::CacheMismatch);
    }
    let mut c = ConfusionCounts::default();
    for ((&o, &e), &r) in obs.labels.iter().zip(&expected.labels).zip(obs.mask.regions()) {
        if r != Region::Inner {
            continue;
        }
        match (o, e) {
            (true, true) => c.liquid_liquid += 1,
            (false, true) => c.not_liquid += 1,
            (true, false) => c.liquid_not += 1,
            (false, false) => c.not_not += 1,
        }
    }
    Ok(c)
}

/// `log P(obs | expected)` summed over inner pixels.
pub fn observation_loglik(
    obs: &PixelLabelMap,
    expected: &PixelLabelMap,
    table: &ConfusionTable,
) -> Result<f64> {
    Ok(table.loglik_from_counts(&confusion_counts(obs, expected)?))
}

/// Fill heights and expected labels for every bin center of a histogram.
///
/// Expected labels flood monotonically with the surface height, so each inner
/// pixel is stored as the first bin at which it turns liquid. The map for any
/// bin is recovered from that, and likelihood profiles over all bins reduce to
/// prefix sums.
#[derive(Debug, Clone)]
pub struct ExpectedLabelCache {
    view: Arc<ViewGeometry>,
    spec: HistogramSpec,
    heights: Vec<f64>,
    /// Per inner pixel (same order as the view's inner rays).
    switch_bin: Vec<usize>,
}

impl ExpectedLabelCache {
    pub fn build(view: Arc<ViewGeometry>, spec: HistogramSpec) -> Result<Self> {
        let capacity = view.capacity_ml();
        if spec.v_max_ml() > capacity * (1.0 + 1e-9) {
            return Err(Error::VolumeOutOfRange {
                volume: spec.v_max_ml(),
                capacity,
            });
        }
        let heights = (0..spec.bins())
            .into_par_iter()
            .map(|i| view.surface_height(spec.center(i)))
            .collect::<Result<Vec<_>>>()?;
        let switch_bin = view
            .inner
            .iter()
            .map(|ray| {
                heights
                    .iter()
                    .position(|&h| ray.is_liquid(h))
                    .unwrap_or(heights.len())
            })
            .collect();
        Ok(Self {
            view,
            spec,
            heights,
            switch_bin,
        })
    }

    pub fn spec(&self) -> &HistogramSpec {
        &self.spec
    }

    pub fn view(&self) -> &Arc<ViewGeometry> {
        &self.view
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    /// Expected label map for bin `i`.
    pub fn expected_map(&self, bin: usize) -> PixelLabelMap {
        let mut map = PixelLabelMap::empty(self.view.mask.clone());
        for (ray, &s) in self.view.inner.iter().zip(&self.switch_bin) {
            map.labels[ray.index] = s <= bin;
        }
        map
    }

    /// Number of expected-liquid inner pixels at each bin.
    pub fn expected_liquid_counts(&self) -> Vec<usize> {
        let mut per = vec![0usize; self.len() + 1];
        for &s in &self.switch_bin {
            per[s] += 1;
        }
        per.iter()
            .take(self.len())
            .scan(0, |acc, &n| {
                *acc += n;
                Some(*acc)
            })
            .collect()
    }

    /// Sufficient statistic of an observation for this cache: observed-liquid
    /// counts grouped by switch bin (the last slot holds never-liquid pixels).
    pub fn observed_by_switch(&self, obs: &PixelLabelMap) -> Result<Vec<usize>> {
        if !(Arc::ptr_eq(obs.mask(), &self.view.mask) || **obs.mask() == *self.view.mask) {
            return Err(Error::CacheMismatch);
        }
        let mut per = vec![0usize; self.len() + 1];
        for (ray, &s) in self.view.inner.iter().zip(&self.switch_bin) {
            if obs.labels[ray.index] {
                per[s] += 1;
            }
        }
        Ok(per)
    }
}

/// `log P(obs | v = bin center)` for every bin of the cache.
pub fn likelihood_profile(
    obs: &PixelLabelMap,
    cache: &ExpectedLabelCache,
    table: &ConfusionTable,
) -> Result<Vec<f64>> {
    let observed = cache.observed_by_switch(obs)?;
    let mut totals = vec![0usize; cache.len() + 1];
    for &s in &cache.switch_bin {
        totals[s] += 1;
    }
    let inner = cache.switch_bin.len();
    let observed_liquid: usize = observed.iter().sum();

    let mut expected_liquid = 0;
    let mut hit = 0;
    let profile = (0..cache.len())
        .map(|i| {
            expected_liquid += totals[i];
            hit += observed[i];
            let counts = ConfusionCounts {
                liquid_liquid: hit,
                not_liquid: expected_liquid - hit,
                liquid_not: observed_liquid - hit,
                not_not: inner - expected_liquid - (observed_liquid - hit),
            };
            table.loglik_from_counts(&counts)
        })
        .collect();
    Ok(profile)
}
