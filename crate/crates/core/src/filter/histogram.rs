use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform binning of `[0, v_max_ml]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    bins: usize,
    v_max_ml: f64,
}

impl HistogramSpec {
    pub fn new(bins: usize, v_max_ml: f64) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidHistogram("need at least one bin".into()));
        }
        if !(v_max_ml > 0.0 && v_max_ml.is_finite()) {
            return Err(Error::InvalidHistogram(format!(
                "v_max_ml must be positive, got {v_max_ml}"
            )));
        }
        Ok(Self { bins, v_max_ml })
    }

    /// 100 bins over 0..400 ml.
    pub fn fine() -> Self {
        Self {
            bins: 100,
            v_max_ml: 400.0,
        }
    }

    /// 20 bins over 0..400 ml.
    pub fn coarse() -> Self {
        Self {
            bins: 20,
            v_max_ml: 400.0,
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn v_max_ml(&self) -> f64 {
        self.v_max_ml
    }

    pub fn width(&self) -> f64 {
        self.v_max_ml / self.bins as f64
    }

    pub fn edge(&self, i: usize) -> f64 {
        self.v_max_ml * i as f64 / self.bins as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.bins).map(|i| self.edge(i)).collect()
    }

    pub fn center(&self, i: usize) -> f64 {
        0.5 * (self.edge(i) + self.edge(i + 1))
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.bins).map(|i| self.center(i)).collect()
    }

    /// Bin containing `volume_ml`; values outside the range clamp to the end bins.
    pub fn bin_of(&self, volume_ml: f64) -> usize {
        if !(volume_ml > 0.0) {
            return 0;
        }
        ((volume_ml / self.width()).floor() as usize).min(self.bins - 1)
    }
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self::fine()
    }
}

/// Probability mass per bin; non-negative and summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeHistogram {
    spec: HistogramSpec,
    mass: Vec<f64>,
}

impl VolumeHistogram {
    /// Takes masses that already sum to one (within 1e-12).
    pub fn new(spec: HistogramSpec, mass: Vec<f64>) -> Result<Self> {
        check_len(&spec, &mass)?;
        if mass.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidHistogram("masses must be finite and non-negative".into()));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidHistogram(format!("masses sum to {total}")));
        }
        Ok(Self { spec, mass })
    }

    /// Scales non-negative weights to sum to one.
    pub fn normalized(spec: HistogramSpec, weights: Vec<f64>) -> Result<Self> {
        check_len(&spec, &weights)?;
        if weights.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidHistogram("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidHistogram("weights sum to zero".into()));
        }
        let mass = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { spec, mass })
    }

    pub fn point_mass(spec: HistogramSpec, bin: usize) -> Self {
        let mut mass = vec![0.0; spec.bins()];
        mass[bin.min(spec.bins() - 1)] = 1.0;
        Self { spec, mass }
    }

    pub fn uniform(spec: HistogramSpec) -> Self {
        let n = spec.bins();
        Self {
            spec,
            mass: vec![1.0 / n as f64; n],
        }
    }

    pub fn spec(&self) -> &HistogramSpec {
        &self.spec
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// Bin with the most mass (lowest index on ties).
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (i, &m) in self.mass.iter().enumerate() {
            if m > self.mass[best] {
                best = i;
            }
        }
        best
    }

    /// Posterior mean in ml.
    pub fn mean(&self) -> f64 {
        self.mass
            .iter()
            .enumerate()
            .map(|(i, &m)| m * self.spec.center(i))
            .sum()
    }
}

fn check_len(spec: &HistogramSpec, mass: &[f64]) -> Result<()> {
    if mass.len() != spec.bins() {
        return Err(Error::DimensionMismatch {
            expected: spec.bins(),
            actual: mass.len(),
        });
    }
    Ok(())
}
