//! Model-free comparison estimator: a monotone map from the number of inner
//! liquid pixels to volume, scored with a Gaussian residual model and fed
//! through the same histogram filter as the geometric likelihood.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::closed_loop::LikelihoodModel;
use crate::error::{Error, Result};
use crate::filter::HistogramSpec;
use crate::observation::PixelLabelMap;
use crate::pourlog::PourLog;

/// Lower bound on the residual scale, ml.
pub const SIGMA_FLOOR_ML: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelCountRegressor {
    /// `(count, ml)`, strictly increasing in count, non-decreasing in ml.
    breakpoints: Vec<[f64; 2]>,
    sigma_ml: f64,
}

impl PixelCountRegressor {
    pub fn new(breakpoints: Vec<[f64; 2]>, sigma_ml: f64) -> Result<Self> {
        let r = Self { breakpoints, sigma_ml };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<()> {
        if self.breakpoints.is_empty() {
            return Err(Error::InvalidConfig("regressor has no breakpoints".into()));
        }
        if !(self.sigma_ml > 0.0 && self.sigma_ml.is_finite()) {
            return Err(Error::InvalidConfig(format!("regressor sigma must be positive, got {}", self.sigma_ml)));
        }
        if self.breakpoints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("regressor breakpoints must be finite".into()));
        }
        for w in self.breakpoints.windows(2) {
            if !(w[1][0] > w[0][0] && w[1][1] >= w[0][1]) {
                return Err(Error::InvalidConfig(format!(
                    "regressor breakpoints must increase: {:?} then {:?}",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }

    pub fn breakpoints(&self) -> &[[f64; 2]] {
        &self.breakpoints
    }

    pub fn sigma_ml(&self) -> f64 {
        self.sigma_ml
    }

    /// Piecewise-linear interpolation, constant beyond the end breakpoints.
    pub fn predict(&self, count: f64) -> f64 {
        let bp = &self.breakpoints;
        let k = bp.partition_point(|p| p[0] <= count);
        if k == 0 {
            return bp[0][1];
        }
        if k == bp.len() {
            return bp[k - 1][1];
        }
        let ([x0, y0], [x1, y1]) = (bp[k - 1], bp[k]);
        y0 + (y1 - y0) * (count - x0) / (x1 - x0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("regressor serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("regressor JSON: {e}")))?;
        r.validate()?;
        Ok(r)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Least-squares isotonic fit of volume against count (pool adjacent
/// violators), with one breakpoint per distinct count.
pub fn fit_regressor_pairs(pairs: &[(f64, f64)]) -> Result<PixelCountRegressor> {
    let mut sorted: Vec<(f64, f64)> = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // (count, sum, weight) per distinct count
    let mut groups: Vec<(f64, f64, f64)> = Vec::new();
    for &(c, v) in &sorted {
        match groups.last_mut() {
            Some(g) if g.0 == c => {
                g.1 += v;
                g.2 += 1.0;
            }
            _ => groups.push((c, v, 1.0)),
        }
    }
    if groups.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 distinct pixel counts, got {}",
            groups.len()
        )));
    }

    // blocks of (mean, weight, number of groups)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(groups.len());
    for &(_, sum, w) in &groups {
        blocks.push((sum / w, w, 1));
        while blocks.len() > 1 && blocks[blocks.len() - 2].0 > blocks[blocks.len() - 1].0 {
            let (m1, w1, n1) = blocks.pop().expect("len > 1");
            let (m0, w0, n0) = blocks.pop().expect("len > 1");
            let w = w0 + w1;
            blocks.push(((m0 * w0 + m1 * w1) / w, w, n0 + n1));
        }
    }
    let fitted = blocks.iter().flat_map(|&(m, _, n)| std::iter::repeat_n(m, n));
    let breakpoints: Vec<[f64; 2]> = groups.iter().zip(fitted).map(|(g, m)| [g.0, m]).collect();

    let mut reg = PixelCountRegressor {
        breakpoints,
        sigma_ml: SIGMA_FLOOR_ML,
    };
    let sse: f64 = sorted.iter().map(|&(c, v)| (reg.predict(c) - v).powi(2)).sum();
    reg.sigma_ml = (sse / sorted.len() as f64).sqrt().max(SIGMA_FLOOR_ML);
    Ok(reg)
}

/// Fits on every (liquid-pixel count, volume) row of the logs, using
/// relabeled ground truth where present.
pub fn fit_regressor(logs: &[PourLog]) -> Result<PixelCountRegressor> {
    let pairs: Vec<(f64, f64)> = logs
        .iter()
        .flat_map(|log| {
            log.records
                .iter()
                .zip(log.training_volumes())
                .map(|(r, v)| (r.liq_px as f64, v))
        })
        .collect();
    fit_regressor_pairs(&pairs)
}

/// Gaussian log-density of each bin center around the regressed volume.
pub fn regressor_loglik(count: usize, regressor: &PixelCountRegressor, spec: &HistogramSpec) -> Vec<f64> {
    let mu = regressor.predict(count as f64);
    let s = regressor.sigma_ml;
    let norm = -(s * (2.0 * std::f64::consts::PI).sqrt()).ln();
    (0..spec.bins())
        .map(|i| {
            let z = (spec.center(i) - mu) / s;
            norm - 0.5 * z * z
        })
        .collect()
}

/// [`regressor_loglik`] on the inner liquid-pixel count of each frame.
#[derive(Debug, Clone)]
pub struct PixelCount {
    regressor: PixelCountRegressor,
    spec: HistogramSpec,
}

impl PixelCount {
    pub fn new(regressor: PixelCountRegressor, spec: HistogramSpec) -> Self {
        Self { regressor, spec }
    }

    pub fn regressor(&self) -> &PixelCountRegressor {
        &self.regressor
    }
}

impl LikelihoodModel for PixelCount {
    fn spec(&self) -> &HistogramSpec {
        &self.spec
    }

    fn loglik(&self, obs: &PixelLabelMap) -> Result<Vec<f64>> {
        Ok(regressor_loglik(obs.inner_liquid_count(), &self.regressor, &self.spec))
    }
}

/// Spearman rank correlation, with tied values given their average rank.
/// `None` when either side is constant or the lengths differ.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - mean) * (y - mean);
        saa += (x - mean).powi(2);
        sbb += (y - mean).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            out[i] = rank;
        }
        start = end;
    }
    out
}
