use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HistogramSpec;
use crate::error::{Error, Result};
use crate::pourlog::PourLog;

/// Laplace pseudo-count added to every allowed (non-decreasing) transition.
pub const DEFAULT_SMOOTHING: f64 = 1.0;

/// Row-stochastic matrix, `rows[i][j] = P(v_t in bin j | v_{t-1} in bin i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    spec: HistogramSpec,
    rows: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct TransitionFile {
    bins: usize,
    v_max_ml: f64,
    rows: Vec<Vec<f64>>,
}

impl TransitionModel {
    pub fn new(spec: HistogramSpec, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = spec.bins();
        if rows.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: rows.len(),
            });
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: row.len(),
                });
            }
            if row.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::InvalidTable(format!("row {i} has a negative entry")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidTable(format!("row {i} sums to {total}")));
            }
        }
        Ok(Self { spec, rows })
    }

    pub fn identity(spec: HistogramSpec) -> Self {
        let n = spec.bins();
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { spec, rows }
    }

    /// Prior used before any data has been fitted: stay with probability
    /// `stay`, otherwise move up to any higher bin uniformly.
    pub fn bootstrap(spec: HistogramSpec, stay: f64) -> Self {
        let n = spec.bins();
        let rows = (0..n)
            .map(|i| {
                let higher = n - 1 - i;
                (0..n)
                    .map(|j| match j.cmp(&i) {
                        std::cmp::Ordering::Equal if higher == 0 => 1.0,
                        std::cmp::Ordering::Equal => stay,
                        std::cmp::Ordering::Greater => (1.0 - stay) / higher as f64,
                        std::cmp::Ordering::Less => 0.0,
                    })
                    .collect()
            })
            .collect();
        Self { spec, rows }
    }

    pub fn spec(&self) -> &HistogramSpec {
        &self.spec
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.rows[from][to]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TransitionFile {
            bins: self.spec.bins(),
            v_max_ml: self.spec.v_max_ml(),
            rows: self.rows.clone(),
        })
        .expect("plain numbers serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: TransitionFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidTable(format!("transition JSON: {e}")))?;
        Self::new(HistogramSpec::new(f.bins, f.v_max_ml)?, f.rows)
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

/// Counts bin-to-bin transitions between consecutive samples of each volume
/// series (ml, one sample per filter tick). Only non-decreasing transitions
/// are allowed; decreasing pairs are ignored. Each row gets `smoothing`
/// pseudo-counts on its allowed support, except rows never visited, which
/// become self-loops.
pub fn fit_transition_series<'a, I>(series: I, spec: &HistogramSpec, smoothing: f64) -> Result<TransitionModel>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    if !(smoothing >= 0.0) {
        return Err(Error::InvalidTable(format!("smoothing must be >= 0, got {smoothing}")));
    }
    let n = spec.bins();
    let mut counts = vec![vec![0.0f64; n]; n];
    let mut visited = vec![false; n];
    let mut any = false;
    for s in series {
        if s.len() < 2 {
            continue;
        }
        any = true;
        for w in s.windows(2) {
            let (i, j) = (spec.bin_of(w[0]), spec.bin_of(w[1]));
            visited[i] = true;
            if j >= i {
                counts[i][j] += 1.0;
            }
        }
    }
    if !any {
        return Err(Error::EmptyTrainingSet);
    }
    let rows = counts
        .into_iter()
        .enumerate()
        .map(|(i, mut row)| {
            let data: f64 = row.iter().sum();
            if !visited[i] || data == 0.0 {
                let mut r = vec![0.0; n];
                r[i] = 1.0;
                return r;
            }
            for c in row.iter_mut().skip(i) {
                *c += smoothing;
            }
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|c| *c /= total);
            row
        })
        .collect();
    TransitionModel::new(spec.clone(), rows)
}

/// Fits the transition model from logged pours, using each log's ground-truth
/// column (relabeled `gt_ml` when present, simulator truth otherwise).
pub fn fit_transition(logs: &[PourLog], spec: &HistogramSpec, smoothing: f64) -> Result<TransitionModel> {
    if logs.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let series: Vec<Vec<f64>> = logs.iter().map(|l| l.training_volumes()).collect();
    fit_transition_series(series.iter().map(Vec::as_slice), spec, smoothing)
}
