//! Histogram hidden Markov model over the target volume.
//!
//! The belief is a histogram over `[0, v_max]` ml. Each tick the belief is
//! pushed through a row-stochastic transition matrix and reweighted by a
//! per-bin observation log-likelihood. The point estimate handed to the
//! controller is the posterior median. Offline, max-product (Viterbi)
//! decoding recovers the most probable volume trajectory for relabeling.

mod histogram;
mod transition;
mod viterbi;

pub use histogram::{HistogramSpec, VolumeHistogram};
pub use transition::{fit_transition, fit_transition_series, TransitionModel, DEFAULT_SMOOTHING};
pub use viterbi::{path_log_prob, viterbi};

use crate::error::{Error, Result};

/// HMM tick rate: one step per camera frame.
pub const TICK_RATE_HZ: f64 = 30.0;

/// Posterior median with the histogram it was taken from.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeEstimate {
    pub volume_ml: f64,
    pub posterior: VolumeHistogram,
    pub tick: u64,
}

impl VolumeEstimate {
    pub fn from_posterior(posterior: VolumeHistogram, tick: u64) -> Self {
        Self {
            volume_ml: median_estimate(&posterior),
            posterior,
            tick,
        }
    }
}

/// One-step prediction: `out[j] = sum_i T[i][j] * belief[i]`.
pub fn predict(belief: &VolumeHistogram, trans: &TransitionModel) -> Result<VolumeHistogram> {
    let n = belief.len();
    if trans.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: trans.len(),
        });
    }
    let mut out = vec![0.0; n];
    for (row, &b) in trans.rows().iter().zip(belief.masses()) {
        if b == 0.0 {
            continue;
        }
        for (o, &t) in out.iter_mut().zip(row) {
            *o += t * b;
        }
    }
    VolumeHistogram::normalized(belief.spec().clone(), out)
}

/// Bayes update `posterior[i] ∝ exp(loglik[i]) * belief[i]`, evaluated in log
/// space with the maximum subtracted before exponentiating.
pub fn update(belief: &VolumeHistogram, loglik: &[f64]) -> Result<VolumeHistogram> {
    let n = belief.len();
    if loglik.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: loglik.len(),
        });
    }
    let logpost: Vec<f64> = belief
        .masses()
        .iter()
        .zip(loglik)
        .map(|(&b, &l)| if b > 0.0 { b.ln() + l } else { f64::NEG_INFINITY })
        .collect();
    let max = logpost.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateBelief);
    }
    let post = logpost.iter().map(|&l| (l - max).exp()).collect();
    VolumeHistogram::normalized(belief.spec().clone(), post).map_err(|_| Error::DegenerateBelief)
}

/// Center of the first bin whose cumulative mass reaches one half. Summation
/// round-off below 1e-12 does not count against reaching it.
pub fn median_estimate(belief: &VolumeHistogram) -> f64 {
    let mut acc = 0.0;
    for (i, &m) in belief.masses().iter().enumerate() {
        acc += m;
        if acc >= 0.5 - 1e-12 {
            return belief.spec().center(i);
        }
    }
    belief.spec().center(belief.len() - 1)
}

/// Forward filtering over a whole sequence. The first likelihood is applied to
/// `init` directly; every later one follows a prediction step.
pub fn forward(
    init: &VolumeHistogram,
    trans: &TransitionModel,
    logliks: &[Vec<f64>],
) -> Result<Vec<VolumeHistogram>> {
    let mut out: Vec<VolumeHistogram> = Vec::with_capacity(logliks.len());
    for (t, ll) in logliks.iter().enumerate() {
        let prior = if t == 0 {
            init.clone()
        } else {
            predict(&out[t - 1], trans)?
        };
        out.push(update(&prior, ll)?);
    }
    Ok(out)
}

/// Online filter state for a single pour.
#[derive(Debug, Clone)]
pub struct HistogramFilter {
    trans: TransitionModel,
    belief: VolumeHistogram,
    tick: u64,
}

impl HistogramFilter {
    pub fn new(trans: TransitionModel, init: VolumeHistogram) -> Result<Self> {
        if trans.len() != init.len() {
            return Err(Error::DimensionMismatch {
                expected: trans.len(),
                actual: init.len(),
            });
        }
        Ok(Self {
            trans,
            belief: init,
            tick: 0,
        })
    }

    /// Starts from an empty target: all mass in bin 0.
    pub fn empty_target(trans: TransitionModel) -> Self {
        let init = VolumeHistogram::point_mass(trans.spec().clone(), 0);
        Self::new(trans, init).expect("same spec")
    }

    pub fn belief(&self) -> &VolumeHistogram {
        &self.belief
    }

    pub fn spec(&self) -> &HistogramSpec {
        self.trans.spec()
    }

    /// Incorporates one observation log-likelihood profile.
    pub fn step(&mut self, loglik: &[f64]) -> Result<VolumeEstimate> {
        let prior = if self.tick == 0 {
            self.belief.clone()
        } else {
            predict(&self.belief, &self.trans)?
        };
        self.belief = update(&prior, loglik)?;
        let est = VolumeEstimate::from_posterior(self.belief.clone(), self.tick);
        self.tick += 1;
        Ok(est)
    }
}
