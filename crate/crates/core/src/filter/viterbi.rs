use super::{TransitionModel, VolumeHistogram};
use crate::error::{Error, Result};

fn ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Most probable bin sequence under the HMM (max-product decoding).
///
/// The forward pass keeps, per bin, the best score of any path ending there
/// and the predecessor achieving it. Decoding starts from the best terminal
/// bin and follows the stored predecessors back to the first step. All ties
/// go to the lower bin index.
pub fn viterbi(
    logliks: &[Vec<f64>],
    trans: &TransitionModel,
    init: &VolumeHistogram,
) -> Result<Vec<usize>> {
    let n = init.len();
    if logliks.is_empty() {
        return Err(Error::InsufficientData("empty observation sequence".into()));
    }
    if trans.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: trans.len(),
        });
    }
    if let Some(bad) = logliks.iter().find(|l| l.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: bad.len(),
        });
    }

    let log_t: Vec<Vec<f64>> = trans
        .rows()
        .iter()
        .map(|r| r.iter().map(|&p| ln(p)).collect())
        .collect();
    let mut score: Vec<f64> = init
        .masses()
        .iter()
        .zip(&logliks[0])
        .map(|(&p, &l)| ln(p) + l)
        .collect();
    let mut back: Vec<Vec<u32>> = Vec::with_capacity(logliks.len() - 1);
    let mut next = vec![0.0; n];

    for ll in &logliks[1..] {
        let mut ptr = vec![0u32; n];
        for j in 0..n {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for i in 0..n {
                let s = score[i] + log_t[i][j];
                if s > best {
                    best = s;
                    arg = i;
                }
            }
            next[j] = best + ll[j];
            ptr[j] = arg as u32;
        }
        std::mem::swap(&mut score, &mut next);
        back.push(ptr);
    }

    let mut state = 0;
    for (j, &s) in score.iter().enumerate() {
        if s > score[state] {
            state = j;
        }
    }
    let mut path = vec![state; logliks.len()];
    for (t, ptr) in back.iter().enumerate().rev() {
        state = ptr[state] as usize;
        path[t] = state;
    }
    Ok(path)
}

/// Joint log-probability of a state path and the observations.
pub fn path_log_prob(
    path: &[usize],
    logliks: &[Vec<f64>],
    trans: &TransitionModel,
    init: &VolumeHistogram,
) -> f64 {
    let mut lp = ln(init.masses()[path[0]]) + logliks[0][path[0]];
    for t in 1..path.len() {
        lp += ln(trans.get(path[t - 1], path[t])) + logliks[t][path[t]];
    }
    lp
}
