//! Steady-state law of the number of live data centers.
//!
//! Centers arrive at rate `beta` and each fails at rate `lambda`, so the count
//! is an M/M/infinity birth-death chain whose stationary law is
//! Poisson(`beta / lambda`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Lu};
use crate::model::ModelParams;

/// Truncated stationary vector `probs[k] = P{N = k}` for `k <= truncation_level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDist {
    pub probs: Vec<f64>,
    pub truncation_level: usize,
    /// `P{N > truncation_level}`.
    pub tail_mass: f64,
}

impl StationaryDist {
    pub fn prob(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    /// `P{N > k}`, using the recorded tail beyond the truncation level.
    pub fn tail_above(&self, k: usize) -> f64 {
        let stored: f64 = self.probs.iter().skip(k + 1).rev().sum();
        stored + self.tail_mass
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum::<f64>() + self.tail_mass
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum()
    }

    /// Index of the largest probability (the first one on ties).
    pub fn mode(&self) -> usize {
        self.probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, &p)| {
                if p > best.1 {
                    (k, p)
                } else {
                    best
                }
            })
            .0
    }
}

/// Poisson(`ratio`) probabilities `θ_0..=θ_upto`.
///
/// Built by the multiplicative recurrence `θ_{k+1} = θ_k ratio / (k + 1)`.
/// For large `ratio`, where `exp(-ratio)` underflows, the recurrence is
/// anchored at the mode instead of at zero.
pub fn poisson_pmf(ratio: f64, upto: usize) -> Vec<f64> {
    let mut terms = vec![0.0; upto + 1];
    if ratio == 0.0 {
        terms[0] = 1.0;
        return terms;
    }
    if ratio <= 500.0 {
        terms[0] = (-ratio).exp();
        for k in 0..upto {
            terms[k + 1] = terms[k] * ratio / (k + 1) as f64;
        }
        return terms;
    }
    let mode = ratio.floor() as usize;
    let anchor = (-ratio + mode as f64 * ratio.ln() - ln_factorial(mode)).exp();
    if mode <= upto {
        terms[mode] = anchor;
        for k in (1..=mode).rev() {
            terms[k - 1] = terms[k] * k as f64 / ratio;
        }
        for k in mode..upto {
            terms[k + 1] = terms[k] * ratio / (k + 1) as f64;
        }
    } else {
        // Walk down from the mode; only the prefix is kept.
        let mut value = anchor;
        for k in (upto + 1..=mode).rev() {
            value *= k as f64 / ratio;
        }
        terms[upto] = value;
        for k in (1..=upto).rev() {
            terms[k - 1] = terms[k] * k as f64 / ratio;
        }
    }
    terms
}

fn ln_factorial(n: usize) -> f64 {
    if n < 256 {
        return (2..=n).map(|i| (i as f64).ln()).sum();
    }
    let x = n as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * x.ln() - x
        + 0.5 * (2.0 * std::f64::consts::PI * x).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}

/// Poisson(`beta / lambda`) law truncated at the smallest level whose tail
/// mass falls below `tol`.
pub fn poisson_stationary(params: &ModelParams, tol: f64) -> Result<StationaryDist> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidTolerance(tol));
    }
    let ratio = params.load();
    if ratio == 0.0 {
        return Ok(StationaryDist {
            probs: vec![1.0],
            truncation_level: 0,
            tail_mass: 0.0,
        });
    }

    // Extend well past the mode until the terms are negligible next to `tol`.
    let negligible = tol * 1e-18;
    let mut upto = (ratio + 10.0 * ratio.sqrt() + 10.0).ceil() as usize;
    let mut terms = poisson_pmf(ratio, upto);
    while *terms.last().unwrap() > negligible {
        upto *= 2;
        terms = poisson_pmf(ratio, upto);
    }
    let last = *terms.last().unwrap();
    let q = ratio / (upto + 1) as f64;
    let remainder = if q < 1.0 { last * q / (1.0 - q) } else { 0.0 };

    // suffix[k] = P{N >= k}
    let mut suffix = vec![0.0; terms.len() + 1];
    suffix[terms.len()] = remainder;
    for k in (0..terms.len()).rev() {
        suffix[k] = suffix[k + 1] + terms[k];
    }
    let level = (0..terms.len())
        .find(|&l| suffix[l + 1] < tol)
        .unwrap_or(terms.len() - 1);
    terms.truncate(level + 1);
    Ok(StationaryDist {
        probs: terms,
        truncation_level: level,
        tail_mass: suffix[level + 1],
    })
}

/// Stationary vector of the birth-death generator truncated at `level` by a
/// linear solve of `θQ = 0, θe = 1`.
///
/// The birth transition out of `level` is removed so the truncated matrix is
/// still a conservative generator.
pub fn stationary_by_solve(params: &ModelParams, level: usize) -> Result<StationaryDist> {
    let n = level + 1;
    let (lambda, beta) = (params.lambda(), params.beta());
    let mut q = DenseMatrix::zeros(n, n);
    for k in 0..n {
        let mut out = 0.0;
        if k < level {
            q[(k, k + 1)] = beta;
            out += beta;
        }
        if k > 0 {
            q[(k, k - 1)] = k as f64 * lambda;
            out += k as f64 * lambda;
        }
        q[(k, k)] = -out;
    }

    // Q^T θ^T = 0 with the last balance equation replaced by normalization.
    let mut system = q.transpose();
    let mut rhs = vec![0.0; n];
    for j in 0..n {
        system[(n - 1, j)] = 1.0;
    }
    rhs[n - 1] = 1.0;
    let theta = Lu::factor(&system)
        .and_then(|lu| lu.solve_vec(&rhs))
        .map_err(|_| Error::SingularSystem)?;
    let probs = theta.into_iter().map(|p| p.clamp(0.0, 1.0)).collect();
    Ok(StationaryDist {
        probs,
        truncation_level: level,
        tail_mass: 0.0,
    })
}

/// `P{N = 0} = exp(-beta / lambda)`.
pub fn prob_no_available_center(params: &ModelParams) -> f64 {
    (-params.load()).exp()
}
