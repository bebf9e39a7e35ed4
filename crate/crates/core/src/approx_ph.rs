//! Approximate lifetime model: a one-dimensional copy-count chain.
//!
//! The network size is replaced by its stationary law. With `k` copies a new
//! copy needs a center that does not hold the file, so the copy rate `k mu`
//! is discounted by `P{N >= k + 1}`. The resulting finite birth-death chain on
//! `{0, 1, ..., d}` is absorbed in 0, and the file lifetime is phase-type with
//! sub-generator `S` over the transient states `{1, ..., d}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix, Lu};
use crate::model::{LifetimeReport, Method, ModelParams, ReportMeta};
use crate::stationary::{poisson_stationary, StationaryDist};

/// Tail tolerance of the stationary law used by [`mean_lifetime_approx`].
pub const STATIONARY_TOL: f64 = 1e-15;

/// Effective copy rates `(mu_1, ..., mu_{d-1})`; `rates[k - 1]` is `mu_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectedRates {
    pub rates: Vec<f64>,
}

impl CorrectedRates {
    /// Up-rate out of `copies`; zero at the cap `d`.
    pub fn up_rate(&self, copies: usize) -> f64 {
        if copies == 0 {
            return 0.0;
        }
        self.rates.get(copies - 1).copied().unwrap_or(0.0)
    }
}

/// `mu_k = k mu P{N >= k + 1}` for `k = 1..d-1`.
pub fn corrected_rates(params: &ModelParams, stat: &StationaryDist) -> CorrectedRates {
    let mu = params.mu();
    let rates = (1..params.d())
        .map(|k| k as f64 * mu * stat.tail_above(k))
        .collect();
    CorrectedRates { rates }
}

/// Phase-type representation `(initial, subgen)` with exit vector `exit`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhRepresentation {
    pub initial: Vec<f64>,
    pub subgen: DenseMatrix,
    pub exit: Vec<f64>,
    /// Probability of starting already absorbed.
    pub absorb_mass: f64,
}

impl PhRepresentation {
    pub fn new(initial: Vec<f64>, subgen: DenseMatrix, exit: Vec<f64>) -> Result<Self> {
        let n = subgen.rows();
        if !subgen.is_square() {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: subgen.cols(),
            });
        }
        for len in [initial.len(), exit.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        let absorb_mass = check_initial(&initial)?;
        Ok(Self {
            initial,
            subgen,
            exit,
            absorb_mass,
        })
    }

    pub fn size(&self) -> usize {
        self.subgen.rows()
    }

    /// Largest `|S e + S^0|` entry.
    pub fn conservation_residual(&self) -> f64 {
        self.subgen
            .row_sums()
            .iter()
            .zip(&self.exit)
            .fold(0.0, |acc, (r, e)| acc.max((r + e).abs()))
    }

    /// Vectors `v_k = (-1)^k k! S^{-k} e` for `k = 1..=count`, by repeated solves.
    pub fn moment_vectors(&self, count: usize) -> Result<Vec<Vec<f64>>> {
        let lu = Lu::factor(&self.subgen).map_err(|_| Error::SingularSubgenerator)?;
        let mut out = Vec::with_capacity(count);
        let mut v = vec![1.0; self.size()];
        for k in 1..=count {
            let rhs: Vec<f64> = v.iter().map(|x| -(k as f64) * x).collect();
            v = lu
                .solve_vec(&rhs)
                .map_err(|_| Error::SingularSubgenerator)?;
            out.push(v.clone());
        }
        Ok(out)
    }
}

pub(crate) fn check_initial(initial: &[f64]) -> Result<f64> {
    if initial.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidDistribution(
            "negative or non-finite initial mass".into(),
        ));
    }
    let total: f64 = initial.iter().sum();
    if total > 1.0 + 1e-12 {
        return Err(Error::InvalidDistribution(format!(
            "initial mass sums to {total} > 1"
        )));
    }
    Ok((1.0 - total).max(0.0))
}

/// Tridiagonal `S` over copy counts `1..=d`: up-rate `mu_k` out of `k < d`,
/// down-rate `k lambda` out of `k`, and exit `(lambda, 0, ..., 0)`.
pub fn build_absorbing_generator(
    params: &ModelParams,
    rates: &CorrectedRates,
    initial: &[f64],
) -> Result<PhRepresentation> {
    let d = params.d();
    if initial.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: initial.len(),
        });
    }
    if rates.rates.len() + 1 != d {
        return Err(Error::DimensionMismatch {
            expected: d - 1,
            found: rates.rates.len(),
        });
    }
    let lambda = params.lambda();
    let mut s = DenseMatrix::zeros(d, d);
    for i in 0..d {
        let copies = i + 1;
        let down = copies as f64 * lambda;
        let up = if copies < d {
            rates.up_rate(copies)
        } else {
            0.0
        };
        if i > 0 {
            s[(i, i - 1)] = down;
        }
        if copies < d {
            s[(i, i + 1)] = up;
        }
        s[(i, i)] = -(down + up);
    }
    let mut exit = vec![0.0; d];
    exit[0] = lambda;
    PhRepresentation::new(initial.to_vec(), s, exit)
}

/// `E[eta^k] = (-1)^k k! initial S^{-k} e`, via `k` successive solves.
pub fn ph_moment(rep: &PhRepresentation, k: usize) -> Result<f64> {
    if k == 0 {
        return Ok(rep.initial.iter().sum::<f64>() + rep.absorb_mass);
    }
    let vectors = rep.moment_vectors(k)?;
    Ok(dot(&rep.initial, &vectors[k - 1]))
}

/// First `count` raw moments.
pub fn ph_moments(rep: &PhRepresentation, count: usize) -> Result<Vec<f64>> {
    Ok(rep
        .moment_vectors(count)?
        .iter()
        .map(|v| dot(&rep.initial, v))
        .collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `S^{-1}` assembled entry by entry from its birth-death closed form.
///
/// With `w(i, k) = (i-1)! lambda^{i-1} mu_i mu_{i+1} ... mu_{k-1}`:
///
/// * `s[j][k] = -sum_{i=1..j} w(i, k) / (k! lambda^k)` for `j < k`,
/// * `s[j][k] = -sum_{i=1..k} w(i, k) / (k! lambda^k)` for `j >= k`,
///
/// so the first column is `-1/lambda` throughout. Kept for cross-checking the
/// numeric inverse only; moments always go through linear solves.
pub fn closed_form_s_inverse(params: &ModelParams, rates: &CorrectedRates) -> DenseMatrix {
    let d = params.d();
    let lambda = params.lambda();
    let mut inv = DenseMatrix::zeros(d, d);
    for k in 1..=d {
        // k! lambda^k, accumulated to avoid overflow in the intermediate factorial
        let denom: f64 = (1..=k).map(|i| i as f64 * lambda).product();
        let mut partial = 0.0;
        for j in 1..=d {
            if j <= k {
                let fact_pow: f64 = (1..j).map(|i| i as f64 * lambda).product();
                let rate_prod: f64 = (j..k).map(|m| rates.up_rate(m)).product();
                partial += fact_pow * rate_prod;
            }
            inv[(j - 1, k - 1)] = -partial / denom;
        }
    }
    inv
}

/// An entry where the closed form and the numeric inverse disagree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryMismatch {
    pub row: usize,
    pub col: usize,
    pub closed_form: f64,
    pub numeric: f64,
}

/// Compares [`closed_form_s_inverse`] with the LU inverse of `S`; entries
/// differing by more than `tol` relative to the matrix scale are returned
/// with 1-based indices.
pub fn closed_form_mismatches(
    params: &ModelParams,
    rates: &CorrectedRates,
    tol: f64,
) -> Result<Vec<EntryMismatch>> {
    let d = params.d();
    let rep = build_absorbing_generator(params, rates, &default_initial(d))?;
    let numeric = linalg::invert(&rep.subgen).map_err(|_| Error::SingularSubgenerator)?;
    let closed = closed_form_s_inverse(params, rates);
    let scale = numeric.max_abs().max(f64::MIN_POSITIVE);
    let mut out = Vec::new();
    for i in 0..d {
        for j in 0..d {
            if (closed[(i, j)] - numeric[(i, j)]).abs() > tol * scale {
                out.push(EntryMismatch {
                    row: i + 1,
                    col: j + 1,
                    closed_form: closed[(i, j)],
                    numeric: numeric[(i, j)],
                });
            }
        }
    }
    Ok(out)
}

/// One copy at time zero.
pub fn default_initial(d: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[0] = 1.0;
    v
}

/// Stationary law, corrected rates, sub-generator and moments in one pass.
///
/// `initial = None` starts from a single copy. Reports the first two moments.
pub fn mean_lifetime_approx(
    params: &ModelParams,
    initial: Option<&[f64]>,
) -> Result<LifetimeReport> {
    mean_lifetime_approx_moments(params, initial, 2)
}

pub fn mean_lifetime_approx_moments(
    params: &ModelParams,
    initial: Option<&[f64]>,
    moment_count: usize,
) -> Result<LifetimeReport> {
    let stat = poisson_stationary(params, STATIONARY_TOL)?;
    let rates = corrected_rates(params, &stat);
    let init = match initial {
        Some(v) => v.to_vec(),
        None => default_initial(params.d()),
    };
    let rep = build_absorbing_generator(params, &rates, &init)?;
    let moments = ph_moments(&rep, moment_count.max(1))?;
    let meta = ReportMeta {
        truncation_level: Some(stat.truncation_level),
        tolerance: Some(STATIONARY_TOL),
        ..ReportMeta::default()
    };
    Ok(LifetimeReport::analytic(Method::ApproxPh, moments, meta))
}
