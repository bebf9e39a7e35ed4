//! Model parameters and the lifetime report shared by every solver.
//!
//! A network of identical data centers, each failing after an exponential
//! lifetime with rate `lambda`, is fed by Poisson arrivals of new centers at
//! rate `beta`. A tagged file is kept in at most `d` centers; each existing
//! copy seeds a new one at rate `mu` while a center without the file exists.
//! When a center fails, the copy it held is lost.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on `d` applied by [`ModelParams::new`].
pub const DEFAULT_MAX_D: usize = 10_000;

/// Validated rates and replication threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    lambda: f64,
    beta: f64,
    mu: f64,
    d: usize,
}

impl ModelParams {
    pub fn new(lambda: f64, beta: f64, mu: f64, d: usize) -> Result<Self> {
        validate_params(lambda, beta, mu, d)
    }

    /// Same as [`ModelParams::new`] with a caller-chosen bound on `d`.
    pub fn with_max_d(lambda: f64, beta: f64, mu: f64, d: usize, max_d: usize) -> Result<Self> {
        for (field, value) in [("lambda", lambda), ("beta", beta), ("mu", mu)] {
            if !value.is_finite() {
                return Err(Error::NonFiniteInput { field });
            }
        }
        if lambda <= 0.0 {
            return Err(Error::NonPositiveLambda(lambda));
        }
        if beta < 0.0 {
            return Err(Error::NegativeRate {
                field: "beta",
                value: beta,
            });
        }
        if mu < 0.0 {
            return Err(Error::NegativeRate {
                field: "mu",
                value: mu,
            });
        }
        if d == 0 {
            return Err(Error::ZeroD);
        }
        if d > max_d {
            return Err(Error::DTooLarge { d, max: max_d });
        }
        Ok(Self {
            lambda,
            beta,
            mu,
            d,
        })
    }

    /// Re-runs validation; returns an equal value for any valid input.
    pub fn validate(&self) -> Result<Self> {
        validate_params(self.lambda, self.beta, self.mu, self.d)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Mean number of centers in steady state, `beta / lambda`.
    pub fn load(&self) -> f64 {
        self.beta / self.lambda
    }

    /// Copy of these parameters with a different replication threshold.
    pub fn with_d(&self, d: usize) -> Result<Self> {
        validate_params(self.lambda, self.beta, self.mu, d)
    }
}

impl<'de> Deserialize<'de> for ModelParams {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            lambda: f64,
            beta: f64,
            mu: f64,
            d: usize,
        }
        let raw = Raw::deserialize(de)?;
        validate_params(raw.lambda, raw.beta, raw.mu, raw.d).map_err(serde::de::Error::custom)
    }
}

/// Checks raw inputs and builds [`ModelParams`], naming the first bad field.
pub fn validate_params(lambda: f64, beta: f64, mu: f64, d: usize) -> Result<ModelParams> {
    ModelParams::with_max_d(lambda, beta, mu, d, DEFAULT_MAX_D)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ApproxPh,
    Qbd,
    Simulation,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::ApproxPh => "approx_ph",
            Method::Qbd => "qbd",
            Method::Simulation => "simulation",
        })
    }
}

/// One point of the truncation-doubling sequence of the QBD solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelEstimate {
    pub l_max: usize,
    pub mean: f64,
}

/// How a report was produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub truncation_level: Option<usize>,
    pub tolerance: Option<f64>,
    pub samples: Option<u64>,
    pub seed: Option<u64>,
    /// Every truncation level the QBD solver evaluated, in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<LevelEstimate>,
}

/// Raw lifetime moments. `moments[0]` is the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeReport {
    pub method: Method,
    pub moments: Vec<f64>,
    pub mean: f64,
    pub std_error: f64,
    pub meta: ReportMeta,
}

impl LifetimeReport {
    pub fn analytic(method: Method, moments: Vec<f64>, meta: ReportMeta) -> Self {
        let mean = moments.first().copied().unwrap_or(f64::NAN);
        Self {
            method,
            moments,
            mean,
            std_error: 0.0,
            meta,
        }
    }

    pub fn second_moment(&self) -> Option<f64> {
        self.moments.get(1).copied()
    }

    pub fn variance(&self) -> Option<f64> {
        self.second_moment().map(|m2| m2 - self.mean * self.mean)
    }

    /// True when the moment list is consistent with a nonnegative random time.
    pub fn is_consistent(&self) -> bool {
        let first_ok = self.moments.first().is_some_and(|&m| m == self.mean);
        let nonneg = self.moments.iter().all(|&m| m >= 0.0);
        let variance_ok = match self.second_moment() {
            Some(m2) => m2 >= self.mean * self.mean * (1.0 - 1e-12),
            None => true,
        };
        first_ok && nonneg && variance_ok && self.std_error >= 0.0
    }
}
