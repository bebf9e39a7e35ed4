//! Exact event-jump simulation of the file lifetime.
//!
//! Two chains are simulated: the physical `(centers, copies)` process and the
//! one-dimensional copy-count chain with corrected copy rates. Each
//! replication draws from its own ChaCha stream keyed by `(seed, index)`, so
//! results do not depend on how replications are scheduled.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx_ph::{corrected_rates, CorrectedRates, STATIONARY_TOL};
use crate::error::{Error, Result};
use crate::model::{LifetimeReport, Method, ModelParams, ReportMeta};
use crate::stationary::{poisson_pmf, poisson_stationary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimModel {
    Physical2d,
    Corrected1d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimInitial {
    /// `(centers, copies)`; `centers` is ignored by the one-dimensional chain.
    Fixed { centers: usize, copies: usize },
    /// One copy in a network drawn from the conditioned stationary law.
    StationaryOneCopy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub params: ModelParams,
    pub model: SimModel,
    pub samples: u64,
    pub seed: u64,
    pub initial: SimInitial,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidInitialState("samples must be >= 1".into()));
        }
        if let SimInitial::Fixed { centers, copies } = self.initial {
            let d = self.params.d();
            let ok = match self.model {
                SimModel::Physical2d => copies >= 1 && copies <= centers && copies <= d,
                SimModel::Corrected1d => copies >= 1 && copies <= d,
            };
            if !ok {
                return Err(Error::InvalidInitialState(format!(
                    "({centers}, {copies}) with d = {d} for {:?}",
                    self.model
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub mean: f64,
    pub second_moment: f64,
    pub std_error: f64,
    /// Standard error of the second-moment estimate.
    pub second_moment_se: f64,
    pub samples: u64,
    pub seed: u64,
}

impl SimResult {
    /// Two-sided normal confidence interval at level `z` standard errors.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (
            self.mean - z * self.std_error,
            self.mean + z * self.std_error,
        )
    }

    /// `|value - mean| <= z * std_error`.
    pub fn covers(&self, value: f64, z: f64) -> bool {
        (value - self.mean).abs() <= z * self.std_error
    }

    pub fn into_report(self) -> LifetimeReport {
        LifetimeReport {
            method: Method::Simulation,
            moments: vec![self.mean, self.second_moment],
            mean: self.mean,
            std_error: self.std_error,
            meta: ReportMeta {
                samples: Some(self.samples),
                seed: Some(self.seed),
                ..ReportMeta::default()
            },
        }
    }
}

/// Transition out of a physical state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhysicalEvent {
    /// A center holding a copy fails: `(k, j) -> (k-1, j-1)`.
    HolderFailure,
    /// A center without the file fails: `(k, j) -> (k-1, j)`.
    OtherFailure,
    /// A new copy completes: `(k, j) -> (k, j+1)`.
    CopyCompleted,
    /// A center joins: `(k, j) -> (k+1, j)`.
    Arrival,
}

impl PhysicalEvent {
    pub const ALL: [PhysicalEvent; 4] = [
        Self::HolderFailure,
        Self::OtherFailure,
        Self::CopyCompleted,
        Self::Arrival,
    ];

    pub fn apply(self, (k, j): (usize, usize)) -> (usize, usize) {
        match self {
            Self::HolderFailure => (k - 1, j - 1),
            Self::OtherFailure => (k - 1, j),
            Self::CopyCompleted => (k, j + 1),
            Self::Arrival => (k + 1, j),
        }
    }
}

/// Rates of [`PhysicalEvent::ALL`] out of `(centers, copies)`.
pub fn physical_rates(params: &ModelParams, centers: usize, copies: usize) -> [f64; 4] {
    let (lambda, mu) = (params.lambda(), params.mu());
    let copy = if copies < centers.min(params.d()) {
        copies as f64 * mu
    } else {
        0.0
    };
    [
        copies as f64 * lambda,
        (centers - copies) as f64 * lambda,
        copy,
        params.beta(),
    ]
}

/// Inverse-CDF sampler for Poisson(`beta / lambda`) conditioned on `>= 1`.
#[derive(Debug, Clone)]
pub struct AlphaSampler {
    cdf: Vec<f64>,
}

impl AlphaSampler {
    pub fn new(params: &ModelParams) -> Self {
        let ratio = params.load();
        if ratio == 0.0 {
            // Limit of the conditioned law as arrivals vanish.
            return Self {
                cdf: vec![0.0, 1.0],
            };
        }
        let level = poisson_stationary(params, 1e-16)
            .map(|s| s.truncation_level)
            .unwrap_or(1)
            .max(1);
        let theta = poisson_pmf(ratio, level);
        let nonempty = -(-ratio).exp_m1();
        let mut cdf = Vec::with_capacity(level + 1);
        cdf.push(0.0);
        let mut acc = 0.0;
        for t in &theta[1..] {
            acc += t / nonempty;
            cdf.push(acc);
        }
        Self { cdf }
    }

    /// Draws the initial network size `k >= 1`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        // First k with cdf[k] > u; mass beyond the table goes to the last level.
        self.cdf[1..]
            .iter()
            .position(|&c| c > u)
            .map_or(self.cdf.len() - 1, |i| i + 1)
    }
}

/// Substream `index` of `seed`.
pub fn replication_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One draw `(k, 1)` of the default initial state.
pub fn sample_initial_from_alpha(params: &ModelParams, seed: u64) -> (usize, usize) {
    let mut rng = replication_rng(seed, 0);
    (AlphaSampler::new(params).sample(&mut rng), 1)
}

fn exp_time<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let e: f64 = rng.sample(Exp1);
    e / rate
}

/// Absorption time of the physical chain from `(centers, copies)`.
pub fn physical_lifetime<R: Rng + ?Sized>(
    params: &ModelParams,
    mut state: (usize, usize),
    rng: &mut R,
) -> f64 {
    let mut t = 0.0;
    while state.1 > 0 {
        let rates = physical_rates(params, state.0, state.1);
        let total: f64 = rates.iter().sum();
        t += exp_time(rng, total);
        let mut pick = rng.gen::<f64>() * total;
        let mut event = PhysicalEvent::Arrival;
        for (ev, r) in PhysicalEvent::ALL.iter().zip(rates) {
            if pick < r {
                event = *ev;
                break;
            }
            pick -= r;
        }
        state = event.apply(state);
    }
    t
}

/// Absorption time of the corrected copy-count chain from `copies`.
pub fn corrected_lifetime<R: Rng + ?Sized>(
    params: &ModelParams,
    rates: &CorrectedRates,
    mut copies: usize,
    rng: &mut R,
) -> f64 {
    let d = params.d();
    let lambda = params.lambda();
    let mut t = 0.0;
    while copies > 0 {
        let down = copies as f64 * lambda;
        let up = if copies < d {
            rates.up_rate(copies)
        } else {
            0.0
        };
        let total = down + up;
        t += exp_time(rng, total);
        if rng.gen::<f64>() * total < down {
            copies -= 1;
        } else {
            copies += 1;
        }
    }
    t
}

/// Runs `config.samples` independent replications and aggregates them.
pub fn simulate_lifetime(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let params = config.params;
    let alpha =
        matches!(config.initial, SimInitial::StationaryOneCopy).then(|| AlphaSampler::new(&params));
    let rates = match config.model {
        SimModel::Corrected1d => Some(corrected_rates(
            &params,
            &poisson_stationary(&params, STATIONARY_TOL)?,
        )),
        SimModel::Physical2d => None,
    };

    let times: Vec<f64> = (0..config.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = replication_rng(config.seed, i);
            let start = match (config.initial, &alpha) {
                (SimInitial::Fixed { centers, copies }, _) => (centers, copies),
                (SimInitial::StationaryOneCopy, Some(sampler)) => (sampler.sample(&mut rng), 1),
                (SimInitial::StationaryOneCopy, None) => unreachable!("sampler built above"),
            };
            match &rates {
                None => physical_lifetime(&params, start, &mut rng),
                Some(r) => corrected_lifetime(&params, r, start.1, &mut rng),
            }
        })
        .collect();

    Ok(summarize(&times, config.samples, config.seed))
}

fn summarize(times: &[f64], samples: u64, seed: u64) -> SimResult {
    let n = times.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    let squares: Vec<f64> = times.iter().map(|t| t * t).collect();
    let second_moment = squares.iter().sum::<f64>() / n;
    let (var, var2) = if times.len() > 1 {
        (
            times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0),
            squares
                .iter()
                .map(|s| (s - second_moment).powi(2))
                .sum::<f64>()
                / (n - 1.0),
        )
    } else {
        (0.0, 0.0)
    };
    SimResult {
        mean,
        second_moment,
        std_error: (var / n).sqrt(),
        second_moment_se: (var2 / n).sqrt(),
        samples,
        seed,
    }
}
