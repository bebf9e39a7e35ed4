//! Exact two-dimensional model: (centers, copies) as a level-dependent QBD.
//!
//! Level `k >= 1` is the number of live centers and the phase `j` in
//! `1..=min(k, d)` the number of copies of the tagged file. All zero-copy
//! states are collapsed into one absorbing state, so the lifetime is the
//! absorption time of the transient generator `T`.
//!
//! From state `(k, j)`:
//!
//! * a copy-holding center fails at rate `j lambda`, to `(k-1, j-1)`
//!   (absorption when `j = 1`);
//! * a center without the file fails at rate `(k-j) lambda`, to `(k-1, j)`;
//! * a copy completes at rate `j mu`, to `(k, j+1)`, while `j < min(k, d)`;
//! * a center arrives at rate `beta`, to `(k+1, j)`.
//!
//! `T` is solved through the block LU (RG) factorization
//! `T = (I - R_L) U_D (I - G_U)` with
//! `U_0 = A_{1,1}`, `U_k = A_{k+1,k+1} + A_{k+1,k} (-U_{k-1})^{-1} A_{k,k+1}`,
//! `R_k = A_{k+1,k} (-U_{k-1})^{-1}` and `G_l = (-U_l)^{-1} A_{l+1,l+2}`.
//! The inverse factors are never formed; solves run a forward sweep over the
//! `R` blocks, the diagonal `U` solves, then a backward sweep over `G`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Lu};
use crate::model::{LevelEstimate, LifetimeReport, Method, ModelParams, ReportMeta};
use crate::stationary::{poisson_pmf, poisson_stationary};

pub const DEFAULT_LEVEL_CAP: usize = 16_384;

/// `(sub, diag, super)` blocks of one block row.
pub type BlockRow = (Option<DenseMatrix>, DenseMatrix, Option<DenseMatrix>);

/// Blocks touching one level. `down` is `A_{k,k-1}`, `local` is `A_{k,k}` and
/// `up` is `A_{k,k+1}`; `exit` is the level's slice of `T^0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelBlocks {
    pub down: Option<DenseMatrix>,
    pub local: DenseMatrix,
    pub up: Option<DenseMatrix>,
    pub exit: Vec<f64>,
}

/// `T` truncated at `l_max`. The arrival transition out of the top level is
/// removed (reflection), so rows still conserve probability.
#[derive(Debug, Clone, PartialEq)]
pub struct QbdBlocks {
    params: ModelParams,
    l_max: usize,
    levels: Vec<LevelBlocks>,
}

impl QbdBlocks {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn phase_count(&self, level: usize) -> usize {
        level.min(self.params.d())
    }

    /// Blocks of `level` (1-based).
    pub fn level(&self, level: usize) -> &LevelBlocks {
        &self.levels[level - 1]
    }

    pub fn levels(&self) -> &[LevelBlocks] {
        &self.levels
    }

    /// Number of transient states.
    pub fn dim(&self) -> usize {
        (1..=self.l_max).map(|k| self.phase_count(k)).sum()
    }

    /// Row offset of each level in the flattened state order.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        (1..=self.l_max)
            .map(|k| {
                let o = acc;
                acc += self.phase_count(k);
                o
            })
            .collect()
    }

    pub fn ones(&self) -> LevelVector {
        LevelVector::filled(self, 1.0)
    }

    /// Flattened `T`. Only for small truncations.
    pub fn dense_generator(&self) -> DenseMatrix {
        let n = self.dim();
        let offsets = self.offsets();
        let mut t = DenseMatrix::zeros(n, n);
        for (i, lv) in self.levels.iter().enumerate() {
            t.set_block(offsets[i], offsets[i], &lv.local);
            if let Some(down) = &lv.down {
                t.set_block(offsets[i], offsets[i - 1], down);
            }
            if let Some(up) = &lv.up {
                t.set_block(offsets[i], offsets[i + 1], up);
            }
        }
        t
    }

    pub fn exit_vector(&self) -> LevelVector {
        LevelVector {
            values: self.levels.iter().map(|lv| lv.exit.clone()).collect(),
        }
    }

    /// Largest `|T e + T^0|` entry.
    pub fn conservation_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for lv in &self.levels {
            let mut sums = lv.local.row_sums();
            for block in [&lv.down, &lv.up].into_iter().flatten() {
                for (s, r) in sums.iter_mut().zip(block.row_sums()) {
                    *s += r;
                }
            }
            for (s, e) in sums.iter().zip(&lv.exit) {
                worst = worst.max((s + e).abs());
            }
        }
        worst
    }
}

/// Builds `A_{k,k-1}`, `A_{k,k}`, `A_{k,k+1}` and `T^0` for levels `1..=l_max`.
pub fn build_blocks(params: &ModelParams, l_max: usize) -> Result<QbdBlocks> {
    let d = params.d();
    if l_max <= d {
        return Err(Error::TruncationTooSmall { l_max, d });
    }
    let (lambda, beta, mu) = (params.lambda(), params.beta(), params.mu());
    let phases = |k: usize| k.min(d);
    let mut levels = Vec::with_capacity(l_max);
    for k in 1..=l_max {
        let m = phases(k);
        let top = k == l_max;
        let mut local = DenseMatrix::zeros(m, m);
        let mut down = (k > 1).then(|| DenseMatrix::zeros(m, phases(k - 1)));
        let mut up = (!top).then(|| DenseMatrix::zeros(m, phases(k + 1)));
        let mut exit = vec![0.0; m];
        for p in 0..m {
            let j = p + 1;
            let holder_fail = j as f64 * lambda;
            let other_fail = (k - j) as f64 * lambda;
            if j == 1 {
                exit[p] = holder_fail;
            } else if let Some(down) = down.as_mut() {
                down[(p, p - 1)] = holder_fail;
            }
            if other_fail > 0.0 {
                if let Some(down) = down.as_mut() {
                    down[(p, p)] = other_fail;
                }
            }
            let copy = if j < m { j as f64 * mu } else { 0.0 };
            if j < m {
                local[(p, p + 1)] = copy;
            }
            let arrive = if top { 0.0 } else { beta };
            if let Some(up) = up.as_mut() {
                up[(p, p)] = beta;
            }
            local[(p, p)] = -(k as f64 * lambda + copy + arrive);
        }
        levels.push(LevelBlocks {
            down,
            local,
            up,
            exit,
        });
    }
    Ok(QbdBlocks {
        params: *params,
        l_max,
        levels,
    })
}

/// A vector indexed by (level, phase); `values[k - 1][j - 1]` is state `(k, j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelVector {
    pub values: Vec<Vec<f64>>,
}

impl LevelVector {
    pub fn filled(blocks: &QbdBlocks, value: f64) -> Self {
        Self {
            values: (1..=blocks.l_max())
                .map(|k| vec![value; blocks.phase_count(k)])
                .collect(),
        }
    }

    pub fn at(&self, level: usize, phase: usize) -> f64 {
        self.values[level - 1][phase - 1]
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .flat_map(|(a, b)| a.iter().zip(b))
            .map(|(x, y)| x * y)
            .sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self
                .values
                .iter()
                .map(|v| v.iter().map(|x| x * factor).collect())
                .collect(),
        }
    }
}

/// U, R and G measures of a truncated `T`.
#[derive(Debug, Clone)]
pub struct RgFactorization {
    /// `u_blocks[k]` is `U_k`, the censored block of level `k + 1`.
    pub u_blocks: Vec<DenseMatrix>,
    /// `r_blocks[k - 1]` is `R_k`, for `k = 1..l_max-1`.
    pub r_blocks: Vec<DenseMatrix>,
    /// `g_blocks[l]` is `G_l`, for `l = 0..l_max-2`.
    pub g_blocks: Vec<DenseMatrix>,
    pub l_max: usize,
    neg_u_lu: Vec<Lu>,
}

impl RgFactorization {
    pub fn u(&self, k: usize) -> &DenseMatrix {
        &self.u_blocks[k]
    }

    pub fn r(&self, k: usize) -> &DenseMatrix {
        &self.r_blocks[k - 1]
    }

    pub fn g(&self, l: usize) -> &DenseMatrix {
        &self.g_blocks[l]
    }

    /// Solves `T x = b` by substitution through the three factors.
    pub fn solve(&self, rhs: &LevelVector) -> Result<LevelVector> {
        let n = self.u_blocks.len();
        if rhs.values.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: rhs.values.len(),
            });
        }
        // (I - R_L) y = b
        let mut y: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut yi = rhs.values[i].clone();
            if i > 0 {
                let carry = self.r_blocks[i - 1].matvec(&y[i - 1])?;
                for (a, c) in yi.iter_mut().zip(carry) {
                    *a += c;
                }
            }
            y.push(yi);
        }
        // U_D z = y, with U_i^{-1} = -(-U_i)^{-1}
        for (i, yi) in y.iter_mut().enumerate() {
            let z = self.neg_u_lu[i]
                .solve_vec(yi)
                .map_err(|_| Error::SingularU { index: i })?;
            *yi = z.into_iter().map(|v| -v).collect();
        }
        // (I - G_U) x = z
        for i in (0..n.saturating_sub(1)).rev() {
            let carry = self.g_blocks[i].matvec(&y[i + 1])?;
            for (a, c) in y[i].iter_mut().zip(carry) {
                *a += c;
            }
        }
        Ok(LevelVector { values: y })
    }

    /// Blocks `(sub, diag, super)` of `(I - R_L) U_D (I - G_U)`, per level.
    pub fn reassembled_blocks(&self) -> Result<Vec<BlockRow>> {
        let n = self.u_blocks.len();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let u = &self.u_blocks[i];
            let (sub, diag) = if i > 0 {
                let ru = self.r_blocks[i - 1].matmul(&self.u_blocks[i - 1])?;
                let diag = u.add(&ru.matmul(&self.g_blocks[i - 1])?)?;
                (Some(ru.scaled(-1.0)), diag)
            } else {
                (None, u.clone())
            };
            let sup = if i + 1 < n {
                Some(u.matmul(&self.g_blocks[i])?.scaled(-1.0))
            } else {
                None
            };
            out.push((sub, diag, sup));
        }
        Ok(out)
    }

    /// Max-norm distance between the reassembled product and `T`.
    pub fn factorization_residual(&self, blocks: &QbdBlocks) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (lv, (sub, diag, sup)) in blocks.levels().iter().zip(self.reassembled_blocks()?) {
            worst = worst.max(diag.sub(&lv.local)?.max_abs());
            if let (Some(a), Some(b)) = (&sub, &lv.down) {
                worst = worst.max(a.sub(b)?.max_abs());
            }
            if let (Some(a), Some(b)) = (&sup, &lv.up) {
                worst = worst.max(a.sub(b)?.max_abs());
            }
        }
        Ok(worst)
    }
}

/// Forward U-recursion with `R` and `G` from linear solves against `-U_{k-1}`.
pub fn rg_factorize(blocks: &QbdBlocks) -> Result<RgFactorization> {
    let n = blocks.l_max();
    let mut u_blocks = Vec::with_capacity(n);
    let mut r_blocks = Vec::with_capacity(n.saturating_sub(1));
    let mut g_blocks = Vec::with_capacity(n.saturating_sub(1));
    let mut neg_u_lu = Vec::with_capacity(n);

    u_blocks.push(blocks.level(1).local.clone());
    for k in 1..=n {
        let prev = &u_blocks[k - 1];
        let lu = Lu::factor(&prev.scaled(-1.0)).map_err(|_| Error::SingularU { index: k - 1 })?;
        if k < n {
            let up = blocks
                .level(k)
                .up
                .as_ref()
                .expect("up block below the top level");
            let down = blocks
                .level(k + 1)
                .down
                .as_ref()
                .expect("down block above level 1");
            let g = lu
                .solve(up)
                .map_err(|_| Error::SingularU { index: k - 1 })?;
            let r = lu
                .solve_left(down)
                .map_err(|_| Error::SingularU { index: k - 1 })?;
            let u = blocks.level(k + 1).local.add(&down.matmul(&g)?)?;
            g_blocks.push(g);
            r_blocks.push(r);
            u_blocks.push(u);
        }
        neg_u_lu.push(lu);
    }
    Ok(RgFactorization {
        u_blocks,
        r_blocks,
        g_blocks,
        l_max: n,
        neg_u_lu,
    })
}

/// `x = -T^{-1} e`: expected lifetime from every transient state.
pub fn expected_absorption_vector(
    blocks: &QbdBlocks,
    fact: &RgFactorization,
) -> Result<LevelVector> {
    fact.solve(&LevelVector::filled(blocks, -1.0))
}

/// `v_k = (-1)^k k! T^{-k} e` for `k = 1..=count`, by repeated block solves.
pub fn absorption_moment_vectors(
    blocks: &QbdBlocks,
    fact: &RgFactorization,
    count: usize,
) -> Result<Vec<LevelVector>> {
    let mut out: Vec<LevelVector> = Vec::with_capacity(count);
    let mut prev = blocks.ones();
    for k in 1..=count {
        let next = fact.solve(&prev.scaled(-(k as f64)))?;
        out.push(next.clone());
        prev = next;
    }
    Ok(out)
}

/// Initial law over transient states.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum InitialAssignment {
    /// One copy in a network whose size is Poisson(`beta / lambda`)
    /// conditioned on at least one center.
    #[default]
    StationaryOneCopy,
    /// All mass on `(centers, copies)`.
    State { centers: usize, copies: usize },
    /// Explicit masses on `(centers, copies)` states; the remainder is the
    /// probability of starting absorbed.
    Masses(Vec<((usize, usize), f64)>),
}

impl InitialAssignment {
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        let check = |k: usize, j: usize| -> Result<()> {
            if j == 0 || k == 0 || j > k.min(params.d()) {
                return Err(Error::InvalidInitialState(format!(
                    "({k}, {j}) is not a transient state for d = {}",
                    params.d()
                )));
            }
            Ok(())
        };
        match self {
            Self::StationaryOneCopy => Ok(()),
            Self::State { centers, copies } => check(*centers, *copies),
            Self::Masses(masses) => {
                for &((k, j), _) in masses {
                    check(k, j)?;
                }
                crate::approx_ph::check_initial(&masses.iter().map(|m| m.1).collect::<Vec<_>>())
                    .map(|_| ())
            }
        }
    }

    /// Highest level carrying explicit mass.
    pub fn required_level(&self) -> usize {
        match self {
            Self::StationaryOneCopy => 1,
            Self::State { centers, .. } => *centers,
            Self::Masses(m) => m.iter().map(|((k, _), _)| *k).max().unwrap_or(1),
        }
    }

    /// The initial vector on the truncated state space. Stationary mass above
    /// the top level is placed on `(l_max, 1)`.
    pub fn vector(&self, blocks: &QbdBlocks) -> Result<LevelVector> {
        let params = blocks.params();
        self.validate(params)?;
        let l_max = blocks.l_max();
        let mut alpha = LevelVector::filled(blocks, 0.0);
        match self {
            Self::StationaryOneCopy => {
                let ratio = params.load();
                if ratio == 0.0 {
                    alpha.values[0][0] = 1.0;
                } else {
                    let theta = poisson_pmf(ratio, l_max);
                    let nonempty = -(-ratio).exp_m1();
                    let mut placed = 0.0;
                    for k in 1..l_max {
                        let a = theta[k] / nonempty;
                        alpha.values[k - 1][0] = a;
                        placed += a;
                    }
                    alpha.values[l_max - 1][0] = (1.0 - placed).max(0.0);
                }
            }
            Self::State { centers, copies } => {
                if *centers > l_max {
                    return Err(Error::TruncationTooSmall { l_max, d: *centers });
                }
                alpha.values[centers - 1][copies - 1] = 1.0;
            }
            Self::Masses(masses) => {
                for &((k, j), p) in masses {
                    if k > l_max {
                        return Err(Error::TruncationTooSmall { l_max, d: k });
                    }
                    alpha.values[k - 1][j - 1] += p;
                }
            }
        }
        Ok(alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QbdOptions {
    /// Relative change between doublings that stops the refinement.
    pub tol: f64,
    pub level_cap: usize,
    /// Number of raw moments to report (at least 1).
    pub moment_count: usize,
}

impl Default for QbdOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            level_cap: DEFAULT_LEVEL_CAP,
            moment_count: 2,
        }
    }
}

/// Moments of the lifetime at a fixed truncation level.
pub fn moments_at_level(
    params: &ModelParams,
    initial: &InitialAssignment,
    l_max: usize,
    count: usize,
) -> Result<Vec<f64>> {
    let blocks = build_blocks(params, l_max)?;
    let alpha = initial.vector(&blocks)?;
    let fact = rg_factorize(&blocks)?;
    Ok(absorption_moment_vectors(&blocks, &fact, count.max(1))?
        .iter()
        .map(|v| alpha.dot(v))
        .collect())
}

/// Smallest level the doubling starts from: beyond `d`, beyond the Poisson
/// tail at `tol`, and high enough for the initial law.
pub fn initial_level(params: &ModelParams, initial: &InitialAssignment, tol: f64) -> Result<usize> {
    let tail_level = poisson_stationary(params, tol)?.truncation_level;
    Ok((params.d() + 1)
        .max(tail_level)
        .max(initial.required_level())
        .max(2))
}

pub fn mean_lifetime_qbd(
    params: &ModelParams,
    initial: &InitialAssignment,
    tol: f64,
) -> Result<LifetimeReport> {
    mean_lifetime_qbd_with(
        params,
        initial,
        &QbdOptions {
            tol,
            ..QbdOptions::default()
        },
    )
}

/// Doubles the truncation level until the mean changes by less than
/// `opts.tol` relative, then reports moments at the last level.
pub fn mean_lifetime_qbd_with(
    params: &ModelParams,
    initial: &InitialAssignment,
    opts: &QbdOptions,
) -> Result<LifetimeReport> {
    if !(opts.tol > 0.0 && opts.tol < 1.0) {
        return Err(Error::InvalidTolerance(opts.tol));
    }
    initial.validate(params)?;
    let mut level = initial_level(params, initial, opts.tol)?;
    if level > opts.level_cap {
        return Err(Error::NoConvergence {
            cap: opts.level_cap,
            last_change: f64::NAN,
        });
    }
    let mut history: Vec<LevelEstimate> = Vec::new();
    let mut last_change = f64::NAN;
    loop {
        let moments = moments_at_level(params, initial, level, opts.moment_count)?;
        let mean = moments[0];
        if let Some(prev) = history.last() {
            last_change = if mean == 0.0 {
                0.0
            } else {
                ((mean - prev.mean) / mean).abs()
            };
        }
        history.push(LevelEstimate { l_max: level, mean });
        if last_change < opts.tol {
            let meta = ReportMeta {
                truncation_level: Some(level),
                tolerance: Some(opts.tol),
                levels: history,
                ..ReportMeta::default()
            };
            return Ok(LifetimeReport::analytic(Method::Qbd, moments, meta));
        }
        if level * 2 > opts.level_cap {
            return Err(Error::NoConvergence {
                cap: opts.level_cap,
                last_change,
            });
        }
        level *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::model::validate_params;
    use proptest::prelude::*;

    fn params(beta: f64, mu: f64, d: usize) -> ModelParams {
        validate_params(1.0, beta, mu, d).unwrap()
    }

    #[test]
    fn level_one_blocks() {
        let b = build_blocks(&params(4.0, 1.0, 2), 6).unwrap();
        let l1 = b.level(1);
        assert_eq!(l1.local, DenseMatrix::from_rows(&[&[-5.0]]));
        assert_eq!(
            l1.up.as_ref().unwrap(),
            &DenseMatrix::from_rows(&[&[4.0, 0.0]])
        );
        assert!(l1.down.is_none());
        assert_eq!(l1.exit, vec![1.0]);
    }

    #[test]
    fn level_three_blocks() {
        let b = build_blocks(&params(4.0, 1.0, 2), 6).unwrap();
        let l3 = b.level(3);
        assert_eq!(
            l3.local,
            DenseMatrix::from_rows(&[&[-8.0, 1.0], &[0.0, -7.0]])
        );
        // (3,1): two free centers may fail; (3,2): holder failure drops a copy.
        assert_eq!(
            l3.down.as_ref().unwrap(),
            &DenseMatrix::from_rows(&[&[2.0, 0.0], &[2.0, 1.0]])
        );
        assert_eq!(
            l3.up.as_ref().unwrap(),
            &DenseMatrix::from_rows(&[&[4.0, 0.0], &[0.0, 4.0]])
        );
        assert_eq!(l3.exit, vec![1.0, 0.0]);
    }

    #[test]
    fn below_cap_blocks_have_growing_phases() {
        let b = build_blocks(&params(4.0, 1.0, 4), 8).unwrap();
        let l3 = b.level(3);
        // (3,1): 2 lambda down, mu copy; (3,2): 2 lambda to (2,1), 1 lambda to (2,2); (3,3): 3 lambda to (2,2).
        assert_eq!(
            l3.down.as_ref().unwrap(),
            &DenseMatrix::from_rows(&[&[2.0, 0.0], &[2.0, 1.0], &[0.0, 3.0]])
        );
        assert_eq!(
            l3.local,
            DenseMatrix::from_rows(&[&[-8.0, 1.0, 0.0], &[0.0, -9.0, 2.0], &[0.0, 0.0, -7.0]])
        );
        assert_eq!(l3.up.as_ref().unwrap().cols(), 4);
        assert_eq!(l3.up.as_ref().unwrap()[(2, 3)], 0.0);
    }

    #[test]
    fn top_level_reflects() {
        let b = build_blocks(&params(4.0, 1.0, 2), 5).unwrap();
        let top = b.level(5);
        assert!(top.up.is_none());
        assert_eq!(top.local[(1, 1)], -5.0);
        assert!(b.conservation_residual() <= 1e-12);
    }

    #[test]
    fn truncation_must_exceed_d() {
        assert_eq!(
            build_blocks(&params(4.0, 1.0, 3), 3).unwrap_err(),
            Error::TruncationTooSmall { l_max: 3, d: 3 }
        );
    }

    #[test]
    fn first_rg_step() {
        let b = build_blocks(&params(4.0, 1.0, 2), 6).unwrap();
        let f = rg_factorize(&b).unwrap();
        assert_eq!(f.u(0), &DenseMatrix::from_rows(&[&[-5.0]]));
        let expected_r1 = b.level(2).down.as_ref().unwrap().scaled(1.0 / 5.0);
        assert!(f.r(1).sub(&expected_r1).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn scalar_recursion_without_replication() {
        let (lambda, beta) = (1.0, 4.0);
        let p = validate_params(lambda, beta, 0.0, 1).unwrap();
        let l_max = 12;
        let b = build_blocks(&p, l_max).unwrap();
        let f = rg_factorize(&b).unwrap();
        // Direct scalar evaluation of U_k = a_{k+1} + (k lambda) beta / (-U_{k-1}).
        let mut u = -(lambda + beta);
        assert!((f.u(0)[(0, 0)] - u).abs() < 1e-15);
        for k in 1..l_max {
            let level = k + 1;
            let arrive = if level == l_max { 0.0 } else { beta };
            let down = (level - 1) as f64 * lambda;
            let next = -(level as f64 * lambda + arrive) + down * beta / (-u);
            assert!((f.u(k)[(0, 0)] - next).abs() < 1e-13 * next.abs());
            assert!((f.r(k)[(0, 0)] - down / (-u)).abs() < 1e-15 * (1.0 + down));
            assert!((f.g(k - 1)[(0, 0)] - beta / (-u)).abs() < 1e-15);
            assert!(f.r(k)[(0, 0)] >= 0.0 && f.g(k - 1)[(0, 0)] >= 0.0);
            u = next;
        }
    }

    #[test]
    fn reassembly_matches_dense_product() {
        let b = build_blocks(&params(4.0, 1.0, 3), 7).unwrap();
        let f = rg_factorize(&b).unwrap();
        // Dense (I - R_L) U_D (I - G_U).
        let n = b.dim();
        let off = b.offsets();
        let mut rl = DenseMatrix::identity(n);
        let mut ud = DenseMatrix::zeros(n, n);
        let mut gu = DenseMatrix::identity(n);
        for i in 0..b.l_max() {
            ud.set_block(off[i], off[i], f.u(i));
            if i > 0 {
                rl.set_block(off[i], off[i - 1], &f.r(i).scaled(-1.0));
            }
            if i + 1 < b.l_max() {
                gu.set_block(off[i], off[i + 1], &f.g(i).scaled(-1.0));
            }
        }
        let product = rl.matmul(&ud).unwrap().matmul(&gu).unwrap();
        assert!(product.sub(&b.dense_generator()).unwrap().max_abs() < 1e-12);
        assert!(f.factorization_residual(&b).unwrap() < 1e-12);
    }

    #[test]
    fn single_copy_lives_one_center_lifetime() {
        for lambda in [0.5, 1.0, 2.0] {
            let p = validate_params(lambda, 4.0, 1.0, 1).unwrap();
            let b = build_blocks(&p, 20).unwrap();
            let x = expected_absorption_vector(&b, &rg_factorize(&b).unwrap()).unwrap();
            for k in 1..=20 {
                assert!((x.at(k, 1) - 1.0 / lambda).abs() < 1e-9 / lambda);
            }
        }
    }

    #[test]
    fn more_copies_live_longer() {
        let b = build_blocks(&params(4.0, 1.0, 2), 40).unwrap();
        let x = expected_absorption_vector(&b, &rg_factorize(&b).unwrap()).unwrap();
        assert!(x.at(2, 2) > x.at(2, 1));
        assert!(x.at(2, 1) > 1.0);
    }

    #[test]
    fn rg_solve_matches_dense_solve() {
        for d in 1..=3 {
            for &(beta, mu) in &[(4.0, 1.0), (0.5, 3.0), (2.0, 0.0)] {
                let b = build_blocks(&params(beta, mu, d), 30).unwrap();
                let x = expected_absorption_vector(&b, &rg_factorize(&b).unwrap())
                    .unwrap()
                    .flatten();
                let dense = linalg::Lu::factor(&b.dense_generator())
                    .unwrap()
                    .solve_vec(&vec![-1.0; b.dim()])
                    .unwrap();
                for (a, o) in x.iter().zip(&dense) {
                    assert!((a - o).abs() <= 1e-9 * o.abs());
                }
            }
        }
    }

    #[test]
    fn second_moment_vector_matches_dense() {
        let b = build_blocks(&params(4.0, 1.0, 2), 20).unwrap();
        let f = rg_factorize(&b).unwrap();
        let v = absorption_moment_vectors(&b, &f, 2).unwrap();
        let lu = linalg::Lu::factor(&b.dense_generator()).unwrap();
        let m1 = lu.solve_vec(&vec![-1.0; b.dim()]).unwrap();
        let m2 = lu
            .solve_vec(&m1.iter().map(|x| -2.0 * x).collect::<Vec<_>>())
            .unwrap();
        for (a, o) in v[1].flatten().iter().zip(&m2) {
            assert!((a - o).abs() <= 1e-9 * o.abs());
        }
    }

    #[test]
    fn default_initial_is_conditioned_poisson() {
        let b = build_blocks(&params(4.0, 1.0, 2), 30).unwrap();
        let alpha = InitialAssignment::default().vector(&b).unwrap();
        assert!((alpha.at(4, 1) - 0.199_011_843_880_256_5).abs() < 1e-15);
        assert!((alpha.flatten().iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(alpha
            .values
            .iter()
            .all(|lv| lv[1..].iter().all(|&x| x == 0.0)));

        let no_arrivals = build_blocks(&params(0.0, 1.0, 2), 3).unwrap();
        let alpha0 = InitialAssignment::default().vector(&no_arrivals).unwrap();
        assert_eq!(alpha0.at(1, 1), 1.0);
    }

    #[test]
    fn initial_validation() {
        let p = params(4.0, 1.0, 2);
        assert!(InitialAssignment::State {
            centers: 2,
            copies: 3
        }
        .validate(&p)
        .is_err());
        assert!(InitialAssignment::State {
            centers: 1,
            copies: 2
        }
        .validate(&p)
        .is_err());
        assert!(InitialAssignment::State {
            centers: 1,
            copies: 0
        }
        .validate(&p)
        .is_err());
        assert!(InitialAssignment::State {
            centers: 5,
            copies: 2
        }
        .validate(&p)
        .is_ok());
        assert!(
            InitialAssignment::Masses(vec![((3, 1), 0.7), ((4, 2), 0.7)])
                .validate(&p)
                .is_err()
        );
    }

    #[test]
    fn mean_for_single_copy_cap() {
        let p = params(4.0, 1.0, 1);
        let r = mean_lifetime_qbd(
            &p,
            &InitialAssignment::State {
                centers: 1,
                copies: 1,
            },
            1e-8,
        )
        .unwrap();
        assert!((r.mean - 1.0).abs() < 1e-9);
        assert!((r.moments[1] - 2.0).abs() < 1e-9);
        assert_eq!(r.method, Method::Qbd);
    }

    #[test]
    fn doubling_certifies_and_records_levels() {
        let p = params(4.0, 1.0, 3);
        let r = mean_lifetime_qbd(&p, &InitialAssignment::default(), 1e-10).unwrap();
        let levels = &r.meta.levels;
        assert!(levels.len() >= 2);
        assert_eq!(r.meta.truncation_level, Some(levels.last().unwrap().l_max));
        for w in levels.windows(2) {
            assert_eq!(w[1].l_max, 2 * w[0].l_max);
        }
        assert!(r.is_consistent());
    }

    #[test]
    fn level_cap_is_enforced() {
        let p = params(4.0, 1.0, 3);
        let opts = QbdOptions {
            tol: 1e-8,
            level_cap: 10,
            moment_count: 1,
        };
        assert!(matches!(
            mean_lifetime_qbd_with(&p, &InitialAssignment::default(), &opts),
            Err(Error::NoConvergence { cap: 10, .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn blocks_are_generators(
            lambda in 0.1f64..4.0,
            beta in 0.0f64..10.0,
            mu in 0.0f64..4.0,
            d in 1usize..=6,
            extra in 1usize..10,
        ) {
            let p = validate_params(lambda, beta, mu, d).unwrap();
            let b = build_blocks(&p, d + extra).unwrap();
            prop_assert!(b.conservation_residual() <= 1e-12 * (1.0 + beta + (d + extra) as f64 * (lambda + mu)));
            for (i, lv) in b.levels().iter().enumerate() {
                let k = i + 1;
                let m = k.min(d);
                prop_assert_eq!(lv.local.rows(), m);
                prop_assert_eq!(lv.local.cols(), m);
                if let Some(down) = &lv.down {
                    prop_assert_eq!((down.rows(), down.cols()), (m, (k - 1).min(d)));
                    prop_assert!(down.as_slice().iter().all(|&x| x >= 0.0));
                }
                if let Some(up) = &lv.up {
                    prop_assert_eq!((up.rows(), up.cols()), (m, (k + 1).min(d)));
                    prop_assert!(up.as_slice().iter().all(|&x| x >= 0.0));
                }
                prop_assert_eq!(lv.exit[0], lambda);
                prop_assert!(lv.exit[1..].iter().all(|&x| x == 0.0));
                for a in 0..m {
                    prop_assert!(lv.local[(a, a)] < 0.0);
                    for c in 0..m {
                        if a != c {
                            prop_assert!(lv.local[(a, c)] >= 0.0);
                        }
                    }
                }
            }
        }

        #[test]
        fn factorization_invariants(
            beta in 0.0f64..8.0,
            mu in 0.0f64..3.0,
            d in 1usize..=5,
            extra in 1usize..25,
        ) {
            let p = validate_params(1.0, beta, mu, d).unwrap();
            let b = build_blocks(&p, d + extra).unwrap();
            let f = rg_factorize(&b).unwrap();
            prop_assert!(f.factorization_residual(&b).unwrap() <= 1e-10);
            for u in &f.u_blocks {
                for i in 0..u.rows() {
                    prop_assert!(u[(i, i)] < 0.0);
                }
            }
            for m in f.r_blocks.iter().chain(&f.g_blocks) {
                prop_assert!(m.as_slice().iter().all(|&x| x >= -1e-15));
            }
            let x = expected_absorption_vector(&b, &f).unwrap();
            prop_assert!(x.flatten().iter().all(|&v| v > 0.0));
        }

        #[test]
        fn mean_grows_with_truncation(
            beta in 0.5f64..6.0,
            mu in 0.1f64..3.0,
            d in 1usize..=4,
        ) {
            let p = validate_params(1.0, beta, mu, d).unwrap();
            let init = InitialAssignment::default();
            let mut prev = 0.0;
            for l in (d + 1)..(d + 25) {
                let m = moments_at_level(&p, &init, l, 1).unwrap()[0];
                prop_assert!(m >= prev * (1.0 - 1e-12));
                prev = m;
            }
        }
    }
}
