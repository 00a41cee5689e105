//! Seeded Monte-Carlo estimation of ergodic rates and the distributed
//! iterative-waterfilling game used as a baseline.
//!
//! Draw `t` of a run keyed by `seed` uses channel stream `t` and solver seed
//! `derive_seed(seed, t)`. Draws whose per-trial algorithm fails to converge are
//! discarded and replaced by the next draw index, so the set of draws used
//! depends only on `(seed, configuration)`, never on thread count.

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelSet, NetworkDims, PowerProfile};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::rng;
use crate::solver::{self, SolverOpts};

const LOG2_E: f64 = std::f64::consts::LOG2_E;
/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Sample mean with a 95% normal-approximation confidence half-width.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub trials_used: usize,
    pub trials_discarded: usize,
    pub ci_halfwidth: f64,
    pub seed: u64,
}

impl Estimate {
    pub fn from_samples(samples: &[f64], discarded: usize, seed: u64) -> Self {
        let n = samples.len();
        // fixed summation order keeps results bit-identical across runs
        let mean = samples.iter().sum::<f64>() / n as f64;
        let ci = if n > 1 {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            Z95 * (var / n as f64).sqrt()
        } else {
            0.0
        };
        Estimate {
            mean,
            trials_used: n,
            trials_discarded: discarded,
            ci_halfwidth: ci,
            seed,
        }
    }
}

/// Per-user estimates plus the per-user average and the sum rate, all from the same draws.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicEstimate {
    pub per_user: Vec<Estimate>,
    pub user_mean: Estimate,
    pub sum: Estimate,
}

impl ErgodicEstimate {
    /// `rates[t][k]` is the rate of user `k` on used draw `t`.
    fn from_rates(rates: &[Vec<f64>], discarded: usize, seed: u64) -> Self {
        let k = rates.first().map_or(0, Vec::len);
        let per_user = (0..k)
            .map(|u| {
                let col: Vec<f64> = rates.iter().map(|r| r[u]).collect();
                Estimate::from_samples(&col, discarded, seed)
            })
            .collect();
        let sums: Vec<f64> = rates.iter().map(|r| r.iter().sum()).collect();
        let means: Vec<f64> = sums.iter().map(|s| s / k as f64).collect();
        ErgodicEstimate {
            per_user,
            user_mean: Estimate::from_samples(&means, discarded, seed),
            sum: Estimate::from_samples(&sums, discarded, seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McMethod {
    IaOptimum,
    IaProjection,
    WfGame,
}

impl McMethod {
    pub fn name(self) -> &'static str {
        match self {
            McMethod::IaOptimum => "ia_optimum",
            McMethod::IaProjection => "ia_projection",
            McMethod::WfGame => "wf_game",
        }
    }
}

/// Options of the waterfilling game.
#[derive(Debug, Clone, PartialEq)]
pub struct GameOpts {
    pub max_iters: usize,
    /// Convergence when `max_k ||Q_k(t+1) - Q_k(t)||_F / P_k < tol`.
    pub tol: f64,
}

impl Default for GameOpts {
    fn default() -> Self {
        GameOpts {
            max_iters: 500,
            tol: 1e-6,
        }
    }
}

/// Update schedule of the game, recorded in output metadata.
pub const GAME_SCHEDULE: &str = "sequential";

#[derive(Debug, Clone, PartialEq)]
pub struct McOpts {
    pub trials: usize,
    pub seed: u64,
    pub solver: SolverOpts,
    pub game: GameOpts,
    /// At most `budget_factor * trials` draws are consumed before giving up.
    pub budget_factor: usize,
}

impl Default for McOpts {
    fn default() -> Self {
        McOpts {
            trials: 2000,
            seed: 1,
            solver: SolverOpts::default(),
            game: GameOpts::default(),
            budget_factor: 10,
        }
    }
}

/// Runs `trial` on draw indices 0, 1, 2, ... until `opts.trials` of them
/// return `Some`. Returns the successes in draw order and the discard count.
fn collect_trials<T, F>(opts: &McOpts, method: &str, trial: F) -> Result<(Vec<T>, usize)>
where
    T: Send,
    F: Fn(u64) -> Result<Option<T>> + Sync + Send,
{
    if opts.trials == 0 {
        return Err(Error::Domain("at least one trial is required".into()));
    }
    let budget = opts.trials.saturating_mul(opts.budget_factor.max(1)) as u64;
    let mut used = Vec::with_capacity(opts.trials);
    let mut discarded = 0usize;
    let mut next = 0u64;
    while used.len() < opts.trials {
        if next >= budget {
            return Err(Error::NonConvergence {
                method: method.to_string(),
                used: used.len(),
                discarded,
            });
        }
        // a batch never yields more successes than are missing, so nothing is wasted
        let want = (opts.trials - used.len()) as u64;
        let end = (next + want).min(budget);
        let batch: Vec<Result<Option<T>>> = (next..end).into_par_iter().map(&trial).collect();
        for outcome in batch {
            match outcome? {
                Some(v) => used.push(v),
                None => discarded += 1,
            }
        }
        next = end;
    }
    Ok((used, discarded))
}

fn solver_weights(dims: &NetworkDims, powers: &PowerProfile) -> Option<Vec<f64>> {
    let w: Vec<f64> = (0..dims.k).map(|j| powers.p[j] / dims.d[j] as f64).collect();
    let max = w.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 && w.iter().all(|&x| x > 0.0) {
        Some(w.iter().map(|x| x / max).collect())
    } else {
        None
    }
}

/// Paired optimum / projection estimates over a set of power profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct IaSweep {
    pub optimum: Vec<ErgodicEstimate>,
    pub projection: Vec<ErgodicEstimate>,
}

type IaTrial = Vec<(Vec<f64>, Vec<f64>)>;

/// Ergodic IA rates for several power profiles from one set of aligned draws.
///
/// Each used draw is solved once; the solver weights come from the first
/// profile, so the profiles are expected to differ only by a common scale.
pub fn estimate_ia_sweep(dims: &NetworkDims, profiles: &[PowerProfile], opts: &McOpts) -> Result<IaSweep> {
    dims.validate()?;
    if profiles.is_empty() {
        return Err(Error::Domain("no power profiles given".into()));
    }
    for p in profiles {
        if p.p.len() != dims.k {
            return Err(Error::Dimension(format!("{} powers for {} users", p.p.len(), dims.k)));
        }
    }
    let weights = solver_weights(dims, &profiles[0]);
    let (trials, discarded) = collect_trials(opts, "ia", |t| -> Result<Option<IaTrial>> {
        let ch = channel::draw_channels_stream(dims, opts.seed, t)?;
        let sopts = SolverOpts {
            init_seed: rng::derive_seed(opts.seed, t),
            weights: weights.clone(),
            record_trace: false,
            ..opts.solver.clone()
        };
        let sol = solver::solve_alternating(&ch, dims, &sopts)?;
        if !sol.converged {
            return Ok(None);
        }
        profiles
            .iter()
            .map(|p| {
                let opt = (0..dims.k)
                    .map(|k| channel::mi_optimum(&ch, &sol, p, k))
                    .collect::<Result<Vec<_>>>()?;
                let proj = (0..dims.k)
                    .map(|k| channel::mi_projection(&ch, &sol, p, k))
                    .collect::<Result<Vec<_>>>()?;
                Ok((opt, proj))
            })
            .collect::<Result<IaTrial>>()
            .map(Some)
    })?;
    let mut optimum = Vec::with_capacity(profiles.len());
    let mut projection = Vec::with_capacity(profiles.len());
    for idx in 0..profiles.len() {
        let opt: Vec<Vec<f64>> = trials.iter().map(|t| t[idx].0.clone()).collect();
        let proj: Vec<Vec<f64>> = trials.iter().map(|t| t[idx].1.clone()).collect();
        optimum.push(ErgodicEstimate::from_rates(&opt, discarded, opts.seed));
        projection.push(ErgodicEstimate::from_rates(&proj, discarded, opts.seed));
    }
    Ok(IaSweep {
        optimum,
        projection,
    })
}

/// Ergodic per-user and sum rates of one method at one power profile.
pub fn estimate_ergodic(
    method: McMethod,
    dims: &NetworkDims,
    powers: &PowerProfile,
    opts: &McOpts,
) -> Result<ErgodicEstimate> {
    match method {
        McMethod::IaOptimum | McMethod::IaProjection => {
            let mut sweep = estimate_ia_sweep(dims, std::slice::from_ref(powers), opts)?;
            Ok(if method == McMethod::IaOptimum {
                sweep.optimum.remove(0)
            } else {
                sweep.projection.remove(0)
            })
        }
        McMethod::WfGame => {
            dims.validate()?;
            let (rates, discarded) = collect_trials(opts, method.name(), |t| {
                let ch = channel::draw_channels_stream(dims, opts.seed, t)?;
                let outcome = run_wf_game(&ch, powers, &opts.game)?;
                Ok(outcome.converged.then_some(outcome.rates))
            })?;
            Ok(ErgodicEstimate::from_rates(&rates, discarded, opts.seed))
        }
    }
}

/// Waterfilling best response: the covariance `Q` maximizing
/// `log det(I + H Q H^H R^{-1})` subject to `Q >= 0`, `tr Q <= power`.
pub fn waterfill_best_response(h: &CMat, r: &CMat, power: f64) -> Result<CMat> {
    if r.nrows() != h.nrows() || !r.is_square() {
        return Err(Error::Dimension(format!(
            "channel {:?} and covariance {:?} do not match",
            h.shape(),
            r.shape()
        )));
    }
    let m = h.ncols();
    if !(power > 0.0) {
        return Ok(CMat::zeros(m, m));
    }
    let chol = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("interference-plus-noise covariance is singular".into()))?;
    let w = chol
        .l_dirty()
        .solve_lower_triangular(h)
        .ok_or_else(|| Error::Numerical("interference-plus-noise covariance is singular".into()))?;
    let gram = w.adjoint() * w;
    let (values, vectors) = linalg::hermitian_eigh(&gram)?;
    let floor = values.last().copied().unwrap_or(0.0).abs() * 1e-12;
    // strongest modes first
    let gains: Vec<(usize, f64)> = (0..m)
        .rev()
        .filter(|&i| values[i] > floor && values[i] > 0.0)
        .map(|i| (i, values[i]))
        .collect();
    if gains.is_empty() {
        return Ok(CMat::zeros(m, m));
    }
    let mut active = gains.len();
    let mut level = 0.0;
    while active > 0 {
        let inv_sum: f64 = gains[..active].iter().map(|&(_, g)| 1.0 / g).sum();
        level = (power + inv_sum) / active as f64;
        if level > 1.0 / gains[active - 1].1 {
            break;
        }
        active -= 1;
    }
    let mut alloc = vec![0.0; m];
    for &(i, g) in &gains[..active] {
        alloc[i] = (level - 1.0 / g).max(0.0);
    }
    let diag = DVector::from_iterator(m, alloc.iter().map(|&x| Complex64::new(x, 0.0)));
    let q = &vectors * CMat::from_diagonal(&diag) * vectors.adjoint();
    Ok((&q + q.adjoint()) * Complex64::new(0.5, 0.0))
}

/// Final state of the waterfilling game.
#[derive(Debug, Clone, PartialEq)]
pub struct WfGameOutcome {
    pub q: Vec<CMat>,
    pub converged: bool,
    /// Sweeps performed before the fixed point was reached (the confirming sweep is not counted).
    pub iterations: usize,
    /// Per-user rates in bits at the final covariances.
    pub rates: Vec<f64>,
}

fn covariance_factor(q: &CMat) -> Result<CMat> {
    let (values, vectors) = linalg::hermitian_eigh(q)?;
    let cols: Vec<usize> = (0..values.len()).filter(|&i| values[i] > 0.0).collect();
    Ok(CMat::from_fn(q.nrows(), cols.len(), |r, c| {
        vectors[(r, cols[c])] * values[cols[c]].sqrt()
    }))
}

/// Per-user rates in bits with arbitrary transmit covariances, interference as noise.
pub fn rates_with_covariances(channels: &ChannelSet, q: &[CMat], sigma2: f64) -> Result<Vec<f64>> {
    let k = channels.k();
    let factors = q.iter().map(covariance_factor).collect::<Result<Vec<_>>>()?;
    (0..k)
        .map(|rx| {
            let signal = channels.get(rx, rx) * &factors[rx];
            let interference: Vec<CMat> = (0..k)
                .filter(|&tx| tx != rx)
                .map(|tx| channels.get(rx, tx) * &factors[tx])
                .collect();
            Ok(channel::log_det_snr(&signal, &interference, sigma2)?.max(0.0) * LOG2_E)
        })
        .collect()
}

fn interference_covariance(channels: &ChannelSet, q: &[CMat], sigma2: f64, rx: usize) -> CMat {
    let n = channels.get(rx, rx).nrows();
    let mut r = linalg::eye(n) * Complex64::new(sigma2, 0.0);
    for tx in (0..channels.k()).filter(|&tx| tx != rx) {
        let h = channels.get(rx, tx);
        r += h * &q[tx] * h.adjoint();
    }
    r
}

/// Sequential (Gauss-Seidel) iterative waterfilling from all-zero covariances.
pub fn run_wf_game(channels: &ChannelSet, powers: &PowerProfile, opts: &GameOpts) -> Result<WfGameOutcome> {
    let k = channels.k();
    if powers.p.len() != k {
        return Err(Error::Dimension(format!("{} powers for {k} users", powers.p.len())));
    }
    let mut q: Vec<CMat> = (0..k)
        .map(|i| {
            let m = channels.get(i, i).ncols();
            CMat::zeros(m, m)
        })
        .collect();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < opts.max_iters {
        let mut change: f64 = 0.0;
        for user in 0..k {
            let r = interference_covariance(channels, &q, powers.sigma2, user);
            let next = waterfill_best_response(channels.get(user, user), &r, powers.p[user])?;
            if powers.p[user] > 0.0 {
                change = change.max((&next - &q[user]).norm() / powers.p[user]);
            }
            q[user] = next;
        }
        if change < opts.tol {
            converged = true;
            break;
        }
        sweeps += 1;
    }
    let rates = rates_with_covariances(channels, &q, powers.sigma2)?;
    Ok(WfGameOutcome {
        q,
        converged,
        iterations: sweeps,
        rates,
    })
}
