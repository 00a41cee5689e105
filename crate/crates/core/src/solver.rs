//! Alternating interference-leakage minimization with receive subspaces of
//! dimension `d'` that may differ from the stream count `d`.
//!
//! Each iteration has two half-steps. The forward half-step fixes the
//! precoders and picks, at every receiver, the `d'_i`-dimensional subspace
//! seeing the least weighted interference. The reverse half-step works in the
//! reciprocal network (channels `H_ij^H`, the combiners acting as precoders)
//! and picks at every transmitter the `d_j`-dimensional subspace leaking least
//! into the other users' interference-free subspaces. Both half-steps minimize
//! the same weighted leakage exactly, so the objective never increases.

use rand::Rng;

use crate::channel::{ChannelSet, NetworkDims};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::rng;

/// Precoders `v[i]` (`M_i x d_i`) and interference-suppression bases `u[i]`
/// (`N_i x d'_i`), all with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct IaSolution {
    pub v: Vec<CMat>,
    pub u: Vec<CMat>,
    pub residual_leakage: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Normalized leakage after every half-iteration of the returned run,
    /// populated only when [`SolverOpts::record_trace`] is set.
    pub trace: Vec<f64>,
}

impl IaSolution {
    /// Independent random truncated-unitary precoders and combiners.
    pub fn random<R: Rng + ?Sized>(dims: &NetworkDims, rng: &mut R) -> Self {
        let v = (0..dims.k)
            .map(|i| linalg::orthonormalize(&linalg::complex_gaussian(dims.m[i], dims.d[i], rng)))
            .collect();
        let u = (0..dims.k)
            .map(|i| {
                linalg::orthonormalize(&linalg::complex_gaussian(dims.n[i], dims.dprime[i], rng))
            })
            .collect();
        IaSolution {
            v,
            u,
            residual_leakage: f64::NAN,
            iterations: 0,
            converged: false,
            trace: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOpts {
    pub max_iters: usize,
    /// Target normalized leakage.
    pub tol: f64,
    pub restarts: usize,
    /// Seed for the random initial precoders; restart `r` uses stream `r`.
    pub init_seed: u64,
    /// Relative rank threshold: `sigma_min(U_i^H H_ii V_i)` must exceed `tol_rank * sigma_max(H_ii)`.
    pub tol_rank: f64,
    /// Per-transmitter leakage weights (`P_j / d_j`); `None` means equal weights.
    pub weights: Option<Vec<f64>>,
    pub record_trace: bool,
}

impl Default for SolverOpts {
    fn default() -> Self {
        SolverOpts {
            max_iters: 10_000,
            tol: 1e-8,
            restarts: 3,
            init_seed: 0,
            tol_rank: 1e-6,
            weights: None,
            record_trace: false,
        }
    }
}

/// Outcome of [`verify_alignment`].
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    pub aligned: bool,
    pub ranks_ok: bool,
    /// `per_link_residuals[i][j] = ||U_i^H H_ij V_j||_F / ||H_ij||_F`, zero on the diagonal.
    pub per_link_residuals: Vec<Vec<f64>>,
    /// Smallest singular value of `U_i^H H_ii V_i` for each user (0 when `d'_i < d_i`).
    pub min_singular: Vec<f64>,
}

fn check_shapes(channels: &ChannelSet, sol: &IaSolution) -> Result<()> {
    let k = channels.k();
    if sol.u.len() != k || sol.v.len() != k {
        return Err(Error::Dimension(format!(
            "solution has {}/{} blocks for {k} users",
            sol.u.len(),
            sol.v.len()
        )));
    }
    for i in 0..k {
        for j in 0..k {
            let h = channels.get(i, j);
            if h.nrows() != sol.u[i].nrows() || h.ncols() != sol.v[j].nrows() {
                return Err(Error::Dimension(format!(
                    "H[{i}][{j}] is {:?} but U_{i} has {} rows and V_{j} has {}",
                    h.shape(),
                    sol.u[i].nrows(),
                    sol.v[j].nrows()
                )));
            }
        }
    }
    Ok(())
}

fn leakage_normalizer(channels: &ChannelSet, sol: &IaSolution, weights: &[f64]) -> f64 {
    let k = channels.k();
    let mut total = 0.0;
    for i in 0..k {
        for j in (0..k).filter(|&j| j != i) {
            let h = channels.get(i, j);
            let frac = (sol.u[i].ncols() * sol.v[j].ncols()) as f64 / (h.nrows() * h.ncols()) as f64;
            total += weights[j] * linalg::frob2(h) * frac;
        }
    }
    total
}

fn weighted_leakage(channels: &ChannelSet, sol: &IaSolution, weights: &[f64]) -> f64 {
    let k = channels.k();
    let mut raw = 0.0;
    for i in 0..k {
        let uh = sol.u[i].adjoint();
        for j in (0..k).filter(|&j| j != i) {
            raw += weights[j] * linalg::frob2(&(&uh * channels.get(i, j) * &sol.v[j]));
        }
    }
    let norm = leakage_normalizer(channels, sol, weights);
    if norm > 0.0 {
        raw / norm
    } else {
        0.0
    }
}

/// Normalized interference leakage
/// `sum_{i != j} ||U_i^H H_ij V_j||_F^2 / sum_{i != j} ||H_ij||_F^2 d_j d'_i / (N_i M_j)`.
///
/// The denominator is the expected leakage of random subspaces, so the value
/// is scale-free and close to 1 for an unaligned solution.
pub fn leakage(channels: &ChannelSet, sol: &IaSolution) -> Result<f64> {
    check_shapes(channels, sol)?;
    Ok(weighted_leakage(channels, sol, &vec![1.0; channels.k()]))
}

/// Checks the zero-interference and full-rank conditions.
pub fn verify_alignment(
    channels: &ChannelSet,
    sol: &IaSolution,
    tol_align: f64,
    tol_rank: f64,
) -> Result<AlignmentReport> {
    check_shapes(channels, sol)?;
    let k = channels.k();
    let mut residuals = vec![vec![0.0; k]; k];
    let mut worst: f64 = 0.0;
    for i in 0..k {
        for j in (0..k).filter(|&j| j != i) {
            let h = channels.get(i, j);
            let hn = linalg::frob2(h).sqrt();
            let leak = linalg::frob2(&(sol.u[i].adjoint() * h * &sol.v[j])).sqrt();
            let r = if hn > 0.0 { leak / hn } else { 0.0 };
            residuals[i][j] = r;
            worst = worst.max(r);
        }
    }
    let min_singular = (0..k).map(|i| effective_min_singular(channels, sol, i)).collect::<Vec<_>>();
    let ranks_ok = min_singular.iter().enumerate().all(|(i, &s)| {
        let scale = linalg::singular_values(channels.get(i, i)).first().copied().unwrap_or(0.0);
        s > tol_rank * scale
    });
    Ok(AlignmentReport {
        aligned: worst < tol_align,
        ranks_ok,
        per_link_residuals: residuals,
        min_singular,
    })
}

/// `sigma_{d_i}(U_i^H H_ii V_i)`, or 0 when the effective channel cannot have rank `d_i`.
fn effective_min_singular(channels: &ChannelSet, sol: &IaSolution, i: usize) -> f64 {
    let eff = sol.u[i].adjoint() * channels.get(i, i) * &sol.v[i];
    let d = sol.v[i].ncols();
    if sol.u[i].ncols() < d {
        return 0.0;
    }
    linalg::singular_values(&eff).get(d - 1).copied().unwrap_or(0.0)
}

fn rank_ok(channels: &ChannelSet, sol: &IaSolution, tol_rank: f64) -> bool {
    (0..channels.k()).all(|i| {
        let scale = linalg::singular_values(channels.get(i, i)).first().copied().unwrap_or(0.0);
        effective_min_singular(channels, sol, i) > tol_rank * scale
    })
}

struct Workspace<'a> {
    channels: &'a ChannelSet,
    dims: &'a NetworkDims,
    weights: Vec<f64>,
    /// `H_ij^H` cached for the reverse half-step.
    h_adj: Vec<Vec<CMat>>,
    /// Column offsets of each interferer in the stacked forward/reverse factors.
    fwd_offsets: Vec<Vec<usize>>,
    rev_offsets: Vec<Vec<usize>>,
}

/// Full eigenbases from the previous half-steps, used to warm-start the eigensolver.
struct WarmBases {
    rx: Vec<Option<CMat>>,
    tx: Vec<Option<CMat>>,
}

fn stacked_offsets(k: usize, cols: &[usize]) -> Vec<Vec<usize>> {
    (0..k)
        .map(|me| {
            let mut offs = Vec::with_capacity(k + 1);
            let mut off = 0;
            for (other, &c) in cols.iter().enumerate() {
                offs.push(off);
                if other != me {
                    off += c;
                }
            }
            offs.push(off);
            offs
        })
        .collect()
}

/// Smallest `count` eigenpairs of `B B^H`.
fn smallest_from(stacked: &CMat, count: usize, warm: &mut Option<CMat>) -> Result<(CMat, f64)> {
    let (values, vectors) = linalg::gram_eigh(stacked, warm.as_ref())?;
    let basis = vectors.columns(0, count).into_owned();
    let energy = values[..count].iter().sum();
    *warm = Some(vectors);
    Ok((basis, energy))
}

impl<'a> Workspace<'a> {
    /// Updates every `U_i`; returns the weighted raw leakage after the update.
    fn forward(&self, v: &[CMat], u: &mut [CMat], warm: &mut WarmBases) -> Result<f64> {
        let k = self.dims.k;
        let mut total = 0.0;
        for i in 0..k {
            let offs = &self.fwd_offsets[i];
            let mut stacked = CMat::zeros(self.dims.n[i], offs[k]);
            for j in (0..k).filter(|&j| j != i) {
                let h = self.channels.get(i, j);
                linalg::mul_into_columns(&mut stacked, offs[j], h, &v[j], self.weights[j].sqrt());
            }
            let (basis, energy) = smallest_from(&stacked, self.dims.dprime[i], &mut warm.rx[i])?;
            u[i] = basis;
            total += energy;
        }
        Ok(total)
    }

    /// Updates every `V_j` in the reciprocal network; returns the weighted raw leakage.
    fn reverse(&self, u: &[CMat], v: &mut [CMat], warm: &mut WarmBases) -> Result<f64> {
        let k = self.dims.k;
        let mut total = 0.0;
        for j in 0..k {
            let offs = &self.rev_offsets[j];
            let mut stacked = CMat::zeros(self.dims.m[j], offs[k]);
            for i in (0..k).filter(|&i| i != j) {
                linalg::mul_into_columns(&mut stacked, offs[i], &self.h_adj[i][j], &u[i], 1.0);
            }
            let (basis, energy) = smallest_from(&stacked, self.dims.d[j], &mut warm.tx[j])?;
            v[j] = basis;
            total += self.weights[j] * energy;
        }
        Ok(total)
    }
}

fn run_once(ws: &Workspace<'_>, opts: &SolverOpts, restart: usize) -> Result<IaSolution> {
    let mut rng = rng::substream(opts.init_seed, restart as u64);
    let mut sol = IaSolution::random(ws.dims, &mut rng);
    let norm = leakage_normalizer(ws.channels, &sol, &ws.weights);
    let norm = if norm > 0.0 { norm } else { 1.0 };
    let mut trace = Vec::new();
    if opts.record_trace {
        trace.push(weighted_leakage(ws.channels, &sol, &ws.weights));
    }
    let mut warm = WarmBases {
        rx: vec![None; ws.dims.k],
        tx: vec![None; ws.dims.k],
    };
    let mut current = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        let after_forward = ws.forward(&sol.v, &mut sol.u, &mut warm)?.max(0.0) / norm;
        let after_reverse = ws.reverse(&sol.u, &mut sol.v, &mut warm)?.max(0.0) / norm;
        if opts.record_trace {
            trace.push(after_forward);
            trace.push(after_reverse);
        }
        current = after_reverse;
        if current < opts.tol {
            break;
        }
    }
    // eigenvalue sums can carry round-off at the 1e-16 level; report the direct value
    let exact = weighted_leakage(ws.channels, &sol, &ws.weights);
    if !exact.is_finite() || !current.is_finite() {
        return Err(Error::Numerical("leakage became non-finite".into()));
    }
    sol.residual_leakage = exact;
    sol.iterations = iterations;
    sol.converged = exact < opts.tol && rank_ok(ws.channels, &sol, opts.tol_rank);
    sol.trace = trace;
    Ok(sol)
}

/// Alternating leakage minimization with random restarts.
///
/// Restarts are tried in order and the first converged run is returned; if
/// none converges the run with the smallest residual leakage is returned
/// (ties broken by restart index).
pub fn solve_alternating(channels: &ChannelSet, dims: &NetworkDims, opts: &SolverOpts) -> Result<IaSolution> {
    dims.validate()?;
    channels.check_dims(dims)?;
    let weights = match &opts.weights {
        Some(w) if w.len() != dims.k => {
            return Err(Error::Dimension(format!("{} weights for {} users", w.len(), dims.k)))
        }
        Some(w) if w.iter().any(|&x| !(x > 0.0)) => {
            return Err(Error::Domain("solver weights must be positive".into()))
        }
        Some(w) => w.clone(),
        None => vec![1.0; dims.k],
    };
    let h_adj = channels
        .h
        .iter()
        .map(|row| row.iter().map(|h| h.adjoint()).collect())
        .collect();
    let ws = Workspace {
        channels,
        dims,
        weights,
        h_adj,
        fwd_offsets: stacked_offsets(dims.k, &dims.d),
        rev_offsets: stacked_offsets(dims.k, &dims.dprime),
    };
    let mut best: Option<IaSolution> = None;
    for restart in 0..opts.restarts.max(1) {
        let sol = run_once(&ws, opts, restart)?;
        if sol.converged {
            return Ok(sol);
        }
        let better = match &best {
            None => true,
            Some(b) => sol.residual_leakage < b.residual_leakage,
        };
        if better {
            best = Some(sol);
        }
    }
    Ok(best.expect("at least one restart"))
}
