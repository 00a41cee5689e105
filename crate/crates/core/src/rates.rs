//! Closed-form ergodic rates over Rayleigh fading.
//!
//! * [`shin_lee_rate`]: `E[log2 det(I + rho H H^H)]` for an i.i.d. `d' x d` channel.
//! * [`chiani_csu`]: `E[log2 det(I_p + H Phi H^H)]` for an i.i.d. `p x n` channel and
//!   a positive-definite `Phi` described by the distinct eigenvalues of `Phi^{-1}`.
//! * [`theorem2_bound`]: the approximate lower bound on the optimum-receiver rate
//!   under alignment, obtained by modelling the projected interference as i.i.d.

use nalgebra::DMatrix;

use crate::channel::{NetworkDims, PowerProfile};
use crate::error::{Error, Result};
use crate::special::{
    binomial, exp_integral_scaled, factorial, falling_factorial, log_kernel_integral,
    power_kernel_integral,
};

const LOG2_E: f64 = std::f64::consts::LOG2_E;

/// Largest `n` or `p` accepted by [`chiani_csu`].
pub const MAX_CSU_DIM: usize = 16;

/// Relative separation below which two eigenvalues are treated as one.
pub const MERGE_REL_TOL: f64 = 1e-6;

/// Largest tolerated ratio between the absolute sum of the determinant terms
/// and their signed sum.
pub const MAX_CANCELLATION: f64 = 1e6;

/// Ergodic rate in bits of an i.i.d. unit-variance `dprime x d` Rayleigh channel with
/// per-stream SNR `rho`, `d <= dprime`.
pub fn shin_lee_rate(d: usize, dprime: usize, rho: f64) -> Result<f64> {
    if d == 0 || d > dprime {
        return Err(Error::Domain(format!(
            "closed form needs 1 <= d <= d' (got d={d}, d'={dprime}); swap the arguments"
        )));
    }
    if rho == 0.0 {
        return Ok(0.0);
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::Domain(format!("SNR must be positive, got {rho}")));
    }
    let z = 1.0 / rho;
    let diff = (dprime - d) as u32;
    let scaled_e: Vec<f64> = (1..=diff + 2 * d as u32)
        .map(|p| exp_integral_scaled(p, z))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    for k in 0..d as u32 {
        for l in 0..=k {
            for m in 0..=2 * l {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                let coeff = sign * factorial(2 * l) * factorial(diff + m)
                    / (2f64.powi((2 * k - m) as i32)
                        * factorial(l)
                        * factorial(m)
                        * factorial(diff + l))
                    * binomial(2 * k - 2 * l, k - l)
                    * binomial(2 * l + 2 * diff, 2 * l - m);
                let esum: f64 = scaled_e[..(diff + m + 1) as usize].iter().sum();
                total += coeff * esum;
            }
        }
    }
    Ok((total * LOG2_E).max(0.0))
}

/// Distinct eigenvalues of `Phi^{-1}` in strictly descending order with their multiplicities.
#[derive(Debug, Clone, PartialEq)]
pub struct EigProfile {
    mu: Vec<f64>,
    mult: Vec<usize>,
}

impl EigProfile {
    /// Builds a canonical profile: pairs are sorted descending and values closer than
    /// [`MERGE_REL_TOL`] (relative) are merged with summed multiplicity.
    pub fn new(mu: Vec<f64>, mult: Vec<usize>) -> Result<Self> {
        if mu.len() != mult.len() || mu.is_empty() {
            return Err(Error::Domain("eigenvalue and multiplicity lists must be nonempty and of equal length".into()));
        }
        if let Some(bad) = mu.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::Domain(format!("eigenvalues of Phi^-1 must be positive, got {bad}")));
        }
        if mult.contains(&0) {
            return Err(Error::Domain("multiplicities must be positive".into()));
        }
        let mut pairs: Vec<(f64, usize)> = mu.into_iter().zip(mult).collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut merged: Vec<(f64, usize)> = Vec::with_capacity(pairs.len());
        for (x, m) in pairs {
            match merged.last_mut() {
                Some((y, my)) if (*y - x).abs() < MERGE_REL_TOL * *y => {
                    // multiplicity-weighted mean keeps the trace of Phi^-1
                    *y = (*y * *my as f64 + x * m as f64) / (*my + m) as f64;
                    *my += m;
                }
                _ => merged.push((x, m)),
            }
        }
        Ok(EigProfile {
            mu: merged.iter().map(|p| p.0).collect(),
            mult: merged.iter().map(|p| p.1).collect(),
        })
    }

    /// Profile of `Phi^{-1}` from the eigenvalues of `Phi` itself.
    pub fn from_phi_eigenvalues(phi: &[f64]) -> Result<Self> {
        if let Some(bad) = phi.iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::Domain(format!("Phi must be positive definite, eigenvalue {bad}")));
        }
        Self::new(phi.iter().map(|x| 1.0 / x).collect(), vec![1; phi.len()])
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn mult(&self) -> &[usize] {
        &self.mult
    }

    /// Dimension `n` of `Phi`.
    pub fn dim(&self) -> usize {
        self.mult.iter().sum()
    }
}

/// `prod_{i=1}^{m} (n - i)!`
fn complex_multivariate_gamma(m: usize, n: usize) -> f64 {
    (1..=m).map(|i| factorial((n - i) as u32)).product()
}

/// Ergodic rate in bits `E[log2 det(I_p + H Phi H^H)]`, `H` a `p x n` i.i.d. unit-variance
/// complex Gaussian matrix, `Phi` described by `eig`.
pub fn chiani_csu(n: usize, p: usize, eig: &EigProfile) -> Result<f64> {
    if n == 0 || p == 0 {
        return Err(Error::Domain("n and p must be positive".into()));
    }
    if eig.dim() != n {
        return Err(Error::Domain(format!(
            "multiplicities sum to {} but n = {n}",
            eig.dim()
        )));
    }
    if n > MAX_CSU_DIM || p > MAX_CSU_DIM {
        return Err(Error::Domain(format!(
            "closed form limited to n, p <= {MAX_CSU_DIM} (got n={n}, p={p})"
        )));
    }
    let nmin = n.min(p);
    let mu = eig.mu();
    let mult = eig.mult();

    // row i belongs to eigenvalue block e_i and carries derivative order a_i
    let mut row_block = Vec::with_capacity(n);
    let mut row_order = Vec::with_capacity(n);
    let mut cum = 0usize;
    for (l, &m) in mult.iter().enumerate() {
        cum += m;
        for i in (cum - m + 1)..=cum {
            row_block.push(l);
            row_order.push((cum - i) as u32);
        }
    }

    let mut log_const = 0.0;
    let mut sign = if (p * (n - nmin)) % 2 == 0 { 1.0 } else { -1.0 };
    log_const -= complex_multivariate_gamma(nmin, p).ln();
    for (l, (&x, &m)) in mu.iter().zip(mult).enumerate() {
        log_const += (m * p) as f64 * x.ln();
        log_const -= complex_multivariate_gamma(m, m).ln();
        for (&y, &my) in mu[l + 1..].iter().zip(&mult[l + 1..]) {
            let diff = x - y;
            log_const -= (m * my) as f64 * diff.abs().ln();
            if diff < 0.0 && (m * my) % 2 == 1 {
                sign = -sign;
            }
        }
    }

    // columns shared by every R^(k): plain moments and the polynomial tail
    let mut base = DMatrix::<f64>::zeros(n, n);
    let mut log_col = vec![vec![0.0; nmin]; n];
    for i in 0..n {
        let x = mu[row_block[i]];
        let a = row_order[i];
        let s = if a % 2 == 0 { 1.0 } else { -1.0 };
        for j in 1..=n {
            base[(i, j - 1)] = if j <= nmin {
                let pow = (p - nmin + j - 1) as u32 + a;
                s * power_kernel_integral(pow, x)
            } else {
                let top = (n - j) as u32;
                if a > top {
                    0.0
                } else {
                    falling_factorial(top, a) * x.powi((top - a) as i32)
                }
            };
        }
        for j in 1..=nmin {
            let pow = (p - nmin + j - 1) as u32 + a;
            log_col[i][j - 1] = s * log_kernel_integral(pow, x)?;
        }
    }

    let mut terms = Vec::with_capacity(nmin);
    for k in 0..nmin {
        let mut r = base.clone();
        for i in 0..n {
            r[(i, k)] = log_col[i][k];
        }
        terms.push(r.determinant());
    }
    let scale = sign * log_const.exp();
    let signed: f64 = terms.iter().sum::<f64>() * scale;
    let absolute: f64 = terms.iter().map(|t| t.abs()).sum::<f64>() * scale.abs();
    if !signed.is_finite() || !absolute.is_finite() {
        return Err(Error::Precision(format!(
            "closed form overflowed (n={n}, p={p}, mu={mu:?})"
        )));
    }
    if signed < 0.0 || absolute > MAX_CANCELLATION * signed.abs() {
        return Err(Error::Precision(format!(
            "catastrophic cancellation (n={n}, p={p}, mu={mu:?}): sum {signed:e}, magnitude {absolute:e}"
        )));
    }
    Ok(signed * LOG2_E)
}

/// Effective SNRs of the block-diagonal matrix used by [`theorem2_bound`] for one user.
///
/// The first `dprime_k` receive dimensions are interference-free and see
/// `rho_signal = P_k / (d_k sigma^2)`; the remaining `N_k - dprime_k` carry the
/// aligned interference, modelled as white with total power `sum_{i != k} P_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiSpec {
    pub d_k: usize,
    pub dprime_k: usize,
    pub n_k: usize,
    pub rho_signal: f64,
    pub rho_interf: f64,
}

impl PsiSpec {
    pub fn new(dims: &NetworkDims, powers: &PowerProfile, k: usize) -> Result<Self> {
        dims.validate()?;
        if k >= dims.k || powers.p.len() != dims.k {
            return Err(Error::Dimension(format!(
                "user {k} / {} powers for {} users",
                powers.p.len(),
                dims.k
            )));
        }
        let d = dims.d[k] as f64;
        let interference: f64 = (0..dims.k).filter(|&i| i != k).map(|i| powers.p[i]).sum();
        Ok(PsiSpec {
            d_k: dims.d[k],
            dprime_k: dims.dprime[k],
            n_k: dims.n[k],
            rho_signal: powers.p[k] / (d * powers.sigma2),
            rho_interf: powers.p[k] / (d * (powers.sigma2 + interference)),
        })
    }

    /// Eigen-profile of `Psi_k^{-1}`.
    pub fn profile(&self) -> Result<EigProfile> {
        let mut mu = vec![1.0 / self.rho_signal];
        let mut mult = vec![self.dprime_k];
        if self.n_k > self.dprime_k {
            mu.push(1.0 / self.rho_interf);
            mult.push(self.n_k - self.dprime_k);
        }
        EigProfile::new(mu, mult)
    }
}

/// Approximate lower bound (bits) on the ergodic optimum-receiver rate of user `k`
/// under alignment with white transmission.
pub fn theorem2_bound(dims: &NetworkDims, powers: &PowerProfile, k: usize) -> Result<f64> {
    let psi = PsiSpec::new(dims, powers, k)?;
    if psi.rho_signal == 0.0 {
        return Ok(0.0);
    }
    chiani_csu(psi.n_k, psi.d_k, &psi.profile()?)
}
