//! Network geometry, Rayleigh channel draws and per-realization mutual information.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::rng;
use crate::solver::IaSolution;

/// Antenna counts and subspace dimensions of a K-user MIMO interference channel.
///
/// `m[j]` is the number of antennas at transmitter `j`, `n[i]` at receiver `i`.
/// User `i` sends `d[i]` streams and keeps a `dprime[i]`-dimensional
/// interference-free receive subspace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkDims {
    pub k: usize,
    pub m: Vec<usize>,
    pub n: Vec<usize>,
    pub d: Vec<usize>,
    pub dprime: Vec<usize>,
}

impl NetworkDims {
    pub fn new(m: Vec<usize>, n: Vec<usize>, d: Vec<usize>, dprime: Vec<usize>) -> Result<Self> {
        let dims = NetworkDims {
            k: m.len(),
            m,
            n,
            d,
            dprime,
        };
        dims.validate()?;
        Ok(dims)
    }

    /// All transmitters with `nt` antennas, all receivers with `nr`, the same `(d, d')` for every user.
    pub fn symmetric(k: usize, nt: usize, nr: usize, d: usize, dprime: usize) -> Result<Self> {
        Self::new(vec![nt; k], vec![nr; k], vec![d; k], vec![dprime; k])
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k;
        if k < 2 {
            return Err(Error::Dimension(format!("need at least 2 users, got {k}")));
        }
        for (name, v) in [
            ("m", &self.m),
            ("n", &self.n),
            ("d", &self.d),
            ("dprime", &self.dprime),
        ] {
            if v.len() != k {
                return Err(Error::Dimension(format!(
                    "{name} has {} entries for {k} users",
                    v.len()
                )));
            }
        }
        for i in 0..k {
            if self.d[i] < 1 || self.d[i] > self.m[i] {
                return Err(Error::Dimension(format!(
                    "user {i}: need 1 <= d ({}) <= M ({})",
                    self.d[i], self.m[i]
                )));
            }
            if self.dprime[i] < 1 || self.dprime[i] > self.n[i] {
                return Err(Error::Dimension(format!(
                    "user {i}: need 1 <= d' ({}) <= N ({})",
                    self.dprime[i], self.n[i]
                )));
            }
        }
        Ok(())
    }

    /// `Some((nt, nr, d, d'))` when every user has the same parameters.
    pub fn as_symmetric(&self) -> Option<(usize, usize, usize, usize)> {
        let all_eq = |v: &[usize]| v.iter().all(|&x| x == v[0]);
        (all_eq(&self.m) && all_eq(&self.n) && all_eq(&self.d) && all_eq(&self.dprime))
            .then(|| (self.m[0], self.n[0], self.d[0], self.dprime[0]))
    }
}

/// One realization of all K^2 channel matrices; `h[i][j]` maps transmitter `j` to receiver `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h: Vec<Vec<CMat>>,
    pub seed: u64,
    pub stream: u64,
}

impl ChannelSet {
    pub fn k(&self) -> usize {
        self.h.len()
    }

    pub fn get(&self, rx: usize, tx: usize) -> &CMat {
        &self.h[rx][tx]
    }

    pub fn check_dims(&self, dims: &NetworkDims) -> Result<()> {
        if self.h.len() != dims.k || self.h.iter().any(|row| row.len() != dims.k) {
            return Err(Error::Dimension(format!(
                "channel set is not {0}x{0}",
                dims.k
            )));
        }
        for i in 0..dims.k {
            for j in 0..dims.k {
                if self.h[i][j].shape() != (dims.n[i], dims.m[j]) {
                    return Err(Error::Dimension(format!(
                        "H[{i}][{j}] has shape {:?}, expected {:?}",
                        self.h[i][j].shape(),
                        (dims.n[i], dims.m[j])
                    )));
                }
            }
        }
        Ok(())
    }

    /// Multiplies every channel matrix by `factor`.
    pub fn scaled(&self, factor: f64) -> ChannelSet {
        let s = Complex64::new(factor, 0.0);
        ChannelSet {
            h: self
                .h
                .iter()
                .map(|row| row.iter().map(|m| m * s).collect())
                .collect(),
            seed: self.seed,
            stream: self.stream,
        }
    }
}

/// Transmit powers (linear) and receiver noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerProfile {
    pub p: Vec<f64>,
    pub sigma2: f64,
}

impl PowerProfile {
    pub fn new(p: Vec<f64>, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::Domain(format!("noise variance must be positive, got {sigma2}")));
        }
        if let Some(bad) = p.iter().find(|&&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::Domain(format!("transmit power must be nonnegative, got {bad}")));
        }
        Ok(PowerProfile { p, sigma2 })
    }

    /// Equal powers with unit noise variance at `snr_db = 10 log10(P/sigma^2)`.
    pub fn from_snr_db(k: usize, snr_db: f64) -> Self {
        PowerProfile {
            p: vec![10f64.powf(snr_db / 10.0); k],
            sigma2: 1.0,
        }
    }

    /// Per-stream SNR `P_k / (d_k sigma^2)`.
    pub fn rho(&self, user: usize, d: usize) -> f64 {
        self.p[user] / (d as f64 * self.sigma2)
    }

    fn check(&self, k: usize) -> Result<()> {
        if self.p.len() != k {
            return Err(Error::Dimension(format!(
                "{} powers for {k} users",
                self.p.len()
            )));
        }
        Ok(())
    }
}

/// Draws all channels from stream 0 of the generator keyed by `seed`.
pub fn draw_channels(dims: &NetworkDims, seed: u64) -> Result<ChannelSet> {
    draw_channels_stream(dims, seed, 0)
}

/// Draws all channels from stream `stream` of the generator keyed by `seed`.
pub fn draw_channels_stream(dims: &NetworkDims, seed: u64, stream: u64) -> Result<ChannelSet> {
    dims.validate()?;
    let mut rng = rng::substream(seed, stream);
    let mut set = draw_with(dims, &mut rng);
    set.seed = seed;
    set.stream = stream;
    Ok(set)
}

pub(crate) fn draw_with<R: Rng + ?Sized>(dims: &NetworkDims, rng: &mut R) -> ChannelSet {
    let h = (0..dims.k)
        .map(|i| {
            (0..dims.k)
                .map(|j| linalg::complex_gaussian(dims.n[i], dims.m[j], rng))
                .collect()
        })
        .collect();
    ChannelSet {
        h,
        seed: 0,
        stream: 0,
    }
}

const LOG2_E: f64 = std::f64::consts::LOG2_E;

/// `log det(I + A^H R^{-1} A)` in nats, with `R = sigma2 I + sum_b B B^H`.
///
/// `signal` and every entry of `interference` are receive-side factors
/// (`H V sqrt(P/d)` for white transmission inside `V`).
pub fn log_det_snr(signal: &CMat, interference: &[CMat], sigma2: f64) -> Result<f64> {
    let nr = signal.nrows();
    let mut r = linalg::eye(nr) * Complex64::new(sigma2, 0.0);
    for b in interference {
        if b.nrows() != nr {
            return Err(Error::Dimension("interference factor row mismatch".into()));
        }
        r += b * b.adjoint();
    }
    let chol = r
        .cholesky()
        .ok_or_else(|| Error::Numerical("interference-plus-noise covariance not positive definite".into()))?;
    let w = chol.l_dirty().solve_lower_triangular(signal).ok_or_else(|| {
        Error::Numerical("singular interference-plus-noise covariance".into())
    })?;
    let g = linalg::eye(w.ncols()) + w.adjoint() * &w;
    linalg::log_det_hpd(&g)
}

fn check_solution(channels: &ChannelSet, sol: &IaSolution, k: usize) -> Result<()> {
    if sol.v.len() != channels.k() || sol.u.len() != channels.k() {
        return Err(Error::Dimension("solution and channel user counts differ".into()));
    }
    if k >= channels.k() {
        return Err(Error::Dimension(format!("user {k} out of range")));
    }
    for i in 0..channels.k() {
        let h = channels.get(i, i);
        if sol.v[i].nrows() != h.ncols() || sol.u[i].nrows() != h.nrows() {
            return Err(Error::Dimension(format!(
                "precoder/combiner of user {i} do not match channel {:?}",
                h.shape()
            )));
        }
    }
    Ok(())
}

fn precoded_factor(channels: &ChannelSet, sol: &IaSolution, powers: &PowerProfile, rx: usize, tx: usize) -> CMat {
    let d = sol.v[tx].ncols() as f64;
    let scale = Complex64::new((powers.p[tx] / d).sqrt(), 0.0);
    channels.get(rx, tx) * &sol.v[tx] * scale
}

/// Mutual information of user `k` with the optimum receiver, interference
/// treated as colored Gaussian noise. Returned in bits.
pub fn mi_optimum(channels: &ChannelSet, sol: &IaSolution, powers: &PowerProfile, k: usize) -> Result<f64> {
    check_solution(channels, sol, k)?;
    powers.check(channels.k())?;
    let signal = precoded_factor(channels, sol, powers, k, k);
    let interference: Vec<CMat> = (0..channels.k())
        .filter(|&i| i != k)
        .map(|i| precoded_factor(channels, sol, powers, k, i))
        .collect();
    Ok(log_det_snr(&signal, &interference, powers.sigma2)?.max(0.0) * LOG2_E)
}

/// Mutual information of user `k` with the projection receiver
/// `log det(I + rho_k Hbar Hbar^H)`, `Hbar = U_k^H H_kk V_k`. Returned in bits.
pub fn mi_projection(channels: &ChannelSet, sol: &IaSolution, powers: &PowerProfile, k: usize) -> Result<f64> {
    check_solution(channels, sol, k)?;
    powers.check(channels.k())?;
    let hbar = sol.u[k].adjoint() * channels.get(k, k) * &sol.v[k];
    let rho = powers.rho(k, sol.v[k].ncols());
    let g = linalg::eye(hbar.ncols()) + hbar.adjoint() * &hbar * Complex64::new(rho, 0.0);
    Ok(linalg::log_det_hpd(&g)?.max(0.0) * LOG2_E)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::IaSolution;

    fn random_solution(dims: &NetworkDims, seed: u64) -> IaSolution {
        let mut rng = rng::substream(seed, 99);
        IaSolution::random(dims, &mut rng)
    }

    /// Determinant ratio built from raw covariances, no whitening.
    fn mi_det_ratio(ch: &ChannelSet, sol: &IaSolution, p: &PowerProfile, k: usize) -> f64 {
        let nr = ch.get(k, k).nrows();
        let cov = |i: usize| {
            let q = Complex64::new(p.p[i] / sol.v[i].ncols() as f64, 0.0);
            ch.get(k, i) * &sol.v[i] * sol.v[i].adjoint() * ch.get(k, i).adjoint() * q
        };
        let mut noise = linalg::eye(nr) * Complex64::new(p.sigma2, 0.0);
        for i in (0..ch.k()).filter(|&i| i != k) {
            noise += cov(i);
        }
        let total = &noise + cov(k);
        (linalg::log_det_hpd(&total).unwrap() - linalg::log_det_hpd(&noise).unwrap()) * LOG2_E
    }

    #[test]
    fn draws_are_deterministic() {
        let dims = NetworkDims::symmetric(2, 1, 1, 1, 1).unwrap();
        assert_eq!(draw_channels(&dims, 7).unwrap(), draw_channels(&dims, 7).unwrap());
        assert_ne!(draw_channels(&dims, 7).unwrap(), draw_channels(&dims, 8).unwrap());
    }

    #[test]
    fn preset_geometry_shapes() {
        let dims = NetworkDims::symmetric(7, 7, 5, 1, 2).unwrap();
        let ch = draw_channels(&dims, 1).unwrap();
        let count = ch.h.iter().flatten().filter(|m| m.shape() == (5, 7)).count();
        assert_eq!(count, 49);
        ch.check_dims(&dims).unwrap();
    }

    #[test]
    fn unit_variance_entries() {
        let dims = NetworkDims::symmetric(2, 1, 1, 1, 1).unwrap();
        let mut rng = rng::substream(11, 0);
        let draws = 100_000;
        let mut acc = 0.0;
        let mut acc_re = 0.0;
        for _ in 0..draws {
            let z = linalg::complex_gaussian(1, 1, &mut rng)[(0, 0)];
            acc += z.norm_sqr();
            acc_re += z.re * z.re;
        }
        let _ = dims;
        assert!((acc / draws as f64 - 1.0).abs() < 0.02);
        assert!((acc_re / draws as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn invalid_dims_rejected() {
        assert!(NetworkDims::symmetric(1, 2, 2, 1, 1).is_err());
        assert!(NetworkDims::symmetric(3, 2, 2, 3, 1).is_err());
        assert!(NetworkDims::symmetric(3, 2, 2, 1, 0).is_err());
        assert!(NetworkDims::new(vec![2, 2], vec![2], vec![1, 1], vec![1, 1]).is_err());
    }

    #[test]
    fn zero_power_gives_zero_rate() {
        let dims = NetworkDims::symmetric(3, 2, 2, 1, 1).unwrap();
        let ch = draw_channels(&dims, 2).unwrap();
        let sol = random_solution(&dims, 2);
        let p = PowerProfile::new(vec![0.0; 3], 1.0).unwrap();
        for k in 0..3 {
            assert_eq!(mi_optimum(&ch, &sol, &p, k).unwrap(), 0.0);
            assert_eq!(mi_projection(&ch, &sol, &p, k).unwrap(), 0.0);
        }
    }

    #[test]
    fn interference_free_reduces_to_single_user() {
        let dims = NetworkDims::symmetric(2, 3, 3, 3, 3).unwrap();
        let ch = draw_channels(&dims, 5).unwrap();
        let sol = random_solution(&dims, 5);
        let p = PowerProfile::new(vec![4.0, 0.0], 0.5).unwrap();
        let rho = Complex64::new(4.0 / (3.0 * 0.5), 0.0);
        let hv = ch.get(0, 0) * &sol.v[0];
        let g = linalg::eye(3) + &hv * hv.adjoint() * rho;
        let expect = linalg::log_det_hpd(&g).unwrap() * LOG2_E;
        assert!((mi_optimum(&ch, &sol, &p, 0).unwrap() - expect).abs() < 1e-10);
    }

    #[test]
    fn optimum_matches_determinant_ratio() {
        let dims = NetworkDims::symmetric(3, 2, 2, 1, 1).unwrap();
        for seed in 0..20 {
            let ch = draw_channels(&dims, seed).unwrap();
            let sol = random_solution(&dims, seed);
            let p = PowerProfile::new(vec![1.0, 3.0, 0.5], 0.2).unwrap();
            for k in 0..3 {
                let a = mi_optimum(&ch, &sol, &p, k).unwrap();
                let b = mi_det_ratio(&ch, &sol, &p, k);
                assert!((a - b).abs() < 1e-9, "seed {seed} user {k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn projection_scalar_reduction() {
        let dims = NetworkDims::symmetric(2, 3, 4, 1, 1).unwrap();
        let ch = draw_channels(&dims, 9).unwrap();
        let sol = random_solution(&dims, 9);
        let p = PowerProfile::new(vec![10.0, 10.0], 1.0).unwrap();
        let g = (sol.u[0].adjoint() * ch.get(0, 0) * &sol.v[0])[(0, 0)];
        let expect = (1.0 + 10.0 * g.norm_sqr()).log2();
        assert!((mi_projection(&ch, &sol, &p, 0).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn optimum_invariant_under_receive_rotation() {
        let dims = NetworkDims::symmetric(3, 3, 3, 1, 2).unwrap();
        let ch = draw_channels(&dims, 21).unwrap();
        let sol = random_solution(&dims, 21);
        let p = PowerProfile::from_snr_db(3, 10.0);
        let mut rng = rng::substream(21, 5);
        let q = linalg::orthonormalize(&linalg::complex_gaussian(3, 3, &mut rng));
        let mut rotated = ch.clone();
        for j in 0..3 {
            rotated.h[0][j] = &q * ch.get(0, j);
        }
        let a = mi_optimum(&ch, &sol, &p, 0).unwrap();
        let b = mi_optimum(&rotated, &sol, &p, 0).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn projection_invariant_under_precoder_rotation() {
        let dims = NetworkDims::symmetric(2, 4, 4, 2, 3).unwrap();
        let ch = draw_channels(&dims, 31).unwrap();
        let sol = random_solution(&dims, 31);
        let p = PowerProfile::from_snr_db(2, 5.0);
        let mut rng = rng::substream(31, 5);
        let q = linalg::orthonormalize(&linalg::complex_gaussian(2, 2, &mut rng));
        let mut rot = sol.clone();
        rot.v[0] = &sol.v[0] * q;
        let a = mi_projection(&ch, &sol, &p, 0).unwrap();
        let b = mi_projection(&ch, &rot, &p, 0).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let dims = NetworkDims::symmetric(2, 2, 2, 1, 1).unwrap();
        let other = NetworkDims::symmetric(2, 3, 2, 1, 1).unwrap();
        let ch = draw_channels(&dims, 1).unwrap();
        let sol = random_solution(&other, 1);
        let p = PowerProfile::from_snr_db(2, 0.0);
        assert!(matches!(mi_optimum(&ch, &sol, &p, 0), Err(Error::Dimension(_))));
        assert!(matches!(mi_projection(&ch, &sol, &p, 0), Err(Error::Dimension(_))));
    }
}
