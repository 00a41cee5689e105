//! Small dense complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Dense complex matrix used throughout the crate.
pub type CMat = DMatrix<Complex64>;

/// Draws a `rows x cols` matrix of i.i.d. circularly-symmetric complex Gaussian
/// entries with unit variance (variance 1/2 per real component).
pub fn complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    // column-major fill order, so the draw sequence is fixed by the shape
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    })
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted ascending.
///
/// Only the lower triangle is trusted by the underlying solver; the input is
/// symmetrised first so round-off asymmetry does not leak into the result.
pub fn hermitian_eigh(a: &CMat) -> Result<(Vec<f64>, CMat)> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "eigendecomposition of a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    let sym = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = nalgebra::SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("Hermitian eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .total_cmp(&eig.eigenvalues[j])
            .then(i.cmp(&j))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Orthonormal basis of the `count` eigenvectors of a Hermitian matrix with the
/// smallest eigenvalues, together with the sum of those eigenvalues.
pub fn smallest_eigenspace(a: &CMat, count: usize) -> Result<(CMat, f64)> {
    let (values, vectors) = hermitian_eigh(a)?;
    if count > values.len() {
        return Err(Error::Dimension(format!(
            "requested {count} eigenvectors of a {}x{} matrix",
            values.len(),
            values.len()
        )));
    }
    let basis = vectors.columns(0, count).into_owned();
    Ok((basis, values[..count].iter().sum()))
}

/// Truncated-unitary factor of the thin QR decomposition of a full-column-rank matrix.
pub fn orthonormalize(a: &CMat) -> CMat {
    let q = a.clone().qr().q();
    q.columns(0, a.ncols()).into_owned()
}

/// `log det(A)` (natural log) of a Hermitian positive-definite matrix via Cholesky.
pub fn log_det_hpd(a: &CMat) -> Result<f64> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(Error::Dimension(format!("log-det of a {}x{} matrix", n, a.ncols())));
    }
    let mut l = CMat::zeros(n, n);
    let mut acc = 0.0;
    for j in 0..n {
        let mut pivot = a[(j, j)].re;
        for k in 0..j {
            pivot -= l[(j, k)].norm_sqr();
        }
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(Error::Numerical("matrix is not positive definite".into()));
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = Complex64::new(ljj, 0.0);
        acc += 2.0 * ljj.ln();
        for i in j + 1..n {
            let mut x = a[(i, j)];
            for k in 0..j {
                x -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = x / ljj;
        }
    }
    Ok(acc)
}

/// Squared Frobenius norm.
pub fn frob2(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Singular values of `a`, sorted descending.
pub fn singular_values(a: &CMat) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Identity matrix of size `n`.
pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Maximum deviation of `a^H a` from the identity.
pub fn unitarity_defect(a: &CMat) -> f64 {
    let g = a.adjoint() * a - eye(a.ncols());
    g.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `B B^H` for a tall-or-wide complex matrix, computed on the lower triangle and mirrored.
pub fn gram(b: &CMat) -> CMat {
    let (n, t) = b.shape();
    let src = b.as_slice();
    let mut out = CMat::zeros(n, n);
    {
        let dst = out.as_mut_slice();
        for col in 0..t {
            let bc = &src[col * n..(col + 1) * n];
            for c in 0..n {
                let conj = bc[c].conj();
                for r in c..n {
                    dst[r + c * n] += bc[r] * conj;
                }
            }
        }
        for c in 0..n {
            dst[c + c * n].im = 0.0;
            for r in c + 1..n {
                dst[c + r * n] = dst[r + c * n].conj();
            }
        }
    }
    out
}

/// Writes `scale * A B` into columns `[offset, offset + B.ncols())` of `out`.
pub fn mul_into_columns(out: &mut CMat, offset: usize, a: &CMat, b: &CMat, scale: f64) {
    let (rows, inner) = a.shape();
    debug_assert_eq!(inner, b.nrows());
    debug_assert_eq!(rows, out.nrows());
    let asl = a.as_slice();
    let bsl = b.as_slice();
    let osl = out.as_mut_slice();
    for c in 0..b.ncols() {
        let dst = &mut osl[(offset + c) * rows..(offset + c + 1) * rows];
        dst.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for l in 0..inner {
            let coef = bsl[l + c * inner] * scale;
            let acol = &asl[l * rows..(l + 1) * rows];
            for (z, &x) in dst.iter_mut().zip(acol) {
                *z += x * coef;
            }
        }
    }
}

/// Cyclic Jacobi eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
///
/// With `warm = Some(W)` (unitary) the iteration starts from `W^H A W`, which is
/// nearly diagonal when `W` holds the eigenvectors of a nearby matrix, so one
/// or two sweeps suffice.
/// `A^H B` computed column by column.
pub fn adjoint_mul(a: &CMat, b: &CMat) -> CMat {
    let (inner, rows) = a.shape();
    debug_assert_eq!(inner, b.nrows());
    let asl = a.as_slice();
    let bsl = b.as_slice();
    CMat::from_fn(rows, b.ncols(), |r, c| {
        let ac = &asl[r * inner..(r + 1) * inner];
        let bc = &bsl[c * inner..(c + 1) * inner];
        ac.iter().zip(bc).map(|(x, y)| x.conj() * y).sum()
    })
}

/// Cyclic Jacobi eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
///
/// With `warm = Some(W)` (unitary) the iteration starts from `W^H A W`, which is
/// nearly diagonal when `W` holds the eigenvectors of a nearby matrix, so one
/// or two sweeps suffice.
pub fn jacobi_eigh(a: &CMat, warm: Option<&CMat>) -> Result<(Vec<f64>, CMat)> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "eigendecomposition of a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    match warm {
        Some(w) if w.shape() == (n, n) => jacobi_from(adjoint_mul(w, &(a * w)), w.clone()),
        _ => jacobi_from(a.clone(), eye(n)),
    }
}

/// Eigen-decomposition of `B B^H` without forming it when a warm basis is given.
pub fn gram_eigh(b: &CMat, warm: Option<&CMat>) -> Result<(Vec<f64>, CMat)> {
    let n = b.nrows();
    match warm {
        Some(w) if w.shape() == (n, n) => jacobi_from(gram(&adjoint_mul(w, b)), w.clone()),
        _ => jacobi_from(gram(b), eye(n)),
    }
}

fn jacobi_from(mut m: CMat, mut w: CMat) -> Result<(Vec<f64>, CMat)> {
    let n = m.nrows();
    const MAX_SWEEPS: usize = 60;
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let sl = m.as_slice();
        let mut off = 0.0;
        let mut total = 0.0;
        for c in 0..n {
            for r in 0..n {
                let x = sl[r + c * n].norm_sqr();
                total += x;
                if r != c {
                    off += x;
                }
            }
        }
        if off <= 1e-24 * total || total == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                rotate(m.as_mut_slice(), w.as_mut_slice(), n, p, q, total);
            }
        }
    }
    if !converged {
        return Err(Error::Numerical("Jacobi eigensolver did not converge".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].re.total_cmp(&m[(j, j)].re).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[(i, i)].re).collect();
    let vectors = CMat::from_fn(n, n, |r, c| w[(r, order[c])]);
    Ok((values, vectors))
}

/// One Jacobi rotation annihilating entry `(p, q)` of the Hermitian matrix `m`
/// (column-major, `n x n`), accumulated into `w`.
fn rotate(m: &mut [Complex64], w: &mut [Complex64], n: usize, p: usize, q: usize, total: f64) {
    let apq = m[p + q * n];
    let r2 = apq.norm_sqr();
    if r2 <= 1e-36 * total {
        return;
    }
    let r = r2.sqrt();
    let e = apq / r;
    let app = m[p + p * n].re;
    let aqq = m[q + q * n].re;
    let theta = (aqq - app) / (2.0 * r);
    let t = if theta == 0.0 {
        1.0
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let ecs = e.conj() * s;
    let ecc = e.conj() * c;
    let es = e * s;
    let ec = e * c;
    // columns: M <- M G, with G_pp = c, G_pq = s, G_qp = -s conj(e), G_qq = c conj(e)
    let (lo, hi) = m.split_at_mut(q * n);
    let colp = &mut lo[p * n..(p + 1) * n];
    let colq = &mut hi[..n];
    for (xp, xq) in colp.iter_mut().zip(colq.iter_mut()) {
        let (a, b) = (*xp, *xq);
        *xp = a * c - b * ecs;
        *xq = a * s + b * ecc;
    }
    for k in 0..n {
        let a = m[p + k * n];
        let b = m[q + k * n];
        m[p + k * n] = a * c - b * es;
        m[q + k * n] = a * s + b * ec;
    }
    m[p + q * n] = Complex64::new(0.0, 0.0);
    m[q + p * n] = Complex64::new(0.0, 0.0);
    m[p + p * n].im = 0.0;
    m[q + q * n].im = 0.0;
    let (lo, hi) = w.split_at_mut(q * n);
    let colp = &mut lo[p * n..(p + 1) * n];
    let colq = &mut hi[..n];
    for (xp, xq) in colp.iter_mut().zip(colq.iter_mut()) {
        let (a, b) = (*xp, *xq);
        *xp = a * c - b * ecs;
        *xq = a * s + b * ecc;
    }
}
