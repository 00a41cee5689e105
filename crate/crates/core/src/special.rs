//! Exponential integrals, factorials and the integrals needed by the
//! closed-form ergodic-rate formulas.

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const EPS: f64 = 1e-16;
const MAX_TERMS: usize = 10_000;

/// `n!` as a float. Exact up to 22!, correctly rounded products beyond.
pub fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// `n! / (n - k)!`
pub fn falling_factorial(n: u32, k: u32) -> f64 {
    debug_assert!(k <= n);
    ((n - k + 1)..=n).fold(1.0, |acc, j| acc * j as f64)
}

/// Binomial coefficient as a float.
pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn check_args(p: u32, z: f64) -> Result<()> {
    if p == 0 {
        return Err(Error::Domain("exponential integral order must be >= 1".into()));
    }
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Domain(format!(
            "exponential integral argument must be positive and finite, got {z}"
        )));
    }
    Ok(())
}

/// Generalized exponential integral `E_p(z) = int_1^inf e^{-zx} x^{-p} dx`.
pub fn exp_integral(p: u32, z: f64) -> Result<f64> {
    check_args(p, z)?;
    if z > 1.0 {
        Ok(continued_fraction(p, z) * (-z).exp())
    } else {
        Ok(series(p, z))
    }
}

/// `e^z E_p(z)`, finite for all `z > 0` without overflow or underflow.
pub fn exp_integral_scaled(p: u32, z: f64) -> Result<f64> {
    check_args(p, z)?;
    if z > 1.0 {
        Ok(continued_fraction(p, z))
    } else {
        Ok(series(p, z) * z.exp())
    }
}

/// Modified Lentz evaluation of the continued fraction for `e^z E_p(z)`, valid for z > 1.
fn continued_fraction(p: u32, z: f64) -> f64 {
    let tiny = 1e-300;
    let nm1 = (p - 1) as f64;
    let mut b = z + p as f64;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_TERMS {
        let an = -(i as f64) * (nm1 + i as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Power series around zero, valid for 0 < z <= 1.
fn series(p: u32, z: f64) -> f64 {
    let nm1 = (p - 1) as i64;
    let mut ans = if nm1 != 0 {
        1.0 / nm1 as f64
    } else {
        -z.ln() - EULER_GAMMA
    };
    let mut fact = 1.0;
    for i in 1..MAX_TERMS as i64 {
        fact *= -z / i as f64;
        let del = if i != nm1 {
            -fact / (i - nm1) as f64
        } else {
            let psi = -EULER_GAMMA + (1..=nm1).map(|k| 1.0 / k as f64).sum::<f64>();
            fact * (-z.ln() + psi)
        };
        ans += del;
        if del.abs() < ans.abs() * EPS {
            break;
        }
    }
    ans
}

/// `int_0^inf x^a e^{-mu x} dx = a! / mu^(a+1)`.
pub fn power_kernel_integral(a: u32, mu: f64) -> f64 {
    factorial(a) / mu.powi(a as i32 + 1)
}

/// `int_0^inf x^a e^{-mu x} ln(1 + x) dx` by reduction to exponential integrals:
/// `a! mu^{-(a+1)} sum_{k=1}^{a+1} e^mu E_k(mu)`.
///
/// Falls back to adaptive quadrature if the reduction is not finite.
pub fn log_kernel_integral(a: u32, mu: f64) -> Result<f64> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::Domain(format!("log-kernel rate must be positive, got {mu}")));
    }
    let mut sum = 0.0;
    for k in 1..=a + 1 {
        sum += exp_integral_scaled(k, mu)?;
    }
    let value = power_kernel_integral(a, mu) * sum;
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        log_kernel_integral_quadrature(a, mu)
    }
}

/// Same integral as [`log_kernel_integral`], by adaptive Gauss-Kronrod quadrature.
pub fn log_kernel_integral_quadrature(a: u32, mu: f64) -> Result<f64> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::Domain(format!("log-kernel rate must be positive, got {mu}")));
    }
    // x = s / mu puts the exponential decay on a unit scale
    let af = a as f64;
    let scale = mu.powf(-(af + 1.0));
    let value = quad::integrate_semi_infinite(
        |s| {
            if s == 0.0 {
                0.0
            } else {
                (af * s.ln() - s).exp() * (s / mu).ln_1p()
            }
        },
        1e-13,
    );
    let value = value * scale;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numerical(format!(
            "log-kernel quadrature overflowed for a={a}, mu={mu}"
        )))
    }
}

/// Adaptive Gauss-Kronrod (7/15) quadrature.
pub mod quad {
    const XGK: [f64; 8] = [
        0.991_455_371_120_812_6,
        0.949_107_912_342_758_5,
        0.864_864_423_359_769_1,
        0.741_531_185_599_394_4,
        0.586_087_235_467_691_1,
        0.405_845_151_377_397_2,
        0.207_784_955_007_898_5,
        0.0,
    ];
    const WGK: [f64; 8] = [
        0.022_935_322_010_529_22,
        0.063_092_092_629_978_55,
        0.104_790_010_322_250_2,
        0.140_653_259_715_525_9,
        0.169_004_726_639_267_9,
        0.190_350_578_064_785_4,
        0.204_432_940_075_298_9,
        0.209_482_141_084_727_8,
    ];
    const WG: [f64; 4] = [
        0.129_484_966_168_869_7,
        0.279_705_391_489_276_7,
        0.381_830_050_505_118_9,
        0.417_959_183_673_469_4,
    ];

    fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let fc = f(c);
        let mut rk = fc * WGK[7];
        let mut rg = fc * WG[3];
        for j in 0..7 {
            let x = h * XGK[j];
            let s = f(c - x) + f(c + x);
            rk += WGK[j] * s;
            if j % 2 == 1 {
                rg += WG[j / 2] * s;
            }
        }
        (rk * h, ((rk - rg) * h).abs())
    }

    /// Integral of `f` over `[a, b]` to relative tolerance `rel_tol`.
    pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
        let (whole, err) = kronrod(&f, a, b);
        let mut stack = vec![(a, b, whole, err)];
        let mut total = 0.0;
        let mut total_err = 0.0;
        let mut done: Vec<(f64, f64)> = Vec::new();
        // split until every accepted panel meets its share of the tolerance
        while let Some((lo, hi, val, err)) = stack.pop() {
            let budget = rel_tol * whole.abs().max(f64::MIN_POSITIVE) * (hi - lo) / (b - a);
            if err <= budget.max(1e-300) || hi - lo < 1e-14 * (b - a) {
                done.push((val, err));
                continue;
            }
            let mid = 0.5 * (lo + hi);
            let (v1, e1) = kronrod(&f, lo, mid);
            let (v2, e2) = kronrod(&f, mid, hi);
            stack.push((lo, mid, v1, e1));
            stack.push((mid, hi, v2, e2));
        }
        done.sort_by(|x, y| x.0.abs().total_cmp(&y.0.abs()));
        for (v, e) in done {
            total += v;
            total_err += e;
        }
        let _ = total_err;
        total
    }

    /// Integral of `f` over `[0, inf)` via the map `x = t / (1 - t)`.
    pub fn integrate_semi_infinite<F: Fn(f64) -> f64>(f: F, rel_tol: f64) -> f64 {
        integrate(
            |t| {
                if t >= 1.0 {
                    return 0.0;
                }
                let x = t / (1.0 - t);
                let jac = 1.0 / ((1.0 - t) * (1.0 - t));
                let y = f(x) * jac;
                if y.is_finite() {
                    y
                } else {
                    0.0
                }
            },
            0.0,
            1.0,
            rel_tol,
        )
    }
}
