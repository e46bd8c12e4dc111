//! Numeric kernels: standard normal CDF and quantile, and a real-root cubic
//! solver with residual-checked polishing.

use crate::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const FRAC_1_SQRT_PI: f64 = 0.5641895835477563;

/// erf(x) by its alternating Maclaurin series; used for |x| <= 1.5 where the
/// largest term stays close to the result and no precision is lost.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = 0.0;
    let mut k = 0u32;
    loop {
        let add = term / (2 * k + 1) as f64;
        sum += add;
        if add.abs() < 1e-18 * sum.abs() + 1e-300 || k > 200 {
            break;
        }
        k += 1;
        term *= -x2 / k as f64;
    }
    2.0 * FRAC_1_SQRT_PI * sum
}

/// erfc(x) for x > 1.5 by the classical continued fraction
/// sqrt(pi) e^{x^2} erfc(x) = 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))),
/// evaluated with the modified Lentz algorithm.
fn erfc_continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x.max(TINY);
    let mut c = f;
    let mut d = 0.0;
    for n in 1..400 {
        let a = n as f64 / 2.0;
        d = x + a * d;
        if d == 0.0 {
            d = TINY;
        }
        c = x + a / c;
        if c == 0.0 {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-17 {
            break;
        }
    }
    (-x * x).exp() * FRAC_1_SQRT_PI / f
}

/// Complementary error function, accurate to a few ulp over the whole line.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        2.0 - erfc(-x)
    } else if x <= 1.5 {
        1.0 - erf_series(x)
    } else {
        erfc_continued_fraction(x)
    }
}

/// Standard normal CDF. Relative accuracy holds deep into the lower tail
/// because the tail is computed from erfc directly.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

// Rational approximation minimax coefficients (Acklam) for the initial
// quantile guess; one Halley refinement against normal_cdf then brings the
// result to full double precision.
#[allow(clippy::excessive_precision)]
const ACKLAM_A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const ACKLAM_B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const ACKLAM_C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const ACKLAM_D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];

fn acklam_guess(p: f64) -> f64 {
    const P_LOW: f64 = 0.02425;
    let (a, b, c, d) = (ACKLAM_A, ACKLAM_B, ACKLAM_C, ACKLAM_D);
    let tail = |q: f64| {
        (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    }
}

/// Standard normal quantile: the x with normal_cdf(x) = p, |error| <= 1e-9
/// (observed error is at the rounding level, a few 1e-16).
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidRate {
            name: "probability",
            range: "(0, 1)",
            value: p,
        });
    }
    let x = acklam_guess(p);
    // Halley step on Phi(x) - p = 0.
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    Ok(x - u / (1.0 + x * u / 2.0))
}

/// Real roots of a polynomial up to degree 3, each with its residual.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicRealRoots {
    /// Distinct real roots, ascending.
    pub roots: Vec<f64>,
    /// |p(root)| for each returned root, same order.
    pub residuals: Vec<f64>,
}

/// Solves a3 x^3 + a2 x^2 + a1 x + a0 = 0 for its distinct real roots.
/// Degenerate leading coefficients fall through to the quadratic and linear
/// cases; the all-zero polynomial is rejected. Each root is polished with one
/// Newton step and reported with its residual.
pub fn solve_cubic_real_roots(a3: f64, a2: f64, a1: f64, a0: f64) -> Result<CubicRealRoots> {
    if a3 == 0.0 && a2 == 0.0 && a1 == 0.0 && a0 == 0.0 {
        return Err(Error::ZeroPolynomial);
    }
    let mut roots = if a3 == 0.0 {
        if a2 == 0.0 {
            if a1 == 0.0 {
                Vec::new() // nonzero constant: no roots
            } else {
                vec![-a0 / a1]
            }
        } else {
            solve_quadratic(a2, a1, a0)
        }
    } else {
        solve_monic_cubic(a2 / a3, a1 / a3, a0 / a3)
    };

    let eval = |x: f64| ((a3 * x + a2) * x + a1) * x + a0;
    let deriv = |x: f64| (3.0 * a3 * x + 2.0 * a2) * x + a1;
    for r in roots.iter_mut() {
        // One Newton polish; keep the original unless the step is small and
        // reduces the residual. Near a repeated root f and f' both sink to
        // rounding noise, so an unbounded noise quotient can jump to a
        // different root, which dedup would then collapse into one.
        let d = deriv(*r);
        if d != 0.0 {
            let next = *r - eval(*r) / d;
            if next.is_finite()
                && (next - *r).abs() <= 1e-6 * (1.0 + r.abs())
                && eval(next).abs() <= eval(*r).abs()
            {
                *r = next;
            }
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-7 * (1.0 + a.abs().max(b.abs())));
    let residuals = roots.iter().map(|&r| eval(r).abs()).collect();
    Ok(CubicRealRoots { roots, residuals })
}

fn solve_quadratic(a: f64, b: f64, c: f64) -> Vec<f64> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    if disc == 0.0 {
        return vec![-b / (2.0 * a)];
    }
    // Subtraction-free form: compute the larger-magnitude root first.
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        // b = 0 and c <= 0
        let r = (-c / a).sqrt();
        return vec![-r, r];
    }
    vec![q / a, c / q]
}

/// Real roots of x^3 + p2 x^2 + p1 x + p0 via the depressed cubic: the
/// trigonometric form when three distinct real roots exist, Cardano for a
/// single real root, and the closed repeated-root form when the discriminant
/// is zero to within the rounding error inherited from the depression step.
fn solve_monic_cubic(p2: f64, p1: f64, p0: f64) -> Vec<f64> {
    let shift = p2 / 3.0;
    let p = p1 - p2 * p2 / 3.0;
    let q = 2.0 * p2 * p2 * p2 / 27.0 - p2 * p1 / 3.0 + p0;
    let t1 = (q / 2.0) * (q / 2.0);
    let t2 = (p / 3.0) * (p / 3.0) * (p / 3.0);
    let disc = t1 + t2;
    // p and q carry absolute rounding error from the cancellations above, so
    // the repeated-root boundary needs an error bound, not an exact zero test.
    let eps = f64::EPSILON;
    let err_p = eps * (p1.abs() + p2 * p2 / 3.0);
    let err_q = eps * (2.0 * p2.abs().powi(3) / 27.0 + (p2 * p1).abs() / 3.0 + p0.abs());
    let err_disc =
        4.0 * (q.abs() * err_q / 2.0 + (p / 3.0) * (p / 3.0) * err_p + eps * (t1 + t2.abs()));
    let mut roots = Vec::with_capacity(3);
    if p == 0.0 && q == 0.0 {
        roots.push(0.0);
    } else if disc.abs() <= err_disc {
        // Repeated roots: depressed cubic factors as (t - a)^2 (t + 2a) with
        // q = 2 a^3, a the double root.
        let a = (q / 2.0).cbrt();
        roots.push(-2.0 * a);
        roots.push(a);
    } else if disc > 0.0 {
        // One real root. Take the cube-root argument that avoids subtracting
        // nearly equal values and recover the other from s * t = -(p/3)^3.
        let big = -q / 2.0 - q.signum() * disc.sqrt();
        let small = if big == 0.0 { 0.0 } else { -t2 / big };
        roots.push(big.cbrt() + small.cbrt());
    } else {
        // Three distinct real roots; clamp against argument drift just past 1.
        let m = 2.0 * (-p / 3.0).sqrt();
        let theta = (3.0 * q / (p * m)).clamp(-1.0, 1.0).acos() / 3.0;
        for k in 0..3 {
            roots.push(m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos());
        }
    }
    roots.iter().map(|t| t - shift).collect()
}
