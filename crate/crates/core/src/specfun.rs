//! Real special functions used by the analytic chain.
//!
//! Gaussian tail, gamma, beta, Bessel J_n and the Gauss hypergeometric
//! function. Only the real, positive-parameter regimes that the SER formulas
//! need are supported.

use crate::error::{domain, Error, Result};
use std::f64::consts::PI;

pub const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Series are cut when the next term is this small relative to the sum.
const SERIES_TOL: f64 = 1e-16;
const MAX_TERMS: usize = 10_000;

/// Ascending series below this |x|, recurrence or asymptotics above.
pub const BESSEL_SWITCH: f64 = 12.0;

/// Beyond this argument erfc underflows to zero.
const ERFC_UNDERFLOW: f64 = 27.3;

/// `∫_η^∞ e^{-t²} dt = (√π/2) erfc(η)`.
pub fn gauss_tail(eta: f64) -> Result<f64> {
    if !eta.is_finite() || eta < 0.0 {
        return domain(format!("gauss_tail needs a finite argument >= 0, got {eta}"));
    }
    Ok(0.5 * SQRT_PI * erfc(eta))
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 2.0 {
        1.0 - erf_series(x)
    } else if x > ERFC_UNDERFLOW {
        0.0
    } else {
        (-x * x).exp() * erfcx_fraction(x)
    }
}

/// Scaled complementary error function `e^{x²} erfc(x)` for `x >= 0`.
pub fn erfcx(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 2.0 {
        (x * x).exp() * (1.0 - erf_series(x))
    } else {
        erfcx_fraction(x)
    }
}

// erf(x) = 2/√π e^{-x²} Σ x (2x²)^n / (2n+1)!!, all terms positive.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= 2.0 * x2 / (2.0 * n + 1.0);
        sum += term;
        if term <= 1e-17 * sum {
            break;
        }
    }
    2.0 / SQRT_PI * (-x2).exp() * sum
}

// Laplace continued fraction, modified Lentz.
fn erfcx_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..MAX_TERMS {
        let a = 0.5 * k as f64;
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
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / (SQRT_PI * f)
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_series(zm1: f64) -> f64 {
    let mut a = LANCZOS[0];
    for (i, &coef) in LANCZOS.iter().enumerate().skip(1) {
        a += coef / (zm1 + i as f64);
    }
    a
}

/// Γ(z) for z > 0.
pub fn gamma_fn(z: f64) -> Result<f64> {
    if !z.is_finite() || z <= 0.0 {
        return domain(format!("gamma_fn needs a finite z > 0, got {z}"));
    }
    Ok(gamma_positive(z))
}

fn gamma_positive(z: f64) -> f64 {
    if z < 0.5 {
        return PI / ((PI * z).sin() * gamma_positive(1.0 - z));
    }
    if z > 171.7 {
        return f64::INFINITY;
    }
    let zm1 = z - 1.0;
    let t = zm1 + LANCZOS_G + 0.5;
    // split the power so t^(z-1/2) does not overflow before e^{-t} is applied
    let half = t.powf(0.5 * (zm1 + 0.5));
    (2.0 * PI).sqrt() * half * ((-t).exp() * half) * lanczos_series(zm1)
}

/// ln Γ(z) for z > 0.
pub fn ln_gamma(z: f64) -> Result<f64> {
    if !z.is_finite() || z <= 0.0 {
        return domain(format!("ln_gamma needs a finite z > 0, got {z}"));
    }
    Ok(ln_gamma_positive(z))
}

fn ln_gamma_positive(z: f64) -> f64 {
    if z < 0.5 {
        return (PI / (PI * z).sin()).ln() - ln_gamma_positive(1.0 - z);
    }
    let zm1 = z - 1.0;
    let t = zm1 + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (zm1 + 0.5) * t.ln() - t + lanczos_series(zm1).ln()
}

// 1/Γ(x) on the whole real line, zero at the poles.
fn recip_gamma(x: f64) -> f64 {
    if x > 0.0 {
        return 1.0 / gamma_positive(x);
    }
    if x == x.floor() {
        return 0.0;
    }
    // Γ(x) = Γ(x+n) / (x (x+1) ... (x+n-1))
    let n = (-x).floor() as usize + 1;
    let mut prod = 1.0;
    for k in 0..n {
        prod *= x + k as f64;
    }
    prod / gamma_positive(x + n as f64)
}

/// B(x, y) = Γ(x)Γ(y)/Γ(x+y).
pub fn beta_fn(x: f64, y: f64) -> Result<f64> {
    if !x.is_finite() || !y.is_finite() || x <= 0.0 || y <= 0.0 {
        return domain(format!("beta_fn needs finite positive arguments, got ({x}, {y})"));
    }
    if x + y < 170.0 {
        Ok(gamma_positive(x) * gamma_positive(y) / gamma_positive(x + y))
    } else {
        Ok((ln_gamma_positive(x) + ln_gamma_positive(y) - ln_gamma_positive(x + y)).exp())
    }
}

/// Bessel function of the first kind J_n(x).
pub fn bessel_j(n: u32, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return domain(format!("bessel_j needs a finite argument, got {x}"));
    }
    Ok(bessel_j_unchecked(n, x))
}

pub(crate) fn bessel_j_unchecked(n: u32, x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax <= BESSEL_SWITCH {
        bessel_j_series(n, ax)
    } else if ax > 50.0 && (n as f64) * (n as f64) <= ax {
        bessel_j_hankel(n, ax)
    } else {
        bessel_j_recurrence(n, ax)
    };
    if x < 0.0 && n % 2 == 1 {
        -v
    } else {
        v
    }
}

/// Ascending power series, accurate for moderate |x|.
pub fn bessel_j_series(n: u32, x: f64) -> f64 {
    let h = 0.5 * x;
    let mut term = 1.0;
    for k in 1..=n {
        term *= h / k as f64;
    }
    if term == 0.0 {
        return 0.0;
    }
    let mut sum = term;
    let h2 = h * h;
    for k in 1..MAX_TERMS {
        term *= -h2 / (k as f64 * (k as u64 + n as u64) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs() || term == 0.0 {
            break;
        }
    }
    sum
}

/// Miller backward recurrence normalized by J₀ + 2ΣJ_{2k} = 1.
pub fn bessel_j_recurrence(n: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let top = (n as f64).max(x.ceil());
    let mut m = (top + 20.0 + (40.0 * top).sqrt()) as usize;
    m += m % 2;
    let mut next = 0.0;
    let mut cur = 1.0;
    let mut sum = 0.0;
    let mut ans = 0.0;
    for k in (1..=m).rev() {
        if k == n as usize {
            ans = cur;
        }
        if k % 2 == 0 {
            sum += 2.0 * cur;
        }
        let prev = 2.0 * k as f64 / x * cur - next;
        next = cur;
        cur = prev;
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            sum *= 1e-250;
            ans *= 1e-250;
        }
    }
    if n == 0 {
        ans = cur;
    }
    sum += cur;
    ans / sum
}

// Hankel asymptotic expansion for x large compared with n².
fn bessel_j_hankel(n: u32, x: f64) -> f64 {
    let mu = 4.0 * (n as f64) * (n as f64);
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term: f64 = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        let next = term * (mu - odd * odd) / (8.0 * k as f64 * x);
        if next.abs() >= last || next == 0.0 {
            break;
        }
        term = next;
        last = term.abs();
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    let chi = x - (0.5 * n as f64 + 0.25) * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Gauss hypergeometric function ₂F₁(a, b; c; d) for d <= 0.
pub fn hyp2f1(a: f64, b: f64, c: f64, d: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite() && c.is_finite() && d.is_finite()) {
        return domain("hyp2f1 needs finite arguments");
    }
    if c <= 0.0 {
        return domain(format!("hyp2f1 needs c > 0, got {c}"));
    }
    if d > 0.0 {
        return domain(format!("hyp2f1 is supported for d <= 0, got {d}"));
    }
    if d == 0.0 {
        return Ok(1.0);
    }
    if d >= -0.5 {
        return hyp2f1_series(a, b, c, d);
    }
    // Pfaff: ₂F₁(a,b;c;d) = (1-d)^{-a} ₂F₁(a, c-b; c; d/(d-1))
    let w = d / (d - 1.0);
    Ok((1.0 - d).powf(-a) * hyp2f1_unit(a, c - b, c, w)?)
}

/// ₂F₁(a, b; c; w) for w in [0, 1).
///
/// Uses the defining series up to w = 0.9 and the connection formula
/// around w = 1 beyond it when c - a - b is not an integer.
pub fn hyp2f1_unit(a: f64, b: f64, c: f64, w: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&w) {
        return domain(format!("hyp2f1_unit needs w in [0, 1), got {w}"));
    }
    if w <= 0.9 {
        return hyp2f1_series(a, b, c, w);
    }
    let s = c - a - b;
    if (s - s.round()).abs() < 1e-9 {
        return hyp2f1_series(a, b, c, w);
    }
    let v = 1.0 - w;
    let gc = gamma_positive(c);
    let first = gc / recip_gamma(s) * recip_gamma(c - a) * recip_gamma(c - b)
        * hyp2f1_series(a, b, 1.0 - s, v)?;
    let second = v.powf(s) * gc / recip_gamma(-s) * recip_gamma(a) * recip_gamma(b)
        * hyp2f1_series(c - a, c - b, 1.0 + s, v)?;
    Ok(first + second)
}

/// The defining series, truncated per `SERIES_TOL` with a hard term cap.
pub fn hyp2f1_series(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..MAX_TERMS {
        let k = k as f64;
        term *= (a + k) * (b + k) / ((c + k) * (k + 1.0)) * z;
        sum += term;
        if term == 0.0 || term.abs() <= SERIES_TOL * sum.abs() {
            return Ok(sum);
        }
    }
    Err(Error::Accuracy(format!(
        "2F1({a}, {b}; {c}; {z}) series did not converge in {MAX_TERMS} terms"
    )))
}
