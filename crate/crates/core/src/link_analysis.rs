//! Closed-form performance chain: impairment powers, receiver SNR γ,
//! conditional SER and the Rayleigh-averaged SER over λ = N_T·N_R branches.

use crate::bfpa::AmplifierResponse;
use crate::clipping::{beta_of_eta, dk_analytic};
use crate::error::{domain, Error, Result};
use crate::imp_count::ImpProfile;
use crate::specfun::{beta_fn, hyp2f1_unit};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

pub const QAM_ORDERS: [usize; 4] = [4, 16, 64, 256];

/// Absolute tolerance of the conditional-SER quadrature.
pub const PW_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n_s: usize,
    pub n_t: usize,
    pub n_r: usize,
    pub m: usize,
    pub j: usize,
    pub sigma_ch_sq: f64,
    pub eta: f64,
    pub e_u: f64,
    /// Clipper input power; informational only.
    pub e_c: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_s: 64,
            n_t: 2,
            n_r: 2,
            m: 4,
            j: 4,
            sigma_ch_sq: 1e-3,
            eta: 3.0,
            e_u: 1.0,
            e_c: 0.0,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_s == 0 || self.n_s > crate::imp_count::MAX_SUBCARRIERS {
            return domain(format!("n_s must be in 1..=8192, got {}", self.n_s));
        }
        if self.n_t == 0 || self.n_r == 0 {
            return domain("n_t and n_r must be >= 1");
        }
        if !QAM_ORDERS.contains(&self.m) {
            return domain(format!("m must be one of {QAM_ORDERS:?}, got {}", self.m));
        }
        if self.j == 0 {
            return domain("j must be >= 1");
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.sigma_ch_sq) {
            return domain(format!("sigma_ch_sq must be positive, got {}", self.sigma_ch_sq));
        }
        if self.eta.is_nan() || self.eta <= 0.0 {
            return domain(format!("eta must be positive, got {}", self.eta));
        }
        if !positive(self.e_u) {
            return domain(format!("e_u must be positive, got {}", self.e_u));
        }
        if !(self.e_c.is_finite() && self.e_c >= 0.0) {
            return domain(format!("e_c must be non-negative, got {}", self.e_c));
        }
        Ok(())
    }

    pub fn lambda(&self) -> usize {
        self.n_t * self.n_r
    }

    pub fn with_eta(&self, eta: f64) -> Self {
        Self { eta, ..self.clone() }
    }

    pub fn with_e_u(&self, e_u: f64) -> Self {
        Self { e_u, ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrBreakdown {
    pub signal_power: f64,
    pub channel_noise: f64,
    pub clipping_noise: f64,
    pub nonlinear_noise: f64,
    pub gamma: f64,
}

impl SnrBreakdown {
    pub fn impairment_power(&self) -> f64 {
        self.channel_noise + self.clipping_noise + self.nonlinear_noise
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChannelStat {
    pub h_frob_sq: f64,
    pub lambda: usize,
}

impl ChannelStat {
    /// The expectation point ‖H‖² = λ.
    pub fn expected(config: &SystemConfig) -> Self {
        let lambda = config.lambda();
        Self { h_frob_sq: lambda as f64, lambda }
    }
}

/// Desired power and the three impairment powers at the receiver.
pub fn snr_breakdown<P: AmplifierResponse + ?Sized>(
    config: &SystemConfig,
    pa: &P,
    profile: &ImpProfile,
    h_frob_sq: f64,
) -> Result<SnrBreakdown> {
    config.validate()?;
    if profile.n_s != config.n_s {
        return Err(Error::Contract(format!(
            "IMP profile is for N_S = {} but the system has N_S = {}",
            profile.n_s, config.n_s
        )));
    }
    if !(h_frob_sq.is_finite() && h_frob_sq >= 0.0) {
        return domain(format!("h_frob_sq must be finite and >= 0, got {h_frob_sq}"));
    }
    let beta = beta_of_eta(config.eta)?;
    let d_k = dk_analytic(config.eta)?;
    let a1 = pa.linear_coeff();
    let a3 = pa.cubic_coeff();
    let e = config.e_u;
    let nt = config.n_t as f64;
    let ns = config.n_s as f64;
    let b2 = beta * beta;

    let signal_power = a1 * b2 * h_frob_sq * e;
    let channel_noise = config.sigma_ch_sq;
    let clipping_noise = a1 * d_k * e / (nt * ns);
    let nonlinear_noise = profile.phi as f64 * a3 * b2 * b2 * b2 * e * e * e / (nt.powi(3) * ns.powi(4));
    let gamma = signal_power / (channel_noise + clipping_noise + nonlinear_noise);
    Ok(SnrBreakdown { signal_power, channel_noise, clipping_noise, nonlinear_noise, gamma })
}

fn check_qam(m: usize) -> Result<()> {
    if !QAM_ORDERS.contains(&m) {
        return domain(format!("M must be one of {QAM_ORDERS:?}, got {m}"));
    }
    Ok(())
}

// (√M − 1)/√M
fn qam_q(m: usize) -> f64 {
    let r = (m as f64).sqrt();
    (r - 1.0) / r
}

fn g_qam(m: usize) -> f64 {
    3.0 / (2.0 * (m as f64 - 1.0))
}

/// Adaptive Simpson quadrature with an absolute tolerance.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || !(delta.abs() > 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Simpson quadrature to a tolerance relative to a coarse first estimate.
fn relative_quadrature(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel: f64) -> f64 {
    let n = 32;
    let h = (b - a) / n as f64;
    let mut coarse = f(a) + f(b);
    for i in 1..n {
        coarse += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    coarse *= h / 3.0;
    let tol = (rel * coarse.abs()).max(1e-300);
    adaptive_simpson(f, a, b, tol)
}

fn craig_kernel(c: f64, power: i32) -> impl Fn(f64) -> f64 {
    move |theta: f64| {
        if c == 0.0 {
            return 1.0;
        }
        let s2 = theta.sin().powi(2);
        (s2 / (s2 + c)).powi(power)
    }
}

/// Conditional SER P_w(γ) as the two Craig-form θ-integrals, the second
/// one over [0, π/4].
pub fn pw_conditional(gamma: f64, m: usize, n_r: usize) -> Result<f64> {
    check_qam(m)?;
    if !(gamma >= 0.0) {
        return domain(format!("gamma must be >= 0, got {gamma}"));
    }
    if n_r == 0 {
        return domain("N_R must be >= 1");
    }
    if gamma.is_infinite() {
        return Ok(0.0);
    }
    let q = qam_q(m);
    let kernel = craig_kernel(g_qam(m) * gamma, n_r as i32);
    let first = adaptive_simpson(&kernel, 0.0, FRAC_PI_2, PW_TOLERANCE);
    let second = adaptive_simpson(&kernel, 0.0, FRAC_PI_4, PW_TOLERANCE);
    let p = 4.0 * q / PI * first - 4.0 * q * q / PI * second;
    Ok(p.clamp(0.0, 1.0))
}

fn check_ser_args(gamma: f64, m: usize, lambda: usize, h_frob_sq: f64) -> Result<()> {
    check_qam(m)?;
    if !(gamma > 0.0) || gamma.is_nan() {
        return domain(format!("gamma must be > 0, got {gamma}"));
    }
    if lambda == 0 {
        return domain("lambda must be >= 1");
    }
    if !(h_frob_sq > 0.0 && h_frob_sq.is_finite()) {
        return domain(format!("h_frob_sq must be positive, got {h_frob_sq}"));
    }
    Ok(())
}

// z = 2(M−1)‖H‖²/(3γ)
fn z_arg(gamma: f64, m: usize, h_frob_sq: f64) -> f64 {
    2.0 * (m as f64 - 1.0) * h_frob_sq / (3.0 * gamma)
}

// Leading term without clamping; z^λ ₂F₁(λ, λ+½; λ+1; −z) is taken through
// its Pfaff form w^λ ₂F₁(λ, ½; λ+1; w), w = z/(1+z), which cannot overflow.
fn leading_term(gamma: f64, m: usize, lambda: usize, h_frob_sq: f64) -> Result<f64> {
    let z = z_arg(gamma, m, h_frob_sq);
    let l = lambda as f64;
    let w = if z.is_infinite() { 1.0 } else { z / (1.0 + z) };
    let prefactor = 2.0 * qam_q(m) / PI * beta_fn(l + 0.5, 0.5)?;
    if w >= 1.0 {
        // γ → 0: the integral form tends to π/2
        return Ok(2.0 * qam_q(m));
    }
    Ok(prefactor * w.powf(l) * hyp2f1_unit(l, 0.5, l + 1.0, w)?)
}

/// Rayleigh-averaged SER in its closed Beta/₂F₁ form, clamped to [0, 1].
pub fn ser_closed_form(gamma: f64, m: usize, lambda: usize, h_frob_sq: f64) -> Result<f64> {
    if gamma.is_infinite() && gamma > 0.0 {
        return Ok(0.0);
    }
    check_ser_args(gamma, m, lambda, h_frob_sq)?;
    Ok(leading_term(gamma, m, lambda, h_frob_sq)?.clamp(0.0, 1.0))
}

/// The squared-Q correction the closed form leaves out:
/// (4q²/π) ∫_0^{π/4} (sin²θ / (sin²θ + g_QAM ρ))^λ dθ with ρ = γ/‖H‖².
pub fn ser_cross_term(gamma: f64, m: usize, lambda: usize, h_frob_sq: f64) -> Result<f64> {
    check_ser_args(gamma, m, lambda, h_frob_sq)?;
    let q = qam_q(m);
    let c = 1.0 / z_arg(gamma, m, h_frob_sq);
    let kernel = craig_kernel(c, lambda as i32);
    Ok(4.0 * q * q / PI * relative_quadrature(&kernel, 0.0, FRAC_PI_4, 1e-12))
}

/// Exact Rayleigh-averaged M-QAM SER: closed form minus the cross term.
pub fn ser_exact(gamma: f64, m: usize, lambda: usize, h_frob_sq: f64) -> Result<f64> {
    if gamma.is_infinite() && gamma > 0.0 {
        return Ok(0.0);
    }
    check_ser_args(gamma, m, lambda, h_frob_sq)?;
    let p = leading_term(gamma, m, lambda, h_frob_sq)? - ser_cross_term(gamma, m, lambda, h_frob_sq)?;
    if !(-1e-6..=1.0 + 1e-6).contains(&p) {
        return Err(Error::Contract(format!("SER {p} left [0, 1] at gamma = {gamma}")));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Analytic SER at the expectation point ‖H‖² = λ.
pub fn ser_analytic<P: AmplifierResponse + ?Sized>(
    config: &SystemConfig,
    pa: &P,
    profile: &ImpProfile,
) -> Result<f64> {
    Ok(analytic_point(config, pa, profile)?.1)
}

/// Breakdown and SER at the expectation point.
pub fn analytic_point<P: AmplifierResponse + ?Sized>(
    config: &SystemConfig,
    pa: &P,
    profile: &ImpProfile,
) -> Result<(SnrBreakdown, f64)> {
    let stat = ChannelStat::expected(config);
    let b = snr_breakdown(config, pa, profile, stat.h_frob_sq)?;
    let ser = ser_exact(b.gamma, config.m, stat.lambda, stat.h_frob_sq)?;
    Ok((b, ser))
}
