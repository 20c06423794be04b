//! Envelope clipper mathematics: Bussgang gain β(η), its inverse, the
//! clipping-noise coefficient D_k and the per-sample clip rule.

use crate::error::{domain, Error, Result};
use crate::link_analysis::SystemConfig;
use crate::simulator::ofdm::OfdmModem;
use crate::simulator::{split_trials, stream_rng, DEFAULT_STREAMS};
use crate::specfun::{erfcx, gauss_tail, SQRT_PI};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::OnceLock;

pub const MIN_DK_TRIALS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClipParams {
    pub eta: f64,
    pub beta: f64,
    pub d_k: f64,
}

impl ClipParams {
    pub fn from_eta(eta: f64) -> Result<Self> {
        Ok(Self { eta, beta: beta_of_eta(eta)?, d_k: dk_analytic(eta)? })
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta.is_nan() || eta <= 0.0 {
        return domain(format!("clipping ratio must be > 0, got {eta}"));
    }
    Ok(())
}

/// β = η ∫_η^∞ e^{-t²}dt + 1 − e^{-η²}.
pub fn beta_of_eta(eta: f64) -> Result<f64> {
    check_eta(eta)?;
    if eta.is_infinite() {
        return Ok(1.0);
    }
    Ok(eta * gauss_tail(eta)? - (-eta * eta).exp_m1())
}

/// Inverse of [`beta_of_eta`] by bisection on [1e-9, 40].
pub fn eta_of_beta(beta: f64) -> Result<f64> {
    if !(beta > 1e-12 && beta < 1.0 - 1e-12) {
        return domain(format!("beta must lie in (1e-12, 1 - 1e-12), got {beta}"));
    }
    let (mut lo, mut hi) = (1e-9, 40.0);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if beta_of_eta(mid)? < beta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// D_k = (1 − e^{-η²}) − β².
///
/// Evaluated as (1−a)(a − 2t) − t² with a = e^{-η²}, t = η·gauss_tail(η),
/// and a − 2t taken from the scaled erfc, so the result keeps its relative
/// accuracy for large η instead of cancelling to zero.
pub fn dk_analytic(eta: f64) -> Result<f64> {
    check_eta(eta)?;
    if eta.is_infinite() {
        return Ok(0.0);
    }
    let e2 = eta * eta;
    let a = (-e2).exp();
    let one_minus_a = -(-e2).exp_m1();
    let scaled = 0.5 * SQRT_PI * eta * erfcx(eta);
    let t = scaled * a;
    let a_minus_2t = a * (1.0 - 2.0 * scaled);
    Ok((one_minus_a * a_minus_2t - t * t).max(0.0))
}

/// Smallest η at which β(η) rounds to exactly 1 in double precision.
/// Beyond it the clipper is inactive at working precision.
pub fn eta_inactive() -> f64 {
    static CELL: OnceLock<f64> = OnceLock::new();
    *CELL.get_or_init(|| {
        let (mut lo, mut hi) = (1.0, 40.0);
        while hi - lo > 1e-13 {
            let mid = 0.5 * (lo + hi);
            if beta_of_eta(mid).unwrap() < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    })
}

/// Limit |c| to `threshold`, keeping the phase.
pub fn clip_sample(c: Complex64, threshold: f64) -> Complex64 {
    let mag = c.norm();
    if mag <= threshold {
        c
    } else {
        c * (threshold / mag)
    }
}

/// The per-bin estimator exactly as printed: (1/J)·(clipped in-band power
/// coefficient) − β²/(1 − e^{-η²}). Inspection only.
pub fn dk_as_printed(in_band_power_coeff: f64, eta: f64, oversampling: usize) -> Result<f64> {
    let beta = beta_of_eta(eta)?;
    Ok(in_band_power_coeff / oversampling as f64 + beta * beta / (-eta * eta).exp_m1())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DkEstimate {
    /// Residual power of S − βC over the oversampled samples, divided by E_U.
    pub d_k: f64,
    pub ci95: f64,
    /// Mean in-band per-subcarrier residual power divided by E_U.
    pub in_band: f64,
    pub as_printed: f64,
    pub symbols: usize,
}

#[derive(Default)]
struct DkAccum {
    per_symbol: Vec<f64>,
    in_band: f64,
    clipped_in_band: f64,
}

/// Monte Carlo D_k from oversampled OFDM symbols of `config`.
pub fn dk_empirical(eta: f64, config: &SystemConfig, trials: usize, seed: u64) -> Result<DkEstimate> {
    check_eta(eta)?;
    config.validate()?;
    let beta = beta_of_eta(eta)?;
    let modem = OfdmModem::new(config.n_s, config.j, config.m)?;
    let chunks = split_trials(trials, DEFAULT_STREAMS);
    let parts: Vec<DkAccum> = chunks
        .par_iter()
        .enumerate()
        .map(|(stream, &count)| {
            let mut rng = stream_rng(seed, stream as u64);
            let mut work = modem.workspace();
            let mut acc = DkAccum::default();
            let mut residual = vec![Complex64::new(0.0, 0.0); modem.oversampled_len()];
            for _ in 0..count {
                modem.random_symbols(&mut rng, &mut work);
                modem.modulate(&mut work, 1.0);
                let mut power = 0.0;
                for (r, x) in residual.iter_mut().zip(work.time.iter_mut()) {
                    let clipped = clip_sample(*x, eta);
                    *r = clipped - beta * *x;
                    power += r.norm_sqr();
                    *x = clipped;
                }
                acc.per_symbol.push(power / residual.len() as f64);
                acc.clipped_in_band += modem.in_band_power(&mut work.time, &mut work.scratch);
                acc.in_band += modem.in_band_power(&mut residual, &mut work.scratch);
            }
            acc
        })
        .collect();
    let per_symbol: Vec<f64> = parts.iter().flat_map(|p| p.per_symbol.iter().copied()).collect();
    let n = per_symbol.len().max(1) as f64;
    let mean = per_symbol.iter().sum::<f64>() / n;
    let var = per_symbol.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let ci95 = 1.96 * (var / n).sqrt();
    let in_band = parts.iter().map(|p| p.in_band).sum::<f64>() / n;
    let clipped_in_band = parts.iter().map(|p| p.clipped_in_band).sum::<f64>() / n;
    let estimate = DkEstimate {
        d_k: mean,
        ci95,
        in_band,
        as_printed: dk_as_printed(clipped_in_band, eta, config.j)?,
        symbols: trials,
    };
    if trials < MIN_DK_TRIALS {
        return Err(Error::Precision {
            msg: format!("{trials} symbols is below the {MIN_DK_TRIALS}-symbol minimum"),
            estimate: estimate.d_k,
            ci95: estimate.ci95,
        });
    }
    Ok(estimate)
}
